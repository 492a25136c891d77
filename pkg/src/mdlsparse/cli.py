"""Command-line surface: learn, compress, denoise, segment, lowrank.

Every subcommand emits a versioned JSON report embedding its fully
resolved configuration.  Exit codes: 0 success, 2 usage/input error,
3 numerical failure.  All core algorithms are deterministic; the
MDLSPARSE_THREADS environment variable (or --threads) caps the BLAS
thread pools.
"""

import argparse
import json
import math
import os
import sys
import time

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

REPORT_SCHEMA = 1


def _cap_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


if "MDLSPARSE_THREADS" in os.environ:
    _cap_threads(os.environ["MDLSPARSE_THREADS"])


def _write_report(path, command, config, payload):
    report = {"schema": REPORT_SCHEMA, "command": command,
              "config": config, **payload}
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, default=float)
    return report


def _resolved_config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return cfg


def _load_model(path):
    """Dictionary file plus its plug-in state sidecar, when present."""
    from .dictionary_learning import Dictionary
    from .sparse_coding import PlugInState
    dic = Dictionary.load(path)
    state = None
    sidecar = path + ".state.json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            state = PlugInState.from_dict(json.load(fh))
    return dic, state


def _save_model(path, dictionary, state):
    dictionary.save(path)
    if state is not None:
        with open(path + ".state.json", "w") as fh:
            json.dump(state.to_dict(), fh)


def tile_patches(image, w):
    """Raw non-overlapping w-by-w tiles (raster order), cropping remainders."""
    import numpy as np
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    Hc, Wc = (H // w) * w, (W // w) * w
    if Hc == 0 or Wc == 0:
        raise ValueError(f"image {H}x{W} smaller than one {w}x{w} tile")
    tiles = (img[:Hc, :Wc]
             .reshape(Hc // w, w, Wc // w, w)
             .transpose(0, 2, 1, 3)
             .reshape(-1, w * w).T.copy())
    return tiles, Hc * Wc


def _support_size_field_note(p):
    """The enumerative code's size field under both accountings."""
    return {
        "bits_per_sample_kraft": math.log2(p + 1) if p else 0.0,
        "bits_per_sample_paper_log_p": math.log2(p) if p > 1 else 0.0,
        "applies_to": "universal-mode samples",
    }


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------

def _init_dictionary(spec, m, patch_width):
    from .dictionary_learning import Dictionary, overcomplete_dct_frame
    if spec.startswith("dct"):
        p = int(spec[3:]) if len(spec) > 3 else 256
        return overcomplete_dct_frame(m, p, patch_width)
    return Dictionary.load(spec)


def cmd_learn(args):
    import numpy as np
    from .image_pipeline import estimate_noise_variance, read_image
    from .dictionary_learning import (LearnConfig, dictionary_codelength,
                                      learn_backward, learn_forward)
    from .sparse_coding import CodingParams

    image = read_image(args.image)
    w = args.patch_width
    Y, n_pixels = tile_patches(image, w)
    sigma2 = args.sigma ** 2 if args.sigma is not None \
        else estimate_noise_variance(image)
    params = CodingParams(delta_a=args.delta_a, delta_e=args.delta_e,
                          sigma2=sigma2)
    config = LearnConfig(max_outer_iters=args.max_outer,
                         partial_update_iters=args.inner_iters,
                         p_max=args.p_max,
                         full_refit_every=args.full_refit_every)

    t0 = time.time()
    if args.method == "backward":
        D0 = _init_dictionary(args.init, w * w, w)
        result = learn_backward(Y, D0, config, params)
    else:
        result = learn_forward(Y, config, params, patch_width=w,
                               partial=args.method == "forward-partial")
    elapsed = time.time() - t0

    _save_model(args.out, result.dictionary, result.state)
    n = Y.shape[1]
    payload = {
        "p": result.dictionary.p,
        "n_samples": n,
        "total_bits": result.total_bits,
        "bits_per_pixel": result.total_bits / n_pixels,
        "bits_per_pixel_payload": (result.total_bits - dictionary_codelength(
            result.dictionary, n)) / n_pixels,
        "dictionary_bits": dictionary_codelength(result.dictionary, n),
        "support_size_field": _support_size_field_note(result.dictionary.p),
        "wall_time_s": elapsed,
        "dictionary_file": args.out,
    }
    if args.report:
        _write_report(args.report, "learn", _resolved_config(args), payload)
    print(f"learned p={result.dictionary.p} "
          f"bpp={payload['bits_per_pixel']:.3f} in {elapsed:.1f}s -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compress
# ---------------------------------------------------------------------------

def cmd_compress(args):
    import numpy as np
    from .image_pipeline import estimate_noise_variance, read_image
    from .dictionary_learning import dictionary_codelength
    from .sparse_coding import (CodingParams, PlugInState, codes_to_csv,
                                combine_reports, encode_sequential)

    dictionary, _ = _load_model(args.dict)
    w = dictionary.patch_width or int(math.isqrt(dictionary.m))
    results = []
    for path in args.images:
        image = read_image(path)
        Y, n_pixels = tile_patches(image, w)
        if Y.shape[0] != dictionary.m:
            raise ValueError(f"{path}: patch size {Y.shape[0]} does not "
                             f"match dictionary dimension {dictionary.m}")
        sigma2 = args.sigma ** 2 if args.sigma is not None \
            else estimate_noise_variance(image)
        params = CodingParams(delta_a=args.delta_a, delta_e=args.delta_e,
                              sigma2=sigma2)
        state = PlugInState(p=dictionary.p, sigma2=params.sigma2,
                            delta_a=params.delta_a)
        t0 = time.time()
        codes, _, reports = encode_sequential(Y, dictionary, params, state)
        elapsed = time.time() - t0
        agg = combine_reports(reports, n_pixels=n_pixels)
        dict_bits = dictionary_codelength(dictionary, Y.shape[1])
        results.append({
            "image": str(path),
            "n_samples": Y.shape[1],
            "parts": agg.to_dict(),
            "bits_per_pixel": agg.total / n_pixels,
            "bits_per_pixel_with_dictionary": (agg.total + dict_bits) / n_pixels,
            "support_size_field": _support_size_field_note(dictionary.p),
            "wall_time_s": elapsed,
        })
        if args.codes:
            codes_to_csv(codes, args.codes)
        print(f"{path}: bpp={results[-1]['bits_per_pixel']:.3f}")
    if args.report:
        _write_report(args.report, "compress", _resolved_config(args),
                      {"images": results})
    return EXIT_OK


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------

def _learn_for_denoising(image, sigma2, args):
    import numpy as np
    from .dictionary_learning import LearnConfig, learn_backward
    from .image_pipeline import extract_patches
    from .sparse_coding import CodingParams

    w = args.patch_width
    grid = extract_patches(image, w)
    stride = args.learn_stride or max(1, int(math.ceil(grid.n / 16384)))
    Y = grid.patches[:, ::stride]
    params = CodingParams(delta_a=args.delta_a, delta_e=args.delta_e,
                          sigma2=sigma2)
    config = LearnConfig(max_outer_iters=args.max_outer,
                         full_refit_every=args.full_refit_every)
    D0 = _init_dictionary(args.init, w * w, w)
    result = learn_backward(Y, D0, config, params)
    return result.dictionary, result.state


def cmd_denoise(args):
    import numpy as np
    from .image_pipeline import (denoise_pt, denoise_rd, psnr, read_image,
                                 write_image)
    from .sparse_coding import CodingParams

    noisy = read_image(args.image)
    sigma2 = args.sigma ** 2
    t0 = time.time()
    if args.dict:
        dictionary, state = _load_model(args.dict)
    else:
        dictionary, state = _learn_for_denoising(noisy, sigma2, args)
    t_learn = time.time() - t0

    params = CodingParams(delta_a=args.delta_a, delta_e=args.delta_e,
                          sigma2=sigma2)
    t0 = time.time()
    if args.variant == "rd":
        out = denoise_rd(noisy, dictionary, args.sigma, state=state,
                         C=args.C, lambda_blend=args.lambda_blend,
                         params=params)
    else:
        out = denoise_pt(noisy, dictionary, args.sigma, state=state,
                         lambda_blend=args.lambda_blend, params=params)
    t_denoise = time.time() - t0

    write_image(args.out, out)
    payload = {
        "variant": args.variant, "sigma": args.sigma,
        "p": dictionary.p,
        "learn_time_s": t_learn, "denoise_time_s": t_denoise,
        "output": args.out,
    }
    if args.reference:
        ref = read_image(args.reference)
        payload["psnr_db"] = psnr(ref, out)
        payload["psnr_noisy_db"] = psnr(ref, noisy)
        print(f"PSNR {payload['psnr_db']:.2f} dB "
              f"(noisy {payload['psnr_noisy_db']:.2f} dB)")
    if args.report:
        _write_report(args.report, "denoise", _resolved_config(args), payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------

def cmd_segment(args):
    import numpy as np
    from .image_pipeline import read_image, segment_textures, write_image

    if len(args.dicts) < 2:
        raise ValueError("segmentation needs at least two class dictionaries")
    mosaic = read_image(args.mosaic)
    models = [_load_model(p) for p in args.dicts]
    w = models[0][0].patch_width or int(math.isqrt(models[0][0].m))
    t0 = time.time()
    labels, _ = segment_textures(mosaic, models, args.radius, patch_width=w)
    elapsed = time.time() - t0

    payload = {"classes": len(models), "radius": args.radius,
               "wall_time_s": elapsed, "output": args.out}
    if args.out:
        scale = 255 // max(len(models) - 1, 1)
        write_image(args.out, (labels * scale).astype(np.uint8))
    if args.truth:
        truth = read_image(args.truth)
        scale = 255 // max(len(models) - 1, 1)
        truth_labels = np.rint(truth / scale).astype(int)
        payload["accuracy"] = float(np.mean(truth_labels == labels))
        print(f"accuracy {payload['accuracy']:.4f}")
    if args.report:
        _write_report(args.report, "segment", _resolved_config(args), payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# lowrank
# ---------------------------------------------------------------------------

def _load_frames(args):
    import numpy as np
    from .image_pipeline import read_image
    if os.path.isdir(args.input):
        names = sorted(os.listdir(args.input))
        frames = [read_image(os.path.join(args.input, f)) for f in names
                  if f.lower().endswith((".pgm", ".png"))]
        if not frames:
            raise ValueError(f"no frames found in {args.input}")
        h, w = frames[0].shape
        Y = np.stack([f.ravel() for f in frames], axis=1).astype(np.float64)
        return Y, (h, w)
    if not args.dims:
        raise ValueError("raw input needs --dims HxW")
    h, w = (int(t) for t in args.dims.lower().split("x"))
    raw = np.fromfile(args.input, dtype=np.uint8)
    n = raw.size // (h * w)
    Y = raw[:n * h * w].reshape(n, h * w).T.astype(np.float64)
    return Y, (h, w)


def cmd_lowrank(args):
    import csv as _csv
    import numpy as np
    from .image_pipeline import write_image
    from .lowrank import default_lambda_grid, select_model

    Y, frame_shape = _load_frames(args)
    m, n = Y.shape
    lambda_grid = None
    if args.lambda_mults:
        lam0 = 1.0 / math.sqrt(max(m, n))
        lambda_grid = [lam0 * float(t) for t in args.lambda_mults.split(",")]
    q_grid = [float(t) for t in args.q_grid.split(",")] if args.q_grid else None

    t0 = time.time()
    best, curve = select_model(Y, lambda_grid=lambda_grid, Q_grid=q_grid,
                               frame_shape=frame_shape)
    elapsed = time.time() - t0

    os.makedirs(args.out_dir, exist_ok=True)
    background = best.low_rank()
    for j in range(min(n, args.max_frames_out)):
        write_image(os.path.join(args.out_dir, f"background_{j:04d}.pgm"),
                    background[:, j].reshape(frame_shape))
        write_image(os.path.join(args.out_dir, f"foreground_{j:04d}.pgm"),
                    np.abs(best.E[:, j]).reshape(frame_shape))
    curve_path = os.path.join(args.out_dir, "codelength_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(curve[0].keys()))
        writer.writeheader()
        writer.writerows(curve)

    payload = {
        "rank": best.rank, "lambda": best.lam, "Q": best.Q,
        "codelength_bits": best.codelength, "parts": best.parts,
        "converged": best.converged,
        "frames": n, "frame_shape": list(frame_shape),
        "curve_csv": curve_path, "wall_time_s": elapsed,
    }
    if args.report:
        _write_report(args.report, "lowrank", _resolved_config(args), payload)
    print(f"selected rank={best.rank} lambda={best.lam:.5f} Q={best.Q} "
          f"({best.codelength:.0f} bits)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdlsparse",
        description="Parameter-free sparse modeling by codelength minimization")
    parser.add_argument("--threads", type=int, default=0,
                        help="cap BLAS thread pools (0 = leave as-is)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed recorded in reports (core paths are deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a dictionary from an image")
    p.add_argument("image")
    p.add_argument("--method", choices=["forward", "forward-partial",
                                        "backward"], default="backward")
    p.add_argument("--init", default="dct256",
                   help="initial dictionary for backward: dct<p> or a file")
    p.add_argument("--patch-width", type=int, default=8)
    p.add_argument("--delta-a", type=float, default=16.0)
    p.add_argument("--delta-e", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=None,
                   help="noise std; estimated from the image when absent")
    p.add_argument("--p-max", type=int, default=256)
    p.add_argument("--inner-iters", type=int, default=10,
                   help="inner iterations of the forward-partial variant")
    p.add_argument("--max-outer", type=int, default=12)
    p.add_argument("--full-refit-every", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("compress", help="codelength report for images")
    p.add_argument("images", nargs="+")
    p.add_argument("--dict", required=True)
    p.add_argument("--delta-a", type=float, default=16.0)
    p.add_argument("--delta-e", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--codes", default=None, help="write codes CSV here")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("denoise", help="denoise an image of known noise std")
    p.add_argument("image")
    p.add_argument("--variant", choices=["rd", "pt"], default="rd")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--dict", default=None,
                   help="pre-learned dictionary; learned from the noisy "
                        "image when absent")
    p.add_argument("--init", default="dct256")
    p.add_argument("--patch-width", type=int, default=8)
    p.add_argument("--delta-a", type=float, default=16.0)
    p.add_argument("--delta-e", type=float, default=1.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--lambda-blend", type=float, default=0.0)
    p.add_argument("--learn-stride", type=int, default=0,
                   help="stride for the learning patch subsample (0 = auto)")
    p.add_argument("--max-outer", type=int, default=8)
    p.add_argument("--full-refit-every", type=int, default=8)
    p.add_argument("--reference", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("segment", help="texture segmentation by codelength")
    p.add_argument("mosaic")
    p.add_argument("dicts", nargs="+", help="one dictionary file per class")
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("lowrank", help="low-rank background estimation")
    p.add_argument("input", help="directory of frames or raw uint8 file")
    p.add_argument("--dims", default=None, help="HxW for raw input")
    p.add_argument("--lambda-mults", default=None,
                   help="comma list of multipliers of 1/sqrt(max(m,n))")
    p.add_argument("--q-grid", default=None, help="comma list of Q values")
    p.add_argument("--out-dir", default="lowrank_out")
    p.add_argument("--max-frames-out", type=int, default=8)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_lowrank)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _cap_threads(args.threads)
    import numpy as np
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
