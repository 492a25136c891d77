"""Patch-based applications: denoising, reconstruction, segmentation.

Images are decomposed into overlapping patches (one per pixel, with
symmetric reflection past the bottom/right borders so every pixel owns a
full window); the per-patch mean is removed before coding and restored
at reconstruction.  Denoising runs the pursuit per patch in one of two
modes: a rate-distortion stop (code until the squared residual falls
under a noise-proportional budget) or post-thresholding (pure codelength
minimization followed by a soft-threshold recovery of the clean part of
the coding residual).  Texture segmentation assigns each pixel to the
class whose dictionary yields the shortest average description of the
patches around it.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .sparse_coding import CodingParams, compa_encode_batch
from .dictionary_learning import codes_to_matrix, _block_size

__all__ = [
    "PatchGrid", "extract_patches", "reconstruct_average",
    "denoise_rd", "denoise_pt", "segment_textures", "psnr",
    "estimate_noise_variance", "read_image", "write_image",
]


# ---------------------------------------------------------------------------
# image io
# ---------------------------------------------------------------------------

def read_image(path):
    """Load an 8-bit grayscale image (binary PGM natively, else via Pillow)."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        return _read_pgm(path)
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_image(path, image):
    path = str(path)
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if path.lower().endswith(".pgm"):
        _write_pgm(path, img)
    else:
        from PIL import Image
        Image.fromarray(img, mode="L").save(path)


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if data[i:i + 1] == b"#":
            i = data.index(b"\n", i) + 1
            continue
        if data[i:i + 1].isspace():
            i += 1
            continue
        j = i
        while not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary (P5) PGM is supported")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    raster = data[i + 1:i + 1 + width * height]
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _write_pgm(path, img):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


# ---------------------------------------------------------------------------
# patch grid
# ---------------------------------------------------------------------------

@dataclass
class PatchGrid:
    """One zero-mean patch column per image pixel, raster ordered."""

    patches: np.ndarray       # (w*w, height*width), DC removed
    dc: np.ndarray            # (height*width,) per-patch means
    image_height: int
    image_width: int
    patch_width: int

    @property
    def n(self):
        return self.patches.shape[1]


def extract_patches(image, w):
    """Overlapping w-by-w patches, one per pixel, reflection padded.

    The patch at pixel (r, c) spans rows r..r+w-1 and cols c..c+w-1 of the
    symmetrically padded image; its mean is removed and stored.
    """
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape
    if w < 1 or w > min(H, W):
        raise ValueError(f"patch width {w} invalid for {H}x{W} image")
    padded = np.pad(image, ((0, w - 1), (0, w - 1)), mode="symmetric")
    windows = sliding_window_view(padded, (w, w))
    patches = windows.reshape(H * W, w * w).T.copy()
    dc = patches.mean(axis=0)
    patches -= dc
    return PatchGrid(patches=patches, dc=dc, image_height=H, image_width=W,
                     patch_width=w)


def reconstruct_average(grid, estimates, noisy_image, lambda_blend=0.0):
    """Per-pixel average of all covering patch estimates, DC restored,
    blended with the noisy pixels and clamped to the 8-bit range."""
    H, W, w = grid.image_height, grid.image_width, grid.patch_width
    est = np.asarray(estimates, dtype=np.float64) + grid.dc
    if est.shape != (w * w, H * W):
        raise ValueError("estimate matrix does not match the grid")
    stack = est.reshape(w, w, H, W)
    acc = np.zeros((H + w - 1, W + w - 1))
    cnt = np.zeros((H + w - 1, W + w - 1))
    for i in range(w):
        for k in range(w):
            acc[i:i + H, k:k + W] += stack[i, k]
            cnt[i:i + H, k:k + W] += 1.0
    mean = acc[:H, :W] / cnt[:H, :W]
    noisy = np.asarray(noisy_image, dtype=np.float64)
    out = (1.0 - lambda_blend) * mean + lambda_blend * noisy
    return np.clip(out, 0.0, 255.0)


# ---------------------------------------------------------------------------
# metrics and noise estimation
# ---------------------------------------------------------------------------

def psnr(reference, test):
    """10 log10(255^2 / MSE); +inf sentinel for identical images."""
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes disagree")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def estimate_noise_variance(image, block=8):
    """Noise-variance estimate from the quietest image blocks.

    Uses a low decile of per-block variances (the absolute minimum is 0 on
    saturated regions); floored at the quantization-noise variance 1/12.
    """
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    hb, wb = H // block, W // block
    blocks = img[:hb * block, :wb * block].reshape(hb, block, wb, block)
    variances = blocks.transpose(0, 2, 1, 3).reshape(hb * wb, -1).var(axis=1)
    return float(max(np.percentile(variances, 10.0), 1.0 / 12.0))


# ---------------------------------------------------------------------------
# denoising
# ---------------------------------------------------------------------------

def _encode_patches(patches, dictionary, params, state, rd_budget=None):
    codes = []
    bs = _block_size(patches.shape[0], dictionary.p)
    frozen = None if (state is None or state.is_empty) else state
    reports = []
    for start in range(0, patches.shape[1], bs):
        block = patches[:, start:start + bs]
        c, _, rep = compa_encode_batch(block, dictionary, params, frozen,
                                       rd_budget=rd_budget)
        codes.extend(c)
        reports.extend(rep)
    return codes, reports


def denoise_rd(image, dictionary, sigma, state=None, C=1.0,
               lambda_blend=0.0, params=None, budget_per_dim=True):
    """Rate-distortion denoising: code each patch until the squared
    residual meets the noise-proportional budget, then average.

    The budget defaults to C * m * sigma^2 (per-patch total squared error
    grows with the patch dimension m); `budget_per_dim=False` selects the
    dimension-free C * sigma^2 variant.
    """
    w = dictionary.patch_width or int(math.isqrt(dictionary.m))
    grid = extract_patches(image, w)
    m = dictionary.m
    if params is None:
        params = CodingParams(sigma2=float(sigma) ** 2)
    budget = C * (m if budget_per_dim else 1.0) * float(sigma) ** 2
    codes, _ = _encode_patches(grid.patches, dictionary, params, state,
                               rd_budget=budget)
    estimates = dictionary.atoms @ codes_to_matrix(codes, dictionary.p)
    return reconstruct_average(grid, estimates, image, lambda_blend)


def pt_clean_residual(etilde, sigma2):
    """Clean part of a coding residual, per patch column.

    Solves min_u (1/sigma2)||e - u||_2^2 + (1/theta)||u||_1 coordinatewise
    with theta = sqrt(0.5 max(var(e) - sigma2, 0)): soft threshold at
    sigma2 / (2 theta).  A residual at or below the noise floor yields 0.
    """
    etilde = np.asarray(etilde, dtype=np.float64)
    var = np.mean(etilde * etilde, axis=0)
    theta = np.sqrt(0.5 * np.maximum(var - sigma2, 0.0))
    with np.errstate(divide="ignore"):
        thresh = np.where(theta > 0.0, sigma2 / (2.0 * theta), np.inf)
    return np.sign(etilde) * np.maximum(np.abs(etilde) - thresh[None, :], 0.0)


def denoise_pt(image, dictionary, sigma, state=None, lambda_blend=0.0,
               params=None):
    """Post-thresholding denoising.

    Each patch gets its codelength-minimizing estimate; the coding
    residual is then partially recovered by a soft threshold whose scale
    comes from the residual's excess variance over the noise floor
    (zero recovery when the residual is pure noise).
    """
    w = dictionary.patch_width or int(math.isqrt(dictionary.m))
    grid = extract_patches(image, w)
    sigma2 = float(sigma) ** 2
    if params is None:
        params = CodingParams(sigma2=sigma2)
    codes, _ = _encode_patches(grid.patches, dictionary, params, state)
    ytilde = dictionary.atoms @ codes_to_matrix(codes, dictionary.p)
    estimates = ytilde + pt_clean_residual(grid.patches - ytilde, sigma2)
    return reconstruct_average(grid, estimates, image, lambda_blend)


# ---------------------------------------------------------------------------
# texture segmentation
# ---------------------------------------------------------------------------

def _disc_kernel(radius):
    if radius <= 0:
        return np.ones((1, 1))
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy * yy + xx * xx <= radius * radius).astype(np.float64)


def segment_textures(mosaic, class_models, radius, params=None,
                     patch_width=16):
    """Label each pixel with the class of shortest average description.

    `class_models` is a sequence of (dictionary, state) pairs, states
    optional.  Per pixel and class the patch codelength is averaged over
    all patches whose centers fall within `radius` (radius 0 reduces to
    the patchwise rule); ties break to the lowest class index.

    Returns (labels, per-class averaged codelength maps).
    """
    if len(class_models) < 2:
        raise ValueError("need at least two classes")
    grid = extract_patches(mosaic, patch_width)
    H, W = grid.image_height, grid.image_width
    if params is None:
        params = CodingParams(sigma2=estimate_noise_variance(mosaic))

    kernel = _disc_kernel(radius)
    coverage = fftconvolve(np.ones((H, W)), kernel, mode="same")
    maps = []
    for dictionary, state in class_models:
        _, reports = _encode_patches(grid.patches, dictionary, params, state)
        bits = np.array([r.total for r in reports]).reshape(H, W)
        avg = fftconvolve(bits, kernel, mode="same") / coverage
        maps.append(avg)
    stack = np.stack(maps)
    labels = np.argmin(stack, axis=0)
    return labels, stack
