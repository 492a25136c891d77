"""Dictionary learning by total-codelength minimization.

Atoms are coded as causal prediction residuals (a lower-triangular,
unit-diagonal predictor W maps an atom to its residual), modeled as IID
Laplacian.  For a fixed dictionary size the learner alternates per-sample
pursuit coding, plug-in parameter re-estimation, and a proximal-gradient
dictionary update in the residual domain U = W D, where the L1 penalty
decouples.  Dictionary size itself is selected by forward growth or
backward pruning, both driven by the same total bit count.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coding_models import LGModel, LOG2E
from .sparse_coding import (
    Coder,
    CodelengthReport,
    PlugInState,
    SparseCode,
    combine_reports,
    compa_encode_batch,
)

log = logging.getLogger(__name__)

_THETA_D_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# dictionary container
# ---------------------------------------------------------------------------

def predictor_matrix(patch_width, height=None):
    """Causal bilinear predictor residual map on a raster-scanned patch.

    Row i of the result computes d_i - (north + west - northwest) with
    zero padding outside the patch, so W is lower triangular with a unit
    diagonal.
    """
    if patch_width < 1:
        raise ValueError("patch_width must be >= 1")
    w = patch_width
    h = w if height is None else height
    m = h * w
    W = np.eye(m)
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if r > 0:
                W[i, i - w] -= 1.0
            if c > 0:
                W[i, i - 1] -= 1.0
            if r > 0 and c > 0:
                W[i, i - w - 1] += 1.0
    return W


@dataclass
class Dictionary:
    """Atom matrix with its predictor and quantization metadata."""

    atoms: np.ndarray            # (m, p), column norms <= 1
    predictor: np.ndarray        # (m, m) lower triangular, unit diagonal
    theta_d: float = 0.1
    delta_d: float = 1.0
    patch_width: int = 0         # 0 marks generic (identity-predictor) mode

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def p(self):
        return self.atoms.shape[1]

    def copy(self):
        return Dictionary(self.atoms.copy(), self.predictor, self.theta_d,
                          self.delta_d, self.patch_width)

    def without_atoms(self, idx):
        return Dictionary(np.delete(self.atoms, idx, axis=1), self.predictor,
                          self.theta_d, self.delta_d, self.patch_width)

    def with_atom(self, d):
        return Dictionary(np.column_stack([self.atoms, d]), self.predictor,
                          self.theta_d, self.delta_d, self.patch_width)

    def residual_theta(self):
        """Laplacian MLE of the prediction-residual scale (mean |W d|)."""
        if self.p == 0:
            return _THETA_D_FLOOR
        return max(float(np.mean(np.abs(self.predictor @ self.atoms))),
                   _THETA_D_FLOOR)

    def save(self, path):
        """Plain-text format: header then row-major atoms as hex floats."""
        with open(path, "w") as fh:
            fh.write("mdlsparse-dictionary 1\n")
            fh.write(f"m {self.m}\n")
            fh.write(f"p {self.p}\n")
            fh.write(f"patch_width {self.patch_width}\n")
            fh.write(f"theta_d {float(self.theta_d).hex()}\n")
            fh.write(f"delta_d {float(self.delta_d).hex()}\n")
            for row in self.atoms:
                fh.write(" ".join(v.hex() for v in row.tolist()) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            magic = fh.readline().strip()
            if magic != "mdlsparse-dictionary 1":
                raise ValueError(f"not a dictionary file: {path}")
            header = {}
            for _ in range(5):
                key, val = fh.readline().split()
                header[key] = val
            m, p = int(header["m"]), int(header["p"])
            width = int(header["patch_width"])
            atoms = np.empty((m, p))
            for i in range(m):
                atoms[i] = [float.fromhex(tok) for tok in fh.readline().split()]
        W = predictor_matrix(width) if width > 0 else np.eye(m)
        return cls(atoms=atoms, predictor=W,
                   theta_d=float.fromhex(header["theta_d"]),
                   delta_d=float.fromhex(header["delta_d"]),
                   patch_width=width)


def make_dictionary(atoms, patch_width=0):
    """Wrap an atom matrix, deriving the predictor from the patch geometry."""
    atoms = np.asarray(atoms, dtype=np.float64)
    m = atoms.shape[0]
    if patch_width:
        if patch_width * patch_width != m:
            raise ValueError("patch_width inconsistent with atom length")
        W = predictor_matrix(patch_width)
    else:
        W = np.eye(m)
    d = Dictionary(atoms=atoms, predictor=W, patch_width=patch_width)
    d.theta_d = d.residual_theta()
    return d


def overcomplete_dct_frame(m, p, patch_width=None):
    """p atoms from a separable 2-D cosine grid, unit-normalized.

    With p == m this is the orthonormal 2-D DCT basis; larger p samples a
    denser frequency grid.
    """
    if patch_width is None:
        patch_width = math.isqrt(m)
    if patch_width * patch_width != m:
        raise ValueError("m must be a perfect square in image mode")
    w = patch_width
    g = math.ceil(math.sqrt(p))
    base = np.empty((w, g))
    for q in range(g):
        v = np.cos(np.arange(w) * q * np.pi / g) if g != w else \
            np.cos((2 * np.arange(w) + 1) * q * np.pi / (2 * w))
        if q > 0:
            v = v - v.mean()
        base[:, q] = v / np.linalg.norm(v)
    atoms = np.empty((m, g * g))
    for q1 in range(g):
        for q2 in range(g):
            atoms[:, q1 * g + q2] = np.outer(base[:, q1], base[:, q2]).ravel()
    atoms = atoms[:, :p]
    atoms /= np.linalg.norm(atoms, axis=0, keepdims=True)
    return make_dictionary(atoms, patch_width=w)


def dictionary_codelength(dictionary, n):
    """Bits to describe the dictionary: L1 of prediction residuals plus
    the (m p / 2) log2 n parameter-precision term."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if dictionary.p == 0:
        return 0.0
    theta = max(dictionary.theta_d, _THETA_D_FLOOR)
    l1 = float(np.sum(np.abs(dictionary.predictor @ dictionary.atoms)))
    return (LOG2E / theta) * l1 \
        + 0.5 * dictionary.m * dictionary.p * math.log2(n)


# ---------------------------------------------------------------------------
# dictionary update (monotone accelerated proximal gradient)
# ---------------------------------------------------------------------------

def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def dictionary_update(dictionary, A, Y, theta_e, sigma2, theta_d, *,
                      max_iters=400, tol=1e-9, return_info=False):
    """Minimize data bits plus the atom-residual L1 penalty over the atoms.

    Works in the prediction-residual domain U = W D where the penalty is
    separable; the data term (error bits under the Gaussian+Laplacian
    model) is smooth and convex, so a monotone accelerated proximal
    gradient with backtracking applies.  Atoms exceeding unit norm are
    projected back after the update.
    """
    if sigma2 <= 0:
        raise ValueError("dictionary update requires sigma2 > 0")
    W = dictionary.predictor
    Winv = np.linalg.solve(W, np.eye(W.shape[0]))
    model = LGModel(sigma2, theta_e)
    lam = LOG2E / max(theta_d, _THETA_D_FLOOR)
    A = np.asarray(A, dtype=np.float64)

    def smooth(U):
        R = Y - Winv @ U @ A
        return float(np.sum(model.neg_log2_density(R)))

    def smooth_value_grad(U):
        R = Y - Winv @ U @ A
        val, grad = model.neg_log2_density_and_grad(R)
        return float(np.sum(val)), -(Winv.T @ grad) @ A.T

    # Step bound: curvature sup of the error bits times the squared spectral
    # norms of W^-1 and A.
    anorm2 = float(np.linalg.eigvalsh(A @ A.T)[-1]) if A.size else 0.0
    winv_norm2 = float(np.linalg.norm(Winv, 2)) ** 2
    L = max(model.curvature_bound() * winv_norm2 * anorm2, 1e-12)

    U = W @ dictionary.atoms
    x = U.copy()
    y = U.copy()
    fx = smooth(x) + lam * np.abs(x).sum()
    t = 1.0
    objective = [fx]
    for _ in range(max_iters):
        fy, grad = smooth_value_grad(y)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                "non-finite gradient in dictionary update "
                f"(theta_e={theta_e}, sigma2={sigma2})")
        while True:
            z = _soft_threshold(y - grad / L, lam / L)
            dz = z - y
            sz = smooth(z)
            if sz <= fy + np.sum(grad * dz) + 0.5 * L * np.sum(dz * dz) \
                    + 1e-9 * abs(fy):
                break
            L *= 2.0
            if L > 1e30:
                raise FloatingPointError("dictionary-update backtracking diverged")
        fz = sz + lam * np.abs(z).sum()
        if not np.isfinite(fz):
            raise FloatingPointError("non-finite dictionary-update objective")
        # monotone safeguard: keep the better of the prox point and the
        # previous iterate; momentum still runs through the prox point
        accepted = fz <= fx
        x_new, fx_new = (z, fz) if accepted else (x, fx)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t / t_new) * (z - x_new) + ((t - 1.0) / t_new) * (x_new - x)
        moved = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-12)
        gained = fx - fx_new
        x, fx, t = x_new, fx_new, t_new
        objective.append(fx)
        # a rejected step moves nothing; only an accepted small move (or a
        # negligible objective gain) is evidence of convergence
        if accepted and (moved < tol or gained <= 1e-9 * max(abs(fx), 1.0)):
            break

    atoms = Winv @ x
    norms = np.linalg.norm(atoms, axis=0)
    over = norms > 1.0
    if over.any():
        atoms[:, over] /= norms[over]
    out = Dictionary(atoms=atoms, predictor=W, theta_d=theta_d,
                     delta_d=dictionary.delta_d,
                     patch_width=dictionary.patch_width)
    if return_info:
        return out, {"objective": objective, "final_step_bound": L}
    return out


# ---------------------------------------------------------------------------
# fixed-size learning (alternate minimization)
# ---------------------------------------------------------------------------

@dataclass
class LearnConfig:
    """Knobs of the learning loops; defaults match desk-scale use."""

    epsilon_converge: float = 1e-3
    max_outer_iters: int = 50
    partial_update_iters: int = 10
    p_max: int = 256
    fista_max_iters: int = 40
    fista_tol: float = 1e-6
    backward_inner_iters: int = 1
    full_refit_every: int = 8
    batch_columns: int = 0        # 0 = pick from memory budget


@dataclass
class LearnResult:
    codes: list
    dictionary: Dictionary
    state: PlugInState
    reports: list
    total_bits: float
    usage: np.ndarray
    history: list = field(default_factory=list)

    @property
    def report(self):
        n_pixels = sum(r.n_pixels for r in self.reports)
        return combine_reports(
            self.reports, l_dictionary=self.total_bits
            - sum(r.total for r in self.reports), n_pixels=n_pixels)


def _block_size(m, p, requested=0):
    if requested:
        return requested
    return max(8, int(6.7e6 / max(m * max(p, 1), 1)))


def _encode_all(Y, dictionary, params, state, config, rd_budget=None):
    """Batch-encode every column against a frozen coder."""
    n = Y.shape[1]
    bs = _block_size(Y.shape[0], dictionary.p, config.batch_columns)
    codes, reports = [], []
    residuals = np.empty_like(Y)
    frozen = None if (state is None or state.is_empty) else state
    for start in range(0, n, bs):
        stop = min(start + bs, n)
        budget = None
        if rd_budget is not None:
            budget = rd_budget if np.ndim(rd_budget) == 0 \
                else rd_budget[start:stop]
        c, r, rep = compa_encode_batch(Y[:, start:stop], dictionary, params,
                                       frozen, rd_budget=budget)
        codes.extend(c)
        reports.extend(rep)
        residuals[:, start:stop] = r
    return codes, residuals, reports


def codes_to_matrix(codes, p):
    A = np.zeros((p, len(codes)))
    for j, c in enumerate(codes):
        A[:, j] = c.coefficients()
    return A


def _usage(codes, p):
    u = np.zeros(p, dtype=np.int64)
    for c in codes:
        u[c.z] += 1
    return u


def _observe_all(state, codes, residuals):
    state.samples_seen += len(codes)
    state.residual_sq_sum += float(np.sum(residuals * residuals))
    state.residual_count += residuals.size
    for j, c in enumerate(codes):
        state.atom_ones[c.z] += 1
        state.value_excess_sums[c.z] += c.v[c.z]


def learn_fixed_size(Y, D0, config, params, state=None):
    """Alternate pursuit coding, plug-in re-estimation, and dictionary
    updates at fixed dictionary size; returns the best-seen iterate.

    The first pass (empty state) codes in universal mode; later passes
    plug in parameters accumulated from all previous passes.
    """
    Y = np.asarray(Y, dtype=np.float64)
    m, n = Y.shape
    params = _effective_params(params)
    D = D0.copy()
    D.delta_d = 1.0 / math.sqrt(n)
    if state is None:
        state = PlugInState(p=D.p, sigma2=params.sigma2, delta_a=params.delta_a)
    if state.p != D.p:
        raise ValueError("state atom count disagrees with dictionary")

    best = None
    history = []
    prev_atoms = D.atoms.copy()
    for it in range(1, config.max_outer_iters + 1):
        D.theta_d = D.residual_theta()
        codes, residuals, reports = _encode_all(Y, D, params, state, config)
        # plug-in re-estimation from the just-computed iterate: fresh
        # statistics each pass, so the coder equilibrates once the
        # dictionary stops moving
        state = PlugInState(p=D.p, sigma2=params.sigma2,
                            delta_a=params.delta_a)
        _observe_all(state, codes, residuals)
        total = sum(r.total for r in reports) + dictionary_codelength(D, n)
        history.append(total)
        if best is None or total < best.total_bits:
            best = LearnResult(codes=codes, dictionary=D.copy(),
                               state=state.copy(), reports=reports,
                               total_bits=total, usage=_usage(codes, D.p))
        log.debug("fixed-size iter %d: p=%d total=%.1f bits (%.4f bpp)",
                  it, D.p, total, total / (m * n))
        if it == config.max_outer_iters or D.p == 0:
            break
        A = codes_to_matrix(codes, D.p)
        theta_e = max(state.theta_e, 1e-3)
        D = dictionary_update(D, A, Y, theta_e, params.sigma2, D.theta_d,
                              max_iters=config.fista_max_iters,
                              tol=config.fista_tol)
        rel = np.linalg.norm(D.atoms - prev_atoms) \
            / max(np.linalg.norm(D.atoms), 1e-12)
        prev_atoms = D.atoms.copy()
        if rel <= config.epsilon_converge:
            break
    best.history = history
    return best


def _effective_params(params):
    """Floor sigma2 at the quantization-noise variance of the data step."""
    floor = params.delta_e ** 2 / 12.0
    if params.sigma2 < floor:
        return replace(params, sigma2=floor)
    return params


# ---------------------------------------------------------------------------
# forward selection
# ---------------------------------------------------------------------------

def _principal_direction(E):
    """Leading left singular vector with a deterministic sign."""
    U, s, _ = np.linalg.svd(E, full_matrices=False)
    u = U[:, 0]
    pivot = np.argmax(np.abs(u))
    if u[pivot] < 0:
        u = -u
    return u, s[0]


def learn_forward(Y, config, params, patch_width=0, partial=False):
    """Grow the dictionary one atom at a time until total bits increase.

    Each new atom is seeded with the principal direction of the current
    residual; `partial` caps the inner alternate minimization at
    config.partial_update_iters instead of running it to convergence.
    The plug-in state is warm-started across sizes.
    """
    Y = np.asarray(Y, dtype=np.float64)
    m, n = Y.shape
    params = _effective_params(params)
    inner = replace_config(config,
                           max_outer_iters=config.partial_update_iters
                           if partial else config.max_outer_iters)

    D = make_dictionary(np.zeros((m, 0)), patch_width=patch_width)
    state = PlugInState(p=0, sigma2=params.sigma2, delta_a=params.delta_a)
    codes, residuals, reports = _encode_all(Y, D, params, None, config)
    best = LearnResult(codes=codes, dictionary=D, state=state,
                       reports=reports,
                       total_bits=sum(r.total for r in reports),
                       usage=np.zeros(0, dtype=np.int64))
    E = Y.astype(np.float64)
    log.info("forward: p=0 total=%.1f bits", best.total_bits)

    while best.dictionary.p < config.p_max:
        if not np.any(np.abs(E) > 1e-12):
            break
        atom, weight = _principal_direction(E)
        if weight <= 1e-12:
            break
        D_next = best.dictionary.with_atom(atom)
        state = best.state.copy()
        state.add_atom()
        result = learn_fixed_size(Y, D_next, inner, params, state)
        log.info("forward: p=%d total=%.1f bits", result.dictionary.p,
                 result.total_bits)
        if result.total_bits >= best.total_bits:
            break
        best = result
        E = Y - best.dictionary.atoms @ codes_to_matrix(best.codes,
                                                        best.dictionary.p)
    return best


def replace_config(config, **kw):
    cfg = LearnConfig(**{**config.__dict__, **kw})
    return cfg


# ---------------------------------------------------------------------------
# backward pruning
# ---------------------------------------------------------------------------

def _strip_atoms(result, drop_idx, Y, params, config):
    """Remove atoms, recode the samples that used them, patch the rest.

    Dropping an atom changes untouched samples' bits only through the
    per-atom support term (the dropped atoms' inactive-bits vanish), which
    is recomputed analytically; samples whose codes used a dropped atom
    are recoded against the reduced dictionary.
    """
    drop_idx = np.atleast_1d(drop_idx)
    D_new = result.dictionary.without_atoms(drop_idx)
    D_new.theta_d = D_new.residual_theta()
    state = result.state.copy()
    for k in sorted(drop_idx.tolist(), reverse=True):
        state.remove_atom(k)

    touched = [j for j, c in enumerate(result.codes)
               if bool(c.z[drop_idx].any())]
    keep = np.delete(np.arange(result.dictionary.p), drop_idx)

    codes = []
    for c in result.codes:
        codes.append(SparseCode(z=c.z[keep], s=c.s[keep], v=c.v[keep],
                                delta_a=c.delta_a))
    reports = list(result.reports)
    # support bits shrink with p for every sample; recompute them under the
    # current state (the dropped atoms' inactive-bits vanish)
    coder = Coder(D_new.p, params, state)
    if coder.universal:
        for j, c in enumerate(codes):
            reports[j] = replace_report(
                reports[j],
                l_support=float(coder.support_bits_for_size(int(c.z.sum()))))
    else:
        on, off = coder.support_onoff_bits()
        for j, c in enumerate(codes):
            reports[j] = replace_report(
                reports[j], l_support=float(np.sum(np.where(c.z, on, off))))

    if touched:
        Yt = Y[:, touched]
        new_codes, new_res, new_reports = _encode_all(
            Yt, D_new, params, state, config)
        for pos, j in enumerate(touched):
            codes[j] = new_codes[pos]
            reports[j] = new_reports[pos]

    n = Y.shape[1]
    total = sum(r.total for r in reports) + dictionary_codelength(D_new, n)
    return LearnResult(codes=codes, dictionary=D_new, state=state,
                       reports=reports, total_bits=total,
                       usage=_usage(codes, D_new.p))


def replace_report(report, **kw):
    d = {"l_support": report.l_support, "l_signs": report.l_signs,
         "l_values": report.l_values, "l_error": report.l_error,
         "l_dictionary": report.l_dictionary, "n_pixels": report.n_pixels}
    d.update(kw)
    return CodelengthReport(**d)


def learn_backward(Y, D_init, config, params):
    """Prune the least-used atom while total bits keep decreasing.

    Unused atoms are dropped in one batch first (each such drop strictly
    decreases every sample's support bits and the dictionary bits, so the
    greedy schedule cannot overshoot); the remaining atoms go one per
    round with cheap touched-sample recoding and a periodic full refit.
    Returns the best-seen model after a final full coding pass.
    """
    Y = np.asarray(Y, dtype=np.float64)
    params = _effective_params(params)
    result = learn_fixed_size(Y, D_init, config, params)
    inner = replace_config(config, max_outer_iters=config.backward_inner_iters)
    # re-baseline the support accounting under the final accumulated state
    # so pruning comparisons share one frozen coder
    result = _strip_atoms(result, np.zeros(0, dtype=np.int64), Y, params, inner)
    best = result
    log.info("backward: start p=%d total=%.1f bits", result.dictionary.p,
             result.total_bits)

    prunes = 0
    while result.dictionary.p > 1:
        unused = np.flatnonzero(result.usage == 0)
        if unused.size and unused.size < result.dictionary.p:
            result = _strip_atoms(result, unused, Y, params, inner)
            log.info("backward: dropped %d unused atoms -> p=%d total=%.1f",
                     unused.size, result.dictionary.p, result.total_bits)
            if result.total_bits < best.total_bits:
                best = result
            continue
        k = int(np.argmin(result.usage))
        candidate = _strip_atoms(result, [k], Y, params, inner)
        prunes += 1
        if prunes % config.full_refit_every == 0:
            candidate = learn_fixed_size(Y, candidate.dictionary, inner,
                                         params, candidate.state)
        log.info("backward: pruned atom %d -> p=%d total=%.1f", k,
                 candidate.dictionary.p, candidate.total_bits)
        if candidate.total_bits < best.total_bits:
            best = candidate
            result = candidate
        else:
            break

    final = learn_fixed_size(Y, best.dictionary, inner, params, best.state)
    if final.total_bits <= best.total_bits:
        best = final
    return best
