"""Low-rank plus sparse model selection by description length.

The convex program min ||A||_* + lambda ||Y - A||_1 is solved over an
ascending lambda grid with warm restarts (inexact augmented-Lagrangian
iteration: singular-value thresholding alternating with entrywise soft
thresholding).  Every candidate decomposition is then priced in bits by
coding its reduced SVD factors -- left vectors as causally predicted
images, right vectors through zero-order differences, singular values
with the universal integer code -- plus the sparse residual's support
(enumerative) and nonzero values (two-part Laplacian).  The cheapest
model over the (lambda, Q) grid wins.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .coding_models import (
    LaplacianModel,
    discretized_codelength,
    integer_universal_codelength,
    log2_binomial,
    quantize,
)
from .dictionary_learning import predictor_matrix

SIGMA_PRECISION = 1e-16
_RANK_TRUNCATION = 1e-12


@dataclass
class LowRankModel:
    """Selected decomposition: SVD factors, sparse residual, and its price."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    E: np.ndarray
    lam: float
    Q: float
    codelength: float
    rank: int
    parts: dict = field(default_factory=dict)
    converged: bool = True

    def low_rank(self):
        return (self.U * self.S) @ self.V.T


# ---------------------------------------------------------------------------
# convex solver
# ---------------------------------------------------------------------------

def rpca_objective(Y, A, lam):
    """Nuclear norm of A plus lam times the L1 norm of Y - A."""
    s = np.linalg.svd(A, compute_uv=False)
    return float(s.sum() + lam * np.abs(Y - A).sum())


def rpca_solve(Y, lam, warm_start=None, tol=1e-7, max_iters=10000,
               freeze_residual=1e-3):
    """Inexact augmented-Lagrangian split of Y into low-rank plus sparse.

    Alternates singular-value thresholding (low-rank block) with
    entrywise soft thresholding (sparse block) under an increasing
    penalty; converged when ||Y - A - E||_F / ||Y||_F <= tol.  A prior
    (A, E) pair warm-starts the split.

    The penalty grows geometrically only until the residual reaches
    `freeze_residual`, then stays fixed: with an ever-growing penalty the
    dual never catches up and the iteration stalls at an approximate
    objective, while the frozen-penalty phase is plain two-block ADMM and
    converges to the exact optimum.

    Returns (A, E, info) with info carrying convergence diagnostics.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Y = np.asarray(Y, dtype=np.float64)
    norm_fro = np.linalg.norm(Y)
    if norm_fro == 0:
        return np.zeros_like(Y), np.zeros_like(Y), {
            "iterations": 0, "converged": True, "residual": 0.0}
    norm_two = np.linalg.norm(Y, 2)
    dual = Y / max(norm_two, np.abs(Y).max() / lam)
    mu = 1.25 / norm_two
    mu_bar = mu * 1e7
    rho = 1.5

    if warm_start is not None:
        A, E = (np.array(x, dtype=np.float64) for x in warm_start)
    else:
        A = np.zeros_like(Y)
        E = np.zeros_like(Y)

    converged = False
    it = 0
    residual = np.inf
    for it in range(1, max_iters + 1):
        U, s, Vt = np.linalg.svd(Y - E + dual / mu, full_matrices=False)
        s_shrunk = np.maximum(s - 1.0 / mu, 0.0)
        keep = s_shrunk > 0.0
        A = (U[:, keep] * s_shrunk[keep]) @ Vt[keep]
        T = Y - A + dual / mu
        E = np.sign(T) * np.maximum(np.abs(T) - lam / mu, 0.0)
        Z = Y - A - E
        residual = np.linalg.norm(Z) / norm_fro
        if residual <= tol:
            converged = True
            break
        dual = dual + mu * Z
        if residual > freeze_residual:
            mu = min(mu * rho, mu_bar)

    return A, E, {"iterations": it, "converged": converged,
                  "residual": float(residual)}


# ---------------------------------------------------------------------------
# coding of a candidate decomposition
# ---------------------------------------------------------------------------

def laplace_two_part_bits(values, delta):
    """Two-part code: ML Laplacian scale (half a log per parameter) plus
    the discretized values under that scale."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    theta = max(float(np.mean(np.abs(values))), delta / 100.0)
    model = LaplacianModel(theta)
    bits = float(np.sum(discretized_codelength(model, values, delta)))
    return bits + 0.5 * math.log2(values.size)


def support_bits_flat(total, nnz):
    """Enumerative support code over a flattened index set."""
    return math.log2(total + 1) + float(log2_binomial(total, nnz))


def encode_lowrank(A, E, Q, delta_e=1.0, frame_shape=None):
    """Price a low-rank plus sparse decomposition in bits.

    Left vectors are coded as causal-prediction residuals on the frame
    geometry at step Q/sqrt(m); right vectors as zero-order differences
    (first element predicted 0) at step Q/sqrt(n); singular values with
    the universal integer code at fixed high precision; the sparse part
    as an enumerative support plus two-part Laplacian values, where the
    support is what survives delta_e quantization.

    Returns (total_bits, LowRankModel).
    """
    if not 0.0 < Q < 1.0:
        raise ValueError("Q must lie in (0, 1)")
    A = np.asarray(A, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    m, n = A.shape

    if np.any(A):
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        r = int(np.sum(s > _RANK_TRUNCATION * s[0]))
    else:
        U = np.zeros((m, 0))
        s = np.zeros(0)
        Vt = np.zeros((0, n))
        r = 0
    U, S, V = U[:, :r], s[:r], Vt[:r].T

    if frame_shape is None:
        frame_shape = (m, 1)
    if frame_shape[0] * frame_shape[1] != m:
        raise ValueError("frame_shape inconsistent with column length")
    W = predictor_matrix(frame_shape[1], height=frame_shape[0])

    delta_u = Q / math.sqrt(m)
    delta_v = Q / math.sqrt(n)

    # Closed-loop predictive coding: quantize the column entrywise, then
    # code the predictor residuals of the quantized values.  The predictor
    # has integer coefficients, so those residuals are exact multiples of
    # the step and the decoder recovers the quantized column losslessly.
    bits_u = sum(
        laplace_two_part_bits(W @ quantize(U[:, i], delta_u), delta_u)
        for i in range(r))
    bits_v = 0.0
    for i in range(r):
        diffs = np.diff(quantize(V[:, i], delta_v), prepend=0.0)
        bits_v += laplace_two_part_bits(diffs, delta_v)
    bits_sigma = float(np.sum(integer_universal_codelength(
        np.ceil(S / SIGMA_PRECISION)))) if r else 0.0

    Eq = quantize(E, delta_e)
    nz = Eq != 0.0
    nnz = int(nz.sum())
    bits_support = support_bits_flat(m * n, nnz)
    bits_values = laplace_two_part_bits(Eq[nz], delta_e)

    parts = {
        "l_left_vectors": bits_u,
        "l_right_vectors": bits_v,
        "l_singular_values": bits_sigma,
        "l_residual_support": bits_support,
        "l_residual_values": bits_values,
    }
    total = sum(parts.values())
    model = LowRankModel(U=U, S=S, V=V, E=E, lam=0.0, Q=Q,
                         codelength=total, rank=r, parts=parts)
    return total, model


# ---------------------------------------------------------------------------
# model selection
# ---------------------------------------------------------------------------

def default_lambda_grid(m, n):
    lam0 = 1.0 / math.sqrt(max(m, n))
    return [lam0 * f for f in (0.25, 0.5, 1.0, 2.0, 4.0)]


DEFAULT_Q_GRID = (0.05, 0.1, 0.2, 0.4, 0.8)


def select_model(Y, lambda_grid=None, Q_grid=None, delta_e=1.0,
                 frame_shape=None, tol=1e-7):
    """Sweep lambda ascending with warm restarts, price every (lambda, Q)
    candidate, and return the shortest-description model plus the sweep
    record (one row per candidate).

    Ties break to the smallest lambda, then the smallest Q (the sweep
    order guarantees it with a strict comparison).
    """
    Y = np.asarray(Y, dtype=np.float64)
    m, n = Y.shape
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(m, n)
    if Q_grid is None:
        Q_grid = DEFAULT_Q_GRID
    lambda_grid = sorted(lambda_grid)

    best = None
    curve = []
    warm = None
    for lam in lambda_grid:
        A, E, info = rpca_solve(Y, lam, warm_start=warm, tol=tol)
        warm = (A, E)
        for Q in sorted(Q_grid):
            bits, model = encode_lowrank(A, E, Q, delta_e=delta_e,
                                         frame_shape=frame_shape)
            model.lam = lam
            model.converged = info["converged"]
            curve.append({"lam": lam, "Q": Q, "bits": bits,
                          "rank": model.rank,
                          "residual_nnz": int(np.sum(quantize(E, delta_e) != 0))})
            if best is None or bits < best.codelength:
                best = model
    return best, curve
