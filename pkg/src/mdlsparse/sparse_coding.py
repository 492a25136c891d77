"""Per-sample codelength evaluation and the codelength-minimizing pursuit.

A sparse code is described in four parts: the support (which atoms are
active), one sign bit per active atom, the excess magnitudes of the
active coefficients, and the quantized approximation error.  Two coding
modes exist:

* universal mode: parameter-free mixture models (exponential mixture for
  magnitudes, Gamma-mixed Gaussian+Laplacian for errors) plus the
  enumerative support code;
* sequential (plug-in) mode: per-atom Bernoulli probabilities via the
  (n1+1/2)/j rule, per-atom exponential magnitude scales by ML, and a
  Gaussian+Laplacian error model with a plug-in deviation scale, all
  estimated from previously coded samples.  Optionally the Bernoulli
  counters are kept per causal-neighborhood state (north/west/northwest
  occupancy) for spatially coherent data.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .coding_models import (
    LGModel,
    MOEGModel,
    MOEModel,
    PROB_CLAMP,
    THETA_FLOOR,
    discretized_codelength,
    kt_probability,
    log2_binomial,
    quantize,
    support_codelength,
)

# Magnitude and error mixture hyper-parameters for universal mode.  The
# error mixture's beta always tracks the error quantization step.
KAPPA_A = 3.0
BETA_A = 50.0
KAPPA_E = 3.0

# Half-width of the integer residual-bin codelength table, in delta_e units.
_ERR_HALF_BINS = 8192

N_MARKOV_STATES = 8


@dataclass(frozen=True)
class CodingParams:
    """Quantization steps and error-model parameters shared by one run."""

    delta_a: float = 16.0
    delta_e: float = 1.0
    sigma2: float = 0.0
    kappa_a: float = KAPPA_A
    beta_a: float = BETA_A
    kappa_e: float = KAPPA_E

    def __post_init__(self):
        if self.delta_a <= 0 or self.delta_e <= 0:
            raise ValueError("quantization steps must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    @property
    def beta_e(self):
        return self.delta_e


@dataclass
class SparseCode:
    """Support/sign/magnitude decomposition of a quantized coefficient vector.

    The magnitudes hold the excess over one quantization step:
    v = max(|a| - delta_a, 0), so an active coefficient reconstructs as
    s * (v + delta_a).
    """

    z: np.ndarray          # (p,) bool
    s: np.ndarray          # (p,) int8 in {-1, 0, +1}
    v: np.ndarray          # (p,) nonnegative multiples of delta_a
    delta_a: float

    @classmethod
    def from_coefficients(cls, a, delta_a):
        a = np.asarray(a, dtype=np.float64)
        z = a != 0.0
        s = np.sign(a).astype(np.int8)
        idx = np.where(z, np.rint(np.abs(a) / delta_a) - 1.0, 0.0)
        if np.any(idx < 0):
            raise ValueError("coefficients must be quantized at delta_a")
        return cls(z=z, s=s, v=idx * delta_a, delta_a=float(delta_a))

    def coefficients(self):
        return np.where(self.z, self.s * (self.v + self.delta_a), 0.0)

    @property
    def n_active(self):
        return int(self.z.sum())


@dataclass
class CodelengthReport:
    """Bit accounting of one coded sample (or an aggregate of samples)."""

    l_support: float
    l_signs: float
    l_values: float
    l_error: float
    l_dictionary: float = 0.0
    n_pixels: int = 1

    @property
    def total(self):
        return (self.l_support + self.l_signs + self.l_values
                + self.l_error + self.l_dictionary)

    @property
    def bits_per_pixel(self):
        return self.total / self.n_pixels

    def to_dict(self):
        return {
            "l_support": self.l_support,
            "l_signs": self.l_signs,
            "l_values": self.l_values,
            "l_error": self.l_error,
            "l_dictionary": self.l_dictionary,
            "total": self.total,
            "bits_per_pixel": self.bits_per_pixel,
        }


def combine_reports(reports, l_dictionary=0.0, n_pixels=None):
    """Sum per-sample reports into one aggregate report."""
    agg = CodelengthReport(
        l_support=sum(r.l_support for r in reports),
        l_signs=sum(r.l_signs for r in reports),
        l_values=sum(r.l_values for r in reports),
        l_error=sum(r.l_error for r in reports),
        l_dictionary=l_dictionary,
        n_pixels=n_pixels if n_pixels is not None
        else sum(r.n_pixels for r in reports),
    )
    return agg


# ---------------------------------------------------------------------------
# sequential plug-in state
# ---------------------------------------------------------------------------

@dataclass
class PlugInState:
    """Accumulated statistics driving the sequential plug-in code.

    Counters may span several passes over the data; probabilities and
    scales are derived on demand so the state is always consistent.
    """

    p: int
    sigma2: float
    delta_a: float
    samples_seen: int = 0
    residual_sq_sum: float = 0.0
    residual_count: int = 0
    atom_ones: np.ndarray = None
    value_excess_sums: np.ndarray = None
    markov_ones: np.ndarray = None
    markov_totals: np.ndarray = None

    def __post_init__(self):
        if self.atom_ones is None:
            self.atom_ones = np.zeros(self.p, dtype=np.int64)
        if self.value_excess_sums is None:
            self.value_excess_sums = np.zeros(self.p)
        if self.markov_ones is None:
            self.markov_ones = np.zeros((self.p, N_MARKOV_STATES), dtype=np.int64)
        if self.markov_totals is None:
            self.markov_totals = np.zeros((self.p, N_MARKOV_STATES), dtype=np.int64)

    @property
    def is_empty(self):
        return self.samples_seen == 0

    @property
    def theta_e(self):
        """Plug-in deviation scale from the accumulated residual mass."""
        if self.residual_count == 0:
            return 0.0
        var = self.residual_sq_sum / self.residual_count
        return 0.5 * math.sqrt(max(var - self.sigma2, 0.0))

    @property
    def atom_use_counts(self):
        return self.atom_ones

    def rho(self, k=None):
        """KT activity probability for the next sample, plain counters."""
        j = self.samples_seen + 1
        ones = self.atom_ones if k is None else self.atom_ones[k]
        return np.clip((ones + 0.5) / j, PROB_CLAMP, 1.0 - PROB_CLAMP)

    def rho_markov(self, states):
        """KT activity probabilities given each atom's neighborhood state."""
        states = np.asarray(states)
        ones = self.markov_ones[np.arange(self.p), states]
        totals = self.markov_totals[np.arange(self.p), states]
        return np.clip((ones + 0.5) / (totals + 1.0),
                       PROB_CLAMP, 1.0 - PROB_CLAMP)

    def theta_a(self, k):
        """Per-atom exponential magnitude scale; None without history."""
        if self.atom_ones[k] == 0:
            return None
        est = self.value_excess_sums[k] / self.atom_ones[k]
        return max(est, self.delta_a / 100.0)

    def theta_a_vector(self):
        """(scales, has_history) for all atoms at once."""
        has = self.atom_ones > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            est = np.where(has, self.value_excess_sums
                           / np.maximum(self.atom_ones, 1), 0.0)
        return np.maximum(est, self.delta_a / 100.0), has

    def observe(self, code, residual, markov_states=None):
        """Accumulate one coded sample into the counters (in place)."""
        residual = np.asarray(residual, dtype=np.float64)
        self.samples_seen += 1
        self.residual_sq_sum += float(np.sum(residual * residual))
        self.residual_count += residual.size
        active = code.z
        self.atom_ones[active] += 1
        self.value_excess_sums[active] += code.v[active]
        if markov_states is not None:
            states = np.asarray(markov_states)
            self.markov_totals[np.arange(self.p), states] += 1
            self.markov_ones[active, states[active]] += 1

    def copy(self):
        return PlugInState(
            p=self.p, sigma2=self.sigma2, delta_a=self.delta_a,
            samples_seen=self.samples_seen,
            residual_sq_sum=self.residual_sq_sum,
            residual_count=self.residual_count,
            atom_ones=self.atom_ones.copy(),
            value_excess_sums=self.value_excess_sums.copy(),
            markov_ones=self.markov_ones.copy(),
            markov_totals=self.markov_totals.copy(),
        )

    def add_atom(self):
        """Grow the per-atom counters by one fresh atom."""
        self.p += 1
        self.atom_ones = np.append(self.atom_ones, 0)
        self.value_excess_sums = np.append(self.value_excess_sums, 0.0)
        self.markov_ones = np.vstack(
            [self.markov_ones, np.zeros((1, N_MARKOV_STATES), dtype=np.int64)])
        self.markov_totals = np.vstack(
            [self.markov_totals, np.zeros((1, N_MARKOV_STATES), dtype=np.int64)])

    def remove_atom(self, k):
        self.p -= 1
        self.atom_ones = np.delete(self.atom_ones, k)
        self.value_excess_sums = np.delete(self.value_excess_sums, k)
        self.markov_ones = np.delete(self.markov_ones, k, axis=0)
        self.markov_totals = np.delete(self.markov_totals, k, axis=0)

    def to_dict(self):
        return {
            "p": self.p, "sigma2": self.sigma2, "delta_a": self.delta_a,
            "samples_seen": self.samples_seen,
            "residual_sq_sum": self.residual_sq_sum,
            "residual_count": self.residual_count,
            "atom_ones": self.atom_ones.tolist(),
            "value_excess_sums": self.value_excess_sums.tolist(),
            "markov_ones": self.markov_ones.tolist(),
            "markov_totals": self.markov_totals.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            p=d["p"], sigma2=d["sigma2"], delta_a=d["delta_a"],
            samples_seen=d["samples_seen"],
            residual_sq_sum=d["residual_sq_sum"],
            residual_count=d["residual_count"],
            atom_ones=np.asarray(d["atom_ones"], dtype=np.int64),
            value_excess_sums=np.asarray(d["value_excess_sums"]),
            markov_ones=np.asarray(d["markov_ones"], dtype=np.int64),
            markov_totals=np.asarray(d["markov_totals"], dtype=np.int64),
        )


def plugin_update(state, code, residual, markov_states=None):
    """Return a new state with one coded sample's statistics accumulated."""
    new = state.copy()
    new.observe(code, residual, markov_states)
    return new


# ---------------------------------------------------------------------------
# causal neighborhood states
# ---------------------------------------------------------------------------

def markov_state(support_grid, row, col, atom):
    """(north, west, northwest) occupancy of `atom` at a grid position.

    Out-of-grid neighbors read as 0, mirroring the zero padding of the
    dictionary predictor.
    """
    n = bool(support_grid[row - 1, col, atom]) if row > 0 else False
    w = bool(support_grid[row, col - 1, atom]) if col > 0 else False
    nw = bool(support_grid[row - 1, col - 1, atom]) if row > 0 and col > 0 else False
    return (int(n), int(w), int(nw))


def markov_state_index(state):
    """Pack an (n, w, nw) tuple into a state id in 0..7."""
    n, w, nw = state
    return (n << 2) | (w << 1) | nw


def markov_state_indices(support_grid, row, col):
    """Packed state ids of all atoms at one grid position."""
    p = support_grid.shape[2]
    n = support_grid[row - 1, col] if row > 0 else np.zeros(p, dtype=bool)
    w = support_grid[row, col - 1] if col > 0 else np.zeros(p, dtype=bool)
    nw = (support_grid[row - 1, col - 1] if row > 0 and col > 0
          else np.zeros(p, dtype=bool))
    return (n.astype(np.int64) << 2) | (w.astype(np.int64) << 1) \
        | nw.astype(np.int64)


# ---------------------------------------------------------------------------
# frozen evaluation tables for one coding pass
# ---------------------------------------------------------------------------

# Error-bin tables for the universal mixture are expensive to integrate;
# cache them by (sigma2, kappa, beta, delta).  Read-only once built.
_UNIVERSAL_ERR_TABLE_CACHE = {}


def _error_bits_table(model, delta_e):
    centers = np.arange(-_ERR_HALF_BINS, _ERR_HALF_BINS + 1) * delta_e
    return discretized_codelength(model, centers, delta_e)


class Coder:
    """Frozen per-pass models and lookup tables.

    Holds the error-bin bit table, per-atom magnitude scales, and per-atom
    support bits for either coding mode.  Instances are read-only after
    construction; building one per outer pass keeps the pursuit's inner
    loop to table gathers and closed-form bit formulas.
    """

    def __init__(self, p, params, state=None):
        self.p = p
        self.params = params
        self.state = state
        self.universal = state is None or state.is_empty

        if self.universal:
            key = (params.sigma2, params.kappa_e, params.beta_e, params.delta_e)
            table = _UNIVERSAL_ERR_TABLE_CACHE.get(key)
            if table is None:
                model = MOEGModel(params.sigma2, params.kappa_e, params.beta_e)
                table = _error_bits_table(model, params.delta_e)
                _UNIVERSAL_ERR_TABLE_CACHE[key] = table
            self.err_bits = table
            self.err_model = MOEGModel(params.sigma2, params.kappa_e,
                                       params.beta_e)
            # Enumerative support code by support size.
            sizes = np.arange(p + 1)
            if p >= 1:
                self.support_by_size = (math.log2(p + 1)
                                        + log2_binomial(p, sizes))
            else:
                self.support_by_size = np.zeros(1)
            self.theta_a = None
            self.theta_a_has = None
        else:
            theta_e = max(state.theta_e, THETA_FLOOR)
            self.err_model = LGModel(params.sigma2, theta_e)
            self.err_bits = _error_bits_table(self.err_model, params.delta_e)
            self.theta_a, self.theta_a_has = state.theta_a_vector()
            self.support_by_size = None

        self._moe = MOEModel(params.kappa_a, params.beta_a)

    # -- support ------------------------------------------------------------

    def support_onoff_bits(self, markov_states=None):
        """(on_bits, off_bits) per atom in sequential mode."""
        if self.universal:
            raise RuntimeError("universal mode has no per-atom support bits")
        if markov_states is None:
            rho = self.state.rho()
        else:
            rho = self.state.rho_markov(markov_states)
        return -np.log2(rho), -np.log2(1.0 - rho)

    def support_bits_for_size(self, k0):
        return self.support_by_size[k0]

    # -- magnitudes -----------------------------------------------------------

    def value_bits(self, abs_coef, atom_idx=None):
        """Bits for active-coefficient magnitudes |a| (vectorized).

        In sequential mode atoms carry their own exponential scale; atoms
        with no history fall back to the universal magnitude mixture.
        Inactive entries (|a| = 0) cost 0 bits.
        """
        abs_coef = np.asarray(abs_coef, dtype=np.float64)
        da = self.params.delta_a
        v = np.maximum(abs_coef - da, 0.0)
        active = abs_coef != 0.0

        moe_bits = self._moe_value_bits(v)
        if self.universal:
            return np.where(active, moe_bits, 0.0)

        if atom_idx is None:
            theta = self.theta_a
            has = self.theta_a_has
        else:
            theta = self.theta_a[atom_idx]
            has = self.theta_a_has[atom_idx]
        exp_bits = self._exponential_value_bits(v, theta)
        return np.where(active, np.where(has, exp_bits, moe_bits), 0.0)

    def _exponential_value_bits(self, v, theta):
        """Discretized one-sided exponential bits, vectorized over scales."""
        da = self.params.delta_a
        lo = np.maximum(v - 0.5 * da, 0.0)
        hi = v + 0.5 * da
        exact = -np.log2(np.maximum(np.exp(-lo / theta) - np.exp(-hi / theta),
                                    5e-324))
        approx = np.maximum((v / theta) * math.log2(math.e) + np.log2(theta)
                            - math.log2(da), 0.0)
        return np.where(da >= 0.5 * theta, exact, approx)

    def _moe_value_bits(self, v):
        da = self.params.delta_a
        ka, ba = self.params.kappa_a, self.params.beta_a
        if da >= 0.5 * self._moe.nominal_scale:
            lo = np.maximum(v - 0.5 * da, 0.0)
            hi = v + 0.5 * da
            prob = (ba / (lo + ba)) ** ka - (ba / (hi + ba)) ** ka
            return -np.log2(np.maximum(prob, 5e-324))
        dens_bits = (-math.log2(ka) - ka * math.log2(ba)
                     + (ka + 1.0) * np.log2(v + ba))
        return np.maximum(dens_bits - math.log2(da), 0.0)

    # -- errors ---------------------------------------------------------------

    def error_bits_from_int(self, idx):
        """Gather bits for integer residual bins (indices in delta_e units)."""
        return self.err_bits[np.clip(idx, -_ERR_HALF_BINS, _ERR_HALF_BINS)
                             + _ERR_HALF_BINS]

    def error_bits(self, residual_q):
        idx = np.rint(np.asarray(residual_q) / self.params.delta_e).astype(np.int64)
        return self.error_bits_from_int(idx)


# ---------------------------------------------------------------------------
# full per-sample evaluation
# ---------------------------------------------------------------------------

def _atoms_of(dictionary):
    return dictionary.atoms if hasattr(dictionary, "atoms") else np.asarray(dictionary)


def sample_codelength(y, code, dictionary, params, state=None,
                      markov_states=None):
    """Exact bit accounting of one sample under a given sparse code.

    `state=None` selects universal mode; otherwise the sequential plug-in
    models derived from `state` are used (per-atom Bernoulli/KT support
    probabilities, or per-state ones when `markov_states` is given).
    """
    D = _atoms_of(dictionary)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != D.shape[0]:
        raise ValueError("sample and dictionary dimensions disagree")
    p = D.shape[1]
    coder = Coder(p, params, state)

    a = code.coefficients()
    residual_q = quantize(y - D @ a, params.delta_e)
    l_error = float(np.sum(coder.error_bits(residual_q)))

    k0 = code.n_active
    if coder.universal:
        l_support = float(coder.support_bits_for_size(k0)) if p >= 1 else 0.0
    else:
        on, off = coder.support_onoff_bits(markov_states)
        l_support = float(np.sum(np.where(code.z, on, off)))

    l_signs = float(k0)
    l_values = float(np.sum(coder.value_bits(np.abs(a))))
    return CodelengthReport(l_support=l_support, l_signs=l_signs,
                            l_values=l_values, l_error=l_error,
                            n_pixels=y.shape[0])


# ---------------------------------------------------------------------------
# COMPA: the codelength-minimizing pursuit
# ---------------------------------------------------------------------------

def _initial_terms(Y, coder):
    """Per-sample bit terms of the all-zero code."""
    B = Y.shape[1]
    ridx = np.rint(Y / coder.params.delta_e).astype(np.int64)
    err = coder.error_bits_from_int(ridx).sum(axis=0)
    if coder.universal:
        sup = np.full(B, float(coder.support_bits_for_size(0)))
    else:
        _, off = coder.support_onoff_bits()
        sup = np.full(B, float(off.sum()))
    return err, sup


def compa_encode_batch(Y, dictionary, params, state=None, *,
                       rd_budget=None, max_iters=None,
                       support_onoff=None):
    """Run the pursuit on all columns of Y against a frozen coder.

    Each iteration tentatively perturbs every coefficient by its quantized
    correlation, evaluates the full candidate codelength (error bits from
    the re-quantized residual plus the support/sign/value deltas of the
    touched coefficient), and applies the best strictly improving
    candidate.  Samples stop independently when no candidate decreases the
    total (or, with `rd_budget`, once the squared residual meets the
    budget).

    Returns (codes, residuals, reports) where codes is a list of
    SparseCode and residuals is an (m, B) array quantized at delta_e.
    """
    D = _atoms_of(dictionary)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    m, B = Y.shape
    p = D.shape[1]
    da, de = params.delta_a, params.delta_e
    coder = Coder(p, params, state)
    if max_iters is None:
        max_iters = 16 * m

    if p == 0:
        residuals = quantize(Y, de)
        codes = [SparseCode.from_coefficients(np.zeros(0), da)
                 for _ in range(B)]
        reports = [CodelengthReport(
            l_support=0.0, l_signs=0.0, l_values=0.0,
            l_error=float(coder.error_bits(residuals[:, j]).sum()),
            n_pixels=m) for j in range(B)]
        return codes, residuals, reports

    G = D.T @ D
    Gdiag = np.diag(G).copy()
    a = np.zeros((p, B))
    e = Y.copy()
    g = D.T @ e

    if support_onoff is not None:
        on_bits, off_bits = support_onoff
    elif not coder.universal:
        on_bits, off_bits = coder.support_onoff_bits()
    else:
        on_bits = off_bits = None

    err_cur, sup_cur = _initial_terms(Y, coder)
    if support_onoff is not None:
        sup_cur = off_bits.sum(axis=0) if off_bits.ndim == 2 \
            else np.full(B, float(off_bits.sum()))
    val_cur = np.zeros(B)
    k0_cur = np.zeros(B, dtype=np.int64)
    L_cur = err_cur + sup_cur + val_cur + k0_cur

    rd_mode = rd_budget is not None
    if rd_mode:
        budget = np.broadcast_to(np.asarray(rd_budget, dtype=np.float64), (B,))
        dist_cur = np.sum(e * e, axis=0)
        active = dist_cur > budget
    else:
        active = np.ones(B, dtype=bool)

    it = 0
    while active.any() and it < max_iters:
        it += 1
        sel = np.flatnonzero(active)
        Ba = sel.size
        gs = g[:, sel]
        delta = quantize(gs, da)                      # (p, Ba)

        # error term of every candidate: re-quantize e - delta_k d_k
        cand = e[:, sel][:, :, None] - D[:, None, :] * delta.T[None, :, :]
        ridx = np.rint(cand / de).astype(np.int64)
        err_c = coder.error_bits_from_int(ridx).sum(axis=0)      # (Ba, p)

        # support / sign / value deltas of the touched coefficient
        a_old = a[:, sel].T                                       # (Ba, p)
        a_new = a_old + delta.T
        was_on = a_old != 0.0
        now_on = a_new != 0.0
        k0_new = k0_cur[sel][:, None] - was_on + now_on           # (Ba, p)

        if coder.universal and support_onoff is None:
            sup_new = coder.support_by_size[k0_new]
        else:
            onb = on_bits if on_bits.ndim == 1 else on_bits[:, sel].T
            offb = off_bits if off_bits.ndim == 1 else off_bits[:, sel].T
            old_bits = np.where(was_on, onb, offb)
            new_bits = np.where(now_on, onb, offb)
            sup_new = sup_cur[sel][:, None] - old_bits + new_bits

        vb_old = coder.value_bits(np.abs(a_old))
        vb_new = coder.value_bits(np.abs(a_new))
        val_new = val_cur[sel][:, None] - vb_old + vb_new

        L_c = err_c + sup_new + k0_new + val_new                  # (Ba, p)

        if rd_mode:
            dist_new = (dist_cur[sel][:, None]
                        - 2.0 * delta.T * gs.T + delta.T ** 2 * Gdiag[None, :])
            feasible = (delta.T != 0.0) & (dist_new < dist_cur[sel][:, None]
                                           - 1e-12)
            L_pick = np.where(feasible, L_c, np.inf)
            kstar = np.argmin(L_pick, axis=1)
            rows = np.arange(Ba)
            ok = np.isfinite(L_pick[rows, kstar])
        else:
            kstar = np.argmin(L_c, axis=1)
            rows = np.arange(Ba)
            ok = L_c[rows, kstar] < L_cur[sel]

        take = np.flatnonzero(ok)
        if take.size == 0:
            active[sel] = False
            break
        bsel = sel[take]
        ks = kstar[take]
        dv = delta[ks, take]

        a[ks, bsel] += dv
        e[:, bsel] -= D[:, ks] * dv[None, :]
        g[:, bsel] -= G[:, ks] * dv[None, :]
        err_cur[bsel] = err_c[take, ks]
        sup_cur[bsel] = sup_new[take, ks]
        val_cur[bsel] = val_new[take, ks]
        k0_cur[bsel] = k0_new[take, ks]
        L_cur[bsel] = L_c[take, ks]

        stopped = sel[~ok]
        active[stopped] = False
        if rd_mode:
            dist_cur[bsel] = dist_new[take, ks]
            active[bsel] = dist_cur[bsel] > budget[bsel]

    residuals = quantize(e, de)
    codes = [SparseCode.from_coefficients(a[:, j], da) for j in range(B)]
    reports = [CodelengthReport(
        l_support=float(sup_cur[j]), l_signs=float(k0_cur[j]),
        l_values=float(val_cur[j]), l_error=float(err_cur[j]),
        n_pixels=m) for j in range(B)]
    return codes, residuals, reports


def compa_encode(y, dictionary, params, state=None, *, markov_states=None,
                 rd_budget=None, max_iters=None):
    """Encode one sample; returns (SparseCode, quantized residual, report)."""
    support_onoff = None
    if markov_states is not None and state is not None and not state.is_empty:
        coder = Coder(_atoms_of(dictionary).shape[1], params, state)
        support_onoff = coder.support_onoff_bits(markov_states)
    codes, residuals, reports = compa_encode_batch(
        np.asarray(y, dtype=np.float64)[:, None], dictionary, params, state,
        rd_budget=rd_budget, max_iters=max_iters, support_onoff=support_onoff)
    return codes[0], residuals[:, 0], reports[0]


def encode_sequential(Y, dictionary, params, state, *, grid_shape=None,
                      markov=False, update=True):
    """Code the columns of Y in order, plugging in parameters as they adapt.

    Each sample is coded with parameters estimated from all previously
    coded samples (universal mode while the state is empty).  With
    `markov=True` and a `grid_shape=(rows, cols)` raster layout, support
    probabilities condition on the causal neighborhood occupancy.

    Returns (codes, residuals, reports); `state` is mutated when
    `update=True`.
    """
    D = _atoms_of(dictionary)
    Y = np.asarray(Y, dtype=np.float64)
    m, n = Y.shape
    p = D.shape[1]
    if markov and grid_shape is None:
        raise ValueError("markov mode requires grid_shape")
    if grid_shape is not None and grid_shape[0] * grid_shape[1] != n:
        raise ValueError("grid_shape inconsistent with sample count")

    support_grid = None
    if markov:
        support_grid = np.zeros((grid_shape[0], grid_shape[1], p), dtype=bool)

    codes, residuals, reports = [], np.empty_like(Y), []
    for j in range(n):
        states = None
        if markov:
            r, c = divmod(j, grid_shape[1])
            states = markov_state_indices(support_grid, r, c)
        code, resid, report = compa_encode(
            Y[:, j], D, params, None if state.is_empty else state,
            markov_states=states)
        codes.append(code)
        residuals[:, j] = resid
        reports.append(report)
        if markov:
            support_grid[r, c] = code.z
        if update:
            state.observe(code, resid, markov_states=states)
    return codes, residuals, reports


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def codes_to_csv(codes, path):
    """One row per sample: index, atom indices, signed magnitudes in delta_a units."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "atoms", "magnitudes"])
        for j, code in enumerate(codes):
            idx = np.flatnonzero(code.z)
            mags = (code.s[idx]
                    * np.rint((code.v[idx] + code.delta_a) / code.delta_a)
                    .astype(np.int64))
            writer.writerow([j, " ".join(map(str, idx)),
                             " ".join(map(str, mags))])


def codes_from_csv(path, p, delta_a):
    """Inverse of codes_to_csv."""
    codes = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            a = np.zeros(p)
            if row[1]:
                idx = np.fromstring(row[1], dtype=np.int64, sep=" ")
                mags = np.fromstring(row[2], dtype=np.int64, sep=" ")
                a[idx] = mags * delta_a
            codes.append(SparseCode.from_coefficients(a, delta_a))
    return codes
