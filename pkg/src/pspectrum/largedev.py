"""Finite-scale large deviation estimators and the p-large deviation formalism.

Densities count, at each scale ``j`` of a window, the values ``v_{j,k}``
(coefficients or leaders) whose exponent ``x = -log2(v) / j`` lies within
``epsilon`` of a grid point ``alpha``::

    N_rho(j, alpha) = #{k : |x_{j,k} - alpha| <= epsilon}
    N_nu(j, alpha)  = #{k : x_{j,k} <= alpha + epsilon}

and aggregate ``log2 N / j`` over the window.  ``-inf`` stands for an empty
count.  Scale 0 is never counted.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dyadic import CoefficientTree, DomainError, node_containing
from .leaders import LeaderField, compute_leaders, structure_function

__all__ = [
    "RefusalError",
    "EstimationError",
    "LogHistogram",
    "DensityEstimate",
    "SpectrumCurve",
    "ScalingEstimate",
    "EmpiricalSpectrum",
    "default_window",
    "default_grid",
    "log_histogram",
    "estimate_density",
    "increasing_hull",
    "estimate_scaling",
    "formalism_D",
    "h_max",
    "pointwise_exponent",
    "empirical_spectrum",
]

NEG_INF = -math.inf
DEFAULT_EPSILON = 0.1
DEFAULT_GRID_POINTS = 512
DEFAULT_GRID_MAX = 2.5
AGGREGATIONS = ("max_over_scales", "regression")


class RefusalError(RuntimeError):
    """A guarded precondition of the theory does not hold for the input."""


class EstimationError(RuntimeError):
    """Too little data to form an estimate."""


def inv(p: float) -> float:
    """``1/p`` with the convention ``1/inf = 0``."""
    return 0.0 if math.isinf(p) else 1.0 / p


def default_window(J: int, margin: int = 2) -> tuple[int, int]:
    """``[ceil(J/2), J - margin]``, shrunk to stay non-empty and above 0."""
    j_max = max(1, J - margin)
    j_min = max(1, min(math.ceil(J / 2), j_max))
    return j_min, j_max


def default_grid(p: float, upper: float = DEFAULT_GRID_MAX,
                 n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(-inv(p) + 1e-3, upper, n)


def _check_window(window, J):
    j_min, j_max = int(window[0]), int(window[1])
    if j_min < 1 or j_max > J or j_min > j_max:
        raise DomainError(f"scale window [{j_min}, {j_max}] invalid for max scale {J}")
    return j_min, j_max


def _check_grid(grid):
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size == 0 or np.any(np.diff(g) < 0) or not np.all(np.isfinite(g)):
        raise DomainError("grid must be a non-empty sorted array of finite reals")
    return g


# --------------------------------------------------------------------------
# histograms and densities


@dataclass(frozen=True)
class LogHistogram:
    source: str
    epsilon: float
    alpha_grid: np.ndarray
    scales: np.ndarray
    n_rho: np.ndarray  # (n_scales, n_alpha)
    n_nu: np.ndarray


def _source_of(field_or_tree) -> tuple[str, tuple]:
    if isinstance(field_or_tree, CoefficientTree):
        return "coefficients", field_or_tree.levels
    if isinstance(field_or_tree, LeaderField):
        src = "restricted_p_leaders" if field_or_tree.kind == "restricted_p_leader" else "p_leaders"
        return src, field_or_tree.levels
    raise TypeError(f"expected CoefficientTree or LeaderField, got {type(field_or_tree).__name__}")


def scale_exponents(values: np.ndarray, j: int) -> np.ndarray:
    """Sorted finite exponents ``-log2(v)/j`` of the non-zero values."""
    v = np.asarray(values)
    v = v[v > 0]
    return np.sort(-np.log2(v) / j)


def log_histogram(field_or_tree, epsilon: float, alpha_grid, window) -> LogHistogram:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    grid = _check_grid(alpha_grid)
    source, levels = _source_of(field_or_tree)
    j_min, j_max = _check_window(window, len(levels) - 1)
    scales = np.arange(j_min, j_max + 1)
    n_rho = np.empty((scales.size, grid.size), dtype=np.int64)
    n_nu = np.empty_like(n_rho)
    for i, j in enumerate(scales):
        x = scale_exponents(levels[j], j)
        upper = np.searchsorted(x, grid + epsilon, side="right")
        lower = np.searchsorted(x, grid - epsilon, side="left")
        n_rho[i] = upper - lower
        n_nu[i] = upper
    return LogHistogram(source, float(epsilon), grid, scales, n_rho, n_nu)


def _aggregate(counts: np.ndarray, scales: np.ndarray, aggregation: str) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logs = np.log2(counts.astype(float))
    if aggregation == "max_over_scales":
        out = np.max(logs / scales[:, None], axis=0)
    elif aggregation == "regression":
        out = np.full(counts.shape[1], NEG_INF)
        for a in range(counts.shape[1]):
            ok = counts[:, a] > 0
            if np.count_nonzero(ok) >= 2:
                out[a] = np.polyfit(scales[ok], logs[ok, a], 1)[0]
    else:
        raise DomainError(f"unknown aggregation {aggregation!r}")
    finite = np.isfinite(out)
    out[finite] = np.clip(out[finite], 0.0, 1.0)
    return out


@dataclass(frozen=True)
class DensityEstimate:
    """Grid estimate of a wavelet density ``rho`` and profile ``nu``."""

    alpha_grid: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    epsilon: float
    aggregation: str
    window: tuple
    source: str = "coefficients"
    histogram: Optional[LogHistogram] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"alpha": self.alpha_grid.tolist(), "rho": _jsonable(self.rho),
                "nu": _jsonable(self.nu), "epsilon": self.epsilon,
                "aggregation": self.aggregation, "window": list(self.window),
                "source": self.source}


def estimate_density(field_or_tree, epsilon: float = DEFAULT_EPSILON, alpha_grid=None,
                     window=None, aggregation: str = "max_over_scales") -> DensityEstimate:
    """Estimate the density and profile of coefficients or leaders.

    ``aggregation='max_over_scales'`` takes ``max_j log2(N)/j`` over the
    window; ``'regression'`` takes the OLS slope of ``log2 N`` against ``j``
    over the scales with ``N > 0`` (``-inf`` with fewer than two), and the
    profile is then replaced by its running maximum so it stays monotone.
    Finite values are clamped to ``[0, 1]``.
    """
    _, levels = _source_of(field_or_tree)
    J = len(levels) - 1
    if window is None:
        window = default_window(J)
    if alpha_grid is None:
        alpha_grid = default_grid(math.inf)
    hist = log_histogram(field_or_tree, epsilon, alpha_grid, window)
    rho = _aggregate(hist.n_rho, hist.scales, aggregation)
    nu = _aggregate(hist.n_nu, hist.scales, aggregation)
    if aggregation == "regression":
        nu = increasing_hull(nu)
    return DensityEstimate(hist.alpha_grid, rho, nu, hist.epsilon, aggregation,
                           (int(hist.scales[0]), int(hist.scales[-1])), hist.source, hist)


def increasing_hull(values) -> np.ndarray:
    """Running maximum; ``-inf`` persists until the first finite value."""
    if isinstance(values, DensityEstimate):
        values = values.rho
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v.copy()
    return np.maximum.accumulate(v)


# --------------------------------------------------------------------------
# scaling function


@dataclass(frozen=True)
class ScalingEstimate:
    p_grid: np.ndarray
    eta: np.ndarray
    p0: float
    method: str
    window: tuple
    p0_bracketed: bool = True

    def to_json(self) -> dict:
        return {"p": self.p_grid.tolist(), "eta": _jsonable(self.eta), "p0": _num(self.p0),
                "method": self.method, "window": list(self.window),
                "p0_bracketed": self.p0_bracketed}


def _eta_hat(tree: CoefficientTree, p: float, window, method: str) -> float:
    sf = structure_function(tree, p)
    j_min, j_max = window
    sel = (sf.scales >= j_min) & (sf.scales <= j_max)
    scales = sf.scales[sel].astype(float)
    neg_log = -sf.log2_values[sel]
    ok = np.isfinite(neg_log)
    if not np.any(ok):
        return math.inf
    if np.count_nonzero(ok) < 3:
        raise EstimationError(f"only {np.count_nonzero(ok)} scales with S_j(p) > 0 in the window")
    if method == "regression":
        return float(np.polyfit(scales[ok], neg_log[ok], 1)[0])
    if method == "min":
        return float(np.min(neg_log[ok] / scales[ok]))
    raise DomainError(f"unknown scaling method {method!r}")


def estimate_scaling(tree: CoefficientTree, p_grid: Sequence[float] = (0.5, 1, 2, 4, 8),
                     window=None, method: str = "regression", p0_tol: float = 1e-3) -> ScalingEstimate:
    """Estimate the scaling function and the critical exponent ``p0``.

    ``method='regression'`` uses the OLS slope of ``-log2 S_j(p)`` against
    ``j``; ``'min'`` uses ``min_j -log2 S_j(p) / j``.  ``p0`` is refined by
    bisection between the last positive and the first non-positive grid
    point.  An all-zero window yields ``eta = +inf`` and ``p0 = +inf``.
    """
    p_grid = np.asarray(sorted(float(p) for p in p_grid))
    if p_grid.size == 0 or p_grid[0] <= 0:
        raise DomainError("p grid must be non-empty and positive")
    window = _check_window(window if window is not None else default_window(tree.max_scale),
                           tree.max_scale)
    eta = np.array([_eta_hat(tree, p, window, method) for p in p_grid])
    positive = eta > 0
    if positive.all():
        return ScalingEstimate(p_grid, eta, math.inf, method, window, p0_bracketed=False)
    first_bad = int(np.argmin(positive))
    if first_bad == 0:
        return ScalingEstimate(p_grid, eta, 0.0, method, window, p0_bracketed=False)
    lo, hi = p_grid[first_bad - 1], p_grid[first_bad]
    while hi - lo > p0_tol:
        mid = 0.5 * (lo + hi)
        if _eta_hat(tree, mid, window, method) > 0:
            lo = mid
        else:
            hi = mid
    return ScalingEstimate(p_grid, eta, 0.5 * (lo + hi), method, window)


# --------------------------------------------------------------------------
# formalism


@dataclass(frozen=True)
class SpectrumCurve:
    p: float
    h: np.ndarray
    D: np.ndarray
    h_min: float
    h_max: float
    provenance: str
    label: str = ""
    extras: dict = field(default_factory=dict)

    def support(self) -> tuple[float, float]:
        finite = np.isfinite(self.D)
        if not finite.any():
            return (math.nan, math.nan)
        return float(self.h[finite][0]), float(self.h[finite][-1])

    def to_json(self) -> dict:
        doc = {"p": _num(self.p), "h": self.h.tolist(), "D": _jsonable(self.D),
               "h_min": _num(self.h_min), "h_max": _num(self.h_max),
               "provenance": self.provenance, "label": self.label}
        doc.update({k: _num(v) if isinstance(v, float) else v for k, v in self.extras.items()})
        return doc

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "D"])
        for h, d in zip(self.h, self.D):
            w.writerow([repr(float(h)), repr(float(d))])
        return buf.getvalue()


def _density_arrays(rho):
    if isinstance(rho, DensityEstimate):
        return rho.alpha_grid, rho.rho
    alpha, values = rho
    alpha = _check_grid(alpha)
    values = np.asarray(values, dtype=float)
    if values.shape != alpha.shape:
        raise DomainError("density values and grid differ in length")
    return alpha, values


def _best_ratio(alpha, values, p):
    """Running max over the grid of ``rho(a) / (a + 1/p)`` for ``a > -1/p``."""
    shift = inv(p)
    ok = np.isfinite(values) & (alpha + shift > 0)
    ratio = np.full(alpha.shape, NEG_INF)
    ratio[ok] = values[ok] / (alpha[ok] + shift)
    return np.maximum.accumulate(ratio)


def formalism_D(rho, p: float, h_grid) -> SpectrumCurve:
    """Evaluate ``D(h) = min(1, (h + 1/p) sup_{-1/p < a <= h} rho(a) / (a + 1/p))``.

    ``rho`` is a :class:`DensityEstimate` or an ``(alpha_grid, values)``
    pair; the supremum runs over grid points only.  An empty supremum gives
    ``-inf``.
    """
    alpha, values = _density_arrays(rho)
    h = _check_grid(h_grid)
    shift = inv(p)
    if h[0] <= -shift:
        raise DomainError(f"h grid must lie above -1/p = {-shift}")
    best = _best_ratio(alpha, values, p)
    idx = np.searchsorted(alpha, h, side="right") - 1
    D = np.full(h.shape, NEG_INF)
    has = idx >= 0
    sup = np.where(has, best[np.clip(idx, 0, None)], NEG_INF)
    fin = np.isfinite(sup)
    D[fin] = np.minimum((h[fin] + shift) * sup[fin], 1.0)
    finite_alpha = alpha[np.isfinite(values) & (alpha + shift > 0)]
    hmin = float(finite_alpha[0]) if finite_alpha.size else math.nan
    return SpectrumCurve(p, h, D, hmin, h_max(rho, p), "empirical"
                         if isinstance(rho, DensityEstimate) else "theoretical",
                         label="formalism")


def _D_at(alpha, best, p, h):
    i = int(np.searchsorted(alpha, h, side="right")) - 1
    if i < 0 or not math.isfinite(best[i]):
        return NEG_INF
    return min((h + inv(p)) * float(best[i]), 1.0)


def h_max(rho, p: float, xtol: float = 1e-9) -> float:
    """Smallest ``h`` with ``D(h) = 1``, by bisection on the monotone curve.

    Returns ``+inf`` (with a warning) when the density never drives ``D``
    to 1, i.e. when every finite density value is 0.
    """
    alpha, values = _density_arrays(rho)
    best = _best_ratio(alpha, values, p)
    fin = np.isfinite(best)
    if not fin.any() or best[fin][-1] <= 0:
        warnings.warn("formalism never reaches 1; h_max reported as +inf", RuntimeWarning)
        return math.inf
    lo = float(alpha[np.argmax(fin)])
    if _D_at(alpha, best, p, lo) >= 1.0:
        return lo
    # beyond the last grid point the ratio is frozen, so D = 1 by this h
    hi = max(lo, 1.0 / float(best[fin][-1]) - inv(p), float(alpha[-1]))
    while math.isfinite(hi) and _D_at(alpha, best, p, hi) < 1.0:
        hi = hi + max(1.0, abs(hi))
    if not math.isfinite(hi):
        warnings.warn("h_max beyond float range; reported as +inf", RuntimeWarning)
        return math.inf
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break  # float resolution reached
        if _D_at(alpha, best, p, mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# pointwise exponents


def pointwise_exponent(field: LeaderField, x0: float, window=None, method: str = "min",
                       tree: Optional[CoefficientTree] = None) -> float:
    """Pointwise exponent at ``x0`` from the leaders of the nodes containing it.

    ``method='min'`` returns ``min_j -log2(l_j)/j`` over the window (a
    zero leader contributes ``+inf``); ``'regression'`` the OLS slope of
    ``-log2 l_j`` against ``j`` over scales with non-zero leaders.  When
    ``tree`` is given and ``p`` is finite, the scaling function is checked
    first and non-positive estimates are refused.
    """
    J = field.max_scale
    window = _check_window(window if window is not None else default_window(J), J)
    if tree is not None and not math.isinf(field.p):
        eta = _eta_hat(tree, field.p, window, "regression")
        if not eta > 0:
            raise RefusalError(
                f"p-exponent characterization not valid: estimated eta_f({field.p}) = {eta:.4g} <= 0")
    scales = np.arange(window[0], window[1] + 1)
    vals = np.array([field[node_containing(x0, int(j))] for j in scales])
    with np.errstate(divide="ignore"):
        ratio = -np.log2(vals) / scales
    if method == "min":
        return float(np.min(ratio))
    if method == "regression":
        ok = vals > 0
        if np.count_nonzero(ok) < 2:
            return math.inf
        return float(np.polyfit(scales[ok], -np.log2(vals[ok]), 1)[0])
    raise DomainError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# empirical spectrum


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """The two empirical routes to the p-spectrum of one tree.

    ``leader`` is the large deviation spectrum of restricted p-leaders
    (classical leaders for ``p = inf``); ``formalism`` applies
    :func:`formalism_D` to the coefficient density.
    """

    leader: SpectrumCurve
    formalism: SpectrumCurve
    coefficient_density: DensityEstimate
    leader_density: DensityEstimate
    scaling: Optional[ScalingEstimate]


def empirical_spectrum(tree: CoefficientTree, p: float, epsilon: float = DEFAULT_EPSILON,
                       window=None, h_grid=None, alpha_grid=None,
                       aggregation: str = "max_over_scales",
                       leader_window=None, leader_epsilon=None) -> EmpiricalSpectrum:
    """Both empirical spectrum estimates for ``tree`` at exponent ``p``.

    ``window`` applies to the coefficient density and the scaling function;
    ``leader_window`` and ``leader_epsilon`` (defaults: ``window`` and
    ``epsilon``) to the leader density.  A finite ``p`` strictly beyond
    the estimated critical exponent (``eta_f(p) < 0``) is refused.
    """
    p = float(p)
    if window is None:
        window = default_window(tree.max_scale)
    leader_window = window if leader_window is None else leader_window
    leader_epsilon = epsilon if leader_epsilon is None else leader_epsilon
    if h_grid is None:
        h_grid = default_grid(p)
    if alpha_grid is None:
        alpha_grid = default_grid(p, upper=float(np.max(h_grid)))
    scaling = None
    h_min_scaling = math.nan
    if not math.isinf(p):
        scaling = estimate_scaling(tree, [p], window)
        eta = float(scaling.eta[0])
        if math.isnan(eta) or eta < 0:
            raise RefusalError(
                f"p = {p} is beyond the estimated critical exponent (eta_f(p) = {eta:.4g} < 0)")
        h_min_scaling = eta / p - 1.0 / p if math.isfinite(eta) else math.inf
    coef = estimate_density(tree, epsilon, alpha_grid, window, aggregation)
    formalism = formalism_D(coef, p, h_grid)
    leaders = compute_leaders(tree, p, restricted=not math.isinf(p))
    lead = estimate_density(leaders, leader_epsilon, h_grid, leader_window, aggregation)
    lead_curve = SpectrumCurve(p, lead.alpha_grid, lead.rho.copy(), _first_finite(lead),
                               _first_at_one(lead), "empirical", label="leader_large_deviation")
    extras = {"h_min_scaling": h_min_scaling, "h_min_grid": formalism.h_min}
    formalism = SpectrumCurve(p, formalism.h, formalism.D, formalism.h_min, formalism.h_max,
                              "empirical", "formalism", extras)
    return EmpiricalSpectrum(lead_curve, formalism, coef, lead, scaling)


def _first_at_one(est: DensityEstimate) -> float:
    full = est.rho >= 1.0
    return float(est.alpha_grid[np.argmax(full)]) if full.any() else math.inf


def _first_finite(est: DensityEstimate) -> float:
    fin = np.isfinite(est.rho)
    return float(est.alpha_grid[np.argmax(fin)]) if fin.any() else math.nan


# --------------------------------------------------------------------------
# json helpers


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return None
    return x


def _jsonable(arr) -> list:
    return [_num(v) for v in np.asarray(arr, dtype=float)]


def dumps(obj) -> str:
    return json.dumps(obj, indent=2)
