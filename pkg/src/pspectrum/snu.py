"""Admissible profiles, membership diagnostics and associated random series.

A profile ``nu`` is a non-decreasing map to ``{-inf} U [0, 1]`` that is
``-inf`` below ``alpha_min``.  It is stored by knots and either held
constant from each knot to the next (``right-constant``) or interpolated
linearly (``linear``); beyond the last knot it stays constant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import CoefficientTree, DomainError
from .largedev import (
    DEFAULT_EPSILON,
    RefusalError,
    _jsonable,
    default_window,
    estimate_density,
)
from .rws import ProfileAssociated

__all__ = [
    "AdmissibleProfile",
    "MembershipReport",
    "p_nu",
    "membership_diagnostic",
    "associated_rws",
]

INTERPOLATIONS = ("right-constant", "linear")
DEFAULT_RESOLUTION = 64
DEFAULT_SPAN = 4.0


class AdmissibleProfile:
    """Piecewise constant or piecewise linear profile.

    Parameters
    ----------
    alpha_min : float
        Left end of the support; ``nu = -inf`` strictly below it.
    knots : sequence of (alpha, nu)
        Strictly increasing abscissae, all ``>= alpha_min``, with
        non-decreasing values in ``[0, 1]``.  When the first knot lies
        right of ``alpha_min`` its value is extended down to ``alpha_min``.
    interpolation : {'right-constant', 'linear'}
    """

    def __init__(self, alpha_min: float, knots, interpolation: str = "right-constant"):
        alpha_min = float(alpha_min)
        if not math.isfinite(alpha_min):
            raise DomainError(f"alpha_min must be finite, got {alpha_min}")
        if interpolation not in INTERPOLATIONS:
            raise DomainError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
        k = np.asarray(knots, dtype=float).reshape(-1, 2) if len(knots) else np.empty((0, 2))
        if k.shape[0] == 0:
            raise DomainError("a profile needs at least one knot")
        a, v = k[:, 0], k[:, 1]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise DomainError("knots must be finite")
        if a[0] < alpha_min:
            raise DomainError(f"knot at {a[0]} lies below alpha_min = {alpha_min}")
        if np.any(np.diff(a) <= 0):
            raise DomainError("knot abscissae must be strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise DomainError("profile values must lie in [0, 1]")
        if np.any(np.diff(v) < 0):
            raise DomainError("profile must be non-decreasing")
        if a[0] > alpha_min:
            a = np.concatenate([[alpha_min], a])
            v = np.concatenate([[v[0]], v])
        self.alpha_min = alpha_min
        self.alphas = a
        self.values = v
        self.interpolation = interpolation
        self._input_knots = k

    def __call__(self, alpha) -> np.ndarray:
        x = np.atleast_1d(np.asarray(alpha, dtype=float))
        if self.interpolation == "linear":
            out = np.interp(x, self.alphas, self.values)
        else:
            idx = np.searchsorted(self.alphas, x, side="right") - 1
            out = self.values[np.clip(idx, 0, None)]
        return np.where(x < self.alpha_min, -np.inf, out)

    def left_limit(self, alpha: float) -> float:
        """``nu(alpha-)``; differs from ``nu(alpha)`` only at right-constant jumps."""
        if alpha <= self.alpha_min:
            return -math.inf
        if self.interpolation == "linear":
            return float(self(alpha)[0])
        idx = np.searchsorted(self.alphas, alpha, side="left") - 1
        return float(self.values[idx])

    @property
    def knots(self) -> list:
        return [[float(a), float(v)] for a, v in zip(self.alphas, self.values)]

    def to_json(self) -> dict:
        return {"alpha_min": self.alpha_min, "knots": self.knots,
                "interpolation": self.interpolation}

    @classmethod
    def from_json(cls, doc) -> "AdmissibleProfile":
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        try:
            return cls(doc["alpha_min"], doc["knots"], doc.get("interpolation", "right-constant"))
        except KeyError as exc:
            raise DomainError(f"profile is missing field {exc.args[0]!r}") from None

    def __repr__(self):
        return (f"AdmissibleProfile(alpha_min={self.alpha_min}, knots={self.knots}, "
                f"interpolation={self.interpolation!r})")


def p_nu(profile: AdmissibleProfile) -> float:
    """Integrability index ``inf_{alpha in [alpha_min, 0)} (nu(alpha) - 1) / alpha``.

    On each piece ``nu`` is affine, so the ratio is monotone there and its
    infimum is an endpoint value (a left limit at right-constant jumps).
    Near ``0-`` the ratio blows up to ``+inf`` because ``nu(0) < 1``.
    Empty range (``alpha_min >= 0``) gives ``+inf``.
    """
    if profile.alpha_min <= 0 and float(profile(0.0)[0]) >= 1.0:
        raise RefusalError("p_nu needs nu(0) < 1 when alpha_min <= 0")
    if profile.alpha_min >= 0:
        return math.inf
    best = math.inf
    for a in profile.alphas:
        if a >= 0:
            break
        best = min(best, (float(profile(a)[0]) - 1.0) / a)
        left = profile.left_limit(a)
        if math.isfinite(left):
            best = min(best, (left - 1.0) / a)
    return best


@dataclass(frozen=True)
class MembershipReport:
    """Finite-scale consistency check of a tree against a profile.

    Not a decision procedure: membership is an asymptotic property.
    ``excess`` is ``max_alpha (nu_hat(alpha) - nu(alpha + epsilon))``; the
    shift matches the ``x <= alpha + epsilon`` count behind ``nu_hat``.
    """

    alpha_grid: np.ndarray
    nu_hat: np.ndarray
    nu: np.ndarray
    excess: float
    worst_alpha: float
    slack: float
    epsilon: float
    window: tuple

    @property
    def consistent(self) -> bool:
        return self.excess <= self.slack

    @property
    def verdict(self) -> str:
        return "consistent with membership" if self.consistent else "inconsistent"

    def to_json(self) -> dict:
        return {"kind": "finite-scale diagnostic", "verdict": self.verdict,
                "excess": _jsonable([self.excess])[0], "worst_alpha": _jsonable([self.worst_alpha])[0],
                "slack": self.slack, "epsilon": self.epsilon, "window": list(self.window),
                "alpha": self.alpha_grid.tolist(), "nu_hat": _jsonable(self.nu_hat),
                "nu": _jsonable(self.nu)}


def _diagnostic_grid(profile: AdmissibleProfile) -> np.ndarray:
    lo = min(profile.alpha_min, 0.0) - 1.0
    hi = max(profile.alphas[-1], profile.alpha_min) + 2.0
    return np.linspace(lo, hi, 512)


def membership_diagnostic(tree: CoefficientTree, profile: AdmissibleProfile,
                          epsilon: float = DEFAULT_EPSILON, window=None, slack: float = 0.1,
                          alpha_grid=None, aggregation: str = "max_over_scales") -> MembershipReport:
    """Compare the empirical profile of ``tree`` with ``profile``."""
    if window is None:
        window = default_window(tree.max_scale)
    grid = _diagnostic_grid(profile) if alpha_grid is None else np.asarray(alpha_grid, float)
    est = estimate_density(tree, epsilon, grid, window, aggregation)
    target = profile(est.alpha_grid + epsilon)
    with np.errstate(invalid="ignore"):
        diff = est.nu - target
    diff = np.where(np.isnan(diff), -np.inf, diff)
    i = int(np.argmax(diff))
    return MembershipReport(est.alpha_grid, est.nu, target, float(diff[i]),
                            float(est.alpha_grid[i]), float(slack), float(epsilon), est.window)


def associated_rws(profile: AdmissibleProfile, resolution: int = DEFAULT_RESOLUTION) -> ProfileAssociated:
    """Atomic law whose cumulative masses follow ``profile``.

    Atoms sit on ``resolution`` equispaced points of
    ``[alpha_min, alpha_min + 4]`` together with the profile knots.  At
    scale ``j`` the mass up to ``alpha_i`` is
    ``min(1, max(j^2 2^-j, 2^((nu(alpha_i) - 1) j)))``.
    """
    if resolution < 1:
        raise DomainError(f"resolution must be >= 1, got {resolution}")
    v = profile.values
    if profile.interpolation == "right-constant" or v.size == 1:
        flat_zero = v[0] <= 0
    else:
        flat_zero = v[1] <= 0
    if flat_zero:
        raise RefusalError("profile must be positive right of alpha_min")
    grid = np.linspace(profile.alpha_min, profile.alpha_min + DEFAULT_SPAN, resolution)
    grid = np.union1d(grid, profile.alphas)
    return ProfileAssociated(grid, profile(grid), profile)
