"""Wavelet leaders, p-leaders, restricted p-leaders and structure functions.

For ``lam`` at scale ``j`` with neighbourhood ``3 lam`` (itself and its two
periodic neighbours)::

    l_lam     = sup_{j' >= j} max_{lam' in 3lam, scale j'} |c_lam'|
    l_lam^(p) = sup_{j' >= j} (sum_{lam' in 3lam, scale j'} |c_lam'|^p 2^-(j'-j))^(1/p)
    e_lam^(p) = same as l_lam^(p) with 3lam replaced by lam

The suprema are truncated at the finest available scale ``J``, which biases
leaders of coarse nodes downwards only through missing finer scales; nodes
near ``J`` see very few depths, so downstream estimators keep a margin of a
couple of scales below ``J``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dyadic import CoefficientTree, DomainError

__all__ = [
    "LeaderField",
    "StructureFunction",
    "compute_restricted_p_leaders",
    "compute_p_leaders",
    "compute_leaders_inf",
    "compute_leaders",
    "structure_function",
]

KINDS = ("classical_leader_inf", "p_leader", "restricted_p_leader")

# log2 magnitude of |c|**p beyond which the kernels switch to log2 arithmetic
LOG_DOMAIN_THRESHOLD = 700.0


@dataclass(frozen=True)
class LeaderField:
    kind: str
    p: float
    levels: tuple
    truncation_scale: int

    @property
    def max_scale(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, node) -> float:
        j, k = node
        return float(self.levels[j][k % (1 << j)])

    def as_tree(self) -> CoefficientTree:
        """View the field as a tree so it can reuse the tree serializers."""
        return CoefficientTree(self.levels)

    def sidecar(self) -> dict:
        return {"kind": self.kind, "p": "inf" if math.isinf(self.p) else self.p,
                "truncation_scale": self.truncation_scale}


@dataclass(frozen=True)
class StructureFunction:
    """``S_j(p) = 2^-j sum_k |c_{j,k}|^p`` for ``j = 1..J``.

    ``log2_values`` is computed with a max shift so it stays finite when the
    plain values under- or overflow; it is ``-inf`` exactly when a scale is
    all zero.
    """

    p: float
    scales: np.ndarray
    values: np.ndarray
    log2_values: np.ndarray


def _check_p(p, allow_inf=False):
    p = float(p)
    if math.isnan(p) or p <= 0 or (math.isinf(p) and not allow_inf):
        raise DomainError(f"p must be a positive finite real, got {p!r}")
    return p


def _needs_log_domain(tree: CoefficientTree, p: float) -> bool:
    flat = tree.flat()
    nz = flat[flat > 0]
    if nz.size == 0:
        return False
    return p * float(np.max(np.abs(np.log2(nz)))) > LOG_DOMAIN_THRESHOLD


def _powered_fields(tree: CoefficientTree, p: float):
    levels = list(tree.levels)
    if _needs_log_domain(tree, p):
        restricted, neigh = kernels.leader_log_powers(levels, p)
        conv = lambda a: np.exp2(a / p)
    else:
        restricted, neigh = kernels.leader_powers(levels, p)
        conv = lambda a: a ** (1.0 / p)
    return [conv(a) for a in restricted], [conv(a) for a in neigh]


def _field(kind, p, levels, J):
    out = []
    for a in levels:
        a = np.asarray(a, dtype=np.float64)
        a.setflags(write=False)
        out.append(a)
    return LeaderField(kind, p, tuple(out), J)


def compute_restricted_p_leaders(tree: CoefficientTree, p: float) -> LeaderField:
    """Restricted p-leaders ``e^(p)`` on every node of ``tree``."""
    p = _check_p(p)
    restricted, _ = _powered_fields(tree, p)
    return _field("restricted_p_leader", p, restricted, tree.max_scale)


def compute_p_leaders(tree: CoefficientTree, p: float) -> LeaderField:
    """p-leaders ``l^(p)`` computed from the ``3 lam`` descendant sums.

    The depth maximum is taken after summing the three neighbour subtrees,
    which is the defining formula; it coincides with
    ``sum_mu (e_mu^(p))^p`` only when the three subtrees peak at a common
    depth.
    """
    p = _check_p(p)
    if tree.max_scale < 2:
        raise DomainError("p-leaders need max_scale >= 2")
    _, neigh = _powered_fields(tree, p)
    return _field("p_leader", p, neigh, tree.max_scale)


def compute_leaders_inf(tree: CoefficientTree) -> LeaderField:
    """Classical wavelet leaders (``p = +inf``)."""
    if tree.max_scale < 2:
        raise DomainError("leaders need max_scale >= 2")
    _, neigh = kernels.sup_leaders(list(tree.levels))
    return _field("classical_leader_inf", math.inf, neigh, tree.max_scale)


def compute_leaders(tree: CoefficientTree, p: float, restricted: bool = False) -> LeaderField:
    """Dispatch on ``p``: classical leaders for ``p = inf``, p-leaders otherwise.

    With ``restricted=True`` and ``p = inf`` the subtree maxima are returned
    (the restricted analogue of classical leaders).
    """
    p = _check_p(p, allow_inf=True)
    if math.isinf(p):
        if restricted:
            sub, _ = kernels.sup_leaders(list(tree.levels))
            return _field("restricted_p_leader", math.inf, sub, tree.max_scale)
        return compute_leaders_inf(tree)
    if restricted:
        return compute_restricted_p_leaders(tree, p)
    return compute_p_leaders(tree, p)


def structure_function(tree: CoefficientTree, p: float) -> StructureFunction:
    p = _check_p(p)
    scales = np.arange(1, tree.max_scale + 1)
    values = np.empty(scales.size)
    logs = np.empty(scales.size)
    for i, j in enumerate(scales):
        c = tree.levels[j]
        nz = c[c > 0]
        if nz.size == 0:
            values[i], logs[i] = 0.0, -np.inf
            continue
        lp = p * np.log2(nz)
        m = float(lp.max())
        logs[i] = m + math.log2(float(np.sum(np.exp2(lp - m)))) - j
        values[i] = math.ldexp(float(np.sum(nz ** p)), -int(j)) if m < 1000 else math.inf
    return StructureFunction(p, scales, values, logs)
