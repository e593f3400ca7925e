"""Pure numpy implementations of the dyadic-tree leader kernels.

All kernels take ``levels``, a list of 1-D float64 arrays with
``len(levels[j]) == 2**j``, and return one array per scale.

For a node ``lam`` at scale ``j`` and a depth ``d`` let
``T_lam(d) = 2^-d * sum |c|^p`` over the ``2**d`` descendants of ``lam`` at
scale ``j + d``.  Each source scale is pushed up the tree once with the
pairwise recurrence ``T_lam(d) = (T_left(d-1) + T_right(d-1)) / 2``, so the
total work is ``O(J 2^J)``.
"""
import numpy as np


def _neighbour_sum(a):
    n = a.size
    if n == 1:
        return a.copy()
    if n == 2:
        s = a[0] + a[1]
        return np.array([s, s])
    return (a + np.roll(a, 1)) + np.roll(a, -1)


def _neighbour_logsum(a):
    n = a.size
    if n == 1:
        return a.copy()
    if n == 2:
        s = np.logaddexp2(a[0], a[1])
        return np.array([s, s])
    return np.logaddexp2(np.logaddexp2(a, np.roll(a, 1)), np.roll(a, -1))


def leader_powers(levels, p):
    """Depth-maximised p-th power sums, linear domain.

    Returns ``(restricted, neighbourhood)`` where ``restricted[j][k]`` is
    ``max_d T_(j,k)(d)`` and ``neighbourhood[j][k]`` is
    ``max_d sum_{mu in N(j,k)} T_mu(d)``.
    """
    J = len(levels) - 1
    restricted = [np.zeros(1 << j) for j in range(J + 1)]
    neigh = [np.zeros(1 << j) for j in range(J + 1)]
    for js in range(J, -1, -1):
        a = np.asarray(levels[js], dtype=np.float64) ** p
        for j in range(js, -1, -1):
            np.maximum(restricted[j], a, out=restricted[j])
            np.maximum(neigh[j], _neighbour_sum(a), out=neigh[j])
            if j:
                a = (a[0::2] + a[1::2]) * 0.5
    return restricted, neigh


def leader_log_powers(levels, p):
    """Same as :func:`leader_powers` but carried as ``log2`` values.

    Zero sums are ``-inf``.  Used when ``|c|**p`` would leave the float64
    exponent range.
    """
    J = len(levels) - 1
    restricted = [np.full(1 << j, -np.inf) for j in range(J + 1)]
    neigh = [np.full(1 << j, -np.inf) for j in range(J + 1)]
    with np.errstate(divide="ignore"):
        for js in range(J, -1, -1):
            a = p * np.log2(np.asarray(levels[js], dtype=np.float64))
            for j in range(js, -1, -1):
                np.maximum(restricted[j], a, out=restricted[j])
                np.maximum(neigh[j], _neighbour_logsum(a), out=neigh[j])
                if j:
                    a = np.logaddexp2(a[0::2], a[1::2]) - 1.0
    return restricted, neigh


def sup_leaders(levels):
    """Subtree maxima and 3-neighbourhood maxima of ``|c|`` (p = +inf)."""
    J = len(levels) - 1
    sub = [None] * (J + 1)
    below = np.asarray(levels[J], dtype=np.float64).copy()
    sub[J] = below
    for j in range(J - 1, -1, -1):
        below = np.maximum(np.asarray(levels[j], dtype=np.float64),
                           np.maximum(below[0::2], below[1::2]))
        sub[j] = below
    neigh = []
    for a in sub:
        if a.size <= 2:
            neigh.append(np.full(a.size, a.max()))
        else:
            neigh.append(np.maximum(np.maximum(a, np.roll(a, 1)), np.roll(a, -1)))
    return sub, neigh
