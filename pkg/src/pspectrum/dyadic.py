"""Dyadic-tree container for wavelet coefficient magnitudes.

Scale ``j`` holds ``2**j`` magnitudes ``|c_{j,k}|``; positions are periodic
modulo ``2**j``.  Node ``(j, k)`` covers the dyadic interval
``[k 2^-j, (k+1) 2^-j)`` and has children ``(j+1, 2k)`` and ``(j+1, 2k+1)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "CoefficientTree",
    "NodeRef",
    "DomainError",
    "TreeParseError",
    "node_containing",
    "read_tree",
    "write_tree",
    "dwt_forward",
    "dwt_inverse",
    "dwt_front_end",
    "tree_to_dwt",
    "FILTERS",
    "FORMATS",
]

MAGIC = b"MFA1"
FORMATS = ("binary", "json", "csv")


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class TreeParseError(ValueError):
    """A serialized tree is malformed."""


class NodeRef(NamedTuple):
    j: int
    k: int

    def children(self) -> tuple["NodeRef", "NodeRef"]:
        return NodeRef(self.j + 1, 2 * self.k), NodeRef(self.j + 1, 2 * self.k + 1)

    def parent(self) -> "NodeRef":
        if self.j == 0:
            raise DomainError("the root has no parent")
        return NodeRef(self.j - 1, self.k // 2)

    def neighbours(self) -> tuple["NodeRef", ...]:
        """Distinct members of ``{k-1, k, k+1} mod 2**j`` at the same scale.

        At ``j = 0`` the three positions coincide and at ``j = 1`` two of them
        do, so the result has 1, 2 or 3 entries.
        """
        n = 1 << self.j
        out = []
        for dk in (-1, 0, 1):
            ref = NodeRef(self.j, (self.k + dk) % n)
            if ref not in out:
                out.append(ref)
        return tuple(out)


def node_containing(x0: float, j: int, max_scale: Optional[int] = None) -> NodeRef:
    """Return the scale-``j`` node whose dyadic interval contains ``x0``."""
    if not (0.0 <= x0 < 1.0):
        raise DomainError(f"x0 must lie in [0, 1), got {x0!r}")
    if j < 0 or (max_scale is not None and j > max_scale):
        raise DomainError(f"scale {j} outside 0..{max_scale}")
    k = math.floor(x0 * (1 << j))
    # x0 * 2**j is exact for binary floats, so no correction is needed
    return NodeRef(j, int(k))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CoefficientTree:
    """Magnitudes on the full dyadic tree up to ``max_scale``.

    Parameters
    ----------
    levels : sequence of array_like
        ``levels[j]`` holds the ``2**j`` magnitudes of scale ``j``.
    signs : sequence of array_like of bool, optional
        ``True`` marks a negative coefficient.  Carried for round-tripping
        only; every analysis works on magnitudes.
    """

    levels: tuple
    signs: Optional[tuple] = None

    def __init__(self, levels: Sequence, signs: Optional[Sequence] = None):
        if len(levels) < 1:
            raise DomainError("a tree needs at least the root level")
        lv = []
        for j, arr in enumerate(levels):
            a = np.array(arr, dtype=np.float64).reshape(-1)
            if a.size != (1 << j):
                raise TreeParseError(f"level {j} expected {1 << j} nodes, got {a.size}")
            bad = np.flatnonzero(~np.isfinite(a) | (a < 0))
            if bad.size:
                raise TreeParseError(
                    f"invalid magnitude {a[bad[0]]!r} at scale {j}, offset {int(bad[0])}"
                )
            lv.append(_freeze(a))
        object.__setattr__(self, "levels", tuple(lv))
        if signs is not None:
            sg = []
            for j, arr in enumerate(signs):
                s = np.array(arr, dtype=bool).reshape(-1)
                if s.size != (1 << j):
                    raise TreeParseError(f"sign level {j} expected {1 << j} nodes, got {s.size}")
                sg.append(_freeze(s))
            if len(sg) != len(lv):
                raise TreeParseError("sign levels do not match magnitude levels")
            signs = tuple(sg)
        object.__setattr__(self, "signs", signs)

    @property
    def max_scale(self) -> int:
        return len(self.levels) - 1

    @property
    def n_nodes(self) -> int:
        return (1 << (self.max_scale + 1)) - 1

    def __getitem__(self, node) -> float:
        j, k = node
        return float(self.levels[j][k % (1 << j)])

    def flat(self) -> np.ndarray:
        return np.concatenate(self.levels)

    def signed_levels(self) -> list:
        if self.signs is None:
            return [np.array(a) for a in self.levels]
        return [np.where(s, -a, a) for a, s in zip(self.levels, self.signs)]

    @classmethod
    def from_flat(cls, values, max_scale: int, signs=None) -> "CoefficientTree":
        values = np.asarray(values, dtype=np.float64)
        return cls(_split_levels(values, max_scale),
                   None if signs is None else _split_levels(np.asarray(signs), max_scale))

    @classmethod
    def zeros(cls, max_scale: int) -> "CoefficientTree":
        return cls([np.zeros(1 << j) for j in range(max_scale + 1)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientTree) or other.max_scale != self.max_scale:
            return False
        if any(not np.array_equal(a, b) for a, b in zip(self.levels, other.levels)):
            return False
        if (self.signs is None) != (other.signs is None):
            return False
        if self.signs is not None:
            return all(np.array_equal(a, b) for a, b in zip(self.signs, other.signs))
        return True

    __hash__ = None

    def __repr__(self) -> str:
        return f"CoefficientTree(max_scale={self.max_scale}, signs={self.signs is not None})"


def _split_levels(values: np.ndarray, max_scale: int) -> list:
    out, start = [], 0
    for j in range(max_scale + 1):
        n = 1 << j
        chunk = values[start:start + n]
        if chunk.size != n:
            raise TreeParseError(f"level {j} expected {n} nodes, got {chunk.size}")
        out.append(chunk)
        start += n
    if start != values.size:
        raise TreeParseError(f"{values.size - start} trailing values after level {max_scale}")
    return out


# --------------------------------------------------------------------------
# serialization


def write_tree(tree: CoefficientTree, fmt: str = "binary") -> bytes:
    """Serialize ``tree`` to bytes in one of :data:`FORMATS`."""
    if fmt == "binary":
        flags = 1 if tree.signs is not None else 0
        parts = [MAGIC, struct.pack("<IB", tree.max_scale, flags),
                 tree.flat().astype("<f8").tobytes()]
        if tree.signs is not None:
            parts.append(np.packbits(np.concatenate(tree.signs), bitorder="little").tobytes())
        return b"".join(parts)
    if fmt == "json":
        doc = {"J": tree.max_scale, "levels": [a.tolist() for a in tree.levels]}
        if tree.signs is not None:
            doc["signs"] = [s.astype(int).tolist() for s in tree.signs]
        return json.dumps(doc).encode()
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("j,k,value\n")
        for j, a in enumerate(tree.signed_levels()):
            for k, v in enumerate(a):
                buf.write(f"{j},{k},{float(v)!r}\n")
        return buf.getvalue().encode()
    raise DomainError(f"unknown format {fmt!r}")


def read_tree(source, fmt: str = "binary") -> CoefficientTree:
    """Parse a tree from bytes or a binary file object."""
    data = source.read() if hasattr(source, "read") else bytes(source)
    if fmt == "binary":
        return _read_binary(data)
    if fmt == "json":
        return _read_json(data)
    if fmt == "csv":
        return _read_csv(data)
    raise DomainError(f"unknown format {fmt!r}")


def _read_binary(data: bytes) -> CoefficientTree:
    if len(data) < 9 or data[:4] != MAGIC:
        raise TreeParseError("bad header: missing MFA1 magic")
    J, flags = struct.unpack_from("<IB", data, 4)
    if J > 40:
        raise TreeParseError(f"bad header: implausible max scale {J}")
    body = data[9:]
    n_total = (1 << (J + 1)) - 1
    n_avail = len(body) // 8
    values = np.frombuffer(body[:8 * min(n_avail, n_total)], dtype="<f8").astype(np.float64)
    if n_avail < n_total:
        _split_levels(values, J)  # raises with the offending level
    levels = _split_levels(values, J)
    signs = None
    rest = body[8 * n_total:]
    if flags & 1:
        nbytes = (n_total + 7) // 8
        if len(rest) != nbytes:
            raise TreeParseError(f"sign block expected {nbytes} bytes, got {len(rest)}")
        bits = np.unpackbits(np.frombuffer(rest, dtype=np.uint8), bitorder="little")[:n_total]
        signs = _split_levels(bits.astype(bool), J)
    elif rest:
        raise TreeParseError(f"{len(rest)} trailing bytes after level {J}")
    return CoefficientTree(levels, signs)


def _read_json(data: bytes) -> CoefficientTree:
    try:
        doc = json.loads(data)
        J = int(doc["J"])
        levels = doc["levels"]
    except (ValueError, KeyError, TypeError) as exc:
        raise TreeParseError(f"bad header: {exc}") from exc
    if len(levels) != J + 1:
        raise TreeParseError(f"expected {J + 1} levels, got {len(levels)}")
    for j, lv in enumerate(levels):
        if len(lv) != (1 << j):
            raise TreeParseError(f"level {j} expected {1 << j} nodes, got {len(lv)}")
    signs = doc.get("signs")
    return CoefficientTree([np.array(lv, dtype=float) for lv in levels], signs)


def _read_csv(data: bytes) -> CoefficientTree:
    rows = list(csv.reader(io.StringIO(data.decode())))
    if not rows or [c.strip() for c in rows[0]] != ["j", "k", "value"]:
        raise TreeParseError("bad header: expected 'j,k,value'")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            entries.append((int(row[0]), int(row[1]), float(row[2])))
        except (ValueError, IndexError) as exc:
            raise TreeParseError(f"line {lineno}: {exc}") from exc
    if not entries:
        raise TreeParseError("no nodes")
    J = max(e[0] for e in entries)
    values = [np.full(1 << j, np.nan) for j in range(J + 1)]
    for j, k, v in entries:
        if j < 0 or not 0 <= k < (1 << j):
            raise TreeParseError(f"node ({j}, {k}) out of range")
        if not np.isnan(values[j][k]):
            raise TreeParseError(f"duplicate node ({j}, {k})")
        values[j][k] = v
    for j, lv in enumerate(values):
        got = int(np.count_nonzero(~np.isnan(lv)))
        if got != lv.size:
            raise TreeParseError(f"level {j} expected {lv.size} nodes, got {got}")
    signs = [np.signbit(lv) for lv in values]
    has_signs = any(s.any() for s in signs)
    return CoefficientTree([np.abs(lv) for lv in values], signs if has_signs else None)


# --------------------------------------------------------------------------
# periodized orthonormal DWT (convenience front end)

_S3 = math.sqrt(3.0)
FILTERS = {
    "haar": np.array([1.0, 1.0]) / math.sqrt(2.0),
    "db2": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * math.sqrt(2.0)),
}


def _lowpass(filt) -> np.ndarray:
    h = FILTERS[filt] if isinstance(filt, str) else np.asarray(filt, dtype=float)
    if h.ndim != 1 or h.size < 2 or h.size % 2:
        raise DomainError("scaling filter must have an even number of taps")
    # orthonormality: sum h[n] h[n+2m] = delta_m
    for m in range(h.size // 2):
        target = 1.0 if m == 0 else 0.0
        if abs(float(np.dot(h[: h.size - 2 * m], h[2 * m:])) - target) > 1e-10:
            raise DomainError("filter is not orthonormal")
    return h


def _highpass(h: np.ndarray) -> np.ndarray:
    g = h[::-1].copy()
    g[1::2] *= -1
    return g


def _analysis_matrix_step(a: np.ndarray, h: np.ndarray, g: np.ndarray):
    n = a.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :]) % n
    return a[idx] @ h, a[idx] @ g


def dwt_forward(signal, filt="db2"):
    """Periodized pyramid DWT.

    Returns ``(approx, details)`` where ``details[j]`` holds the ``2**j``
    orthonormal detail coefficients of scale ``j`` and ``approx`` is the
    single coarsest scaling coefficient.
    """
    x = np.asarray(signal, dtype=float)
    n = x.size
    if n < 2 or n & (n - 1):
        raise DomainError(f"signal length must be a power of two >= 2, got {n}")
    h = _lowpass(filt)
    g = _highpass(h)
    details = []
    a = x
    while a.size > 1:
        a, d = _analysis_matrix_step(a, h, g)
        details.append(d)
    return float(a[0]), details[::-1]


def dwt_inverse(approx: float, details, filt="db2") -> np.ndarray:
    h = _lowpass(filt)
    g = _highpass(h)
    a = np.array([approx], dtype=float)
    for d in details:
        n = 2 * a.size
        out = np.zeros(n)
        idx = (2 * np.arange(a.size)[:, None] + np.arange(h.size)[None, :]) % n
        np.add.at(out, idx, a[:, None] * h[None, :] + np.asarray(d)[:, None] * g[None, :])
        a = out
    return a


def dwt_front_end(signal, filt="db2") -> CoefficientTree:
    """Wavelet coefficient tree of a sampled 1-periodic signal.

    Detail coefficients are rescaled to the L-infinity normalisation
    ``c_{j,k} = 2^{j/2} d_{j,k} / 2^{J/2}`` (``2^J`` samples), so a unit
    amplitude wavelet yields a unit coefficient at every scale.  The tree has
    ``max_scale = J - 1``; the scaling coefficient is not part of the tree
    (see :func:`tree_to_dwt` for the inverse).
    """
    approx, details = dwt_forward(signal, filt)
    J = len(details)
    scaled = [d * 2.0 ** ((j - J) / 2.0) for j, d in enumerate(details)]
    return CoefficientTree([np.abs(d) for d in scaled], [np.signbit(d) for d in scaled])


def tree_to_dwt(tree: CoefficientTree, approx: float = 0.0):
    """Undo the normalisation of :func:`dwt_front_end`; signs are required."""
    if tree.signs is None:
        raise DomainError("inverse transform needs coefficient signs")
    J = tree.max_scale + 1
    return approx, [d * 2.0 ** ((J - j) / 2.0) for j, d in enumerate(tree.signed_levels())]
