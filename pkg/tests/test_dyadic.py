import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspectrum.dyadic import (
    CoefficientTree,
    DomainError,
    NodeRef,
    TreeParseError,
    dwt_forward,
    dwt_front_end,
    dwt_inverse,
    node_containing,
    read_tree,
    tree_to_dwt,
    write_tree,
)


def random_tree(rng, J, signs=False, zero_frac=0.3):
    levels = []
    for j in range(J + 1):
        a = rng.exponential(size=1 << j) * 2.0 ** (-0.5 * j)
        a[rng.random(1 << j) < zero_frac] = 0.0
        levels.append(a)
    sg = [rng.random(1 << j) < 0.5 for j in range(J + 1)] if signs else None
    return CoefficientTree(levels, sg)


@st.composite
def trees(draw, max_J=6):
    J = draw(st.integers(0, max_J))
    seed = draw(st.integers(0, 2**32 - 1))
    signs = draw(st.booleans())
    return random_tree(np.random.default_rng(seed), J, signs)


# node geometry

def test_node_containing_examples():
    assert node_containing(0.3, 2) == (2, 1)
    assert node_containing(0.0, 0) == (0, 0)
    assert node_containing(0.999, 3) == (3, 7)


@given(st.floats(0, 1, exclude_max=True), st.integers(0, 30))
def test_node_containing_is_the_unique_interval(x0, j):
    k = node_containing(x0, j).k
    assert k * 2.0 ** -j <= x0 < (k + 1) * 2.0 ** -j


@pytest.mark.parametrize("x0", [-0.1, 1.0, math.nan])
def test_node_containing_rejects_outside(x0):
    with pytest.raises(DomainError):
        node_containing(x0, 3)


def test_node_containing_rejects_scale_beyond_tree():
    with pytest.raises(DomainError):
        node_containing(0.5, 5, max_scale=4)


def test_children_parent_and_wrap():
    n = NodeRef(3, 7)
    assert n.children() == ((4, 14), (4, 15))
    assert n.children()[1].parent() == n
    assert set(n.neighbours()) == {(3, 6), (3, 7), (3, 0)}
    assert NodeRef(0, 0).neighbours() == ((0, 0),)
    assert len(NodeRef(1, 0).neighbours()) == 2
    with pytest.raises(DomainError):
        NodeRef(0, 0).parent()


@given(st.integers(0, 12), st.data())
def test_neighbour_relation_is_symmetric(j, data):
    k = data.draw(st.integers(0, (1 << j) - 1))
    m = data.draw(st.integers(0, (1 << j) - 1))
    a, b = NodeRef(j, k), NodeRef(j, m)
    assert (b in a.neighbours()) == (a in b.neighbours())


# container

def test_tree_validation_names_scale_and_offset():
    with pytest.raises(TreeParseError, match="level 2 expected 4 nodes, got 3"):
        CoefficientTree([[1.0], [0, 0], [0, 0, 0]])
    with pytest.raises(TreeParseError, match="scale 1, offset 1"):
        CoefficientTree([[1.0], [0.0, -2.0]])
    with pytest.raises(TreeParseError, match="scale 2, offset 3"):
        CoefficientTree([[1.0], [0.0, 0.0], [0, 0, 0, np.inf]])


def test_tree_is_immutable():
    t = CoefficientTree.zeros(3)
    with pytest.raises(ValueError):
        t.levels[2][0] = 1.0


def test_exact_zeros_and_subnormals_are_kept():
    tiny = 5e-324
    t = CoefficientTree([[0.0], [tiny, 0.0]])
    back = read_tree(write_tree(t, "binary"), "binary")
    assert back.levels[1][0] == tiny and back.levels[1][1] == 0.0


# serialization

@settings(max_examples=60, deadline=None)
@given(trees(), st.sampled_from(["binary", "json", "csv"]))
def test_round_trip(tree, fmt):
    back = read_tree(write_tree(tree, fmt), fmt)
    if fmt == "binary":
        assert back == tree
        return
    for a, b in zip(tree.levels, back.levels):
        np.testing.assert_allclose(b, a, rtol=1e-15, atol=0)
    if tree.signs is not None and fmt == "json":
        assert all(np.array_equal(x, y) for x, y in zip(tree.signs, back.signs))


def test_binary_layout():
    t = CoefficientTree([[1.0], [0.5, 0.25]], [[False], [True, False]])
    data = write_tree(t, "binary")
    assert data[:4] == b"MFA1"
    assert struct.unpack_from("<IB", data, 4) == (1, 1)
    assert np.frombuffer(data[9:33], "<f8").tolist() == [1.0, 0.5, 0.25]
    assert data[33:] == bytes([0b010])
    assert read_tree(io.BytesIO(data)) == t


def test_csv_any_order_and_signs():
    text = b"j,k,value\n1,1,-0.25\n0,0,1\n1,0,0.5\n"
    t = read_tree(text, "csv")
    assert t.levels[1].tolist() == [0.5, 0.25]
    assert t.signs[1].tolist() == [False, True]


@pytest.mark.parametrize("data,fmt,msg", [
    (b"XXXX\x01\x00\x00\x00\x00", "binary", "magic"),
    (b"MFA1\x02\x00\x00\x00\x00" + b"\x00" * 8 * 4, "binary", "level 2 expected 4 nodes, got 1"),
    (b'{"J": 2, "levels": [[1], [0, 0], [0, 0, 0]]}', "json", "level 2 expected 4 nodes, got 3"),
    (b"j,k,value\n0,0,1\n1,0,1\n", "csv", "level 1 expected 2 nodes, got 1"),
    (b"a,b,c\n", "csv", "header"),
    (b"j,k,value\n0,0,1\n0,0,2\n", "csv", "duplicate"),
])
def test_parse_errors(data, fmt, msg):
    with pytest.raises(TreeParseError, match=msg):
        read_tree(data, fmt)


# DWT front end

@pytest.mark.parametrize("filt", ["haar", "db2"])
def test_dwt_round_trip(filt):
    x = np.random.default_rng(7).normal(size=256)
    a, d = dwt_forward(x, filt)
    y = dwt_inverse(a, d, filt)
    assert np.max(np.abs(y - x)) <= 1e-10 * np.max(np.abs(x))
    tree = dwt_front_end(x, filt)
    a2, d2 = tree_to_dwt(tree, a)
    np.testing.assert_allclose(dwt_inverse(a2, d2, filt), x, rtol=0, atol=1e-10)


@pytest.mark.parametrize("filt", ["haar", "db2"])
def test_constant_signal_has_zero_details(filt):
    tree = dwt_front_end(np.full(64, 3.0), filt)
    assert max(float(np.max(a)) for a in tree.levels) < 1e-12


def test_single_haar_wavelet():
    J = 6
    details = [np.zeros(1 << j) for j in range(J)]
    details[3][5] = 1.0
    x = dwt_inverse(0.0, details, "haar")
    tree = dwt_front_end(x, "haar")
    nz = [(j, k) for j, a in enumerate(tree.levels) for k in np.flatnonzero(a > 1e-12)]
    assert nz == [(3, 5)]
    # L-infinity normalisation: amplitude of the sampled wavelet
    assert tree[3, 5] == pytest.approx(np.max(np.abs(x)))


def test_dwt_rejects_bad_length_and_filter():
    with pytest.raises(DomainError):
        dwt_forward(np.zeros(12))
    with pytest.raises(DomainError):
        dwt_forward(np.zeros(8), np.array([1.0, 0.5]))
