import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zpdet.algebra import (
    AlgebraElement,
    AlgebraShape,
    ShapeMismatch,
    condition_number,
    drop_blocks,
    inverse,
    project_block,
    random_element,
    random_with_ranks,
    rank_profile,
    rng_for,
    satisfies_rank_hypothesis,
    standard_basis,
    unit_except,
)

shapes = st.lists(st.integers(1, 4), min_size=1, max_size=3).map(tuple)


def test_shape_basics():
    s = AlgebraShape([3, 4])
    assert (s.k, s.dim, s.max_block) == (2, 25, 4)
    assert s.offsets() == [0, 9]
    assert s.index(1, 0, 2) == 9 + 2
    with pytest.raises(ValueError):
        AlgebraShape([])
    with pytest.raises(ValueError):
        AlgebraShape([0])


def test_vectorization_is_row_major_in_block_order():
    s = AlgebraShape([2, 1])
    a = AlgebraElement(s, [np.array([[1, 2], [3, 4]]), np.array([[5]])])
    assert np.allclose(a.vec(), [1, 2, 3, 4, 5])
    assert AlgebraElement.from_vector(s, a.vec()) == a


def test_multiplication_is_blockwise():
    s = AlgebraShape([2, 2])
    a, b = random_element(s, 1), random_element(s, 2)
    p = a @ b
    for i in range(2):
        assert np.allclose(p.blocks[i], a.blocks[i] @ b.blocks[i])


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatch):
        AlgebraElement.zeros((2,)) @ AlgebraElement.zeros((3,))


def test_elements_are_immutable():
    a = AlgebraElement.identity((2,))
    with pytest.raises(ValueError):
        a.blocks[0][0, 0] = 5
    with pytest.raises(AttributeError):
        a.shape = None


def test_padding_helpers():
    s = AlgebraShape([2, 3, 2])
    c = random_element(s, 3)
    assert np.allclose(drop_blocks(c, 1).blocks[1], 0)
    assert np.allclose(drop_blocks(c, 1).blocks[0], c.blocks[0])
    u = unit_except(s, 0, 2)
    assert np.allclose(u.blocks[1], np.eye(3)) and np.allclose(u.blocks[0], 0)
    assert project_block(c, 1).support() == [1]


def test_json_round_trip_is_exact():
    a = random_element((2, 3), 4)
    text = json.dumps(a.to_json())
    assert AlgebraElement.from_json(json.loads(text)) == a


def test_rank_profile_and_hypothesis():
    c = AlgebraElement.unit((3, 2), 0, 0, 0)
    prof = rank_profile(c)
    assert prof.ranks == (1, 0)
    ok, _ = satisfies_rank_hypothesis(c)
    assert ok
    ok, prof = satisfies_rank_hypothesis(AlgebraElement.unit((2,), 0, 0, 0))
    assert not ok and prof.ranks == (1,)


def test_rank_threshold_ignores_tiny_noise():
    c = AlgebraElement((4,), [np.diag([1.0, 1e-13, 0, 0])])
    assert rank_profile(c).ranks == (1,)


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2 ** 32))
def test_random_with_ranks_has_requested_ranks(shape, seed):
    rng = rng_for(seed)
    ranks = [int(rng.integers(0, n + 1)) for n in shape]
    c = random_with_ranks(shape, ranks, seed)
    assert list(rank_profile(c).ranks) == ranks


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2 ** 32))
def test_inverse_and_adjoint(shape, seed):
    g = random_element(shape, seed, "invertible-gaussian")
    one = AlgebraElement.identity(shape)
    assert (g @ inverse(g)).allclose(one, 1e-8 * condition_number(g))
    a, b = random_element(shape, seed + 1), g
    assert (a @ b).H.allclose(b.H @ a.H, 1e-12)


def test_rng_streams_are_keyed():
    x = rng_for(5, 1, 2).standard_normal(3)
    assert np.array_equal(x, rng_for(5, 1, 2).standard_normal(3))
    assert not np.array_equal(x, rng_for(5, 2, 1).standard_normal(3))


def test_standard_basis_spans():
    basis = standard_basis((2, 1))
    assert np.allclose(np.array([b.vec() for b in basis]), np.eye(5))
