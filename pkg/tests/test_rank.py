import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zpdet.algebra import AlgebraElement, complex_gaussian, random_element, random_with_ranks, rank_profile, rng_for
from zpdet.rank import (
    MinPiDecomposition,
    NotAPartialIsometry,
    NotAZeroProductPair,
    RankOneOperator,
    are_orthogonal,
    is_minimal_partial_isometry,
    minpi_decompose,
    odd_cube_root,
    peirce_decompose,
    rank_one_product_zero,
    support_projections,
    zp_decompose_pair,
)


def test_rank_one_matrix_entries():
    e = np.array([1, 2j])
    f = np.array([3, 1j])
    u = RankOneOperator(0, e, f)
    # (e (x) f)_pq = e_p conj(f_q)
    assert np.allclose(u.matrix(), [[3, -1j], [6j, 2]])


def test_matrix_unit_rank_one():
    u = RankOneOperator.matrix_unit(1, 3, 0, 2)
    el = u.to_element((2, 3))
    assert np.allclose(el.blocks[1], np.eye(3)[:, [0]] @ np.eye(3)[[2], :])
    assert el.support() == [1]


def test_minpi_matrix_unit_is_itself():
    a = AlgebraElement.unit((3,), 0, 0, 1)
    d = minpi_decompose(a)
    assert len(d) == 1
    lam, u = d.terms[0]
    assert lam == pytest.approx(1.0)
    assert np.allclose(u.e, [1, 0, 0]) and np.allclose(u.f, [0, 1, 0])


def test_minpi_zero_is_empty():
    assert len(minpi_decompose(AlgebraElement.zeros((2, 2)))) == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(0, 2 ** 32))
def test_minpi_reconstructs_and_counts_rank(dims, seed):
    rng = rng_for(seed)
    ranks = [int(rng.integers(0, n + 1)) for n in dims]
    a = random_with_ranks(dims, ranks, seed)
    d = minpi_decompose(a)
    assert d.reconstruct().allclose(a, 1e-10)
    for i, r in enumerate(rank_profile(a).ranks):
        assert len(d.in_block(i)) == r
    # terms are mutually orthogonal minimal partial isometries
    els = [u.to_element(a.shape) for _, u in d]
    for i, x in enumerate(els):
        assert is_minimal_partial_isometry(x)
        for y in els[i + 1:]:
            assert are_orthogonal(x, y, 1e-10)


def test_minpi_json_round_trip():
    a = random_element((2, 3), 7)
    d = minpi_decompose(a)
    back = MinPiDecomposition.from_json(d.to_json(), a.shape)
    assert back.reconstruct().allclose(a, 1e-12)


def test_phase_convention_largest_entry_real_positive():
    a = random_element((3,), 9)
    for _, u in minpi_decompose(a):
        k = int(np.argmax(np.abs(u.e)))
        assert abs(u.e[k].imag) < 1e-12 and u.e[k].real > 0


def test_not_minimal_partial_isometry():
    assert not is_minimal_partial_isometry(AlgebraElement.identity((2,)))
    assert not is_minimal_partial_isometry(2 * AlgebraElement.unit((2,), 0, 0, 0))
    two_blocks = AlgebraElement.unit((2, 2), 0, 0, 0) + AlgebraElement.unit((2, 2), 1, 0, 0)
    assert not is_minimal_partial_isometry(two_blocks)


def test_rank_one_product_zero():
    u = RankOneOperator.matrix_unit(0, 3, 0, 1)
    assert rank_one_product_zero(u, RankOneOperator.matrix_unit(0, 3, 2, 0))
    assert not rank_one_product_zero(u, RankOneOperator.matrix_unit(0, 3, 1, 0))
    assert rank_one_product_zero(u, RankOneOperator.matrix_unit(1, 3, 1, 0))


def _zero_product_pair(shape, seed):
    """a with a nontrivial right kernel and b with range inside it."""
    rng = rng_for(seed, 77)
    xa, xb = [], []
    for n in shape:
        r = int(rng.integers(0, n))
        K = np.linalg.qr(complex_gaussian(rng, n, n))[0]
        ker = K[:, :n - r]
        row = K[:, n - r:]
        xa.append(complex_gaussian(rng, n, r) @ row.conj().T)
        xb.append(ker @ complex_gaussian(rng, n - r, n))
    return AlgebraElement(shape, xa), AlgebraElement(shape, xb)


def test_zp_decompose_pair_termwise():
    x, y = _zero_product_pair((3, 4), 1)
    dx, dy = zp_decompose_pair(x, y)
    for _, u in dx:
        for _, v in dy:
            assert rank_one_product_zero(u, v, 1e-8)


def test_zp_decompose_rejects_nonzero_product():
    with pytest.raises(NotAZeroProductPair):
        zp_decompose_pair(AlgebraElement.identity((2,)), AlgebraElement.identity((2,)))


def test_odd_cube_root_cubes_back():
    a = random_element((3, 2), 4)
    b = odd_cube_root(a)
    assert (b @ b.H @ b).allclose(a, 1e-10)


def test_support_projections_contract():
    a = random_with_ranks((4,), [2], 5)
    sl, sr = support_projections(a)
    assert (sl @ a).allclose(a, 1e-10) and (a @ sr).allclose(a, 1e-10)
    assert (sl @ sl).allclose(sl, 1e-10) and sl.allclose(sl.H, 1e-12)
    assert np.trace(sl.blocks[0]).real == pytest.approx(2)


def test_peirce_for_projection():
    e = AlgebraElement.unit((3,), 0, 0, 0)
    a = random_element((3,), 6)
    a2, a1, a0 = peirce_decompose(a, e)
    assert (a2 + a1 + a0).allclose(a, 1e-12)
    assert np.allclose(a2.blocks[0][1:, :], 0) and np.allclose(a2.blocks[0][:, 1:], 0)
    assert np.allclose(a0.blocks[0][0, :], 0) and np.allclose(a0.blocks[0][:, 0], 0)


def test_peirce_rejects_non_partial_isometry():
    with pytest.raises(NotAPartialIsometry):
        peirce_decompose(AlgebraElement.identity((2,)), 2 * AlgebraElement.identity((2,)))
