import numpy as np
import pytest

from zpdet.algebra import AlgebraElement, ShapeMismatch, random_element, rng_for
from zpdet.bilinear import sample_fiber
from zpdet.maps import (
    LinearMapMatrix,
    NotBijective,
    NotDerivable,
    NotInvertible,
    NotZeroProductPreserving,
    derivation_at_c_check,
    derivation_decompose,
    extract_homomorphism,
    kernel_gap,
    pair_identity_check,
    pair_preserves_zero_products,
    random_automorphism,
    random_central,
    random_well_conditioned,
    weighted_hom_decompose,
)

L = LinearMapMatrix.left_multiplication
R = LinearMapMatrix.right_multiplication


def test_matrix_conventions_match_direct_products():
    shape = (2, 3)
    g = random_well_conditioned(shape, 1)
    a = random_element(shape, 2)
    ginv = AlgebraElement(shape, [np.linalg.inv(b) for b in g.blocks])
    assert LinearMapMatrix.inner_automorphism(g)(a).allclose(g @ a @ ginv, 1e-12)
    assert L(g)(a).allclose(g @ a, 1e-12) and R(g)(a).allclose(a @ g, 1e-12)
    assert LinearMapMatrix.inner_derivation(g)(a).allclose(g @ a - a @ g, 1e-12)
    t = LinearMapMatrix.transpose_map(shape)(a)
    assert all(np.allclose(x, y.T) for x, y in zip(t.blocks, a.blocks))


def test_composition_is_matrix_product():
    shape = (2,)
    f, g = random_automorphism(shape, 1), random_automorphism(shape, 2)
    a = random_element(shape, 3)
    assert f.compose(g)(a).allclose(f(g(a)), 1e-12)
    with pytest.raises(ShapeMismatch):
        f.compose(LinearMapMatrix.identity((3,)))


def test_block_permutation():
    shape = (2, 2)
    a = random_element(shape, 4)
    p = LinearMapMatrix.block_permutation(shape, [1, 0])(a)
    assert np.allclose(p.blocks[0], a.blocks[1]) and np.allclose(p.blocks[1], a.blocks[0])
    with pytest.raises(ShapeMismatch):
        LinearMapMatrix.block_permutation((2, 3), [1, 0])


def test_pair_zero_products_examples():
    shape = (2,)
    one = LinearMapMatrix.identity(shape)
    assert pair_preserves_zero_products(one, one).holds
    g = AlgebraElement(shape, [np.array([[1.0, 1], [0, 1]])])
    rho = LinearMapMatrix.inner_automorphism(g)
    w = 3 * AlgebraElement.identity(shape)
    phi, psi = 2 * rho, R(w).compose(rho)
    assert pair_preserves_zero_products(phi, psi).holds
    chk = pair_preserves_zero_products(LinearMapMatrix.transpose_map(shape), one)
    assert not chk.holds
    x, y = chk.worst
    assert x == AlgebraElement.unit(shape, 0, 0, 1) and y == AlgebraElement.unit(shape, 0, 0, 0)


def test_pair_identity_examples():
    shape = (2,)
    one = LinearMapMatrix.identity(shape)
    assert pair_identity_check(one, one).holds
    rho = random_automorphism(shape, 5)
    phi = 2 * rho
    psi = R(3 * AlgebraElement.identity(shape)).compose(rho)
    assert pair_identity_check(phi, psi, tol=1e-9).holds
    res = pair_identity_check(LinearMapMatrix.transpose_map(shape), one)
    assert res.skipped and not res.holds


def test_extract_homomorphism_example():
    shape = (2,)
    g = AlgebraElement(shape, [np.array([[1.0, 1], [0, 1]])])
    rho0 = LinearMapMatrix.inner_automorphism(g)
    phi, psi = 2 * rho0, R(3 * AlgebraElement.identity(shape)).compose(rho0)
    rep = extract_homomorphism(phi, psi)
    assert rep.passed
    assert rep.rho.distance(rho0) <= 1e-9
    assert max(rep.rho_mismatch, rep.mult_residual, rep.unital_residual) <= 1e-9
    one = LinearMapMatrix.identity(shape)
    assert extract_homomorphism(one, one).rho.distance(one) == 0


def test_extract_homomorphism_singular_unit():
    shape = (2,)
    e11 = AlgebraElement.unit(shape, 0, 0, 0)
    one = LinearMapMatrix.identity(shape)
    with pytest.raises(NotInvertible, match="φ\\(1\\) not invertible"):
        extract_homomorphism(L(e11), one)
    with pytest.raises(NotInvertible, match="ψ\\(1\\) not invertible"):
        extract_homomorphism(one, R(e11))


@pytest.mark.parametrize("seed", range(5))
def test_kernels_of_passing_pairs_coincide(seed):
    # a non-injective pair: rho kills one block through a projection onto the other
    shape = (2, 2)
    proj = LinearMapMatrix.from_function(shape, shape, lambda a: AlgebraElement(shape, [a.blocks[0], a.blocks[0]]))
    rho = random_automorphism(shape, seed).compose(proj)
    phi = L(random_well_conditioned(shape, rng_for(seed, 1))).compose(rho)
    psi = R(random_well_conditioned(shape, rng_for(seed, 2))).compose(rho)
    assert pair_preserves_zero_products(phi, psi).holds
    assert kernel_gap(phi, psi) <= 1e-6


def test_symmetric_pair_gives_star_homomorphism():
    shape = (3, 2)
    rho0 = random_automorphism(shape, 3, unitary=True)
    h = AlgebraElement(shape, [2.0 * np.eye(3), 0.5 * np.eye(2)])
    phi = L(h).compose(rho0)
    assert phi.is_symmetric()
    assert pair_preserves_zero_products(phi, phi).holds
    rep = extract_homomorphism(phi, phi)
    assert rep.passed and rep.rho.is_symmetric(1e-9)


def test_weighted_examples():
    shape = (3,)
    g = random_well_conditioned(shape, 1)
    rho0 = LinearMapMatrix.inner_automorphism(g)
    h, rho, rep = weighted_hom_decompose(3 * rho0)
    assert h.allclose(3 * AlgebraElement.identity(shape), 1e-10)
    assert rho.distance(rho0) <= 1e-9 and rep.passed
    h, rho, _ = weighted_hom_decompose(LinearMapMatrix.identity(shape))
    assert h == AlgebraElement.identity(shape)


def test_weighted_block_permuting():
    shape = (2, 2)
    w = AlgebraElement(shape, [2 * np.eye(2), 5 * np.eye(2)])
    perm = LinearMapMatrix.block_permutation(shape, [1, 0])
    phi = L(w).compose(perm)
    h, rho, rep = weighted_hom_decompose(phi)
    assert h.allclose(w, 1e-12) and rho.distance(perm) <= 1e-12 and rep.passed


def test_weighted_errors():
    shape = (2,)
    with pytest.raises(NotBijective):
        weighted_hom_decompose(L(AlgebraElement.unit(shape, 0, 0, 0)))
    with pytest.raises(NotZeroProductPreserving):
        weighted_hom_decompose(LinearMapMatrix.transpose_map(shape))
    # a non-central weight already breaks zero-product preservation, so the
    # centrality guard is never the first to fire on an exact input
    g = AlgebraElement(shape, [np.array([[2.0, 1], [0, 1]])])
    with pytest.raises(NotZeroProductPreserving):
        weighted_hom_decompose(L(g))


def test_derivation_check_examples():
    shape = (2,)
    m = random_element(shape, 1)
    c = AlgebraElement.identity(shape)
    fib = sample_fiber(c, 60, 0)
    assert derivation_at_c_check(LinearMapMatrix.inner_derivation(m), c, fib).holds
    chk = derivation_at_c_check(LinearMapMatrix.transpose_map(shape), c, fib)
    assert not chk.holds
    empty = type(fib)((), c, 0.0)
    with pytest.raises(ValueError):
        derivation_at_c_check(LinearMapMatrix.inner_derivation(m), c, empty)


def test_derivation_with_central_xi_killing_c():
    shape = (3, 3)
    c = AlgebraElement.unit(shape, 0, 0, 0)
    xi = AlgebraElement(shape, [np.zeros((3, 3)), 2j * np.eye(3)])
    d0 = LinearMapMatrix.inner_derivation(random_element(shape, 2))
    delta = d0 + L(xi)
    assert derivation_at_c_check(delta, c, sample_fiber(c, 80, 1)).holds
    rep = derivation_decompose(delta, c)
    assert rep.passed
    assert (rep.xi - xi).norm() <= 1e-10 and rep.d.distance(d0) <= 1e-10
    assert rep.xi_c_residual <= 1e-12


def test_plain_derivation_has_zero_xi():
    shape = (3,)
    d0 = LinearMapMatrix.inner_derivation(random_element(shape, 3))
    rep = derivation_decompose(d0, AlgebraElement.unit(shape, 0, 0, 0))
    assert rep.xi.norm() <= 1e-12


def test_derivation_at_zero_any_central_xi():
    shape = (3, 2)
    c = AlgebraElement.zeros(shape)
    xi = random_central(shape, 5)
    d0 = LinearMapMatrix.inner_derivation(random_element(shape, 6))
    rep = derivation_decompose(d0 + L(xi), c)
    assert rep.passed and (rep.xi - xi).norm() <= 1e-10 and rep.xi_c_residual == 0


def test_not_derivable_reports_worst_pair():
    shape = (2,)
    with pytest.raises(NotDerivable) as info:
        derivation_decompose(LinearMapMatrix.transpose_map(shape), AlgebraElement.identity(shape))
    a, b = info.value.worst
    assert ((a @ b) - AlgebraElement.identity(shape)).norm() <= 1e-8
