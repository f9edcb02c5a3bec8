"""Linear maps between direct sums of matrix algebras and their structure.

A linear map A -> B is stored as a dim(B) x dim(A) complex matrix acting on
the row-major vectorization, so ``vec(g X h) = kron(g, h.T) vec(X)`` on each
block.  In finite dimension the multiplier algebra of B is B itself and every
boundedness or weak* hypothesis is automatic, so nothing topological is
modelled here: the checks below test the algebraic identities directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import block_diag, null_space, subspace_angles

from .algebra import (
    AlgebraElement,
    ShapeMismatch,
    as_shape,
    complex_gaussian,
    condition_number,
    inverse,
    random_unitary,
    rng_for,
    standard_basis,
)
from .bilinear import FiberSample, sample_fiber
from .factorization import zero_fiber_generators

MAX_COND = 1e8


class MapError(ValueError):
    pass


class NotInvertible(MapError):
    pass


class NotBijective(MapError):
    pass


class NotZeroProductPreserving(MapError):
    pass


class NotCentral(MapError):
    pass


class NotDerivable(MapError):
    def __init__(self, message, worst=None, deviation=None):
        super().__init__(message)
        self.worst = worst
        self.deviation = deviation


class LinearMapMatrix:
    def __init__(self, domain_shape, codomain_shape, matrix):
        self.domain_shape = as_shape(domain_shape)
        self.codomain_shape = as_shape(codomain_shape)
        m = np.array(matrix, dtype=complex)
        if m.shape != (self.codomain_shape.dim, self.domain_shape.dim):
            raise ShapeMismatch(
                f"matrix of shape {m.shape} for a map {self.domain_shape} -> {self.codomain_shape}")
        m.setflags(write=False)
        self.matrix = m

    def apply(self, a: AlgebraElement) -> AlgebraElement:
        if a.shape != self.domain_shape:
            raise ShapeMismatch(f"map on {self.domain_shape} applied to {a.shape}")
        return AlgebraElement.from_vector(self.codomain_shape, self.matrix @ a.vec())

    __call__ = apply

    def compose(self, other: LinearMapMatrix) -> LinearMapMatrix:
        """self after other."""
        if other.codomain_shape != self.domain_shape:
            raise ShapeMismatch(f"cannot compose {self.domain_shape} with codomain {other.codomain_shape}")
        return LinearMapMatrix(other.domain_shape, self.codomain_shape, self.matrix @ other.matrix)

    def _same(self, other):
        if (self.domain_shape, self.codomain_shape) != (other.domain_shape, other.codomain_shape):
            raise ShapeMismatch("maps between different algebras")

    def __add__(self, other):
        self._same(other)
        return LinearMapMatrix(self.domain_shape, self.codomain_shape, self.matrix + other.matrix)

    def __sub__(self, other):
        self._same(other)
        return LinearMapMatrix(self.domain_shape, self.codomain_shape, self.matrix - other.matrix)

    def __neg__(self):
        return LinearMapMatrix(self.domain_shape, self.codomain_shape, -self.matrix)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return LinearMapMatrix(self.domain_shape, self.codomain_shape, scalar * self.matrix)

    __rmul__ = __mul__

    def norm(self) -> float:
        """Operator norm with respect to the Frobenius norms on A and B."""
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def distance(self, other: LinearMapMatrix) -> float:
        self._same(other)
        return float(np.linalg.norm(self.matrix - other.matrix, 2))

    def condition(self) -> float:
        if self.matrix.shape[0] != self.matrix.shape[1]:
            return np.inf
        return float(np.linalg.cond(self.matrix))

    def inverse(self) -> LinearMapMatrix:
        if self.condition() >= MAX_COND:
            raise NotBijective("not bijective")
        return LinearMapMatrix(self.codomain_shape, self.domain_shape, np.linalg.inv(self.matrix))

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        """apply(a*) = apply(a)* on the matrix units (enough by linearity)."""
        scale = max(1.0, self.norm())
        return all((self(e.H) - self(e).H).norm() <= tol * scale for e in standard_basis(self.domain_shape))

    def to_json(self) -> dict:
        return {
            "domain": list(self.domain_shape.block_dims),
            "codomain": list(self.codomain_shape.block_dims),
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix],
        }

    @classmethod
    def from_function(cls, domain_shape, codomain_shape, fn) -> LinearMapMatrix:
        domain_shape, codomain_shape = as_shape(domain_shape), as_shape(codomain_shape)
        cols = [fn(e).vec() for e in standard_basis(domain_shape)]
        return cls(domain_shape, codomain_shape, np.stack(cols, axis=1))

    @classmethod
    def identity(cls, shape) -> LinearMapMatrix:
        shape = as_shape(shape)
        return cls(shape, shape, np.eye(shape.dim))

    @classmethod
    def _blockwise(cls, shape, mats) -> LinearMapMatrix:
        return cls(shape, shape, block_diag(*mats))

    @classmethod
    def left_multiplication(cls, m: AlgebraElement) -> LinearMapMatrix:
        return cls._blockwise(m.shape, [np.kron(b, np.eye(b.shape[0])) for b in m.blocks])

    @classmethod
    def right_multiplication(cls, m: AlgebraElement) -> LinearMapMatrix:
        return cls._blockwise(m.shape, [np.kron(np.eye(b.shape[0]), b.T) for b in m.blocks])

    @classmethod
    def inner_automorphism(cls, g: AlgebraElement) -> LinearMapMatrix:
        """a -> g a g^-1."""
        return cls._blockwise(g.shape, [np.kron(b, np.linalg.inv(b).T) for b in g.blocks])

    @classmethod
    def inner_derivation(cls, m: AlgebraElement) -> LinearMapMatrix:
        """a -> m a - a m."""
        return cls.left_multiplication(m) - cls.right_multiplication(m)

    @classmethod
    def block_permutation(cls, shape, perm) -> LinearMapMatrix:
        """Send block i to block perm[i]; blocks must have matching sizes."""
        shape = as_shape(shape)
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(shape.k)):
            raise ValueError(f"{perm} is not a permutation of the blocks")
        for i, p in enumerate(perm):
            if shape.block_dims[i] != shape.block_dims[p]:
                raise ShapeMismatch(f"block {i} of size {shape.block_dims[i]} sent to block {p} of size {shape.block_dims[p]}")

        def move(a):
            blocks = [None] * shape.k
            for i, p in enumerate(perm):
                blocks[p] = a.blocks[i]
            return AlgebraElement(shape, blocks)

        return cls.from_function(shape, shape, move)

    @classmethod
    def transpose_map(cls, shape) -> LinearMapMatrix:
        shape = as_shape(shape)
        return cls.from_function(shape, shape, lambda a: AlgebraElement(shape, [b.T for b in a.blocks]))


# random constructions used by the round-trip checks


def random_automorphism(shape, seed=0, unitary: bool = False, permute: bool = True) -> LinearMapMatrix:
    """Inner automorphism, composed with a random permutation of equal-size blocks."""
    shape = as_shape(shape)
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, 11)
    if unitary:
        g = AlgebraElement(shape, [random_unitary(n, rng) for n in shape.block_dims])
    else:
        g = random_well_conditioned(shape, rng)
    rho = LinearMapMatrix.inner_automorphism(g)
    if permute:
        perm = np.arange(shape.k)
        dims = np.asarray(shape.block_dims)
        for n in sorted(set(shape.block_dims)):
            idx = np.flatnonzero(dims == n)
            perm[idx] = rng.permutation(idx)
        rho = LinearMapMatrix.block_permutation(shape, perm).compose(rho)
    return rho


def random_central(shape, seed=0) -> AlgebraElement:
    """Nonzero scalar on every block, modulus in [0.5, 2]."""
    shape = as_shape(shape)
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, 12)
    z = rng.uniform(0.5, 2.0, shape.k) * np.exp(2j * np.pi * rng.uniform(size=shape.k))
    return AlgebraElement(shape, [s * np.eye(n) for s, n in zip(z, shape.block_dims)])


def random_well_conditioned(shape, seed=0) -> AlgebraElement:
    shape = as_shape(shape)
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, 13)
    blocks = []
    for n in shape.block_dims:
        while True:
            g = np.eye(n) + 0.5 * complex_gaussian(rng, n, n) / np.sqrt(n)
            if np.linalg.cond(g) < 1e2:
                break
        blocks.append(g)
    return AlgebraElement(shape, blocks)


# zero-product preserving pairs


class MapCheck(NamedTuple):
    holds: bool
    max_deviation: float
    worst: object = None
    skipped: bool = False


def pair_preserves_zero_products(phi: LinearMapMatrix, psi: LinearMapMatrix, trials: int = 1, seed: int = 0,
                                 tol: float = 1e-9) -> MapCheck:
    """max ||phi(x) psi(y)|| over the zero-product pool, against tol * ||phi|| ||psi||.

    ``trials`` random rank-one pairs per block are added to the matrix-unit
    pairs; the worst pair returned is the first one reaching the maximum.
    """
    if phi.domain_shape != psi.domain_shape or phi.codomain_shape != psi.codomain_shape:
        raise ShapeMismatch("phi and psi act between different algebras")
    pool = zero_fiber_generators(phi.domain_shape, max(1, trials), seed)
    worst, arg = 0.0, None
    for x, y in pool:
        dev = (phi(x) @ psi(y)).norm()
        if dev > worst:
            worst, arg = dev, (x, y)
    return MapCheck(worst <= tol * max(1.0, phi.norm() * psi.norm()), worst, arg)


def _random_pairs(shape, trials, seed, key):
    for t in range(trials):
        rng = rng_for(seed, key, t)
        a = AlgebraElement(shape, [complex_gaussian(rng, n, n) for n in shape.block_dims])
        b = AlgebraElement(shape, [complex_gaussian(rng, n, n) for n in shape.block_dims])
        yield a / a.norm(), b / b.norm()


def pair_identity_check(phi: LinearMapMatrix, psi: LinearMapMatrix, trials: int = 200, seed: int = 0,
                        tol: float = 1e-9) -> MapCheck:
    """phi(1) psi(ab) = phi(a) psi(b) = phi(ab) psi(1) on random unit-norm pairs.

    Skipped (holds False, skipped True) when the pair does not preserve zero
    products, since then there is nothing to expect.
    """
    if not pair_preserves_zero_products(phi, psi, seed=seed, tol=tol).holds:
        return MapCheck(False, float("nan"), None, True)
    shape = phi.domain_shape
    one = AlgebraElement.identity(shape)
    p1, q1 = phi(one), psi(one)
    worst, arg = 0.0, None
    for a, b in _random_pairs(shape, trials, seed, 21):
        ab = a @ b
        mid = phi(a) @ psi(b)
        dev = max((p1 @ psi(ab) - mid).norm(), (phi(ab) @ q1 - mid).norm())
        if dev > worst:
            worst, arg = dev, (a, b)
    return MapCheck(worst <= tol * max(1.0, phi.norm() * psi.norm()), worst, arg)


@dataclass(frozen=True, eq=False)
class HomExtractionReport:
    rho: LinearMapMatrix
    phi1: AlgebraElement
    psi1: AlgebraElement
    rho_mismatch: float
    mult_residual: float
    unital_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.rho_mismatch, self.mult_residual, self.unital_residual) <= self.tolerance

    def to_json(self) -> dict:
        return {
            "phi1": self.phi1.to_json(),
            "psi1": self.psi1.to_json(),
            "rho_mismatch": self.rho_mismatch,
            "mult_residual": self.mult_residual,
            "unital_residual": self.unital_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def multiplicativity_residual(rho: LinearMapMatrix, trials: int = 50, seed: int = 0) -> float:
    """max ||rho(ab) - rho(a) rho(b)|| over random unit-norm pairs."""
    return max(((rho(a @ b) - rho(a) @ rho(b)).norm()
                for a, b in _random_pairs(rho.domain_shape, trials, seed, 22)), default=0.0)


def extract_homomorphism(phi: LinearMapMatrix, psi: LinearMapMatrix, tol: float = 1e-9, trials: int = 50,
                         seed: int = 0) -> HomExtractionReport:
    """Recover rho with phi = phi(1) rho and psi = rho psi(1).

    rho is taken as phi(1)^-1 phi(-); the report carries its distance to
    psi(-) psi(1)^-1 and how far it is from being a unital homomorphism.
    """
    if phi.domain_shape != psi.domain_shape or phi.codomain_shape != psi.codomain_shape:
        raise ShapeMismatch("phi and psi act between different algebras")
    one = AlgebraElement.identity(phi.domain_shape)
    phi1, psi1 = phi(one), psi(one)
    if condition_number(phi1) >= MAX_COND:
        raise NotInvertible("φ(1) not invertible")
    if condition_number(psi1) >= MAX_COND:
        raise NotInvertible("ψ(1) not invertible")
    rho1 = LinearMapMatrix.left_multiplication(inverse(phi1)).compose(phi)
    rho2 = LinearMapMatrix.right_multiplication(inverse(psi1)).compose(psi)
    unit_b = AlgebraElement.identity(phi.codomain_shape)
    return HomExtractionReport(
        rho=rho1,
        phi1=phi1,
        psi1=psi1,
        rho_mismatch=rho1.distance(rho2),
        mult_residual=multiplicativity_residual(rho1, trials, seed),
        unital_residual=(rho1(one) - unit_b).norm(),
        tolerance=tol,
    )


def kernel_gap(phi: LinearMapMatrix, psi: LinearMapMatrix, rcond: float = 1e-9) -> float:
    """Largest principal angle between the null spaces of phi and psi.

    Returns pi/2 when the null spaces have different dimensions.
    """
    k1 = null_space(phi.matrix, rcond=rcond)
    k2 = null_space(psi.matrix, rcond=rcond)
    if k1.shape[1] != k2.shape[1]:
        return float(np.pi / 2)
    if k1.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(k1, k2)))


# single maps


@dataclass(frozen=True, eq=False)
class WeightedHomReport:
    zero_product_deviation: float
    central_residual: float
    mult_residual: float
    unital_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.central_residual, self.mult_residual, self.unital_residual) <= self.tolerance

    def to_json(self) -> dict:
        return {
            "zero_product_deviation": self.zero_product_deviation,
            "central_residual": self.central_residual,
            "mult_residual": self.mult_residual,
            "unital_residual": self.unital_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def weighted_hom_decompose(phi: LinearMapMatrix, tol: float = 1e-9, trials: int = 50, seed: int = 0):
    """Write a bijective zero-product preserving phi as h rho(-).

    h = phi(1) has to be central (scalar on each block, since the multiplier
    algebra of B is B) and rho = h^-1 phi(-) a unital isomorphism.
    Returns (h, rho, report).
    """
    if phi.condition() >= MAX_COND:
        raise NotBijective("not bijective")
    zp = pair_preserves_zero_products(phi, phi, seed=seed, tol=tol)
    if not zp.holds:
        raise NotZeroProductPreserving("does not preserve zero products")
    one = AlgebraElement.identity(phi.domain_shape)
    h = phi(one)
    # phi is onto, so commuting with phi(basis) means commuting with all of B
    central = max((h @ phi(e) - phi(e) @ h).norm() for e in standard_basis(phi.domain_shape))
    if central > tol * max(1.0, phi.norm() * h.norm()):
        raise NotCentral("weight not central")
    if condition_number(h) >= MAX_COND:
        raise NotInvertible("φ(1) not invertible")
    rho = LinearMapMatrix.left_multiplication(inverse(h)).compose(phi)
    report = WeightedHomReport(
        zero_product_deviation=zp.max_deviation,
        central_residual=central,
        mult_residual=multiplicativity_residual(rho, trials, seed),
        unital_residual=(rho(one) - AlgebraElement.identity(phi.codomain_shape)).norm(),
        tolerance=tol,
    )
    return h, rho, report


# derivations at a point


def derivation_at_c_check(delta: LinearMapMatrix, c: AlgebraElement, fiber: FiberSample,
                          tol: float = 1e-8) -> MapCheck:
    """delta(c) = delta(a) b + a delta(b) over the fiber pairs.

    Each deviation is divided by max(1, ||a|| ||b||) before comparing with
    tol * (1 + ||delta||): fiber pairs through ill-conditioned factors carry
    rounding error proportional to ||a|| ||b||.
    """
    if not fiber.pairs:
        raise ValueError("empty fiber")
    if fiber.target.shape != c.shape or not fiber.target.allclose(c, 1e-12):
        raise ValueError("fiber does not target c")
    dc = delta(c)
    worst, arg = 0.0, None
    for a, b in fiber.pairs:
        dev = (dc - delta(a) @ b - a @ delta(b)).norm() / max(1.0, a.norm() * b.norm())
        if dev > worst:
            worst, arg = dev, (a, b)
    return MapCheck(worst <= tol * (1.0 + delta.norm()), worst, arg)


@dataclass(frozen=True, eq=False)
class DerivationReport:
    xi: AlgebraElement
    d: LinearMapMatrix
    leibniz_residual: float
    centrality_residual: float
    xi_c_residual: float
    fiber_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.leibniz_residual, self.centrality_residual, self.xi_c_residual) <= self.tolerance

    def to_json(self) -> dict:
        return {
            "xi": self.xi.to_json(),
            "leibniz_residual": self.leibniz_residual,
            "centrality_residual": self.centrality_residual,
            "xi_c_residual": self.xi_c_residual,
            "fiber_deviation": self.fiber_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def leibniz_residual(d: LinearMapMatrix, trials: int = 50, seed: int = 0) -> float:
    return max(((d(a @ b) - d(a) @ b - a @ d(b)).norm()
                for a, b in _random_pairs(d.domain_shape, trials, seed, 23)), default=0.0)


def derivation_decompose(delta: LinearMapMatrix, c: AlgebraElement, tol: float = 1e-8, samples: int = 64,
                         seed: int = 0, trials: int = 50, fiber: FiberSample | None = None) -> DerivationReport:
    """Split a map derivable at c as delta = d + xi(-).

    xi = delta(1), because a derivation of a unital algebra kills 1; then
    d = delta - xi(-).  Raises NotDerivable when delta fails the fiber test.
    """
    if delta.domain_shape != delta.codomain_shape or c.shape != delta.domain_shape:
        raise ShapeMismatch("delta must map the algebra of c into itself")
    if fiber is None:
        fiber = sample_fiber(c, samples, seed)
    check = derivation_at_c_check(delta, c, fiber, tol)
    if not check.holds:
        raise NotDerivable("not derivable at c", check.worst, check.max_deviation)
    shape = delta.domain_shape
    xi = delta(AlgebraElement.identity(shape))
    d = delta - LinearMapMatrix.left_multiplication(xi)
    central = max((xi @ e - e @ xi).norm() for e in standard_basis(shape))
    return DerivationReport(
        xi=xi,
        d=d,
        leibniz_residual=leibniz_residual(d, trials, seed),
        centrality_residual=central,
        xi_c_residual=(xi @ c).norm(),
        fiber_deviation=check.max_deviation,
        tolerance=tol,
    )
