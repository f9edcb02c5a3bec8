"""Bilinear maps V: A x A -> C^m as coefficient tensors, and fiber sampling.

``coeffs[k, i, j]`` is the k-th output on the i-th and j-th basis elements of
the fixed vectorization, so the linearization on A (x) A is
``coeffs.reshape(m, d*d)`` acting on ``kron(vec(a), vec(b))``.

At a single point c, "V(a, b) = phi(ab) whenever ab = c" only says that V is
constant on the fiber {(a, b) : ab = c}; that is what gets tested.  The
algebra is determined by products at c exactly when the differences
a (x) b - a' (x) b' over the fiber span the kernel of the linearized
multiplication, whose dimension is dim(A)^2 - dim(A).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .algebra import (
    EPS,
    AlgebraElement,
    ShapeMismatch,
    as_shape,
    complex_gaussian,
    condition_number,
    random_element,
    rank_profile,
    rng_for,
    satisfies_rank_hypothesis,
)
from .factorization import (
    factorize_through,
    random_zero_product_rank_ones,
    structured_zero_pairs,
    zero_fiber_generators,
)
from .rank import RankOneOperator

RANK_TOL = 1e-7
FIBER_TOL = 1e-9
MAX_COND = 1e4


@lru_cache(maxsize=32)
def _mult_tensor(block_dims: tuple[int, ...]) -> np.ndarray:
    shape = as_shape(block_dims)
    d = shape.dim
    mu = np.zeros((d, d * d))
    for p, n in enumerate(block_dims):
        for r in range(n):
            for s in range(n):
                k = shape.index(p, r, s)
                for t in range(n):
                    mu[k, shape.index(p, r, t) * d + shape.index(p, t, s)] = 1.0
    mu.setflags(write=False)
    return mu


def multiplication_matrix(shape) -> np.ndarray:
    """The linearized product A (x) A -> A as a dim(A) x dim(A)^2 0/1 matrix."""
    return _mult_tensor(as_shape(shape).block_dims)


class BilinearMap:
    def __init__(self, shape, coeffs):
        shape = as_shape(shape)
        coeffs = np.array(coeffs, dtype=complex)
        d = shape.dim
        if coeffs.ndim != 3 or coeffs.shape[1:] != (d, d) or coeffs.shape[0] < 1:
            raise ShapeMismatch(f"coefficient tensor {coeffs.shape} for dim {d}")
        coeffs.setflags(write=False)
        self.shape = shape
        self.coeffs = coeffs

    @property
    def codomain_dim(self) -> int:
        return self.coeffs.shape[0]

    def linearized(self) -> np.ndarray:
        d = self.shape.dim
        return self.coeffs.reshape(self.codomain_dim, d * d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __call__(self, a, b):
        return evaluate(self, a, b)

    def evaluate_many(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Rows of A and B are vectorized elements; returns one output row per pair."""
        return np.einsum("kij,pi,pj->pk", self.coeffs, A, B, optimize=True)

    @classmethod
    def from_product(cls, shape, psi) -> BilinearMap:
        """V(a, b) = psi(ab) for a linear psi given as an m x dim(A) matrix."""
        shape = as_shape(shape)
        psi = np.atleast_2d(np.asarray(psi, dtype=complex))
        d = shape.dim
        return cls(shape, (psi @ multiplication_matrix(shape)).reshape(-1, d, d))

    @classmethod
    def trace_product(cls, shape) -> BilinearMap:
        shape = as_shape(shape)
        tr = AlgebraElement.identity(shape).vec()[None, :]
        return cls.from_product(shape, tr)

    @classmethod
    def from_function(cls, shape, fn, codomain_dim: int) -> BilinearMap:
        """Tabulate ``fn(a, b) -> vector`` on all pairs of basis elements."""
        shape = as_shape(shape)
        d = shape.dim
        eye = np.eye(d)
        basis = [AlgebraElement.from_vector(shape, eye[i]) for i in range(d)]
        coeffs = np.zeros((codomain_dim, d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                coeffs[:, i, j] = np.asarray(fn(basis[i], basis[j]), dtype=complex).reshape(-1)
        return cls(shape, coeffs)

    @classmethod
    def zero(cls, shape, codomain_dim: int = 1) -> BilinearMap:
        shape = as_shape(shape)
        return cls(shape, np.zeros((codomain_dim, shape.dim, shape.dim)))


def evaluate(V: BilinearMap, a: AlgebraElement, b: AlgebraElement) -> np.ndarray:
    if a.shape != V.shape or b.shape != V.shape:
        raise ShapeMismatch(f"map on {V.shape}, arguments on {a.shape} and {b.shape}")
    return np.einsum("kij,i,j->k", V.coeffs, a.vec(), b.vec())


def _stack(pairs):
    A = np.array([a.vec() for a, _ in pairs])
    B = np.array([b.vec() for _, b in pairs])
    return A, B


# fiber sampling


@dataclass(frozen=True, eq=False)
class FiberSample:
    pairs: tuple
    target: AlgebraElement
    max_residual: float
    seed: int = 0
    strategies: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)


def _invertible(shape, rng) -> AlgebraElement:
    for _ in range(100):
        g = random_element(shape, rng, "invertible-gaussian")
        if condition_number(g) <= MAX_COND:
            return g
    raise RuntimeError("degenerate RNG stream")


def _pinv_pair(c: AlgebraElement, rng):
    """A random point of the fiber through a (generally singular) left factor.

    a has range containing range(c); b = a^+ c + (1 - a^+ a) k.
    """
    blocks_a, blocks_b = [], []
    for n, cb in zip(c.shape.block_dims, c.blocks):
        U, s, _ = np.linalg.svd(cb)
        r0 = int(np.sum(s > FIBER_TOL * max(s[0], 1e-300)))
        r = max(int(rng.integers(r0, n + 1)), 1)
        L = np.hstack([U[:, :r0], complex_gaussian(rng, n, r - r0)]) @ complex_gaussian(rng, r, r)
        a = L @ complex_gaussian(rng, r, n)
        ap = np.linalg.pinv(a)
        b = ap @ cb + (np.eye(n) - ap @ a) @ complex_gaussian(rng, n, n)
        blocks_a.append(a)
        blocks_b.append(b)
    return AlgebraElement(c.shape, blocks_a), AlgebraElement(c.shape, blocks_b)


def _component_weights(shape):
    # dimension of each same-block / cross-block piece of ker(multiplication)
    comps, weights = [], []
    for p, n in enumerate(shape.block_dims):
        for q, m in enumerate(shape.block_dims):
            if p == q:
                if n >= 2:
                    comps.append((p, q))
                    weights.append(n ** 4 - n ** 2)
            else:
                comps.append((p, q))
                weights.append(n * n * m * m)
    w = np.asarray(weights, dtype=float)
    return comps, w / w.sum()


def _random_rank_one_pair(shape, rng):
    comps, probs = _component_weights(shape)
    p, q = comps[int(rng.choice(len(comps), p=probs))]
    if p == q:
        return random_zero_product_rank_ones(shape.block_dims[p], rng, p)
    n, m = shape.block_dims[p], shape.block_dims[q]
    u = RankOneOperator.normalized(p, complex_gaussian(rng, n), complex_gaussian(rng, n))
    v = RankOneOperator.normalized(q, complex_gaussian(rng, m), complex_gaussian(rng, m))
    return u, v


def sample_fiber(c: AlgebraElement, count: int, seed: int = 0) -> FiberSample:
    """Seeded sample of pairs (a, b) with ab = c.

    The first pair is (1, c).  For c = 0 the rest is drawn from the
    zero-product generator pool.  Otherwise draws cycle through
    (g, g^-1 c), (c g, g^-1), a pseudo-inverse parametrization of the fiber
    and, when the rank hypothesis holds, quadruples (a + s x, b + t y) built
    around a factorization witness (a, b) of c through a random rank-one
    pair (x, y).  Draw ``i`` only depends on ``(seed, i)``.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    shape = c.shape
    one = AlgebraElement.identity(shape)
    pairs = [(one, c)]
    used = {"unit": 1}
    bound = FIBER_TOL * (1.0 + c.norm())

    if c.norm() == 0:
        pool = structured_zero_pairs(shape)
        if len(pool) >= count - 1:
            idx = np.sort(rng_for(seed, 3).choice(len(pool), size=count - 1, replace=False))
            pool = [pool[i] for i in idx]
        pairs.extend(pool)
        used["matrix units"] = len(pool)
        t = 0
        while len(pairs) < count:
            u, v = _random_rank_one_pair(shape, rng_for(seed, 3, t))
            pairs.append((u.to_element(shape), v.to_element(shape)))
            t += 1
        used["rank-one pairs"] = t
        return FiberSample(tuple(pairs), c, 0.0, seed, used)

    rh, _ = satisfies_rank_hypothesis(c)
    cycle = ["witness", "witness", "left", "right", "pinv"] if rh else ["left", "right", "pinv"]
    worst = (one @ c - c).norm()
    i = 0
    while len(pairs) < count:
        rng = rng_for(seed, 2, i)
        kind = cycle[i % len(cycle)]
        i += 1
        if kind == "left":
            g = _invertible(shape, rng)
            g_inv = _inverse(g)
            new = [(g, g_inv @ c)]
        elif kind == "right":
            g = _invertible(shape, rng)
            new = [(c @ g, _inverse(g))]
        elif kind == "pinv":
            new = [_pinv_pair(c, rng)]
        else:
            u, v = _random_rank_one_pair(shape, rng)
            w = factorize_through(c, u, v)
            x, y = u.to_element(shape), v.to_element(shape)
            s, t = complex_gaussian(rng, 2)
            a, b = w.a, w.b
            new = [(a, b), (a + s * x, b), (a, b + t * y), (a + s * x, b + t * y)]
        for a, b in new:
            res = ((a @ b) - c).norm()
            if res > bound:
                continue
            worst = max(worst, res)
            pairs.append((a, b))
            used[kind] = used.get(kind, 0) + 1
            if len(pairs) >= count:
                break
        if i > 50 * count:
            raise RuntimeError("fiber sampler keeps producing inaccurate pairs")
    return FiberSample(tuple(pairs), c, worst, seed, used)


def _inverse(g: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(g.shape, [np.linalg.inv(b) for b in g.blocks])


# product-property tests


class PropertyCheck(NamedTuple):
    holds: bool
    max_deviation: float
    worst: object = None


def has_product_property_at(V: BilinearMap, c: AlgebraElement, fiber: FiberSample, tol: float = 1e-8) -> PropertyCheck:
    """V is constant on the sampled fiber, up to tol * (1 + ||V||)."""
    if not fiber.pairs:
        raise ValueError("empty fiber")
    if fiber.target.shape != c.shape or not fiber.target.allclose(c, 1e-12):
        raise ValueError("fiber does not target c")
    A, B = _stack(fiber.pairs)
    vals = V.evaluate_many(A, B)
    dev = np.linalg.norm(vals - vals[0], axis=1)
    k = int(np.argmax(dev))
    worst = float(dev[k])
    return PropertyCheck(worst <= tol * (1.0 + V.norm()), worst, fiber.pairs[k])


def default_pool_count(shape) -> int:
    return max(as_shape(shape).block_dims) ** 4 + 8


def vanishes_on_zero_products(V: BilinearMap, shape=None, tol: float = 1e-8, seed: int = 0,
                              count: int | None = None) -> PropertyCheck:
    """max |V(x, y)| over the zero-product generator pool is at most tol * ||V||.

    The default pool is large enough for its tensors to span the kernel of
    multiplication, so a pass certifies V kills every zero-product pair.
    """
    shape = V.shape if shape is None else as_shape(shape)
    if shape != V.shape:
        raise ShapeMismatch(f"map on {V.shape}, pool requested on {shape}")
    pool = zero_fiber_generators(shape, count or default_pool_count(shape), seed)
    A, B = _stack(pool)
    vals = np.linalg.norm(V.evaluate_many(A, B), axis=1)
    k = int(np.argmax(vals))
    worst = float(vals[k])
    return PropertyCheck(worst <= tol * V.norm(), worst, pool[k])


class Factorization(NamedTuple):
    psi: np.ndarray
    residual: float


def factor_through_multiplication(V: BilinearMap, tol: float = 1e-10, seed: int = 0, trials: int = 32) -> Factorization:
    """Least-squares psi with V ~ psi(ab); residual = worst |V(x, y) - psi(xy)|.

    The residual is taken over all pairs of basis elements and ``trials``
    seeded random pairs of unit norm.  It is (numerically) zero exactly when
    V kills ker(multiplication).  ``tol`` is only the lstsq cutoff.
    """
    shape = V.shape
    mu = multiplication_matrix(shape)
    Vt = V.linearized()
    sol, *_ = np.linalg.lstsq(mu.T.astype(complex), Vt.T, rcond=tol)
    psi = sol.T
    diff = Vt - psi @ mu
    residual = float(np.max(np.linalg.norm(diff, axis=0))) if diff.size else 0.0
    rng = rng_for(seed, 4)
    for _ in range(trials):
        x = random_element(shape, rng)
        y = random_element(shape, rng)
        x, y = x / x.norm(), y / y.norm()
        r = np.linalg.norm(evaluate(V, x, y) - psi @ (x @ y).vec())
        residual = max(residual, float(r))
    return Factorization(psi, residual)


# counterexamples


def costara_counterexample(n: int):
    """c = I_{n-1} (+) 0 in M_n and V(a, b) = a_nn b_nn."""
    if n < 2:
        raise ValueError("n must be at least 2")
    shape = as_shape((n,))
    c = AlgebraElement(shape, [np.diag([1.0] * (n - 1) + [0.0])])
    coeffs = np.zeros((1, n * n, n * n))
    k = shape.index(0, n - 1, n - 1)
    coeffs[0, k, k] = 1.0
    return c, BilinearMap(shape, coeffs)


def costara_witness(n: int):
    """Zero-product pair on which the Costara map takes the value 4."""
    if n < 2:
        raise ValueError("n must be at least 2")
    a = np.zeros((n, n))
    b = np.zeros((n, n))
    a[n - 2:, n - 2:] = [[1, 1], [2, 2]]
    b[n - 2:, n - 2:] = [[-1, -2], [1, 2]]
    return AlgebraElement((n,), [a]), AlgebraElement((n,), [b])


def _transpose_coeffs(n: int, C: np.ndarray) -> np.ndarray:
    # V(a, b) = (b C a)^t, output (p, q) row-major
    coeffs = np.zeros((n * n, n * n, n * n), dtype=complex)
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    coeffs[p * n + q, s * n + p, q * n + r] += C[r, s]
    return coeffs


def transpose_counterexample(n: int):
    """c = I_n in M_n and V(a, b) = a^t b^t = (ba)^t."""
    if n < 2:
        raise ValueError("n must be at least 2")
    shape = as_shape((n,))
    return AlgebraElement.identity(shape), BilinearMap(shape, _transpose_coeffs(n, np.eye(n)))


def transpose_witness(n: int):
    """(e12, e11): the product is 0 but the transpose map gives e21."""
    shape = as_shape((n,))
    return AlgebraElement.unit(shape, 0, 0, 1), AlgebraElement.unit(shape, 0, 0, 0)


@dataclass(frozen=True, eq=False)
class Certificate:
    """A map constant on the fiber of c that does not kill a zero-product pair."""

    name: str
    block: int
    V: BilinearMap
    x: AlgebraElement
    y: AlgebraElement
    value: float
    fiber_deviation: float = float("nan")

    def to_json(self) -> dict:
        return {"name": self.name, "block": self.block, "value": self.value,
                "fiber_deviation": self.fiber_deviation,
                "x": self.x.to_json(), "y": self.y.to_json()}


def _lift_coeffs(shape, i: int, block_coeffs: np.ndarray) -> np.ndarray:
    d = shape.dim
    sl = shape.block_slice(i)
    out = np.zeros((block_coeffs.shape[0], d, d), dtype=complex)
    out[:, sl, sl] = block_coeffs
    return out


def block_certificates(c: AlgebraElement, tol: float = EPS) -> list[Certificate]:
    """Candidate separating maps for every block where c has rank n-1 or n.

    Rank n-1: a_nn b_nn transported along c_i = P (I_{n-1} (+) 0) Q.
    Rank n: (b c_i^-1 a)^t.  Both are read on block i only.
    """
    shape = c.shape
    prof = rank_profile(c, tol)
    certs = []
    for i, (n, r) in enumerate(zip(shape.block_dims, prof.ranks)):
        if n < 2 or r < n - 1:
            continue
        ci = np.asarray(c.blocks[i])
        if r == n - 1:
            U, s, Vh = np.linalg.svd(ci)
            P = U * np.concatenate([s[:n - 1], [1.0]])
            Pinv = np.linalg.inv(P)
            Vm = Vh.conj().T
            bc = np.zeros((1, n * n, n * n), dtype=complex)
            for rr in range(n):
                for ss in range(n):
                    bc[0, rr * n + (n - 1), (n - 1) * n + ss] = Pinv[n - 1, rr] * Vm[ss, n - 1]
            a0, b0 = costara_witness(n)
            x = AlgebraElement.from_block(shape, i, P @ a0.blocks[0])
            y = AlgebraElement.from_block(shape, i, b0.blocks[0] @ Vh)
            name = "costara"
        else:
            bc = _transpose_coeffs(n, np.linalg.inv(ci))
            x = AlgebraElement.from_block(shape, i, ci @ AlgebraElement.unit((n,), 0, 0, 1).blocks[0])
            y = AlgebraElement.unit(shape, i, 0, 0)
            name = "transpose"
        V = BilinearMap(shape, _lift_coeffs(shape, i, bc))
        certs.append(Certificate(name, i, V, x, y, float(np.linalg.norm(evaluate(V, x, y)))))
    return certs


def validate_certificate(cert: Certificate, c: AlgebraElement, fiber: FiberSample, tol: float = 1e-8) -> Certificate | None:
    """Keep ``cert`` only if it is constant on the fiber and separates its witness."""
    if (cert.x @ cert.y).norm() > tol * max(1.0, cert.x.norm() * cert.y.norm()):
        return None
    chk = has_product_property_at(cert.V, c, fiber, tol)
    if not chk.holds or cert.value < 0.5:
        return None
    return Certificate(cert.name, cert.block, cert.V, cert.x, cert.y, cert.value, chk.max_deviation)


# determinedness


@dataclass(frozen=True, eq=False)
class DeterminednessReport:
    measured_rank: int
    expected_rank: int
    verdict: str
    samples_used: int
    tolerance: float
    seed: int = 0
    certificate: Certificate | None = None
    max_mu_residual: float = 0.0
    ranks: tuple = ()
    rank_hypothesis: bool = False

    def to_json(self) -> dict:
        return {
            "measured_rank": self.measured_rank,
            "expected_rank": self.expected_rank,
            "verdict": self.verdict,
            "samples": self.samples_used,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "rank_profile": list(self.ranks),
            "rank_hypothesis": self.rank_hypothesis,
            "max_mu_residual": self.max_mu_residual,
            "certificate": None if self.certificate is None else self.certificate.to_json(),
        }


def fiber_difference_matrix(fiber: FiberSample) -> np.ndarray:
    """Rows kron(a, b) - kron(a0, b0) over the fiber, each scaled to unit norm."""
    A, B = _stack(fiber.pairs)
    P, d = A.shape
    rows = (A[:, :, None] * B[:, None, :]).reshape(P, d * d)
    scale = np.linalg.norm(rows[1:], axis=1) + np.linalg.norm(rows[0])
    rows = rows[1:] - rows[0]
    nrm = np.linalg.norm(rows, axis=1)
    # rows that are rounding noise must not be blown up to unit norm
    keep = nrm > 1e-12 * scale
    return rows[keep] / nrm[keep, None]


def numerical_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def determinedness_rank(shape, c: AlgebraElement, sample_count: int | None = None, seed: int = 0,
                        tol: float = RANK_TOL) -> DeterminednessReport:
    """Monte-Carlo dimension of span(fiber differences) against dim ker(mult).

    Verdicts: "determined-consistent" when the measured rank is full;
    "not-determined" when a block certificate validates on the sample;
    "inconclusive" for a rank deficit with no certificate.
    """
    shape = as_shape(shape)
    if c.shape != shape:
        raise ShapeMismatch(f"c lives in {c.shape}, not {shape}")
    d = shape.dim
    if sample_count is None:
        sample_count = 4 * d * d
    if sample_count < 4 * d * d:
        raise ValueError(f"need at least 4*dim(A)^2 = {4 * d * d} samples, got {sample_count}")
    fiber = sample_fiber(c, sample_count, seed)
    A, B = _stack(fiber.pairs)
    rows = (A[:, :, None] * B[:, None, :]).reshape(len(A), d * d)
    diffs = rows[1:] - rows[0]
    mu_res = np.linalg.norm(diffs @ multiplication_matrix(shape).T, axis=1)
    max_mu = float(mu_res.max()) if mu_res.size else 0.0
    if max_mu > 2 * FIBER_TOL * (1.0 + c.norm()):
        raise AssertionError(f"fiber difference left ker(multiplication): {max_mu:.3e}")
    measured = numerical_rank(fiber_difference_matrix(fiber), tol)
    expected = d * d - d
    rh, prof = satisfies_rank_hypothesis(c)

    cert = None
    for candidate in block_certificates(c):
        cert = validate_certificate(candidate, c, fiber)
        if cert is not None:
            break
    if cert is not None:
        verdict = "not-determined"
    elif measured == expected:
        verdict = "determined-consistent"
    else:
        verdict = "inconclusive"
    return DeterminednessReport(measured, expected, verdict, len(fiber), tol, seed, cert, max_mu,
                                prof.ranks, rh)


def zero_product_span_rank(shape, count: int | None = None, seed: int = 0, tol: float = RANK_TOL) -> int:
    """dim span{x (x) y : (x, y) in the zero-product generator pool}."""
    shape = as_shape(shape)
    pool = zero_fiber_generators(shape, count or default_pool_count(shape), seed)
    A, B = _stack(pool)
    d = shape.dim
    rows = (A[:, :, None] * B[:, None, :]).reshape(len(A), d * d)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return numerical_rank(rows, tol)


# balanced identity


class BalancedCheck(NamedTuple):
    holds: bool
    skipped: bool
    max_deviation: float
    worst: object = None


def balanced_identity_check(V: BilinearMap, shape=None, trials: int = 200, seed: int = 0, tol: float = 1e-8) -> BalancedCheck:
    """V(ax, b) = V(a, xb) on random triples, for V that kills zero products.

    If V does not vanish on zero products the check is skipped and the
    offending generator pair is returned as ``worst``.
    """
    pre = vanishes_on_zero_products(V, shape, tol, seed)
    if not pre.holds:
        return BalancedCheck(False, True, pre.max_deviation, pre.worst)
    shape = V.shape
    scale = max(V.norm(), 1e-300)
    worst, worst_triple = 0.0, None
    for t in range(trials):
        rng = rng_for(seed, 5, t)
        a, x, b = (random_element(shape, rng) for _ in range(3))
        dev = np.linalg.norm(evaluate(V, a @ x, b) - evaluate(V, a, x @ b))
        dev /= scale * a.norm() * x.norm() * b.norm()
        if dev > worst:
            worst, worst_triple = float(dev), (a, x, b)
    return BalancedCheck(worst <= tol, False, worst, worst_triple)
