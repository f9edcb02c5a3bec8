"""Rank-one operators, minimal partial isometries and SVD-based structure.

A rank-one operator ``e (x) f`` acts by ``h -> <h, f> e``; as a matrix its
entry (p, q) is ``e[p] * conj(f[q])``.  Vectors are stored normalized and the
magnitude is carried by the coefficient of a decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    EPS,
    AlgebraElement,
    ShapeMismatch,
    adjoint,
    as_shape,
    rank_threshold,
)


class NotAZeroProductPair(ValueError):
    pass


class NotAPartialIsometry(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RankOneOperator:
    block: int
    e: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=complex).reshape(-1)
        f = np.asarray(self.f, dtype=complex).reshape(-1)
        if e.shape != f.shape:
            raise ShapeMismatch(f"e has length {e.size}, f has length {f.size}")
        e.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)

    @classmethod
    def normalized(cls, block: int, e, f) -> RankOneOperator:
        e = np.asarray(e, dtype=complex)
        f = np.asarray(f, dtype=complex)
        return cls(block, e / np.linalg.norm(e), f / np.linalg.norm(f))

    @classmethod
    def matrix_unit(cls, block: int, n: int, i: int, j: int) -> RankOneOperator:
        """e_i (x) e_j = e_{ij} in a block of size n (0-based indices)."""
        eye = np.eye(n)
        return cls(block, eye[i], eye[j])

    @property
    def n(self) -> int:
        return self.e.size

    def matrix(self) -> np.ndarray:
        return np.outer(self.e, self.f.conj())

    def to_element(self, shape) -> AlgebraElement:
        return rank_one_to_element(self, shape)

    def to_json(self) -> dict:
        return {"block": self.block, "e": _cvec(self.e), "f": _cvec(self.f)}


def _cvec(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v).reshape(-1)]


def _from_cvec(raw) -> np.ndarray:
    arr = np.asarray(raw, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def rank_one_to_element(u: RankOneOperator, shape) -> AlgebraElement:
    shape = as_shape(shape)
    if not 0 <= u.block < shape.k:
        raise IndexError(f"block {u.block} out of range")
    if u.n != shape.block_dims[u.block]:
        raise ShapeMismatch(f"vectors of length {u.n} for a block of size {shape.block_dims[u.block]}")
    return AlgebraElement.from_block(shape, u.block, u.matrix())


@dataclass(frozen=True)
class MinPiDecomposition:
    """``source = sum(lam * u)`` with mutually orthogonal minimal partial isometries."""

    terms: tuple[tuple[float, RankOneOperator], ...]
    source_shape: object = field(default=None)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def reconstruct(self) -> AlgebraElement:
        shape = as_shape(self.source_shape)
        blocks = [np.zeros((n, n), dtype=complex) for n in shape]
        for lam, u in self.terms:
            blocks[u.block] += lam * u.matrix()
        return AlgebraElement(shape, blocks)

    def in_block(self, i: int) -> list[tuple[float, RankOneOperator]]:
        return [(lam, u) for lam, u in self.terms if u.block == i]

    def to_json(self) -> list:
        return [{"block": u.block, "lambda": float(lam), "e": _cvec(u.e), "f": _cvec(u.f)}
                for lam, u in self.terms]

    @classmethod
    def from_json(cls, data: list, shape) -> MinPiDecomposition:
        terms = tuple((float(t["lambda"]), RankOneOperator(int(t["block"]), _from_cvec(t["e"]), _from_cvec(t["f"])))
                      for t in data)
        return cls(terms, as_shape(shape))


def _fix_phase(e: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # the pair (e, f) is only defined up to a common unit phase;
    # make the largest entry of e real positive (first index on ties)
    k = int(np.argmax(np.abs(e) > np.abs(e).max() * (1 - 1e-12)))
    phase = e[k] / abs(e[k])
    return e / phase, f / phase


def minpi_decompose(a: AlgebraElement, tol: float = EPS) -> MinPiDecomposition:
    """Blockwise SVD written as a sum of weighted rank-one partial isometries.

    Singular values at or below the rank threshold of ``a`` are dropped, so
    the number of terms in block ``i`` equals ``rank_profile(a).ranks[i]``.
    """
    terms = []
    if a.norm() == 0:
        return MinPiDecomposition((), a.shape)
    thr = rank_threshold(a, tol)
    for i, blk in enumerate(a.blocks):
        U, s, Vh = np.linalg.svd(blk)
        for j in range(s.size):
            if s[j] <= thr:
                break
            e, f = _fix_phase(U[:, j], Vh[j].conj())
            terms.append((float(s[j]), RankOneOperator(i, e, f)))
    return MinPiDecomposition(tuple(terms), a.shape)


def is_minimal_partial_isometry(a: AlgebraElement, tol: float = EPS) -> bool:
    """Single-block, numerically rank one, and ``a a* a = a``."""
    scale = a.norm()
    if scale == 0:
        return False
    if len(a.support(tol * scale)) != 1:
        return False
    d = minpi_decompose(a, tol)
    if len(d) != 1:
        return False
    return ((a @ adjoint(a) @ a) - a).norm() <= tol * max(1.0, scale)


def is_partial_isometry(e: AlgebraElement, tol: float = EPS) -> bool:
    return ((e @ adjoint(e) @ e) - e).norm() <= tol * max(1.0, e.norm())


def are_orthogonal(a: AlgebraElement, b: AlgebraElement, tol: float = EPS) -> bool:
    """a b* = 0 and b* a = 0, relative to ||a|| ||b||."""
    bound = tol * a.norm() * b.norm()
    bs = adjoint(b)
    return (a @ bs).norm() <= bound and (bs @ a).norm() <= bound


def rank_one_product_zero(u: RankOneOperator, v: RankOneOperator, tol: float = EPS) -> bool:
    """u v = 0, i.e. f_u is orthogonal to e_v (always true across blocks)."""
    if u.block != v.block:
        return True
    if u.n != v.n:
        raise ShapeMismatch("rank-one operators on the same block with different sizes")
    return abs(np.vdot(u.f, v.e)) <= tol * np.linalg.norm(u.f) * np.linalg.norm(v.e)


def zp_decompose_pair(x: AlgebraElement, y: AlgebraElement, tol: float = EPS):
    """Decompose a zero-product pair into termwise zero-product rank-ones.

    Returns the two MinPI decompositions; every product ``u_i v_j`` of a term
    of ``x`` with a term of ``y`` is checked to be at most ``10 * tol``.
    """
    x._check(y)
    if (x @ y).norm() > tol * x.norm() * y.norm():
        raise NotAZeroProductPair("not a zero-product pair")
    dx = minpi_decompose(x, tol)
    dy = minpi_decompose(y, tol)
    worst = 0.0
    for _, u in dx:
        for _, v in dy:
            if u.block == v.block:
                worst = max(worst, abs(np.vdot(u.f, v.e)))
    if worst > 10 * tol:
        raise NotAZeroProductPair(f"cross-product residual too large ({worst:.3e})")
    return dx, dy


def odd_cube_root(a: AlgebraElement, tol: float = EPS) -> AlgebraElement:
    """The b with b b* b = a, via U diag(s^(1/3)) V* on every block.

    Singular values at or below the rank threshold are treated as zero: the
    cube root would otherwise blow rounding noise of 1e-16 up to 1e-5 and
    destroy the zero products that b is supposed to inherit from a.
    """
    thr = rank_threshold(a, tol) if a.norm() > 0 else 0.0
    blocks = []
    for blk in a.blocks:
        U, s, Vh = np.linalg.svd(blk)
        blocks.append((U * np.where(s > thr, np.cbrt(s), 0.0)) @ Vh)
    return AlgebraElement(a.shape, blocks)


def support_projections(a: AlgebraElement, tol: float = EPS) -> tuple[AlgebraElement, AlgebraElement]:
    """Left and right support projections (range of a, and of a*)."""
    d = minpi_decompose(a, tol)
    left = [np.zeros((n, n), dtype=complex) for n in a.shape]
    right = [np.zeros((n, n), dtype=complex) for n in a.shape]
    for _, u in d:
        left[u.block] += np.outer(u.e, u.e.conj())
        right[u.block] += np.outer(u.f, u.f.conj())
    return AlgebraElement(a.shape, left), AlgebraElement(a.shape, right)


def peirce_decompose(a: AlgebraElement, e: AlgebraElement, tol: float = EPS):
    """Split ``a`` into Peirce 2, 1 and 0 components relative to ``e``."""
    a._check(e)
    if not is_partial_isometry(e, tol):
        raise NotAPartialIsometry("not a partial isometry")
    one = AlgebraElement.identity(a.shape)
    left = e @ adjoint(e)
    right = adjoint(e) @ e
    a2 = left @ a @ right
    a0 = (one - left) @ a @ (one - right)
    a1 = a - a2 - a0
    return a2, a1, a0
