"""Explicit factorizations of c through zero-product pairs.

Given x y = 0, a witness is a pair (a, b) with a y = 0, x b = 0 and a b = c.
Inside one matrix block the witness is built from the SVD of c and an
orthonormal family h_n that avoids the relevant ranges/kernels:

    a = sum sqrt(alpha_n) e_n (x) h_n,    b = sum sqrt(alpha_n) h_n (x) f_n.

Direct sums are handled by padding with partial units 1_{!=i} and
truncations c_{!=i}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    EPS,
    AlgebraElement,
    ShapeMismatch,
    as_shape,
    drop_blocks,
    rank_threshold,
    rng_for,
    complex_gaussian,
    satisfies_rank_hypothesis,
    unit_except,
)
from .rank import NotAZeroProductPair, RankOneOperator, rank_one_product_zero

GS_DROP = 1e-6


class RankHypothesisViolated(ValueError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


class NoFactorization(ValueError):
    pass


def orthonormal_complement(vectors, n: int, drop: float = GS_DROP) -> np.ndarray:
    """Orthonormal basis (as columns) of the complement of span(vectors) in C^n.

    Standard basis vectors are projected off the span and off the vectors
    already accepted (modified Gram-Schmidt, two passes), in basis order;
    anything shorter than ``drop`` afterwards is discarded.
    """
    basis = _orthonormalize(vectors, n, drop)
    out = []
    for i in range(n):
        w = np.zeros(n, dtype=complex)
        w[i] = 1.0
        for _ in range(2):
            for q in basis + out:
                w = w - np.vdot(q, w) * q
        nrm = np.linalg.norm(w)
        if nrm >= drop:
            out.append(w / nrm)
    if not out:
        return np.zeros((n, 0), dtype=complex)
    return np.column_stack(out)


def _orthonormalize(vectors, n: int, drop: float) -> list[np.ndarray]:
    basis: list[np.ndarray] = []
    for v in vectors:
        w = np.asarray(v, dtype=complex).reshape(-1)
        if w.size != n:
            raise ShapeMismatch(f"vector of length {w.size} in C^{n}")
        start = np.linalg.norm(w)
        if start == 0:
            continue
        w = w / start
        for _ in range(2):
            for q in basis:
                w = w - np.vdot(q, w) * q
        nrm = np.linalg.norm(w)
        if nrm >= drop:
            basis.append(w / nrm)
    return basis


def _svd_terms(m: np.ndarray, thr: float):
    U, s, Vh = np.linalg.svd(m)
    k = int(np.sum(s > thr))
    return s[:k], U[:, :k], Vh[:k].conj().T


def _block_pair(c: np.ndarray, avoid, thr: float):
    """(a, b) with a b = c and range(b), row space of a orthogonal to ``avoid``.

    Raises NoFactorization if the complement of ``avoid`` is too small.
    """
    n = c.shape[0]
    alpha, E, F = _svd_terms(c, thr)
    k = alpha.size
    if k == 0:
        z = np.zeros((n, n), dtype=complex)
        return z, z.copy()
    H = orthonormal_complement(avoid, n)
    if H.shape[1] < k:
        raise NoFactorization(f"need {k} orthonormal vectors, complement has {H.shape[1]}")
    H = H[:, :k]
    root = np.sqrt(alpha)
    a = (E * root) @ H.conj().T
    b = (H * root) @ F.conj().T
    return a, b


@dataclass(frozen=True, eq=False)
class FactorizationWitness:
    a: AlgebraElement
    b: AlgebraElement
    residual_ay: float
    residual_xb: float
    residual_abc: float
    case: str = ""

    @property
    def max_residual(self) -> float:
        return max(self.residual_ay, self.residual_xb, self.residual_abc)

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "a": self.a.to_json(),
            "b": self.b.to_json(),
            "residual_ay": self.residual_ay,
            "residual_xb": self.residual_xb,
            "residual_abc": self.residual_abc,
        }


def make_witness(x, y, c, a, b, case: str = "") -> FactorizationWitness:
    return FactorizationWitness(
        a, b,
        residual_ay=(a @ y).norm(),
        residual_xb=(x @ b).norm(),
        residual_abc=((a @ b) - c).norm(),
        case=case,
    )


def verify_witness(x, y, c, w: FactorizationWitness, tol: float = EPS) -> bool:
    """Recompute a y, x b and a b - c; all must be at most tol * (1 + ||c||)."""
    for el in (y, c, w.a, w.b):
        x._check(el)
    bound = tol * (1.0 + c.norm())
    fresh = make_witness(x, y, c, w.a, w.b)
    return fresh.max_residual <= bound


def factorize_through_block(c_block, u: RankOneOperator, v: RankOneOperator, tol: float = EPS) -> FactorizationWitness:
    """Single-block witness for c through the rank-one pair (u, v) with u v = 0.

    The result lives in the one-block algebra M_n.
    """
    c_block = np.asarray(c_block, dtype=complex)
    n = c_block.shape[0]
    if c_block.shape != (n, n) or u.n != n or v.n != n:
        raise ShapeMismatch("c, u and v must live in the same block size")
    if abs(np.vdot(u.f, v.e)) > tol:
        raise NotAZeroProductPair("uv != 0")
    c = AlgebraElement((n,), [c_block])
    thr = rank_threshold(c, tol)
    ok, prof = satisfies_rank_hypothesis(c, tol)
    if not ok:
        raise RankHypothesisViolated(f"rank hypothesis violated: rank {prof.ranks[0]} > {n} - 2", prof)
    a, b = _block_pair(c_block, [u.f, v.e], thr)
    uu = RankOneOperator(0, u.e, u.f).to_element((n,))
    vv = RankOneOperator(0, v.e, v.f).to_element((n,))
    return make_witness(uu, vv, c, AlgebraElement((n,), [a]), AlgebraElement((n,), [b]), case="1")


def _aux_partner_right(u: RankOneOperator) -> RankOneOperator:
    # some v' in the same block with u v' = 0
    g = orthonormal_complement([u.f], u.n)[:, 0]
    return RankOneOperator(u.block, g, g)


def _aux_partner_left(v: RankOneOperator) -> RankOneOperator:
    # some u' in the same block with u' v = 0
    g = orthonormal_complement([v.e], v.n)[:, 0]
    return RankOneOperator(v.block, g, g)


def factorize_through(c: AlgebraElement, u: RankOneOperator, v: RankOneOperator, tol: float = EPS) -> FactorizationWitness:
    """Witness (a, b) for c through minimal partial isometries u, v with u v = 0.

    Dispatch on where u and v live and which blocks of c vanish:
    "1" single block algebra, "2.1" same block, "2.2" different blocks with
    c zero on both, "2.3" exactly one of them nonzero, "2.4" both nonzero.
    """
    shape = c.shape
    ok, prof = satisfies_rank_hypothesis(c, tol)
    if not ok:
        raise RankHypothesisViolated(f"rank hypothesis violated: ranks {list(prof.ranks)} for blocks {list(shape.block_dims)}", prof)
    if not rank_one_product_zero(u, v, tol):
        raise NotAZeroProductPair("uv != 0")
    thr = rank_threshold(c, tol)
    ue, ve = u.to_element(shape), v.to_element(shape)
    nonzero = [r > 0 for r in prof.ranks]
    mu, nu = u.block, v.block

    def block_part(i, avoid):
        a_i, b_i = _block_pair(np.asarray(c.blocks[i]), avoid, thr)
        return AlgebraElement.from_block(shape, i, a_i), AlgebraElement.from_block(shape, i, b_i)

    if mu == nu:
        a = unit_except(shape, mu)
        b = drop_blocks(c, mu)
        if nonzero[mu]:
            a_mu, b_mu = block_part(mu, [u.f, v.e])
            a, b = a + a_mu, b + b_mu
        case = "1" if shape.k == 1 else "2.1"
        return make_witness(ue, ve, c, a, b, case)

    a = unit_except(shape, mu, nu)
    b = drop_blocks(c, mu, nu)
    if not nonzero[mu] and not nonzero[nu]:
        return make_witness(ue, ve, c, a, b, "2.2")
    if nonzero[mu]:
        v_aux = _aux_partner_right(u)
        a_mu, b_mu = block_part(mu, [u.f, v_aux.e])
        a, b = a + a_mu, b + b_mu
    if nonzero[nu]:
        u_aux = _aux_partner_left(v)
        a_nu, b_nu = block_part(nu, [u_aux.f, v.e])
        a, b = a + a_nu, b + b_nu
    case = "2.4" if nonzero[mu] and nonzero[nu] else "2.3"
    return make_witness(ue, ve, c, a, b, case)


# generalized factorization


@dataclass(frozen=True, eq=False)
class WitnessPart:
    x: AlgebraElement
    y: AlgebraElement
    witness: FactorizationWitness


@dataclass(frozen=True, eq=False)
class GeneralizedWitness:
    """Witnesses for c through (x_p, y_q) where x = sum x_p and y = sum y_q.

    ``split_side`` is "none" (one part), "left" (x split, two parts),
    "right" (y split, two parts) or "both" (four parts).
    """

    split_side: str
    parts: tuple[WitnessPart, ...]
    x_split: tuple[AlgebraElement, ...]
    y_split: tuple[AlgebraElement, ...]
    case: str = ""

    def verify(self, x, y, c, tol: float = EPS) -> bool:
        bound = tol * max(1.0, x.norm(), y.norm())
        if (sum(self.x_split[1:], self.x_split[0]) - x).norm() > bound:
            return False
        if (sum(self.y_split[1:], self.y_split[0]) - y).norm() > bound:
            return False
        return all(verify_witness(p.x, p.y, c, p.witness, tol) for p in self.parts)

    @property
    def max_residual(self) -> float:
        return max(p.witness.max_residual for p in self.parts)

    def to_json(self) -> dict:
        return {
            "split_side": self.split_side,
            "case": self.case,
            "parts": [{"x": p.x.to_json(), "y": p.y.to_json(), "witness": p.witness.to_json()}
                      for p in self.parts],
        }


def _own_thr(m: np.ndarray, tol: float) -> float:
    return tol * (np.linalg.norm(m, 2) if m.size else 0.0) * m.shape[0]


def _row_and_range(m: np.ndarray, thr: float):
    _, U, V = _svd_terms(m, thr)
    return V, U


def _split_terms(m: np.ndarray, thr: float):
    """Split a block matrix into two pieces with disjoint SVD terms."""
    s, U, V = _svd_terms(m, thr)
    if s.size < 2:
        return None
    half = (s.size + 1) // 2
    first = (U[:, :half] * s[:half]) @ V[:, :half].conj().T
    return first, m - first


def _block_generalized(c: np.ndarray, x: np.ndarray, y: np.ndarray, thr: float, tol: float = EPS):
    """Generalized factorization of c through (x, y) inside one block.

    Returns (side, [(x_part, y_part, a, b), ...]) with side none/left/right.
    """
    def attempt(xp, yp):
        row_x, _ = _row_and_range(xp, _own_thr(xp, tol))
        _, range_y = _row_and_range(yp, _own_thr(yp, tol))
        avoid = list(row_x.T) + list(range_y.T)
        a, b = _block_pair(c, avoid, thr)
        return xp, yp, a, b

    try:
        return "none", [attempt(x, y)]
    except NoFactorization:
        pass
    xs = _split_terms(x, _own_thr(x, tol))
    if xs is not None:
        try:
            return "left", [attempt(xs[0], y), attempt(xs[1], y)]
        except NoFactorization:
            pass
    ys = _split_terms(y, _own_thr(y, tol))
    if ys is not None:
        try:
            return "right", [attempt(x, ys[0]), attempt(x, ys[1])]
        except NoFactorization:
            pass
    raise NoFactorization("no generalized factorization of the block through this pair")


def _annihilator_vector(m: np.ndarray, thr: float, side: str) -> np.ndarray:
    # unit vector g with m (g g*) = 0 (side "right") or (g g*) m = 0 (side "left")
    row, rng = _row_and_range(m, thr)
    span = row if side == "right" else rng
    comp = orthonormal_complement(list(span.T), m.shape[0])
    if comp.shape[1] == 0:
        raise NoFactorization("no nonzero annihilator in block")
    return comp[:, 0]


def _with_auxiliary(c: np.ndarray, x: np.ndarray, y: np.ndarray, thr: float, tol: float, aux_side: str):
    """Block witness through (x, z) or (w, y), the auxiliary being on ``aux_side``.

    The block witness only has to satisfy x b = 0 (or a y = 0) and a b = c;
    a z = 0 is an extra constraint costing one dimension.  When x has
    large rank that dimension can be the one missing, so retry without it.
    """
    try:
        return _block_generalized(c, x, y, thr, tol)
    except NoFactorization:
        if aux_side == "right":
            return _block_generalized(c, x, np.zeros_like(y), thr, tol)
        return _block_generalized(c, np.zeros_like(x), y, thr, tol)


def generalized_factorize(c: AlgebraElement, x: AlgebraElement, y: AlgebraElement, tol: float = EPS) -> GeneralizedWitness:
    """Generalized factorization of c through a zero-product pair (x, y).

    ``x`` and ``y`` must each live in a single block.  Same-block pairs lift a
    block-level witness by padding with 1_{!=i} and c_{!=i}; cross-block pairs
    go through auxiliary annihilators z (x z = 0) and w (w y = 0).
    """
    shape = c.shape
    x._check(y)
    x._check(c)
    ok, prof = satisfies_rank_hypothesis(c, tol)
    if not ok:
        raise RankHypothesisViolated(f"rank hypothesis violated: ranks {list(prof.ranks)}", prof)
    if (x @ y).norm() > tol * max(1.0, x.norm() * y.norm()):
        raise NotAZeroProductPair("not a zero-product pair")
    zero = AlgebraElement.zeros(shape)
    thr_c = rank_threshold(c, tol)
    sx = x.support(tol * max(x.norm(), 1e-300))
    sy = y.support(tol * max(y.norm(), 1e-300))
    if len(sx) > 1 or len(sy) > 1:
        raise ValueError("x and y must each be supported on a single block")
    if not sx and not sy:
        w = make_witness(x, y, c, AlgebraElement.identity(shape), c, "trivial")
        return GeneralizedWitness("none", (WitnessPart(x, y, w),), (x,), (y,), "trivial")

    nonzero = [r > 0 for r in prof.ranks]
    blk = lambda i, m: AlgebraElement.from_block(shape, i, m)

    if not sx or not sy:
        # one side vanishes: factor through (0, y) or (x, 0) in the other block
        i = (sx or sy)[0]
        xi, yi = np.asarray(x.blocks[i]), np.asarray(y.blocks[i])
        if nonzero[i]:
            _, pieces = _block_generalized(np.asarray(c.blocks[i]), xi, yi, thr_c, tol)
            a_i, b_i = pieces[0][2], pieces[0][3]
            a = blk(i, a_i) + unit_except(shape, i)
            b = blk(i, b_i) + drop_blocks(c, i)
        else:
            a, b = unit_except(shape, i), c
        w = make_witness(x, y, c, a, b, "trivial")
        if not sx:
            return GeneralizedWitness("left", (WitnessPart(zero, y, w), WitnessPart(zero, y, w)),
                                      (zero, zero), (y,), "trivial")
        return GeneralizedWitness("right", (WitnessPart(x, zero, w), WitnessPart(x, zero, w)),
                                  (x,), (zero, zero), "trivial")

    i, j = sx[0], sy[0]
    xi, yj = np.asarray(x.blocks[i]), np.asarray(y.blocks[j])

    if i == j:
        if not nonzero[i]:
            w = make_witness(x, y, c, unit_except(shape, i), c, "same-block")
            return GeneralizedWitness("none", (WitnessPart(x, y, w),), (x,), (y,), "same-block")
        side, pieces = _block_generalized(np.asarray(c.blocks[i]), xi, np.asarray(y.blocks[i]), thr_c, tol)
        pad_a, pad_b = unit_except(shape, i), drop_blocks(c, i)
        parts = []
        for xp, yp, a_i, b_i in pieces:
            xe, ye = blk(i, xp), blk(i, yp)
            w = make_witness(xe, ye, c, blk(i, a_i) + pad_a, blk(i, b_i) + pad_b, "same-block")
            parts.append(WitnessPart(xe, ye, w))
        return GeneralizedWitness(side, tuple(parts), tuple(p.x for p in parts) if side == "left" else (x,),
                                  tuple(p.y for p in parts) if side == "right" else (y,), "same-block")

    pad_a, pad_b = unit_except(shape, i, j), drop_blocks(c, i, j)
    if not nonzero[i] and not nonzero[j]:
        w = make_witness(x, y, c, pad_a, pad_b, "cross-zero")
        return GeneralizedWitness("none", (WitnessPart(x, y, w),), (x,), (y,), "cross-zero")

    # block i: c_i through (x, z) with x z = 0; block j: c_j through (w, y) with w y = 0
    if nonzero[i]:
        g = _annihilator_vector(xi, _own_thr(xi, tol), "right")
        side_i, pieces_i = _with_auxiliary(np.asarray(c.blocks[i]), xi, np.outer(g, g.conj()), thr_c, tol, "right")
        x_pieces = [p[0] for p in pieces_i] if side_i == "left" else [xi]
        ab_i = [(p[2], p[3]) for p in pieces_i] if side_i == "left" else [(pieces_i[0][2], pieces_i[0][3])]
    else:
        side_i, x_pieces = "none", [xi]
        ab_i = [(np.zeros_like(xi), np.zeros_like(xi))]
    if nonzero[j]:
        g = _annihilator_vector(yj, _own_thr(yj, tol), "left")
        side_j, pieces_j = _with_auxiliary(np.asarray(c.blocks[j]), np.outer(g, g.conj()), yj, thr_c, tol, "left")
        y_pieces = [p[1] for p in pieces_j] if side_j == "right" else [yj]
        ab_j = [(p[2], p[3]) for p in pieces_j] if side_j == "right" else [(pieces_j[0][2], pieces_j[0][3])]
    else:
        side_j, y_pieces = "none", [yj]
        ab_j = [(np.zeros_like(yj), np.zeros_like(yj))]

    if nonzero[i] and nonzero[j]:
        case = ("3" if side_i == "left" else "4") + (".1" if side_j == "right" else ".2")
    else:
        case = "one-sided"
    parts = []
    for p, xp in enumerate(x_pieces):
        for q, yq in enumerate(y_pieces):
            a = blk(i, ab_i[p][0]) + blk(j, ab_j[q][0]) + pad_a
            b = blk(i, ab_i[p][1]) + blk(j, ab_j[q][1]) + pad_b
            xe, ye = blk(i, xp), blk(j, yq)
            parts.append(WitnessPart(xe, ye, make_witness(xe, ye, c, a, b, case)))
    xs = tuple(blk(i, xp) for xp in x_pieces)
    ys = tuple(blk(j, yq) for yq in y_pieces)
    side = {(False, False): "none", (True, False): "left", (False, True): "right", (True, True): "both"}[
        (len(xs) > 1, len(ys) > 1)]
    return GeneralizedWitness(side, tuple(parts), xs, ys, case)


# generator pool for the zero-product fiber


def random_zero_product_rank_ones(n: int, rng: np.random.Generator, block: int = 0):
    """Random unit rank-ones u = e (x) f, v = g (x) h in one block with f orthogonal to g."""
    e, f, g, h = (complex_gaussian(rng, n) for _ in range(4))
    f = f / np.linalg.norm(f)
    g = g - np.vdot(f, g) * f
    g = g - np.vdot(f, g) * f
    return RankOneOperator.normalized(block, e, f), RankOneOperator.normalized(block, g, h)


def structured_zero_pairs(shape):
    """Matrix-unit pairs with zero product.

    (e_ij, e_kl) with j != k inside every block, and every pair of matrix
    units taken from two different blocks.
    """
    shape = as_shape(shape)
    dims = shape.block_dims
    units = [[AlgebraElement.unit(shape, p, i, j) for i in range(n) for j in range(n)]
             for p, n in enumerate(dims)]
    pairs = []
    for p, n in enumerate(dims):
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if k == j:
                        continue
                    for l in range(n):
                        pairs.append((units[p][i * n + j], units[p][k * n + l]))
    for p in range(shape.k):
        for q in range(shape.k):
            if p != q:
                pairs.extend((x, y) for x in units[p] for y in units[q])
    return pairs


def zero_fiber_generators(shape, count: int = 1, seed: int = 0):
    """Deterministic pool of pairs (x, y) with x y = 0.

    The matrix-unit pairs of ``structured_zero_pairs`` followed by ``count``
    seeded random rank-one pairs (f orthogonal to g) per block.  The tensors
    x (x) y of the pool span all of ker(multiplication) once ``count`` is at
    least n^4 for the largest block n.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    shape = as_shape(shape)
    pairs = structured_zero_pairs(shape)
    for p, n in enumerate(shape.block_dims):
        if n < 2:
            continue
        for t in range(count):
            u, v = random_zero_product_rank_ones(n, rng_for(seed, 1, p, t), p)
            pairs.append((u.to_element(shape), v.to_element(shape)))
    return pairs
