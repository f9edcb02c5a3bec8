"""Direct sums of complex matrix algebras M_{n_1} + ... + M_{n_k}.

Elements are stored block by block; nothing ever mixes blocks.  The
vectorization basis used by every tensor in the package is fixed here:
blocks in shape order, each block flattened row-major.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-9
INVERTIBLE_RATIO = 1e-6
MAX_RETRIES = 100


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AlgebraShape:
    block_dims: tuple[int, ...]

    def __init__(self, block_dims: Iterable[int]):
        dims = tuple(int(n) for n in block_dims)
        if not dims:
            raise ValueError("an algebra needs at least one block")
        if any(n < 1 for n in dims):
            raise ValueError(f"block sizes must be positive, got {dims}")
        object.__setattr__(self, "block_dims", dims)

    @property
    def k(self) -> int:
        return len(self.block_dims)

    @property
    def dim(self) -> int:
        return sum(n * n for n in self.block_dims)

    @property
    def max_block(self) -> int:
        return max(self.block_dims)

    def offsets(self) -> list[int]:
        """Start index of each block inside the vectorization."""
        out, pos = [], 0
        for n in self.block_dims:
            out.append(pos)
            pos += n * n
        return out

    def block_slice(self, i: int) -> slice:
        start = self.offsets()[i]
        n = self.block_dims[i]
        return slice(start, start + n * n)

    def index(self, block: int, row: int, col: int) -> int:
        n = self.block_dims[block]
        return self.offsets()[block] + row * n + col

    def __iter__(self):
        return iter(self.block_dims)

    def __len__(self):
        return len(self.block_dims)

    def __repr__(self):
        return f"AlgebraShape{self.block_dims}"


def as_shape(shape) -> AlgebraShape:
    if isinstance(shape, AlgebraShape):
        return shape
    if isinstance(shape, (int, np.integer)):
        return AlgebraShape((int(shape),))
    return AlgebraShape(shape)


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return m


class AlgebraElement:
    """An element of a direct sum of square complex matrix blocks.

    Immutable: the block arrays are read-only copies.  ``a @ b`` is the
    algebra product, ``a * s`` scalar multiplication.
    """

    __slots__ = ("shape", "blocks")

    def __init__(self, shape, blocks: Sequence):
        shape = as_shape(shape)
        blocks = tuple(_frozen(b) for b in blocks)
        if len(blocks) != shape.k:
            raise ShapeMismatch(f"expected {shape.k} blocks, got {len(blocks)}")
        for n, b in zip(shape.block_dims, blocks):
            if b.shape != (n, n):
                raise ShapeMismatch(f"block of size {b.shape} in a slot of size {(n, n)}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "blocks", blocks)

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraElement is immutable")

    # constructors

    @classmethod
    def zeros(cls, shape) -> AlgebraElement:
        shape = as_shape(shape)
        return cls(shape, [np.zeros((n, n)) for n in shape])

    @classmethod
    def identity(cls, shape) -> AlgebraElement:
        shape = as_shape(shape)
        return cls(shape, [np.eye(n) for n in shape])

    @classmethod
    def from_block(cls, shape, i: int, matrix) -> AlgebraElement:
        """``matrix`` placed in block ``i``, zero elsewhere."""
        shape = as_shape(shape)
        _check_block(shape, i)
        blocks = [np.zeros((n, n)) for n in shape]
        blocks[i] = np.asarray(matrix, dtype=complex)
        return cls(shape, blocks)

    @classmethod
    def unit(cls, shape, i: int, row: int, col: int) -> AlgebraElement:
        """Matrix unit e_{row,col} (0-based) in block ``i``."""
        shape = as_shape(shape)
        m = np.zeros((shape.block_dims[i],) * 2)
        m[row, col] = 1.0
        return cls.from_block(shape, i, m)

    @classmethod
    def from_vector(cls, shape, vec) -> AlgebraElement:
        shape = as_shape(shape)
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if vec.size != shape.dim:
            raise ShapeMismatch(f"vector of length {vec.size} for dim {shape.dim}")
        return cls(shape, [vec[shape.block_slice(i)].reshape(n, n)
                           for i, n in enumerate(shape.block_dims)])

    # vector-space structure

    def vec(self) -> np.ndarray:
        return np.concatenate([b.reshape(-1) for b in self.blocks])

    def _check(self, other: AlgebraElement):
        if not isinstance(other, AlgebraElement):
            raise TypeError(f"expected AlgebraElement, got {type(other).__name__}")
        if other.shape != self.shape:
            raise ShapeMismatch(f"{self.shape} vs {other.shape}")

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.shape, [x + y for x, y in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.shape, [x - y for x, y in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return AlgebraElement(self.shape, [-x for x in self.blocks])

    def __mul__(self, scalar):
        if isinstance(scalar, AlgebraElement):
            raise TypeError("use @ (or multiply) for the algebra product")
        return AlgebraElement(self.shape, [scalar * x for x in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        return multiply(self, other)

    # norms and predicates

    def norm(self) -> float:
        """Frobenius norm over all blocks."""
        return float(np.sqrt(sum(np.vdot(b, b).real for b in self.blocks)))

    def spectral_norm(self) -> float:
        return max(float(np.linalg.norm(b, 2)) if b.size else 0.0 for b in self.blocks)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm() <= tol

    def allclose(self, other: AlgebraElement, tol: float = EPS) -> bool:
        """Relative closeness: ||a - b|| <= tol * max(1, ||a||, ||b||)."""
        self._check(other)
        scale = max(1.0, self.norm(), other.norm())
        return (self - other).norm() <= tol * scale

    def support(self, tol: float = 0.0) -> list[int]:
        """Indices of blocks whose entries are not (numerically) zero."""
        return [i for i, b in enumerate(self.blocks) if np.linalg.norm(b) > tol]

    @property
    def H(self) -> AlgebraElement:
        return adjoint(self)

    def __eq__(self, other):
        if not isinstance(other, AlgebraElement) or other.shape != self.shape:
            return NotImplemented
        return all(np.array_equal(x, y) for x, y in zip(self.blocks, other.blocks))

    __hash__ = None

    def __repr__(self):
        body = " (+) ".join(np.array2string(b, precision=4, suppress_small=True) for b in self.blocks)
        return f"AlgebraElement({list(self.shape.block_dims)}: {body})"

    # serialization

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape.block_dims),
            "blocks": [[[float(z.real), float(z.imag)] for z in b.reshape(-1)] for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data: dict) -> AlgebraElement:
        shape = as_shape(data["shape"])
        blocks = []
        for n, raw in zip(shape.block_dims, data["blocks"]):
            arr = np.asarray(raw, dtype=float)
            # accept flat [[re, im], ...] or nested rows [[[re, im], ...], ...]
            arr = arr.reshape(-1, 2)
            if arr.shape[0] != n * n:
                raise ShapeMismatch(f"block has {arr.shape[0]} entries, expected {n * n}")
            blocks.append((arr[:, 0] + 1j * arr[:, 1]).reshape(n, n))
        return cls(shape, blocks)


def _check_block(shape: AlgebraShape, i: int):
    if not 0 <= i < shape.k:
        raise IndexError(f"block index {i} out of range for {shape.k} blocks")


def multiply(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    a._check(b)
    return AlgebraElement(a.shape, [x @ y for x, y in zip(a.blocks, b.blocks)])


def adjoint(a: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(a.shape, [x.conj().T for x in a.blocks])


def project_block(a: AlgebraElement, i: int) -> AlgebraElement:
    _check_block(a.shape, i)
    return AlgebraElement.from_block(a.shape, i, a.blocks[i])


def drop_blocks(a: AlgebraElement, *indices: int) -> AlgebraElement:
    """``a`` with the listed blocks zeroed (a_{!=i}, a_{!=i,j})."""
    for i in indices:
        _check_block(a.shape, i)
    return AlgebraElement(a.shape, [np.zeros_like(b) if i in indices else b
                                    for i, b in enumerate(a.blocks)])


def unit_except(shape, *indices: int) -> AlgebraElement:
    """The padded unit 1 - sum of 1_{A_i} over ``indices``."""
    return drop_blocks(AlgebraElement.identity(shape), *indices)


def inverse(a: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(a.shape, [np.linalg.inv(b) for b in a.blocks])


def condition_number(a: AlgebraElement) -> float:
    """Worst blockwise 2-norm condition number (inf for a singular block)."""
    worst = 1.0
    for b in a.blocks:
        s = np.linalg.svd(b, compute_uv=False)
        if s[-1] == 0:
            return float("inf")
        worst = max(worst, s[0] / s[-1])
    return float(worst)


@dataclass(frozen=True)
class RankProfile:
    ranks: tuple[int, ...]
    threshold_used: float

    def to_json(self) -> dict:
        return {"ranks": list(self.ranks), "threshold": self.threshold_used}


def rank_threshold(c: AlgebraElement, tol: float = EPS) -> float:
    """Absolute singular-value cutoff: tol * sigma_max(c) * max block size."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    smax = max((np.linalg.norm(b, 2) for b in c.blocks), default=0.0)
    return float(tol * smax * c.shape.max_block)


def rank_profile(c: AlgebraElement, tol: float = EPS) -> RankProfile:
    thr = rank_threshold(c, tol)
    ranks = []
    for b in c.blocks:
        s = np.linalg.svd(b, compute_uv=False)
        ranks.append(int(np.sum(s > thr)) if thr > 0 else 0)
    return RankProfile(tuple(ranks), thr)


def satisfies_rank_hypothesis(c: AlgebraElement, tol: float = EPS) -> tuple[bool, RankProfile]:
    """rank of every block of ``c`` is at most (block size - 2)."""
    prof = rank_profile(c, tol)
    ok = all(r <= n - 2 for r, n in zip(prof.ranks, c.shape.block_dims))
    return ok, prof


# randomness

def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream ``(seed, *keys)``.

    Streams are addressed by key rather than drawn sequentially, so work can
    be split across processes without changing any result.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(seed)


def complex_gaussian(rng: np.random.Generator, *size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def random_element(shape, seed=0, distribution: str = "gaussian") -> AlgebraElement:
    """Random element with i.i.d. standard complex Gaussian entries.

    ``distribution="invertible-gaussian"`` redraws until each block has
    smallest/largest singular value ratio above 1e-6.
    """
    shape = as_shape(shape)
    rng = _as_rng(seed)
    if distribution == "gaussian":
        return AlgebraElement(shape, [complex_gaussian(rng, n, n) for n in shape])
    if distribution != "invertible-gaussian":
        raise ValueError(f"unknown distribution {distribution!r}")
    for _ in range(MAX_RETRIES):
        blocks = [complex_gaussian(rng, n, n) for n in shape]
        ok = True
        for b in blocks:
            s = np.linalg.svd(b, compute_uv=False)
            if s[-1] <= INVERTIBLE_RATIO * s[0]:
                ok = False
                break
        if ok:
            return AlgebraElement(shape, blocks)
    raise RuntimeError("degenerate RNG stream")


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(complex_gaussian(rng, n, n))
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_with_ranks(shape, ranks: Sequence[int], seed=0) -> AlgebraElement:
    """Random element whose block ``i`` has rank exactly ``ranks[i]`` (generically)."""
    shape = as_shape(shape)
    if len(ranks) != shape.k:
        raise ShapeMismatch(f"{len(ranks)} ranks for {shape.k} blocks")
    rng = _as_rng(seed)
    blocks = []
    for n, r in zip(shape.block_dims, ranks):
        if not 0 <= r <= n:
            raise ValueError(f"rank {r} impossible in a block of size {n}")
        blocks.append(complex_gaussian(rng, n, r) @ complex_gaussian(rng, r, n))
    return AlgebraElement(shape, blocks)


def standard_basis(shape) -> list[AlgebraElement]:
    shape = as_shape(shape)
    eye = np.eye(shape.dim)
    return [AlgebraElement.from_vector(shape, eye[i]) for i in range(shape.dim)]
