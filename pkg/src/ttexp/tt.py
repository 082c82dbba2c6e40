"""Tensor-train tensors and operators.

Cores are stored in (left rank, mode, right rank) order for tensors and
(left rank, row, column, right rank) order for operators. Merged rank indices
produced by products use row-major pairing, ``k * r_right + l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DENSE_SIZE_CAP = 10**6


class DenseSizeError(ValueError):
    """Raised when a dense conversion would exceed the configured size cap."""


def _freeze(a):
    a = np.array(a, dtype=float)  # always a private copy
    a.setflags(write=False)
    return a


class TTTensor:
    """Coefficient tensor in tensor-train format.

    Parameters
    ----------
    cores : sequence of ndarray
        Order-3 cores, core ``m`` of shape ``(r_m, d_m, r_{m+1})`` with
        ``r_0 = r_M = 1``.
    """

    __slots__ = ("cores",)

    def __init__(self, cores: Iterable[np.ndarray]):
        cores = tuple(_freeze(c) for c in cores)
        if not cores:
            raise ValueError("a TT tensor needs at least one core")
        for m, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {m} has order {c.ndim}, expected 3")
            if m > 0 and cores[m - 1].shape[2] != c.shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {m - 1} and {m}: "
                    f"{cores[m - 1].shape[2]} != {c.shape[0]}"
                )
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def __repr__(self):
        return f"TTTensor(dims={self.dims}, ranks={self.ranks})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        if isinstance(c, (TTTensor, TTOperator)):
            return NotImplemented
        return scale(self, c)

    __rmul__ = __mul__

    def full(self, cap: int = DENSE_SIZE_CAP) -> np.ndarray:
        return to_dense(self, cap)

    def norm(self) -> float:
        return norm(self)

    def round(self, tol: float = 0.0, max_rank: int | None = None) -> "TTTensor":
        return round(self, tol, max_rank)

    @classmethod
    def rank1(cls, vectors: Sequence[np.ndarray]) -> "TTTensor":
        """Elementary tensor from one vector per mode."""
        return cls(np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors)

    @classmethod
    def constant(cls, value: float, dims: Sequence[int]) -> "TTTensor":
        """Coefficient tensor ``value * e_0 x ... x e_0``."""
        vecs = [np.eye(d)[0] for d in dims]
        vecs[0] = value * vecs[0]
        return cls.rank1(vecs)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "TTTensor":
        return cls(np.zeros((1, d, 1)) for d in dims)

    @classmethod
    def random(cls, dims: Sequence[int], ranks, rng=None) -> "TTTensor":
        """Gaussian random cores; ``ranks`` is an int or the interior bond ranks."""
        rng = np.random.default_rng(rng)
        M = len(dims)
        if np.isscalar(ranks):
            ranks = [int(ranks)] * (M - 1)
        r = [1, *ranks, 1]
        if len(r) != M + 1:
            raise ValueError("need M - 1 interior ranks")
        return cls(rng.standard_normal((r[m], dims[m], r[m + 1])) for m in range(M))


class TTOperator:
    """Linear map between coefficient tensors in tensor-train format.

    Core ``m`` has shape ``(r_m, d_m, q_m, r_{m+1})`` where ``d_m`` is the row
    (output) size and ``q_m`` the column (input) size.
    """

    __slots__ = ("cores",)

    def __init__(self, cores: Iterable[np.ndarray]):
        cores = tuple(_freeze(c) for c in cores)
        if not cores:
            raise ValueError("a TT operator needs at least one core")
        for m, c in enumerate(cores):
            if c.ndim != 4:
                raise ValueError(f"operator core {m} has order {c.ndim}, expected 4")
            if m > 0 and cores[m - 1].shape[3] != c.shape[0]:
                raise ValueError(f"rank mismatch between operator cores {m - 1} and {m}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def row_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    @property
    def T(self) -> "TTOperator":
        return TTOperator(c.transpose(0, 2, 1, 3) for c in self.cores)

    def __repr__(self):
        return (
            f"TTOperator(row_dims={self.row_dims}, col_dims={self.col_dims}, "
            f"ranks={self.ranks})"
        )

    def __matmul__(self, other):
        if isinstance(other, TTTensor):
            return apply(self, other)
        if isinstance(other, TTOperator):
            return compose(self, other)
        return NotImplemented

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        if isinstance(c, (TTTensor, TTOperator)):
            return NotImplemented
        return scale(self, c)

    __rmul__ = __mul__

    def full(self, cap: int = DENSE_SIZE_CAP) -> np.ndarray:
        return to_dense(self, cap)

    def round(self, tol: float = 0.0, max_rank: int | None = None) -> "TTOperator":
        return round(self, tol, max_rank)

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "TTOperator":
        return cls(np.eye(d).reshape(1, d, d, 1) for d in dims)

    @classmethod
    def kron(cls, matrices: Sequence[np.ndarray]) -> "TTOperator":
        """Rank-one operator ``A_1 x ... x A_M``."""
        return cls(np.asarray(A, dtype=float)[None, :, :, None] for A in matrices)


@dataclass(frozen=True)
class RankProfile:
    ranks: tuple[int, ...]
    max_rank: int
    dofs: int


def rank_profile(t: TTTensor) -> RankProfile:
    return RankProfile(t.ranks, t.max_rank, tt_dofs(t))


def tt_dofs(t: TTTensor) -> int:
    """Number of degrees of freedom of a TT representation.

    Counts ``sum_{m<M} (r_m d_m r_{m+1} - r_{m+1}^2) + r_M d_M``, i.e. the core
    entries minus the gauge freedom at each interior bond.
    """
    r, d = t.ranks, t.dims
    M = t.order
    total = sum(r[m] * d[m] * r[m + 1] - r[m + 1] ** 2 for m in range(M - 1))
    return int(total + r[M - 1] * d[M - 1])


def _check_same(a, b):
    if type(a) is not type(b):
        raise TypeError(f"cannot combine {type(a).__name__} and {type(b).__name__}")
    if isinstance(a, TTTensor):
        if a.dims != b.dims:
            raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    elif a.row_dims != b.row_dims or a.col_dims != b.col_dims:
        raise ValueError("operator dimension mismatch")


def add(a, b):
    """Sum of two TT tensors (or two TT operators); bond ranks add."""
    _check_same(a, b)
    M = a.order
    cls = type(a)
    if M == 1:
        return cls([a.cores[0] + b.cores[0]])
    cores = []
    for m, (x, y) in enumerate(zip(a.cores, b.cores)):
        if m == 0:
            cores.append(np.concatenate([x, y], axis=-1))
        elif m == M - 1:
            cores.append(np.concatenate([x, y], axis=0))
        else:
            cores.append(concat_cores([[x, None], [None, y]]))
    return cls(cores)


def scale(a, c: float):
    """Multiply a TT tensor or operator by a scalar (applied to the first core)."""
    cores = list(a.cores)
    cores[0] = c * cores[0]
    return type(a)(cores)


def apply(W: TTOperator, v: TTTensor) -> TTTensor:
    """Matrix-vector product; bond ranks multiply."""
    if W.col_dims != v.dims:
        raise ValueError(f"operator columns {W.col_dims} do not match tensor dims {v.dims}")
    cores = []
    for A, x in zip(W.cores, v.cores):
        ra, d, _, sa = A.shape
        rx, _, sx = x.shape
        cores.append(np.einsum("aijb,cjd->acibd", A, x).reshape(ra * rx, d, sa * sx))
    return TTTensor(cores)


def compose(A: TTOperator, B: TTOperator) -> TTOperator:
    """Operator product ``A @ B``."""
    if A.col_dims != B.row_dims:
        raise ValueError("inner dimensions do not match")
    cores = []
    for X, Y in zip(A.cores, B.cores):
        ra, d, _, sa = X.shape
        rb, _, q, sb = Y.shape
        cores.append(np.einsum("aijb,cjkd->acikbd", X, Y).reshape(ra * rb, d, q, sa * sb))
    return TTOperator(cores)


def dot(a: TTTensor, b: TTTensor) -> float:
    """Frobenius inner product."""
    _check_same(a, b)
    env = np.ones((1, 1))
    for x, y in zip(a.cores, b.cores):
        env = np.einsum("ab,aic,bid->cd", env, x, y)
    return float(env[0, 0])


def _left_orthogonalize(cores: list) -> list:
    cores = list(cores)
    for k in range(len(cores) - 1):
        r0, d, r1 = cores[k].shape
        Q, R = np.linalg.qr(cores[k].reshape(r0 * d, r1))
        cores[k] = Q.reshape(r0, d, Q.shape[1])
        cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
    return cores


def _right_orthogonalize(cores: list) -> list:
    cores = list(cores)
    for k in range(len(cores) - 1, 0, -1):
        r0, d, r1 = cores[k].shape
        Q, R = np.linalg.qr(cores[k].reshape(r0, d * r1).T)
        cores[k] = Q.T.reshape(Q.shape[1], d, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    return cores


def norm(a: TTTensor) -> float:
    """Frobenius norm via left orthogonalization (no squaring of the tensor)."""
    if isinstance(a, TTOperator):
        a = _as_tensor(a)
    cores = _left_orthogonalize(list(a.cores))
    return float(np.linalg.norm(cores[-1]))


def _truncation_rank(s: np.ndarray, delta: float, max_rank: int | None, exact: bool) -> int:
    if s.size == 0:
        return 1
    if exact:
        # tolerance 0: drop only numerically vanishing directions
        cutoff = s[0] * np.finfo(float).eps * max(8, s.size)
        rank = int(np.count_nonzero(s > cutoff))
    else:
        # tail[r] = norm of s[r:]; keep the smallest r with tail[r] <= delta
        tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
        tail = np.append(tail, 0.0)
        rank = int(np.argmax(tail <= delta))
    rank = max(rank, 1)
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    return rank


def _as_tensor(W: TTOperator) -> TTTensor:
    return TTTensor(c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in W.cores)


def round(t, tol: float = 0.0, max_rank: int | None = None):
    """Truncate TT ranks with relative Frobenius accuracy ``tol``.

    Left-to-right QR orthogonalization followed by right-to-left truncated
    SVDs, each bond getting the share ``tol * ||t|| / sqrt(M - 1)`` of the
    error budget, so that ``||t - round(t)|| <= tol * ||t||`` when no
    ``max_rank`` cap is active. Works for operators by treating the row and
    column index of each core as one mode.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if isinstance(t, TTOperator):
        shapes = [c.shape for c in t.cores]
        rounded = round(_as_tensor(t), tol, max_rank)
        return TTOperator(
            c.reshape(c.shape[0], s[1], s[2], c.shape[2]) for c, s in zip(rounded.cores, shapes)
        )
    M = t.order
    if M == 1:
        return t
    cores = _left_orthogonalize(list(t.cores))
    nrm = np.linalg.norm(cores[-1])
    if nrm == 0.0:
        return TTTensor.zeros(t.dims)
    delta = tol * nrm / math.sqrt(M - 1)
    for k in range(M - 1, 0, -1):
        r0, d, r1 = cores[k].shape
        U, s, Vt = np.linalg.svd(cores[k].reshape(r0, d * r1), full_matrices=False)
        rank = _truncation_rank(s, delta, max_rank, tol == 0)
        cores[k] = Vt[:rank].reshape(rank, d, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], U[:, :rank] * s[:rank], axes=(2, 0))
    return TTTensor(cores)


def to_dense(t, cap: int = DENSE_SIZE_CAP) -> np.ndarray:
    """Full array of a tensor, or the full matrix of an operator.

    Operators are returned as a matrix of shape ``(prod(row_dims), prod(col_dims))``
    with row-major multi-index flattening.
    """
    if isinstance(t, TTOperator):
        size = math.prod(t.row_dims) * math.prod(t.col_dims)
        if size > cap:
            raise DenseSizeError(f"dense size {size} exceeds cap {cap}")
        full = np.ones((1, 1, 1))
        for c in t.cores:
            R, Q, _ = full.shape
            full = np.einsum("ijr,rabs->iajbs", full, c)
            full = full.reshape(R * c.shape[1], Q * c.shape[2], c.shape[3])
        return full[:, :, 0]
    size = math.prod(t.dims)
    if size > cap:
        raise DenseSizeError(f"dense size {size} exceeds cap {cap}")
    full = t.cores[0].reshape(-1, t.cores[0].shape[2])
    for c in t.cores[1:]:
        full = (full @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
    return full.reshape(t.dims)


def from_dense(a: np.ndarray, tol: float = 0.0, max_rank: int | None = None) -> TTTensor:
    """TT-SVD of a full array with relative accuracy ``tol``."""
    a = np.asarray(a, dtype=float)
    dims = a.shape
    M = len(dims)
    if M == 1:
        return TTTensor([a.reshape(1, -1, 1)])
    nrm = np.linalg.norm(a)
    if nrm == 0.0:
        return TTTensor.zeros(dims)
    delta = tol * nrm / math.sqrt(M - 1)
    cores = []
    rest = a.reshape(1, -1)
    r = 1
    for k in range(M - 1):
        mat = rest.reshape(r * dims[k], -1)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        rank = _truncation_rank(s, delta, max_rank, tol == 0)
        cores.append(U[:, :rank].reshape(r, dims[k], rank))
        rest = s[:rank, None] * Vt[:rank]
        r = rank
    cores.append(rest.reshape(r, dims[-1], 1))
    return TTTensor(cores)


def evaluate(t: TTTensor, basis_rows: Sequence) -> np.ndarray | float:
    """Contract each mode of ``t`` with a row of basis values.

    ``basis_rows[m]`` is either a vector of length ``d_m`` (single point), an
    array of shape ``(N, d_m)`` (N points, all batched rows must share N), or
    ``None`` to leave mode ``m`` uncontracted. The result has shape
    ``(N, *open_dims)``; single-point inputs drop the leading axis.
    """
    if len(basis_rows) != t.order:
        raise ValueError(f"expected {t.order} basis rows, got {len(basis_rows)}")
    batched = any(r is not None and np.ndim(r) == 2 for r in basis_rows)
    n = None
    rows = []
    for m, (row, d) in enumerate(zip(basis_rows, t.dims)):
        if row is None:
            rows.append(None)
            continue
        row = np.asarray(row, dtype=float)
        if row.ndim == 1:
            row = row[None, :]
        if row.shape[-1] != d:
            raise ValueError(f"mode {m}: basis row length {row.shape[-1]} != dim {d}")
        if row.shape[0] != 1:
            if n is not None and row.shape[0] != n:
                raise ValueError("batched basis rows disagree on the number of points")
            n = row.shape[0]
        rows.append(row)
    n = n or 1
    state = np.ones((n, 1))
    for row, core in zip(rows, t.cores):
        if row is None:
            state = np.einsum("n...r,rds->n...ds", state, core)
        else:
            g = np.einsum("nd,rds->nrs", row, core)
            if g.shape[0] == 1 and n > 1:
                g = np.broadcast_to(g, (n,) + g.shape[1:])
            state = np.einsum("n...r,nrs->n...s", state, g)
    out = state[..., 0]
    if not batched:
        out = out[0]
        if out.ndim == 0:
            return float(out)
    return out


def concat_cores(blocks: Sequence[Sequence[np.ndarray | None]]) -> np.ndarray:
    """Assemble a core from a block matrix of cores.

    ``blocks[i][j]`` is an order-3 or order-4 core or ``None`` for a zero
    block. Block rows are stacked along the first (left rank) axis and block
    columns along the last (right rank) axis, i.e. the cores are treated as a
    matrix over the ring of mode slices.
    """
    blocks = [list(row) for row in blocks]
    if not blocks or not blocks[0]:
        raise ValueError("empty block layout")
    ncols = len(blocks[0])
    if any(len(row) != ncols for row in blocks):
        raise ValueError("ragged block layout")
    present = [b for row in blocks for b in row if b is not None]
    if not present:
        raise ValueError("at least one block must be non-zero")
    mid = present[0].shape[1:-1]
    left = [None] * len(blocks)
    right = [None] * ncols
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            b = np.asarray(b)
            if b.shape[1:-1] != mid:
                raise ValueError(f"block ({i},{j}) has mode shape {b.shape[1:-1]}, expected {mid}")
            if left[i] not in (None, b.shape[0]) or right[j] not in (None, b.shape[-1]):
                raise ValueError(f"block ({i},{j}) has incompatible rank sizes {b.shape}")
            left[i], right[j] = b.shape[0], b.shape[-1]
    if None in left or None in right:
        raise ValueError("every block row and column needs at least one non-zero block")
    lo = np.concatenate([[0], np.cumsum(left)])
    co = np.concatenate([[0], np.cumsum(right)])
    out = np.zeros((lo[-1], *mid, co[-1]))
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is not None:
                out[lo[i]:lo[i + 1], ..., co[j]:co[j + 1]] = b
    return out
