"""Galerkin discretization of the gradient system ``grad u - u grad h = f``.

With ``f = exp(h(y0)) grad h`` and ``u(y0) = 0`` the solution is
``u = exp(h) - exp(h(y0))``. The discrete operators are

* ``D_m``: partial derivative in mode ``m`` (rank 1),
* ``H_m``: multiplication by ``d h / d y_m`` (rank of ``h``),
* ``B_m = D_m - H_m`` and ``f_m = exp(h(y0)) D_m h``,
* ``P``: point evaluation at ``y0`` (rank 1),

mapping ``d_a`` ansatz coefficients to ``d_t = d_a + d_h - 1`` test
coefficients per mode. The normal equations ``W u = b`` with

    W = lam_P P P^T + lam sum_m B_m^T B_m,    b = lam sum_m B_m^T f_m

are assembled directly in TT format. Each sum has a Laplace-like structure so
the bond ranks do not depend on the number of modes.

Stochastic modes are indexed from 0. An exponent may carry a leading spatial
mode (a grid index); all operators act diagonally on it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermite import diff_matrix, embed, hermite_eval, triple_product
from .tt import TTOperator, TTTensor, evaluate


@dataclass(frozen=True)
class ExponentTT:
    """Exponent ``h`` in TT format together with the initial point.

    Parameters
    ----------
    h : TTTensor
        Hermite coefficients of the exponent. With ``spatial=True`` mode 0 is a
        grid of ``J`` points and carries no basis.
    y0 : array_like, optional
        Initial point in parameter space, default the origin.
    spatial : bool
        Whether mode 0 of ``h`` is a spatial grid index.
    """

    h: TTTensor
    y0: np.ndarray = None
    spatial: bool = False
    h_y0: np.ndarray | float = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.h, TTTensor):
            raise TypeError("h must be a TTTensor")
        M = self.h.order - (1 if self.spatial else 0)
        if M < 1:
            raise ValueError("the exponent needs at least one stochastic mode")
        y0 = np.zeros(M) if self.y0 is None else np.asarray(self.y0, dtype=float).reshape(-1)
        if y0.shape != (M,):
            raise ValueError(f"y0 must have {M} entries, got {y0.size}")
        y0.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        rows = [None] if self.spatial else []
        rows += [hermite_eval(d, y) for d, y in zip(self.stochastic_dims, y0)]
        object.__setattr__(self, "h_y0", evaluate(self.h, rows))

    @property
    def M(self) -> int:
        """Number of stochastic modes."""
        return self.h.order - (1 if self.spatial else 0)

    @property
    def J(self) -> int:
        return self.h.dims[0] if self.spatial else 1

    @property
    def stochastic_dims(self) -> tuple[int, ...]:
        return self.h.dims[1:] if self.spatial else self.h.dims

    @property
    def stochastic_cores(self) -> tuple[np.ndarray, ...]:
        return self.h.cores[1:] if self.spatial else self.h.cores

    @property
    def exp_h_y0(self):
        return np.exp(self.h_y0)

    def scaled(self, c: float) -> "ExponentTT":
        return ExponentTT(c * self.h, self.y0, self.spatial)


@dataclass(frozen=True)
class GalerkinSystem:
    """Assembled normal equations and the raw operator components."""

    W: TTOperator
    b: TTTensor
    P: TTTensor
    B: tuple
    f: tuple
    exponent: ExponentTT
    d_a: int
    d_t: tuple
    lam: float = 1.0
    lam_P: float = 1.0

    @property
    def spatial(self) -> bool:
        return self.exponent.spatial

    @property
    def M(self) -> int:
        return self.exponent.M


def _as_exponent(h) -> ExponentTT:
    if isinstance(h, ExponentTT):
        return h
    if isinstance(h, TTTensor):
        return ExponentTT(h)
    raise TypeError("expected an ExponentTT or TTTensor")


def _test_dims(exponent: ExponentTT, d_a: int) -> tuple[int, ...]:
    return tuple(d_a + d_h - 1 for d_h in exponent.stochastic_dims)


def _mult_core(core: np.ndarray, d_t: int, d_a: int) -> np.ndarray:
    """Operator core multiplying by the function with coefficient core ``core``."""
    tau = triple_product(d_t, d_a, core.shape[1])
    return np.einsum("ilk,akb->ailb", tau, core)


def _deriv_coeff_core(core: np.ndarray) -> np.ndarray:
    d = core.shape[1]
    return np.einsum("ik,akb->aib", diff_matrix(d, d), core)


def _spatial_diag(values: np.ndarray) -> np.ndarray:
    """Operator core ``(1, J, J, r)`` diagonal in the grid index."""
    J, r = values.shape
    out = np.zeros((1, J, J, r))
    idx = np.arange(J)
    out[0, idx, idx, :] = values
    return out


def _spatial_values(exponent: ExponentTT) -> np.ndarray:
    return exponent.h.cores[0][0]  # (J, r_s)


def build_derivative_op(m: int, M: int, d_t, d_a: int, J: int | None = None) -> TTOperator:
    """Rank-one operator for the partial derivative in mode ``m``.

    Identity factors are rectangular ``d_t x d_a`` embeddings. ``d_t`` may be
    an int or a per-mode sequence. With ``J`` given a leading identity over a
    spatial grid is added.
    """
    if not 0 <= m < M:
        raise ValueError(f"mode {m} out of range for M={M}")
    d_t = [d_t] * M if np.isscalar(d_t) else list(d_t)
    mats = [diff_matrix(d_t[j], d_a) if j == m else embed(d_t[j], d_a) for j in range(M)]
    if J is not None:
        mats = [np.eye(J)] + mats
    return TTOperator.kron(mats)


def build_multiplication_op(h, m: int, d_t=None, d_a: int = None) -> TTOperator:
    """Operator ``H_m``: multiplication by the partial derivative of ``h`` in mode ``m``.

    Parameters
    ----------
    h : ExponentTT or TTTensor
    m : int
        Stochastic mode (0-based).
    d_t : int or sequence, optional
        Test dimensions, default ``d_a + d_h - 1`` per mode.
    d_a : int
        Ansatz dimension.
    """
    exponent = _as_exponent(h)
    if d_a is None:
        raise ValueError("d_a is required")
    M = exponent.M
    if not 0 <= m < M:
        raise ValueError(f"mode {m} out of range for M={M}")
    d_t = _test_dims(exponent, d_a) if d_t is None else ([d_t] * M if np.isscalar(d_t) else list(d_t))
    cores = []
    if exponent.spatial:
        cores.append(_spatial_diag(_spatial_values(exponent)))
    for j, core in enumerate(exponent.stochastic_cores):
        c = _deriv_coeff_core(core) if j == m else core
        cores.append(_mult_core(c, d_t[j], d_a))
    return TTOperator(cores)


def _bc_cores(exponent: ExponentTT, d_a: int, d_t) -> tuple[list, list]:
    """Block-diagonal cores ``C_j = diag(E, H_j)`` and ``B_jj = diag(D, -H'_j)``.

    Returned in middle form: boundary ranks are ``1 + r`` on both sides and the
    outer boundaries must still be contracted with ``[1, 1]``.
    """
    C, K = [], []
    for j, core in enumerate(exponent.stochastic_cores):
        ra, _, rb = core.shape
        E = embed(d_t[j], d_a)
        H = _mult_core(core, d_t[j], d_a)
        Hd = _mult_core(_deriv_coeff_core(core), d_t[j], d_a)
        c = np.zeros((1 + ra, d_t[j], d_a, 1 + rb))
        k = np.zeros_like(c)
        c[0, :, :, 0] = E
        c[1:, :, :, 1:] = H
        k[0, :, :, 0] = diff_matrix(d_t[j], d_a)
        k[1:, :, :, 1:] = -Hd
        C.append(c)
        K.append(k)
    return C, K


def _spatial_C(exponent: ExponentTT) -> np.ndarray:
    """Spatial factor ``(1, h_s(x))`` of every ``B_m``; shape ``(J, 1 + r_s)``."""
    hs = _spatial_values(exponent)
    return np.concatenate([np.ones((hs.shape[0], 1)), hs], axis=1)


def build_B_m(h, m: int, d_a: int) -> TTOperator:
    """Operator ``B_m = D_m - H_m`` with bond ranks at most ``r + 1``."""
    exponent = _as_exponent(h)
    M = exponent.M
    if not 0 <= m < M:
        raise ValueError(f"mode {m} out of range for M={M}")
    d_t = _test_dims(exponent, d_a)
    C, K = _bc_cores(exponent, d_a, d_t)
    cores = [K[j] if j == m else C[j] for j in range(M)]
    if exponent.spatial:
        cores.insert(0, _spatial_diag(_spatial_C(exponent)))
    else:
        cores[0] = cores[0].sum(axis=0, keepdims=True)
    cores[-1] = cores[-1].sum(axis=3, keepdims=True)
    return TTOperator(cores)


def _f_cores(exponent: ExponentTT, d_t) -> list:
    return [np.pad(c, ((0, 0), (0, d_t[j] - c.shape[1]), (0, 0)))
            for j, c in enumerate(exponent.stochastic_cores)]


def _df_cores(exponent: ExponentTT, d_t) -> list:
    out = []
    for j, c in enumerate(exponent.stochastic_cores):
        dc = _deriv_coeff_core(c)
        out.append(np.pad(dc, ((0, 0), (0, d_t[j] - dc.shape[1]), (0, 0))))
    return out


def build_rhs(h, m: int, d_a: int) -> TTTensor:
    """Right-hand side ``f_m = exp(h(y0)) D_m h`` in the test space."""
    exponent = _as_exponent(h)
    M = exponent.M
    if not 0 <= m < M:
        raise ValueError(f"mode {m} out of range for M={M}")
    d_t = _test_dims(exponent, d_a)
    F, DF = _f_cores(exponent, d_t), _df_cores(exponent, d_t)
    cores = [DF[j] if j == m else F[j] for j in range(M)]
    if exponent.spatial:
        hs = _spatial_values(exponent)
        cores.insert(0, (exponent.exp_h_y0[:, None] * hs)[None])
    else:
        cores[0] = exponent.exp_h_y0 * cores[0]
    return TTTensor(cores)


def build_initial_vector(y0, d_a: int, M: int | None = None, J: int | None = None) -> TTTensor:
    """Rank-one tensor ``P`` with ``dot(P, u) = u(y0)``.

    With ``J`` given, a leading all-ones spatial factor is added so that
    ``P`` holds one copy per grid point (the operator ``P P^T`` is then the
    identity over the grid).
    """
    if y0 is None:
        if M is None:
            raise ValueError("M is required when y0 is omitted")
        y0 = np.zeros(M)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if M is not None and y0.size != M:
        raise ValueError(f"y0 must have {M} entries")
    vecs = [hermite_eval(d_a, y) for y in y0]
    if J is not None:
        vecs = [np.ones(J)] + vecs
    return TTTensor.rank1(vecs)


def _gram(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Core of ``A^T B`` for operator cores with matching row dimension."""
    ra, _, q, sa = A.shape
    rb, _, p, sb = B.shape
    return np.einsum("aijb,cikd->acjkbd", A, B).reshape(ra * rb, q, p, sa * sb)


def _gram_vec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Core of ``A^T x`` for an operator core and a tensor core."""
    ra, _, q, sa = A.shape
    rx, _, sx = x.shape
    return np.einsum("aijb,cid->acjbd", A, x).reshape(ra * rx, q, sa * sx)


def assemble_W(h, d_a: int, lam: float = 1.0, lam_P: float = 1.0) -> TTOperator:
    """Normal-equation operator ``lam_P P P^T + lam sum_m B_m^T B_m``.

    Each interior core is the 3x3 block core over the states
    (initial-condition term, derivative mode already passed, not yet passed)::

        [[P_j P_j^T, 0,   0  ],
         [0,         G_j, 0  ],
         [0,         K_j, G_j]]

    with ``G_j = C_j^T C_j`` and ``K_j = B_jj^T B_jj``. Bond ranks are at most
    ``2 (r + 1)^2 + 1``.
    """
    exponent = _as_exponent(h)
    M = exponent.M
    d_t = _test_dims(exponent, d_a)
    C, K = _bc_cores(exponent, d_a, d_t)
    P = hermite_eval(d_a, exponent.y0)  # (M, d_a)
    cores = []
    for j in range(M):
        G = _gram(C[j], C[j])
        KK = _gram(K[j], K[j])
        PP = np.outer(P[j], P[j])[None, :, :, None]
        cores.append(_block3(PP, G, KK))
    if exponent.spatial:
        cs = _spatial_C(exponent)
        g = np.einsum("xa,xb->xab", cs, cs).reshape(cs.shape[0], -1)
        J, rg = g.shape
        first = np.zeros((1, J, J, 1 + 2 * rg))
        idx = np.arange(J)
        first[0, idx, idx, 0] = lam_P
        first[0, idx, idx, 1 + rg:] = lam * g
        cores.insert(0, first)
    else:
        rg = cores[0].shape[0] - 1
        rg //= 2
        left = np.concatenate([[lam_P], np.zeros(rg), lam * np.ones(rg)])
        cores[0] = np.tensordot(left, cores[0], axes=(0, 0))[None]
    rg = (cores[-1].shape[3] - 1) // 2
    right = np.concatenate([[1.0], np.ones(rg), np.zeros(rg)])
    cores[-1] = np.tensordot(cores[-1], right, axes=(3, 0))[..., None]
    return TTOperator(cores)


def _block3(PP, G, K):
    """3x3 Laplace-like block core for ``W``."""
    rl, q, p, rr = G.shape
    out = np.zeros((1 + 2 * rl, q, p, 1 + 2 * rr))
    out[0, :, :, 0] = PP[0, :, :, 0]
    out[1:1 + rl, :, :, 1:1 + rr] = G
    out[1 + rl:, :, :, 1:1 + rr] = K
    out[1 + rl:, :, :, 1 + rr:] = G
    return out


def _block2(g, k):
    """2x2 Laplace-like block core ``[[g, 0], [k, g]]`` for ``b``."""
    rl, q, rr = g.shape
    out = np.zeros((2 * rl, q, 2 * rr))
    out[:rl, :, :rr] = g
    out[rl:, :, :rr] = k
    out[rl:, :, rr:] = g
    return out


def assemble_b(h, d_a: int, lam: float = 1.0) -> TTTensor:
    """Right-hand side ``lam sum_m B_m^T f_m`` via 2x2 block cores.

    Bond ranks are at most ``2 r (r + 1)``.
    """
    exponent = _as_exponent(h)
    M = exponent.M
    d_t = _test_dims(exponent, d_a)
    C, K = _bc_cores(exponent, d_a, d_t)
    F, DF = _f_cores(exponent, d_t), _df_cores(exponent, d_t)
    cores = [_block2(_gram_vec(C[j], F[j]), _gram_vec(K[j], DF[j])) for j in range(M)]
    if exponent.spatial:
        cs = _spatial_C(exponent)
        hs = _spatial_values(exponent)
        g = np.einsum("xa,xb->xab", cs, hs).reshape(cs.shape[0], -1)
        g = g * (lam * exponent.exp_h_y0)[:, None]
        cores.insert(0, np.concatenate([np.zeros_like(g), g], axis=1)[None])
    else:
        rg = cores[0].shape[0] // 2
        left = np.concatenate([np.zeros(rg), lam * exponent.exp_h_y0 * np.ones(rg)])
        cores[0] = np.tensordot(left, cores[0], axes=(0, 0))[None]
    rg = cores[-1].shape[2] // 2
    right = np.concatenate([np.ones(rg), np.zeros(rg)])
    cores[-1] = np.tensordot(cores[-1], right, axes=(2, 0))[..., None]
    return TTTensor(cores)


def assemble_system(h, d_a: int, lam: float = 1.0, lam_P: float = 1.0) -> GalerkinSystem:
    """Assemble ``W``, ``b``, ``P`` and the components ``B_m``, ``f_m``."""
    exponent = _as_exponent(h)
    if lam <= 0 or lam_P <= 0:
        raise ValueError("regularization weights must be positive")
    if d_a < 1:
        raise ValueError("d_a must be at least 1")
    M = exponent.M
    J = exponent.J if exponent.spatial else None
    return GalerkinSystem(
        W=assemble_W(exponent, d_a, lam, lam_P),
        b=assemble_b(exponent, d_a, lam),
        P=build_initial_vector(exponent.y0, d_a, M, J),
        B=tuple(build_B_m(exponent, m, d_a) for m in range(M)),
        f=tuple(build_rhs(exponent, m, d_a) for m in range(M)),
        exponent=exponent,
        d_a=d_a,
        d_t=_test_dims(exponent, d_a),
        lam=lam,
        lam_P=lam_P,
    )


def spatialize(h: ExponentTT, d_a: int, lam: float = 1.0, lam_P: float = 1.0) -> GalerkinSystem:
    """Assemble the system for an exponent with a leading spatial mode.

    All operators are diagonal in the grid index, so the result is equivalent
    to ``J`` independent scalar systems stacked into one TT system.
    """
    if not isinstance(h, ExponentTT) or not h.spatial:
        raise ValueError("exponent has no spatial mode")
    return assemble_system(h, d_a, lam, lam_P)
