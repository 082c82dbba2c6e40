"""Alternating least squares for ``W u = b`` and the exponential drivers."""
from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, lapack
from scipy.sparse.linalg import LinearOperator, cg

from .galerkin import ExponentTT, GalerkinSystem, assemble_system
from .hermite import multiply_coeffs, pad
from .tt import TTOperator, TTTensor, add, apply, norm, rank_profile, round, scale

LOCAL_DENSE_LIMIT = 1500


class SingularLocalSystem(np.linalg.LinAlgError):
    """Raised when a local system cannot be solved; carries the core index."""

    def __init__(self, core: int, msg: str):
        super().__init__(f"core {core}: {msg}")
        self.core = core


class RankExplosionError(RuntimeError):
    """Raised when squaring produces ranks above the configured cap."""


class SquaringInstabilityWarning(RuntimeWarning):
    """A squaring step amplified the norm far beyond ``||u||**2``."""


# ||P(u * u)|| >= E[u**2] = ||u||**2 always; a much larger ratio means
# high-degree coefficient noise was amplified by the triple products
SQUARING_GROWTH_LIMIT = 1e8


@dataclass
class SolveConfig:
    """Parameters of the exponential drivers.

    Attributes
    ----------
    d_a : int
        Basis functions per stochastic mode of the result.
    d_a_scaled : int or None
        Basis functions for the scaled problem, default ``d_a``.
    s : int
        Scaling exponent; the exponent is divided by ``2**s`` and the result
        squared ``s`` times.
    eps : float
        Stopping tolerance on the relative normal residual.
    eps_s : float
        Rounding tolerance after each squaring.
    n_iter : int
        Maximum number of sweeps.
    ranks : int or None
        Bond ranks of the initial guess, default ``max(rank(h) + 1, 2)``.
    lam, lam_P : float
        Weights of the residual and initial-condition terms.
    seed : int
        Seed of the initial guess.
    round_W : float
        Rounding tolerance applied to ``W`` before solving (0 disables).
    max_rank : int
        Rank cap during squaring.
    stall_tol : float
        Stop early (unconverged) once a sweep reduces the normal residual by
        less than this relative amount; 0 disables the check.
    """

    d_a: int = 10
    d_a_scaled: int | None = None
    s: int = 0
    eps: float = 1e-8
    eps_s: float = 1e-10
    n_iter: int = 50
    ranks: int | None = None
    lam: float = 1.0
    lam_P: float = 1.0
    seed: int = 0
    round_W: float = 1e-12
    max_rank: int = 400
    stall_tol: float = 1e-6

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.d_a) < 1:
            raise ValueError("d_a must be at least 1")
        if self.d_a_scaled is not None and not 1 <= int(self.d_a_scaled) <= int(self.d_a):
            raise ValueError("d_a_scaled must lie in [1, d_a]")
        if int(self.s) < 0:
            raise ValueError("s must be non-negative")
        if self.eps <= 0 or self.eps_s <= 0:
            raise ValueError("tolerances must be positive")
        if int(self.n_iter) < 0:
            raise ValueError("n_iter must be non-negative")
        if self.ranks is not None and int(self.ranks) < 1:
            raise ValueError("ranks must be at least 1")
        if self.lam <= 0 or self.lam_P <= 0:
            raise ValueError("regularization weights must be positive")
        if self.round_W < 0:
            raise ValueError("round_W must be non-negative")
        if int(self.max_rank) < 1:
            raise ValueError("max_rank must be at least 1")
        if self.stall_tol < 0:
            raise ValueError("stall_tol must be non-negative")
        return self


@dataclass
class SolveReport:
    """Outcome of an exponential solve."""

    sweeps: int = 0
    converged: bool = False
    normal_res: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    sweep_time_ms: list = field(default_factory=list)
    res: float = float("nan")
    ranks: tuple = ()
    max_rank: int = 0
    dofs: int = 0
    time: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["ranks"] = list(self.ranks)
        if not timing:
            d.pop("time")
            d.pop("sweep_time_ms")
        return d

    def trace_rows(self):
        """Rows ``(sweep, normal_res, time_ms)`` of the iteration trace."""
        return [(i + 1, r, t) for i, (r, t) in enumerate(zip(self.normal_res, self.sweep_time_ms))]


def _clip_ranks(dims, ranks):
    M = len(dims)
    r = [1] + list(ranks) + [1]
    for k in range(1, M):
        r[k] = min(r[k], r[k - 1] * dims[k - 1])
    for k in range(M - 1, 0, -1):
        r[k] = min(r[k], r[k + 1] * dims[k])
    return r[1:-1]


def initial_guess(dims, rank: int, seed=0) -> TTTensor:
    """Seeded random TT with feasible bond ranks, right-orthogonalized."""
    ranks = _clip_ranks(dims, [rank] * (len(dims) - 1))
    t = TTTensor.random(dims, ranks, np.random.default_rng(seed))
    from .tt import _right_orthogonalize

    cores = _right_orthogonalize(list(t.cores))
    cores[0] = cores[0] / np.linalg.norm(cores[0])
    return TTTensor(cores)


class _Workspace:
    """Mutable ALS state: cores of ``u`` and the interface environments."""

    def __init__(self, W: TTOperator, b: TTTensor, u: TTTensor):
        if W.col_dims != u.dims or W.row_dims != u.dims or b.dims != u.dims:
            raise ValueError("W, b and u have inconsistent dimensions")
        from .tt import _right_orthogonalize

        self.W = W.cores
        self.b = b.cores
        self.M = u.order
        self.u = _right_orthogonalize(list(u.cores))
        M = self.M
        self.LW = [None] * (M + 1)
        self.Lb = [None] * (M + 1)
        self.RW = [None] * (M + 1)
        self.Rb = [None] * (M + 1)
        self.LW[0] = np.ones((1, 1, 1))
        self.Lb[0] = np.ones((1, 1))
        self.RW[M] = np.ones((1, 1, 1))
        self.Rb[M] = np.ones((1, 1))
        for k in range(M - 1, 0, -1):
            self._update_right(k)

    def _update_left(self, k):
        u, W, b = self.u[k], self.W[k], self.b[k]
        L = self.LW[k]
        T = np.einsum("xvy,xia->vyia", L, u, optimize=True)
        T = np.einsum("vyia,vijw->yjaw", T, W, optimize=True)
        self.LW[k + 1] = np.einsum("yjaw,yjc->awc", T, u, optimize=True)
        self.Lb[k + 1] = np.einsum("xb,xia,bic->ac", self.Lb[k], u, b, optimize=True)

    def _update_right(self, k):
        u, W, b = self.u[k], self.W[k], self.b[k]
        R = self.RW[k + 1]
        T = np.einsum("awc,xia->wcxi", R, u, optimize=True)
        T = np.einsum("wcxi,vijw->cxvj", T, W, optimize=True)
        self.RW[k] = np.einsum("cxvj,yjc->xvy", T, u, optimize=True)
        self.Rb[k] = np.einsum("ac,xia,bic->xb", self.Rb[k + 1], u, b, optimize=True)

    def local_rhs(self, k):
        return np.einsum("ab,bic,dc->aid", self.Lb[k], self.b[k], self.Rb[k + 1], optimize=True)

    def local_matvec(self, k, x):
        L, W, R = self.LW[k], self.W[k], self.RW[k + 1]
        T = np.einsum("avx,xjy->avjy", L, x, optimize=True)
        T = np.einsum("avjy,vijw->aiwy", T, W, optimize=True)
        return np.einsum("aiwy,bwy->aib", T, R, optimize=True)

    def local_matrix(self, k):
        L, W, R = self.LW[k], self.W[k], self.RW[k + 1]
        ra, d, rb = self.u[k].shape
        A = np.einsum("avx,vijw,bwy->aibxjy", L, W, R, optimize=True)
        A = A.reshape(ra * d * rb, ra * d * rb)
        return 0.5 * (A + A.T)

    def solve_local(self, k):
        shape = self.u[k].shape
        c = self.local_rhs(k)
        n = c.size
        if n <= LOCAL_DENSE_LIMIT:
            x = _dense_spd_solve(self.local_matrix(k), c.ravel(), k)
        else:
            op = LinearOperator(
                (n, n), matvec=lambda v: self.local_matvec(k, v.reshape(shape)).ravel(), dtype=float
            )
            x, info = cg(op, c.ravel(), x0=self.u[k].ravel(), rtol=1e-13, atol=0.0, maxiter=20 * n)
            if info > 0:
                warnings.warn(f"local iterative solve at core {k} did not reach tolerance", RuntimeWarning)
        x = x.reshape(shape)
        self.u[k] = x
        return -float(np.dot(c.ravel(), x.ravel()))

    def move_right(self, k):
        r0, d, r1 = self.u[k].shape
        Q, R = np.linalg.qr(self.u[k].reshape(r0 * d, r1))
        self.u[k] = Q.reshape(r0, d, Q.shape[1])
        self.u[k + 1] = np.tensordot(R, self.u[k + 1], axes=(1, 0))
        self._update_left(k)

    def move_left(self, k):
        r0, d, r1 = self.u[k].shape
        Q, R = np.linalg.qr(self.u[k].reshape(r0, d * r1).T)
        self.u[k] = Q.T.reshape(Q.shape[1], d, r1)
        self.u[k - 1] = np.tensordot(self.u[k - 1], R.T, axes=(2, 0))
        self._update_right(k)

    def sweep(self) -> float:
        """One forward and backward pass; returns the final objective value."""
        M = self.M
        obj = None
        for k in range(M):
            obj = self.solve_local(k)
            if k < M - 1:
                self.move_right(k)
        for k in range(M - 1, 0, -1):
            self.move_left(k)
            obj = self.solve_local(k - 1)
        return obj

    def tensor(self) -> TTTensor:
        return TTTensor(self.u)


def _dense_spd_solve(A, c, k):
    try:
        cf = cho_factor(A, lower=True, check_finite=False)
        anorm = np.linalg.norm(A, 1)
        rcond, info = lapack.dpocon(cf[0], anorm, uplo="L")
        if info == 0 and rcond > 1e-12:
            return cho_solve(cf, c, check_finite=False)
    except LinAlgError:
        pass
    # near-singular frame: least-squares pseudo-solve
    w, V = eigh(A, check_finite=False)
    if not np.all(np.isfinite(w)) or w[-1] <= 0:
        raise SingularLocalSystem(k, "local matrix is not positive semidefinite")
    keep = w > w[-1] * 1e-12
    return V[:, keep] @ ((V[:, keep].T @ c) / w[keep])


def als_sweep(W: TTOperator, b: TTTensor, u: TTTensor) -> TTTensor:
    """One forward-backward ALS sweep for ``W u = b`` with fixed ranks."""
    ws = _Workspace(W, b, u)
    ws.sweep()
    return ws.tensor()


def normal_residual(W: TTOperator, b: TTTensor, u: TTTensor) -> float:
    """Relative residual ``||W u - b|| / ||b||`` computed in TT arithmetic."""
    nb = norm(b)
    r = norm(add(apply(W, u), scale(b, -1.0)))
    return r / nb if nb > 0 else r


def objective(W: TTOperator, b: TTTensor, u: TTTensor) -> float:
    """Quadratic functional ``u^T W u - 2 b^T u`` minimized by ALS."""
    from .tt import dot

    return dot(u, apply(W, u)) - 2.0 * dot(b, u)


def discrete_residual(system: GalerkinSystem, u: TTTensor) -> float:
    """Relative discrete residual ``||B u - f|| / ||f||`` stacked over modes.

    If ``||f|| = 0`` the absolute residual is returned.
    """
    num = 0.0
    den = 0.0
    for B, f in zip(system.B, system.f):
        r = add(apply(B, u), scale(f, -1.0))
        num += norm(r) ** 2
        den += norm(f) ** 2
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def solve_normal_equations(
    W: TTOperator, b: TTTensor, u0: TTTensor, eps: float, n_iter: int, report: SolveReport | None = None,
    stall_tol: float = 0.0,
):
    """Sweep until ``||W u - b|| <= eps ||b||``, stagnation or ``n_iter`` sweeps."""
    report = report if report is not None else SolveReport()
    ws = _Workspace(W, b, u0)
    u = ws.tensor()
    for _ in range(n_iter):
        t0 = time.perf_counter()
        obj = ws.sweep()
        u = ws.tensor()
        nr = normal_residual(W, b, u)
        report.sweeps += 1
        report.objective.append(obj)
        report.normal_res.append(nr)
        report.sweep_time_ms.append(1e3 * (time.perf_counter() - t0))
        if nr <= eps:
            report.converged = True
            break
        if stall_tol > 0 and len(report.normal_res) > 1:
            prev = report.normal_res[-2]
            if prev - nr <= stall_tol * prev:
                break
    return u, report


def _solution_offset(exponent: ExponentTT, dims) -> TTTensor:
    """Constant ``exp(h(y0))`` (a grid vector in the spatial case) as a TT."""
    if exponent.spatial:
        vecs = [np.asarray(exponent.exp_h_y0)] + [np.eye(d)[0] for d in dims[1:]]
        return TTTensor.rank1(vecs)
    return TTTensor.constant(float(exponent.exp_h_y0), dims)


def exp_tt(h, d_a: int, y0=None, eps: float = 1e-8, n_iter: int = 50, config: SolveConfig | None = None,
           **kwargs):
    """Approximate ``exp(h)`` by Galerkin projection and ALS.

    Parameters
    ----------
    h : ExponentTT or TTTensor
        Exponent. A plain TTTensor is taken as a stochastic exponent with
        the initial point ``y0``.
    d_a : int
        Basis functions per stochastic mode of the result.
    y0 : array_like, optional
        Initial point, ignored if ``h`` is already an ExponentTT.
    eps : float
        Stopping tolerance on ``||W u - b|| / ||b||``.
    n_iter : int
        Maximum number of sweeps.
    config : SolveConfig, optional
        Remaining settings (ranks, weights, seed, rounding of ``W``).

    Returns
    -------
    u : TTTensor
        Coefficients of the approximation of ``exp(h)``.
    report : SolveReport
        Trace, final discrete residual ``res`` and rank profile.
    """
    if config is None:
        config = SolveConfig(d_a=d_a, eps=eps, n_iter=n_iter, **kwargs)
    eps, n_iter = config.eps, config.n_iter
    exponent = h if isinstance(h, ExponentTT) else ExponentTT(h, y0)
    t_start = time.perf_counter()
    system = assemble_system(exponent, d_a, config.lam, config.lam_P)
    dims = system.b.dims
    report = SolveReport()
    if norm(system.b) == 0.0:
        # constant exponent: f = 0 and u = 0
        u = TTTensor.zeros(dims)
        report.converged = True
        report.res = 0.0
    else:
        W = round(system.W, config.round_W) if config.round_W > 0 else system.W
        rank = config.ranks if config.ranks is not None else max(exponent.h.max_rank + 1, 2)
        u0 = initial_guess(dims, rank, config.seed)
        u, report = solve_normal_equations(W, system.b, u0, eps, n_iter, report, config.stall_tol)
        report.res = discrete_residual(system, u)
    out = add(u, _solution_offset(exponent, dims))
    out = round(out, 0.0)
    report.time = time.perf_counter() - t_start
    prof = rank_profile(out)
    report.ranks, report.max_rank, report.dofs = prof.ranks, prof.max_rank, prof.dofs
    return out, report


PRODUCT_SIZE_CAP = 10**8


def _check_product_size(u, d_a: int, spatial: bool) -> None:
    # the unrounded square has squared ranks; refuse before allocating it
    r = u.ranks
    size = sum(r[k] ** 2 * (u.dims[k] if spatial and k == 0 else d_a) * r[k + 1] ** 2 for k in range(u.order))
    if size > PRODUCT_SIZE_CAP:
        raise RankExplosionError(
            f"squaring a rank-{u.max_rank} TT needs {size} entries (cap {PRODUCT_SIZE_CAP}); "
            "raise eps_s or lower s")


def scaled_exp_tt(h, d_a: int, s: int = 0, d_a_scaled: int | None = None, y0=None, eps: float = 1e-8,
                  eps_s: float = 1e-10, n_iter: int = 50, config: SolveConfig | None = None, **kwargs):
    """Approximate ``exp(h)`` as ``exp(2**-s h)`` squared ``s`` times.

    The scaled problem is solved with ``d_a_scaled`` basis functions; every
    squaring is projected onto ``d_a`` basis functions per mode and rounded
    to ``eps_s``. For ``s = 0`` this is :func:`exp_tt` (with ``d_a_scaled``).

    Returns
    -------
    u : TTTensor
    report : SolveReport
        Report of the scaled solve; ``time`` and the rank profile refer to the
        final result.
    """
    if config is None:
        config = SolveConfig(d_a=d_a, d_a_scaled=d_a_scaled, s=s, eps=eps, eps_s=eps_s, n_iter=n_iter,
                             **kwargs)
    exponent = h if isinstance(h, ExponentTT) else ExponentTT(h, y0)
    d_small = config.d_a_scaled or config.d_a
    t_start = time.perf_counter()
    scaled = exponent.scaled(2.0 ** -config.s) if config.s > 0 else exponent
    u, report = exp_tt(scaled, d_small, eps=config.eps, n_iter=config.n_iter, config=config)
    spatial = exponent.spatial
    for _ in range(config.s):
        _check_product_size(u, config.d_a, spatial)
        before = norm(u)
        u = multiply_coeffs(u, u, config.d_a, spatial=spatial)
        u = round(u, config.eps_s)
        after = norm(u)
        if before > 0 and after > SQUARING_GROWTH_LIMIT * before**2 * (u.dims[0] if spatial else 1):
            warnings.warn(
                f"squaring grew the norm from {before:.3e} to {after:.3e}; lower d_a or d_a_scaled, "
                "or use fewer squarings",
                SquaringInstabilityWarning,
            )
        if u.max_rank > config.max_rank:
            raise RankExplosionError(f"rank {u.max_rank} exceeds the cap {config.max_rank}")
    target = [config.d_a] * u.order
    if spatial:
        target[0] = u.dims[0]
    u = pad(u, target, spatial)
    report.time = time.perf_counter() - t_start
    prof = rank_profile(u)
    report.ranks, report.max_rank, report.dofs = prof.ranks, prof.max_rank, prof.dofs
    return u, report
