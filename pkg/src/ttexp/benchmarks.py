"""Benchmark exponents and end-to-end benchmark pipelines."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import isqrt

import numpy as np
from scipy.special import zeta

from .als import SolveConfig, scaled_exp_tt
from .estimation import ErrorReport, expectation, mc_error_linf, mc_errors
from .galerkin import ExponentTT
from .hermite import multiply_coeffs
from .tt import TTTensor, add, round, scale


class NonPSDKernelError(ValueError):
    """The discretized covariance has a clearly negative eigenvalue."""


# -- spatial grids -----------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Interpolation points with equal-area quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def J(self) -> int:
        return self.points.shape[0]


def square_grid(n: int) -> Grid:
    """Cell-centred ``n x n`` grid on the unit square."""
    if n < 1:
        raise ValueError("n must be at least 1")
    g = (np.arange(n) + 0.5) / n
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    return Grid(pts, np.full(len(pts), 1.0 / n**2))


def lshape_grid(n: int) -> Grid:
    """Square grid with the points inside ``(1/2, 1)^2`` removed."""
    sq = square_grid(n)
    keep = ~((sq.points[:, 0] > 0.5) & (sq.points[:, 1] > 0.5))
    return Grid(sq.points[keep], sq.weights[keep])


def make_grid(kind: str, n: int) -> Grid:
    if kind == "square":
        return square_grid(n)
    if kind == "lshape":
        return lshape_grid(n)
    raise ValueError(f"unknown grid {kind!r}; expected 'square' or 'lshape'")


# -- KL fields ---------------------------------------------------------------

@dataclass(frozen=True)
class KLField:
    """Coefficient functions ``gamma_m`` of an affine field on a grid.

    Attributes
    ----------
    gamma : ndarray, shape (J, M)
    eigenvalues : ndarray or None
        KL eigenvalues when the field comes from a covariance kernel.
    """

    grid: Grid
    gamma: np.ndarray
    sigma: float | None = None
    eigenvalues: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.gamma.shape[1]

    def evaluate(self, Y) -> np.ndarray:
        """Field values ``(N, J)`` at parameter samples ``(N, M)``."""
        return np.atleast_2d(Y) @ self.gamma.T


def fourier_kl_modes(m: int, sigma: float) -> tuple[float, int, int]:
    """Amplitude and planar wave numbers ``(beta_1, beta_2)`` of mode ``m >= 1``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if sigma <= 1:
        raise ValueError("sigma must exceed 1")
    k = (isqrt(8 * m + 1) - 1) // 2
    beta1 = m - k * (k + 1) // 2
    beta2 = k - beta1
    amp = 9.0 / (10.0 * zeta(sigma)) * m ** (-sigma)
    return float(amp), int(beta1), int(beta2)


def fourier_kl_field(M: int, sigma: float, grid: Grid) -> KLField:
    """Cosine modes ``a_m cos(2 pi beta_1 x_1) cos(2 pi beta_2 x_2)`` on ``grid``."""
    x = grid.points
    gamma = np.empty((grid.J, M))
    for m in range(1, M + 1):
        a, b1, b2 = fourier_kl_modes(m, sigma)
        gamma[:, m - 1] = a * np.cos(2 * np.pi * b1 * x[:, 0]) * np.cos(2 * np.pi * b2 * x[:, 1])
    return KLField(grid, gamma, sigma=sigma)


def nystrom_kl(c: float, ell: float, grid: Grid, M: int) -> KLField:
    """Leading KL modes of the kernel ``c exp(-|x - z|^2 / ell^2)`` by Nystrom.

    The weighted eigenproblem ``W^{1/2} K W^{1/2} v = lambda v`` is solved
    densely; eigenfunctions ``phi = W^{-1/2} v`` are orthonormal under the grid
    quadrature and ``gamma_m = sqrt(lambda_m) phi_m``.
    """
    if not 1 <= M <= grid.J:
        raise ValueError("need 1 <= M <= J")
    x = grid.points
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    K = c * np.exp(-d2 / ell**2)
    sw = np.sqrt(grid.weights)
    lam, V = np.linalg.eigh(sw[:, None] * K * sw[None, :])
    lam, V = lam[::-1], V[:, ::-1]
    if lam[-1] < -1e-10 * lam[0]:
        raise NonPSDKernelError(f"kernel eigenvalue {lam[-1]:.3e} is negative beyond round-off")
    lam = np.clip(lam, 0.0, None)
    phi = V[:, :M] / sw[:, None]
    return KLField(grid, phi * np.sqrt(lam[:M]), eigenvalues=lam)


def kl_truncation_error(field: KLField, M: int, M_hat: int | None = None) -> float:
    """Relative mean-square ``L^2`` error of truncating the expansion at ``M`` terms."""
    lam = field.eigenvalues
    if lam is None:
        raise ValueError("field carries no eigenvalues")
    M_hat = len(lam) if M_hat is None else M_hat
    tail = lam[M:M_hat].sum()
    return float(np.sqrt(tail / lam[:M_hat].sum()))


def affine_exponent_tt(gamma: np.ndarray, M: int | None = None, y0=None) -> ExponentTT:
    """Exact TT of ``sum_m gamma_m(x) y_m`` with a leading spatial mode.

    The spatial core carries one state per pending term. Stochastic core ``j``
    emits ``p_1`` for term ``j`` (moving it to the finished state) and ``p_0``
    for every other state, so bond ``j`` has rank ``M - j + 1`` (at most ``M``).
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2:
        raise ValueError("gamma must have shape (J, M)")
    if M is not None:
        gamma = gamma[:, :M]
    J, M = gamma.shape
    if M < 1:
        raise ValueError("need at least one term")
    cores = [gamma[None]]
    for j in range(M):
        first = j == 0
        r_in = M if first else M - j + 1
        r_out = 1 if j == M - 1 else M - j
        core = np.zeros((r_in, 2, r_out))
        off = 0 if first else 1  # state 0 is 'finished' after the first core
        if not first:
            core[0, 0, 0] = 1.0
        core[off, 1, 0] = 1.0
        for t in range(1, M - j):
            core[off + t, 0, t] = 1.0
        cores.append(core)
    return ExponentTT(TTTensor(cores), y0, spatial=True)


# -- correlated Gaussian -----------------------------------------------------

@dataclass(frozen=True)
class GaussianDensitySpec:
    """Covariance ``mu I + (1 - mu) J`` in ``M`` dimensions."""

    M: int
    mu: float

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not 0 < self.mu <= 1:
            raise ValueError("mu must lie in (0, 1]")

    @property
    def c(self) -> float:
        mu, M = self.mu, self.M
        return (1 - mu) / (mu * (mu + M * (1 - mu)))

    @property
    def covariance(self) -> np.ndarray:
        return self.mu * np.eye(self.M) + (1 - self.mu) * np.ones((self.M, self.M))

    @property
    def inverse(self) -> np.ndarray:
        return np.eye(self.M) / self.mu - self.c * np.ones((self.M, self.M))

    @property
    def logdet(self) -> float:
        mu, M = self.mu, self.M
        return (M - 1) * np.log(mu) + np.log(mu + M * (1 - mu))

    def logpdf(self, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        s = Y.sum(axis=1)
        quad = (Y**2).sum(axis=1) / self.mu - self.c * s**2
        return -0.5 * self.M * np.log(2 * np.pi) - 0.5 * self.logdet - 0.5 * quad

    def pdf(self, Y) -> np.ndarray:
        return np.exp(self.logpdf(Y))

    def reference_mean(self) -> float:
        """``E[rho(y)]`` for ``y ~ N(0, I)``, i.e. the N(0, Sigma + I) density at 0."""
        sign, ld = np.linalg.slogdet(self.covariance + np.eye(self.M))
        return float(np.exp(-0.5 * self.M * np.log(2 * np.pi) - 0.5 * ld))


def gaussian_logdensity_tt(M: int, mu: float, relative_to_reference: bool = False, y0=None) -> ExponentTT:
    """Exact TT of the log-density of ``N(0, mu I + (1 - mu) J)``.

    Uses ``Sigma^{-1} = I / mu - c J`` so that

        log rho = const + a sum_m y_m^2 + b (sum_m y_m)^2

    with ``a = -1/(2 mu)`` and ``b = c / 2``. With ``relative_to_reference``
    the log of the standard normal density is subtracted, giving the density
    with respect to the Gaussian reference measure (whose mean is 1).

    Each core is a 3x3 block core over the states (empty, partial sum,
    complete); bond ranks are at most 3 and per-mode degree is 2.
    """
    spec = GaussianDensitySpec(M, mu)
    a = -0.5 / mu
    b = 0.5 * spec.c
    const = -0.5 * spec.logdet
    if relative_to_reference:
        a += 0.5
    else:
        const -= 0.5 * M * np.log(2 * np.pi)
    p0 = np.array([1.0, 0.0, 0.0])
    p1 = np.array([0.0, 1.0, 0.0])
    sq = np.array([1.0, 0.0, np.sqrt(2.0)])  # y^2 = p_0 + sqrt(2) p_2
    core = np.zeros((3, 3, 3))
    core[0, :, 0] = p0
    core[0, :, 1] = p1
    core[0, :, 2] = (a + b) * sq
    core[1, :, 1] = p0
    core[1, :, 2] = 2 * b * p1
    core[2, :, 2] = p0
    first = core[:1].copy()
    first[0, :, 2] += const * p0
    if M == 1:
        cores = [first[:, :, 2:]]
    else:
        cores = [first] + [core] * (M - 2) + [core[:, :, 2:]]
    h = round(TTTensor(cores), 0.0)
    return ExponentTT(h, y0)


# -- Bayesian potential ------------------------------------------------------

def bayes_potential_tt(G, delta, sigma, tol: float = 1e-12, y0=None) -> ExponentTT:
    """Log-likelihood ``-1/2 sum_j (delta_j - G_j(y))^2 / sigma_j^2`` as a TT.

    Parameters
    ----------
    G : sequence of TTTensor
        Forward-map components in the Hermite basis, all with the same dims.
    delta : array_like
        Observations.
    sigma : float or array_like
        Noise standard deviations (diagonal covariance).
    tol : float
        Rounding tolerance of the sum.
    """
    G = list(G)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), delta.shape)
    if len(G) != delta.size:
        raise ValueError("need one forward component per observation")
    if np.any(sigma <= 0):
        raise ValueError("noise standard deviations must be positive")
    dims = G[0].dims
    if any(g.dims != dims for g in G):
        raise ValueError("forward components have different dims")
    out_degree = 2 * max(dims) - 1
    total = None
    for g, d, s in zip(G, delta, sigma):
        r = add(g, TTTensor.constant(-d, dims))
        sq = scale(multiply_coeffs(r, r, out_degree), -0.5 / s**2)
        total = sq if total is None else round(add(total, sq), tol)
    return ExponentTT(round(total, tol), y0)


def synthetic_affine_forward(M: int, n_obs: int, seed: int = 0, decay: float = 2.0, amplitude: float = 0.5):
    """Random affine surrogates ``G_j(y) = g_j0 + sum_m g_jm y_m`` as TTs.

    The coefficient of ``y_m`` has standard deviation ``amplitude * m**-decay``.
    """
    rng = np.random.default_rng(seed)
    scale_ = amplitude * np.concatenate([[1.0], np.arange(1, M + 1, dtype=float) ** -decay])
    coef = rng.standard_normal((n_obs, M + 1)) * scale_
    out = []
    for g in coef:
        # rank-2 Laplace-like TT of an affine function
        cores = []
        for m in range(M):
            lin = np.array([0.0, g[m + 1]])
            one = np.array([1.0, 0.0])
            c = np.zeros((2, 2, 2))
            c[0, :, 0] = one
            c[0, :, 1] = lin
            c[1, :, 1] = one
            cores.append(c)
        cores[0] = cores[0][:1].copy()
        cores[0][0, :, 1] += g[0] * np.array([1.0, 0.0])
        cores[-1] = cores[-1][:, :, 1:]
        out.append(round(TTTensor(cores), 0.0))
    return out, coef


def affine_forward_eval(coef: np.ndarray, Y) -> np.ndarray:
    Y = np.atleast_2d(Y)
    return coef[:, 0][None, :] + Y @ coef[:, 1:].T


def affine_evidence(coef: np.ndarray, delta, sigma: float) -> float:
    """Closed-form ``E[exp(-|delta - G(y)|^2 / (2 sigma^2))]`` for affine ``G`` and standard normal ``y``."""
    A = coef[:, 1:]
    r = np.asarray(delta, dtype=float) - coef[:, 0]
    C = sigma**2 * np.eye(len(r)) + A @ A.T
    _, logdet = np.linalg.slogdet(np.eye(A.shape[1]) + A.T @ A / sigma**2)
    return float(np.exp(-0.5 * logdet - 0.5 * r @ np.linalg.solve(C, r)))


# -- pipelines ---------------------------------------------------------------

ROW_COLUMNS = ("param", "r_max", "res", "E_u", "eps_u", "eps_inf", "time")


@dataclass
class BenchmarkResult:
    name: str
    param_name: str
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    grid: Grid | None = None

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports)


_COMMON = {"d_a": 10, "d_a_scaled": None, "s": 0, "eps": 1e-8, "eps_s": 1e-10, "n_iter": 50,
           "ranks": None, "lam": 1.0, "lam_P": 1.0, "round_W": 1e-12, "max_rank": 400,
           "stall_tol": 1e-6, "n_mc": 1000}

BENCHMARK_DEFAULTS = {
    "gaussian_density": {**_COMMON, "M": 5, "mu": [1.0], "d_a": 30, "relative_to_reference": False,
                         "ranks": 8},
    "kl_fourier": {**_COMMON, "M": [10], "sigma": 2.0, "grid": "square", "n_grid": 10, "s": 5,
                   "eps_s": 1e-7, "ranks": 32},
    "kl_gaussian": {**_COMMON, "M": 10, "ell": [1.0], "c": 1e-2, "grid": "lshape", "n_grid": 12,
                    "M_hat": 50, "s": 5, "eps_s": 1e-7, "ranks": 32},
    "bayes": {**_COMMON, "M": 4, "n_obs": 5, "noise": 1.0, "d_a": 30, "d_a_scaled": 15, "s": 3,
              "forward_seed": 0, "ranks": 12},
}


def _solve_config(p: dict, seed: int) -> SolveConfig:
    keys = ("d_a", "d_a_scaled", "s", "eps", "eps_s", "n_iter", "ranks", "lam", "lam_P", "round_W", "max_rank",
            "stall_tol")
    return SolveConfig(**{k: p[k] for k in keys}, seed=seed)


def _listify(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _run(name, param_name, cases, p, seed, spatial_eval):
    result = BenchmarkResult(name, param_name)
    cfg = _solve_config(p, seed)
    for param, exponent, reference in cases:
        t0 = time.perf_counter()
        u, rep = scaled_exp_tt(exponent, cfg.d_a, config=cfg)
        elapsed = time.perf_counter() - t0
        E, eps = mc_errors(reference, u, p["n_mc"], seed, spatial=exponent.spatial, M=exponent.M)
        einf = mc_error_linf(reference, u, p["n_mc"], seed, spatial=exponent.spatial, M=exponent.M)
        result.reports.append(rep)
        result.errors.append(ErrorReport(E_u=E, eps_u=eps, eps_inf=einf, n_mc=p["n_mc"], seed=seed))
        result.rows.append((param, rep.max_rank, rep.res, E, eps, einf, elapsed))
        result.extra.setdefault("mean", []).append(_mean_value(u, exponent.spatial))
    return result


def _mean_value(u, spatial):
    m = expectation(u, spatial)
    return float(m) if np.ndim(m) == 0 else [float(v) for v in np.ravel(m)]


def run_gaussian_density(p: dict, seed: int = 0) -> BenchmarkResult:
    cases = []
    for mu in _listify(p["mu"]):
        spec = GaussianDensitySpec(int(p["M"]), float(mu))
        e = gaussian_logdensity_tt(spec.M, spec.mu, p["relative_to_reference"])
        if p["relative_to_reference"]:
            ref = lambda Y, spec=spec: spec.pdf(Y) * np.exp(0.5 * (Y**2).sum(1) + 0.5 * spec.M * np.log(2 * np.pi))
        else:
            ref = spec.pdf
        cases.append((float(mu), e, ref))
    return _run("gaussian_density", "mu", cases, p, seed, False)


def run_kl_fourier(p: dict, seed: int = 0) -> BenchmarkResult:
    grid = make_grid(p["grid"], int(p["n_grid"]))
    cases = []
    for M in _listify(p["M"]):
        fld = fourier_kl_field(int(M), float(p["sigma"]), grid)
        e = affine_exponent_tt(fld.gamma)
        cases.append((int(M), e, lambda Y, fld=fld: np.exp(fld.evaluate(Y))))
    res = _run("kl_fourier", "M", cases, p, seed, True)
    res.grid = grid
    return res


def run_kl_gaussian(p: dict, seed: int = 0) -> BenchmarkResult:
    grid = make_grid(p["grid"], int(p["n_grid"]))
    cases = []
    trunc = []
    M = int(p["M"])
    for ell in _listify(p["ell"]):
        fld = nystrom_kl(float(p["c"]), float(ell), grid, M)
        trunc.append(kl_truncation_error(fld, M, min(int(p["M_hat"]), grid.J)))
        e = affine_exponent_tt(fld.gamma)
        cases.append((float(ell) ** 2, e, lambda Y, fld=fld: np.exp(fld.evaluate(Y))))
    res = _run("kl_gaussian", "ell^2", cases, p, seed, True)
    res.extra["kl_truncation_error"] = trunc
    res.grid = grid
    return res


def run_bayes(p: dict, seed: int = 0) -> BenchmarkResult:
    M, n_obs = int(p["M"]), int(p["n_obs"])
    G, coef = synthetic_affine_forward(M, n_obs, int(p["forward_seed"]))
    rng = np.random.Generator(np.random.Philox(int(p["forward_seed"]) + 1))
    y_true = rng.standard_normal(M)
    delta = affine_forward_eval(coef, y_true)[0] + float(p["noise"]) * rng.standard_normal(n_obs)
    e = bayes_potential_tt(G, delta, float(p["noise"]))

    def likelihood(Y):
        r = delta[None, :] - affine_forward_eval(coef, Y)
        return np.exp(-0.5 * (r**2).sum(1) / float(p["noise"]) ** 2)

    res = _run("bayes", "M", [(M, e, likelihood)], p, seed, False)
    res.extra["evidence"] = res.extra.pop("mean")
    res.extra["evidence_exact"] = [affine_evidence(coef, delta, float(p["noise"]))]
    return res


BENCHMARKS = {
    "gaussian_density": run_gaussian_density,
    "kl_fourier": run_kl_fourier,
    "kl_gaussian": run_kl_gaussian,
    "bayes": run_bayes,
}


def run_benchmark(name: str, params: dict | None = None, seed: int = 0) -> BenchmarkResult:
    """Run a named benchmark with parameters merged over its defaults."""
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(sorted(BENCHMARKS))}")
    p = dict(BENCHMARK_DEFAULTS[name])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise KeyError(f"unknown parameters for {name}: {', '.join(sorted(unknown))}")
    p.update(params or {})
    return BENCHMARKS[name](p, seed)
