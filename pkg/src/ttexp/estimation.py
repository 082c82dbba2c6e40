"""A posteriori error estimation and validation oracles."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .galerkin import ExponentTT, GalerkinSystem
from .hermite import diff_matrix, evaluate_function, gauss_hermite, hermite_eval, pad, triple_product
from .tt import TTTensor, add, apply, evaluate, norm, scale

N_MC_DEFAULT = 1000


class QuadratureOrderWarning(RuntimeWarning):
    """Doubling the quadrature order changed the oracle value noticeably."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """The reference least-squares system does not have full column rank."""


@dataclass
class ErrorReport:
    """Error indicators for one approximation."""

    dual_residual: float = float("nan")
    data_oscillation: float = float("nan")
    E_u: float = float("nan")
    eps_u: float = float("nan")
    eps_inf: float = float("nan")
    n_mc: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _shift(system: GalerkinSystem, v: TTTensor) -> TTTensor:
    """Remove the constant ``exp(h(y0))`` from an approximation of ``exp(h)``."""
    e = system.exponent
    dims = v.dims
    if e.spatial:
        vecs = [np.asarray(e.exp_h_y0)] + [np.eye(d)[0] for d in dims[1:]]
        c = TTTensor.rank1(vecs)
    else:
        c = TTTensor.constant(float(e.exp_h_y0), dims)
    return add(v, scale(c, -1.0))


def dual_residual_norm(system: GalerkinSystem, v_a: TTTensor, offset: bool = False) -> float:
    """Euclidean norm ``||f - B v_a||`` of the stacked discrete residual.

    Parameters
    ----------
    system : GalerkinSystem
    v_a : TTTensor
        Approximation of ``exp(h) - exp(h(y0))`` in the ansatz space. With
        ``offset=True`` it approximates ``exp(h)`` and the constant is removed
        first.
    """
    if offset:
        v_a = _shift(system, v_a)
    total = 0.0
    for B, f in zip(system.B, system.f):
        total += norm(add(f, scale(apply(B, v_a), -1.0))) ** 2
    return float(np.sqrt(total))


def _outside_box(t: TTTensor, d_t: Sequence[int], spatial: bool) -> float:
    if all(b >= d for b, d in zip(d_t, t.dims)):
        return 0.0
    inner = pad(pad(t, d_t, spatial), t.dims, spatial)
    return norm(add(t, scale(inner, -1.0)))


def data_oscillation(h, d_t) -> float:
    """Norm of the right-hand side outside the test space.

    Parameters
    ----------
    h : ExponentTT or sequence of TTTensor
        Either an exponent (the right-hand sides ``exp(h(y0)) D_m h`` are
        used) or explicit right-hand side components.
    d_t : int or sequence of int
        Test-space size per stochastic mode.
    """
    if isinstance(h, ExponentTT):
        from .galerkin import build_rhs

        # components at their natural size; d_a = 1 keeps d_t = d_h
        fs = [build_rhs(h, m, 1) for m in range(h.M)]
        spatial = h.spatial
    else:
        fs = list(h)
        spatial = False
    total = 0.0
    for f in fs:
        dims = list(f.dims)
        off = 1 if spatial else 0
        box = [d_t] * (len(dims) - off) if np.isscalar(d_t) else list(d_t)
        target = ([dims[0]] if spatial else []) + [min(b, d) for b, d in zip(box, dims[off:])]
        total += _outside_box(f, target, spatial) ** 2
    return float(np.sqrt(total))


def _derivative(t: TTTensor, m: int) -> TTTensor:
    cores = list(t.cores)
    d = cores[m].shape[1]
    cores[m] = np.einsum("ik,akb->aib", diff_matrix(d, d), cores[m])
    return TTTensor(cores)


def _energy_at(h: TTTensor, v: TTTensor, y0, n: int) -> float:
    M = h.order
    rule = gauss_hermite(n)
    grids = [rule.nodes] * M
    pts = np.array(list(product(*grids)))
    w = np.prod(np.array(list(product(*([rule.weights] * M)))), axis=1)
    hv = evaluate_function(h, pts)
    c = np.exp(evaluate_function(h, np.asarray(y0, dtype=float)))
    u = np.exp(hv) - c
    vv = evaluate_function(v, pts)
    total = np.zeros(len(pts))
    for m in range(M):
        dh = evaluate_function(_derivative(h, m), pts)
        du = dh * np.exp(hv)
        dv = evaluate_function(_derivative(v, m), pts)
        total += ((du - dv) - (u - vv) * dh) ** 2
    return float(np.sqrt(w @ total))


def energy_error_oracle(h, v_a: TTTensor, order: int = 60, offset: bool = False) -> float:
    """``||B(u - v_a)||`` in ``L^2`` of the Gaussian measure, by quadrature.

    ``u = exp(h) - exp(h(y0))`` is evaluated pointwise together with its
    exact gradient on a tensorized Gauss-Hermite grid with ``order`` nodes
    per mode. Only meant for up to three stochastic modes. A
    :class:`QuadratureOrderWarning` is issued if doubling the order changes
    the result by more than ``1e-8``.
    """
    e = h if isinstance(h, ExponentTT) else ExponentTT(h)
    if e.spatial:
        raise ValueError("the quadrature oracle supports stochastic exponents only")
    if e.M > 3:
        raise ValueError("the quadrature oracle is limited to M <= 3")
    v = v_a
    if offset:
        v = add(v, scale(TTTensor.constant(float(e.exp_h_y0), v.dims), -1.0))
    val = _energy_at(e.h, v, e.y0, order)
    check = _energy_at(e.h, v, e.y0, 2 * order)
    if abs(check - val) > 1e-8 * max(1.0, abs(check)):
        warnings.warn(
            f"quadrature order {order} insufficient: {val!r} vs {check!r}", QuadratureOrderWarning
        )
    return check


def l2_error_oracle(h, v_a: TTTensor, order: int = 60) -> float:
    """``||exp(h) - v_a||`` in ``L^2`` of the Gaussian measure by quadrature."""
    e = h if isinstance(h, ExponentTT) else ExponentTT(h)
    rule = gauss_hermite(order)
    pts = np.array(list(product(*([rule.nodes] * e.M))))
    w = np.prod(np.array(list(product(*([rule.weights] * e.M)))), axis=1)
    diff = np.exp(evaluate_function(e.h, pts)) - evaluate_function(v_a, pts)
    return float(np.sqrt(w @ diff**2))


def sample_parameters(n: int, M: int, seed: int = 0) -> np.ndarray:
    """Standard normal samples from a counter-based generator (Philox)."""
    if n < 1:
        raise ValueError("N_MC must be at least 1")
    return np.random.Generator(np.random.Philox(int(seed))).standard_normal((n, M))


def _as_evaluator(v, spatial: bool) -> Callable:
    if isinstance(v, TTTensor):
        return lambda Y: evaluate_function(v, Y, spatial=spatial)
    return v


def _sampled(reference, v_a, n_mc, seed, spatial, M):
    if M is None:
        if not isinstance(v_a, TTTensor):
            raise ValueError("M is required when v_a is not a TTTensor")
        M = v_a.order - (1 if spatial else 0)
    Y = sample_parameters(n_mc, M, seed)
    ref = _as_evaluator(reference, spatial)
    try:
        u = np.asarray(ref(Y), dtype=float)
    except Exception as exc:  # pragma: no cover - re-raised with context
        raise RuntimeError(f"reference evaluation failed on the sample batch (seed {seed})") from exc
    if not np.all(np.isfinite(u)):
        bad = int(np.argmax(~np.isfinite(u).reshape(n_mc, -1).all(axis=1)))
        raise FloatingPointError(f"reference is not finite at sample {bad}")
    v = np.asarray(_as_evaluator(v_a, spatial)(Y), dtype=float)
    return u.reshape(n_mc, -1), v.reshape(n_mc, -1)


def mc_errors(reference, v_a, n_mc: int = N_MC_DEFAULT, seed: int = 0, spatial: bool = False,
              M: int | None = None) -> tuple[float, float]:
    """Monte Carlo mean absolute and mean relative errors ``(E_u, eps_u)``.

    Parameters
    ----------
    reference : callable or TTTensor
        Maps parameter samples ``(N, M)`` to values ``(N,)`` or fields ``(N, J)``.
    v_a : callable or TTTensor
        Approximation, same conventions.
    spatial : bool
        Whether TT inputs carry a leading spatial mode. Field errors use the
        unweighted grid 2-norm.
    """
    u, v = _sampled(reference, v_a, n_mc, seed, spatial, M)
    err = np.linalg.norm(u - v, axis=1)
    den = np.linalg.norm(u, axis=1)
    if np.any(den == 0):
        raise ZeroDivisionError(f"reference vanishes at sample {int(np.argmax(den == 0))}")
    return float(err.mean()), float((err / den).mean())


def mc_error_linf(reference, v_a, n_mc: int = N_MC_DEFAULT, seed: int = 0, spatial: bool = False,
                  M: int | None = None) -> float:
    """Average over samples of ``max|u - v_a| / max|u|`` over the grid."""
    u, v = _sampled(reference, v_a, n_mc, seed, spatial, M)
    err = np.abs(u - v).max(axis=1)
    den = np.abs(u).max(axis=1)
    if np.any(den == 0):
        raise ZeroDivisionError(f"reference vanishes at sample {int(np.argmax(den == 0))}")
    return float((err / den).mean())


def expectation(u: TTTensor, spatial: bool = False):
    """Mean under the standard Gaussian: the coefficient at the zero multi-index."""
    rows = [None] if spatial else []
    rows += [np.eye(d)[0] for d in u.dims[(1 if spatial else 0):]]
    return evaluate(u, rows)


evidence = expectation


def univariate_reference(h_coeffs, d_a: int, y0: float = 0.0) -> np.ndarray:
    """Dense least-squares reference solution for one stochastic mode.

    Solves ``min ||B u - f||`` over coefficient vectors with ``u(y0) = 0``
    by a QR factorization, then adds ``exp(h(y0))``.

    The constraint is imposed by eliminating the constant coefficient,
    ``c_0 = -sum_j c_j p_j(y0)``, so the unknowns are ``c_1 .. c_{d_a-1}``.

    Returns
    -------
    ndarray, shape (d_a,)
        Coefficients of the approximation of ``exp(h)``.
    """
    h = np.asarray(h_coeffs, dtype=float).reshape(-1)
    d_h = h.size
    if d_h > d_a:
        raise ValueError("d_h must not exceed d_a")
    d_t = d_a + d_h - 1
    tau = triple_product(d_t, d_a, d_h)
    dh = diff_matrix(d_h, d_h) @ h
    H = np.einsum("ilk,k->il", tau, dh)
    B = diff_matrix(d_t, d_a) - H
    c = float(np.exp(hermite_eval(d_h, y0) @ h))
    f = np.zeros(d_t)
    f[:d_h] = c * dh
    p = hermite_eval(d_a, y0)
    # columns for c_1.. with c_0 eliminated
    Bred = B[:, 1:] - np.outer(B[:, 0], p[1:])
    if Bred.shape[1] == 0:
        coef = np.zeros(d_a)
    else:
        Q, R = qr(Bred, mode="economic")
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-13 * max(diag.max(), 1.0):
            raise RankDeficiencyError("reference system is rank deficient")
        tail = solve_triangular(R, Q.T @ f)
        coef = np.concatenate([[-p[1:] @ tail], tail])
    coef[0] += c
    return coef
