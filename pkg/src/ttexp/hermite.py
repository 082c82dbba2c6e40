"""Normalized probabilists' Hermite basis.

``p_k = He_k / sqrt(k!)`` is orthonormal under the standard Gaussian weight.
All routines here work with coefficient vectors in that basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import lgamma

import numpy as np

from .tt import TTTensor, evaluate

MAX_DEGREE = 120


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for the standard Gaussian measure (weights sum to 1)."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def _check_degree(d: int) -> int:
    d = int(d)
    if d < 1:
        raise ValueError("number of basis functions must be at least 1")
    if d > MAX_DEGREE + 1:
        raise ValueError(f"degree {d - 1} exceeds the supported maximum {MAX_DEGREE}")
    return d


def hermite_eval(d: int, y) -> np.ndarray:
    """Evaluate ``p_0, ..., p_{d-1}`` at ``y``.

    Parameters
    ----------
    d : int
        Number of basis functions.
    y : float or array_like
        Evaluation points.

    Returns
    -------
    ndarray
        Shape ``(d,)`` for scalar ``y``, otherwise ``y.shape + (d,)``.
    """
    d = _check_degree(d)
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape + (d,))
    out[..., 0] = 1.0
    if d > 1:
        out[..., 1] = y
    # normalized form of He_{k+1} = y He_k - k He_{k-1}
    for k in range(1, d - 1):
        out[..., k + 1] = (y * out[..., k] - np.sqrt(k) * out[..., k - 1]) / np.sqrt(k + 1)
    return out


def diff_matrix(d_t: int, d_a: int) -> np.ndarray:
    """Galerkin matrix ``D[i, j] = (p_i, p_j')`` of shape ``(d_t, d_a)``."""
    if d_t < 1 or d_a < 1:
        raise ValueError("dimensions must be at least 1")
    D = np.zeros((d_t, d_a))
    for j in range(1, d_a):
        if j - 1 < d_t:
            D[j - 1, j] = np.sqrt(j)
    return D


def embed(d_t: int, d_a: int) -> np.ndarray:
    """Rectangular identity mapping degree-``d_a`` coefficients into ``d_t`` slots."""
    return np.eye(d_t, d_a)


@lru_cache(maxsize=64)
def gauss_hermite(n: int) -> QuadratureRule:
    """``n``-point Gauss-Hermite rule, exact up to polynomial degree ``2n - 1``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


def _triple_analytic(d1, d2, d3):
    i = np.arange(d1)[:, None, None]
    j = np.arange(d2)[None, :, None]
    k = np.arange(d3)[None, None, :]
    total = i + j + k
    s = total // 2
    valid = (total % 2 == 0) & (s >= i) & (s >= j) & (s >= k)
    lg = np.vectorize(lgamma, otypes=[float])
    i, j, k, s = np.broadcast_arrays(i, j, k, s)
    with np.errstate(invalid="ignore"):
        logv = (
            # grouped so the result is exactly symmetric in i and j
            0.5 * (lg(i + 1.0) + lg(j + 1.0) + lg(k + 1.0))
            - (lg(np.maximum(s - i, 0) + 1.0) + lg(np.maximum(s - j, 0) + 1.0))
            - lg(np.maximum(s - k, 0) + 1.0)
        )
    return np.where(valid, np.exp(logv), 0.0)


def _triple_quadrature(d1, d2, d3):
    n = (d1 + d2 + d3) // 2 + 2
    rule = gauss_hermite(n)
    P = hermite_eval(max(d1, d2, d3), rule.nodes)
    return np.einsum("q,qi,qj,qk->ijk", rule.weights, P[:, :d1], P[:, :d2], P[:, :d3])


@lru_cache(maxsize=64)
def _triple_cached(d1, d2, d3, method):
    t = _triple_analytic(d1, d2, d3) if method == "analytic" else _triple_quadrature(d1, d2, d3)
    t.setflags(write=False)
    return t


def triple_product(d1: int, d2: int, d3: int, method: str = "analytic") -> np.ndarray:
    """Triple products ``tau[i, j, k] = E[p_i p_j p_k]``.

    Parameters
    ----------
    d1, d2, d3 : int
        Number of basis functions along each index.
    method : {"analytic", "quadrature"}
        The closed form ``sqrt(i! j! k!) / ((s-i)! (s-j)! (s-k)!)`` with
        ``s = (i+j+k)/2`` is evaluated in log space and stays accurate at high
        degree. Gauss-Hermite quadrature is exact in exact arithmetic but loses
        digits once the degree exceeds roughly 20.
    """
    for d in (d1, d2, d3):
        _check_degree(d)
    if method not in ("analytic", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    return _triple_cached(int(d1), int(d2), int(d3), method)


@dataclass(frozen=True)
class BasisContext:
    """Per-mode Hermite data for a fixed number of basis functions.

    Attributes
    ----------
    max_degree : int
        Number of basis functions ``d`` (polynomial degree ``d - 1``).
    """

    max_degree: int

    def __post_init__(self):
        _check_degree(self.max_degree)

    def eval(self, y) -> np.ndarray:
        return hermite_eval(self.max_degree, y)

    def D(self, d_t: int | None = None) -> np.ndarray:
        return diff_matrix(d_t or self.max_degree, self.max_degree)

    def tau(self, d2: int | None = None, d3: int | None = None) -> np.ndarray:
        d = self.max_degree
        return triple_product(d, d2 or d, d3 or d)

    def quadrature(self, n: int) -> QuadratureRule:
        return gauss_hermite(n)


def pad(u: TTTensor, dims, spatial: bool = False) -> TTTensor:
    """Zero-pad or truncate (project) each stochastic mode to the given sizes."""
    dims = list(dims)
    cores = []
    for m, (c, d) in enumerate(zip(u.cores, dims)):
        if spatial and m == 0:
            if d != c.shape[1]:
                raise ValueError("the spatial mode cannot be resized")
            cores.append(c)
            continue
        if d <= c.shape[1]:
            cores.append(c[:, :d, :])
        else:
            cores.append(np.pad(c, ((0, 0), (0, d - c.shape[1]), (0, 0))))
    return TTTensor(cores)


def project(u: TTTensor, degree: int, spatial: bool = False) -> TTTensor:
    """Orthogonal projection onto polynomials with fewer than ``degree`` terms per mode."""
    dims = [min(d, degree) for d in u.dims]
    if spatial:
        dims[0] = u.dims[0]
    return pad(u, dims, spatial)


def multiply_coeffs(u: TTTensor, v: TTTensor, out_degree: int, spatial: bool = False) -> TTTensor:
    """Coefficients of the pointwise product ``u * v``, projected to ``out_degree``.

    Each stochastic mode is contracted with the triple-product tensor; bond
    ranks multiply. With ``spatial=True`` mode 0 is a grid index and is
    multiplied entrywise.
    """
    if u.order != v.order:
        raise ValueError("operands have different orders")
    if spatial and u.dims[0] != v.dims[0]:
        raise ValueError("spatial grid sizes differ")
    if out_degree < 1:
        raise ValueError("out_degree must be at least 1")
    cores = []
    for m, (a, b) in enumerate(zip(u.cores, v.cores)):
        ra, da, sa = a.shape
        rb, db, sb = b.shape
        if spatial and m == 0:
            c = np.einsum("axb,cxd->acxbd", a, b).reshape(ra * rb, da, sa * sb)
        else:
            dout = min(out_degree, da + db - 1)
            tau = triple_product(da, db, dout)
            c = np.einsum("ijk,aib,cjd->ackbd", tau, a, b, optimize=True)
            c = c.reshape(ra * rb, dout, sa * sb)
            if dout < out_degree:
                c = np.pad(c, ((0, 0), (0, out_degree - dout), (0, 0)))
        cores.append(c)
    return TTTensor(cores)


def evaluate_function(u: TTTensor, Y, spatial: bool = False) -> np.ndarray:
    """Evaluate the function represented by ``u`` at parameter points ``Y``.

    Parameters
    ----------
    u : TTTensor
        Coefficient tensor in the normalized Hermite basis.
    Y : array_like, shape (N, M) or (M,)
        Parameter points, one column per stochastic mode.
    spatial : bool
        If true, mode 0 is a grid index and the result has shape ``(N, J)``.
    """
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    offset = 1 if spatial else 0
    if Y.shape[1] != u.order - offset:
        raise ValueError(f"expected {u.order - offset} parameters, got {Y.shape[1]}")
    rows = [None] if spatial else []
    for m in range(Y.shape[1]):
        rows.append(hermite_eval(u.dims[m + offset], Y[:, m]))
    out = evaluate(u, rows)
    out = np.asarray(out)
    if out.ndim == 0 or (not spatial and out.ndim == 1 and single):
        out = np.atleast_1d(out)
    return out[0] if single else out
