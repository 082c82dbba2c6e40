"""Estimator-style wrapper around the scaled exponential solver."""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .als import SolveConfig, scaled_exp_tt
from .estimation import expectation
from .galerkin import ExponentTT
from .hermite import evaluate_function
from .tt import TTTensor


class ExpTT(BaseEstimator):
    """Approximate ``exp(h)`` for an exponent ``h`` given in TT format.

    Parameters
    ----------
    d_a : int
        Basis functions per stochastic mode of the result.
    s : int
        Scaling exponent (``exp(h) = exp(2**-s h) ** (2**s)``).
    d_a_scaled : int or None
        Basis functions for the scaled problem.
    eps, eps_s : float
        ALS stopping tolerance and rounding tolerance after each squaring.
    n_iter : int
        Maximum number of ALS sweeps.
    ranks : int or None
        Ranks of the initial guess.
    y0 : array_like or None
        Initial point, default the origin.
    spatial : bool
        Whether mode 0 of the exponent is a spatial grid index.
    random_state : int
        Seed of the initial guess.

    Attributes
    ----------
    coef_ : TTTensor
        Hermite coefficients of the approximation.
    report_ : SolveReport
    res_ : float
        Relative discrete residual.
    n_features_in_ : int
        Number of stochastic parameters.

    Examples
    --------
    >>> import numpy as np
    >>> from ttexp import ExpTT, TTTensor
    >>> h = TTTensor.rank1([np.array([0.0, 1.0])])
    >>> est = ExpTT(d_a=20).fit(h)
    >>> float(np.round(est.predict([[0.5]])[0], 8)) == float(np.round(np.exp(0.5), 8))
    True
    """

    def __init__(self, d_a=10, s=0, d_a_scaled=None, eps=1e-8, eps_s=1e-10, n_iter=50, ranks=None,
                 y0=None, spatial=False, random_state=0):
        self.d_a = d_a
        self.s = s
        self.d_a_scaled = d_a_scaled
        self.eps = eps
        self.eps_s = eps_s
        self.n_iter = n_iter
        self.ranks = ranks
        self.y0 = y0
        self.spatial = spatial
        self.random_state = random_state

    def _config(self) -> SolveConfig:
        return SolveConfig(d_a=self.d_a, d_a_scaled=self.d_a_scaled, s=self.s, eps=self.eps,
                           eps_s=self.eps_s, n_iter=self.n_iter, ranks=self.ranks,
                           seed=int(self.random_state or 0))

    def fit(self, h, y=None):
        """Compute the approximation for the exponent ``h`` (TTTensor or ExponentTT)."""
        if isinstance(h, ExponentTT):
            exponent = h
        elif isinstance(h, TTTensor):
            exponent = ExponentTT(h, self.y0, self.spatial)
        else:
            raise TypeError("h must be a TTTensor or ExponentTT")
        self.exponent_ = exponent
        self.coef_, self.report_ = scaled_exp_tt(exponent, self.d_a, config=self._config())
        self.res_ = self.report_.res
        self.n_features_in_ = exponent.M
        return self

    def predict(self, X):
        """Evaluate the approximation at parameter points ``X`` of shape ``(N, M)``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return evaluate_function(self.coef_, X, spatial=self.exponent_.spatial)

    def mean(self):
        """Expectation of the approximation under the standard Gaussian."""
        check_is_fitted(self, "coef_")
        return expectation(self.coef_, self.exponent_.spatial)
