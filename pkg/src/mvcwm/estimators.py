"""Scikit-learn style estimator wrappers around the ECM engine.

Both estimators take the covariate stack as ``X`` with shape
``(n_obs, q, r)`` and the response stack as ``y`` with shape
``(n_obs, p, r)``.  They follow the usual conventions: constructor
arguments are stored verbatim, fitted state lives in trailing-underscore
attributes, and ``get_params``/``set_params``/``clone`` work as expected.
"""

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .densities import Family
from .ecm import FitControls, MatrixData, ModelSpec, e_step, fit, observed_loglik


def as_matrix_data(X, y) -> MatrixData:
    """Validate and bundle covariate and response stacks.

    ``X`` may be None for an intercept-only regression; it is then
    replaced by an empty ``(n_obs, 0, r)`` stack.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 3:
        raise ValueError(f"y must be an (n_obs, p, r) stack, got shape {y.shape}")
    if X is None:
        X = np.zeros((y.shape[0], 0, y.shape[2]))
    return MatrixData(y=y, x=np.asarray(X, dtype=float))


def _parse_family(value) -> Family:
    return value if isinstance(value, Family) else Family.parse(str(value))


class _BaseMatrixMixture(BaseEstimator):
    """Shared fitting/inference plumbing of the two mixture estimators."""

    def _build_spec(self, data: MatrixData) -> ModelSpec:
        raise NotImplementedError

    def _controls(self) -> FitControls:
        return FitControls(
            tol=self.tol,
            max_iter=self.max_iter,
            n_starts=self.n_starts,
            seed=self.random_state,
            ridge=self.ridge,
        )

    def fit(self, X, y):
        """Fit the mixture by multi-start ECM and return ``self``."""
        data = as_matrix_data(X, y)
        spec = self._build_spec(data)
        result = fit(data, spec, self._controls())
        self.spec_ = spec
        self.params_ = result.params
        self.weights_ = result.params.weights
        self.labels_ = result.labels
        self.responsibilities_ = result.responsibilities
        self.loglik_ = result.loglik
        self.loglik_trace_ = result.loglik_trace
        self.bic_ = result.bic
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.n_free_params_ = result.n_free_params
        return self

    def predict_proba(self, X, y):
        """Posterior component probabilities for new observation pairs."""
        check_is_fitted(self, "params_")
        return e_step(as_matrix_data(X, y), self.params_).resp

    def predict(self, X, y):
        """Most probable component index for new observation pairs."""
        return np.argmax(self.predict_proba(X, y), axis=1)

    def fit_predict(self, X, y):
        """Fit the mixture and return the training-data labels."""
        return self.fit(X, y).labels_

    def score(self, X, y):
        """Average observed log-likelihood per observation."""
        check_is_fitted(self, "params_")
        data = as_matrix_data(X, y)
        return observed_loglik(data, self.params_) / data.n_obs


class MatrixCWM(_BaseMatrixMixture):
    """Cluster-weighted mixture over matrix covariate/response pairs.

    Each component models the covariate matrix marginally and the response
    matrix conditionally through a matrix regression; families on the two
    sides vary independently over normal, skew-t, generalized hyperbolic,
    variance-gamma and normal-inverse-Gaussian.

    Parameters
    ----------
    covariate_family, response_family : str or Family
        Family token for each side ("normal", "skewt", "gh", "vg", "nig").
    n_components : int
        Number of mixture components.
    tol, max_iter, n_starts, random_state, ridge
        Fitting-loop controls; see :class:`FitControls`.
    """

    def __init__(self, covariate_family="normal", response_family="normal",
                 n_components=1, tol=1e-6, max_iter=500, n_starts=10,
                 random_state: Optional[int] = None, ridge=1e-8):
        self.covariate_family = covariate_family
        self.response_family = response_family
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.n_starts = n_starts
        self.random_state = random_state
        self.ridge = ridge

    def _build_spec(self, data: MatrixData) -> ModelSpec:
        p, q, r = data.dims
        return ModelSpec(
            covariate_family=_parse_family(self.covariate_family),
            response_family=_parse_family(self.response_family),
            n_components=self.n_components,
            p=p, q=q, r=r,
        )


class MatrixFMR(_BaseMatrixMixture):
    """Finite mixture of matrix regressions.

    Like :class:`MatrixCWM` but without a marginal model for the
    covariates: components differ only through the conditional response
    law, so grouping structure visible only in the covariates is ignored.
    """

    def __init__(self, response_family="normal", n_components=1, tol=1e-6,
                 max_iter=500, n_starts=10,
                 random_state: Optional[int] = None, ridge=1e-8):
        self.response_family = response_family
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.n_starts = n_starts
        self.random_state = random_state
        self.ridge = ridge

    def _build_spec(self, data: MatrixData) -> ModelSpec:
        p, q, r = data.dims
        return ModelSpec(
            covariate_family=None,
            response_family=_parse_family(self.response_family),
            n_components=self.n_components,
            p=p, q=q, r=r,
        )
