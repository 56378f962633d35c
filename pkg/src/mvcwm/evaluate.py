"""Model scoring, selection, and simulation-study metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .ecm import FitControls, FitResult, MatrixData, ModelFitError, ModelSpec, fit

__all__ = [
    "count_free_params",
    "bic",
    "adjusted_rand_index",
    "mse_coefficients",
    "SelectionRow",
    "SelectionReport",
    "selection_row",
    "run_selection",
]

logger = logging.getLogger(__name__)


def _scale_block(dim_rows: int, dim_cols: int) -> int:
    """Free entries in one (row scale, column scale) pair.

    Both are symmetric positive definite, and one trace is pinned by the
    scale gauge, hence the minus one.
    """
    return dim_rows * (dim_rows + 1) // 2 + dim_cols * (dim_cols + 1) // 2 - 1


def count_free_params(spec: ModelSpec) -> int:
    """Number of free parameters of a model specification."""
    p, q, r = spec.p, spec.q, spec.r
    per_component = 0
    if spec.models_covariates:
        fam = spec.covariate_family
        per_component += q * r  # mean
        per_component += _scale_block(q, r)
        if fam.is_skewed:
            per_component += q * r  # skewness
            per_component += fam.n_tail_params
    fam_y = spec.response_family
    per_component += p * (1 + q)  # regression coefficients
    per_component += _scale_block(p, r)
    if fam_y.is_skewed:
        per_component += p * r
        per_component += fam_y.n_tail_params
    return (spec.n_components - 1) + spec.n_components * per_component


def bic(loglik: float, n_free_params: int, n_obs: int) -> float:
    """Bayesian information criterion, in the larger-is-better convention."""
    return 2.0 * loglik - n_free_params * math.log(n_obs)


def adjusted_rand_index(labels_true, labels_pred) -> float:
    """Chance-corrected agreement between two partitions."""
    return float(adjusted_rand_score(labels_true, labels_pred))


def _anchored_coefs(params) -> np.ndarray:
    """Per-component coefficient stack (G, p, 1+q), components ordered by
    the location anchor used for label alignment."""
    spec = params.spec
    if spec.models_covariates:
        order = np.argsort([c.mean_x[0, 0] for c in params.components], kind="stable")
    else:
        order = np.argsort([c.coef[0, 0] for c in params.components], kind="stable")
    return np.stack([params.components[g].coef for g in order])


def mse_coefficients(estimates, truth):
    """Elementwise MSE of regression coefficients across replicates.

    Parameters
    ----------
    estimates : sequence of ModelParams or None
        One fitted parameter set per replicate; ``None`` entries mark
        replicates whose fit collapsed and are excluded from the average.
    truth : ModelParams
        The generating parameters.

    Returns
    -------
    ndarray
        Shape (G, p, 1 + q): per-cell mean squared error of the
        coefficient estimates, components aligned to the truth by the
        location-anchor ordering.
    """
    true_coefs = _anchored_coefs(truth)
    used = [
        _anchored_coefs(params) for params in estimates if params is not None
    ]
    if not used:
        raise ValueError("every replicate was excluded; nothing to average")
    for coefs in used:
        if coefs.shape != true_coefs.shape:
            raise ValueError(
                f"replicate coefficient shape {coefs.shape} does not match "
                f"truth shape {true_coefs.shape}"
            )
    err = np.stack(used) - true_coefs[None]
    return np.mean(err**2, axis=0)


@dataclass(frozen=True)
class SelectionRow:
    """One fitted candidate in a model-selection sweep."""

    model: str
    covariate_family: Optional[str]
    response_family: str
    n_components: int
    loglik: float
    n_free_params: int
    bic: float
    converged: bool
    n_iter: int


@dataclass(frozen=True)
class SelectionReport:
    """Outcome of fitting a family of candidate models to one sample."""

    rows: tuple
    failures: tuple  # (model name, reason) pairs

    @property
    def best(self) -> SelectionRow:
        """Highest-BIC row.

        A fit stopped by the iteration cap reports a lower bound on its
        model's maximized log-likelihood (the climb is monotone), so its
        BIC can only be understated; when such a row still wins, the win
        is genuine and only worth a warning, never an override.
        """
        if not self.rows:
            raise ModelFitError("no candidate model could be fitted")
        top = max(self.rows, key=lambda row: row.bic)
        if not top.converged:
            logger.warning(
                "selected model %s stopped at the iteration cap; its BIC is a lower bound",
                top.model,
            )
        return top

    def as_table(self):
        """Rows as plain dicts (stable column order), for CSV writers."""
        return [
            {
                "model": row.model,
                "covariate_family": row.covariate_family or "",
                "response_family": row.response_family,
                "n_components": row.n_components,
                "loglik": row.loglik,
                "n_free_params": row.n_free_params,
                "bic": row.bic,
                "converged": row.converged,
                "n_iter": row.n_iter,
            }
            for row in self.rows
        ]


def selection_row(spec: ModelSpec, result: FitResult) -> SelectionRow:
    """Summarize one fit as a selection-table row."""
    return SelectionRow(
        model=spec.describe(),
        covariate_family=(
            spec.covariate_family.short_name if spec.models_covariates else None
        ),
        response_family=spec.response_family.short_name,
        n_components=spec.n_components,
        loglik=result.loglik,
        n_free_params=result.n_free_params,
        bic=result.bic,
        converged=result.converged,
        n_iter=result.n_iter,
    )


def run_selection(data: MatrixData, candidates: Sequence[ModelSpec],
                  controls: Optional[FitControls] = None,
                  extra_starts=None):
    """Fit every candidate and rank by BIC.

    Candidates whose every start fails are recorded under ``failures``
    and skipped.  Returns ``(report, fits)`` where ``fits`` maps the
    model name (``spec.describe()``) to its :class:`FitResult`.

    ``extra_starts``, when given, is a callable mapping a candidate spec
    to a sequence of additional (n, G) starting responsibility matrices
    for that candidate's fit (empty sequence for none).
    """
    controls = controls or FitControls()
    rows = []
    failures = []
    fits = {}
    for spec in candidates:
        name = spec.describe()
        hints = () if extra_starts is None else tuple(extra_starts(spec))
        try:
            result = fit(data, spec, controls, extra_starts=hints)
        except ModelFitError as err:
            logger.warning("candidate %s failed: %s", name, err)
            failures.append((name, str(err)))
            continue
        fits[name] = result
        rows.append(selection_row(spec, result))
    return SelectionReport(rows=tuple(rows), failures=tuple(failures)), fits
