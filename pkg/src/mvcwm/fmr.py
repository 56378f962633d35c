"""Finite mixtures of matrix-variate regressions.

The fixed-covariates by-product of the mixture engine: mixture weights
see only the conditional response density, never a covariate marginal.
Implemented as a configuration of :mod:`mvcwm.ecm` (covariate block
disabled), not a separate algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .densities import Family
from .ecm import FitControls, FitResult, MatrixData, ModelSpec, fit

__all__ = ["FmrSpec", "fit_fmr"]


@dataclass(frozen=True)
class FmrSpec:
    """Which regression mixture to fit."""

    response_family: Family
    n_components: int
    p: int
    q: int
    r: int

    def __post_init__(self):
        # reuse the full-model validation
        self.to_model_spec()

    def to_model_spec(self) -> ModelSpec:
        """The equivalent engine specification (no covariate family)."""
        return ModelSpec(
            covariate_family=None,
            response_family=self.response_family,
            n_components=self.n_components,
            p=self.p, q=self.q, r=self.r,
        )

    def describe(self) -> str:
        return self.to_model_spec().describe()


def fit_fmr(data: MatrixData, spec: FmrSpec,
            controls: Optional[FitControls] = None) -> FitResult:
    """Fit a finite mixture of matrix regressions by multi-start ECM.

    Identical machinery and contracts to :func:`mvcwm.ecm.fit`, with
    responsibilities proportional to the response density alone and
    components relabeled by the leading regression coefficient.
    """
    return fit(data, spec.to_model_spec(), controls)
