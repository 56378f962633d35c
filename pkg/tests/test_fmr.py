"""Regression-mixture behavior: engine equivalence, the single-component
GLS reduction, and the covariate-blindness contrast."""

import numpy as np
import pytest

from mvcwm.densities import Family, MatrixLaw, log_density_stack
from mvcwm.ecm import (
    FitControls,
    MatrixData,
    ModelParams,
    ModelSpec,
    observed_loglik,
)
from mvcwm.evaluate import adjusted_rand_index, count_free_params, run_selection
from mvcwm.fmr import FmrSpec, fit_fmr
from mvcwm.simulate import make_truth, sample_cwm


def test_fmr_spec_maps_to_engine_spec():
    spec = FmrSpec(Family.SKEW_T, 2, 3, 3, 4)
    engine = spec.to_model_spec()
    assert engine.covariate_family is None
    assert not engine.models_covariates
    assert spec.describe() == "fmr-skewt_G2"
    with pytest.raises(ValueError):
        FmrSpec(Family.NORMAL, 0, 2, 2, 2)


def test_single_component_normal_fmr_solves_normal_equations():
    """G=1 normal regression: the fitted coefficient satisfies generalized
    least squares at the fitted column scale."""
    rng = np.random.default_rng(5)
    n, p, q, r = 200, 2, 2, 3
    x = rng.normal(size=(n, q, r))
    coef_true = rng.normal(size=(p, 1 + q))
    xstar = np.concatenate([np.ones((n, 1, r)), x], axis=1)
    y = np.einsum("pk,nkr->npr", coef_true, xstar) + 0.3 * rng.normal(size=(n, p, r))
    data = MatrixData(y=y, x=x)
    result = fit_fmr(data, FmrSpec(Family.NORMAL, 1, p, q, r), FitControls(seed=0))
    comp = result.params.components[0]
    psi_inv = np.linalg.inv(comp.col_scale_y.matrix)
    p_mat = np.einsum("nkr,rs,nls->kl", xstar, psi_inv, xstar)
    r_mat = np.einsum("npr,rs,nls->pl", y, psi_inv, xstar)
    np.testing.assert_allclose(comp.coef @ p_mat, r_mat, rtol=1e-6)
    np.testing.assert_allclose(comp.coef, coef_true, atol=0.05)


def test_fmr_loglik_equals_cwm_minus_shared_covariate_term():
    """With identical covariate blocks across components, the covariate
    marginal factors out of the mixture likelihood."""
    data, _ = sample_cwm(make_truth(Family.NORMAL, Family.NORMAL, 4.0), 60, 17)
    # offset 0 puts every component's covariate law at the same location
    shared = make_truth(Family.NORMAL, Family.NORMAL, 0.0)
    comp = shared.components[0]
    law = MatrixLaw.create(
        Family.NORMAL, comp.mean_x,
        row_scale=comp.row_scale_x, col_scale=comp.col_scale_x,
    )
    covariate_term = float(np.sum(log_density_stack(data.x, law)))
    fmr_params = ModelParams(
        spec=ModelSpec(None, Family.NORMAL, 3, 3, 3, 4),
        components=shared.components,
    )
    cwm_ll = observed_loglik(data, shared)
    fmr_ll = observed_loglik(data, fmr_params)
    assert cwm_ll - covariate_term == pytest.approx(fmr_ll, abs=1e-8)


def test_fmr_blind_to_covariate_only_structure():
    """Groups differing only in covariate location: the regression mixture
    prefers one component while the full model recovers the grouping."""
    truth = make_truth(Family.NORMAL, Family.NORMAL, 14.0)
    data, labels = sample_cwm(truth, 200, 23)
    controls = FitControls(seed=1, n_starts=3, max_iter=200)
    fmr_candidates = [
        FmrSpec(Family.NORMAL, g, 3, 3, 4).to_model_spec() for g in (1, 2, 3)
    ]
    fmr_report, _ = run_selection(data, fmr_candidates, controls)
    assert fmr_report.best.n_components == 1
    cwm_candidates = [ModelSpec(Family.NORMAL, Family.NORMAL, g, 3, 3, 4)
                      for g in (1, 2, 3)]
    cwm_report, cwm_fits = run_selection(data, cwm_candidates, controls)
    assert cwm_report.best.n_components == 3
    best_fit = cwm_fits[cwm_report.best.model]
    assert adjusted_rand_index(labels, best_fit.labels) > 0.95


def test_fmr_trace_monotone_each_family():
    truth = make_truth(Family.NORMAL, Family.NORMAL, 8.0)
    data, _ = sample_cwm(truth, 80, 29)
    for family in Family:
        spec = FmrSpec(family, 2, 3, 3, 4)
        result = fit_fmr(data, spec, FitControls(seed=3, n_starts=2, max_iter=60))
        assert np.all(np.diff(result.loglik_trace) >= -1e-8), family
        assert count_free_params(spec.to_model_spec()) == result.n_free_params
