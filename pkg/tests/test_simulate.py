"""Sampler correctness against closed-form moments, scenario library
contents, the skewing transform, and the study driver."""

import numpy as np
import pytest

from mvcwm.densities import Family, GhTail, NigTail, SkewTTail, VgTail
from mvcwm.ecm import FitControls, MatrixData, ModelSpec
from mvcwm.gig import GigParams, gig_moments
from mvcwm.simulate import (
    Scenario,
    builtin_scenarios,
    classification_study,
    make_truth,
    sample_cwm,
    sample_matrix_normal,
    sample_mixing,
    skew_transform,
    summarize_study,
)
from mvcwm.specialfn import spd_factorize


def _mixing_mean(family, tail):
    if family is Family.SKEW_T:
        half = tail.nu / 2.0
        return half / (half - 1.0)
    if family is Family.GENERALIZED_HYPERBOLIC:
        return gig_moments(GigParams(tail.omega, tail.omega, tail.lam)).e_w
    if family is Family.VARIANCE_GAMMA:
        return 1.0
    if family is Family.NORMAL_INVERSE_GAUSSIAN:
        return gig_moments(GigParams(tail.kappa**2, 1.0, -0.5)).e_w
    return 1.0


@pytest.mark.parametrize("family,tail", [
    (Family.SKEW_T, SkewTTail(nu=10.0)),
    (Family.GENERALIZED_HYPERBOLIC, GhTail(lam=-0.5, omega=3.0)),
    (Family.VARIANCE_GAMMA, VgTail(gamma=7.0)),
    (Family.NORMAL_INVERSE_GAUSSIAN, NigTail(kappa=1.2)),
])
def test_sample_mixing_matches_law_mean(family, tail):
    draws = sample_mixing(family, tail, 200_000, 19)
    assert np.all(draws > 0)
    target = _mixing_mean(family, tail)
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - target) < 5 * se


def test_sample_mixing_normal_is_degenerate():
    np.testing.assert_array_equal(sample_mixing(Family.NORMAL, None, 5, 0), 1.0)


def test_matrix_normal_covariance_is_kronecker():
    sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    psi = np.array([[1.0, -0.3], [-0.3, 0.5]])
    draws = sample_matrix_normal(
        np.linalg.cholesky(sigma), np.linalg.cholesky(psi), 100_000, 23
    )
    # vec stacks columns: cov(vec V) = Psi (x) Sigma
    vecs = draws.transpose(0, 2, 1).reshape(draws.shape[0], -1)
    sample_cov = np.cov(vecs.T)
    np.testing.assert_allclose(sample_cov, np.kron(psi, sigma), atol=0.03)


def test_sample_cwm_component_means_follow_construction():
    """E(V | g) = M + E(W) A on the covariate side."""
    tail = VgTail(gamma=2.0)
    truth = make_truth(Family.VARIANCE_GAMMA, Family.NORMAL, 0.0, tail_x=tail)
    data, labels = sample_cwm(truth, 60_000, 29)
    comp = truth.components[1]
    target = comp.mean_x + _mixing_mean(Family.VARIANCE_GAMMA, tail) * comp.skew_x
    sel = data.x[labels == 1]
    np.testing.assert_allclose(sel.mean(axis=0), target, atol=0.08)


def test_sample_cwm_label_frequencies_follow_weights():
    truth = make_truth(Family.NORMAL, Family.NORMAL, 4.0)
    _, labels = sample_cwm(truth, 30_000, 31)
    freq = np.bincount(labels, minlength=3) / labels.size
    np.testing.assert_allclose(freq, 1.0 / 3.0, atol=0.02)


def test_sample_cwm_is_reproducible():
    truth = make_truth(Family.NORMAL, Family.VARIANCE_GAMMA, 3.0,
                       tail_y=VgTail(gamma=7.0))
    d1, l1 = sample_cwm(truth, 50, 37)
    d2, l2 = sample_cwm(truth, 50, 37)
    np.testing.assert_array_equal(d1.y, d2.y)
    np.testing.assert_array_equal(d1.x, d2.x)
    np.testing.assert_array_equal(l1, l2)


def test_sample_cwm_requires_covariate_block():
    truth = make_truth(Family.NORMAL, Family.NORMAL, 3.0)
    fmr_params = type(truth)(
        spec=ModelSpec(None, Family.NORMAL, 3, 3, 3, 4),
        components=truth.components,
    )
    with pytest.raises(ValueError, match="covariate block"):
        sample_cwm(fmr_params, 10, 0)


def test_skew_transform_formula_and_monotonicity():
    rng = np.random.default_rng(41)
    data = MatrixData(y=rng.normal(size=(8, 2, 3)), x=rng.normal(size=(8, 2, 3)))
    out = skew_transform(data, 0.6)
    np.testing.assert_allclose(out.y, data.y + np.exp(0.6 * data.y))
    np.testing.assert_allclose(out.x, data.x + np.exp(0.6 * data.x))
    # strictly increasing in the input for fixed eps
    grid = np.linspace(-3, 3, 50)
    vals = grid + np.exp(1.0 * grid)
    assert np.all(np.diff(vals) > 0)


def test_skew_transform_small_eps_approaches_shift_by_one():
    data = MatrixData(y=np.full((1, 1, 1), 2.0), x=np.full((1, 1, 1), -1.0))
    out = skew_transform(data, 1e-9)
    assert out.y[0, 0, 0] == pytest.approx(3.0, abs=1e-8)
    assert out.x[0, 0, 0] == pytest.approx(0.0, abs=1e-8)


def test_skew_transform_increases_sample_skewness_with_eps():
    rng = np.random.default_rng(43)
    z = rng.standard_normal(200_000)

    def skewness(v):
        c = v - v.mean()
        return np.mean(c**3) / np.mean(c**2) ** 1.5

    data = MatrixData(y=z.reshape(-1, 1, 1), x=np.zeros((z.size, 0, 1)))
    s06 = skewness(skew_transform(data, 0.6).y.ravel())
    s10 = skewness(skew_transform(data, 1.0).y.ravel())
    assert s10 > s06 > skewness(z)


def test_skew_transform_overflow_names_cell():
    data = MatrixData(y=np.zeros((2, 2, 2)), x=np.zeros((2, 2, 2)))
    data.y[1, 0, 1] = 800.0
    with pytest.raises(ValueError, match=r"Y\[obs 1, row 0, col 1\]"):
        skew_transform(data, 1.0)
    with pytest.raises(ValueError, match="positive"):
        skew_transform(data, 0.0)


def test_builtin_scenario_grid_contents():
    scenarios = builtin_scenarios()
    # 4 family pairs x 2 separations x 2 sample sizes, plus the wide normal pair
    assert len(scenarios) == 17
    far = scenarios["vg-vg_far_n500"]
    assert far.n_obs == 500
    comps = far.params.components
    np.testing.assert_array_equal(comps[0].mean_x, comps[1].mean_x - 10.0)
    np.testing.assert_array_equal(comps[2].mean_x, comps[1].mean_x + 10.0)
    np.testing.assert_array_equal(
        comps[0].coef[0], np.array([8.0, 0.5, 1.0, 1.5])
    )
    np.testing.assert_array_equal(
        comps[0].row_scale_x.matrix[0], np.array([1.0, 0.8, 0.64])
    )
    assert comps[0].tail_x == VgTail(gamma=7.0)
    close = scenarios["gh-skewt_close_n200"]
    assert close.params.spec.covariate_family is Family.GENERALIZED_HYPERBOLIC
    assert close.params.spec.response_family is Family.SKEW_T
    delta = close.params.components[2].mean_x - close.params.components[1].mean_x
    np.testing.assert_array_equal(delta, 3.0)
    wide = scenarios["normal-normal_wide_n200"]
    assert wide.params.spec.covariate_family is Family.NORMAL
    np.testing.assert_array_equal(
        wide.params.components[2].mean_x - wide.params.components[0].mean_x, 60.0
    )
    for comp in wide.params.components:
        np.testing.assert_array_equal(comp.skew_x, 0.0)
        assert comp.tail_x is None


def test_make_truth_respects_family_skewness():
    truth = make_truth(Family.NORMAL, Family.VARIANCE_GAMMA, 5.0,
                       tail_y=VgTail(gamma=7.0))
    comp = truth.components[0]
    np.testing.assert_array_equal(comp.skew_x, 0.0)
    assert np.any(comp.skew_y != 0.0)
    assert comp.tail_x is None


def test_classification_study_structure_and_summary():
    scenario = Scenario(
        name="tiny", params=make_truth(Family.NORMAL, Family.NORMAL, 14.0), n_obs=90
    )
    candidates = [
        ModelSpec(Family.NORMAL, Family.NORMAL, g, 3, 3, 4) for g in (1, 2, 3)
    ]
    reps = classification_study(
        candidates, n_reps=2, scenario=scenario, seed=11,
        controls=FitControls(n_starts=2, max_iter=150),
    )
    assert len(reps) == 2
    for rep in reps:
        outcome = rep.per_pair["normal-normal"]
        assert outcome.selected_components == 3
        assert outcome.ari > 0.95
        assert set(rep.aris) == {f"normal-normal_G{g}" for g in (1, 2, 3)}
    summary = summarize_study(reps)
    assert summary[0]["pair"] == "normal-normal"
    assert summary[0]["n_reps"] == 2
    assert summary[0]["selection_counts"] == {3: 2}
    assert summary[0]["mean_ari"] > 0.95


def test_classification_study_validates_arguments():
    candidates = [ModelSpec(Family.NORMAL, Family.NORMAL, 1, 3, 3, 4)]
    with pytest.raises(ValueError, match="n_reps"):
        classification_study(candidates, n_reps=0)
    with pytest.raises(ValueError, match="candidates"):
        classification_study([], n_reps=1)


def test_recovery_study_reproducible_and_validated():
    from mvcwm.simulate import recovery_study

    scenario = Scenario(
        name="tiny-far",
        params=make_truth(Family.NORMAL, Family.NORMAL, 10.0),
        n_obs=100,
    )
    controls = FitControls(n_starts=2, max_iter=150, tol=1e-4)
    first = recovery_study(scenario, 2, seed=5, controls=controls)
    again = recovery_study(scenario, 2, seed=5, controls=controls)
    assert first.scenario == "tiny-far"
    assert first.n_reps == 2 and first.n_excluded == 0 and not first.failures
    assert first.mse.shape == (3, 3, 4)
    np.testing.assert_array_equal(first.mse, again.mse)
    # well-separated normal groups at N=100: slopes recovered tightly
    assert float(first.mse[:, :, 1:].max()) < 0.1
    with pytest.raises(ValueError, match="n_reps"):
        recovery_study(scenario, 0)
