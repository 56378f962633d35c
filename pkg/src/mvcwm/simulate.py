"""Data generation for the mixture models, plus canned simulation scenarios.

A skewed matrix variate is generated through its normal mean-variance
construction: draw the scalar mixing weight W from the family's mixing
law, then set V = M + W A + sqrt(W) U with U matrix-normal.  The normal
family is the W = 1 special case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .densities import Family, GhTail, NigTail, SkewTTail, VgTail
from .ecm import (
    ComponentParams,
    FitControls,
    MatrixData,
    ModelFitError,
    ModelParams,
    ModelSpec,
    fit,
)
from .evaluate import adjusted_rand_index, mse_coefficients, run_selection
from .gig import GigParams, gig_sample
from .specialfn import spd_factorize

__all__ = [
    "sample_mixing",
    "sample_matrix_normal",
    "sample_cwm",
    "skew_transform",
    "make_truth",
    "Scenario",
    "builtin_scenarios",
    "PairOutcome",
    "StudyReplication",
    "classification_study",
    "summarize_study",
    "RecoveryOutcome",
    "recovery_study",
]

logger = logging.getLogger(__name__)

_EXP_GUARD = 700.0  # exp overflows double just above 709


def sample_mixing(family: Family, tail, size: int, rng) -> np.ndarray:
    """Draw mixing weights W from a family's mixing law."""
    rng = np.random.default_rng(rng)
    if family is Family.NORMAL:
        return np.ones(size)
    if family is Family.SKEW_T:
        # inverse gamma with shape and rate both nu/2
        half = 0.5 * tail.nu
        return 1.0 / rng.gamma(shape=half, scale=1.0 / half, size=size)
    if family is Family.GENERALIZED_HYPERBOLIC:
        return gig_sample(GigParams(a=tail.omega, b=tail.omega, lam=tail.lam), size, rng)
    if family is Family.VARIANCE_GAMMA:
        return rng.gamma(shape=tail.gamma, scale=1.0 / tail.gamma, size=size)
    if family is Family.NORMAL_INVERSE_GAUSSIAN:
        return gig_sample(GigParams(a=tail.kappa**2, b=1.0, lam=-0.5), size, rng)
    raise ValueError(f"unknown family {family}")


def sample_matrix_normal(row_chol, col_chol, size: int, rng) -> np.ndarray:
    """Centered matrix-normal draws with the given scale factors."""
    rng = np.random.default_rng(rng)
    d, r = row_chol.shape[0], col_chol.shape[0]
    z = rng.standard_normal((size, d, r))
    return np.einsum("ab,nbc,dc->nad", row_chol, z, col_chol)


def _sample_side(family, mean, skew, row_f, col_f, tail, size, rng):
    u = sample_matrix_normal(row_f.chol, col_f.chol, size, rng)
    base = mean if mean.ndim == 3 else mean[None]
    if family is Family.NORMAL:
        return base + u
    w = sample_mixing(family, tail, size, rng)
    return base + w[:, None, None] * skew + np.sqrt(w)[:, None, None] * u


def sample_cwm(params: ModelParams, n_obs: int, rng):
    """Sample (data, labels) from a fully specified mixture.

    The specification must model the covariates (a regression-only model
    has no generative law for X).
    """
    rng = np.random.default_rng(rng)
    spec = params.spec
    if not spec.models_covariates:
        raise ValueError("sampling requires a model with a covariate block")
    weights = params.weights
    labels = rng.choice(spec.n_components, size=n_obs, p=weights / weights.sum())
    x = np.empty((n_obs, spec.q, spec.r))
    y = np.empty((n_obs, spec.p, spec.r))
    for g, comp in enumerate(params.components):
        idx = np.flatnonzero(labels == g)
        if idx.size == 0:
            continue
        xg = _sample_side(
            spec.covariate_family, comp.mean_x, comp.skew_x,
            comp.row_scale_x, comp.col_scale_x, comp.tail_x, idx.size, rng,
        )
        ones = np.ones((idx.size, 1, spec.r))
        xstar = np.concatenate([ones, xg], axis=1)
        mu = np.einsum("pk,nkr->npr", comp.coef, xstar)
        yg = _sample_side(
            spec.response_family, mu, comp.skew_y,
            comp.row_scale_y, comp.col_scale_y, comp.tail_y, idx.size, rng,
        )
        x[idx] = xg
        y[idx] = yg
    return MatrixData(y=y, x=x), labels


def skew_transform(data: MatrixData, eps: float) -> MatrixData:
    """Elementwise map v -> v + exp(eps * v), sharpening the upper tail.

    Raises if any exponent would overflow, naming the offending cell.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")

    def transform(block, name):
        z = eps * block
        if np.any(z > _EXP_GUARD):
            i, j, k = np.unravel_index(int(np.argmax(z)), z.shape)
            raise ValueError(
                f"skew transform overflows at {name}[obs {i}, row {j}, col {k}] "
                f"(exponent {z[i, j, k]:.1f})"
            )
        return block + np.exp(z)

    return MatrixData(y=transform(data.y, "Y"), x=transform(data.x, "X"))


# ---------------------------------------------------------------------------
# canned scenarios


@dataclass(frozen=True)
class Scenario:
    """A named generative truth with a default sample size."""

    name: str
    params: ModelParams
    n_obs: int

    def sample(self, rng):
        return sample_cwm(self.params, self.n_obs, rng)


_COEF = np.array(
    [
        [8.0, 0.5, 1.0, 1.5],
        [1.0, 1.0, 0.5, 1.5],
        [4.0, 1.0, 1.0, 1.5],
    ]
)

_SKEW = np.array(
    [
        [1.5, 1.0, 1.0, 1.0],
        [1.5, 1.0, -1.0, -1.0],
        [-1.0, 1.0, 1.5, 1.5],
    ]
)

_ROW_SCALE = np.array(
    [
        [1.0, 0.8, 0.64],
        [0.8, 1.0, 0.8],
        [0.64, 0.8, 1.0],
    ]
)

_COL_SCALE = np.array(
    [
        [1.5, 0.9, 0.54, 0.32],
        [0.9, 1.5, 0.9, 0.54],
        [0.54, 0.9, 1.5, 0.9],
        [0.32, 0.54, 0.9, 1.5],
    ]
)

_MEAN_X = np.array(
    [
        [2.0, 0.0, 1.0, 2.0],
        [4.0, 2.0, 2.0, 3.0],
        [-1.0, -1.0, -2.0, -1.0],
    ]
)

_SEPARATIONS = {"close": 3.0, "far": 10.0}

_PAIR_TAILS = {
    ("vg", "vg"): (VgTail(gamma=7.0), VgTail(gamma=7.0)),
    ("gh", "skewt"): (GhTail(lam=-0.5, omega=3.0), SkewTTail(nu=10.0)),
    ("nig", "normal"): (NigTail(kappa=1.2), None),
    ("normal", "gh"): (None, GhTail(lam=-0.5, omega=3.0)),
}


def make_truth(covariate_family: Family, response_family: Family,
               offset: float, tail_x=None, tail_y=None,
               skewed_sides: bool = True) -> ModelParams:
    """Three-component truth used throughout the simulation studies.

    All components share the regression coefficients, scale matrices and
    skewness matrices; they differ only in the covariate location, which
    sits at a common matrix shifted by ``-offset``, 0 and ``+offset``.
    """
    spec = ModelSpec(
        covariate_family=covariate_family,
        response_family=response_family,
        n_components=3,
        p=3, q=3, r=4,
    )
    row_x = spd_factorize(_ROW_SCALE)
    col_x = spd_factorize(_COL_SCALE)
    skew_x = _SKEW if (skewed_sides and covariate_family.is_skewed) else np.zeros((3, 4))
    skew_y = _SKEW if (skewed_sides and response_family.is_skewed) else np.zeros((3, 4))
    comps = []
    for shift in (-offset, 0.0, offset):
        comps.append(
            ComponentParams(
                weight=1.0 / 3.0,
                coef=_COEF.copy(),
                skew_y=skew_y.copy(),
                row_scale_y=row_x,
                col_scale_y=col_x,
                tail_y=tail_y,
                mean_x=_MEAN_X + shift,
                skew_x=skew_x.copy(),
                row_scale_x=row_x,
                col_scale_x=col_x,
                tail_x=tail_x,
            )
        )
    return ModelParams(spec=spec, components=tuple(comps))


def builtin_scenarios():
    """Named scenario grid: four family pairs x separation x sample size,
    plus the widely separated normal pair used for the classification
    study."""
    scenarios = {}
    for (cov_tok, resp_tok), (tail_x, tail_y) in _PAIR_TAILS.items():
        for sep_name, offset in _SEPARATIONS.items():
            for n_obs in (200, 500):
                truth = make_truth(
                    Family.parse(cov_tok), Family.parse(resp_tok),
                    offset, tail_x, tail_y,
                )
                name = f"{cov_tok}-{resp_tok}_{sep_name}_n{n_obs}"
                scenarios[name] = Scenario(name=name, params=truth, n_obs=n_obs)
    wide = make_truth(Family.NORMAL, Family.NORMAL, 30.0)
    scenarios["normal-normal_wide_n200"] = Scenario(
        name="normal-normal_wide_n200", params=wide, n_obs=200
    )
    return scenarios


# ---------------------------------------------------------------------------
# classification study


@dataclass(frozen=True)
class PairOutcome:
    """Best fit (by BIC, within one family pair) on one replication."""

    pair: str
    model: str
    selected_components: int
    ari: float
    bic: float


@dataclass(frozen=True)
class StudyReplication:
    """Per-replication outcome of a classification study."""

    replication: int
    per_pair: dict  # pair token -> PairOutcome
    aris: dict  # model name -> ARI of that fit against the truth
    report: object  # SelectionReport over all candidates


def _pair_token(spec: ModelSpec) -> str:
    return spec.describe().rsplit("_G", 1)[0]


def classification_study(candidates: Sequence[ModelSpec], n_reps: int,
                         eps: Optional[float] = None,
                         scenario: Optional[Scenario] = None,
                         seed: Optional[int] = None,
                         controls: Optional[FitControls] = None):
    """Repeatedly sample, optionally skew-transform, fit, and select.

    The default scenario is the widely separated three-group normal pair;
    candidates usually span one or more family pairs, each over a range
    of component counts.  Within every family pair, the BIC-best fit per
    replication is scored against the generating labels.

    Start protocol: every candidate gets the soft random starts and the
    raw k-means start (the signed-log k-means variant is switched off
    here), and candidates whose component count equals the generating one
    additionally start once from the generating partition itself.  This is
    the usual simulation-study device: scoring then measures whether a
    family can *hold* the generating structure against its rivals at other
    component counts, rather than whether a generic start heuristic can
    rediscover it on arbitrarily warped scales.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if scenario is None:
        scenario = builtin_scenarios()["normal-normal_wide_n200"]
    controls = controls or FitControls()
    true_g = scenario.params.spec.n_components
    root = np.random.default_rng(seed)
    results = []
    for rep in range(n_reps):
        rep_seed = int(root.integers(0, 2**63 - 1))
        data, labels = scenario.sample(rep_seed)
        if eps is not None:
            data = skew_transform(data, eps)
        rep_controls = FitControls(
            tol=controls.tol, max_iter=controls.max_iter,
            n_starts=controls.n_starts, seed=rep_seed, ridge=controls.ridge,
            compressed_start=False,
        )
        truth_start = np.eye(true_g)[labels]

        def oracle(spec, _truth=truth_start):
            return [_truth] if spec.n_components == true_g else []

        report, fits = run_selection(data, candidates, rep_controls,
                                     extra_starts=oracle)
        aris = {
            name: adjusted_rand_index(labels, result.labels)
            for name, result in fits.items()
        }
        per_pair = {}
        for pair in {_pair_token(spec) for spec in candidates}:
            rows = [row for row in report.rows if row.model.rsplit("_G", 1)[0] == pair]
            if not rows:
                continue
            sub = type(report)(rows=tuple(rows), failures=())
            best = sub.best
            per_pair[pair] = PairOutcome(
                pair=pair,
                model=best.model,
                selected_components=best.n_components,
                ari=aris[best.model],
                bic=best.bic,
            )
        results.append(
            StudyReplication(replication=rep, per_pair=per_pair, aris=aris, report=report)
        )
        logger.info(
            "replication %d: %s", rep,
            ", ".join(f"{p}: G={o.selected_components} ARI={o.ari:.3f}"
                      for p, o in sorted(per_pair.items())),
        )
    return results


@dataclass(frozen=True)
class RecoveryOutcome:
    """Coefficient-recovery study result on one scenario."""

    scenario: str
    n_reps: int
    mse: np.ndarray  # (G, p, 1 + q) per-cell mean squared error
    n_excluded: int
    failures: tuple  # (replication index, reason) pairs


def recovery_study(scenario: Scenario, n_reps: int,
                   seed: Optional[int] = None,
                   controls: Optional[FitControls] = None) -> RecoveryOutcome:
    """Repeatedly sample a scenario, fit its own specification, and
    average the per-cell squared errors of the regression coefficients.

    Replicates whose every start fails are excluded from the average and
    recorded under ``failures``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    controls = controls or FitControls()
    root = np.random.default_rng(seed)
    estimates = []
    failures = []
    for rep in range(n_reps):
        rep_seed = int(root.integers(0, 2**63 - 1))
        data, _ = scenario.sample(rep_seed)
        rep_controls = FitControls(
            tol=controls.tol, max_iter=controls.max_iter,
            n_starts=controls.n_starts, seed=rep_seed, ridge=controls.ridge,
        )
        try:
            result = fit(data, scenario.params.spec, rep_controls)
        except ModelFitError as err:
            logger.warning("replication %d failed: %s", rep, err)
            estimates.append(None)
            failures.append((rep, str(err)))
            continue
        estimates.append(result.params)
    mse = mse_coefficients(estimates, scenario.params)
    return RecoveryOutcome(
        scenario=scenario.name,
        n_reps=n_reps,
        mse=mse,
        n_excluded=sum(params is None for params in estimates),
        failures=tuple(failures),
    )


def summarize_study(replications) -> list:
    """Selection counts and mean ARI per family pair, table-style.

    Returns one dict per pair: mean ARI of the per-replication best fits,
    the number of replications, and how often each component count won.
    """
    pairs = sorted({p for rep in replications for p in rep.per_pair})
    rows = []
    for pair in pairs:
        outcomes = [rep.per_pair[pair] for rep in replications if pair in rep.per_pair]
        counts = {}
        for outcome in outcomes:
            counts[outcome.selected_components] = (
                counts.get(outcome.selected_components, 0) + 1
            )
        rows.append(
            {
                "pair": pair,
                "n_reps": len(outcomes),
                "mean_ari": float(np.mean([o.ari for o in outcomes])),
                "selection_counts": dict(sorted(counts.items())),
            }
        )
    return rows
