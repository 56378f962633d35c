"""Expectation/conditional-maximization engine for matrix-variate mixtures.

The model is a finite mixture over pairs of matrices (Y, X).  Component g
explains the covariate matrix X (q x r) with one matrix-variate law and
the response matrix Y (p x r) with another whose location is the linear
regression B_g X*, X* being X with a prepended row of ones.  Any of the
five families in :mod:`mvcwm.densities` may sit on either side; when the
covariate family is ``None`` (or q = 0) the covariate marginal is dropped
and the model reduces to a finite mixture of matrix regressions.

One ECM cycle is: E-step (responsibilities plus conditional mixing-weight
moments), CM-1 (weights, locations, skewness matrices, row scales, with
column scales held), CM-2 (column scales with the fresh row scales), CM-3
(tail parameters).  Each block conditionally maximizes the expected
complete-data log-likelihood, so the observed log-likelihood trace never
decreases beyond roundoff.

The normal family travels the same code path as the skewed ones with its
mixing moments pinned at E(W) = E(1/W) = 1, E(log W) = 0 and the skewness
matrix frozen at zero; with those inputs the update formulas reduce
exactly to the normal-theory sweeps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp, psi

from .densities import (
    Family,
    GhTail,
    NigTail,
    SkewTTail,
    TailParams,
    VgTail,
    _log_gig_integral,
    _log_tail_head,
    _whiten_stack,
    conditional_gig_params,
)
from .gig import gig_moments_arrays
from .specialfn import NotPositiveDefiniteError, SpdFactor, spd_factorize
from .tails import expected_tail_loglik, update_gamma, update_gh, update_kappa, update_nu

__all__ = [
    "MatrixData",
    "ModelSpec",
    "FitControls",
    "ComponentParams",
    "ModelParams",
    "LatentMoments",
    "FitResult",
    "ModelFitError",
    "ComponentCollapseError",
    "SingularDesignError",
    "DegenerateLikelihoodError",
    "observed_loglik",
    "e_step",
    "cm_step1",
    "cm_step2",
    "cm_step3",
    "expected_complete_loglik",
    "initialize",
    "fit",
]

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

# moments are treated as degenerate (all mass at W = 1) below this excess,
# in which case the location/skewness system is singular and the skewness
# matrix is held fixed for the sweep
_DEGENERATE_MOMENT_EXCESS = 1e-12

_DEFAULT_TAILS = {
    Family.SKEW_T: SkewTTail(nu=10.0),
    Family.GENERALIZED_HYPERBOLIC: GhTail(lam=-0.5, omega=1.0),
    Family.VARIANCE_GAMMA: VgTail(gamma=2.0),
    Family.NORMAL_INVERSE_GAUSSIAN: NigTail(kappa=1.0),
    Family.NORMAL: None,
}


class ModelFitError(RuntimeError):
    """A model fit could not be completed."""


class ComponentCollapseError(ModelFitError):
    """A component's expected share fell below the floor of 1/(10 N)."""

    def __init__(self, component, share):
        super().__init__(
            f"component {component} collapsed (expected share {share:.3g})"
        )
        self.component = component


class SingularDesignError(ModelFitError):
    """The weighted design matrix of a component's regression is singular."""

    def __init__(self, component):
        super().__init__(f"singular weighted design for component {component}")
        self.component = component


class DegenerateLikelihoodError(ModelFitError):
    """The likelihood became non-finite (a component law collapsed onto a point).

    The variance-gamma density, for instance, diverges at its own location
    once the tail parameter drops below half the matrix dimension, so a
    component whose location lands exactly on an observation sends the
    log-likelihood to infinity.  Such runs are abandoned rather than
    reported as fits.
    """

    def __init__(self, message, observation=None, component=None):
        if observation is not None:
            message = f"{message} (observation {observation}, component {component})"
        super().__init__(message)
        self.observation = observation
        self.component = component


@dataclass(frozen=True)
class MatrixData:
    """Sample of N response/covariate matrix pairs.

    ``y`` has shape (N, p, r) and ``x`` shape (N, q, r); q may be zero for
    intercept-only regressions.
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 3:
            raise ValueError(f"y must have shape (N, p, r), got {y.shape}")
        if x.ndim != 3:
            raise ValueError(f"x must have shape (N, q, r), got {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"y and x disagree on the sample size: {y.shape[0]} vs {x.shape[0]}"
            )
        if x.shape[2] != y.shape[2]:
            raise ValueError(
                f"y and x disagree on the column dimension: {y.shape[2]} vs {x.shape[2]}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("data contain non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n_obs(self):
        return self.y.shape[0]

    @property
    def dims(self):
        """(p, q, r)."""
        return self.y.shape[1], self.x.shape[1], self.y.shape[2]

    def design_stack(self):
        """X with a prepended row of ones: shape (N, 1 + q, r)."""
        n, _, r = self.x.shape
        ones = np.ones((n, 1, r))
        return np.concatenate([ones, self.x], axis=1)


@dataclass(frozen=True)
class ModelSpec:
    """Which model to fit: families per side, component count, dimensions.

    ``covariate_family=None`` requests a finite mixture of regressions
    (no covariate marginal); q = 0 implies the same degeneration.
    """

    covariate_family: Optional[Family]
    response_family: Family
    n_components: int
    p: int
    q: int
    r: int

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.p < 1 or self.r < 1 or self.q < 0:
            raise ValueError(f"invalid dimensions (p={self.p}, q={self.q}, r={self.r})")

    @property
    def models_covariates(self) -> bool:
        return self.covariate_family is not None and self.q > 0

    def describe(self) -> str:
        if not self.models_covariates:
            return f"fmr-{self.response_family.short_name}_G{self.n_components}"
        cov = self.covariate_family.short_name
        return f"{cov}-{self.response_family.short_name}_G{self.n_components}"


@dataclass(frozen=True)
class FitControls:
    """Knobs of the fitting loop.

    ``n_starts`` counts the total start budget.  With ``compressed_start``
    on (the default) the last two slots go to the k-means hard starts --
    one on the raw vectorized pairs, one on their signed-log compression,
    the latter recommended for heavy-tailed data -- and the rest are soft
    random starts.  With it off only the raw k-means start is kept and the
    soft starts fill ``n_starts - 1`` slots.
    """

    tol: float = 1e-6
    max_iter: int = 500
    n_starts: int = 10
    seed: Optional[int] = None
    ridge: float = 1e-8
    compressed_start: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.n_starts < 1:
            raise ValueError("tol, max_iter and n_starts must be positive")


@dataclass(frozen=True)
class ComponentParams:
    """Parameters of one mixture component."""

    weight: float
    coef: np.ndarray  # p x (1 + q)
    skew_y: np.ndarray  # p x r
    row_scale_y: SpdFactor  # p x p
    col_scale_y: SpdFactor  # r x r
    tail_y: TailParams
    mean_x: Optional[np.ndarray] = None  # q x r
    skew_x: Optional[np.ndarray] = None  # q x r
    row_scale_x: Optional[SpdFactor] = None  # q x q
    col_scale_x: Optional[SpdFactor] = None  # r x r
    tail_x: TailParams = None


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of a fitted (or in-progress) mixture."""

    spec: ModelSpec
    components: tuple

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])


@dataclass(frozen=True)
class LatentMoments:
    """Responsibilities and conditional mixing-weight moments, all (N, G).

    For a normal side (or an absent covariate block) the moment arrays
    hold the degenerate values (1, 1, 0).
    """

    resp: np.ndarray
    l_x: np.ndarray
    m_x: np.ndarray
    n_x: np.ndarray
    l_y: np.ndarray
    m_y: np.ndarray
    n_y: np.ndarray


@dataclass(frozen=True)
class FitResult:
    """Outcome of one model fit."""

    params: ModelParams
    loglik: float
    loglik_trace: np.ndarray
    responsibilities: np.ndarray
    labels: np.ndarray
    n_iter: int
    converged: bool
    n_free_params: int
    bic: float


# ---------------------------------------------------------------------------
# density bookkeeping


@dataclass
class _SidePass:
    log_dens: np.ndarray  # (N,)
    delta: np.ndarray  # (N,)
    rho: float


@dataclass
class _Pass:
    log_joint: np.ndarray  # (N, G), includes log weights
    loglik: float
    resp: np.ndarray  # (N, G)
    x_sides: list  # per component _SidePass or None
    y_sides: list


def _side_pass(v_stack, mu, skew, row_f, col_f, family, tail) -> _SidePass:
    """Log density plus cached quadratics for one side of one component.

    ``mu`` is either a single d x r matrix (covariate side) or an
    (N, d, r) stack of regression locations (response side).
    """
    d, r = v_stack.shape[1:]
    diff = v_stack - (mu if mu.ndim == 3 else mu[None])
    w_e = _whiten_stack(diff, row_f, col_f)
    delta = np.einsum("ndr,ndr->n", w_e, w_e)
    common = -0.5 * d * r * _LOG_2PI - 0.5 * r * row_f.logdet - 0.5 * d * col_f.logdet
    if family is Family.NORMAL:
        return _SidePass(log_dens=common - 0.5 * delta, delta=delta, rho=0.0)
    w_a = _whiten_stack(skew[None], row_f, col_f)[0]
    rho = float(np.einsum("dr,dr->", w_a, w_a))
    tilt = np.einsum("ndr,dr->n", w_e, w_a)
    a, b, order = conditional_gig_params(tail, delta, rho, (d, r))
    log_dens = (
        _log_tail_head(tail, d * r) + common + tilt + _log_gig_integral(order, a, b)
    )
    return _SidePass(log_dens=log_dens, delta=delta, rho=rho)


def _densities_pass(data: MatrixData, params: ModelParams) -> _Pass:
    spec = params.spec
    n = data.n_obs
    g_count = spec.n_components
    xstar = data.design_stack()
    log_joint = np.empty((n, g_count))
    x_sides, y_sides = [], []
    for g, comp in enumerate(params.components):
        mu_y = np.einsum("pk,nkr->npr", comp.coef, xstar)
        y_pass = _side_pass(
            data.y, mu_y, comp.skew_y, comp.row_scale_y, comp.col_scale_y,
            spec.response_family, comp.tail_y,
        )
        y_sides.append(y_pass)
        total = math.log(comp.weight) + y_pass.log_dens
        if spec.models_covariates:
            x_pass = _side_pass(
                data.x, comp.mean_x, comp.skew_x, comp.row_scale_x, comp.col_scale_x,
                spec.covariate_family, comp.tail_x,
            )
            x_sides.append(x_pass)
            total = total + x_pass.log_dens
        else:
            x_sides.append(None)
        log_joint[:, g] = total
    log_mix = logsumexp(log_joint, axis=1)
    # an unbounded component density makes log_mix infinite; the fit loop
    # rejects such passes before the responsibilities are ever used
    with np.errstate(invalid="ignore"):
        resp = np.exp(log_joint - log_mix[:, None])
    return _Pass(
        log_joint=log_joint,
        loglik=float(np.sum(log_mix)),
        resp=resp,
        x_sides=x_sides,
        y_sides=y_sides,
    )


def observed_loglik(data: MatrixData, params: ModelParams) -> float:
    """Observed-data log-likelihood of the mixture at the given parameters.

    Raises :class:`DegenerateLikelihoodError` naming the observation and
    component if any component density is non-finite there.
    """
    pass_ = _densities_pass(data, params)
    if not np.isfinite(pass_.loglik):
        bad = np.argwhere(~np.isfinite(pass_.log_joint))
        i, g = (int(bad[0, 0]), int(bad[0, 1])) if bad.size else (None, None)
        raise DegenerateLikelihoodError(
            "non-finite component log-density", observation=i, component=g
        )
    return pass_.loglik


def _conditional_moments(tail, delta, rho, dims):
    """E(W), E(1/W), E(log W) of the conditional mixing law, per observation.

    A vanishing skewness matrix under the skew-t family degenerates the
    conditional GIG to an inverse gamma, handled in closed form.
    """
    a, b, lam = conditional_gig_params(tail, delta, rho, dims)
    a_const = float(np.asarray(a).flat[0])
    if a_const < 1e-250:
        alpha = -lam
        beta = 0.5 * b
        l_mom = beta / max(alpha - 1.0, 1e-8)
        m_mom = alpha / beta
        n_mom = np.log(beta) - psi(alpha)
        return l_mom, m_mom, n_mom
    # an exact-fit observation would put the GIG second parameter at zero;
    # clamp so the Bessel-ratio moments stay finite
    return gig_moments_arrays(a, np.maximum(b, 1e-250), lam)


def e_step(data: MatrixData, params: ModelParams, pass_: Optional[_Pass] = None) -> LatentMoments:
    """Responsibilities and conditional mixing moments at the current fit."""
    spec = params.spec
    if pass_ is None:
        pass_ = _densities_pass(data, params)
    n, g_count = pass_.resp.shape
    p, q, r = spec.p, spec.q, spec.r
    ones = np.ones((n, g_count))
    zeros = np.zeros((n, g_count))
    l_x, m_x, n_x = ones.copy(), ones.copy(), zeros.copy()
    l_y, m_y, n_y = ones.copy(), ones.copy(), zeros.copy()
    for g, comp in enumerate(params.components):
        if spec.models_covariates and spec.covariate_family.is_skewed:
            side = pass_.x_sides[g]
            lx, mx, nx = _conditional_moments(comp.tail_x, side.delta, side.rho, (q, r))
            l_x[:, g], m_x[:, g], n_x[:, g] = lx, mx, nx
        if spec.response_family.is_skewed:
            side = pass_.y_sides[g]
            ly, my, ny = _conditional_moments(comp.tail_y, side.delta, side.rho, (p, r))
            l_y[:, g], m_y[:, g], n_y[:, g] = ly, my, ny
    return LatentMoments(
        resp=pass_.resp, l_x=l_x, m_x=m_x, n_x=n_x, l_y=l_y, m_y=m_y, n_y=n_y
    )


# ---------------------------------------------------------------------------
# CM sweeps


def _repair_spd(matrix, name, ridge):
    """Symmetrize and factorize, escalating a relative ridge if needed."""
    sym = 0.5 * (matrix + matrix.T)
    try:
        return spd_factorize(sym, name=name)
    except NotPositiveDefiniteError:
        pass
    scale = float(np.mean(np.abs(np.diag(sym)))) or 1.0
    eps = ridge
    eye = np.eye(sym.shape[0])
    for _ in range(10):
        try:
            return spd_factorize(sym + eps * scale * eye, name=name)
        except NotPositiveDefiniteError:
            eps *= 2.0
    raise NotPositiveDefiniteError(f"{name} could not be repaired to SPD", pivot=-1)


def _update_location(v, z, l_mom, m_mom, skewed, prev_skew):
    """Joint (mean, skewness) update for a free-location side.

    Solves the stationarity system of the expected complete-data
    log-likelihood in (M, A).  When the weighted moments degenerate
    toward W = 1 the system is singular; then A is held and M takes its
    conditional update, which is also the exact normal-family sweep when
    the moments are pinned at (1, 1).
    """
    t = float(np.sum(z))
    lbar = float(np.sum(z * l_mom) / t)
    mbar = float(np.sum(z * m_mom) / t)
    s_v = np.einsum("n,ndr->dr", z, v)
    s_mv = np.einsum("n,ndr->dr", z * m_mom, v)
    excess = lbar * mbar - 1.0
    if skewed and excess >= _DEGENERATE_MOMENT_EXCESS:
        denom = t * excess
        mean = (lbar * s_mv - s_v) / denom
        skew = (mbar * s_v - s_mv) / denom
        return mean, skew
    skew = prev_skew
    mean = (s_mv - t * skew) / (t * mbar)
    return mean, skew


def _equilibrated_solve(sym, rhs, g):
    """Solve ``sym @ x = rhs`` with Jacobi (diagonal) scaling.

    The design blocks mix an all-ones intercept row with covariate rows
    whose scale the data dictates, so the raw Gram matrix can be
    numerically singular even when the scaled problem is well posed.
    """
    d = np.sqrt(np.diag(sym))
    d = np.where((d > 0.0) & np.isfinite(d), d, 1.0)
    scaled = sym / d[:, None] / d[None, :]
    try:
        x = np.linalg.solve(scaled, rhs / d[:, None])
    except np.linalg.LinAlgError:
        raise SingularDesignError(g) from None
    return x / d[:, None]


def _update_regression(y, xstar, z, l_mom, m_mom, skewed, prev_skew, col_f, g):
    """Joint (coefficient, skewness) update for the regression side."""
    t = float(np.sum(z))
    lbar = float(np.sum(z * l_mom) / t)
    mbar = float(np.sum(z * m_mom) / t)
    zm = z * m_mom
    # Psi^-1 X*' per observation, shaped like X*
    q_stack = _solve_cols(col_f, xstar)
    p1 = np.einsum("n,nkr,nlr->kl", zm, xstar, q_stack)
    r1 = np.einsum("n,npr,nkr->pk", zm, y, q_stack)
    s_x = np.einsum("n,nkr->kr", z, xstar)
    s_y = np.einsum("n,npr->pr", z, y)
    excess = lbar * mbar - 1.0
    if skewed and excess >= _DEGENERATE_MOMENT_EXCESS:
        sq = col_f.solve(s_x.T).T  # S_x Psi^-1, shape (k, r)
        p_mat = p1 - np.einsum("kr,lr->kl", sq, s_x) / (t * lbar)
        r_mat = r1 - np.einsum("pr,kr->pk", col_f.solve(s_y.T).T, s_x) / (t * lbar)
        coef = _equilibrated_solve(0.5 * (p_mat + p_mat.T), r_mat.T, g).T
        skew = (s_y - np.einsum("pk,kr->pr", coef, s_x)) / (t * lbar)
        return coef, skew
    skew = prev_skew
    corr = np.einsum("pr,kr->pk", col_f.solve(skew.T).T, s_x)
    coef = _equilibrated_solve(0.5 * (p1 + p1.T), (r1 - corr).T, g).T
    return coef, skew


def _solve_cols(factor: SpdFactor, stack):
    """Apply factor^-1 from the right: S_i Psi^-1 for each (d, r) slice."""
    n, d, r = stack.shape
    flat = stack.reshape(n * d, r).T
    return factor.solve(flat).T.reshape(n, d, r)


def _solve_rows(factor: SpdFactor, stack):
    """Apply factor^-1 from the left: Sigma^-1 S_i for each (d, r) slice."""
    n, d, r = stack.shape
    flat = stack.transpose(1, 0, 2).reshape(d, n * r)
    return factor.solve(flat).reshape(d, n, r).transpose(1, 0, 2)


def _row_scatter(resid, skew, z, l_mom, m_mom, col_f, dim_cols, ridge, name):
    """Row-scale update: weighted quadratic against the held column scale."""
    t = float(np.sum(z))
    rpsi = _solve_cols(col_f, resid)
    term = np.einsum("n,ndr,nsr->ds", z * m_mom, resid, rpsi)
    if skew is not None:
        s_r = np.einsum("n,ndr->dr", z, rpsi)
        cross = np.einsum("dr,sr->ds", s_r, skew)
        apsi = col_f.solve(skew.T).T
        term = term - cross - cross.T + float(np.sum(z * l_mom)) * np.einsum(
            "dr,sr->ds", apsi, skew
        )
    return _repair_spd(term / (dim_cols * t), name, ridge)


def _col_scatter(resid, skew, z, l_mom, m_mom, row_f, dim_rows, ridge, name):
    """Column-scale update: the transposed quadratic with the fresh row scale."""
    t = float(np.sum(z))
    rsig = _solve_rows(row_f, resid)
    term = np.einsum("n,ndr,nds->rs", z * m_mom, rsig, resid)
    if skew is not None:
        s_r = np.einsum("n,ndr->dr", z, rsig)
        cross = np.einsum("dr,ds->rs", s_r, skew)
        asig = row_f.solve(skew)
        term = term - cross - cross.T + float(np.sum(z * l_mom)) * np.einsum(
            "dr,ds->rs", asig, skew
        )
    return _repair_spd(term / (dim_rows * t), name, ridge)


def cm_step1(data: MatrixData, params: ModelParams, moments: LatentMoments,
             ridge: float = 1e-8) -> ModelParams:
    """First CM block: weights, locations, skewness matrices, row scales.

    Column scales and tail parameters are held at their current values.
    """
    spec = params.spec
    n = data.n_obs
    xstar = data.design_stack()
    new_components = []
    for g, comp in enumerate(params.components):
        z = moments.resp[:, g]
        t = float(np.sum(z))
        share = t / n
        if share < 1.0 / (10.0 * n):
            raise ComponentCollapseError(g, share)
        updates = {"weight": share}
        if spec.models_covariates:
            skewed = spec.covariate_family.is_skewed
            mean_x, skew_x = _update_location(
                data.x, z, moments.l_x[:, g], moments.m_x[:, g], skewed, comp.skew_x
            )
            resid_x = data.x - mean_x[None]
            row_x = _row_scatter(
                resid_x, skew_x if skewed else None, z,
                moments.l_x[:, g], moments.m_x[:, g],
                comp.col_scale_x, spec.r, ridge, f"row scale (covariates, component {g})",
            )
            updates.update(mean_x=mean_x, skew_x=skew_x, row_scale_x=row_x)
        skewed_y = spec.response_family.is_skewed
        coef, skew_y = _update_regression(
            data.y, xstar, z, moments.l_y[:, g], moments.m_y[:, g],
            skewed_y, comp.skew_y, comp.col_scale_y, g,
        )
        resid_y = data.y - np.einsum("pk,nkr->npr", coef, xstar)
        row_y = _row_scatter(
            resid_y, skew_y if skewed_y else None, z,
            moments.l_y[:, g], moments.m_y[:, g],
            comp.col_scale_y, spec.r, ridge, f"row scale (responses, component {g})",
        )
        updates.update(coef=coef, skew_y=skew_y, row_scale_y=row_y)
        new_components.append(replace(comp, **updates))
    return ModelParams(spec=spec, components=tuple(new_components))


def cm_step2(data: MatrixData, params: ModelParams, moments: LatentMoments,
             ridge: float = 1e-8) -> ModelParams:
    """Second CM block: column scales against the fresh row scales."""
    spec = params.spec
    xstar = data.design_stack()
    new_components = []
    for g, comp in enumerate(params.components):
        z = moments.resp[:, g]
        updates = {}
        if spec.models_covariates:
            skewed = spec.covariate_family.is_skewed
            resid_x = data.x - comp.mean_x[None]
            updates["col_scale_x"] = _col_scatter(
                resid_x, comp.skew_x if skewed else None, z,
                moments.l_x[:, g], moments.m_x[:, g],
                comp.row_scale_x, spec.q, ridge,
                f"column scale (covariates, component {g})",
            )
        skewed_y = spec.response_family.is_skewed
        resid_y = data.y - np.einsum("pk,nkr->npr", comp.coef, xstar)
        updates["col_scale_y"] = _col_scatter(
            resid_y, comp.skew_y if skewed_y else None, z,
            moments.l_y[:, g], moments.m_y[:, g],
            comp.row_scale_y, spec.p, ridge,
            f"column scale (responses, component {g})",
        )
        new_components.append(replace(comp, **updates))
    return ModelParams(spec=spec, components=tuple(new_components))


def _update_tail(family, tail, z, l_mom, m_mom, n_mom):
    if family is Family.SKEW_T:
        return SkewTTail(nu=update_nu(z, m_mom, n_mom))
    if family is Family.GENERALIZED_HYPERBOLIC:
        return update_gh(z, l_mom, m_mom, n_mom, tail)
    if family is Family.VARIANCE_GAMMA:
        return VgTail(gamma=update_gamma(z, l_mom, n_mom))
    if family is Family.NORMAL_INVERSE_GAUSSIAN:
        return NigTail(kappa=update_kappa(z, l_mom))
    raise ValueError(f"no tail update for family {family}")


def cm_step3(data: MatrixData, params: ModelParams, moments: LatentMoments) -> ModelParams:
    """Third CM block: tail parameters of every skewed side."""
    spec = params.spec
    new_components = []
    for g, comp in enumerate(params.components):
        z = moments.resp[:, g]
        updates = {}
        if spec.models_covariates and spec.covariate_family.is_skewed:
            updates["tail_x"] = _update_tail(
                spec.covariate_family, comp.tail_x, z,
                moments.l_x[:, g], moments.m_x[:, g], moments.n_x[:, g],
            )
        if spec.response_family.is_skewed:
            updates["tail_y"] = _update_tail(
                spec.response_family, comp.tail_y, z,
                moments.l_y[:, g], moments.m_y[:, g], moments.n_y[:, g],
            )
        new_components.append(replace(comp, **updates) if updates else comp)
    return ModelParams(spec=spec, components=tuple(new_components))


def expected_complete_loglik(data: MatrixData, params: ModelParams,
                             moments: LatentMoments) -> float:
    """Expected complete-data log-likelihood at the given moments.

    The objective each CM block conditionally maximizes; exposed for the
    monotonicity tests.
    """
    spec = params.spec
    xstar = data.design_stack()
    total = 0.0
    for g, comp in enumerate(params.components):
        z = moments.resp[:, g]
        total += float(np.sum(z)) * math.log(comp.weight)
        total += _expected_side_term(
            data.y, np.einsum("pk,nkr->npr", comp.coef, xstar), comp.skew_y,
            comp.row_scale_y, comp.col_scale_y, spec.response_family, comp.tail_y,
            z, moments.l_y[:, g], moments.m_y[:, g], moments.n_y[:, g],
        )
        if spec.models_covariates:
            total += _expected_side_term(
                data.x, comp.mean_x, comp.skew_x,
                comp.row_scale_x, comp.col_scale_x, spec.covariate_family, comp.tail_x,
                z, moments.l_x[:, g], moments.m_x[:, g], moments.n_x[:, g],
            )
    return total


def _expected_side_term(v, mu, skew, row_f, col_f, family, tail, z, l_mom, m_mom, n_mom):
    d, r = v.shape[1:]
    diff = v - (mu if mu.ndim == 3 else mu[None])
    w_e = _whiten_stack(diff, row_f, col_f)
    delta = np.einsum("ndr,ndr->n", w_e, w_e)
    common = -0.5 * d * r * _LOG_2PI - 0.5 * r * row_f.logdet - 0.5 * d * col_f.logdet
    if family is Family.NORMAL:
        return float(np.sum(z * (common - 0.5 * delta)))
    w_a = _whiten_stack(skew[None], row_f, col_f)[0]
    rho = float(np.einsum("dr,dr->", w_a, w_a))
    tilt = np.einsum("ndr,dr->n", w_e, w_a)
    kernel = (
        common
        - 0.5 * d * r * n_mom
        - 0.5 * (m_mom * delta - 2.0 * tilt + l_mom * rho)
    )
    return float(np.sum(z * kernel)) + expected_tail_loglik(tail, z, l_mom, m_mom, n_mom)


# ---------------------------------------------------------------------------
# initialization and the fit loop


def _seed_params(data: MatrixData, spec: ModelSpec) -> ModelParams:
    """Placeholder parameters: identity scales, zero skews, default tails."""
    p, q, r = data.dims
    eye_r = spd_factorize(np.eye(r))
    comps = []
    for _ in range(spec.n_components):
        kwargs = dict(
            weight=1.0 / spec.n_components,
            coef=np.zeros((p, 1 + q)),
            skew_y=np.zeros((p, r)),
            row_scale_y=spd_factorize(np.eye(p)),
            col_scale_y=eye_r,
            tail_y=_DEFAULT_TAILS[spec.response_family],
        )
        if spec.models_covariates:
            kwargs.update(
                mean_x=np.zeros((q, r)),
                skew_x=np.zeros((q, r)),
                row_scale_x=spd_factorize(np.eye(q)),
                col_scale_x=eye_r,
                tail_x=_DEFAULT_TAILS[spec.covariate_family],
            )
        comps.append(ComponentParams(**kwargs))
    return ModelParams(spec=spec, components=tuple(comps))


def _params_from_responsibilities(data: MatrixData, spec: ModelSpec, resp,
                                  ridge: float) -> ModelParams:
    """Normal-theory CM sweeps from responsibilities alone."""
    n, g_count = resp.shape
    ones = np.ones((n, g_count))
    zeros = np.zeros((n, g_count))
    unit_moments = LatentMoments(
        resp=resp, l_x=ones, m_x=ones, n_x=zeros, l_y=ones, m_y=ones, n_y=zeros
    )
    params = _seed_params(data, spec)
    params = cm_step1(data, params, unit_moments, ridge)
    params = cm_step2(data, params, unit_moments, ridge)
    return params


def _soft_starts(n, g_count, rng, count):
    starts = []
    for _ in range(count):
        z = rng.uniform(0.0, 1.0, size=(n, g_count))
        z /= z.sum(axis=1, keepdims=True)
        starts.append(z)
    return starts


def _hard_start(features, g_count, rng):
    """One-hot responsibilities from k-means on a feature matrix."""
    from sklearn.cluster import KMeans

    for attempt_seed in rng.integers(0, 2**31 - 1, size=2):
        km = KMeans(n_clusters=g_count, n_init=10, random_state=int(attempt_seed))
        labels = km.fit_predict(features)
        if len(np.unique(labels)) == g_count:
            z = np.zeros((features.shape[0], g_count))
            z[np.arange(features.shape[0]), labels] = 1.0
            return z
    logger.debug("k-means start degenerate twice; falling back to soft starts only")
    return None


def _start_candidates(data: MatrixData, spec: ModelSpec, controls: FitControls,
                      extra_starts=()):
    """Soft random starts plus the k-means hard starts.

    Two hard starts are attempted: k-means on the raw vectorized
    (response, covariate) pairs, and -- unless ``controls.compressed_start``
    is off -- k-means on their signed-log compression ``sign(v) log1p|v|``.
    When cell magnitudes span many orders (heavy right tails), squared
    distances on the raw features see only the largest cells and every
    split follows sheer magnitude; the compressed view keeps the group
    geometry visible.  On moderately scaled data both runs usually produce
    the same partition, which is then offered only once.

    ``extra_starts`` are caller-supplied (n, G) responsibility matrices
    prepended to the candidate list; they do not count against
    ``controls.n_starts``.
    """
    n, g_count = data.n_obs, spec.n_components
    if g_count == 1:
        return [np.ones((n, 1))]
    starts = []
    for resp in extra_starts:
        resp = np.asarray(resp, dtype=float)
        if resp.shape != (n, g_count):
            raise ValueError(
                f"extra start has shape {resp.shape}, expected ({n}, {g_count})"
            )
        starts.append(resp)
    rng = np.random.default_rng(controls.seed)
    n_hard = 2 if controls.compressed_start else 1
    starts += _soft_starts(n, g_count, rng, max(controls.n_starts - n_hard, 1))
    if controls.n_starts > 1:
        features = np.concatenate(
            [data.y.reshape(n, -1), data.x.reshape(n, -1)], axis=1
        )
        hard = _hard_start(features, g_count, rng)
        if hard is not None:
            starts.append(hard)
        if controls.compressed_start:
            compressed = _hard_start(
                np.sign(features) * np.log1p(np.abs(features)), g_count, rng
            )
            if compressed is not None and (
                hard is None or not _same_partition(compressed, hard)
            ):
                starts.append(compressed)
    return starts


def _same_partition(resp_a, resp_b):
    """Whether two one-hot responsibility matrices partition identically."""
    la = np.argmax(resp_a, axis=1)
    lb = np.argmax(resp_b, axis=1)
    _, ca = np.unique(la, return_inverse=True)
    _, cb = np.unique(lb, return_inverse=True)
    # canonicalize label order by first appearance
    fa = {v: i for i, v in enumerate(dict.fromkeys(ca.tolist()))}
    fb = {v: i for i, v in enumerate(dict.fromkeys(cb.tolist()))}
    return [fa[v] for v in ca.tolist()] == [fb[v] for v in cb.tolist()]


def _run_from_responsibilities(data: MatrixData, spec: ModelSpec, resp,
                               controls: FitControls):
    """One ECM run to convergence from starting responsibilities.

    Returns (params, trace, final_pass, n_iter, converged); the final
    E-step pass matches the returned parameters.
    """
    params = _params_from_responsibilities(data, spec, resp, controls.ridge)
    trace = []
    prev = -np.inf
    converged = False
    pass_ = _densities_pass(data, params)
    for iteration in range(controls.max_iter + 1):
        if not np.isfinite(pass_.loglik):
            raise DegenerateLikelihoodError(
                "unbounded likelihood: a component law degenerated onto an observation"
            )
        trace.append(pass_.loglik)
        if abs(pass_.loglik - prev) < controls.tol:
            converged = True
            break
        if iteration == controls.max_iter:
            break
        prev = pass_.loglik
        moments = e_step(data, params, pass_)
        params = cm_step1(data, params, moments, controls.ridge)
        params = cm_step2(data, params, moments, controls.ridge)
        params = cm_step3(data, params, moments)
        pass_ = _densities_pass(data, params)
    shares = pass_.resp.sum(axis=0) / data.n_obs
    low = np.flatnonzero(shares < 1.0 / (10.0 * data.n_obs))
    if low.size:
        raise ComponentCollapseError(int(low[0]), float(shares[low[0]]))
    return params, np.asarray(trace), pass_, len(trace) - 1, converged


def _run_all_starts(data: MatrixData, spec: ModelSpec, controls: FitControls,
                    extra_starts=()):
    """Run every start to convergence; return (index, outcome) pairs."""
    outcomes = []
    candidates = _start_candidates(data, spec, controls, extra_starts)
    for idx, resp in enumerate(candidates):
        try:
            outcomes.append((idx, resp, _run_from_responsibilities(data, spec, resp, controls)))
        except ModelFitError as err:
            logger.debug("start %d abandoned: %s", idx, err)
            outcomes.append((idx, resp, err))
        except NotPositiveDefiniteError as err:
            logger.debug("start %d abandoned: %s", idx, err)
            outcomes.append((idx, resp, ModelFitError(str(err))))
    return outcomes


def initialize(data: MatrixData, spec: ModelSpec,
               controls: Optional[FitControls] = None, *,
               extra_starts=()) -> LatentMoments:
    """Multi-start initialization: soft random starts plus k-means hard starts.

    With the default ``n_starts=10`` this runs 8 soft random starts, one
    k-means start on the raw vectorized pairs, and one k-means start on
    their signed-log compression (dropped when it repeats the raw
    partition).  Every candidate is run to convergence and the starting
    responsibilities of the best run (by observed log-likelihood) are
    returned, with the mixing moments at their degenerate placeholders.

    ``extra_starts`` adds caller-supplied (n, G) responsibility matrices
    to the candidate list, e.g. a partition known from context.
    """
    controls = controls or FitControls()
    outcomes = _run_all_starts(data, spec, controls, extra_starts)
    best = _best_outcome(outcomes, spec)
    _, resp, _ = best
    n, g_count = resp.shape
    ones = np.ones((n, g_count))
    zeros = np.zeros((n, g_count))
    return LatentMoments(
        resp=resp, l_x=ones, m_x=ones, n_x=zeros, l_y=ones, m_y=ones, n_y=zeros
    )


def _best_outcome(outcomes, spec):
    successes = [o for o in outcomes if not isinstance(o[2], Exception)]
    if not successes:
        reasons = "; ".join(f"start {i}: {err}" for i, _, err in outcomes)
        raise ModelFitError(
            f"all {len(outcomes)} starts failed for {spec.describe()} ({reasons})"
        )
    return max(successes, key=lambda o: o[2][2].loglik)


def _ordering_key(comp: ComponentParams, spec: ModelSpec):
    anchor = comp.mean_x if spec.models_covariates else comp.coef
    return float(anchor[0, 0]), float(anchor[0, 1]) if anchor.shape[1] > 1 else 0.0


def _finish(data: MatrixData, spec: ModelSpec, run) -> FitResult:
    from .evaluate import bic as bic_score
    from .evaluate import count_free_params

    params, trace, pass_, n_iter, converged = run
    order = sorted(range(spec.n_components),
                   key=lambda g: _ordering_key(params.components[g], spec))
    comps = []
    for g in order:
        comp = params.components[g]
        row_y, col_y = _rescaled(comp.row_scale_y, comp.col_scale_y)
        comp = replace(comp, row_scale_y=row_y, col_scale_y=col_y)
        if spec.models_covariates:
            row_x, col_x = _rescaled(comp.row_scale_x, comp.col_scale_x)
            comp = replace(comp, row_scale_x=row_x, col_scale_x=col_x)
        comps.append(comp)
    ordered = ModelParams(spec=spec, components=tuple(comps))
    resp = pass_.resp[:, order]
    k = count_free_params(spec)
    loglik = pass_.loglik
    return FitResult(
        params=ordered,
        loglik=loglik,
        loglik_trace=trace,
        responsibilities=resp,
        labels=np.argmax(resp, axis=1),
        n_iter=n_iter,
        converged=converged,
        n_free_params=k,
        bic=bic_score(loglik, k, data.n_obs),
    )


def _rescaled(row_f: SpdFactor, col_f: SpdFactor):
    """Fix the scale gauge: trace of the column scale equals its dimension."""
    r = col_f.dim
    t = float(np.trace(col_f.matrix)) / r
    if abs(t - 1.0) < 1e-14:
        return row_f, col_f
    return (
        spd_factorize(row_f.matrix * t),
        spd_factorize(col_f.matrix / t),
    )


def fit(data: MatrixData, spec: ModelSpec,
        controls: Optional[FitControls] = None, *,
        extra_starts=()) -> FitResult:
    """Fit one mixture by multi-start ECM.

    Runs the initialization protocol (soft random starts plus the k-means
    hard starts, each to convergence), keeps the best run by observed
    log-likelihood, then relabels components by their location anchor and
    fixes the scale gauge so each column-scale matrix has trace r.
    ``extra_starts`` adds caller-supplied (n, G) responsibility matrices
    to the candidate list.

    Raises
    ------
    ModelFitError
        If every start collapses or fails.
    """
    controls = controls or FitControls()
    p, q, r = data.dims
    if (spec.p, spec.q, spec.r) != (p, q, r):
        raise ValueError(
            f"spec dimensions (p={spec.p}, q={spec.q}, r={spec.r}) do not match "
            f"data dimensions (p={p}, q={q}, r={r})"
        )
    outcomes = _run_all_starts(data, spec, controls, extra_starts)
    _, _, run = _best_outcome(outcomes, spec)
    return _finish(data, spec, run)
