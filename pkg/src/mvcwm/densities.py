"""Matrix-variate component densities.

Five families share one construction: a d x r random matrix is either
matrix-normal or a normal variance-mean mixture

    V = M + W A + sqrt(W) U,     U ~ matrix-normal(0, Sigma, Psi),

where the scalar mixing weight W > 0 follows an inverse-gamma law
(skew-t), a generalized inverse-Gaussian law (generalized hyperbolic and
its normal-inverse-Gaussian special case), or a gamma law
(variance-gamma).  Integrating W out gives closed forms built from a
single template: a family-specific normalizing head, the exponential tilt
trace term, and a Bessel-K factor whose order and arguments are exactly
the parameters of the conditional GIG law of W given V.  That triple is
produced by :func:`conditional_gig_params` and reused verbatim by the
fitting code, so the density and the posterior moments can never drift
apart.

Quadratic forms use triangular solves against cached Cholesky factors —
no explicit inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .specialfn import SpdFactor, log_bessel_k, spd_factorize

__all__ = [
    "Family",
    "SkewTTail",
    "GhTail",
    "VgTail",
    "NigTail",
    "TailParams",
    "MatrixLaw",
    "delta_quad",
    "rho_quad",
    "trace_tilt",
    "conditional_gig_params",
    "mvn_log_density",
    "skewed_log_density",
    "log_density",
    "log_density_stack",
]

_LOG_2PI = math.log(2.0 * math.pi)


class Family(Enum):
    """Component density families for one side (covariates or responses)."""

    NORMAL = "normal"
    SKEW_T = "skew_t"
    GENERALIZED_HYPERBOLIC = "generalized_hyperbolic"
    VARIANCE_GAMMA = "variance_gamma"
    NORMAL_INVERSE_GAUSSIAN = "normal_inverse_gaussian"

    @property
    def short_name(self) -> str:
        return _SHORT_NAMES[self]

    @property
    def is_skewed(self) -> bool:
        return self is not Family.NORMAL

    @property
    def n_tail_params(self) -> int:
        return {_F.NORMAL: 0, _F.SKEW_T: 1, _F.GENERALIZED_HYPERBOLIC: 2,
                _F.VARIANCE_GAMMA: 1, _F.NORMAL_INVERSE_GAUSSIAN: 1}[self]

    @classmethod
    def parse(cls, token: str) -> "Family":
        """Accept either the enum value or the short CLI token."""
        t = token.strip().lower().replace("-", "_")
        for fam in cls:
            if t in (fam.value, fam.short_name):
                return fam
        raise ValueError(
            f"unknown family {token!r}; expected one of "
            + ", ".join(f.short_name for f in cls)
        )


_F = Family
_SHORT_NAMES = {
    Family.NORMAL: "normal",
    Family.SKEW_T: "skewt",
    Family.GENERALIZED_HYPERBOLIC: "gh",
    Family.VARIANCE_GAMMA: "vg",
    Family.NORMAL_INVERSE_GAUSSIAN: "nig",
}


@dataclass(frozen=True)
class SkewTTail:
    """Degrees of freedom of the skew-t mixing law (inverse-gamma nu/2, nu/2)."""

    nu: float

    def __post_init__(self):
        if not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise ValueError(f"skew-t degrees of freedom must be positive, got {self.nu}")


@dataclass(frozen=True)
class GhTail:
    """Index and concentration of the generalized hyperbolic mixing law."""

    lam: float
    omega: float

    def __post_init__(self):
        if not math.isfinite(self.lam):
            raise ValueError(f"GH index must be finite, got {self.lam}")
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValueError(f"GH concentration must be positive, got {self.omega}")


@dataclass(frozen=True)
class VgTail:
    """Shape of the variance-gamma mixing law (gamma with mean one)."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"variance-gamma shape must be positive, got {self.gamma}")


@dataclass(frozen=True)
class NigTail:
    """Concentration of the normal-inverse-Gaussian mixing law."""

    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and math.isfinite(self.kappa)):
            raise ValueError(f"NIG concentration must be positive, got {self.kappa}")


TailParams = Union[SkewTTail, GhTail, VgTail, NigTail, None]

_TAIL_TYPES = {
    Family.SKEW_T: SkewTTail,
    Family.GENERALIZED_HYPERBOLIC: GhTail,
    Family.VARIANCE_GAMMA: VgTail,
    Family.NORMAL_INVERSE_GAUSSIAN: NigTail,
}


@dataclass(frozen=True)
class MatrixLaw:
    """One side's fully specified d x r matrix-variate distribution.

    ``row_scale`` (d x d) and ``col_scale`` (r x r) are held as Cholesky
    factorizations.  For the normal family ``skew`` is identically zero
    and ``tail`` is None.
    """

    family: Family
    mean: np.ndarray
    skew: np.ndarray
    row_scale: SpdFactor
    col_scale: SpdFactor
    tail: TailParams

    @classmethod
    def create(cls, family, mean, skew=None, row_scale=None, col_scale=None, tail=None):
        mean = np.asarray(mean, dtype=float)
        if mean.ndim != 2:
            raise ValueError(f"mean must be a matrix, got shape {mean.shape}")
        d, r = mean.shape
        skew = np.zeros_like(mean) if skew is None else np.asarray(skew, dtype=float)
        if skew.shape != mean.shape:
            raise ValueError(f"skew shape {skew.shape} != mean shape {mean.shape}")
        row = row_scale if isinstance(row_scale, SpdFactor) else spd_factorize(
            np.eye(d) if row_scale is None else row_scale, name="row scale"
        )
        col = col_scale if isinstance(col_scale, SpdFactor) else spd_factorize(
            np.eye(r) if col_scale is None else col_scale, name="column scale"
        )
        if row.dim != d or col.dim != r:
            raise ValueError("scale dimensions do not match the mean")
        if family is Family.NORMAL:
            if tail is not None:
                raise ValueError("normal family takes no tail parameters")
            if np.any(skew != 0.0):
                raise ValueError("normal family has no skewness matrix")
        else:
            expected = _TAIL_TYPES[family]
            if not isinstance(tail, expected):
                raise ValueError(
                    f"{family.value} requires tail parameters of type {expected.__name__}"
                )
        return cls(family=family, mean=mean, skew=skew, row_scale=row, col_scale=col, tail=tail)

    @property
    def shape(self):
        return self.mean.shape


def _whiten_stack(stack, row_factor: SpdFactor, col_factor: SpdFactor):
    """Map each matrix S in the stack to L^-1 S C^-T, with A = L L', Psi = C C'."""
    n, d, r = stack.shape
    flat = stack.transpose(1, 0, 2).reshape(d, n * r)
    half = solve_triangular(row_factor.chol, flat, lower=True)
    half = half.reshape(d, n, r).transpose(1, 0, 2)
    flat2 = half.transpose(2, 1, 0).reshape(r, d * n)
    full = solve_triangular(col_factor.chol, flat2, lower=True)
    return full.reshape(r, d, n).transpose(2, 1, 0)


def _as_stack(v, shape):
    v = np.asarray(v, dtype=float)
    if v.shape == shape:
        return v[None], True
    if v.ndim == 3 and v.shape[1:] == shape:
        return v, False
    raise ValueError(f"expected shape {shape} or (n, {shape[0]}, {shape[1]}), got {v.shape}")


def delta_quad(v, mean, row_factor: SpdFactor, col_factor: SpdFactor):
    """Mahalanobis-type quadratic tr(Sigma^-1 (V-M) Psi^-1 (V-M)')."""
    stack, scalar = _as_stack(v, mean.shape)
    w = _whiten_stack(stack - mean[None], row_factor, col_factor)
    out = np.einsum("ndr,ndr->n", w, w)
    return float(out[0]) if scalar else out


def rho_quad(skew, row_factor: SpdFactor, col_factor: SpdFactor):
    """Skewness concentration tr(Sigma^-1 A Psi^-1 A')."""
    w = _whiten_stack(np.asarray(skew, dtype=float)[None], row_factor, col_factor)
    return float(np.einsum("ndr,ndr->", w, w))


def trace_tilt(v, mean, skew, row_factor: SpdFactor, col_factor: SpdFactor):
    """Exponential tilt tr(Sigma^-1 (V-M) Psi^-1 A')."""
    stack, scalar = _as_stack(v, mean.shape)
    w_e = _whiten_stack(stack - mean[None], row_factor, col_factor)
    w_a = _whiten_stack(np.asarray(skew, dtype=float)[None], row_factor, col_factor)
    out = np.einsum("ndr,dr->n", w_e, w_a[0])
    return float(out[0]) if scalar else out


def conditional_gig_params(tail: TailParams, delta, rho, dims):
    """GIG(a, b, lam) law of the mixing weight W given an observed matrix.

    Parameters
    ----------
    tail : TailParams
        Tail parameters of a skewed family.
    delta : ndarray or float
        Quadratic tr(Sigma^-1 (V-M) Psi^-1 (V-M)') per observation.
    rho : float
        Skewness concentration tr(Sigma^-1 A Psi^-1 A').
    dims : tuple (d, r)
        Dimensions of the matrix variate.

    Returns
    -------
    (a, b, lam)
        ``a`` and ``b`` broadcast against ``delta``; ``lam`` is scalar.

    Notes
    -----
    The same triple parameterizes the Bessel factor of the marginal
    density, which is what ties the E-step moments to the likelihood.
    """
    d, r = dims
    dr = d * r
    delta = np.asarray(delta, dtype=float)
    if isinstance(tail, SkewTTail):
        return np.broadcast_to(rho, delta.shape), delta + tail.nu, -(tail.nu + dr) / 2.0
    if isinstance(tail, GhTail):
        return (
            np.broadcast_to(rho + tail.omega, delta.shape),
            delta + tail.omega,
            tail.lam - dr / 2.0,
        )
    if isinstance(tail, VgTail):
        return (
            np.broadcast_to(rho + 2.0 * tail.gamma, delta.shape),
            delta,
            tail.gamma - dr / 2.0,
        )
    if isinstance(tail, NigTail):
        return (
            np.broadcast_to(rho + tail.kappa**2, delta.shape),
            delta + 1.0,
            -(1.0 + dr) / 2.0,
        )
    raise TypeError(f"not a skewed tail parameterization: {tail!r}")


def _log_tail_head(tail: TailParams, dr: int) -> float:
    """Family-specific normalizing head of the mixed density (log scale)."""
    if isinstance(tail, SkewTTail):
        h = tail.nu / 2.0
        return math.log(2.0) + h * math.log(h) - gammaln(h)
    if isinstance(tail, GhTail):
        return -float(log_bessel_k(tail.lam, tail.omega))
    if isinstance(tail, VgTail):
        g = tail.gamma
        return math.log(2.0) + g * math.log(g) - gammaln(g)
    if isinstance(tail, NigTail):
        return math.log(2.0) + tail.kappa - 0.5 * _LOG_2PI
    raise TypeError(f"not a skewed tail parameterization: {tail!r}")


def _log_gig_integral(order, a, b):
    """log of (b/a)^{order/2} K_order(sqrt(a b)), elementwise in a, b.

    This is (half of) the normalizing integral of an unnormalized
    GIG(a, b, order) kernel.  For a*b underflowing to ~0 (a vanishing
    skewness matrix, or an exactly interpolated observation) the Bessel
    small-argument series makes the limit explicit: the result depends on
    only one of (a, b), and the would-be 0 * inf products cancel exactly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast(a, b).shape)
    ab = a * b
    tiny = ab < 1e-250
    if np.any(tiny):
        s = max(abs(order), 1e-8)
        head = gammaln(s) + (s - 1.0) * math.log(2.0)
        with np.errstate(divide="ignore"):
            if order < 0.0:
                out[tiny] = head - s * np.log(np.broadcast_to(b, out.shape)[tiny])
            else:
                out[tiny] = head - s * np.log(np.broadcast_to(a, out.shape)[tiny])
    rest = ~tiny
    if np.any(rest):
        ar = np.broadcast_to(a, out.shape)[rest]
        br = np.broadcast_to(b, out.shape)[rest]
        out[rest] = 0.5 * order * (np.log(br) - np.log(ar)) + log_bessel_k(
            order, np.sqrt(ar * br)
        )
    return out


def _log_norm_common(law: MatrixLaw) -> float:
    d, r = law.shape
    return (
        -0.5 * d * r * _LOG_2PI
        - 0.5 * r * law.row_scale.logdet
        - 0.5 * d * law.col_scale.logdet
    )


def mvn_log_density(v, law: MatrixLaw):
    """Log density of the matrix-normal distribution.

    Accepts a single d x r matrix or an (n, d, r) stack; returns a float
    or an (n,) vector accordingly.
    """
    stack, scalar = _as_stack(v, law.shape)
    delta = delta_quad(stack, law.mean, law.row_scale, law.col_scale)
    out = _log_norm_common(law) - 0.5 * delta
    return float(out[0]) if scalar else out


def skewed_log_density(v, law: MatrixLaw):
    """Log density of a skewed matrix-variate family (mixing weight removed).

    Accepts a single d x r matrix or an (n, d, r) stack; returns a float
    or an (n,) vector accordingly.
    """
    if law.family is Family.NORMAL:
        raise ValueError("normal family has no skewed density; use mvn_log_density")
    stack, scalar = _as_stack(v, law.shape)
    delta = delta_quad(stack, law.mean, law.row_scale, law.col_scale)
    rho = rho_quad(law.skew, law.row_scale, law.col_scale)
    tilt = trace_tilt(stack, law.mean, law.skew, law.row_scale, law.col_scale)
    a, b, order = conditional_gig_params(law.tail, delta, rho, law.shape)
    out = (
        _log_tail_head(law.tail, law.shape[0] * law.shape[1])
        + _log_norm_common(law)
        + tilt
        + _log_gig_integral(order, a, b)
    )
    return float(out[0]) if scalar else out


def log_density(v, law: MatrixLaw):
    """Family-dispatching log density."""
    if law.family is Family.NORMAL:
        return mvn_log_density(v, law)
    return skewed_log_density(v, law)


def log_density_stack(stack: np.ndarray, law: MatrixLaw) -> np.ndarray:
    """Log densities of an (n, d, r) stack as an (n,) vector (hot path)."""
    out = log_density(stack, law)
    return np.atleast_1d(out)
