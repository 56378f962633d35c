"""Tail-parameter updates for the skewed families.

Each skewed family carries one or two scalar tail parameters governing its
latent mixing law.  Given responsibilities and the conditional moments
l = E(W), m = E(1/W), n = E(log W), the expected complete-data
log-likelihood separates a tail term that depends on the data only through
the weighted moment averages; these routines maximize (or at least never
worsen) that term.

Degrees-of-freedom-style parameters (skew-t nu, variance-gamma gamma) come
from safeguarded bracketed root finding; the generalized hyperbolic pair
uses the standard fixed-point step for the index and one guarded Newton
step for the concentration; the normal-inverse-Gaussian concentration has
a closed form.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .densities import GhTail, NigTail, SkewTTail, TailParams, VgTail
from .specialfn import digamma, dlog_bessel_k_dorder, log_bessel_k

__all__ = [
    "NU_BOUNDS",
    "GAMMA_BOUNDS",
    "OMEGA_BOUNDS",
    "update_nu",
    "update_gamma",
    "update_kappa",
    "update_gh",
    "expected_tail_loglik",
]

logger = logging.getLogger(__name__)

NU_BOUNDS = (0.01, 400.0)
GAMMA_BOUNDS = (0.01, 400.0)
OMEGA_BOUNDS = (1e-4, 1e4)

_LOG_2PI = math.log(2.0 * math.pi)


def _weighted_mean(weights, values):
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * np.asarray(values, dtype=float)) / np.sum(w))


def _bracketed_root(f, bounds, label):
    """Root of a decreasing function on [lo, hi]; nearer bound if none."""
    lo, hi = bounds
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        nearer = lo if abs(flo) < abs(fhi) else hi
        logger.debug("%s update saturated at %g (no sign change)", label, nearer)
        return nearer
    return float(brentq(f, lo, hi, xtol=1e-10, rtol=1e-12))


def update_nu(weights, m_mom, n_mom) -> float:
    """Skew-t degrees of freedom from the weighted moment average.

    Solves log(nu/2) + 1 - psi(nu/2) = mean(m + n) on [0.01, 400]; the
    left side decreases in nu, so when no sign change exists the nearer
    bound is also the maximizer of the tail term.
    """
    s = _weighted_mean(weights, np.asarray(m_mom) + np.asarray(n_mom))

    def f(nu):
        return math.log(nu / 2.0) + 1.0 - float(digamma(nu / 2.0)) - s

    return _bracketed_root(f, NU_BOUNDS, "skew-t nu")


def update_gamma(weights, l_mom, n_mom) -> float:
    """Variance-gamma shape: root of log(g) + 1 - psi(g) + mean(n) - mean(l)."""
    nbar = _weighted_mean(weights, n_mom)
    lbar = _weighted_mean(weights, l_mom)

    def f(g):
        return math.log(g) + 1.0 - float(digamma(g)) + nbar - lbar

    return _bracketed_root(f, GAMMA_BOUNDS, "variance-gamma shape")


def update_kappa(weights, l_mom) -> float:
    """Normal-inverse-Gaussian concentration; closed form 1 / mean(l)."""
    lbar = _weighted_mean(weights, l_mom)
    if not (lbar > 0.0 and math.isfinite(lbar)):
        raise ValueError(f"mean of E(W) moments must be positive, got {lbar}")
    return 1.0 / lbar


def _gh_tail_term(lam, omega, lbar, mbar, nbar):
    # expected log mixing density per unit weight, constants included
    return (
        -math.log(2.0)
        - float(log_bessel_k(lam, omega))
        + (lam - 1.0) * nbar
        - 0.5 * omega * (lbar + mbar)
    )


def update_gh(weights, l_mom, m_mom, n_mom, tail: GhTail) -> GhTail:
    """Generalized hyperbolic (index, concentration) update.

    The index moves by the multiplicative fixed-point step
    lam_new = nbar * lam / (d/ds log K_s(omega) at s = lam); the
    concentration by one Newton step on the expected tail term with
    central-difference derivatives.  Either move is rejected if it does
    not improve the tail term evaluated on the same moments, so the step
    can only help; the concentration is clamped to [1e-4, 1e4].
    """
    lbar = _weighted_mean(weights, l_mom)
    mbar = _weighted_mean(weights, m_mom)
    nbar = _weighted_mean(weights, n_mom)
    lam, omega = tail.lam, tail.omega

    def q(lam_, omega_):
        return _gh_tail_term(lam_, omega_, lbar, mbar, nbar)

    q_current = q(lam, omega)

    deriv = float(dlog_bessel_k_dorder(lam, omega))
    if abs(deriv) < 1e-12:
        logger.debug("GH index kept: vanishing order derivative at lam=%g", lam)
        lam_new = lam
    else:
        lam_new = nbar * lam / deriv
        if not math.isfinite(lam_new) or q(lam_new, omega) < q_current:
            lam_new = lam

    q_mid = q(lam_new, omega)
    h = max(1e-5, 1e-6 * omega)
    if omega - h <= OMEGA_BOUNDS[0]:
        h = 0.5 * (omega - OMEGA_BOUNDS[0] / 2.0)
    q_hi = q(lam_new, omega + h)
    q_lo = q(lam_new, omega - h)
    d1 = (q_hi - q_lo) / (2.0 * h)
    d2 = (q_hi - 2.0 * q_mid + q_lo) / (h * h)
    omega_new = omega
    if d2 < 0.0 and math.isfinite(d1):
        candidate = omega - d1 / d2
        candidate = min(max(candidate, OMEGA_BOUNDS[0]), OMEGA_BOUNDS[1])
        if q(lam_new, candidate) >= q_mid:
            omega_new = candidate
    return GhTail(lam=lam_new, omega=omega_new)


def expected_tail_loglik(tail: TailParams, weights, l_mom, m_mom, n_mom) -> float:
    """Weighted expected log density of the mixing law (the Q tail term).

    The mixing laws are linear in (W, 1/W, log W) on the log scale, so the
    expectation needs only the three conditional moments.  Total over the
    weights, not per unit weight.
    """
    w = np.asarray(weights, dtype=float)
    t = float(np.sum(w))
    lbar = _weighted_mean(w, l_mom)
    mbar = _weighted_mean(w, m_mom)
    nbar = _weighted_mean(w, n_mom)
    if isinstance(tail, SkewTTail):
        h = tail.nu / 2.0
        per = h * math.log(h) - gammaln(h) - (h + 1.0) * nbar - h * mbar
    elif isinstance(tail, GhTail):
        per = _gh_tail_term(tail.lam, tail.omega, lbar, mbar, nbar)
    elif isinstance(tail, VgTail):
        g = tail.gamma
        per = g * math.log(g) - gammaln(g) + (g - 1.0) * nbar - g * lbar
    elif isinstance(tail, NigTail):
        per = (
            tail.kappa
            - 0.5 * _LOG_2PI
            - 1.5 * nbar
            - 0.5 * tail.kappa**2 * lbar
            - 0.5 * mbar
        )
    else:
        raise TypeError(f"not a skewed tail parameterization: {tail!r}")
    return t * per
