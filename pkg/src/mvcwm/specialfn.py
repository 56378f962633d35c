"""Logarithmic Bessel-K evaluation, digamma, and SPD matrix factorization.

These are the numerical kernels everything else sits on.  All Bessel work
is done on ``log K_nu(x)`` directly so that densities and moment ratios can
be formed for arguments from ~1e-300 up to ~1e300 and orders up to ~1e3
without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf

__all__ = [
    "log_bessel_k",
    "dlog_bessel_k_dorder",
    "digamma",
    "SpdFactor",
    "spd_factorize",
    "NotPositiveDefiniteError",
]

_EULER_GAMMA = 0.5772156649015328606

# Below this argument the direct kve() route is abandoned for the explicit
# small-argument series, which stays exact where kve() would overflow.
_SMALL_ARG = 1e-8

# Above this argument kve() is abandoned for the exponential asymptotic
# series: scipy's kve (AMOS) silently returns NaN once the argument passes
# ~1e9, long before the series loses even one digit.
_LARGE_ARG = 1e8


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be SPD fails its Cholesky factorization.

    Attributes
    ----------
    pivot : int
        0-based index of the leading minor that is not positive definite.
    """

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


def _log_k_small_arg(order, arg):
    """log K_nu(x) for x -> 0 via the ascending series, elementwise.

    For ``nu >= 1`` the single dominant term ``Gamma(nu)/2 * (2/x)^nu`` is
    accurate to O(x^2); for fractional ``nu`` in (0, 1) both series branches
    are kept because ``(x/2)^{2 nu}`` need not be negligible.
    """
    nu = abs(order)
    arg = np.asarray(arg, dtype=float)
    if nu < 1e-12:
        # K_0(x) ~ -log(x/2) - euler_gamma
        return np.log(-np.log(arg / 2.0) - _EULER_GAMMA)
    if nu < 1.0 and abs(nu - round(nu)) > 1e-12:
        # K_nu = pi/(2 sin(pi nu)) * [ (x/2)^-nu / Gamma(1-nu) - (x/2)^nu / Gamma(1+nu) ]
        la = -special.gammaln(1.0 - nu) - nu * np.log(arg / 2.0)
        lb = -special.gammaln(1.0 + nu) + nu * np.log(arg / 2.0)
        head = math.log(math.pi / (2.0 * math.sin(math.pi * nu)))
        return head + la + np.log1p(-np.exp(lb - la))
    return math.log(0.5) + special.gammaln(nu) + nu * (math.log(2.0) - np.log(arg))


def _log_k_large_arg(nu, arg):
    """log K_nu(x) for large x via the exponential asymptotic expansion.

    K_nu(x) = sqrt(pi/(2x)) e^{-x} [1 + sum_k a_k(nu) / x^k] with
    a_k(nu) = prod_{j<=k} (4 nu^2 - (2j-1)^2) / (k! 8^k).  Eight terms give
    full double precision whenever x >= max(1e8, 100 nu^2); the ratio of
    consecutive terms is then below ~5e-3 and shrinks factorially.
    """
    arg = np.asarray(arg, dtype=float)
    four_nu2 = 4.0 * nu * nu
    term = np.ones_like(arg)
    total = np.ones_like(arg)
    for k in range(1, 9):
        term = term * (four_nu2 - (2.0 * k - 1.0) ** 2) / (8.0 * arg * k)
        total = total + term
    head = 0.5 * (math.log(math.pi / 2.0) - np.log(arg))
    return head - arg + np.log(np.maximum(total, 1e-300))


def _log_k_base(base, arg):
    """log K_base(x) for a base order in [0, 2), any positive argument."""
    arg = np.asarray(arg, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.log(special.kve(base, arg)) - arg
    bad = ~np.isfinite(out)
    if np.any(bad):
        out[bad] = _log_k_large_arg(base, arg[bad])
    return out


def _log_k_recurrence(nu, arg):
    """log K_nu(x) by stable upward recurrence from a fractional base order.

    K_{s+1}(x) = K_{s-1}(x) + (2 s / x) K_s(x) with every term positive, so
    the forward direction is the dominant (stable) one.  Used where kve()
    overflows, i.e. large order with small-to-moderate argument.
    """
    arg = np.asarray(arg, dtype=float)
    base = nu - math.floor(nu)
    lk_prev = _log_k_base(base, arg)
    lk_cur = _log_k_base(base + 1.0, arg)
    s = base + 1.0
    while s < nu - 0.5:
        lk_prev, lk_cur = lk_cur, np.logaddexp(math.log(2.0 * s) - np.log(arg) + lk_cur, lk_prev)
        s += 1.0
    return lk_cur


def log_bessel_k(order, arg):
    """log of the modified Bessel function of the second kind, K_order(arg).

    Parameters
    ----------
    order : float or ndarray
        Real order(s); K is even in the order, so the sign is irrelevant.
    arg : float or ndarray
        Strictly positive argument(s).  Broadcast against ``order``.

    Returns
    -------
    float or ndarray
        ``log K_order(arg)``, finite for arguments up to ~1e4 (and far
        beyond) and absolute orders up to ~1e3.

    Notes
    -----
    Four regimes: ascending series for tiny arguments, the exponential
    asymptotic series for large arguments (scipy's kve returns NaN beyond
    ~1e9), the exponentially scaled routine ``scipy.special.kve`` in
    between, and a log-space forward recurrence from a fractional base
    order where kve overflows (large order, small argument).
    """
    order_in = np.asarray(order, dtype=float)
    arg_in = np.asarray(arg, dtype=float)
    scalar = order_in.ndim == 0 and arg_in.ndim == 0
    shape = np.broadcast_shapes(order_in.shape, arg_in.shape)
    nu = np.abs(np.broadcast_to(order_in, shape)).ravel()
    arr = np.broadcast_to(arg_in, shape).ravel()
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("log_bessel_k requires a strictly positive finite argument")

    out = np.empty_like(arr)
    small = arr < _SMALL_ARG
    if np.any(small):
        res = np.empty(int(np.count_nonzero(small)))
        nus, args_small = nu[small], arr[small]
        for v in np.unique(nus):
            mask = nus == v
            res[mask] = _log_k_small_arg(float(v), args_small[mask])
        out[small] = res
    large = ~small & (arr >= _LARGE_ARG) & (arr >= 100.0 * nu * nu)
    if np.any(large):
        res = np.empty(int(np.count_nonzero(large)))
        nus, args_large = nu[large], arr[large]
        for v in np.unique(nus):
            mask = nus == v
            res[mask] = _log_k_large_arg(float(v), args_large[mask])
        out[large] = res
    rest = ~small & ~large
    if np.any(rest):
        with np.errstate(over="ignore", invalid="ignore"):
            kv = special.kve(nu[rest], arr[rest])
        direct = np.log(kv) - arr[rest]
        bad = ~np.isfinite(direct)
        if np.any(bad):
            fix = np.empty(int(np.count_nonzero(bad)))
            nub, argb = nu[rest][bad], arr[rest][bad]
            for v in np.unique(nub):
                mask = nub == v
                fix[mask] = _log_k_recurrence(float(v), argb[mask])
            direct[bad] = fix
        out[rest] = direct
    out = out.reshape(shape)
    return float(out) if scalar else out


def dlog_bessel_k_dorder(order, arg):
    """Partial derivative of log K_nu(x) with respect to the order nu.

    Central differences in the order with one Richardson extrapolation
    level; step ``h = max(1e-5, 1e-7 |order|)``.  Exactly zero at
    ``order == 0`` by the evenness of K in its order.
    """
    nu = float(order)
    h = max(1e-5, 1e-7 * abs(nu))

    def central(step):
        return (log_bessel_k(nu + step, arg) - log_bessel_k(nu - step, arg)) / (2.0 * step)

    d1 = central(h)
    d2 = central(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def digamma(x):
    """Digamma (psi) function restricted to the positive half-line.

    Thin wrapper over ``scipy.special.psi`` that rejects non-positive
    inputs instead of following the reflection formula, since every caller
    here works with positive shape parameters.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError("digamma requires strictly positive input")
    return special.psi(x)


@dataclass(frozen=True)
class SpdFactor:
    """Cholesky factorization of a symmetric positive definite matrix.

    Carries the lower Cholesky factor and log-determinant so repeated
    solves and density evaluations never form an explicit inverse.
    """

    matrix: np.ndarray
    chol: np.ndarray
    logdet: float
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.matrix.shape[0])

    def solve(self, b):
        """Solve ``A x = b`` via two triangular solves."""
        y = solve_triangular(self.chol, b, lower=True)
        return solve_triangular(self.chol, y, lower=True, trans="T")

    def half_solve(self, b):
        """Return ``L^{-1} b`` where ``A = L L'`` (whitening transform)."""
        return solve_triangular(self.chol, b, lower=True)

    def inv(self):
        """Explicit inverse; only for contexts where a dense matrix is required."""
        return self.solve(np.eye(self.dim))


def spd_factorize(matrix, name="matrix"):
    """Factorize an SPD matrix, raising a pivot-aware error on failure.

    Parameters
    ----------
    matrix : ndarray of shape (d, d)
        Matrix expected to be symmetric positive definite.
    name : str
        Label used in the error message.

    Returns
    -------
    SpdFactor

    Raises
    ------
    NotPositiveDefiniteError
        If a leading minor is not positive definite; ``pivot`` gives its
        0-based index.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    c, info = dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (leading minor {info - 1})", pivot=info - 1
        )
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of Cholesky factorization")
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return SpdFactor(matrix=a, chol=c, logdet=logdet)
