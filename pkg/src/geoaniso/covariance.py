"""Geometrically anisotropic Matérn covariance.

Correlation between two sites separated by lag ``h`` is

    phi(sqrt(h' Omega h); theta),   Omega = P(alpha)' diag(1, lambda) P(alpha)

with P the rotation [[cos, sin], [-sin, cos]] and phi the Matérn function
``2**(1-nu)/Gamma(nu) * x**nu * K_nu(x)`` evaluated at ``x = t/theta``.  The
scaling has no sqrt(2 nu) factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.linalg import lapack
from scipy.optimize import brentq

from .errors import CholeskyError, DomainError

HALF_INTEGER_TOL = 1e-12
JITTER = 1e-10


def canonical_alpha(alpha: float) -> float:
    """Reduce an angle into [0, pi); alpha and alpha + pi describe the same ellipse."""
    if not math.isfinite(alpha):
        raise DomainError(f"alpha must be finite, got {alpha!r}")
    a = math.fmod(alpha, math.pi)
    if a < 0.0:
        a += math.pi
    if a >= math.pi:  # fmod of a tiny negative can round up to pi
        a = 0.0
    return a


@dataclass(frozen=True)
class AnisotropyParams:
    """Covariance parameters (alpha, lambda, theta, sigma2).

    ``alpha`` is canonicalized into [0, pi) on construction.  ``lam`` is the
    anisotropy ratio in (0, 1]; ``lam == 1`` is isotropy.
    """

    alpha: float
    lam: float
    theta: float
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", canonical_alpha(float(self.alpha)))
        lam, theta, sigma2 = float(self.lam), float(self.theta), float(self.sigma2)
        if not (0.0 < lam <= 1.0):
            raise DomainError(f"lambda must lie in (0, 1], got {lam!r}")
        if not (theta > 0.0 and math.isfinite(theta)):
            raise DomainError(f"theta must be positive, got {theta!r}")
        if not (sigma2 > 0.0 and math.isfinite(sigma2)):
            raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.alpha, self.lam, self.theta)


@dataclass(frozen=True)
class MaternSpec:
    nu: float = 1.5

    def __post_init__(self):
        nu = float(self.nu)
        if not (nu > 0.0 and math.isfinite(nu)):
            raise DomainError(f"nu must be positive, got {nu!r}")
        object.__setattr__(self, "nu", nu)

    @property
    def half_integer_order(self) -> int | None:
        """``m`` when ``nu == m + 1/2`` (within 1e-12), else None."""
        m = self.nu - 0.5
        r = round(m)
        if r >= 0 and abs(m - r) <= HALF_INTEGER_TOL:
            return int(r)
        return None


def anisotropy_matrix(alpha: float, lam: float) -> np.ndarray:
    """Return Omega = P(alpha)^T D(lam) P(alpha) as a 2x2 array.

    Entries are written out in closed form so the result is exactly symmetric.
    """
    if not (0.0 < lam <= 1.0):
        raise DomainError(f"lambda must lie in (0, 1], got {lam!r}")
    a = canonical_alpha(alpha)
    c, s = math.cos(a), math.sin(a)
    off = (1.0 - lam) * c * s
    return np.array([[c * c + lam * s * s, off], [off, s * s + lam * c * c]])


def aniso_distance(h, omega: np.ndarray) -> np.ndarray | float:
    """sqrt(h^T Omega h) for one lag or an array of lags with trailing axis 2."""
    h = np.asarray(h, dtype=float)
    hx, hy = h[..., 0], h[..., 1]
    q = omega[0, 0] * hx * hx + 2.0 * omega[0, 1] * hx * hy + omega[1, 1] * hy * hy
    # guard tiny negative round-off
    d = np.sqrt(np.maximum(q, 0.0))
    return float(d) if d.ndim == 0 else d


@lru_cache(maxsize=32)
def _half_integer_coefficients(m: int) -> tuple[float, ...]:
    # phi(x) = exp(-x) * sum_k c_k x**k,
    # c_k = m!/(2m)! * (2m-k)! / ((m-k)! k!) * 2**k
    f = math.factorial
    scale = f(m) / f(2 * m)
    return tuple(scale * f(2 * m - k) / (f(m - k) * f(k)) * 2.0**k for k in range(m + 1))


def matern_closed_form(t, theta: float, m: int) -> np.ndarray:
    """Matérn correlation for nu = m + 1/2 as exponential times polynomial."""
    x = np.asarray(t, dtype=float) / theta
    coeffs = _half_integer_coefficients(m)
    poly = np.full_like(x, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        poly = poly * x + c
    return np.where(x == 0.0, 1.0, poly * np.exp(-x))


def matern_bessel(t, theta: float, nu: float) -> np.ndarray:
    """Matérn correlation through the modified Bessel function K_nu.

    Evaluated in log space with the exponentially scaled ``kve`` so large
    arguments underflow gracefully; ``t == 0`` returns exactly 1.
    """
    x = np.asarray(t, dtype=float) / theta
    out = np.ones_like(x)
    pos = x > 0.0
    xp = x[pos]
    with np.errstate(divide="ignore"):
        log_phi = (
            (1.0 - nu) * math.log(2.0)
            - special.gammaln(nu)
            + nu * np.log(xp)
            + np.log(special.kve(nu, xp))
            - xp
        )
    out[pos] = np.exp(log_phi)
    return out


def matern(t, theta: float, nu: float = 1.5):
    """Matérn correlation phi(t; theta) with smoothness nu.

    Uses the closed form when nu is a half integer, the Bessel route otherwise.
    Accepts scalars or arrays; returns the same kind.
    """
    if not (theta > 0.0):
        raise DomainError(f"theta must be positive, got {theta!r}")
    spec = MaternSpec(nu)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise DomainError("distance must be nonnegative")
    m = spec.half_integer_order
    if m is not None:
        out = matern_closed_form(t_arr, theta, m)
    else:
        out = matern_bessel(t_arr, theta, spec.nu)
    return float(out) if out.ndim == 0 else out


def practical_range(theta: float, nu: float = 1.5, level: float = 0.05) -> float:
    """Distance at which the correlation drops to ``level``."""
    hi = theta
    while matern(hi, theta, nu) > level:
        hi *= 2.0
    return brentq(lambda t: matern(t, theta, nu) - level, 0.0, hi, xtol=1e-14 * theta, rtol=1e-14)


def covariance(h, params: AnisotropyParams, spec: MaternSpec = MaternSpec()):
    omega = anisotropy_matrix(params.alpha, params.lam)
    return params.sigma2 * matern(aniso_distance(h, omega), params.theta, spec.nu)


class SiteGeometry:
    """Site layout with its distinct pairwise lag vectors precomputed.

    Building R reduces to evaluating the correlation on the unique lags and
    scattering them through an index array.  On a lattice there are only
    (2w-1)(2h-1) distinct lags.
    """

    def __init__(self, sites):
        sites = np.asarray(sites, dtype=float).reshape(-1, 2)
        n = len(sites)
        if n == 0:
            raise DomainError("no sites")
        if len(np.unique(sites, axis=0)) != n:
            raise DomainError("sites must be distinct")
        self.sites = sites
        self.n = n
        diff = (sites[:, None, :] - sites[None, :, :]).reshape(-1, 2)
        self.lags, inverse = np.unique(diff, axis=0, return_inverse=True)
        self.index = inverse.reshape(n, n)

    def correlation(self, alpha: float, lam: float, theta: float, spec: MaternSpec) -> np.ndarray:
        # q(h) == q(-h) bitwise and phi(0) == 1, so R is exactly symmetric with unit diagonal
        omega = anisotropy_matrix(alpha, lam)
        phi = np.asarray(matern(aniso_distance(self.lags, omega), theta, spec.nu))
        return np.take(phi, self.index)


def correlation_matrix(sites, params: AnisotropyParams, spec: MaternSpec = MaternSpec()) -> np.ndarray:
    """Correlation matrix R over distinct ``sites`` (shape (n, 2)); sigma2 is ignored."""
    geom = sites if isinstance(sites, SiteGeometry) else SiteGeometry(sites)
    return geom.correlation(params.alpha, params.lam, params.theta, spec)


def cholesky_lower(C: np.ndarray, jitter_scale: float = 1.0) -> np.ndarray:
    """Lower Cholesky factor of C; one retry with ``1e-10 * jitter_scale`` on the diagonal."""
    L, info = lapack.dpotrf(C, lower=1, clean=1, overwrite_a=0)
    if info == 0:
        return L
    C2 = C + JITTER * jitter_scale * np.eye(C.shape[0])
    L, info = lapack.dpotrf(C2, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        raise CholeskyError(f"matrix not positive definite after jitter (dpotrf info={info})")
    return L
