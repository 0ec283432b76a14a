"""Exact Gaussian likelihood and maximum-likelihood fitting.

The log-likelihood (up to an additive constant) for data Z at sites s_i is

    l = -1/2 [ n log(sigma2) + log|R| + Z' (sigma2 R)^{-1} Z ]

Maximizing over sigma2 gives ``sigma2_hat = Z' R^{-1} Z / n`` and the profile

    l_p = -(n/2)(log sigma2_hat + 1) - 1/2 log|R|

which is what :func:`fit_ml` maximizes over (alpha, lambda, theta).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import minimize

from .covariance import AnisotropyParams, MaternSpec, SiteGeometry, canonical_alpha, cholesky_lower
from .errors import CholeskyError, DomainError
from .grids import FieldGrid

logger = logging.getLogger(__name__)

K_ANISOTROPIC = 4  # sigma2, alpha, lambda, theta
K_ISOTROPIC = 2  # sigma2, theta


@dataclass(frozen=True)
class LikelihoodEval:
    loglik: float
    sigma2_profile: float
    cholesky_logdet: float
    quad_form: float  # Z' R^{-1} Z
    n: int


@dataclass(frozen=True)
class MLResult:
    params: AnisotropyParams
    loglik: float
    aic: float
    converged: bool
    iterations: int
    restarts_used: int
    n_params: int
    evaluations: int = 0


@dataclass(frozen=True)
class SearchConfig:
    """Search box and Nelder-Mead controls.

    ``polish_starts`` bounds how many lattice starts get a full Nelder-Mead
    run; all 27 lattice points are scored first and the best ones polished.
    Set it to 27 to run every start.
    """

    lambda_bounds: tuple = (0.01, 1.0)
    theta_bounds: tuple = (0.01, 10.0)
    start_alphas: tuple = (math.pi / 6, math.pi / 2, 5 * math.pi / 6)
    start_lambdas: tuple = (0.2, 0.5, 0.8)
    start_thetas: tuple = (0.5, 2.0, 5.0)
    polish_starts: int = 3
    xatol: float = 1e-6
    fatol: float = 1e-9
    max_iter: int = 500
    isotropic_snap: float = 1e-4  # lambda_hat within this of 1 is reported as exactly 1
    min_sites: int = 10
    fixed_sigma2: float | None = None  # fit_ml only: known variance, full likelihood instead of the profile


def _as_data(data) -> tuple[SiteGeometry, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], SiteGeometry):
        return data
    if isinstance(data, FieldGrid):
        sites, z = data.observed()
    else:
        sites, z = data
    z = np.asarray(z, dtype=float).ravel()
    geom = SiteGeometry(sites)
    if len(z) != geom.n:
        raise DomainError("number of values does not match number of sites")
    if not np.all(np.isfinite(z)):
        raise DomainError("data contain non-finite values")
    return geom, z


def prepare(data) -> tuple[SiteGeometry, np.ndarray]:
    """Normalize a FieldGrid or ``(sites, values)`` pair for repeated evaluation."""
    return _as_data(data)


def _evaluate(geom: SiteGeometry, z: np.ndarray, alpha, lam, theta, spec) -> tuple[float, float]:
    R = geom.correlation(alpha, lam, theta, spec)
    L = cholesky_lower(R)
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    w, info = lapack.dtrtrs(L, z, lower=1)
    if info != 0:
        raise CholeskyError(f"triangular solve failed (info={info})")
    return logdet, float(w @ w)


def log_likelihood(data, params: AnisotropyParams, spec: MaternSpec = MaternSpec()) -> LikelihoodEval:
    geom, z = _as_data(data)
    logdet, quad = _evaluate(geom, z, params.alpha, params.lam, params.theta, spec)
    n = geom.n
    ll = -0.5 * (n * math.log(params.sigma2) + logdet + quad / params.sigma2)
    return LikelihoodEval(ll, quad / n, logdet, quad, n)


def profile_sigma2(data, corr_params, spec: MaternSpec = MaternSpec()) -> float:
    """sigma2_hat = Z' R^{-1} Z / n at fixed (alpha, lambda, theta)."""
    geom, z = _as_data(data)
    alpha, lam, theta = corr_params
    _, quad = _evaluate(geom, z, alpha, lam, theta, spec)
    s2 = quad / geom.n
    if s2 == 0.0:
        warnings.warn("all-zero data: profile variance is degenerate", RuntimeWarning, stacklevel=2)
    return s2


def profile_loglik(data, corr_params, spec: MaternSpec = MaternSpec()) -> float:
    geom, z = _as_data(data)
    alpha, lam, theta = corr_params
    logdet, quad = _evaluate(geom, z, alpha, lam, theta, spec)
    n = geom.n
    return -0.5 * n * (math.log(quad / n) + 1.0) - 0.5 * logdet


def aic(result: MLResult) -> float:
    return 2.0 * result.n_params - 2.0 * result.loglik


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


def _sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


class _Box:
    """Maps unconstrained coordinates onto the search box.

    lambda = lo + (hi - lo) * sigmoid(u); log theta likewise between the log bounds.
    """

    def __init__(self, cfg: SearchConfig):
        self.l_lo, self.l_hi = cfg.lambda_bounds
        self.t_lo, self.t_hi = math.log(cfg.theta_bounds[0]), math.log(cfg.theta_bounds[1])

    def lam(self, u: float) -> float:
        return self.l_lo + (self.l_hi - self.l_lo) * _sigmoid(u)

    def theta(self, v: float) -> float:
        return math.exp(self.t_lo + (self.t_hi - self.t_lo) * _sigmoid(v))

    def u_of(self, lam: float) -> float:
        return _logit((lam - self.l_lo) / (self.l_hi - self.l_lo))

    def v_of(self, theta: float) -> float:
        return _logit((math.log(theta) - self.t_lo) / (self.t_hi - self.t_lo))


def _profile_objective(geom, z, spec, corr_of, sigma2=None):
    n = geom.n
    counter = [0]

    def neg(x):
        counter[0] += 1
        alpha, lam, theta = corr_of(x)
        try:
            logdet, quad = _evaluate(geom, z, alpha, lam, theta, spec)
        except CholeskyError:
            return math.inf
        if sigma2 is not None:
            return 0.5 * (n * math.log(sigma2) + logdet + quad / sigma2)
        if quad <= 0.0:
            return math.inf
        return 0.5 * n * (math.log(quad / n) + 1.0) + 0.5 * logdet

    return neg, counter


def _multistart(neg, starts: list, cfg: SearchConfig):
    """Score every start, run Nelder-Mead from the best ``polish_starts``.

    Returns (best_x, best_value, converged, iterations, runs). Ties go to the
    lower lattice index.
    """
    scored = sorted(((neg(np.asarray(s, dtype=float)), i) for i, s in enumerate(starts)),
                    key=lambda t: (t[0], t[1]))
    chosen = sorted(i for _, i in scored[: max(1, cfg.polish_starts)])
    best = None
    for i in chosen:
        res = minimize(
            neg,
            np.asarray(starts[i], dtype=float),
            method="Nelder-Mead",
            options={"xatol": cfg.xatol, "fatol": cfg.fatol, "maxiter": cfg.max_iter,
                     "maxfev": 10 * cfg.max_iter},
        )
        cand = (float(res.fun), i, res)
        if math.isfinite(cand[0]) and (best is None or cand[0] < best[0]):
            best = cand
    if best is None:
        # all runs failed; fall back to the best lattice point
        val, i = scored[0]
        return np.asarray(starts[i], dtype=float), val, False, 0, len(chosen)
    val, _, res = best
    return res.x, val, bool(res.success), int(res.nit), len(chosen)


def fit_ml(data, spec: MaternSpec = MaternSpec(), search: SearchConfig = SearchConfig()) -> MLResult:
    """Maximize the profile likelihood over (alpha, lambda, theta).

    Data are rescaled to unit mean square internally (the profile likelihood is
    scale-equivariant) and sigma2 is mapped back afterwards.  With
    ``search.fixed_sigma2`` set, sigma2 is held at that value and the full
    likelihood is maximized over the three correlation parameters instead
    (k = 3).
    """
    geom, z = _as_data(data)
    if geom.n < search.min_sites:
        raise DomainError(f"need at least {search.min_sites} observed sites, got {geom.n}")
    scale = math.sqrt(float(np.mean(z * z)))
    if scale == 0.0:
        raise DomainError("all-zero data carry no information about the correlation")
    fixed = search.fixed_sigma2
    if fixed is not None and not (fixed > 0.0 and math.isfinite(fixed)):
        raise DomainError(f"fixed_sigma2 must be positive, got {fixed!r}")
    box = _Box(search)

    def corr_of(x):
        return canonical_alpha(float(x[0])), box.lam(float(x[1])), box.theta(float(x[2]))

    if fixed is None:
        neg, counter = _profile_objective(geom, z / scale, spec, corr_of)
    else:
        neg, counter = _profile_objective(geom, z, spec, corr_of, fixed)
    starts = [
        (a, box.u_of(l), box.v_of(t))
        for a in search.start_alphas for l in search.start_lambdas for t in search.start_thetas
    ]
    x, _, converged, nit, runs = _multistart(neg, starts, search)
    alpha, lam, theta = corr_of(x)
    if 1.0 - lam <= search.isotropic_snap:
        lam, alpha = 1.0, 0.0
    if fixed is not None:
        return _finish(geom, z, spec, alpha, lam, theta, K_ANISOTROPIC - 1, converged, nit, runs, counter[0], fixed)
    return _finish(geom, z, spec, alpha, lam, theta, K_ANISOTROPIC, converged, nit, runs, counter[0])


def fit_ml_isotropic(data, spec: MaternSpec = MaternSpec(), search: SearchConfig = SearchConfig()) -> MLResult:
    """Profile-likelihood fit with lambda fixed at 1 (k = 2)."""
    geom, z = _as_data(data)
    if geom.n < search.min_sites:
        raise DomainError(f"need at least {search.min_sites} observed sites, got {geom.n}")
    scale = math.sqrt(float(np.mean(z * z)))
    if scale == 0.0:
        raise DomainError("all-zero data carry no information about the correlation")
    box = _Box(search)

    def corr_of(x):
        return 0.0, 1.0, box.theta(float(x[0]))

    neg, counter = _profile_objective(geom, z / scale, spec, corr_of)
    starts = [(box.v_of(t),) for t in search.start_thetas]
    x, _, converged, nit, runs = _multistart(neg, starts, replace(search, polish_starts=len(starts)))
    return _finish(geom, z, spec, 0.0, 1.0, corr_of(x)[2], K_ISOTROPIC, converged, nit, runs, counter[0])


def _finish(geom, z, spec, alpha, lam, theta, k, converged, nit, runs, nfev, sigma2=None) -> MLResult:
    logdet, quad = _evaluate(geom, z, alpha, lam, theta, spec)
    n = geom.n
    if sigma2 is None:
        s2 = quad / n
        ll = -0.5 * n * (math.log(s2) + 1.0) - 0.5 * logdet
    else:
        s2 = sigma2
        ll = -0.5 * (n * math.log(s2) + logdet + quad / s2)
    params = AnisotropyParams(alpha, lam, theta, s2)
    return MLResult(params, ll, 2.0 * k - 2.0 * ll, converged, nit, runs, k, nfev)
