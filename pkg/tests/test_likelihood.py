import math

import numpy as np
import pytest

from geoaniso.covariance import AnisotropyParams, anisotropy_matrix, matern
from geoaniso.errors import DomainError
from geoaniso.grids import FieldGrid, GridDomain
from geoaniso.likelihood import (
    SearchConfig,
    aic,
    fit_ml,
    fit_ml_isotropic,
    log_likelihood,
    profile_loglik,
    profile_sigma2,
)
from geoaniso.simulate import simulate_grf

P = AnisotropyParams(math.pi / 4, 0.5, 2.0)


def bivariate(z1, z2, rho, s2):
    # Gaussian log density without the 2 pi term
    det = 1 - rho * rho
    q = (z1 * z1 - 2 * rho * z1 * z2 + z2 * z2) / det
    return -0.5 * (2 * math.log(s2) + math.log(det) + q / s2)


def test_single_site():
    ev = log_likelihood(([[1.0, 1.0]], [1.5]), AnisotropyParams(0.0, 1.0, 1.0, 2.0))
    assert ev.loglik == pytest.approx(-0.5 * (math.log(2.0) + 1.5**2 / 2.0), rel=1e-15)


def test_two_sites_closed_form():
    sites = [[1.0, 1.0], [3.0, 2.0]]
    p = AnisotropyParams(0.6, 0.3, 1.7, 1.4)
    ev = log_likelihood((sites, [0.8, -0.3]), p)
    om_d = math.sqrt(
        np.array([2.0, 1.0]) @ anisotropy_matrix(0.6, 0.3) @ np.array([2.0, 1.0])
    )
    rho = matern(om_d, 1.7)
    assert ev.loglik == pytest.approx(bivariate(0.8, -0.3, rho, 1.4), rel=1e-13)
    assert ev.cholesky_logdet == pytest.approx(math.log(1 - rho * rho), rel=1e-13)


def test_profile_sigma2_maximizes_over_grid():
    f = simulate_grf(GridDomain(6, 6), P, seed=1)
    s2 = profile_sigma2(f, P.triple)
    grid = s2 * np.linspace(0.5, 1.5, 201)
    lls = [log_likelihood(f, AnisotropyParams(*P.triple, g)).loglik for g in grid]
    assert grid[int(np.argmax(lls))] == pytest.approx(s2, rel=1e-12)
    assert profile_loglik(f, P.triple) == pytest.approx(log_likelihood(f, AnisotropyParams(*P.triple, s2)).loglik,
                                                        rel=1e-13)


def test_invariances():
    f = simulate_grf(GridDomain(5, 5), P, seed=2)
    sites, z = f.observed()
    ll = profile_loglik((sites, z), P.triple)
    perm = np.random.default_rng(0).permutation(len(z))
    assert profile_loglik((sites[perm], z[perm]), P.triple) == pytest.approx(ll, rel=1e-12)
    a, l, t = P.triple
    assert profile_loglik((sites, z), (a + math.pi, l, t)) == pytest.approx(ll, rel=1e-12)
    # scaling by c shifts the profile by -n log c
    assert profile_loglik((sites, 4.0 * z), P.triple) == pytest.approx(ll - 25 * math.log(4.0), rel=1e-12)
    # isotropy: alpha is irrelevant
    assert profile_loglik((sites, z), (0.3, 1.0, t)) == pytest.approx(profile_loglik((sites, z), (2.1, 1.0, t)),
                                                                      rel=1e-13)


def test_zero_data_warns():
    with pytest.warns(RuntimeWarning):
        assert profile_sigma2(FieldGrid(np.zeros((3, 3))), P.triple) == 0.0


def test_two_site_fit_hits_rho_grid_optimum():
    # the likelihood only depends on rho; a dense rho grid is the oracle
    z1, z2 = 1.0, 0.6
    sites = [[1.0, 1.0], [2.0, 1.0]]
    res = fit_ml((sites, [z1, z2]), search=SearchConfig(min_sites=2))
    rho = np.linspace(0.0, 0.999, 100_000)
    prof = -np.log((z1 * z1 - 2 * rho * z1 * z2 + z2 * z2) / (2 * (1 - rho * rho))) - 1 - 0.5 * np.log(1 - rho * rho)
    assert res.loglik >= prof.max() - 1e-6


def test_fit_recovers_strong_anisotropy():
    truth = AnisotropyParams(math.pi / 4, 0.25, 2.0)
    f = simulate_grf(GridDomain(), truth, seed=3)
    res = fit_ml(f)
    err = abs(res.params.alpha - truth.alpha)
    assert min(err, math.pi - err) < 0.3
    assert res.params.lam < 0.6
    assert res.n_params == 4 and res.aic == aic(res) == pytest.approx(8 - 2 * res.loglik)
    assert res.loglik == pytest.approx(profile_loglik(f, res.params.triple), rel=1e-12)


def test_fit_is_scale_equivariant():
    f = simulate_grf(GridDomain(8, 8), P, seed=4)
    a = fit_ml(f)
    b = fit_ml(FieldGrid(4.0 * f.values))
    np.testing.assert_allclose(b.params.triple, a.params.triple, rtol=1e-9, atol=1e-9)
    assert b.params.sigma2 == pytest.approx(16.0 * a.params.sigma2, rel=1e-9)


def test_isotropic_fit():
    f = simulate_grf(GridDomain(8, 8), AnisotropyParams(0.0, 1.0, 1.5), seed=5)
    iso = fit_ml_isotropic(f)
    ani = fit_ml(f)
    assert iso.params.lam == 1.0 and iso.n_params == 2
    assert ani.loglik >= iso.loglik - 1e-6
    assert iso.aic == pytest.approx(4 - 2 * iso.loglik)


def test_fit_errors():
    with pytest.raises(DomainError):
        fit_ml(FieldGrid(np.ones((2, 2))))
    with pytest.raises(DomainError):
        fit_ml(FieldGrid(np.zeros((4, 4))))
    with pytest.raises(DomainError):
        log_likelihood(([[0, 0], [1, 0]], [1.0]), P)


def test_fixed_variance_mode():
    truth = AnisotropyParams(1.0, 0.5, 2.0, 1.0)
    f = simulate_grf(GridDomain(8, 8), truth, seed=6)
    res = fit_ml(f, search=SearchConfig(fixed_sigma2=1.0))
    assert res.params.sigma2 == 1.0 and res.n_params == 3
    assert res.loglik == pytest.approx(log_likelihood(f, res.params).loglik, rel=1e-13)
    assert res.loglik >= log_likelihood(f, truth).loglik - 1e-9
    # the profile optimum can only be higher
    assert fit_ml(f).loglik >= res.loglik - 1e-9
    with pytest.raises(DomainError):
        fit_ml(f, search=SearchConfig(fixed_sigma2=0.0))
