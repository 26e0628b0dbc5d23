import math

import numpy as np
import pytest
from scipy import integrate, stats

from bosegas import spectral
from bosegas.errors import ConfigError, DomainError, UnsupportedError
from bosegas.limitlaws import (
    GOLOMB_DICKMAN,
    SpectralMeasure,
    chi_zeta,
    dickman,
    dickman_cf_oracle,
    dickman_laplace,
    dickman_laplace_numeric,
    dickman_rho,
    fit_stable,
    fredholm_cf,
    fredholm_log_cf,
    gaussian_density,
    gem_sticks,
    local_profiles,
    pd1_largest_cdf,
    pd1_ranked_mean,
    pd1_reference,
    spectral_measure,
    variance_candidates,
)
from bosegas.weights import EULER_GAMMA


@pytest.fixture(scope="module")
def dirichlet():
    return spectral_measure("box:3:dirichlet")


def _single(lam):
    g = spectral.parse_geometry("box:3:dirichlet")
    return SpectralMeasure(g, np.array([lam]), np.array([1.0]), np.zeros(13))


def test_cf_at_zero(dirichlet):
    assert fredholm_cf(dirichlet, 0.0) == 1.0


def test_single_eigenvalue_cf():
    lam = 2.7
    t = np.linspace(-20, 20, 41)
    expected = np.exp(-1j * t / lam) / (1 - 1j * t / lam)
    np.testing.assert_allclose(fredholm_cf(_single(lam), t), expected, rtol=1e-14)


def test_cf_modulus(dirichlet):
    sm = _single(5.0)
    sm2 = SpectralMeasure(sm.geometry, np.array([5.0, 9.0]), np.array([2.0, 1.0]), np.zeros(13))
    t = np.linspace(0, 30, 31)
    expected = (1 + t**2 / 25) ** -1.0 * (1 + t**2 / 81) ** -0.5
    np.testing.assert_allclose(np.abs(fredholm_cf(sm2, t)), expected, rtol=1e-13)
    psi = fredholm_cf(dirichlet, t)
    assert np.all(np.abs(psi) <= 1)


def test_cf_hermitian(dirichlet):
    t = np.linspace(0.1, 40, 50)
    np.testing.assert_allclose(fredholm_cf(dirichlet, -t), np.conj(fredholm_cf(dirichlet, t)), rtol=1e-13)


def test_dirichlet_variance(dirichlet):
    # sum lambda^-2 = int_0^inf t Tr e^{t Delta} dt
    g = dirichlet.geometry
    f = lambda t: t * float(spectral.heat_trace(g, t))  # noqa: E731
    v = integrate.quad(f, 0, 1, limit=200, epsrel=1e-12)[0] + integrate.quad(f, 1, np.inf, epsrel=1e-12)[0]
    assert dirichlet.variance == pytest.approx(v, rel=1e-6)
    # second derivative of log psi at zero
    h = 1e-3
    second = (fredholm_log_cf(dirichlet, h) + fredholm_log_cf(dirichlet, -h) - 2 * fredholm_log_cf(dirichlet, 0.0)) / h**2
    assert -second.real == pytest.approx(v, rel=1e-3)


def test_zero_mode_and_high_dimension_rejected():
    with pytest.raises(UnsupportedError):
        spectral_measure("torus:3")
    with pytest.raises(UnsupportedError):
        spectral_measure("box:4:dirichlet")


@pytest.fixture(scope="module")
def chi(dirichlet):
    return chi_zeta(dirichlet)


def test_chi_zeta_cdf_monotone(chi):
    F = chi.table.value
    assert np.all(np.diff(F) >= -1e-12)
    assert F[0] < 1e-6 and F[-1] > 1 - 1e-6
    assert chi.table.meta["quad_change"] <= 1e-8


def test_chi_zeta_mean_zero(chi):
    x, F = chi.table.x, chi.table.value
    # E[X] = int_0^inf (1 - F) - int_-inf^0 F; x = 0 is a grid node
    z = int(np.argmin(np.abs(x)))
    assert x[z] == pytest.approx(0, abs=1e-15)
    mean = np.trapezoid(1 - F[z:], x[z:]) - np.trapezoid(F[:z + 1], x[:z + 1])
    assert abs(mean) < 1e-4 * math.sqrt(chi.measure.variance)


def test_sampler_matches_cdf(chi):
    rng = np.random.default_rng(0)
    xs = chi.sample(20_000, rng)
    assert abs(xs.mean()) < 4 * math.sqrt(chi.measure.variance / 20_000)
    assert stats.kstest(xs, lambda v: chi.cdf(v)).pvalue > 0.01


def test_dickman_closed_forms():
    assert dickman_rho(2.0) == pytest.approx(1 - math.log(2), abs=1e-10)
    assert dickman_rho(0.5) == 1.0
    rho, p1 = dickman(np.array([0.0, 0.3, 1.0]))
    np.testing.assert_allclose(p1, math.exp(-EULER_GAMMA))
    assert round(math.exp(-EULER_GAMMA), 7) == 0.5614595
    y = np.linspace(0, 10, 501)
    assert np.all(np.diff(dickman_rho(y)) <= 0)


def test_dickman_normalised():
    total = math.fsum(integrate.quad(lambda y: dickman(y)[1], k, k + 1, epsabs=1e-15, epsrel=1e-13)[0]
                      for k in range(30))
    assert total == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_dickman_laplace(s):
    assert dickman_laplace_numeric(s) == pytest.approx(float(dickman_laplace(s)), abs=1e-6)


@pytest.mark.parametrize("y", [0.5, 1.5, 2.5])
def test_dickman_cf_oracle(y):
    assert dickman_cf_oracle(y) == pytest.approx(float(dickman(y)[1]), abs=1e-6)


def test_dickman_domain():
    with pytest.raises(DomainError):
        dickman_rho(-0.1)
    with pytest.raises(DomainError):
        dickman_rho(31.0)


def test_pd1_exact_means():
    assert pd1_ranked_mean(1) == pytest.approx(GOLOMB_DICKMAN, abs=1e-10)
    m = [pd1_ranked_mean(r) for r in (1, 2, 3)]
    assert m[0] > m[1] > m[2] > 0


def test_gem_sticks():
    u = np.random.default_rng(0).random((50_000, 40))
    pieces = gem_sticks(u)
    np.testing.assert_allclose(pieces.sum(axis=1), 1.0, atol=1e-9)
    assert pieces[:, 0].mean() == pytest.approx(0.5, abs=0.01)


def test_pd1_reference_small():
    ref = pd1_reference(log2_samples=18)
    assert ref.means[0] == pytest.approx(GOLOMB_DICKMAN, abs=5e-4)
    assert ref.means[0] > ref.means[1] > ref.means[2]
    np.testing.assert_allclose(ref.largest_cdf, pd1_largest_cdf(ref.x), atol=5e-3)


def test_pd1_largest_cdf_shape():
    x = np.linspace(0, 1, 101)
    F = pd1_largest_cdf(x)
    assert F[0] == 0 and F[-1] == 1
    assert np.all(np.diff(F) >= -1e-15)
    assert pd1_largest_cdf(0.5) == pytest.approx(1 - math.log(2), abs=1e-10)


def test_gaussian_profiles_normalised():
    profiles = local_profiles("gaussian_tilted_d3", x=np.linspace(-40, 40, 8001), r=1.5)
    for table in profiles.values():
        assert np.trapezoid(table.value, table.x) == pytest.approx(1.0, abs=1e-10)
    assert gaussian_density(0.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_variance_candidates():
    c = variance_candidates("gaussian_tilted_d3", r=2.0)
    assert c["stated"] * c["from_proof"] == pytest.approx(1.0)
    c4 = variance_candidates("gaussian_d_ge4", d=4)
    assert c4["from_proof"] == pytest.approx(2 / (4 * math.pi) ** 2)
    with pytest.raises(ConfigError):
        variance_candidates("gaussian_tilted_d3")
    with pytest.raises(ConfigError):
        variance_candidates("gaussian_d_ge4", d=3)
    with pytest.raises(ConfigError):
        local_profiles("cauchy")


def test_stable_fit_recovers_index():
    t = np.geomspace(0.1, 3, 20)
    fit = fit_stable(t, -0.7 * t**1.5)
    assert fit.index == pytest.approx(1.5, abs=1e-12)
    assert fit.constant == pytest.approx(0.7, rel=1e-12)
    assert local_profiles("stable_3_2")["index"] == 1.5
