import math

import numpy as np
import pytest

from bosegas import spectral
from bosegas.errors import ConfigError, DomainError, ToleranceError
from bosegas.spectral import Geometry, heat_kernel, heat_trace, mp_fit, mp_reference, theta_1d

PI = math.pi


@pytest.mark.parametrize("text", ["torus:3", "box:2:dirichlet", "box:5:neumann", "torus:8"])
def test_geometry_round_trip(text):
    assert str(Geometry.parse(text)) == text


@pytest.mark.parametrize("text", ["torus", "box:3", "box:3:robin", "torus:0", "torus:9", "sphere:2", "torus:x"])
def test_geometry_rejects_bad_grammar(text):
    with pytest.raises(ConfigError):
        Geometry.parse(text)


def test_geometry_boundary_and_volume():
    assert Geometry.parse("torus:3").boundary_area == 0
    assert Geometry.parse("box:3:dirichlet").boundary_area == 6
    assert Geometry.parse("box:4:neumann").volume == 1


def test_theta_values():
    assert theta_1d(50.0, "periodic") == pytest.approx(1.0, abs=1e-15)
    d = theta_1d(0.1, "dirichlet")
    # five spectral terms by hand
    assert d == pytest.approx(sum(math.exp(-PI**2 * n * n * 0.1) for n in range(1, 6)), rel=1e-14)
    assert d == pytest.approx(0.39214306, abs=1e-8)
    assert theta_1d(0.1, "neumann") == pytest.approx(d + 1, rel=1e-15)
    p = 1 + 2 * math.exp(-4 * PI**2 * 0.1) + 2 * math.exp(-16 * PI**2 * 0.1)
    assert theta_1d(0.1, "periodic") == pytest.approx(p, rel=1e-12)
    assert theta_1d(0.1, "periodic") == pytest.approx(1.0385928, abs=1e-7)


@pytest.mark.parametrize("bc", spectral.BCS)
def test_theta_duality(bc):
    t = np.geomspace(1e-3, 10, 60)
    spec = theta_1d(t, bc, "spectral")
    if bc == "dirichlet":
        img = np.array([spectral.theta_image_mp(v, bc) for v in t])
    else:
        img = theta_1d(t, bc, "image")
    assert np.max(np.abs(spec / img - 1)) < 1e-12


def test_dirichlet_double_image_loses_accuracy_at_large_t():
    # documents why the duality check goes through extended precision
    assert abs(theta_1d(6.0, "dirichlet", "image") / theta_1d(6.0, "dirichlet", "spectral") - 1) > 1e-6


def test_theta_neumann_is_dirichlet_plus_one():
    t = np.geomspace(1e-4, 20, 50)
    assert np.allclose(theta_1d(t, "neumann"), theta_1d(t, "dirichlet") + 1, rtol=1e-14, atol=0)


@pytest.mark.parametrize("t", [0.0, -1.0, float("nan")])
def test_theta_domain(t):
    with pytest.raises(DomainError):
        theta_1d(t, "periodic")


def test_heat_trace_examples():
    assert heat_trace("torus:3", 100.0) == pytest.approx(1.0)
    assert heat_trace("box:3:dirichlet", 0.1) == pytest.approx(0.060303, abs=1e-6)
    for g in ("torus:3", "box:3:dirichlet", "box:2:neumann"):
        d = Geometry.parse(g).d
        assert heat_trace(g, 1e-7) * (4 * PI * 1e-7) ** (d / 2) == pytest.approx(1.0, abs=3e-3)


def test_heat_trace_matches_eigenvalue_sum_and_limits():
    for g in ("torus:2", "box:2:dirichlet", "box:3:neumann"):
        shells = spectral.eigenvalues(g, 400)
        t = 0.05
        direct = math.fsum(m * math.exp(-lam * t) for lam, m in shells)
        assert heat_trace(g, t) == pytest.approx(direct, rel=1e-12)
        assert np.all(np.diff(heat_trace(g, np.geomspace(1e-3, 1, 40))) < 0)
        # beyond t ~ 1 the excited modes drop below double resolution next to the zero mode
        assert np.all(np.diff(heat_trace(g, np.geomspace(1, 50, 40))) <= 0)
        assert heat_trace(g, 200.0) == pytest.approx(Geometry.parse(g).zero_modes, abs=1e-12)


def test_eigenvalue_examples():
    assert spectral.eigenvalues("torus:3", 1)[0].eigenvalue == 0
    assert spectral.eigenvalues("box:3:dirichlet", 1)[0].eigenvalue == pytest.approx(3 * PI**2)
    second = spectral.eigenvalues("torus:3", 2)[1]
    assert second.eigenvalue == pytest.approx(4 * PI**2)
    assert second.multiplicity == 6
    with pytest.raises(ConfigError):
        spectral.eigenvalues("torus:3", 0)


def _gl_grid(d, nodes=64):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = (x + 1) / 2, w / 2
    grids = np.meshgrid(*([x] * d), indexing="ij")
    weights = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0)
    return np.stack(grids, axis=-1), weights


@pytest.mark.parametrize("g", ["torus:2", "box:2:dirichlet", "box:2:neumann"])
def test_eigenmodes_orthonormal(g):
    pts, w = _gl_grid(2, 48)
    modes = spectral.eigenmodes(g, 8)
    vals = np.array([m(pts) for m in modes])
    gram = np.einsum("aij,bij,ij->ab", vals, vals, w)
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-10)
    lam = [m.eigenvalue for m in modes]
    assert lam == sorted(lam)


def test_ground_state_positive():
    phi = spectral.ground_state("box:3:dirichlet")
    pts = np.random.default_rng(0).uniform(0.01, 0.99, size=(500, 3))
    assert np.all(phi(pts) > 0)


def test_heat_kernel_torus1_duality_and_symmetry():
    a = heat_kernel("torus:1", 1.0, 0.05, [0.0], [0.0], method="spectral")
    b = heat_kernel("torus:1", 1.0, 0.05, [0.0], [0.0], method="image")
    assert a == pytest.approx(b, rel=1e-12)
    x, y = np.array([1.3, 2.0]), np.array([0.4, 3.1])
    for g in ("torus:2", "box:2:dirichlet", "box:2:neumann"):
        assert heat_kernel(g, 4.0, 0.7, x, y) == pytest.approx(heat_kernel(g, 4.0, 0.7, y, x), rel=1e-14)
        for t in (0.2, 3.0, 40.0):
            s = heat_kernel(g, 4.0, t, x, y, method="spectral")
            i = heat_kernel(g, 4.0, t, x, y, method="image")
            assert s == pytest.approx(i, rel=1e-12)


@pytest.mark.parametrize("g,conservative", [("torus:2", True), ("box:2:neumann", True), ("box:2:dirichlet", False)])
def test_heat_kernel_mass(g, conservative):
    L, t = 3.0, 0.8
    pts, w = _gl_grid(2, 64)
    x = np.array([1.0, 2.2])
    mass = float((heat_kernel(g, L, t, x, pts * L) * w).sum() * L**2)
    if conservative:
        assert mass == pytest.approx(1.0, abs=1e-8)
    else:
        assert 0 < mass < 1


def test_heat_kernel_generator_convention():
    # free Gaussian with variance 2t per axis far from the walls
    L, t = 100.0, 0.3
    x, y = np.array([50.0]), np.array([50.4])
    expected = math.exp(-0.16 / (4 * t)) / math.sqrt(4 * PI * t)
    assert heat_kernel("box:1:dirichlet", L, t, x, y) == pytest.approx(expected, rel=1e-12)


def test_heat_kernel_domain_errors():
    with pytest.raises(DomainError):
        heat_kernel("torus:2", 1.0, 0.1, [0.2, 1.5], [0.1, 0.1])
    with pytest.raises(DomainError):
        heat_kernel("torus:2", 1.0, 0.1, [0.2, 0.5, 0.1], [0.1, 0.1, 0.2])
    with pytest.raises(DomainError):
        heat_kernel("torus:2", 1.0, 0.0, [0.2, 0.5], [0.1, 0.1])


def test_mp_reference_examples():
    t = mp_reference("torus:3")
    assert (t.a0, t.a1, t.a2) == pytest.approx(((4 * PI) ** -1.5, 0, 0))
    assert t.a0 == pytest.approx(0.0224485, abs=2e-7)
    d = mp_reference("box:3:dirichlet")
    assert d.a1 == pytest.approx(-3 / (8 * PI)) and d.a1 == pytest.approx(-0.1193662, abs=1e-7)
    assert d.a2 == pytest.approx(0.75 * (4 * PI) ** -0.5) and d.a2 == pytest.approx(0.2115711, abs=1e-7)
    n = mp_reference("box:3:neumann")
    assert n.a1 == pytest.approx(3 / (8 * PI))


def test_mp_fit():
    assert abs(mp_fit("torus:3").a1) < 1e-6
    fit, ref = mp_fit("box:3:dirichlet"), mp_reference("box:3:dirichlet")
    assert fit.a1 == pytest.approx(ref.a1, abs=1e-3)
    assert fit.a2 == pytest.approx(ref.a2, abs=1e-2)
    for g in ("torus:3", "box:3:dirichlet", "box:2:neumann"):
        r = mp_reference(g)
        d = Geometry.parse(g).d
        poly = lambda t: r.a0 * t ** (-d / 2) + r.a1 * t ** (-(d - 1) / 2) + r.a2 * t ** (-(d - 2) / 2)  # noqa: E731
        exact = mp_fit(g, np.geomspace(1e-3, 0.5, 10), trace=poly)
        assert exact.residual < 1e-13
        assert (exact.a0, exact.a1, exact.a2) == pytest.approx((r.a0, r.a1, r.a2), rel=1e-9, abs=1e-12)


def test_mp_fit_rejects_bad_grids():
    with pytest.raises(ConfigError):
        mp_fit("torus:3", [1e-3, 1e-2, 0.1])
    with pytest.raises(ConfigError):
        mp_fit("torus:3", [1e-3, 1e-2, 0.1, 0.9])
    with pytest.raises(ToleranceError):
        mp_fit("torus:3", np.full(6, 1e-3) * (1 + 1e-15 * np.arange(6)))
