import math

import numpy as np
import pytest
from scipy.special import zeta

from bosegas.errors import ConfigError, InfeasibleError, UnsupportedError
from bosegas.spectral import mp_reference
from bosegas.weights import (ModelParams, WeightTable, build_weights, critical_density, density_and_pressure,
                             expected_particles, log_sum, mu_from_tilt_parameter, predicted_asymptotics, solve_mu,
                             tilt_parameter)

PI = math.pi


def test_critical_density():
    assert critical_density(3) == pytest.approx((4 * PI) ** -1.5 * zeta(1.5), rel=1e-14)
    assert critical_density(3, 2.0) == pytest.approx(critical_density(3) * 2**-1.5, rel=1e-14)
    assert critical_density(2) == math.inf


def test_model_params_validation_and_floor():
    p = ModelParams("torus:3", 10)
    assert p.n_particles == math.floor(p.rho_c * 1000)
    assert p.N == p.n_particles
    assert ModelParams("torus:3", 10, rho=0.5).n_particles == 500
    for bad in (dict(L=0.5), dict(beta=0), dict(rho=-1), dict(rho="hot"), dict(n_cut=0)):
        kwargs = dict(geometry="torus:3", L=10) | bad
        with pytest.raises(ConfigError):
            ModelParams(**kwargs)
    with pytest.raises(ConfigError):
        ModelParams("torus:2", 10)


def test_weight_examples():
    w = build_weights(ModelParams("torus:3", 10))
    assert w.t[0] == pytest.approx(22.4485, abs=2e-4)
    assert w.t[0] == pytest.approx((4 * PI * 0.01) ** -1.5, rel=1e-10)
    assert np.all(np.diff(w.t) < 0)


def test_torus_weights_approach_one():
    L = 8
    w = build_weights(ModelParams("torus:3", L, n_cut=2000))
    x = w.j / L**2
    late = x > 1
    bound = 10 * np.exp(-4 * PI**2 * x[late])  # below double resolution once x > 1
    assert np.all(w.t[late] >= 1)
    assert np.all(w.t[late] <= 1 + bound + np.finfo(float).eps)
    assert np.all(w.t[x < 0.8] > 1)  # excess near 6e^{-4 pi^2 x} is still resolvable here


def test_dirichlet_weights_follow_first_eigenvalue():
    L = 8
    w = build_weights(ModelParams("box:3:dirichlet", L, n_cut=400))
    j = w.j[w.j > 3 * L**2]
    ratio = w.t[w.j > 3 * L**2] / np.exp(-3 * PI**2 * j / L**2)
    assert np.all(np.abs(ratio - 1) < 1e-6)


@pytest.mark.parametrize("g", ["box:3:dirichlet", "box:3:neumann", "torus:3"])
def test_weight_expansion_remainder(g):
    # |t_j - a0 L^3 j^{-3/2} - a1 L^2 j^{-1}| <= C L j^{-1/2} for j <= L^2 / log L, C frozen at 0.6
    mp = mp_reference(g)
    for L in (16, 32, 64):
        j_max = int(L**2 / math.log(L))
        w = build_weights(ModelParams(g, L, n_cut=j_max))
        j = w.j
        rem = np.abs(w.t - mp.a0 * L**3 * j**-1.5 - mp.a1 * L**2 / j)
        assert np.all(rem <= 0.6 * L * j**-0.5)


def test_expected_particles_basics():
    w = build_weights(ModelParams("torus:3", 12))
    assert expected_particles(w, 0) == 0
    assert expected_particles(w) == pytest.approx(w.t.sum(), rel=1e-13)
    with pytest.raises(ConfigError):
        expected_particles(w, w.N + 1)


def test_expected_short_loops_dirichlet_bounded():
    a1 = mp_reference("box:3:dirichlet").a1
    vals = []
    for L in (8, 16, 32, 64):
        p = ModelParams("box:3:dirichlet", L, n_cut=L * L)
        e = expected_particles(build_weights(p))
        vals.append((e - p.rho_c * L**3 - 2 * a1 * L**2 * math.log(L)) / L**2)
    assert max(map(abs, vals)) < 1.0


def test_expected_short_loops_torus_converges():
    vals = []
    for L in (16, 32, 64, 128):
        p = ModelParams("torus:3", L, n_cut=L * L)
        vals.append((expected_particles(build_weights(p)) - p.rho_c * L**3) / L**2)
    steps = np.abs(np.diff(vals))
    assert np.all(np.diff(steps) < 0) and steps[-1] < 1e-3


def test_density_and_pressure():
    w = build_weights(ModelParams("box:3:neumann", 10))
    rho, pres = density_and_pressure(w)
    assert pres == pytest.approx(math.fsum(w.t / w.j), rel=1e-15)
    assert rho == pytest.approx(math.fsum(w.t), rel=1e-15)
    r2, p2 = density_and_pressure(w.with_mu(-800.0))
    assert r2 < 1e-300 and p2 < 1e-300
    mus = -np.geomspace(1e-5, 1, 30)
    dens = [density_and_pressure(w.with_mu(m))[0] for m in mus]
    assert np.all(np.diff(dens) < 0)
    assert np.all(w.with_mu(-0.1).tilted < w.t)


def test_positive_mu_rejected():
    with pytest.raises(ConfigError):
        build_weights(ModelParams("torus:3", 8), mu=0.1)


def test_density_shift_neumann_trends_to_one():
    # loops cut at L^2: the zero mode would otherwise add about N to rho(0)
    ratios = []
    for L in (16, 64, 256, 512):
        p = ModelParams("box:3:neumann", L, n_cut=L * L)
        w = build_weights(p)
        mu = mu_from_tilt_parameter(p, 3.0)
        drop = density_and_pressure(w)[0] - density_and_pressure(w.with_mu(mu))[0]
        ratios.append(drop * 4 * PI * p.beta / (3.0 * L**2 * math.log(L)))
    assert np.all(np.diff(ratios) < 0) and ratios[-1] > 1


def test_solve_mu_round_trip_and_edges():
    p = ModelParams("box:3:dirichlet", 12)
    w = build_weights(p)
    mu_star = -0.037
    target = density_and_pressure(w.with_mu(mu_star))[0]
    s = solve_mu(p, target, w)
    assert s.mu == pytest.approx(mu_star, rel=1e-9)
    assert s.achieved == pytest.approx(target, rel=1e-10)
    t = ModelParams("torus:3", 12)
    wt = build_weights(t)
    assert solve_mu(t, math.fsum(wt.t), wt).mu == 0
    with pytest.raises(InfeasibleError):
        solve_mu(p, 2 * math.fsum(w.t), w)


def test_tilt_parameter_round_trip():
    for g, L in (("box:3:neumann", 20), ("box:4:dirichlet", 12), ("box:5:dirichlet", 6)):
        p = ModelParams(g, L)
        assert tilt_parameter(p, mu_from_tilt_parameter(p, 1.7)) == pytest.approx(1.7, rel=1e-14)


def test_neumann_tilt_parameter_rises_toward_three():
    rs = []
    for L in (32, 128, 512):
        p = ModelParams("box:3:neumann", L, n_cut=L * L)
        rs.append(solve_mu(p, p.rho_c * L**3).r)
    assert np.all(np.diff(rs) > 0) and rs[-1] < 3


def test_predictions():
    assert predicted_asymptotics(ModelParams("torus:3", 8), "partition_exponent_d3").value == -3
    v = predicted_asymptotics(ModelParams("box:3:dirichlet", 8), "partition_exponent_d3").value
    assert v == pytest.approx(-2 - 9 * PI / 4) and v == pytest.approx(-9.0686, abs=1e-4)
    c = predicted_asymptotics(ModelParams("box:3:neumann", 8), "logZ_log3_coeff").value
    assert c == pytest.approx(27 / (16 * PI)) and c == pytest.approx(0.537137, abs=2e-5)
    m = predicted_asymptotics(ModelParams("box:3:dirichlet", 10), "meso_mass").value
    assert m == pytest.approx(3 / (4 * PI) * 100 * math.log(10))
    var = predicted_asymptotics(ModelParams("box:4:dirichlet", 8), "clt_variance_d_ge4").value
    assert var == pytest.approx(2 * (4 * PI) ** -2)
    with pytest.raises(UnsupportedError):
        predicted_asymptotics(ModelParams("torus:4", 8), "partition_d_ge4")
    with pytest.raises(UnsupportedError):
        predicted_asymptotics(ModelParams("box:3:neumann", 8), "partition_exponent_d3")
    with pytest.raises(UnsupportedError):
        predicted_asymptotics(ModelParams("torus:3", 8), "nonsense")


def test_log_sum_survives_overflow():
    s, ls = log_sum([1e308, 1e308])
    assert s == math.inf and ls == pytest.approx(math.log(1e308) + math.log(2))
    assert log_sum([1.0, 2.0]) == (3.0, math.log(3.0))


def test_weight_cache_round_trip(tmp_path):
    p = ModelParams("box:3:dirichlet", 9)
    first = build_weights(p, cache=tmp_path)
    second = build_weights(p, cache=tmp_path)
    assert first.t.tobytes() == second.t.tobytes()
    assert len(list(tmp_path.glob("*.f64le"))) == 1


def test_table_key_depends_on_mu():
    w = WeightTable(ModelParams("torus:3", 8), np.ones(3))
    assert w.key != w.with_mu(-0.1).key
