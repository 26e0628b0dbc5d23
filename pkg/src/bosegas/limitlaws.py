"""Reference limit laws: the regularised-Fredholm law chi_zeta, Dickman, PD(1), local profiles."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats
from scipy.signal import fftconvolve

from . import spectral
from .errors import ConfigError, DomainError, ToleranceError, UnsupportedError
from .spectral import Geometry, parse_geometry
from .weights import EULER_GAMMA

PI = math.pi


@dataclass(frozen=True, eq=False)
class DistributionTable:
    x: np.ndarray
    value: np.ndarray
    law: str
    kind: str = "cdf"  # or "density"
    meta: dict = field(default_factory=dict)

    def to_csv_rows(self):
        return list(zip(map(float, self.x), map(float, self.value)))


# ---------------------------------------------------------------------------
# spectral measure and the Fredholm characteristic function

def _weyl_tail_moment(g: Geometry, lam_cut: float, k: int) -> float:
    """Two-term Weyl estimate of sum over lambda > lam_cut of lambda^{-k}."""
    d = g.d
    vol = PI ** (d / 2) / math.gamma(d / 2 + 1) / (2 * PI) ** d
    surf = PI ** ((d - 1) / 2) / math.gamma((d - 1) / 2 + 1) / (2 * PI) ** (d - 1)
    sign = -1.0 if g.bc == "dirichlet" else (1.0 if g.bc == "neumann" else 0.0)
    # dN = vol (d/2) lam^{d/2-1} + sign |bd| surf / 4 ((d-1)/2) lam^{(d-3)/2}
    out = 0.0
    for coef, power in ((vol * d / 2, d / 2 - 1), (sign * g.boundary_area * surf / 4 * (d - 1) / 2, (d - 3) / 2)):
        e = power - k + 1
        if coef == 0:
            continue
        if e >= 0:
            return math.inf
        out += coef * lam_cut**e / -e
    return out


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Eigenvalues of -Laplacian with multiplicities, split into three parts.

    * ``near``: shells kept explicitly (exact log terms, Gamma sampling);
    * ``far``: enumerated shells summarised by power moments M_k = sum m lambda^{-k};
    * a Weyl-law estimate of the second moment beyond the enumerated range.
    """

    geometry: Geometry
    lam: np.ndarray = field(repr=False)
    mult: np.ndarray = field(repr=False)
    far_moments: np.ndarray = field(repr=False)  # index k -> M_k, k = 0..K
    far_min: float = math.inf
    tail_variance: float = 0.0
    lam_cut: float = math.inf

    @property
    def variance(self) -> float:
        return math.fsum(self.mult / self.lam**2) + self.far_moments[2] + self.tail_variance

    @property
    def tail_fraction(self) -> float:
        return self.tail_variance / self.variance


def spectral_measure(g, s_max: int = 200_000, s_near: int = 4096, n_moments: int = 12) -> SpectralMeasure:
    """Enumerate shells |k|^2 <= s_max; shells with |k|^2 <= s_near are kept explicitly."""
    g = parse_geometry(g)
    if g.lambda1 <= 0:
        raise UnsupportedError("the Fredholm law needs lambda_1 > 0 (no zero mode)")
    if g.d > 3:
        raise UnsupportedError("sum of lambda^-2 diverges for d >= 4")
    axis = spectral._axis_shell_counts(g.bc, s_max).astype(float)
    counts = axis
    for _ in range(g.d - 1):
        counts = np.rint(fftconvolve(counts, axis)[: s_max + 1])
    s = np.nonzero(counts)[0]
    m = counts[s]
    lam = g.axis_scale * s.astype(float)
    near = s <= s_near
    far_lam, far_m = lam[~near], m[~near]
    moments = np.zeros(n_moments + 1)
    for k in range(2, n_moments + 1):
        moments[k] = math.fsum(far_m * far_lam ** (-float(k)))
    lam_cut = g.axis_scale * (s_max + 0.5)
    return SpectralMeasure(g, lam[near], m[near], moments, float(far_lam.min()) if len(far_lam) else math.inf,
                           _weyl_tail_moment(g, lam_cut, 2), lam_cut)


def fredholm_log_cf(sm: SpectralMeasure, t) -> np.ndarray:
    """log psi(t) = -sum_k [log(1 - i t/lambda_k) + i t/lambda_k].

    Far shells enter through the power series sum_{k>=2} (i t)^k M_k / k,
    the unenumerated tail through its Gaussian second-moment term.
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    if np.abs(flat).max(initial=0.0) >= 0.5 * sm.far_min:
        raise ToleranceError("|t| too large for the far-shell power series; enumerate more shells explicitly")
    out = np.empty(flat.shape, dtype=complex)
    inv = 1.0 / sm.lam
    for start in range(0, len(flat), 256):
        tt = flat[start:start + 256, None]
        z = 1j * tt * inv
        out[start:start + 256] = -(sm.mult * (np.log1p(-z) + z)).sum(axis=1)
    it = 1j * flat
    for k in range(len(sm.far_moments) - 1, 1, -1):
        out += it**k * sm.far_moments[k] / k
    out -= 0.5 * flat**2 * sm.tail_variance
    return out.reshape(t.shape)


def fredholm_cf(sm: SpectralMeasure, t) -> np.ndarray:
    return np.exp(fredholm_log_cf(sm, t))


def _tanh_sinh(T: float, h: float):
    """Nodes and weights of the tanh-sinh rule on [0, T]."""
    k_max = int(math.ceil(math.asinh(2 * math.atanh(1 - 1e-15) / PI) / h))
    u = h * np.arange(-k_max, k_max + 1)
    arg = 0.5 * PI * np.sinh(u)
    x = 0.5 * T * (1 + np.tanh(arg))
    w = 0.5 * T * h * 0.5 * PI * np.cosh(u) / np.cosh(arg) ** 2
    keep = (x > 0) & (x < T)
    return x[keep], w[keep]


def _psi_cutoff(sm: SpectralMeasure, level: float = 1e-12) -> float:
    t = 1.0
    while abs(fredholm_cf(sm, t)) > level:
        t *= 1.25
    return t


def gil_pelaez_cdf(log_cf, x, T: float, h: float = 1 / 256) -> np.ndarray:
    """F(x) = 1/2 - (1/pi) int_0^T Im(e^{-itx} psi(t)) / t dt on a tanh-sinh grid."""
    t, w = _tanh_sinh(T, h)
    psi = np.exp(log_cf(t))
    x = np.asarray(x, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(x, t))
    integral = (np.imag(phase * psi) / t * w).sum(axis=-1)
    return 0.5 - integral / PI


@dataclass(frozen=True, eq=False)
class ChiZeta:
    table: DistributionTable
    measure: SpectralMeasure
    T: float
    s_sample: int

    def cdf(self, x, h: float = 1 / 256):
        return gil_pelaez_cdf(lambda t: fredholm_log_cf(self.measure, t), x, self.T, h)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Gamma sums over shells with |k|^2 <= s_sample plus a Gaussian for the rest."""
        sm = self.measure
        s = np.rint(sm.lam / sm.geometry.axis_scale)
        keep = s <= self.s_sample
        lam, m = sm.lam[keep], sm.mult[keep]
        rest = math.fsum(sm.mult[~keep] / sm.lam[~keep] ** 2) + sm.far_moments[2] + sm.tail_variance
        out = np.zeros(size)
        for lam_k, m_k in zip(lam, m):
            out += rng.gamma(m_k, 1.0 / lam_k, size) - m_k / lam_k
        out += rng.normal(0.0, math.sqrt(rest), size)
        return out


def chi_zeta(g_or_sm, x=None, h: float = 1 / 256, s_sample: int = 100, check: bool = True) -> ChiZeta:
    """CDF table of the law with characteristic function psi, plus a sampler."""
    sm = g_or_sm if isinstance(g_or_sm, SpectralMeasure) else spectral_measure(g_or_sm)
    T = _psi_cutoff(sm)
    sd = math.sqrt(sm.variance)
    if x is None:
        x = np.linspace(-5 * sd, 10 * sd, 301)
    x = np.asarray(x, dtype=float)
    log_cf = functools.partial(fredholm_log_cf, sm)
    F = gil_pelaez_cdf(log_cf, x, T, h)
    if check:
        err = float(np.abs(F - gil_pelaez_cdf(log_cf, x, T, 2 * h)).max())
        if err > 1e-8:
            raise ToleranceError(f"Gil-Pelaez integral not converged (step-halving change {err:.2g})")
    else:
        err = math.nan
    meta = {"variance": sm.variance, "tail_fraction": sm.tail_fraction, "T": T, "quad_change": err}
    return ChiZeta(DistributionTable(x, F, "chi_zeta", "cdf", meta), sm, T, s_sample)


# ---------------------------------------------------------------------------
# Dickman

DICKMAN_YMAX = 30.0


@functools.lru_cache(maxsize=None)
def _dickman_pieces(y_max: int):
    """Dense solutions of y rho'(y) = -rho(y - 1) on [k, k+1], k = 1..y_max-1."""
    pieces = []
    prev = lambda y: np.ones_like(np.asarray(y, dtype=float))  # noqa: E731  rho on [0, 1]
    start = 1.0
    for k in range(1, y_max):
        sol = integrate.solve_ivp(lambda y, r, f=prev: -f(y - 1.0) / y, (k, k + 1.0), [start],
                                  method="DOP853", dense_output=True, rtol=1e-13, atol=1e-300)
        dense = sol.sol
        pieces.append(dense)
        prev = lambda y, f=dense: f(y)[0]  # noqa: E731
        start = float(sol.y[0, -1])
    return tuple(pieces)


def dickman_rho(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("Dickman function needs y >= 0")
    if np.any(y > DICKMAN_YMAX):
        raise DomainError(f"y beyond the tabulated range [0, {DICKMAN_YMAX}]")
    pieces = _dickman_pieces(int(DICKMAN_YMAX))
    flat = y.ravel()
    out = np.ones_like(flat)
    k = np.minimum(np.floor(flat).astype(int), int(DICKMAN_YMAX) - 1)
    for idx in np.unique(k[flat > 1]):
        sel = (k == idx) & (flat > 1)
        out[sel] = pieces[idx - 1](flat[sel])[0]
    return out.reshape(y.shape)


def dickman(y):
    """(rho_D(y), p1(y)) with p1 = e^{-gamma} rho_D the Dickman probability density."""
    rho = dickman_rho(y)
    return rho, math.exp(-EULER_GAMMA) * rho


def ein(z):
    """Entire exponential integral int_0^1 (1 - e^{-zx}) / x dx for complex z."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < 1.0
    zs = z[small]
    term = zs.copy()
    acc = term.copy()
    for k in range(2, 30):
        term = term * -zs * (k - 1) / (k * k)
        acc = acc + term
    out[small] = acc
    zl = z[~small]
    out[~small] = special.exp1(zl) + EULER_GAMMA + np.log(zl)
    return out


def dickman_laplace(s) -> np.ndarray:
    """E[e^{-sY}] = exp(-Ein(s)) for Y with density p1."""
    return np.exp(-ein(np.asarray(s, dtype=float))).real


def dickman_laplace_numeric(s: float) -> float:
    """int_0^inf e^{-sy} p1(y) dy by quadrature over unit pieces."""
    pieces = [integrate.quad(lambda y: math.exp(-s * y) * dickman(y)[1], k, k + 1, epsabs=1e-15, epsrel=1e-13)[0]
              for k in range(int(DICKMAN_YMAX))]
    return math.fsum(pieces)


def dickman_cf_oracle(y: float) -> float:
    """p1(y), y > 0, by Fourier inversion of the characteristic function exp(-Ein(-it)).

    The two leading terms of the large-t expansion, c (i/t + e^{it}/t^2) with
    c = e^{-gamma}, are removed through c (i t + e^{it}) / (1 + t^2), whose
    inverse transform is c (e^{-y} + e^{-|1-y|}) / 2.
    """
    c = math.exp(-EULER_GAMMA)

    def rest(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-ein(-1j * t)) - c * (1j * t + np.exp(1j * t)) / (1 + t * t)

    re = integrate.quad(lambda t: rest(t).real, 0, np.inf, weight="cos", wvar=y, limlst=100)[0]
    im = integrate.quad(lambda t: rest(t).imag, 0, np.inf, weight="sin", wvar=y, limlst=100)[0]
    return (re + im) / PI + 0.5 * c * (math.exp(-y) + math.exp(-abs(1 - y)))


# ---------------------------------------------------------------------------
# Poisson-Dirichlet(1)

GOLOMB_DICKMAN = 0.62432998854355087


def pd1_ranked_mean(r: int) -> float:
    """E[r-th largest part] of PD(1), int_0^inf E1(y)^{r-1}/(r-1)! e^{-E1(y) - y} dy."""
    def f(y):
        e1 = special.exp1(y)
        return e1 ** (r - 1) / math.factorial(r - 1) * math.exp(-e1 - y)
    return integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0]


def pd1_largest_cdf(x) -> np.ndarray:
    """P(largest part <= x) = rho_D(1/x)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 1.0 / DICKMAN_YMAX
    out[pos] = dickman_rho(1.0 / np.minimum(x[pos], 1.0))
    return out


@dataclass(frozen=True)
class PD1Reference:
    means: tuple
    exact_means: tuple
    x: np.ndarray = field(repr=False)
    largest_cdf: np.ndarray = field(repr=False)
    n_samples: int = 0


def gem_sticks(u: np.ndarray) -> np.ndarray:
    """Stick-breaking pieces V_i prod_{l<i}(1 - V_l) of GEM(1) from uniforms (rows = samples)."""
    rem = np.cumprod(1.0 - u, axis=1)
    return u * np.concatenate([np.ones((len(u), 1)), rem[:, :-1]], axis=1)


def pd1_reference(log2_samples: int = 23, sticks: int = 40, seed: int = 0, chunk_log2: int = 18) -> PD1Reference:
    """PD(1) statistics by scrambled-Sobol stick breaking.

    After 40 sticks the unbroken remainder is about e^{-40}; it is dropped.
    """
    engine = stats.qmc.Sobol(sticks, scramble=True, seed=seed)
    x = np.linspace(0.0, 1.0, 201)
    counts = np.zeros(len(x))
    sums = np.zeros(3)
    n = 1 << log2_samples
    for _ in range(max(1, n >> chunk_log2)):
        u = engine.random(1 << chunk_log2)
        pieces = gem_sticks(u)
        top = -np.partition(-pieces, 2, axis=1)[:, :3]
        top.sort(axis=1)
        top = top[:, ::-1]
        sums += top.sum(axis=0)
        counts += np.searchsorted(np.sort(top[:, 0]), x, side="right")
    means = tuple(float(v) for v in sums / n)
    exact = tuple(pd1_ranked_mean(r) for r in (1, 2, 3))
    return PD1Reference(means, exact, x, counts / n, n)


# ---------------------------------------------------------------------------
# local profiles

def gaussian_density(x, var: float):
    return np.exp(-np.asarray(x) ** 2 / (2 * var)) / math.sqrt(2 * PI * var)


def variance_candidates(kind: str, beta: float = 1.0, r: float | None = None, d: int | None = None) -> dict:
    """Both readings of the disputed Gaussian variances, keyed 'stated' and 'from_proof'."""
    if kind == "gaussian_tilted_d3":
        if r is None:
            raise ConfigError("r needed for the tilted d = 3 profile")
        return {"stated": 8 * PI * beta**2 * r, "from_proof": 1.0 / (8 * PI * beta**2 * r)}
    if kind == "gaussian_d_ge4":
        if d is None or d < 4:
            raise ConfigError("d >= 4 needed")
        c_d = 2.0 if d == 4 else float(special.zeta(d / 2 - 1))
        return {"stated": (4 * PI * beta) ** (d / 2) / c_d, "from_proof": c_d * (4 * PI * beta) ** (-d / 2)}
    raise ConfigError(f"unknown kind {kind!r}")


def local_profiles(kind: str, x=None, beta: float = 1.0, r: float | None = None, d: int | None = None) -> dict:
    """Gaussian reference densities for every variance candidate, or the 3/2-stable reference constant."""
    if kind == "stable_3_2":
        const = -special.gamma(-1.5) * math.cos(0.75 * PI)
        return {"index": 1.5, "integral_constant": const,
                "note": "-log|CF| ~ a0 beta^{-3/2} * integral_constant * t^{3/2} at the continuum level"}
    cands = variance_candidates(kind, beta, r, d)
    if x is None:
        x = np.linspace(-6, 6, 241)
    return {name: DistributionTable(np.asarray(x, float), gaussian_density(x, v), f"gaussian[{name}]", "density",
                                    {"variance": v}) for name, v in cands.items()}


@dataclass(frozen=True)
class StableFit:
    index: float
    constant: float
    constant_at_fixed_index: float
    local_index: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)


def fit_stable(t, log_abs_cf, fixed_index: float = 1.5) -> StableFit:
    """Fit -log|CF(t)| = c t^alpha on the given t grid."""
    t = np.asarray(t, dtype=float)
    y = -np.asarray(log_abs_cf, dtype=float)
    if np.any(y <= 0):
        raise ToleranceError("|CF| >= 1 on the fit range")
    lx, ly = np.log(t), np.log(y)
    slope, icept = np.polyfit(lx, ly, 1)
    local = np.diff(ly) / np.diff(lx)
    c_fixed = float(np.exp(np.mean(ly - fixed_index * lx)))
    return StableFit(float(slope), float(np.exp(icept)), c_fixed, local, t)
