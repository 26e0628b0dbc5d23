"""Loop weights t_j = Z(beta j / L^2), exponential tilts and grand-canonical sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta

from . import spectral
from .cache import TableCache, default_root, params_key
from .errors import ConfigError, InfeasibleError, UnsupportedError
from .spectral import Geometry, parse_geometry

PI = math.pi
EULER_GAMMA = 0.57721566490153286


def critical_density(d: int, beta: float = 1.0) -> float:
    """(4 pi beta)^{-d/2} zeta(d/2); infinite for d <= 2."""
    if d <= 2:
        return math.inf
    return (4 * PI * beta) ** (-d / 2) * float(zeta(d / 2))


@dataclass(frozen=True)
class ModelParams:
    geometry: Geometry
    L: float
    beta: float = 1.0
    rho: float | str = "critical"
    n_cut: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "geometry", parse_geometry(self.geometry))
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if not self.L >= 1:
            raise ConfigError("L must be >= 1")
        if self.rho != "critical" and not (isinstance(self.rho, (int, float)) and self.rho > 0):
            raise ConfigError("rho must be 'critical' or a positive number")
        if self.rho == "critical" and self.geometry.d <= 2:
            raise ConfigError("critical density is infinite for d <= 2")
        if self.n_cut is not None and self.n_cut < 1:
            raise ConfigError("n_cut must be >= 1")

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def rho_c(self) -> float:
        return critical_density(self.d, self.beta)

    @property
    def density(self) -> float:
        return self.rho_c if self.rho == "critical" else float(self.rho)

    @property
    def n_particles(self) -> int:
        """floor(rho L^d)."""
        return int(math.floor(self.density * self.L**self.d))

    @property
    def N(self) -> int:
        """Longest loop length kept in weight tables."""
        return self.n_cut if self.n_cut is not None else max(1, self.n_particles)

    def record(self) -> dict:
        return {
            "geometry": str(self.geometry),
            "L": float(self.L),
            "beta": float(self.beta),
            "rho": self.rho if self.rho == "critical" else float(self.rho),
            "N": self.N,
        }


def loop_weights(params: ModelParams, j_max: int | None = None) -> np.ndarray:
    """Untilted t_j for j = 1..j_max (default N)."""
    j = np.arange(1, (j_max or params.N) + 1, dtype=float)
    return spectral.heat_trace(params.geometry, params.beta * j / params.L**2)


@dataclass(frozen=True, eq=False)
class WeightTable:
    params: ModelParams
    t: np.ndarray = field(repr=False)
    mu: float = 0.0

    @property
    def N(self) -> int:
        return len(self.t)

    @property
    def j(self) -> np.ndarray:
        return np.arange(1, self.N + 1, dtype=float)

    @property
    def log_tilt(self) -> np.ndarray:
        return self.params.beta * self.mu * self.j

    @property
    def tilted(self) -> np.ndarray:
        """e^{beta mu j} t_j."""
        return np.exp(self.log_tilt) * self.t

    @property
    def log_tilted(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.log_tilt + np.log(self.t)

    @property
    def intensity(self) -> np.ndarray:
        """Poisson intensity of loops of length j: e^{beta mu j} t_j / j."""
        return self.tilted / self.j

    @property
    def key(self) -> str:
        return params_key({**self.params.record(), "mu": float(self.mu)})

    def with_mu(self, mu: float) -> "WeightTable":
        if mu > 0:
            raise ConfigError("mu must be <= 0")
        return WeightTable(self.params, self.t, float(mu))


def build_weights(params: ModelParams, mu: float = 0.0, cache: TableCache | str | None = None) -> WeightTable:
    """Weight table of e^{beta mu j} t_j, j = 1..N.

    The untilted t_j are cached when a cache root is given, or when
    ``BOSEGAS_CACHE`` is set.
    """
    if mu > 0:
        raise ConfigError("positive chemical potential gives a divergent loop measure")
    if cache is None and default_root() is not None:
        cache = TableCache(default_root())
    elif isinstance(cache, (str, bytes)) or hasattr(cache, "__fspath__"):
        cache = TableCache(cache)
    t = None
    record = {**params.record(), "table": "loop_weights"}
    if cache is not None:
        t = cache.get(record)
    if t is None:
        t = loop_weights(params)
        if cache is not None:
            cache.put(record, t)
    t.setflags(write=False)
    return WeightTable(params, t, float(mu))


def expected_particles(w: WeightTable, cutoff: int | None = None) -> float:
    """Mean number of particles in loops of length <= cutoff."""
    cutoff = w.N if cutoff is None else int(cutoff)
    if cutoff > w.N:
        raise ConfigError(f"cutoff {cutoff} exceeds table length {w.N}")
    if cutoff <= 0:
        return 0.0
    return math.fsum(w.tilted[:cutoff])


def density_and_pressure(w: WeightTable) -> tuple[float, float]:
    """(sum_j e^{beta mu j} t_j, sum_j e^{beta mu j} t_j / j) over the table."""
    return math.fsum(w.tilted), math.fsum(w.intensity)


def log_sum(values) -> tuple[float, float]:
    """(fsum, log of fsum) for nonnegative terms; the log survives when the sum overflows."""
    v = np.asarray(values, dtype=float)
    try:
        s = math.fsum(v)
    except OverflowError:
        s = math.inf
    if math.isfinite(s):
        return s, (math.log(s) if s > 0 else -math.inf)
    m = float(v.max())
    return s, math.log(m) + math.log(math.fsum(v / m))


# ---------------------------------------------------------------------------
# tilts

def tilt_parameter(params: ModelParams, mu: float) -> float | None:
    """The rescaled tilt r.

    d = 3: mu = -r^2 log^2(L) / L^2.  d >= 4: mu = -r / (L log^{[d=4]} L).
    """
    L, d = params.L, params.d
    if mu == 0:
        return 0.0
    if d == 3:
        return math.sqrt(-mu) * L / math.log(L)
    if d >= 4:
        return -mu * L * (math.log(L) if d == 4 else 1.0)
    return None


def mu_from_tilt_parameter(params: ModelParams, r: float) -> float:
    L, d = params.L, params.d
    if d == 3:
        return -(r**2) * math.log(L) ** 2 / L**2
    if d >= 4:
        return -r / (L * (math.log(L) if d == 4 else 1.0))
    raise UnsupportedError("tilt parametrisation defined for d >= 3 only")


@dataclass(frozen=True)
class TiltSolve:
    mu: float
    r: float | None
    achieved: float
    target: float


def solve_mu(params: ModelParams, target: float | None = None, weights: WeightTable | None = None,
             rtol: float = 1e-12) -> TiltSolve:
    """Chemical potential mu <= 0 with sum_j e^{beta mu j} t_j = target (default floor(rho L^d))."""
    w = weights or build_weights(params)
    target = float(params.n_particles if target is None else target)
    j, t, beta = w.j, w.t, params.beta
    top = math.fsum(t)
    if target > top * (1 + 1e-15):
        raise InfeasibleError(f"target {target:.6g} exceeds the untilted mean {top:.6g}")
    if target <= 0:
        raise InfeasibleError("target must be positive")
    if abs(target - top) <= 1e-15 * top:
        return TiltSolve(0.0, 0.0, top, target)

    def excess(s):
        return math.fsum(np.exp(-math.exp(s) * beta * j) * t) - target

    lo, hi = -40.0, 5.0
    while excess(lo) < 0:
        lo -= 20.0
    while excess(hi) > 0:
        hi += 5.0
    s = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    mu = -math.exp(s)
    achieved = math.fsum(np.exp(beta * mu * j) * t)
    if abs(achieved - target) > max(rtol, 1e-10) * target:
        raise InfeasibleError(f"tilt solve stalled at {achieved:.12g} for target {target:.12g}")
    return TiltSolve(mu, tilt_parameter(params, mu), achieved, target)


# ---------------------------------------------------------------------------
# closed-form predictions

@dataclass(frozen=True)
class PredictionRecord:
    quantity: str
    value: float
    formula: str
    notes: str = ""


QUANTITIES = ("partition_exponent_d3", "logZ_log3_coeff", "partition_d_ge4",
              "gamma_rate", "clt_variance_d_ge4", "meso_mass")


def predicted_asymptotics(params: ModelParams, quantity: str) -> PredictionRecord:
    """Leading-order constants predicted for the critical gas.

    ``partition_d_ge4`` returns the coefficient of L^{d-3} (a1 < 0) or the
    coefficient of -L^{d-2}/log^{[d=4]} L (a1 > 0) in log Z.  ``gamma_rate``
    returns the constant under the square root of the stretched exponent per
    unit alpha^2 L (divided by log L when d = 4).
    """
    g = params.geometry
    d, beta = g.d, params.beta
    mp = spectral.mp_reference(g)
    a1, lam1 = mp.a1, g.lambda1
    L = params.L
    if quantity not in QUANTITIES:
        raise UnsupportedError(f"unknown quantity {quantity!r}")
    if quantity == "partition_exponent_d3":
        if d != 3 or a1 > 0:
            raise UnsupportedError("power-law exponent predicted for d = 3 with a1 <= 0")
        value = -2 + 2 * lam1 * a1 - (1 if lam1 == 0 else 0)
        return PredictionRecord(quantity, value, "-2 + 2 lambda1 a1 - [lambda1 = 0]")
    if quantity == "logZ_log3_coeff":
        if d != 3 or a1 <= 0:
            raise UnsupportedError("log^3 decay predicted for d = 3 with a1 > 0")
        alt = 128 * PI**2 * a1**3 / 3
        return PredictionRecord(quantity, 32 * PI**2 * a1**3, "32 pi^2 a1^3",
                                f"expanding the tilted free energy with r = 8 pi a1 gives {alt:.6g} instead")
    if quantity == "meso_mass":
        if a1 >= 0:
            raise UnsupportedError("macroscopic loop mass predicted for a1 < 0")
        value = -2 * a1 / beta * L**2 * math.log(L) if d == 3 else -a1 * beta ** ((1 - d) / 2) * L ** (d - 1)
        return PredictionRecord(quantity, value, "-2 a1 L^2 log(L) / beta" if d == 3 else "-a1 beta^{(1-d)/2} L^{d-1}")
    if d < 4:
        raise UnsupportedError(f"{quantity} is a d >= 4 prediction")
    if a1 == 0:
        raise UnsupportedError("d >= 4 with a1 = 0 is left open by the theory")
    c_d = 2.0 if d == 4 else float(zeta(d / 2 - 1))
    if quantity == "clt_variance_d_ge4":
        if a1 > 0:
            raise UnsupportedError("Gaussian fluctuations predicted for a1 < 0")
        value = c_d * (4 * PI * beta) ** (-d / 2)
        return PredictionRecord(quantity, value, "c_d (4 pi beta)^{-d/2}",
                                f"stated orientation (4 pi beta)^{{d/2}}/c_d = {1 / value:.6g}; scale b_L = L^(d/2) log^([d=4]/2) L")
    if quantity == "partition_d_ge4":
        if a1 < 0:
            return PredictionRecord(quantity, a1 * lam1 * beta ** ((3 - d) / 2), "a1 lambda1 beta^{(3-d)/2}")
        zm = 1.0 if d == 4 else float(zeta(d / 2 - 1))
        value = a1**2 * (4 * PI) ** (d / 2) * beta ** (1 - d / 2) * (float(zeta(d / 2 - 0.5)) - 1) / zm
        return PredictionRecord(quantity, value, "a1^2 (4 pi)^{d/2} beta^{1-d/2} (zeta(d/2-1/2) - 1)/zeta(d/2-1)")
    # gamma_rate
    if a1 < 0:
        raise UnsupportedError("stretched-exponential decay predicted for a1 > 0")
    value = a1 * (4 * PI) ** (d / 2) / (4 * (1.0 if d == 4 else float(zeta(d / 2 - 1))))
    return PredictionRecord(quantity, value, "a1 (4 pi)^{d/2} / (4 zeta(d/2-1)), zeta -> 1/log L for d = 4")
