"""Exact law of the particle number of the loop soup.

The particle number is a compound Poisson variable: loops of length j appear
with Poisson(theta_j) multiplicity, theta_j = w_j / j, w_j = e^{beta mu j} t_j.
Its law obeys n P_n = sum_j w_j P_{n-j}, evaluated here in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import spectral
from .errors import ConfigError, InfeasibleError
from .weights import EULER_GAMMA, ModelParams, WeightTable, build_weights, density_and_pressure


@dataclass(frozen=True, eq=False)
class PmfTable:
    """log P(N_window = n) for n = 0..n_max.

    ``log_w[j]`` holds log(e^{beta mu j} t_j) inside the window and -inf outside.
    """

    logp: np.ndarray = field(repr=False)
    log_w: np.ndarray = field(repr=False)
    window: tuple[int, int]
    beta: float = 1.0
    mu: float = 0.0
    weights_key: str = ""
    method: str = "direct"

    @property
    def n_max(self) -> int:
        return len(self.logp) - 1

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.logp)

    @property
    def normalization_deficit(self) -> float:
        return 1.0 - math.fsum(self.p)

    def mean(self) -> float:
        n = np.arange(self.n_max + 1)
        return math.fsum(n * self.p)

    def recursion_residual(self) -> np.ndarray:
        """|n P_n - sum_j w_j P_{n-j}| / (n P_n) for n = 1..n_max (nan where P_n = 0)."""
        j_lo, j_hi = self.window
        out = np.full(self.n_max, np.nan)
        for n in range(1, self.n_max + 1):
            hi = min(n, j_hi)
            if hi < j_lo or self.logp[n] == -np.inf:
                continue
            x = self.log_w[j_lo:hi + 1] + self.logp[n - hi:n - j_lo + 1][::-1]
            out[n - 1] = abs(math.fsum(np.exp(x - self.logp[n] - math.log(n))) - 1.0)
        return out

    def to_csv_rows(self):
        return [(n, float(v)) for n, v in enumerate(self.logp)]


def _log_weights(w: WeightTable, window) -> tuple[np.ndarray, tuple[int, int]]:
    j_lo, j_hi = (1, w.N) if window is None else (int(window[0]), int(window[1]))
    if j_lo < 1 or j_hi > w.N:
        raise ConfigError(f"window [{j_lo}, {j_hi}] not inside [1, {w.N}]")
    log_w = np.full(max(j_hi, 0) + 1, -np.inf)
    if j_hi >= j_lo:
        log_w[j_lo:j_hi + 1] = w.log_tilted[j_lo - 1:j_hi]
    return log_w, (j_lo, j_hi)


def _log_void(log_w: np.ndarray, j_lo: int, j_hi: int) -> float:
    if j_hi < j_lo:
        return 0.0
    j = np.arange(j_lo, j_hi + 1)
    return -math.fsum(np.exp(log_w[j_lo:j_hi + 1]) / j)


def _direct(log_w, j_lo, j_hi, n_max):
    # The recursion is linear in P_0, so it runs from P_0 = 1.  Logs are
    # accumulated in extended precision; only the small differences x - max
    # go through exp in double precision.
    lw = log_w.astype(np.longdouble)
    lp = np.full(n_max + 1, -np.inf, dtype=np.longdouble)
    lp[0] = 0.0
    log_n = np.log(np.arange(1, n_max + 1, dtype=np.longdouble))
    for n in range(1, n_max + 1):
        hi = min(n, j_hi)
        if hi < j_lo:
            continue
        x = lw[j_lo:hi + 1] + lp[n - hi:n - j_lo + 1][::-1]
        m = x.max()
        if m == -np.inf:
            continue
        lp[n] = m + np.longdouble(math.log(np.exp((x - m).astype(float)).sum())) - log_n[n - 1]
    return (lp + np.longdouble(_log_void(log_w, j_lo, j_hi))).astype(float)


def _fft(log_w, j_hi, n_max, accept=1e-4):
    """Generating-function inversion on exponentially tilted circles.

    For a tilt u the law Q_n = P_n e^{un} / E[e^{uN}] is recovered by one FFT
    with absolute error ~1e-16; only n with Q_n >= ``accept`` are kept, and u
    is moved along until every n <= n_max is covered.
    """
    j = np.arange(1, j_hi + 1, dtype=float)
    log_theta = log_w[1:j_hi + 1] - np.log(j)
    theta_sum = math.fsum(np.exp(log_theta))
    lp = np.full(n_max + 1, -np.inf)
    lp[0] = -theta_sum

    log_j = np.log(j)

    def log_mean(u):
        return logsumexp(log_theta + log_j + u * j)

    n_s = 1
    while n_s <= n_max:
        target = math.log(n_s)
        lo, hi = -1.0, 1.0
        while log_mean(lo) > target:
            lo *= 2
        while log_mean(hi) < target:
            hi *= 2
        u = brentq(lambda v: log_mean(v) - target, lo, hi, xtol=1e-15, rtol=1e-15)
        c = np.exp(log_theta + u * j)
        sd = math.sqrt(math.fsum(j * j * c))
        size = 1 << int(math.ceil(math.log2(max(4 * (n_s + 40 * sd + 64), 2 * j_hi + 2, 2 * n_max + 2))))
        a = np.zeros(size)
        a[1:j_hi + 1] = c
        log_norm = math.fsum(c) - theta_sum  # log E[e^{uN}]
        g = np.exp(size * np.fft.ifft(a) - math.fsum(c))
        q = np.fft.fft(g).real / size
        n = n_s
        top = min(n_max, size // 2)
        while n <= top and q[n] >= accept:
            lp[n] = math.log(q[n]) + log_norm - u * n
            n += 1
        if n == n_s:
            raise InfeasibleError(f"tilted inversion cannot resolve n = {n_s}; use the direct recursion")
        n_s = n
    return lp


def compound_pmf(w: WeightTable, window=None, n_max: int | None = None, method: str = "direct") -> PmfTable:
    """Law of the number of particles carried by loops with length in ``window``.

    ``method="fft"`` inverts the generating function on tilted circles; it
    needs a window starting at j = 1.
    """
    log_w, (j_lo, j_hi) = _log_weights(w, window)
    n_max = w.N if n_max is None else int(n_max)
    if n_max < 0:
        raise ConfigError("n_max must be >= 0")
    if method == "direct" or j_hi < j_lo or n_max == 0:
        lp = _direct(log_w, j_lo, j_hi, n_max)
        method = "direct"
    elif method == "fft":
        if j_lo != 1:
            raise ConfigError("fft path needs a window starting at 1")
        lp = _fft(log_w, j_hi, n_max)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return PmfTable(lp, log_w, (j_lo, j_hi), w.params.beta, w.mu, w.key, method)


def canonical_partition_function(params: ModelParams, weights: WeightTable | None = None) -> float:
    """log Z = log P(N = floor(rho L^d)) for the untilted soup with loops up to that length."""
    n = params.n_particles
    if n < 1:
        raise ConfigError("rho L^d < 1")
    w = weights or build_weights(params)
    if w.N < n:
        raise ConfigError(f"weight table has {w.N} entries, need {n}")
    return float(compound_pmf(w.with_mu(0.0), (1, n), n).logp[n])


def _require(pmf: PmfTable, n: int):
    if not 0 <= n <= pmf.n_max:
        raise ConfigError(f"n = {n} outside the table (n_max = {pmf.n_max})")
    if pmf.logp[n] == -np.inf:
        raise InfeasibleError(f"P(N = {n}) = 0; cannot condition on a null event")


def removal_distribution(pmf: PmfTable, n: int) -> np.ndarray:
    """P(J = j), j = 1..n: length of the loop through a uniformly chosen particle given N = n.

    Entry ``j - 1`` holds w_j P_{n-j} / (n P_n).
    """
    _require(pmf, n)
    j_lo, j_hi = pmf.window
    out = np.zeros(n)
    hi = min(n, j_hi)
    if hi >= j_lo:
        js = np.arange(j_lo, hi + 1)
        out[j_lo - 1:hi] = np.exp(pmf.log_w[js] + pmf.logp[n - js] - math.log(n) - pmf.logp[n])
    return out


def gamma_trace(pmf: PmfTable, n: int) -> float:
    """sum_r e^{beta mu r} t_r P_{n-r} / P_n, which the recursion forces to equal n."""
    return n * math.fsum(removal_distribution(pmf, n))


def gamma_rdm(params: ModelParams, pmf: PmfTable, x, y, n: int | None = None) -> np.ndarray:
    """One-particle reduced density matrix sum_r e^{beta mu r} p_{beta r}(x, y) P_{n-r}/P_n.

    ``x``, ``y``: points of shape (d,) or (m, d) in [0, L]^d.
    """
    n = params.n_particles if n is None else n
    _require(pmf, n)
    r = np.arange(1, min(n, pmf.window[1]) + 1)
    ratio = np.zeros(len(r))
    ok = r >= pmf.window[0]
    ratio[ok] = np.exp(pmf.logp[n - r[ok]] - pmf.logp[n] + params.beta * pmf.mu * r[ok])
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    kern = spectral.heat_kernel(params.geometry, params.L, params.beta * r[None, :],
                                x[:, None, :], y[:, None, :])
    return (kern * ratio).sum(axis=-1)


# ---------------------------------------------------------------------------
# tilting

@dataclass(frozen=True)
class TiltCheck:
    mu: float
    n: int
    residual: float
    tail: float
    tail_plus_log: float
    sign: int


def cutoff_tail(w: WeightTable, n: int, mu: float) -> float:
    """sum_{j > n} e^{beta mu j} t_j / j over all j (not just the table).

    With a zero mode the j > n weights are 1 + (exponentially small); the
    exactly summable part is -log(1 - e^{beta mu}) minus its partial sum.
    """
    p = w.params
    x = p.beta * mu
    if x >= 0:
        raise ConfigError("cut-off tail needs mu < 0")
    zero = p.geometry.zero_modes
    j = np.arange(1, n + 1, dtype=float)
    base = zero * (-math.log(-math.expm1(x)) - math.fsum(np.exp(x * j) / j)) if zero else 0.0
    # remaining part: (t_j - zero) decays like e^{-lambda j beta / L^2}, plus e^{beta mu j}
    gap = spectral.eigenvalues(p.geometry, 2)[1 if zero else 0].eigenvalue
    rate = gap * p.beta / p.L**2 - x
    j_end = n + int(math.ceil(45.0 / rate)) + 1
    jj = np.arange(n + 1, j_end + 1, dtype=float)
    t = spectral.heat_trace(p.geometry, p.beta * jj / p.L**2)
    rest = math.fsum(np.exp(x * jj) * (t - zero) / jj)
    return base + rest


def tilt_identity_check(params: ModelParams, mu: float, n: int | None = None,
                        weights: WeightTable | None = None) -> TiltCheck:
    """Compare P_mu(N = n) against e^{beta mu n - (p(mu) - p(0))} P_0(N = n) in log space.

    Also reports the cut-off tail sum plus log(-beta mu n); its sign against
    Euler's constant is stored in ``sign`` (+1, -1, or 0 when neither matches).
    """
    if mu > 0:
        raise ConfigError("mu must be <= 0")
    n = params.n_particles if n is None else n
    w0 = (weights or build_weights(params)).with_mu(0.0)
    wm = w0.with_mu(mu)
    p0 = compound_pmf(w0, None, n)
    pm = compound_pmf(wm, None, n)
    _, pres0 = density_and_pressure(w0)
    _, presm = density_and_pressure(wm)
    predicted = params.beta * mu * n - (presm - pres0) + p0.logp[n]
    residual = abs(pm.logp[n] - predicted)
    if mu == 0 or params.geometry.zero_modes == 0:
        return TiltCheck(mu, n, residual, math.nan, math.nan, 0)
    tail = cutoff_tail(w0, n, mu)
    val = tail + math.log(-params.beta * mu * n)
    sign = -1 if abs(val + EULER_GAMMA) < abs(val - EULER_GAMMA) else 1
    return TiltCheck(mu, n, residual, tail, val, sign)


# ---------------------------------------------------------------------------
# mesoscopic loops

def mesoscopic_window(params: ModelParams, alpha: float = 1.0, M: float = 1.0) -> tuple[int, int]:
    """Loop lengths in [alpha L^2, M L^2 log L]."""
    L = params.L
    lo = int(math.ceil(alpha * L**2))
    hi = int(math.floor(M * L**2 * math.log(L)))
    if hi < lo:
        raise ConfigError("empty mesoscopic window")
    return lo, hi


def mesoscopic_pmf(params: ModelParams, alpha: float = 1.0, M: float = 1.0, n_max: int | None = None,
                   mu: float = 0.0) -> PmfTable:
    """Law of the number of particles in loops with length in the mesoscopic window."""
    lo, hi = mesoscopic_window(params, alpha, M)
    p = params if params.N >= hi else ModelParams(params.geometry, params.L, params.beta, params.rho, hi)
    w = build_weights(p, mu)
    return compound_pmf(w, (lo, hi), 2 * hi if n_max is None else n_max)


def mesoscopic_comparison(params: ModelParams, pmf: PmfTable, k, alpha: float = 1.0):
    """Scaled probabilities at particle counts ``k`` next to the Dickman prediction.

    Returns a dict of arrays: ``scaled`` = P(k) alpha L^2 e^{lambda1 beta k / L^2},
    ``scaled_upper`` = P(k) * upper e^{...}, and ``dickman`` = p1(k / upper).
    """
    from .limitlaws import dickman

    k = np.asarray(k)
    upper = pmf.window[1]
    boost = np.exp(params.geometry.lambda1 * params.beta * k / params.L**2)
    prob = np.exp(pmf.logp[k])
    return {
        "k": k,
        "y": k / upper,
        "scaled": prob * alpha * params.L**2 * boost,
        "scaled_upper": prob * upper * boost,
        "dickman": dickman(k / upper)[1],
    }
