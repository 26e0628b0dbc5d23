"""Monte Carlo realisations of the loop soup.

Random streams come from Philox keyed by (master seed, stream index), so a
draw depends only on its SeedSpec and the requested batch size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnsupportedError
from .partition import PmfTable, _require
from .weights import ModelParams, WeightTable

RNG_ALGORITHM = "numpy.random.Philox(SeedSequence(seed, spawn_key=(stream,)))"


@dataclass(frozen=True)
class SeedSpec:
    seed: int
    stream: int = 0

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "SeedSpec":
        return SeedSpec(self.seed, stream)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.rng()
    return SeedSpec(int(seed)).rng()


@dataclass(eq=False)
class LoopConfiguration:
    """Multiset of loop lengths, optionally with discretised spatial paths."""

    lengths: np.ndarray  # distinct lengths, ascending
    counts: np.ndarray
    paths: list | None = field(default=None, repr=False)

    @classmethod
    def from_lengths(cls, loops) -> "LoopConfiguration":
        loops = np.asarray(loops, dtype=np.int64)
        if loops.size and loops.min() < 1:
            raise ConfigError("loop lengths must be >= 1")
        lengths, counts = np.unique(loops, return_counts=True)
        return cls(lengths, counts)

    @property
    def total(self) -> int:
        return int((self.lengths * self.counts).sum())

    @property
    def n_loops(self) -> int:
        return int(self.counts.sum())

    def loops(self) -> np.ndarray:
        """Every loop length, descending."""
        return np.repeat(self.lengths, self.counts)[::-1]

    def particles_in(self, lo: int = 1, hi: float = math.inf) -> int:
        sel = (self.lengths >= lo) & (self.lengths <= hi)
        return int((self.lengths[sel] * self.counts[sel]).sum())


# ---------------------------------------------------------------------------
# unconditioned soup

def sample_soup(w: WeightTable, seed, size: int | None = None):
    """Independent Poisson(e^{beta mu j} t_j / j) loop counts for j = 1..N.

    With ``size`` given, returns the count matrix of shape (size, N).
    """
    rng = _as_rng(seed)
    lam = w.intensity
    if size is None:
        c = rng.poisson(lam)
        nz = np.nonzero(c)[0]
        return LoopConfiguration(nz + 1, c[nz])
    return rng.poisson(lam, size=(size, len(lam)))


# ---------------------------------------------------------------------------
# conditioned soup

@dataclass(eq=False)
class LoopBatch:
    """Loops of many conditioned draws in flat form: loop k belongs to draw ``draw[k]``."""

    draw: np.ndarray
    length: np.ndarray
    size: int
    n: int

    def largest(self, rank: int = 1) -> np.ndarray:
        """rank-th longest loop per draw (0 when fewer loops)."""
        order = np.lexsort((-self.length, self.draw))
        d, ln = self.draw[order], self.length[order]
        start = np.searchsorted(d, np.arange(self.size))
        pos = start + rank - 1
        ok = (pos < len(d))
        ok[ok] &= d[pos[ok]] == np.arange(self.size)[ok]
        out = np.zeros(self.size, dtype=np.int64)
        out[ok] = ln[pos[ok]]
        return out

    def configuration(self, i: int) -> LoopConfiguration:
        return LoopConfiguration.from_lengths(self.length[self.draw == i])

    def configurations(self) -> list[LoopConfiguration]:
        order = np.argsort(self.draw, kind="stable")
        split = np.searchsorted(self.draw[order], np.arange(1, self.size))
        return [LoopConfiguration.from_lengths(part) for part in np.split(self.length[order], split)]

    def particles_in(self, lo: int = 1, hi: float = math.inf) -> np.ndarray:
        sel = (self.length >= lo) & (self.length <= hi)
        return np.bincount(self.draw[sel], weights=self.length[sel], minlength=self.size)


class ConditionedSampler:
    """Backward sampler for the soup given N = n.

    Each step removes the loop through a uniformly chosen particle, whose
    length J has P(J = j) = w_j P_{m-j} / (m P_m) at remaining mass m.  The
    cumulative laws of all rows m <= n are stored flat, row m shifted by m,
    so one searchsorted call serves every draw at once.
    """

    def __init__(self, pmf: PmfTable, n: int):
        _require(pmf, n)
        if n * (n + 1) // 2 > 60_000_000:
            raise UnsupportedError(f"n = {n} too large for the tabulated backward sampler")
        self.n = n
        j_lo, j_hi = pmf.window
        keys, offsets = [], np.zeros(n + 2, dtype=np.int64)
        lp, lw = pmf.logp, pmf.log_w
        for m in range(1, n + 1):
            hi = min(m, j_hi)
            row = np.zeros(m)
            if hi >= j_lo and lp[m] > -np.inf:
                js = np.arange(j_lo, hi + 1)
                row[j_lo - 1:hi] = np.exp(lw[js] + lp[m - js] - math.log(m) - lp[m])
            c = np.cumsum(row)
            if c[-1] > 0:
                c /= c[-1]
            keys.append(m + c)
            offsets[m + 1] = offsets[m] + m
        self.offsets = offsets
        self.flat = np.concatenate(keys) if keys else np.zeros(0)
        self.reachable = lp[: n + 1] > -np.inf

    def draw(self, size: int, seed) -> LoopBatch:
        rng = _as_rng(seed)
        remaining = np.full(size, self.n, dtype=np.int64)
        active = np.arange(size)
        draws, lengths = [], []
        while active.size:
            m = remaining[active]
            u = rng.random(active.size)
            idx = np.searchsorted(self.flat, m + u, side="right")
            j = idx - self.offsets[m] + 1
            j = np.minimum(j, m)  # guards u landing on the final key by rounding
            draws.append(active)
            lengths.append(j)
            remaining[active] = m - j
            active = active[remaining[active] > 0]
        if not draws:
            return LoopBatch(np.zeros(0, np.int64), np.zeros(0, np.int64), size, self.n)
        return LoopBatch(np.concatenate(draws), np.concatenate(lengths), size, self.n)


def sample_conditioned(pmf: PmfTable, n: int, seed, size: int | None = None):
    """Exact draw(s) of the loop-length multiset given N = n."""
    if n == 0:
        empty = LoopConfiguration(np.zeros(0, np.int64), np.zeros(0, np.int64))
        return empty if size is None else LoopBatch(np.zeros(0, np.int64), np.zeros(0, np.int64), size, 0)
    sampler = ConditionedSampler(pmf, n)
    batch = sampler.draw(1 if size is None else size, seed)
    return batch.configuration(0) if size is None else batch


# ---------------------------------------------------------------------------
# spatial paths on the torus

def _winding(rng, sd: float, d: int) -> np.ndarray:
    """Integer vector with P(w) proportional to exp(-|w|^2 / (2 sd^2)), |w_i| <= 6 sd + 1."""
    top = int(math.ceil(6 * sd)) + 1
    grid = np.arange(-top, top + 1)
    p = np.exp(-(grid**2) / (2 * sd * sd)) if sd > 0 else (grid == 0).astype(float)
    p /= p.sum()
    return rng.choice(grid, size=d, p=p)


def sample_spatial_torus(config: LoopConfiguration, params: ModelParams, ds: float, seed) -> LoopConfiguration:
    """Attach a closed Brownian path (generator Laplacian) to every loop on the torus of side L.

    A loop of length j lasts beta j; it starts uniformly, winds w with weight
    exp(-|w L|^2 / (4 beta j)), and follows a Brownian bridge sampled at
    about ``ds`` time steps.  Points are stored wrapped into [0, L)^d.
    """
    if params.geometry.kind != "torus":
        raise UnsupportedError("spatial paths are only sampled on the torus")
    if ds <= 0:
        raise ConfigError("ds must be positive")
    rng = _as_rng(seed)
    d, L, beta = params.d, params.L, params.beta
    paths = []
    for j in config.loops():
        duration = beta * j
        steps = max(1, int(round(duration / ds)))
        h = duration / steps
        start = rng.uniform(0.0, L, size=d)
        wind = _winding(rng, math.sqrt(2 * duration) / L, d) * L
        walk = np.vstack([np.zeros(d), np.cumsum(rng.normal(0.0, math.sqrt(2 * h), size=(steps, d)), axis=0)])
        frac = np.arange(steps + 1)[:, None] / steps
        bridge = walk - frac * (walk[-1] - wind)
        pts = np.mod(start + bridge, L)
        pts[-1] = pts[0]
        paths.append(pts)
    return LoopConfiguration(config.lengths, config.counts, paths)


def write_paths_csv(config: LoopConfiguration, path, d: int):
    """Rows loop_id,step,x1..xd,length_j,is_largest."""
    if config.paths is None:
        raise ConfigError("configuration carries no paths")
    loops = config.loops()
    top = loops.max() if len(loops) else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["loop_id", "step"] + [f"x{i + 1}" for i in range(d)] + ["length_j", "is_largest"])
        for loop_id, (j, pts) in enumerate(zip(loops, config.paths)):
            for step, p in enumerate(pts):
                out.writerow([loop_id, step] + [f"{v:.17g}" for v in p] + [int(j), int(j == top)])


# ---------------------------------------------------------------------------
# estimation

Z99 = 2.5758293035489004


@dataclass(frozen=True)
class RunningStats:
    """Count, mean and sum of squared deviations; merges associatively."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "RunningStats":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls()
        mean = float(v.mean())
        return cls(int(v.size), mean, float(((v - mean) ** 2).sum()))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        return RunningStats(n, mean, self.m2 + other.m2 + delta * delta * self.count * other.count / n)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0


@dataclass(frozen=True)
class Estimate:
    mean: float
    low: float
    high: float
    stderr: float
    n: int

    @property
    def width(self) -> float:
        return self.high - self.low


def mc_estimate(observable, sampler, n_samples: int, seed, n_batches: int = 20) -> Estimate:
    """Batch-means estimate of E[observable] with a normal 99% interval.

    ``sampler(rng, size)`` returns a batch of samples and ``observable`` maps
    it to one value per sample.  Batch b uses stream b of ``seed``.
    """
    if n_samples < 2:
        raise ConfigError("need at least two samples")
    spec = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    n_batches = max(2, min(n_batches, n_samples))
    sizes = np.full(n_batches, n_samples // n_batches)
    sizes[: n_samples % n_batches] += 1
    total = RunningStats()
    batch_means = []
    for b, size in enumerate(sizes):
        values = np.asarray(observable(sampler(spec.child(spec.stream * 1_000_003 + b).rng(), int(size))), dtype=float)
        stats = RunningStats.of(values)
        batch_means.append(stats.mean)
        total = total.merge(stats)
    bm = np.asarray(batch_means)
    se = float(np.sqrt(np.sum(sizes * (bm - total.mean) ** 2) / (n_batches - 1) / n_samples))
    return Estimate(total.mean, total.mean - Z99 * se, total.mean + Z99 * se, se, n_samples)


# observables acting on count matrices (unconditioned soup) or LoopBatch (conditioned soup)

def particles_le(m: int):
    def obs(sample):
        if isinstance(sample, LoopBatch):
            return sample.particles_in(1, m)
        j = np.arange(1, sample.shape[1] + 1)
        return sample[:, :m] @ j[:m]
    return obs


def particles_ge(m: int):
    def obs(sample):
        if isinstance(sample, LoopBatch):
            return sample.particles_in(m)
        j = np.arange(1, sample.shape[1] + 1)
        return sample[:, m - 1:] @ j[m - 1:]
    return obs


def has_loop_ge(m: int):
    def obs(sample):
        if isinstance(sample, LoopBatch):
            return (sample.largest(1) >= m).astype(float)
        return (sample[:, m - 1:].sum(axis=1) > 0).astype(float)
    return obs


def ranked_fraction(rank: int, scale: float):
    def obs(sample):
        if not isinstance(sample, LoopBatch):
            raise ConfigError("ranked fractions are defined on conditioned batches")
        return sample.largest(rank) / scale
    return obs
