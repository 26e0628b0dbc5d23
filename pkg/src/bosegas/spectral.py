"""Laplacian spectra, theta series, heat traces and heat kernels on unit tori and boxes.

All domains are unit cells ``[0, 1]^d`` (volume one).  Scaled domains of side
``L`` enter only through :func:`heat_kernel`, which takes physical coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError, ToleranceError

PI = math.pi
#: crossover between spectral and image representations, per axis
T_SWITCH = 1.0 / (2.0 * PI)
# exponent cut for series truncation: e^{-41} < 1e-17
_EXP_CUT = 41.0

BCS = ("periodic", "dirichlet", "neumann")


@dataclass(frozen=True)
class Geometry:
    """Flat unit-volume domain: a torus or a box with one boundary condition on every face."""

    kind: str
    d: int
    bc: str = "periodic"

    def __post_init__(self):
        if self.kind not in ("torus", "box"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if not 1 <= self.d <= 8:
            raise ConfigError(f"dimension {self.d} outside 1..8")
        if self.kind == "torus" and self.bc != "periodic":
            raise ConfigError("a torus only carries periodic boundary conditions")
        if self.kind == "box" and self.bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"box boundary condition must be dirichlet or neumann, got {self.bc!r}")

    @classmethod
    def parse(cls, text: str) -> "Geometry":
        """Parse ``torus:<d>``, ``box:<d>:dirichlet`` or ``box:<d>:neumann``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "torus" and len(parts) == 2:
                return cls("torus", int(parts[1]))
            if parts[0] == "box" and len(parts) == 3:
                return cls("box", int(parts[1]), parts[2])
        except ValueError:
            pass
        raise ConfigError(f"bad geometry {text!r}; expected torus:<d> or box:<d>:dirichlet|neumann")

    def __str__(self):
        return f"torus:{self.d}" if self.kind == "torus" else f"box:{self.d}:{self.bc}"

    @property
    def volume(self) -> float:
        return 1.0

    @property
    def boundary_area(self) -> float:
        return 0.0 if self.kind == "torus" else 2.0 * self.d

    @property
    def zero_modes(self) -> int:
        """Dimension of the kernel of the Laplacian."""
        return 0 if self.bc == "dirichlet" else 1

    @property
    def lambda1(self) -> float:
        """Smallest eigenvalue of -Laplacian on the unit cell."""
        return self.d * PI**2 if self.bc == "dirichlet" else 0.0

    @property
    def axis_scale(self) -> float:
        """lambda = axis_scale * |k|^2."""
        return 4 * PI**2 if self.kind == "torus" else PI**2


def parse_geometry(text) -> Geometry:
    return text if isinstance(text, Geometry) else Geometry.parse(text)


# ---------------------------------------------------------------------------
# 1D theta factors

def _n_terms(exponent_scale: float) -> int:
    """Smallest count m with exp(-exponent_scale * m^2) below the truncation cut."""
    return int(math.ceil(math.sqrt(_EXP_CUT / exponent_scale))) + 1


def _theta_spectral(t: np.ndarray, bc: str) -> np.ndarray:
    c = 4 * PI**2 if bc == "periodic" else PI**2
    m = np.arange(_n_terms(c * float(t.min())), 0, -1, dtype=float)  # smallest terms first
    s = np.exp(-c * np.multiply.outer(t, m * m)).sum(axis=-1)
    if bc == "periodic":
        return 1.0 + 2.0 * s
    if bc == "dirichlet":
        return s
    return 1.0 + s


def _theta_image(t: np.ndarray, bc: str) -> np.ndarray:
    # periodic: (4 pi t)^{-1/2} sum_m exp(-m^2/(4t));
    # full Dirichlet sum over Z: (pi t)^{-1/2} sum_m exp(-m^2/t)
    q = 4.0 * t if bc == "periodic" else t
    m = np.arange(_n_terms(1.0 / float(q.max())), 0, -1, dtype=float)
    full = (PI * q) ** -0.5 * (1.0 + 2.0 * np.exp(-np.multiply.outer(1.0 / q, m * m)).sum(axis=-1))
    if bc == "periodic":
        return full
    half = 0.5 * (full - 1.0)
    return half if bc == "dirichlet" else half + 1.0


def theta_1d(t, bc: str, method: str = "auto"):
    """One-dimensional heat trace on the unit interval.

    ``periodic``: sum over n in Z of exp(-4 pi^2 n^2 t); ``dirichlet``: sum over
    n >= 1 of exp(-pi^2 n^2 t); ``neumann``: the Dirichlet sum plus the zero mode.

    ``method`` is ``"auto"`` (spectral above ``T_SWITCH``, images below),
    ``"spectral"`` or ``"image"``.  Accepts scalars or arrays.
    """
    if bc not in BCS:
        raise ConfigError(f"unknown boundary condition {bc!r}")
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("theta_1d needs t > 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    if method == "auto":
        big = flat > T_SWITCH
        if big.any():
            out[big] = _theta_spectral(flat[big], bc)
        if (~big).any():
            out[~big] = _theta_image(flat[~big], bc)
    elif method == "spectral":
        out = _theta_spectral(flat, bc)
    elif method == "image":
        out = _theta_image(flat, bc)
    else:
        raise ConfigError(f"unknown theta method {method!r}")
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def theta_image_mp(t: float, bc: str, dps: int | None = None) -> float:
    """Image-series theta factor in extended precision.

    The Dirichlet image form subtracts two numbers that agree to about
    ``pi^2 t / log(10)`` digits, so double precision loses everything for t >~ 3.
    """
    import mpmath

    if dps is None:
        dps = 30 + int(PI**2 * t / math.log(10))
    with mpmath.workdps(dps):
        tt = mpmath.mpf(t)
        q = 4 * tt if bc == "periodic" else tt
        full = mpmath.nsum(lambda m: mpmath.exp(-m * m / q), [-mpmath.inf, mpmath.inf]) / mpmath.sqrt(mpmath.pi * q)
        if bc == "periodic":
            return float(full)
        half = (full - 1) / 2
        return float(half if bc == "dirichlet" else half + 1)


def heat_trace(g: Geometry, t):
    """Z(t) = sum_k exp(-lambda_k t), the product of the per-axis theta factors."""
    g = parse_geometry(g)
    return theta_1d(t, g.bc) ** g.d


# ---------------------------------------------------------------------------
# spectrum

class Shell(NamedTuple):
    eigenvalue: float
    multiplicity: int


def _axis_shell_counts(bc: str, s_max: int) -> np.ndarray:
    """Number of integers n in the per-axis index set with n^2 = s, for s = 0..s_max."""
    c = np.zeros(s_max + 1, dtype=np.int64)
    m = np.arange(0, math.isqrt(s_max) + 1)
    if bc == "periodic":
        c[m * m] = 2
        c[0] = 1
    elif bc == "dirichlet":
        c[m[1:] ** 2] = 1
    else:
        c[m * m] = 1
    return c


def shell_counts(g: Geometry, s_max: int) -> np.ndarray:
    """Multiplicity of |k|^2 = s for s = 0..s_max (k in the geometry's index lattice)."""
    g = parse_geometry(g)
    axis = _axis_shell_counts(g.bc, s_max)
    total = axis.copy()
    for _ in range(g.d - 1):
        total = np.convolve(total, axis)[: s_max + 1]
    return total


def eigenvalues(g: Geometry, count: int) -> list[Shell]:
    """The ``count`` smallest distinct eigenvalues of -Laplacian with multiplicities, ascending."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    g = parse_geometry(g)
    s_max = max(8, 2 * count)
    while True:
        mult = shell_counts(g, s_max)
        (s,) = np.nonzero(mult)
        if len(s) >= count:
            s = s[:count]
            return [Shell(g.axis_scale * float(v), int(mult[v])) for v in s]
        s_max *= 2


def _axis_mode(bc: str, k: int, x):
    x = np.asarray(x, dtype=float)
    r2 = math.sqrt(2.0)
    if bc == "periodic":
        if k == 0:
            return np.ones_like(x)
        return r2 * (np.cos(2 * PI * k * x) if k > 0 else np.sin(2 * PI * -k * x))
    if bc == "dirichlet":
        return r2 * np.sin(PI * k * x)
    return np.ones_like(x) if k == 0 else r2 * np.cos(PI * k * x)


@dataclass(frozen=True)
class Eigenmode:
    """Real L^2-normalised eigenfunction on the unit cell with its eigenvalue.

    On the torus a positive index component means a cosine factor and a
    negative one a sine factor, so every mode is real.
    """

    geometry: Geometry
    k: tuple
    eigenvalue: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for axis, ki in enumerate(self.k):
            out = out * _axis_mode(self.geometry.bc, ki, x[..., axis])
        return out


def eigenmodes(g: Geometry, count: int) -> list[Eigenmode]:
    """The ``count`` lowest individual modes, ties broken by lexicographic index."""
    g = parse_geometry(g)
    shells = eigenvalues(g, count)
    s_top = int(round(shells[-1].eigenvalue / g.axis_scale))
    r = math.isqrt(s_top)
    if g.bc == "periodic":
        axis = range(-r, r + 1)
    elif g.bc == "dirichlet":
        axis = range(1, r + 1)
    else:
        axis = range(0, r + 1)
    ks = [k for k in itertools.product(axis, repeat=g.d) if sum(v * v for v in k) <= s_top]
    ks.sort(key=lambda k: (sum(v * v for v in k), k))
    return [Eigenmode(g, k, g.axis_scale * sum(v * v for v in k)) for k in ks[:count]]


def ground_state(g: Geometry) -> Eigenmode:
    """phi^{(1)}, positive in the interior."""
    return eigenmodes(g, 1)[0]


# ---------------------------------------------------------------------------
# heat kernel

def _gauss(u, s):
    return np.exp(-(u * u) / (4.0 * s)) / np.sqrt(4.0 * PI * s)


def kernel_1d(u, v, s, bc: str, method: str = "auto"):
    """Heat kernel of the unit interval, generator d^2/dx^2, at time s.

    Broadcasts over ``u``, ``v`` and ``s``.
    """
    u, v, s = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (u, v, s)))
    out = np.empty(u.shape)
    if method == "auto":
        spec = s > T_SWITCH
    else:
        spec = np.full(u.shape, method == "spectral")
    if spec.any():
        out[spec] = _kernel_spectral(u[spec], v[spec], s[spec], bc)
    if (~spec).any():
        out[~spec] = _kernel_image(u[~spec], v[~spec], s[~spec], bc)
    return out


def _kernel_spectral(u, v, s, bc):
    c = 4 * PI**2 if bc == "periodic" else PI**2
    n = np.arange(_n_terms(c * float(s.min())), 0, -1, dtype=float)
    damp = np.exp(-c * np.multiply.outer(s, n * n))
    if bc == "periodic":
        return 1.0 + 2.0 * (damp * np.cos(2 * PI * np.multiply.outer(u - v, n))).sum(-1)
    if bc == "dirichlet":
        return 2.0 * (damp * np.sin(PI * np.multiply.outer(u, n)) * np.sin(PI * np.multiply.outer(v, n))).sum(-1)
    return 1.0 + 2.0 * (damp * np.cos(PI * np.multiply.outer(u, n)) * np.cos(PI * np.multiply.outer(v, n))).sum(-1)


def _kernel_image(u, v, s, bc):
    period = 1.0 if bc == "periodic" else 2.0
    # images beyond |shift| > 1 + sqrt(4 s * cut) carry weight < e^{-41}
    m_max = int(math.ceil((1.0 + math.sqrt(4.0 * float(s.max()) * _EXP_CUT)) / period)) + 1
    m = np.arange(-m_max, m_max + 1, dtype=float) * period
    ss = s[..., None]
    direct = _gauss((u - v)[..., None] + m, ss)
    if bc == "periodic":
        return direct.sum(-1)
    mirror = _gauss((u + v)[..., None] + m, ss)
    sign = -1.0 if bc == "dirichlet" else 1.0
    return (direct + sign * mirror).sum(-1)


def heat_kernel(g: Geometry, L: float, t, x, y, method: str = "auto"):
    """p_t(x, y) on the domain of side L with generator Laplacian.

    ``x`` and ``y`` are points of shape (..., d) in [0, L]^d; ``t`` broadcasts
    against their leading shape.  Uses the unit-cell kernel rescaled as
    L^{-d} prod_i k(x_i/L, y_i/L, t/L^2).
    """
    g = parse_geometry(g)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != g.d or y.shape[-1] != g.d:
        raise DomainError(f"points must have {g.d} coordinates")
    if np.any((x < 0) | (x > L)) or np.any((y < 0) | (y > L)):
        raise DomainError("points outside [0, L]^d")
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("heat kernel needs t > 0")
    s = t / L**2
    out = 1.0
    for i in range(g.d):
        out = out * kernel_1d(x[..., i] / L, y[..., i] / L, s, g.bc, method)
    return out / L**g.d


# ---------------------------------------------------------------------------
# small-t expansion

@dataclass(frozen=True)
class MpCoefficients:
    """Coefficients of t^{-d/2}, t^{-(d-1)/2}, t^{-(d-2)/2} in the small-t heat trace."""

    a0: float
    a1: float
    a2: float
    residual: float = 0.0
    condition: float = float("nan")


def mp_reference(g: Geometry) -> MpCoefficients:
    """Exact coefficients; for boxes they come from expanding ((4 pi t)^{-1/2} -+ 1/2)^d."""
    g = parse_geometry(g)
    a0 = (4 * PI) ** (-g.d / 2)
    if g.kind == "torus":
        return MpCoefficients(a0, 0.0, 0.0)
    sigma = -0.5 if g.bc == "dirichlet" else 0.5
    a1 = g.d * sigma * (4 * PI) ** (-(g.d - 1) / 2)
    a2 = math.comb(g.d, 2) * sigma**2 * (4 * PI) ** (-(g.d - 2) / 2)
    return MpCoefficients(a0, a1, a2)


def mp_fit(g: Geometry, t_grid=None, trace=None, max_condition: float = 1e12) -> MpCoefficients:
    """Least-squares estimate of (a0, a1, a2) from heat-trace values on ``t_grid``.

    Rows are scaled by 1/Z(t) so every grid point carries equal relative
    weight.  ``trace`` substitutes another function of t for the heat trace.
    """
    g = parse_geometry(g)
    if t_grid is None:
        t_grid = np.geomspace(1e-6, 1e-4, 16)
    t = np.asarray(t_grid, dtype=float)
    if t.size < 4 or np.any((t <= 0) | (t > 0.5)):
        raise ConfigError("t_grid needs >= 4 points inside (0, 0.5]")
    z = heat_trace(g, t) if trace is None else np.asarray(trace(t), dtype=float)
    d = g.d
    basis = np.stack([t ** (-d / 2), t ** (-(d - 1) / 2), t ** (-(d - 2) / 2)], axis=1)
    a = basis / z[:, None]
    cond = np.linalg.cond(a)
    if not cond < max_condition:
        raise ToleranceError(f"ill-conditioned MP fit (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(a, np.ones_like(t), rcond=None)
    residual = float(np.linalg.norm(basis @ coef - z) / np.linalg.norm(z))
    return MpCoefficients(*map(float, coef), residual=residual, condition=float(cond))
