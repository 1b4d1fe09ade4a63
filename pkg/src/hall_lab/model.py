"""Model configuration, triangular impurity lattice, disorder sampling and the random potential.

Units: hbar = e = m_e = 1, so the cyclotron frequency equals B and the
magnetic length is B**-0.5.  The system lives on the box
[-Lx/2, Lx/2] x [-Ly/2, Ly/2] with magnetic periodic boundary conditions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    ConfigError,
    CoveringViolated,
    EvenScale,
    FluxTooSmall,
    NonCommensurate,
)

SQRT3 = math.sqrt(3.0)
TWO_PI = 2.0 * math.pi
FLUX_TOL = 1e-9


# ---------------------------------------------------------------------------
# coupling density


@dataclass(frozen=True)
class Density:
    """Single-site coupling density g.

    ``kind`` is one of ``uniform``, ``triangular`` (symmetric tent on
    [lo, hi]) or ``tabulated`` (piecewise linear through ``table``).
    ``scale`` multiplies the density; anything other than 1 produces an
    un-normalized g, which is only useful for testing linear bounds.
    """

    kind: Literal["uniform", "triangular", "tabulated"] = "uniform"
    lo: float = -1.0
    hi: float = 1.0
    table: tuple[tuple[float, float], ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "triangular", "tabulated"):
            raise ConfigError(f"g.kind: unknown density kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.table) < 2:
                raise ConfigError("g.table: need at least two nodes")
            xs = [t[0] for t in self.table]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ConfigError("g.table: nodes must be strictly increasing")
            if any(t[1] < 0 for t in self.table):
                raise ConfigError("g.table: density must be non-negative")
            object.__setattr__(self, "lo", float(xs[0]))
            object.__setattr__(self, "hi", float(xs[-1]))
        if not self.hi > self.lo:
            raise ConfigError("g: empty support")

    @classmethod
    def tabulated(cls, xs: Sequence[float], ys: Sequence[float], normalize: bool = True) -> "Density":
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        if normalize:
            ys = ys / np.trapezoid(ys, xs)
        return cls(kind="tabulated", table=tuple(zip(xs.tolist(), ys.tolist())))

    def scaled(self, factor: float) -> "Density":
        return replace(self, scale=self.scale * factor)

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    def pdf(self, lam):
        lam = np.asarray(lam, float)
        w = self.hi - self.lo
        if self.kind == "uniform":
            out = np.where((lam >= self.lo) & (lam <= self.hi), 1.0 / w, 0.0)
        elif self.kind == "triangular":
            mid = 0.5 * (self.lo + self.hi)
            peak = 2.0 / w
            out = np.clip(peak * (1.0 - np.abs(lam - mid) / (0.5 * w)), 0.0, None)
        else:
            xs, ys = np.array(self.table).T
            out = np.interp(lam, xs, ys, left=0.0, right=0.0)
        return self.scale * out

    def cdf(self, lam):
        lam = np.clip(np.asarray(lam, float), self.lo, self.hi)
        w = self.hi - self.lo
        if self.kind == "uniform":
            out = (lam - self.lo) / w
        elif self.kind == "triangular":
            mid = 0.5 * (self.lo + self.hi)
            t = (lam - self.lo) / (0.5 * w)
            left = 0.5 * t**2
            t2 = (self.hi - lam) / (0.5 * w)
            out = np.where(lam <= mid, left, 1.0 - 0.5 * t2**2)
        else:
            xs, ys = np.array(self.table).T
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
            k = np.clip(np.searchsorted(xs, lam, side="right") - 1, 0, len(xs) - 2)
            dx = lam - xs[k]
            slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
            out = cum[k] + ys[k] * dx + 0.5 * slope * dx**2
        return self.scale * out

    def mass(self, lo: float, hi: float) -> float:
        """Integral of g over [lo, hi]."""
        if hi <= lo:
            return 0.0
        return float(self.cdf(hi) - self.cdf(lo))

    def quad_mass(self, lo: float, hi: float) -> float:
        """Same as :meth:`mass` but by adaptive quadrature (independent route)."""
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        if hi <= lo:
            return 0.0
        pts = [x for x, _ in self.table if lo < x < hi] or None
        val, _ = integrate.quad(lambda t: float(self.pdf(t)), lo, hi, points=pts, limit=200)
        return val

    @property
    def sup_norm(self) -> float:
        if self.kind == "uniform":
            return self.scale / (self.hi - self.lo)
        if self.kind == "triangular":
            return self.scale * 2.0 / (self.hi - self.lo)
        return self.scale * max(t[1] for t in self.table)

    def ppf(self, q):
        """Inverse CDF (normalized densities only)."""
        q = np.asarray(q, float)
        if self.kind == "uniform":
            return self.lo + q * (self.hi - self.lo)
        if self.kind == "triangular":
            mid = 0.5 * (self.lo + self.hi)
            hw = 0.5 * (self.hi - self.lo)
            return np.where(q <= 0.5, self.lo + hw * np.sqrt(2 * q), self.hi - hw * np.sqrt(2 * (1 - q)))
        # tabulated: invert the piecewise quadratic CDF on a fine grid
        xs = np.linspace(self.lo, self.hi, 4097)
        cs = self.cdf(xs) / self.scale
        cs, idx = np.unique(cs, return_index=True)
        return np.interp(q, cs, xs[idx])

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))


# ---------------------------------------------------------------------------
# periodic background fields


@dataclass(frozen=True)
class FourierField:
    """Scalar periodic field  sum_k amp * cos(2 pi (kx x/Lx + ky y/Ly) + phase) + const."""

    modes: tuple[tuple[int, int, float, float], ...] = ()
    const: float = 0.0

    def __call__(self, x, y, Lx: float, Ly: float):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.full(np.broadcast(x, y).shape, self.const, dtype=float)
        for kx, ky, amp, ph in self.modes:
            out = out + amp * np.cos(TWO_PI * (kx * x / Lx + ky * y / Ly) + ph)
        return out

    def gradient(self, x, y, Lx: float, Ly: float):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        gx = np.zeros(np.broadcast(x, y).shape)
        gy = np.zeros_like(gx)
        for kx, ky, amp, ph in self.modes:
            s = -amp * np.sin(TWO_PI * (kx * x / Lx + ky * y / Ly) + ph)
            gx = gx + s * TWO_PI * kx / Lx
            gy = gy + s * TWO_PI * ky / Ly
        return gx, gy

    @property
    def is_zero(self) -> bool:
        return not self.modes and self.const == 0.0

    def sup_parts(self, Lx: float, Ly: float, n: int = 257) -> tuple[float, float]:
        """(||V^+||_inf, ||V^-||_inf) sampled on an n x n grid."""
        if not self.modes:
            return max(self.const, 0.0), max(-self.const, 0.0)
        xs = np.linspace(-Lx / 2, Lx / 2, n)
        ys = np.linspace(-Ly / 2, Ly / 2, n)
        v = self(xs[:, None], ys[None, :], Lx, Ly)
        return float(max(v.max(), 0.0)), float(max(-v.min(), 0.0))


@dataclass(frozen=True)
class VectorFourierField:
    """Periodic vector potential A_P.

    ``modes`` entries are (component, kx, ky, amp, phase) with component
    0 for x and 1 for y.  ``gauge`` is an optional periodic scalar whose
    gradient is added to the field.
    """

    modes: tuple[tuple[int, int, int, float, float], ...] = ()
    gauge: FourierField = field(default_factory=FourierField)

    @property
    def is_zero(self) -> bool:
        return not self.modes and not self.gauge.modes

    def __call__(self, x, y, Lx: float, Ly: float):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ax, ay = self.gauge.gradient(x, y, Lx, Ly)
        for comp, kx, ky, amp, ph in self.modes:
            v = amp * np.cos(TWO_PI * (kx * x / Lx + ky * y / Ly) + ph)
            if comp == 0:
                ax = ax + v
            else:
                ay = ay + v
        return ax, ay

    def line_integral(self, r0: np.ndarray, r1: np.ndarray, Lx: float, Ly: float, nodes: int = 8) -> np.ndarray:
        """Integral of A_P . dl along straight segments r0 -> r1 (Gauss-Legendre)."""
        r0 = np.atleast_2d(r0)
        r1 = np.atleast_2d(r1)
        if self.is_zero:
            return np.zeros(len(r0))
        t, w = np.polynomial.legendre.leggauss(nodes)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        d = r1 - r0
        pts = r0[:, None, :] + t[None, :, None] * d[:, None, :]
        ax, ay = self(pts[..., 0], pts[..., 1], Lx, Ly)
        return (ax * d[:, 0:1] + ay * d[:, 1:2]) @ w

    def sup_norm(self, Lx: float, Ly: float, n: int = 257) -> float:
        if self.is_zero:
            return 0.0
        xs = np.linspace(-Lx / 2, Lx / 2, n)
        ys = np.linspace(-Ly / 2, Ly / 2, n)
        ax, ay = self(xs[:, None], ys[None, :], Lx, Ly)
        return float(np.sqrt(ax**2 + ay**2).max())


# ---------------------------------------------------------------------------
# configuration


def adjust_torus(Lx_P: float, Ly_P: float, B: float) -> tuple[float, float, float, int]:
    """Shrink Ly so that B*Lx*Ly = 2*pi*M with M = floor(B*Lx_P*Ly_P/(2*pi))."""
    if not (Lx_P > 0 and Ly_P > 0 and B > 0):
        raise ConfigError("adjust_torus: sizes and field must be positive")
    flux = B * Lx_P * Ly_P / TWO_PI
    M = int(math.floor(flux + 1e-12))
    if M < 1:
        raise FluxTooSmall(f"B*Lx*Ly/2pi = {flux:.4g} < 1")
    Ly = TWO_PI * M / (B * Lx_P)
    dLy = max(Ly_P - Ly, 0.0)
    return float(Lx_P), float(Ly), float(dLy), M


@dataclass(frozen=True)
class ModelConfig:
    B: float
    Lx: float
    Ly: float
    M: int
    grid_Nx: int
    grid_Ny: int
    a: float = 1.0
    r_u: float = 0.7
    u_0: float = 0.1
    u_amp: float = 1.0
    bump_profile: Literal["cosine-cap", "plateau-cap"] = "cosine-cap"
    lam_min: float = -1.0
    lam_max: float = 1.0
    lam_minus: float = 0.6
    lam_plus: float = 0.6
    g: Density = field(default_factory=Density)
    V0: FourierField = field(default_factory=FourierField)
    AP: VectorFourierField = field(default_factory=VectorFourierField)
    n_max: int = 2

    def __post_init__(self):
        for name in ("B", "Lx", "Ly", "a", "u_amp"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.M < 1:
            raise ConfigError("M: must be a positive integer")
        flux = self.B * self.Lx * self.Ly
        if abs(flux - TWO_PI * self.M) > FLUX_TOL * TWO_PI * self.M:
            raise ConfigError(f"Lx*Ly: flux quantization violated (B*Lx*Ly = {flux!r}, 2 pi M = {TWO_PI * self.M!r})")
        lo, hi = SQRT3 * self.a / 3, SQRT3 * self.a / 2
        if not lo < self.r_u < hi:
            raise ConfigError(f"r_u: must lie in ({lo:.6f}, {hi:.6f})")
        if not 0 < self.u_0 <= self.u_amp:
            raise ConfigError("u_0: need 0 < u_0 <= u_amp")
        if self.bump_profile not in ("cosine-cap", "plateau-cap"):
            raise ConfigError(f"bump_profile: unknown profile {self.bump_profile!r}")
        if self.grid_Nx < 2 or self.grid_Ny < 2:
            raise ConfigError("grid_Nx: grid too small")
        if self.B * self.hx * self.hy >= TWO_PI:
            raise ConfigError("grid_Nx: plaquette flux B*h^2 must stay below 2 pi")
        if not self.lam_min <= self.lam_max:
            raise ConfigError("lam_min: must not exceed lam_max")
        if self.g.lo < self.lam_min - 1e-12 or self.g.hi > self.lam_max + 1e-12:
            raise ConfigError("g: support must lie in [lam_min, lam_max]")
        if abs(self.g.mass(self.g.lo, self.g.hi) - 1.0) > 1e-9:
            raise ConfigError("g: density must integrate to one")
        if self.lam_minus <= 0 or self.lam_plus <= 0:
            raise ConfigError("lam_minus: percolation cuts must be positive")
        if self.occupation_probability <= 0.5:
            raise ConfigError("lam_plus: need int_{-lam_minus}^{lam_plus} g > 1/2")
        if self.n_max < 1:
            raise ConfigError("n_max: must be >= 1")

    # -- constructors -----------------------------------------------------

    @classmethod
    def landau(cls, B: float, M: int, h: float, aspect: float = 1.0, **kw) -> "ModelConfig":
        """Near-square flux-M torus with grid spacing close to ``h``."""
        area = TWO_PI * M / B
        Lx = math.sqrt(area * aspect)
        Ly = area / Lx
        Nx = max(2, int(math.ceil(Lx / h)))
        Ny = max(2, int(math.ceil(Ly / h)))
        Nx += Nx % 2
        Ny += Ny % 2
        return cls(B=B, Lx=Lx, Ly=Ly, M=M, grid_Nx=Nx, grid_Ny=Ny, **kw)

    @classmethod
    def from_lattice(cls, B: float, nx: int, ny: int, h: float, a: float = 1.0, **kw) -> "ModelConfig":
        """Torus holding an nx x ny triangular lattice, flux-adjusted in y."""
        if ny % 2:
            raise NonCommensurate("ny: triangular rows must be even to wrap on a rectangular torus")
        Lx, Ly, _, M = adjust_torus(nx * a, ny * SQRT3 * a / 2, B)
        Nx = max(2, int(math.ceil(Lx / h)))
        Ny = max(2, int(math.ceil(Ly / h)))
        Nx += Nx % 2
        Ny += Ny % 2
        return cls(B=B, Lx=Lx, Ly=Ly, M=M, grid_Nx=Nx, grid_Ny=Ny, a=a, **kw)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    # -- derived quantities -------------------------------------------------

    @property
    def hx(self) -> float:
        return self.Lx / self.grid_Nx

    @property
    def hy(self) -> float:
        return self.Ly / self.grid_Ny

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def omega_c(self) -> float:
        return self.B

    @property
    def ell_B(self) -> float:
        return 1.0 / math.sqrt(self.B)

    @property
    def u_1(self) -> float:
        return 2.0 * self.u_amp

    @property
    def occupation_probability(self) -> float:
        return self.g.mass(-self.lam_minus, self.lam_plus)

    @cached_property
    def V0_parts(self) -> tuple[float, float]:
        return self.V0.sup_parts(self.Lx, self.Ly)

    @cached_property
    def AP_norm(self) -> float:
        return self.AP.sup_norm(self.Lx, self.Ly)

    def landau_energy(self, n: int) -> float:
        return (n + 0.5) * self.B

    def grid_points(self) -> np.ndarray:
        """(Nx*Ny, 2) cell-centre coordinates, index = ix*Ny + iy."""
        xs = -self.Lx / 2 + (np.arange(self.grid_Nx) + 0.5) * self.hx
        ys = -self.Ly / 2 + (np.arange(self.grid_Ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def min_image(self, d: np.ndarray) -> np.ndarray:
        """Minimum-image displacement on the torus."""
        d = np.array(d, dtype=float, copy=True)
        d[..., 0] -= self.Lx * np.round(d[..., 0] / self.Lx)
        d[..., 1] -= self.Ly * np.round(d[..., 1] / self.Ly)
        return d


# ---------------------------------------------------------------------------
# triangular lattice


@dataclass(frozen=True)
class TriangularLattice:
    a: float
    nx: int
    ny: int
    Lx: float
    Ly: float
    positions: np.ndarray  # (N, 2), inside the fundamental domain
    mn: np.ndarray  # (N, 2) integer lattice coordinates (m, n) with z = m a1 + n a2
    neighbors: np.ndarray  # (N, 6)

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def y_scale(self) -> float:
        """Uniform y compression used to absorb the flux adjustment."""
        return self.Ly / (self.ny * SQRT3 * self.a / 2)

    @property
    def cell_areas(self) -> np.ndarray:
        return np.full(self.n_sites, SQRT3 / 2 * self.a**2 * self.y_scale)

    def hexagon_vertices(self, i: int) -> np.ndarray:
        ang = np.pi / 6 + np.arange(6) * np.pi / 3
        r = self.a / SQRT3
        v = np.column_stack([r * np.cos(ang), r * np.sin(ang) * self.y_scale])
        return self.positions[i] + v


def build_lattice(cfg: ModelConfig) -> TriangularLattice:
    a = cfg.a
    nx_f = cfg.Lx / a
    nx = int(round(nx_f))
    if nx < 1 or abs(nx_f - nx) > 1e-9 * max(1.0, nx_f):
        raise NonCommensurate(f"Lx/a = {nx_f:.6g} is not a positive integer")
    row = SQRT3 * a / 2
    # the unadjusted height ny * row exceeds Ly by dLy in [0, 2 pi / (B Lx))
    ny = 2 * int(math.ceil(cfg.Ly / row / 2 - 1e-9))
    slack = TWO_PI / (cfg.B * cfg.Lx)
    if ny < 2 or ny * row - cfg.Ly >= slack:
        raise NonCommensurate(f"Ly = {cfg.Ly:.6g} is not within one flux slack of an even number of rows")
    s = cfg.Ly / (ny * row)
    ii, nn = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ii = ii.ravel()
    nn = nn.ravel() - ny // 2
    par = np.mod(nn, 2)
    x = (ii + 0.5 * par) * a
    x = np.mod(x + cfg.Lx / 2, cfg.Lx) - cfg.Lx / 2
    y = nn * row * s
    pos = np.column_stack([x, y])
    # lattice coordinates: x = (m + n/2) a  ->  m = i + (par - n)/2
    m = ii + (par - nn) // 2
    m = np.mod(m + nx // 2, nx) - nx // 2
    mn = np.column_stack([m, nn])

    def idx(i, n):
        return np.mod(i, nx) * ny + np.mod(n + ny // 2, ny)

    even = par == 0
    nb = np.empty((nx * ny, 6), dtype=int)
    nb[:, 0] = idx(ii + 1, nn)
    nb[:, 1] = idx(ii - 1, nn)
    nb[:, 2] = idx(ii, nn + 1)
    nb[:, 3] = idx(ii, nn - 1)
    shift = np.where(even, -1, 1)
    nb[:, 4] = idx(ii + shift, nn + 1)
    nb[:, 5] = idx(ii + shift, nn - 1)
    return TriangularLattice(a=a, nx=nx, ny=ny, Lx=cfg.Lx, Ly=cfg.Ly, positions=pos, mn=mn, neighbors=nb)


# ---------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DisorderRealization:
    seed: int
    couplings: np.ndarray  # lambda_z per lattice site, lattice order

    def __eq__(self, other):
        return (
            isinstance(other, DisorderRealization)
            and self.seed == other.seed
            and np.array_equal(self.couplings, other.couplings)
        )

    def __hash__(self):
        return hash((self.seed, self.couplings.tobytes()))


def sample_disorder(cfg: ModelConfig, seed: int, n_sites: int | None = None) -> DisorderRealization:
    if n_sites is None:
        n_sites = build_lattice(cfg).n_sites
    rng = np.random.default_rng(seed)
    lam = cfg.g.sample(rng, n_sites)
    lam = np.clip(lam, cfg.lam_min, cfg.lam_max)
    lam.setflags(write=False)
    return DisorderRealization(seed=seed, couplings=lam)


def constant_realization(cfg: ModelConfig, value: float) -> DisorderRealization:
    n = build_lattice(cfg).n_sites
    lam = np.full(n, float(value))
    lam.setflags(write=False)
    return DisorderRealization(seed=-1, couplings=lam)


# ---------------------------------------------------------------------------
# bump potential


def _in_hexagon(d: np.ndarray, a: float) -> np.ndarray:
    """Displacements d (..., 2) inside the closed Voronoi hexagon of a site."""
    h = 0.5 * a * (1 + 1e-12)
    dx, dy = d[..., 0], d[..., 1]
    return (np.abs(dx) <= h) & (np.abs(0.5 * dx + SQRT3 / 2 * dy) <= h) & (np.abs(-0.5 * dx + SQRT3 / 2 * dy) <= h)


def bump(cfg: ModelConfig, d: np.ndarray, y_scale: float = 1.0) -> np.ndarray:
    """Single-site bump u evaluated at displacements d (..., 2)."""
    d = np.asarray(d, float)
    r = np.hypot(d[..., 0], d[..., 1])
    if cfg.bump_profile == "cosine-cap":
        u = np.where(r < cfg.r_u, cfg.u_amp * np.cos(0.5 * np.pi * r / cfg.r_u) ** 2, 0.0)
    else:
        r_in = SQRT3 * cfg.a / 3
        taper = cfg.u_amp * (cfg.r_u - r) / (cfg.r_u - r_in)
        u = np.where(r <= r_in, cfg.u_amp, np.where(r < cfg.r_u, taper, 0.0))
    dd = d.copy()
    dd[..., 1] /= y_scale
    return np.where(_in_hexagon(dd, cfg.a), np.maximum(u, cfg.u_0), u)


def evaluate_potential(
    cfg: ModelConfig,
    realization: DisorderRealization,
    points: np.ndarray,
    lattice: TriangularLattice | None = None,
    check_covering: bool = False,
) -> np.ndarray:
    """Random potential sum_z lambda_z u(r - z) at ``points`` (torus metric)."""
    lat = lattice or build_lattice(cfg)
    if check_covering:
        covering_floor(cfg, lat)
    pts = np.atleast_2d(np.asarray(points, float))
    out = np.zeros(len(pts))
    lam = realization.couplings
    # chunk to bound memory
    for start in range(0, len(pts), 2048):
        p = pts[start : start + 2048]
        d = cfg.min_image(p[:, None, :] - lat.positions[None, :, :])
        out[start : start + 2048] = bump(cfg, d, lat.y_scale) @ lam
    return out


def covering_floor(cfg: ModelConfig, lattice: TriangularLattice | None = None, refine: int = 4) -> float:
    """min over a probe grid (``refine`` points per a) of sum_z u(r - z); raises if below u_0."""
    lat = lattice or build_lattice(cfg)
    nx = int(math.ceil(refine * cfg.Lx / cfg.a))
    ny = int(math.ceil(refine * cfg.Ly / cfg.a))
    xs = -cfg.Lx / 2 + (np.arange(nx) + 0.37) * cfg.Lx / nx
    ys = -cfg.Ly / 2 + (np.arange(ny) + 0.29) * cfg.Ly / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    ones = DisorderRealization(seed=-1, couplings=np.ones(lat.n_sites))
    vals = evaluate_potential(cfg, ones, pts, lat)
    floor = float(vals.min())
    if floor < cfg.u_0 * (1 - 1e-12):
        raise CoveringViolated(f"covering floor {floor:.4g} < u_0 = {cfg.u_0:.4g}")
    return floor


# ---------------------------------------------------------------------------
# region masks


@dataclass(frozen=True)
class RegionMask:
    kind: str
    indicator: np.ndarray  # boolean, per grid point or per lattice site
    meta: dict
    on: Literal["grid", "sites"] = "grid"

    @property
    def count(self) -> int:
        return int(self.indicator.sum())

    def __and__(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.indicator & other.indicator, {"op": "and"}, self.on)

    def __or__(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.indicator | other.indicator, {"op": "or"}, self.on)

    def __sub__(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.indicator & ~other.indicator, {"op": "minus"}, self.on)


def parallelogram_sites(mn: np.ndarray, l: int, lp: int, center=(0, 0)) -> np.ndarray:
    """Sites of the l x lp hexagon parallelogram centred at lattice point ``center``."""
    dm = mn[:, 0] - center[0]
    dn = mn[:, 1] - center[1]
    return (np.abs(dm) <= (l - 1) // 2) & (np.abs(dn) <= (lp - 1) // 2)


def _check_odd(l, lp):
    for name, v in (("l", l), ("lp", lp)):
        if int(v) != v or v < 1 or int(v) % 2 == 0:
            raise EvenScale(f"{name} = {v}: parallelogram scales must be odd positive integers")


def _nearest_site(cfg: ModelConfig, lat: TriangularLattice, pts: np.ndarray) -> np.ndarray:
    out = np.empty(len(pts), dtype=int)
    for start in range(0, len(pts), 2048):
        p = pts[start : start + 2048]
        d = cfg.min_image(p[:, None, :] - lat.positions[None, :, :])
        d[..., 1] /= lat.y_scale
        out[start : start + 2048] = np.argmin(d[..., 0] ** 2 + d[..., 1] ** 2, axis=1)
    return out


def region_mask(kind: str, params: dict, cfg: ModelConfig, on: Literal["grid", "sites"] = "grid", points=None) -> RegionMask:
    """Indicator of a named region on the grid (default), on lattice sites or on given points.

    kinds: parallelogram (l, lp, center=(m, n)), annulus (l, lp, center),
    rectangle (x0, y0, wx, wy), disk (x0, y0, radius), halfplane-switch
    (axis 1 or 2, a=(a1, a2)), custom (indicator).
    """
    pts = cfg.grid_points() if points is None and on == "grid" else points
    meta = dict(params)
    if kind in ("parallelogram", "annulus"):
        l, lp = params["l"], params["lp"]
        _check_odd(l, lp)
        lat = build_lattice(cfg)
        c = tuple(params.get("center", (0, 0)))
        if kind == "parallelogram":
            site_ind = parallelogram_sites(lat.mn, l, lp, c)
        else:
            site_ind = parallelogram_sites(lat.mn, 3 * l, 3 * lp, c) & ~parallelogram_sites(lat.mn, l, lp, c)
        if on == "sites":
            return RegionMask(kind, site_ind, meta, "sites")
        return RegionMask(kind, site_ind[_nearest_site(cfg, lat, pts)], meta, "grid")
    if on == "sites":
        pts = build_lattice(cfg).positions
    if kind == "rectangle":
        x0, y0 = params.get("x0", 0.0), params.get("y0", 0.0)
        d = cfg.min_image(pts - np.array([x0, y0]))
        ind = (np.abs(d[:, 0]) <= params["wx"] / 2) & (np.abs(d[:, 1]) <= params["wy"] / 2)
    elif kind == "disk":
        d = cfg.min_image(pts - np.array([params.get("x0", 0.0), params.get("y0", 0.0)]))
        ind = np.hypot(d[:, 0], d[:, 1]) <= params["radius"]
    elif kind == "halfplane-switch":
        a1, a2 = params.get("a", (0.0, 0.0))
        axis = params.get("axis", 1)
        ind = pts[:, 0] >= a1 if axis == 1 else pts[:, 1] >= a2
    elif kind == "custom":
        ind = np.asarray(params["indicator"], bool)
    else:
        raise ConfigError(f"kind: unknown region kind {kind!r}")
    return RegionMask(kind, ind, meta, on)
