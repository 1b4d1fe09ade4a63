"""Finite Hermitian matrices for the magnetic torus.

The grid backend is a 5-point Peierls discretization of (p + A)^2 / 2 + V on
an Nx x Ny cell-centred grid.  Hop amplitudes carry exp(i * int A.dl) along
the link; the hop that wraps in y additionally carries the magnetic
translation phase exp(i B Ly x), which makes t^(y)(Ly) act as the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import BandsNotResolved, FluxMismatch, UnsupportedShift
from .model import (
    TWO_PI,
    DisorderRealization,
    ModelConfig,
    TriangularLattice,
    build_lattice,
    evaluate_potential,
)


@dataclass(frozen=True)
class DriveParams:
    F: float
    eta_ad: float
    T: float
    dt: float

    def __post_init__(self):
        if not (self.eta_ad > 0 and self.T > 0 and self.dt > 0):
            raise ValueError("DriveParams: eta_ad, T and dt must be positive")

    def alpha(self, t: float) -> float:
        return -self.F * t * (math.exp(self.eta_ad * t) if t <= 0 else 1.0)

    def field(self, t: float) -> float:
        """E_y(t) = -d alpha / dt."""
        if t <= 0:
            return self.F * (1 + self.eta_ad * t) * math.exp(self.eta_ad * t)
        return self.F


@dataclass
class OperatorMatrix:
    entries: np.ndarray
    basis: Literal["grid", "landau-projected"]
    meta: dict = field(default_factory=dict)
    embedding: np.ndarray | None = None  # grid <- projected isometry (columns)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def hermiticity_error(self) -> float:
        H = self.entries
        return float(np.abs(H - H.conj().T).max())

    def to_grid(self, op: np.ndarray) -> np.ndarray:
        """Lift an operator written in this basis back to the grid basis."""
        if self.embedding is None:
            return op
        Q = self.embedding
        return Q @ op @ Q.conj().T


class GridLinks:
    """Link list of the periodic grid with all static phases precomputed."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        Nx, Ny = cfg.grid_Nx, cfg.grid_Ny
        hx, hy = cfg.hx, cfg.hy
        pts = cfg.grid_points()
        self.points = pts
        ix, iy = np.meshgrid(np.arange(Nx), np.arange(Ny), indexing="ij")
        ix, iy = ix.ravel(), iy.ravel()
        idx = lambda a, b: np.mod(a, Nx) * Ny + np.mod(b, Ny)
        src = np.concatenate([idx(ix, iy), idx(ix, iy)])
        dst = np.concatenate([idx(ix + 1, iy), idx(ix, iy + 1)])
        dvec = np.concatenate([np.tile([hx, 0.0], (Nx * Ny, 1)), np.tile([0.0, hy], (Nx * Ny, 1))])
        axis = np.concatenate([np.zeros(Nx * Ny, int), np.ones(Nx * Ny, int)])
        r0 = pts[src]
        # A0 = (-B y, 0): only x-links pick up a phase
        phase = np.where(axis == 0, -cfg.B * r0[:, 1] * hx, 0.0)
        wrap_y = (axis == 1) & (np.concatenate([iy, iy]) == Ny - 1)
        phase = phase + np.where(wrap_y, cfg.B * cfg.Ly * r0[:, 0], 0.0)
        phase = phase + cfg.AP.line_integral(r0, r0 + dvec, cfg.Lx, cfg.Ly)
        self.src, self.dst, self.dvec, self.axis = src, dst, dvec, axis
        self.wrap_y = wrap_y
        self.t = np.where(axis == 0, 0.5 / hx**2, 0.5 / hy**2)
        self.phase = phase
        self.onsite_kinetic = 1.0 / hx**2 + 1.0 / hy**2

    @property
    def dim(self) -> int:
        return self.cfg.grid_Nx * self.cfg.grid_Ny

    def total_flux(self) -> float:
        """Sum of Peierls phases around every plaquette (should be 2 pi M)."""
        Nx, Ny = self.cfg.grid_Nx, self.cfg.grid_Ny
        ph = np.zeros((2, Nx, Ny))
        ph[self.axis, self.src // Ny, self.src % Ny] = self.phase
        px, py = ph
        # plaquette (i, j): x-link at j, y-link at i+1, x-link at j+1 reversed, y-link at i reversed
        circ = px + np.roll(py, -1, axis=0) - np.roll(px, -1, axis=1) - py
        expected = self.cfg.B * self.cfg.hx * self.cfg.hy
        wrapped = expected + np.angle(np.exp(1j * (circ - expected)))
        return float(wrapped.sum())

    def hops(self, kappa=(0.0, 0.0)) -> np.ndarray:
        k = np.asarray(kappa, float)
        return -self.t * np.exp(1j * (self.phase + self.dvec @ k))

    def assemble(self, onsite: np.ndarray, kappa=(0.0, 0.0)) -> np.ndarray:
        n = self.dim
        H = np.zeros((n, n), dtype=complex)
        amp = self.hops(kappa)
        np.add.at(H, (self.src, self.dst), amp)
        H = H + H.conj().T
        H[np.diag_indices(n)] += onsite + self.onsite_kinetic
        return H

    def derivative(self, s: int, order: int = 1, kappa=(0.0, 0.0)) -> np.ndarray:
        """d^order H / d kappa_s^order (exactly, on the grid)."""
        n = self.dim
        D = np.zeros((n, n), dtype=complex)
        amp = self.hops(kappa) * (1j * self.dvec[:, s]) ** order
        np.add.at(D, (self.src, self.dst), amp)
        return D + D.conj().T


@lru_cache(maxsize=16)
def grid_links(cfg: ModelConfig) -> GridLinks:
    return GridLinks(cfg)


def potential_on_grid(
    cfg: ModelConfig,
    realization: DisorderRealization | None = None,
    lattice: TriangularLattice | None = None,
) -> np.ndarray:
    pts = cfg.grid_points()
    v = cfg.V0(pts[:, 0], pts[:, 1], cfg.Lx, cfg.Ly)
    if realization is not None:
        lat = lattice or build_lattice(cfg)
        v = v + evaluate_potential(cfg, realization, pts, lat)
    return v


def build_hamiltonian(
    cfg: ModelConfig,
    realization: DisorderRealization | None = None,
    kappa=(0.0, 0.0),
    potential: np.ndarray | None = None,
) -> OperatorMatrix:
    """H_0 + V_omega on the grid; ``realization=None`` gives the clean H_0."""
    links = grid_links(cfg)
    flux = links.total_flux()
    if abs(flux - TWO_PI * cfg.M) > 1e-9 * max(1.0, TWO_PI * cfg.M):
        raise FluxMismatch(f"plaquette flux sum {flux:.12g} != 2 pi M = {TWO_PI * cfg.M:.12g}")
    if potential is None:
        potential = potential_on_grid(cfg, realization)
    H = links.assemble(potential, kappa)
    meta = {"gauge": "landau A0=(-By,0)", "kappa": tuple(float(k) for k in kappa), "Nx": cfg.grid_Nx, "Ny": cfg.grid_Ny}
    return OperatorMatrix(H, "grid", meta)


def velocity_operators(cfg: ModelConfig, kappa=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """(v_x, v_y) = dH/dkappa on the grid (potential-independent)."""
    links = grid_links(cfg)
    return links.derivative(0, 1, kappa), links.derivative(1, 1, kappa)


def second_derivative(cfg: ModelConfig, s: int, kappa=(0.0, 0.0)) -> np.ndarray:
    return grid_links(cfg).derivative(s, 2, kappa)


def position_operators(cfg: ModelConfig, center=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of x and y in fundamental-domain coordinates centred on ``center``."""
    d = cfg.min_image(cfg.grid_points() - np.asarray(center, float))
    return d[:, 0], d[:, 1]


def drive_hamiltonian(
    cfg: ModelConfig,
    realization: DisorderRealization | None,
    t: float,
    drive: DriveParams,
    potential: np.ndarray | None = None,
) -> OperatorMatrix:
    """H(t) with A_ex = (0, alpha(t))."""
    return build_hamiltonian(cfg, realization, kappa=(0.0, drive.alpha(t)), potential=potential)


def magnetic_translation(cfg: ModelConfig, shift) -> np.ndarray:
    """Magnetic translation t^(x)(sx) t^(y)(sy) as a grid matrix.

    Shifts must be whole grid steps and multiples of (Lx/M, Ly/M): an x-shift
    has to preserve the exp(i B Ly x) seam phase and a y-shift needs its
    phase exp(i B sy x) periodic in x.  Full periods always qualify.
    """
    sx, sy = (float(s) for s in shift)
    Nx, Ny = cfg.grid_Nx, cfg.grid_Ny
    kx, ky = sx / cfg.hx, sy / cfg.hy
    if abs(kx - round(kx)) > 1e-9 or abs(ky - round(ky)) > 1e-9:
        raise UnsupportedShift(f"shift {shift} is not a whole number of grid steps")
    kx, ky = int(round(kx)), int(round(ky))
    if kx and abs(math.remainder(cfg.B * sx * cfg.Ly, TWO_PI)) > 1e-8:
        raise UnsupportedShift(f"x-shift {sx} changes the seam phase exp(i B Ly x)")
    if ky and abs(math.remainder(cfg.B * sy * cfg.Lx, TWO_PI)) > 1e-8:
        raise UnsupportedShift(f"y-shift {sy} breaks x-periodicity of the translation phase")
    pts = cfg.grid_points()
    n = Nx * Ny
    ix, iy = np.divmod(np.arange(n), Ny)
    x = pts[:, 0]
    # y-translation by ky steps: (t psi)(x, y) = exp(i B sy x) psi(x, y - sy);
    # each wrap below the domain contributes exp(-i B Ly x) from the boundary condition
    src_iy = iy - ky
    wraps = np.floor_divide(src_iy, Ny)
    phase = cfg.B * sy * x + wraps * cfg.B * cfg.Ly * x
    src = np.mod(ix - kx, Nx) * Ny + np.mod(src_iy, Ny)
    T = np.zeros((n, n), dtype=complex)
    # x-translation carries no phase in the Landau gauge; compose (x first, then y)
    # phase uses the target x, which is the same before and after the y-shift
    T[np.arange(n), src] = np.exp(1j * phase)
    return T


def vortex_unitary(cfg: ModelConfig, a=(0.0, 0.0), eps: tuple[float, float] | None = None) -> np.ndarray:
    """Diagonal of U_a: exp(i arg(u - a)) at grid cell centres (the eps-cells of the grid).

    With ``eps`` given, the phase is frozen on coarser eps1 x eps2 cells
    anchored at a.
    """
    pts = cfg.grid_points()
    d = cfg.min_image(pts - np.asarray(a, float))
    if eps is not None:
        e = np.asarray(eps, float)
        d = (np.floor(d / e) + 0.5) * e
    return np.exp(1j * np.arctan2(d[:, 1], d[:, 0]))


def project_to_landau_bands(
    cfg: ModelConfig,
    clean_H: OperatorMatrix,
    H_omega: OperatorMatrix,
    n_max: int | None = None,
    clean_spectrum: tuple[np.ndarray, np.ndarray] | None = None,
) -> OperatorMatrix:
    """Compress H_omega onto the lowest n_max * M clean eigenvectors."""
    n_max = cfg.n_max if n_max is None else n_max
    M = cfg.M
    if clean_spectrum is None:
        E, V = np.linalg.eigh(clean_H.entries)
    else:
        E, V = clean_spectrum
    k = n_max * M
    if k >= len(E):
        raise BandsNotResolved("n_max * M exceeds the grid dimension")
    for b in range(n_max):
        cl = E[b * M : (b + 1) * M]
        spread = cl[-1] - cl[0]
        gap = E[(b + 1) * M] - cl[-1]
        if gap < 10 * spread:
            raise BandsNotResolved(f"cluster {b}: gap {gap:.3g} < 10 x spread {spread:.3g}")
    Q = V[:, :k]
    Hp = Q.conj().T @ H_omega.entries @ Q
    Hp = 0.5 * (Hp + Hp.conj().T)
    meta = dict(H_omega.meta, n_max=n_max, M=M, clean_levels=E[:k].copy())
    return OperatorMatrix(Hp, "landau-projected", meta, embedding=Q)


def compress(op: np.ndarray, H: OperatorMatrix) -> np.ndarray:
    """Express a grid operator in H's basis (no-op for the grid backend)."""
    if H.embedding is None:
        return op
    Q = H.embedding
    return Q.conj().T @ op @ Q
