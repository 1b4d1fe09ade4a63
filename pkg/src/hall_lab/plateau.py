"""Localization regimes, plateau-width bounds and sigma_xy(nu) staircase scans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DegenerateFermiCut, EmptyRegime, MissingConstant
from .model import ModelConfig, build_lattice, evaluate_potential, sample_disorder
from .operators import build_hamiltonian, compress, potential_on_grid, project_to_landau_bands, velocity_operators
from .spectral import SpectralData, WegnerParams, _trial_seeds, eigensolve, k3_bound
from .transport import IndexProbe, bulk_boundary_split, kubo_sigma_xy, marker_density, relative_index


@dataclass(frozen=True)
class RegimeParams:
    n: int
    delta_hat: float
    Delta_E: float
    lam_plus_low: float
    lam_minus_low: float
    lam_plus_up: float
    lam_minus_up: float

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        for name in ("delta_hat", "Delta_E", "lam_plus_low", "lam_minus_low", "lam_plus_up", "lam_minus_up"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Regimes:
    lower: tuple[float, float]
    upper: tuple[float, float]
    overlap_ok: bool
    overlap_lhs: float  # left side of the overlap inequality, compared with omega_c


def _norms(cfg, B, V0_plus, V0_minus, u1, AP_norm):
    B = cfg.B if B is None else B
    vp, vm = cfg.V0_parts if cfg is not None else (0.0, 0.0)
    vp = vp if V0_plus is None else V0_plus
    vm = vm if V0_minus is None else V0_minus
    u1 = cfg.u_1 if u1 is None else u1
    A = (cfg.AP_norm if cfg is not None else 0.0) if AP_norm is None else AP_norm
    return B, vp, vm, u1, A


def localization_regimes(
    cfg: ModelConfig | None,
    params: RegimeParams,
    *,
    B: float | None = None,
    V0_plus: float | None = None,
    V0_minus: float | None = None,
    u1: float | None = None,
    AP_norm: float | None = None,
) -> Regimes:
    """Lower and upper localization regimes around the n-th Landau level.

    With A_P = 0 the intervals carry the center exclusion Delta_E; with
    A_P != 0 the general edge conditions with delta_hat/2 margins are used.
    """
    B, vp, vm, u1, A = _norms(cfg, B, V0_plus, V0_minus, u1, AP_norm)
    p = params
    E = lambda k: (k + 0.5) * B if k >= 0 else -math.inf
    n = p.n
    if A == 0:
        lower = (E(n - 1) + vp + p.lam_plus_low * u1 + p.delta_hat * B, E(n) - vm - p.lam_minus_low * u1 - p.Delta_E)
        upper = (E(n) + vp + p.lam_plus_up * u1 + p.Delta_E, E(n + 1) - vm - p.lam_minus_up * u1 - p.delta_hat * B)
        lhs = vp + vm + (p.lam_plus_low + p.lam_minus_up) * u1 + 2 * p.delta_hat * B
    else:
        r2 = math.sqrt(2) * A
        sq = lambda k: math.sqrt(E(k)) if k >= 0 else 0.0
        half = 0.5 * p.delta_hat * B
        lo_left = E(n - 1) + r2 * sq(n - 1) + 0.5 * A**2 + vp + p.lam_plus_low * u1 + half if n > 0 else -math.inf
        lower = (lo_left, E(n) - (vm + p.lam_minus_low * u1 + half + r2 * sq(n)))
        upper = (
            E(n) + vp + p.lam_plus_up * u1 + half + r2 * sq(n) + 0.5 * A**2,
            E(n + 1) - r2 * sq(n + 1) - vm - p.lam_minus_up * u1 - half,
        )
        lhs = vp + vm + (p.lam_plus_low + p.lam_minus_up) * u1 + p.delta_hat * B + r2 * (sq(n) + sq(n + 1)) + 0.5 * A**2
    for name, iv in (("lower", lower), ("upper", upper)):
        if not iv[0] <= iv[1]:
            raise EmptyRegime(f"{name} regime [{iv[0]:.4g}, {iv[1]:.4g}] is empty")
    return Regimes(lower, upper, lhs < B, lhs)


def extended_window(
    cfg: ModelConfig | None,
    params: RegimeParams,
    *,
    B: float | None = None,
    V0_plus: float | None = None,
    V0_minus: float | None = None,
    u1: float | None = None,
    AP_norm: float | None = None,
) -> float:
    """delta E: total width of the energy window that may hold extended states."""
    B, vp, vm, u1, A = _norms(cfg, B, V0_plus, V0_minus, u1, AP_norm)
    p = params
    dE = 2 * (vp + vm) + (p.lam_minus_low + p.lam_plus_up) * u1
    if A == 0:
        return dE + 2 * p.Delta_E
    En = (p.n + 0.5) * B
    return dE + p.delta_hat * B + 4 * math.sqrt(2) * A * math.sqrt(En) + A**2


@dataclass
class NlocBound:
    N_loc_lower: float
    N_ext_upper: float
    ext_ratio: float  # upper bound on N_ext / M
    delta_E: float
    M: int


def nloc_bound(
    cfg: ModelConfig,
    params: RegimeParams,
    wegner: WegnerParams,
    *,
    K3: float | None = None,
    interval: tuple[float, float] | None = None,
    delta_E: float | None = None,
    **norms,
) -> NlocBound:
    """N_loc >= B |Lambda| (1 / 2 pi - C_W K3 |g|_inf dE / B), capped at M."""
    if wegner.C_W is None:
        raise MissingConstant("C_W must be supplied")
    dE = extended_window(cfg, params, **norms) if delta_E is None else delta_E
    if K3 is None:
        if interval is None:
            En = (params.n + 0.5) * cfg.B
            interval = (En - dE, En + dE)
        K3 = k3_bound(wegner, interval, cfg)
    n_ext = wegner.C_W * K3 * cfg.g.sup_norm * dE * cfg.area
    n_loc = min(float(cfg.M), cfg.M - n_ext)
    return NlocBound(n_loc, n_ext, n_ext / cfg.M, dE, cfg.M)


# ---------------------------------------------------------------------------
# staircase


@dataclass
class Plateau:
    level: int  # sigma_xy = level * e^2/h
    nu_lo: float
    nu_hi: float
    flatness: float

    @property
    def width(self) -> float:
        return self.nu_hi - self.nu_lo


@dataclass
class StaircaseScan:
    nu: np.ndarray
    N: np.ndarray
    sigma: np.ndarray  # realization mean (nan where every cut was degenerate)
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    samples: np.ndarray  # (trials, n_nu)
    plateaus: list[Plateau]
    method: str
    M: int
    tol_flat: float
    seeds: list[int] = field(default_factory=list)

    def plateau_at(self, level: int) -> Plateau | None:
        cands = [p for p in self.plateaus if p.level == level]
        return max(cands, key=lambda p: (p.width, -p.nu_lo)) if cands else None


def detect_plateaus(nu: np.ndarray, sigma: np.ndarray, tol_flat: float) -> list[Plateau]:
    """Maximal runs of grid points within tol_flat of one integer."""
    out = []
    run: list[int] = []
    level = None
    for i, s in enumerate(sigma):
        k = None if not np.isfinite(s) else int(round(s))
        ok = k is not None and abs(s - k) <= tol_flat
        if ok and k == level:
            run.append(i)
            continue
        if run:
            out.append(Plateau(level, float(nu[run[0]]), float(nu[run[-1]]), float(np.max(np.abs(sigma[run] - level)))))
        run, level = ([i], k) if ok else ([], None)
    if run:
        out.append(Plateau(level, float(nu[run[0]]), float(nu[run[-1]]), float(np.max(np.abs(sigma[run] - level)))))
    return out


def filling_counts(nu_grid, M: int) -> np.ndarray:
    nu = np.asarray(nu_grid, float)
    N = np.rint(nu * M).astype(int)
    if np.any(np.abs(nu * M - N) > 1e-9):
        raise ValueError("nu grid must consist of multiples of 1/M")
    if np.any(np.diff(nu) <= 0):
        raise ValueError("nu grid must be increasing")
    return N


class StaircaseBackend:
    """Eigen-decomposition of one realization plus what each method needs."""

    def __init__(self, cfg: ModelConfig, backend: str, n_max: int):
        self.cfg = cfg
        self.backend = backend
        self.n_max = n_max
        self.lat = None  # built on the first disordered solve
        self.base = potential_on_grid(cfg)
        self.pts = cfg.grid_points()
        self.H0 = build_hamiltonian(cfg)
        self.vx, self.vy = velocity_operators(cfg)
        self.clean = np.linalg.eigh(self.H0.entries) if backend == "projected" else None

    def solve(self, seed: int | None):
        cfg = self.cfg
        pot = self.base
        if seed is not None:
            if self.lat is None:
                self.lat = build_lattice(cfg)
            real = sample_disorder(cfg, seed, self.lat.n_sites)
            pot = pot + evaluate_potential(cfg, real, self.pts, self.lat)
        H = build_hamiltonian(cfg, potential=pot)
        if self.backend == "projected":
            H = project_to_landau_bands(cfg, self.H0, H, self.n_max, self.clean)
        return H, eigensolve(H)


def _sigma_for(method: str, be: StaircaseBackend, H, spec: SpectralData, N: int, tiles: int) -> float:
    cfg = be.cfg
    if method == "kubo":
        return kubo_sigma_xy(spec, compress(be.vx, H), compress(be.vy, H), N, cfg.area).value
    V = spec.eigenvectors[:, :N]
    P = H.to_grid(V @ V.conj().T)
    if method == "chern_marker":
        return float(marker_density(P, cfg, tiles).sum() / cfg.area)
    if method == "relative_index":
        return relative_index(P, IndexProbe(), cfg).value
    raise ValueError(f"unknown method {method!r}")


def staircase_scan(
    cfg: ModelConfig,
    nu_grid,
    trials: int,
    seed: int,
    method: Literal["kubo", "chern_marker", "relative_index"] = "kubo",
    backend: Literal["projected", "grid"] = "projected",
    n_max: int | None = None,
    tol_flat: float = 0.1,
    clean: bool = False,
    tiles: int = 4,
) -> StaircaseScan:
    """Disorder-averaged sigma_xy(nu) with 95% intervals and plateau detection.

    Degenerate Fermi cuts (only possible without disorder) are recorded as
    nan and never belong to a plateau.
    """
    if method not in ("kubo", "chern_marker", "relative_index"):
        raise ValueError(f"unknown method {method!r}")
    n_max = cfg.n_max if n_max is None else n_max
    N = filling_counts(nu_grid, cfg.M)
    be = StaircaseBackend(cfg, backend, n_max)
    seeds = [None] if clean else _trial_seeds(seed, trials)
    samples = np.array([staircase_trial(be, sd, N, method, tiles) for sd in seeds])
    return staircase_from_samples(N, samples, method, cfg.M, tol_flat, [s for s in seeds if s is not None])


def staircase_trial(be: "StaircaseBackend", seed: int | None, N: np.ndarray, method: str, tiles: int = 4) -> np.ndarray:
    """sigma_xy at every filling for one realization (``seed=None``: clean)."""
    H, spec = be.solve(seed)
    if N.max() > spec.dim:
        raise ValueError("nu grid exceeds the number of available states")
    out = np.full(len(N), np.nan)
    for k, n in enumerate(N):
        try:
            out[k] = _sigma_for(method, be, H, spec, int(n), tiles)
        except DegenerateFermiCut:
            pass
    return out


def staircase_from_samples(N: np.ndarray, samples: np.ndarray, method: str, M: int, tol_flat: float = 0.1, seeds=()) -> StaircaseScan:
    n_t = samples.shape[0]
    cnt = np.isfinite(samples).sum(axis=0)
    safe = np.where(np.isfinite(samples), samples, 0.0)
    mean = np.where(cnt > 0, safe.sum(axis=0) / np.maximum(cnt, 1), np.nan)
    if n_t > 1:
        var = np.where(np.isfinite(samples), (safe - mean) ** 2, 0.0).sum(axis=0) / np.maximum(cnt - 1, 1)
        half = np.where(cnt > 1, 1.96 * np.sqrt(var / np.maximum(cnt, 1)), 0.0)
    else:
        half = np.zeros(len(N))
    nu = np.asarray(N) / M
    return StaircaseScan(
        nu=nu,
        N=np.asarray(N),
        sigma=mean,
        ci_lo=mean - half,
        ci_hi=mean + half,
        samples=samples,
        plateaus=detect_plateaus(nu, mean, tol_flat),
        method=method,
        M=M,
        tol_flat=tol_flat,
        seeds=list(seeds),
    )


@dataclass
class PlateauReport:
    level: int
    measured_width: float
    predicted_width: float  # N_loc / M
    ratio: float  # measured / predicted
    extended_fraction: float  # 1 - measured width


def plateau_width_report(scan: StaircaseScan, bound: NlocBound | float, M: int | None = None, level: int = -1) -> PlateauReport:
    """Measured plateau width at ``level`` against the N_loc / M lower bound."""
    M = scan.M if M is None else M
    n_loc = bound.N_loc_lower if isinstance(bound, NlocBound) else float(bound)
    p = scan.plateau_at(level)
    w = p.width if p else 0.0
    pred = max(n_loc, 0.0) / M
    ratio = w / pred if pred > 0 else math.inf
    return PlateauReport(level, w, pred, ratio, 1.0 - w)


def boundary_trend(cfgs: list[ModelConfig], trials: int, seed: int, nu: float = 1.0, backend: str = "projected", kappa: float = 0.55, n_max: int | None = None):
    """Disorder-averaged (sigma_in, sigma_out) at filling nu for each config."""
    out = []
    for cfg in cfgs:
        be = StaircaseBackend(cfg, backend, cfg.n_max if n_max is None else n_max)
        N = int(filling_counts([nu], cfg.M)[0])
        vals = []
        for sd in _trial_seeds(seed, trials):
            H, spec = be.solve(sd)
            V = spec.eigenvectors[:, :N]
            s_in, s_out = bulk_boundary_split(H.to_grid(V @ V.conj().T), cfg, kappa=kappa)
            vals.append((s_in.value, s_out.value))
        out.append(np.mean(vals, axis=0))
    return np.array(out)
