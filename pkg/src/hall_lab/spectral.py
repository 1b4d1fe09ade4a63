"""Dense eigensolving, Fermi projections and the Wegner-estimate toolkit."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, DegenerateFermiLevel, MissingConstant, MonotoneViolated, QuadratureUnresolved
from .model import (
    Density,
    DisorderRealization,
    ModelConfig,
    RegionMask,
    TriangularLattice,
    build_lattice,
    evaluate_potential,
    sample_disorder,
)
from .operators import OperatorMatrix, build_hamiltonian, potential_on_grid


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    orthonormality: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


@dataclass
class FermiState:
    N: int
    E_F: float
    P_F: np.ndarray
    nu: float


def _entries(H) -> np.ndarray:
    return H.entries if isinstance(H, OperatorMatrix) else np.asarray(H)


def eigensolve(H, tol: float = 1e-10) -> SpectralData:
    """Full Hermitian decomposition with a residual and orthonormality certificate."""
    A = _entries(H)
    if A.shape[0] != A.shape[1]:
        raise ValueError("H must be square")
    try:
        E, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    scale = max(float(np.abs(E).max(initial=0.0)), 1.0)
    R = A @ V - V * E
    residual = float(np.sqrt((np.abs(R) ** 2).sum(axis=0)).max(initial=0.0))
    ortho = float(np.abs(V.conj().T @ V - np.eye(len(E))).max(initial=0.0))
    if residual > tol * scale or ortho > tol:
        raise ConvergenceFailure(f"residual {residual:.3g}, orthonormality {ortho:.3g} exceed {tol:g}")
    return SpectralData(E, V, residual, ortho)


def fermi_projection(spec: SpectralData, N: int, M: int | None = None) -> FermiState:
    """Projection onto the lowest N eigenvectors; E_F sits midway to the next level."""
    dim = spec.dim
    if not 0 <= N <= dim:
        raise ValueError(f"N = {N} outside [0, {dim}]")
    E = spec.eigenvalues
    if 0 < N < dim:
        if E[N] - E[N - 1] < 1e-12:
            warnings.warn(f"E_N and E_N+1 coincide to 1e-12 at N = {N}", DegenerateFermiLevel, stacklevel=2)
        E_F = 0.5 * (E[N - 1] + E[N])
    elif N == 0:
        E_F = float(E[0]) - 1.0
    else:
        E_F = float(E[-1]) + 1.0
    Vn = spec.eigenvectors[:, :N]
    P = Vn @ Vn.conj().T
    return FermiState(N=N, E_F=float(E_F), P_F=P, nu=N / M if M else float("nan"))


# ---------------------------------------------------------------------------
# band edges


def band_edge_bounds(
    cfg: ModelConfig | None,
    n: int,
    *,
    B: float | None = None,
    AP_norm: float | None = None,
    V0_plus: float | None = None,
    V0_minus: float | None = None,
) -> tuple[float, float]:
    """(upper, lower) edges of the n-th broadened Landau band.

    Keyword overrides replace the corresponding norms read from ``cfg``.
    """
    B = cfg.B if B is None else B
    A = cfg.AP_norm if AP_norm is None else AP_norm
    vp, vm = cfg.V0_parts if cfg is not None and (V0_plus is None or V0_minus is None) else (0.0, 0.0)
    vp = vp if V0_plus is None else V0_plus
    vm = vm if V0_minus is None else V0_minus
    if A / math.sqrt(2) > math.sqrt(0.5 * B) * (1 + 1e-12):
        raise MonotoneViolated(f"|A_P| = {A:.4g} exceeds sqrt(omega_c) = {math.sqrt(B):.4g}")
    En = (n + 0.5) * B
    upper = En + math.sqrt(2) * A * math.sqrt(En) + 0.5 * A**2 + vp
    lower = En - math.sqrt(2) * A * math.sqrt(En) - vm
    return upper, lower


def gap_condition(
    cfg: ModelConfig | None,
    n: int,
    *,
    B: float | None = None,
    AP_norm: float | None = None,
    V0_plus: float | None = None,
    V0_minus: float | None = None,
) -> bool:
    """True iff the broadened bands n and n+1 are guaranteed to be separated."""
    B = cfg.B if B is None else B
    A = cfg.AP_norm if AP_norm is None else AP_norm
    vp, vm = cfg.V0_parts if cfg is not None and (V0_plus is None or V0_minus is None) else (0.0, 0.0)
    vp = vp if V0_plus is None else V0_plus
    vm = vm if V0_minus is None else V0_minus
    En, En1 = (n + 0.5) * B, (n + 1.5) * B
    rhs = math.sqrt(2) * A * (math.sqrt(En1) + math.sqrt(En)) + 0.5 * A**2 + vp + vm
    return B > rhs


# ---------------------------------------------------------------------------
# Wegner counting


def _trial_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)]


def _fit_through_origin(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope of y = c x and the (centred) coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    c = float(x @ y / (x @ x))
    ss_res = float(((y - c * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return c, r2


@dataclass
class WegnerTable:
    E: float
    dE: np.ndarray
    areas: np.ndarray
    dims: np.ndarray
    mean_counts: np.ndarray  # (n_sizes, n_dE)
    stderr: np.ndarray
    counts: np.ndarray  # (n_sizes, trials, n_dE), per realization
    g_sup: float
    slope_dE: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per size
    r2_dE: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slope_area: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per dE
    r2_area: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def normalized_slopes(self) -> np.ndarray:
        """(count / dE) / (|g|_inf |Lambda|); bounded if the Wegner estimate holds."""
        return self.slope_dE / (self.g_sup * self.areas)


def wegner_scan(
    cfgs: list[ModelConfig],
    E: float,
    dE_list,
    trials: int,
    seed: int,
) -> WegnerTable:
    """Average eigenvalue counts in [E - dE, E + dE] over disorder, for each system size."""
    dE = np.asarray(dE_list, float)
    if np.any(dE <= 0):
        raise ValueError("dE: window half-widths must be positive")
    seeds = _trial_seeds(seed, trials)
    counts = np.zeros((len(cfgs), trials, len(dE)))
    areas, dims = [], []
    for s, cfg in enumerate(cfgs):
        lat = build_lattice(cfg)
        base = potential_on_grid(cfg)
        pts = cfg.grid_points()
        for t, sd in enumerate(seeds):
            real = sample_disorder(cfg, sd, lat.n_sites)
            pot = base + evaluate_potential(cfg, real, pts, lat)
            ev = np.linalg.eigvalsh(build_hamiltonian(cfg, potential=pot).entries)
            lo = np.searchsorted(ev, E - dE, side="left")
            hi = np.searchsorted(ev, E + dE, side="right")
            counts[s, t] = hi - lo
        areas.append(cfg.area)
        dims.append(cfg.grid_Nx * cfg.grid_Ny)
    mean = counts.mean(axis=1)
    se = counts.std(axis=1, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(mean)
    tab = WegnerTable(
        E=float(E),
        dE=dE,
        areas=np.array(areas),
        dims=np.array(dims),
        mean_counts=mean,
        stderr=se,
        counts=counts,
        g_sup=cfgs[0].g.sup_norm,
    )
    fits = [_fit_through_origin(dE, mean[s]) for s in range(len(cfgs))]
    tab.slope_dE = np.array([f[0] for f in fits])
    tab.r2_dE = np.array([f[1] for f in fits])
    if len(cfgs) > 1:
        fits = [_fit_through_origin(tab.areas, mean[:, k]) for k in range(len(dE))]
        tab.slope_area = np.array([f[0] for f in fits])
        tab.r2_area = np.array([f[1] for f in fits])
    return tab


# ---------------------------------------------------------------------------
# spectral averaging (Kotani-Simon)


def site_bump_on_grid(cfg: ModelConfig, lat: TriangularLattice, site: int) -> np.ndarray:
    """u(r - z_site) on the grid points."""
    e = np.zeros(lat.n_sites)
    e[site] = 1.0
    return evaluate_potential(cfg, DisorderRealization(seed=-1, couplings=e), cfg.grid_points(), lat)


@dataclass
class KotaniSimonResult:
    value: float
    bound: float
    nodes: int
    change: float  # |value(nodes) - value(nodes / 3)|

    @property
    def holds(self) -> bool:
        return self.value <= self.bound + self.change


def kotani_simon_check(
    cfg: ModelConfig,
    realization: DisorderRealization,
    site_a: int,
    interval: tuple[float, float],
    tol: float = 1e-3,
    start_nodes: int = 27,
    max_nodes: int = 2187,
    g: Density | None = None,
) -> KotaniSimonResult:
    """|| int g(l) v^1/2 Q_Delta(l) v^1/2 dl || with v the bump of ``site_a``.

    The integral over l = lambda_a uses nested midpoint rules (each tripling
    reuses the previous nodes) and stops once successive values agree to ``tol``.
    """
    g = cfg.g if g is None else g
    lo_D, hi_D = sorted(float(x) for x in interval)
    bound = g.sup_norm * (hi_D - lo_D)
    if hi_D == lo_D:
        return KotaniSimonResult(0.0, bound, 0, 0.0)
    lat = build_lattice(cfg)
    lam = np.array(realization.couplings, dtype=float)
    lam[site_a] = 0.0
    pot = potential_on_grid(cfg, DisorderRealization(realization.seed, lam), lat)
    H0 = build_hamiltonian(cfg, potential=pot).entries
    v = site_bump_on_grid(cfg, lat, site_a)
    S = np.flatnonzero(v > 0)
    sq = np.sqrt(v[S])
    glo, ghi = g.support

    def integrand(l: float) -> np.ndarray:
        E, V = np.linalg.eigh(H0 + np.diag(l * v))
        sel = (E >= lo_D) & (E <= hi_D)
        W = sq[:, None] * V[np.ix_(S, np.flatnonzero(sel))]
        return W @ W.conj().T

    cache: dict[int, np.ndarray] = {}

    def midpoint(n: int) -> np.ndarray:
        h = (ghi - glo) / n
        total = np.zeros((len(S), len(S)), dtype=complex)
        for k in range(n):
            key = round((2 * k + 1) * (max_nodes // n))  # node position in units of the finest half-step
            if key not in cache:
                l = glo + (k + 0.5) * h
                cache[key] = g.pdf(l) * integrand(l)
            total += cache[key]
        return total * h

    n = start_nodes
    prev = float(np.linalg.norm(midpoint(n), 2))
    while True:
        if 3 * n > max_nodes:
            raise QuadratureUnresolved(f"Kotani-Simon integral not converged at {n} nodes")
        n *= 3
        cur = float(np.linalg.norm(midpoint(n), 2))
        if abs(cur - prev) <= tol:
            return KotaniSimonResult(cur, bound, n, abs(cur - prev))
        prev = cur


# ---------------------------------------------------------------------------
# K0, n0, Upsilon sums, K3


@dataclass
class K0Fit:
    K0: float
    n0: float
    areas: np.ndarray
    traces: np.ndarray
    residual: float  # rms of log-log residuals


def resolvent_square(cfg: ModelConfig, E_min: float, spec: SpectralData | None = None) -> np.ndarray:
    """(H_0 + E_min)^-2 for the clean Hamiltonian."""
    vm = cfg.V0_parts[1]
    if not E_min > vm:
        raise ValueError(f"E_min = {E_min} must exceed |V_0^-| = {vm}")
    if spec is None:
        spec = eigensolve(build_hamiltonian(cfg))
    w = (spec.eigenvalues + E_min) ** -2.0
    V = spec.eigenvectors
    return (V * w) @ V.conj().T


def estimate_K0_n0(cfg: ModelConfig, regions: list[RegionMask], E_min: float, spec: SpectralData | None = None) -> K0Fit:
    """Fit Tr (H_0 + E_min)^-2 chi_Omega = K0 |Omega|^n0 over the given regions."""
    R2 = resolvent_square(cfg, E_min, spec)
    diag = np.real(np.diag(R2))
    cell = cfg.hx * cfg.hy
    areas = np.array([r.count * cell for r in regions])
    traces = np.array([diag[r.indicator].sum() for r in regions])
    if len(regions) == 1:
        return K0Fit(float(traces[0] / areas[0]), 1.0, areas, traces, 0.0)
    n0, logK = np.polyfit(np.log(areas), np.log(traces), 1)
    res = np.log(traces) - (logK + n0 * np.log(areas))
    return K0Fit(float(math.exp(logK)), float(n0), areas, traces, float(np.sqrt(np.mean(res**2))))


@dataclass
class UpsilonSum:
    total: float
    norms: np.ndarray  # (N, N) trace norms |Upsilon_{b,a}|_1
    distances: np.ndarray  # (N, N) torus distances between sites
    overlap_sum: float
    nonoverlap_sum: float
    alpha_hat: float  # decay rate fitted on non-overlapping pairs
    alpha_stderr: float


def upsilon_trace_sum(cfg: ModelConfig, E_min: float, spec: SpectralData | None = None) -> UpsilonSum:
    """Trace norms of u_b^1/2 (H_0 + E_min)^-2 u_a^1/2 over all site pairs."""
    R2 = resolvent_square(cfg, E_min, spec)
    lat = build_lattice(cfg)
    N = lat.n_sites
    bumps = [site_bump_on_grid(cfg, lat, i) for i in range(N)]
    supp = [np.flatnonzero(b > 0) for b in bumps]
    k = max(len(s) for s in supp)
    # pad supports to a common size; zero rows do not change singular values
    idx = np.zeros((N, k), dtype=int)
    wts = np.zeros((N, k))
    for i, s in enumerate(supp):
        idx[i, : len(s)] = s
        wts[i, : len(s)] = np.sqrt(bumps[i][s])
    norms = np.zeros((N, N))
    for b in range(N):
        blocks = R2[idx[b][None, :, None], idx[:, None, :]]  # (N, k, k): rows in supp b, cols in supp a
        blocks = wts[b][None, :, None] * blocks * wts[:, None, :]
        norms[b] = np.linalg.svd(blocks, compute_uv=False).sum(axis=1)
    d = cfg.min_image(lat.positions[:, None, :] - lat.positions[None, :, :])
    dist = np.hypot(d[..., 0], d[..., 1])
    overlap = dist < 2 * cfg.r_u
    far = ~overlap
    alpha, se = float("nan"), float("nan")
    if far.sum() >= 4:
        x, y = dist[far], np.log(norms[far])
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        s2 = resid @ resid / max(len(x) - 2, 1)
        cov = s2 * np.linalg.inv(A.T @ A)
        alpha, se = float(-coef[1]), float(math.sqrt(cov[1, 1]))
    return UpsilonSum(
        total=float(norms.sum()),
        norms=norms,
        distances=dist,
        overlap_sum=float(norms[overlap].sum()),
        nonoverlap_sum=float(norms[far].sum()),
        alpha_hat=alpha,
        alpha_stderr=se,
    )


@dataclass(frozen=True)
class WegnerParams:
    E_min: float
    U_min: float
    moment_M: float
    K0: float
    n0: float = 1.0
    K1: float | None = None
    C_W: float | None = None
    V0_minus: float = 0.0

    def __post_init__(self):
        if not self.E_min > self.V0_minus:
            raise ValueError(f"E_min = {self.E_min} must exceed |V_0^-| = {self.V0_minus}")
        if not self.U_min > 0:
            raise ValueError("U_min must be positive")

    @classmethod
    def from_config(cls, cfg: ModelConfig, E_min: float, K0: float, n0: float = 1.0, **kw) -> "WegnerParams":
        M = max(abs(cfg.g.lo), abs(cfg.g.hi))
        return cls(E_min=E_min, U_min=cfg.u_0, moment_M=M, K0=K0, n0=n0, V0_minus=cfg.V0_parts[1], **kw)

    def E_max(self, interval: tuple[float, float]) -> float:
        lo, hi = interval
        return max(abs(lo + self.E_min), abs(hi + self.E_min))


def k3_bound(
    params: WegnerParams,
    interval: tuple[float, float],
    cfg: ModelConfig | None = None,
    *,
    u_sup: float | None = None,
    supp_area: float | None = None,
) -> float:
    """K3 = [M + E_max / U_min]^2 K0 K1 |u|_inf |supp u|^n0."""
    if params.K1 is None:
        raise MissingConstant("K1 must be supplied (calibrate with upsilon_trace_sum)")
    if u_sup is None:
        u_sup = cfg.u_amp
    if supp_area is None:
        supp_area = math.pi * cfg.r_u**2
    pref = (params.moment_M + params.E_max(interval) / params.U_min) ** 2
    return pref * params.K0 * params.K1 * u_sup * supp_area**params.n0


def wegner_bound(params: WegnerParams, K3: float, g_sup: float, dE: float, area: float) -> float:
    """C_W K3 |g|_inf dE |Lambda|."""
    if params.C_W is None:
        raise MissingConstant("C_W must be supplied")
    return params.C_W * K3 * g_sup * dE * area
