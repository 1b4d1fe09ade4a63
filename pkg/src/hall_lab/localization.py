"""Resolvent decay: block norms, Combes-Thomas rates, momentum-resolvent inequalities
and disorder-averaged decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import GapViolated, InvalidS, NotInGap, SingularShift
from .model import ModelConfig, build_lattice, evaluate_potential, sample_disorder
from .operators import build_hamiltonian, grid_links, potential_on_grid
from .spectral import SpectralData, _trial_seeds, eigensolve


# ---------------------------------------------------------------------------
# resolvent blocks


def resolvent_block(spec: SpectralData, z: complex, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """chi_A (z - H)^-1 chi_B restricted to rows A and columns B (boolean masks)."""
    E = spec.eigenvalues
    if abs(z.imag) == 0 and np.min(np.abs(E - z.real)) < 1e-12:
        raise SingularShift(f"z = {z} is within 1e-12 of an eigenvalue")
    V = spec.eigenvectors
    return (V[A] / (z - E)) @ V[B].conj().T


def resolvent_block_norm(H, z: complex, maskA: np.ndarray, maskB: np.ndarray, spec: SpectralData | None = None) -> float:
    """|| chi_A (z - H)^-1 chi_B || (largest singular value)."""
    spec = spec or eigensolve(H)
    blk = resolvent_block(spec, complex(z), np.asarray(maskA, bool), np.asarray(maskB, bool))
    if blk.size == 0:
        return 0.0
    return float(np.linalg.norm(blk, 2))


# ---------------------------------------------------------------------------
# Combes-Thomas rate


@dataclass(frozen=True)
class CTParams:
    E: float
    E_minus: float
    E_plus: float
    C0: float
    C0_tilde: float
    grad_rho_norm: float = 1.0
    V_minus: float = 0.0

    def __post_init__(self):
        if not self.E_minus < self.E < self.E_plus:
            raise GapViolated(f"E = {self.E} outside the gap ({self.E_minus}, {self.E_plus})")
        if not (self.C0 > 0 and self.C0_tilde > 0 and self.grad_rho_norm > 0):
            raise ValueError("C0, C0_tilde and grad_rho_norm must be positive")
        beta = combes_thomas_beta(self)
        if not -self.V_minus - 0.5 * beta**2 * self.grad_rho_norm**2 + self.C0_tilde > 0:
            raise ValueError("C0_tilde too small: -|V^-| - beta^2 |grad rho|^2 / 2 + C0_tilde must be positive")

    @property
    def kappa(self) -> float:
        a = self.C0 * (self.E - self.E_minus)
        return math.sqrt(a / (a + 16 * (self.E_plus + self.C0_tilde) * (self.E_minus + self.C0_tilde)))


def combes_thomas_beta(p: CTParams) -> float:
    """Decay rate beta of the resolvent at a gap energy (hbar = m_e = 1)."""
    if not p.E_minus < p.E < p.E_plus:
        raise GapViolated(f"E = {p.E} outside the gap ({p.E_minus}, {p.E_plus})")
    num = p.C0 * (p.E_plus - p.E) * (p.E - p.E_minus)
    den = p.C0 * (p.E - p.E_minus) + 16 * (p.E_plus + p.C0_tilde) * (p.E_minus + p.C0_tilde)
    return math.sqrt(2.0) / p.grad_rho_norm * math.sqrt(num / den)


def ct_params_for_gap(
    E: float, E_minus: float, E_plus: float, H_min: float, V_minus: float = 0.0, C0_tilde: float | None = None
) -> CTParams:
    """Self-consistent (C0, C0_tilde) for a Hamiltonian bounded below by ``H_min``.

    H~ + C0_tilde >= H_min - beta^2/2 + C0_tilde =: C0, iterated to a fixed point.
    """
    C0_tilde = max(E_plus, 1.0) if C0_tilde is None else C0_tilde
    beta = 0.0
    for _ in range(100):
        C0 = H_min - 0.5 * beta**2 + C0_tilde
        if C0 <= 0:
            raise ValueError("C0_tilde too small for a positive C0")
        num = C0 * (E_plus - E) * (E - E_minus)
        den = C0 * (E - E_minus) + 16 * (E_plus + C0_tilde) * (E_minus + C0_tilde)
        nb = math.sqrt(2.0 * num / den)
        if abs(nb - beta) < 1e-14:
            break
        beta = nb
    return CTParams(E, E_minus, E_plus, C0, C0_tilde, 1.0, V_minus)


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class DecayFit:
    distances: np.ndarray
    log_norms: np.ndarray
    rate: float  # fitted decay rate (mu, beta), -slope of log norm vs distance
    intercept: float
    ci: float  # 95% half-width of the rate
    stderr: float

    def __post_init__(self):
        d = np.asarray(self.distances)
        if len(d) < 4:
            raise ValueError("a decay fit needs at least 4 distances")
        if np.any(np.diff(d) <= 0):
            raise ValueError("distances must be strictly increasing")

    @property
    def fit_line(self) -> np.ndarray:
        return self.intercept - self.rate * np.asarray(self.distances)


def fit_decay(distances, values) -> DecayFit:
    d = np.asarray(distances, float)
    y = np.log(np.asarray(values, float))
    res = stats.linregress(d, y)
    t = stats.t.ppf(0.975, max(len(d) - 2, 1))
    return DecayFit(d, y, float(-res.slope), float(res.intercept), float(t * res.stderr), float(res.stderr))


def probe_masks(cfg: ModelConfig, center, distances, radius: float):
    """Disk A at ``center`` and disks B_r displaced by r along x."""
    pts = cfg.grid_points()
    c = np.asarray(center, float)
    half = 0.5 * min(cfg.Lx, cfg.Ly)
    if max(distances) + radius > half + 1e-12:
        raise ValueError(f"probe distance {max(distances)} + radius exceeds half the torus ({half:.4g})")

    def disk(p):
        d = cfg.min_image(pts - p)
        r = np.hypot(d[:, 0], d[:, 1])
        return r <= max(radius, r.min())  # never empty

    return disk(c), [disk(c + np.array([r, 0.0])) for r in distances]


def gap_decay_fit(
    cfg: ModelConfig,
    H,
    E: float,
    distances,
    center=(0.0, 0.0),
    radius: float | None = None,
    min_gap: float | None = None,
    spec: SpectralData | None = None,
) -> tuple[DecayFit, tuple[float, float]]:
    """Fitted decay rate of ||chi_A R(E) chi_B|| for a real gap energy E.

    Returns the fit and the enclosing spectral gap (E_-, E_+).
    """
    spec = spec or eigensolve(H)
    ev = spec.eigenvalues
    min_gap = 0.1 * cfg.omega_c if min_gap is None else min_gap
    below, above = ev[ev < E], ev[ev > E]
    if len(below) == 0 or len(above) == 0:
        raise NotInGap(f"E = {E} lies outside the spectrum, not in an interior gap")
    Em, Ep = float(below.max()), float(above.min())
    if min(E - Em, Ep - E) < 0.5 * min_gap or Ep - Em < min_gap:
        raise NotInGap(f"E = {E} is within {min(E - Em, Ep - E):.3g} of the spectrum")
    radius = 0.5 * cfg.ell_B if radius is None else radius
    A, Bs = probe_masks(cfg, center, distances, radius)
    norms = [float(np.linalg.norm(resolvent_block(spec, complex(E), A, B), 2)) for B in Bs]
    return fit_decay(distances, norms), (Em, Ep)


def check_s(s: float):
    if not 0 < s < 1 / 3:
        raise InvalidS(f"s = {s} must lie in (0, 1/3)")


@dataclass
class MomentFit:
    fit: DecayFit  # on epsilon-extrapolated moments
    eps: np.ndarray
    moments: np.ndarray  # (n_eps, n_dist) ensemble means of ||.||^s
    samples: np.ndarray  # (trials, n_eps, n_dist) raw ||.||^s
    per_eps_rates: np.ndarray


def _disordered_spectrum(cfg: ModelConfig, seed: int, lat=None, base=None) -> SpectralData:
    lat = lat or build_lattice(cfg)
    base = potential_on_grid(cfg) if base is None else base
    real = sample_disorder(cfg, seed, lat.n_sites)
    pot = base + evaluate_potential(cfg, real, cfg.grid_points(), lat)
    return eigensolve(build_hamiltonian(cfg, potential=pot))


def fractional_moment_fit(
    cfg: ModelConfig,
    E_F: float,
    s: float,
    distances,
    trials: int,
    seed: int,
    eps_list=(1e-2, 3e-3, 1e-3),
    center=(0.0, 0.0),
    radius: float | None = None,
) -> MomentFit:
    """E ||chi_A R(E_F + i eps) chi_B||^s vs distance, extrapolated linearly in eps."""
    check_s(s)
    eps = np.asarray(eps_list, float)
    radius = 0.5 * cfg.ell_B if radius is None else radius
    A, Bs = probe_masks(cfg, center, distances, radius)
    lat, base = build_lattice(cfg), potential_on_grid(cfg)
    samples = np.array([moment_trial(cfg, sd, E_F, s, eps, A, Bs, lat, base) for sd in _trial_seeds(seed, trials)])
    return moment_fit_from_samples(distances, eps, samples)


def moment_trial(cfg: ModelConfig, seed: int, E_F: float, s: float, eps, A, Bs, lat=None, base=None) -> np.ndarray:
    """||chi_A R(E_F + i eps) chi_B||^s for one realization, shape (n_eps, n_dist)."""
    spec = _disordered_spectrum(cfg, seed, lat, base)
    out = np.zeros((len(eps), len(Bs)))
    for k, e in enumerate(eps):
        for j, B in enumerate(Bs):
            out[k, j] = np.linalg.norm(resolvent_block(spec, complex(E_F, e), A, B), 2) ** s
    return out


def moment_fit_from_samples(distances, eps, samples: np.ndarray) -> MomentFit:
    eps = np.asarray(eps, float)
    moments = samples.mean(axis=0)
    if len(eps) >= 2:
        slope, icpt = np.polyfit(eps, moments, 1)
        extrap = np.where(icpt > 0, icpt, moments[np.argmin(eps)])
    else:
        extrap = moments[0]
    per_eps = np.array([fit_decay(distances, m).rate for m in moments])
    return MomentFit(fit_decay(distances, extrap), eps, moments, samples, per_eps)


@dataclass
class ProjectionDecay:
    fit: DecayFit
    samples: np.ndarray  # (trials, n_dist)


def projection_decay_fit(
    cfg: ModelConfig,
    N: int,
    distances,
    trials: int,
    seed: int,
    center=(0.0, 0.0),
    radius: float | None = None,
    clean: bool = False,
) -> ProjectionDecay:
    """E ||chi_A P_F chi_B|| vs distance, P_F the projection on the lowest N states."""
    radius = 0.5 * cfg.ell_B if radius is None else radius
    A, Bs = probe_masks(cfg, center, distances, radius)
    if clean:
        spec = eigensolve(build_hamiltonian(cfg))
        specs = [spec] * trials
    else:
        lat, base = build_lattice(cfg), potential_on_grid(cfg)
        specs = (_disordered_spectrum(cfg, sd, lat, base) for sd in _trial_seeds(seed, trials))
    samples = np.zeros((trials, len(distances)))
    for t, spec in enumerate(specs):
        V = spec.eigenvectors[:, :N]
        for j, B in enumerate(Bs):
            samples[t, j] = np.linalg.norm(V[A] @ V[B].conj().T, 2)
    return ProjectionDecay(fit_decay(distances, samples.mean(axis=0)), samples)


# ---------------------------------------------------------------------------
# momentum-resolvent inequalities


def covariant_momenta(cfg: ModelConfig, kappa=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Forward-difference covariant momenta pi_s = -i (S_s - 1) / h_s.

    With these, the grid kinetic energy equals (pi_x^+ pi_x + pi_y^+ pi_y) / 2.
    """
    links = grid_links(cfg)
    n = links.dim
    k = np.asarray(kappa, float)
    phase = np.exp(1j * (links.phase + links.dvec @ k))
    out = []
    for s, h in ((0, cfg.hx), (1, cfg.hy)):
        sel = links.axis == s
        S = np.zeros((n, n), dtype=complex)
        S[links.src[sel], links.dst[sel]] = phase[sel]
        out.append(-1j * (S - np.eye(n)) / h)
    return out[0], out[1]


@dataclass
class Lemma51Report:
    lhs: np.ndarray  # (3,) for the three inequalities
    rhs: np.ndarray
    f_ER: float
    R_norm: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1 + 1e-12) + 1e-12))


def lemma51_inequality_check(cfg: ModelConfig, V: np.ndarray, z: complex, alpha: np.ndarray) -> Lemma51Report:
    """Evaluate both sides of the three momentum-resolvent bounds for H = K + V.

    ``V`` is an on-site potential (vector) or a Hermitian matrix; ``alpha`` is
    an (n, 2) real field evaluated on the grid.
    """
    px, py = covariant_momenta(cfg)
    n = px.shape[0]
    K = 0.5 * (px.conj().T @ px + py.conj().T @ py)
    Vm = np.diag(V) if np.ndim(V) == 1 else np.asarray(V)
    H = K + Vm
    w = np.linalg.eigvalsh(0.5 * (Vm + Vm.conj().T))
    V_minus = max(0.0, -float(w.min()))
    z = complex(z)
    R = np.linalg.inv(H - z * np.eye(n))
    Rn = float(np.linalg.norm(R, 2))
    f = (abs(z.real) + V_minus) * Rn
    al = np.asarray(alpha, float)
    ax, ay = al[:, 0], al[:, 1]
    sup_i = max(np.abs(ax).max(), np.abs(ay).max())
    sup_abs = float(np.hypot(ax, ay).max())
    a_dot_p = ax[:, None] * px + ay[:, None] * py  # alpha . (p + A)
    p_dot_a = px * ax[None, :] + py * ay[None, :]  # (p + A) . alpha
    lhs1 = np.linalg.norm(a_dot_p @ R, 2)
    lhs2 = max(np.linalg.norm(p @ R @ p_dot_a, 2) for p in (px, py))
    lhs3 = np.linalg.norm(R @ p_dot_a, 2)
    rt = math.sqrt(Rn * (1 + f))
    rhs = np.array([2 * math.sqrt(2) * rt * sup_i, 2 * sup_abs * (1 + f), math.sqrt(2) * sup_abs * rt])
    return Lemma51Report(np.array([lhs1, lhs2, lhs3]), rhs, f, Rn)
