"""Multiscale-analysis arithmetic: length scales, the (gamma, eta) recursion and its certificate.

Failure probabilities are carried as natural logarithms because eta_k**2
drops below the smallest double after two or three steps; scales are exact
Python integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EvenInitialScale, FieldTooWeak, ScaleRelationViolated


def smallest_odd_at_least_sqrt(n: int) -> int:
    m = math.isqrt(n)
    if m * m < n:
        m += 1
    return m if m % 2 else m + 1


def length_scale_sequence(ell0: int, k_max: int) -> list[int]:
    """[l_0, ..., l_kmax] with l_{k+1} = l_k * (smallest odd integer >= sqrt(l_k))."""
    if int(ell0) != ell0 or ell0 % 2 == 0:
        raise EvenInitialScale(f"ell0 = {ell0} must be odd")
    if ell0 < 5:
        raise EvenInitialScale(f"ell0 = {ell0} must be at least 5")
    seq = [int(ell0)]
    for _ in range(k_max):
        seq.append(seq[-1] * smallest_odd_at_least_sqrt(seq[-1]))
    return seq


def initial_scale(B: float, B2: float, ell_hat0: int) -> int:
    """l_0 = l^_0 * (largest odd integer <= sqrt(B / B2))."""
    if ell_hat0 % 2 == 0:
        raise EvenInitialScale(f"ell_hat0 = {ell_hat0} must be odd")
    if not B2 > 0:
        raise ValueError("B2 must be positive")
    r = math.sqrt(B / B2)
    if r < 1:
        raise FieldTooWeak(f"sqrt(B/B2) = {r:.4g} < 1")
    m = int(math.floor(r + 1e-12))
    if m % 2 == 0:
        m -= 1
    return ell_hat0 * m


@dataclass(frozen=True)
class MsaState:
    k: int
    ell: int
    gamma: float
    log_eta: float
    xi: float
    c0: float = 1.0
    K3: float = 1.0
    E_abs: float = 1.0
    s_exp: float | None = None  # exponent in the (2s + 7) log term; defaults to xi

    def __post_init__(self):
        if self.ell % 2 == 0:
            raise EvenInitialScale(f"ell = {self.ell} must be odd")
        if self.log_eta > 0:
            raise ValueError("eta must lie in [0, 1]")

    @classmethod
    def start(cls, ell: int, gamma: float, eta: float, xi: float, **kw) -> "MsaState":
        return cls(0, int(ell), float(gamma), math.log(eta) if eta > 0 else -math.inf, float(xi), **kw)

    @property
    def eta(self) -> float:
        """Failure probability as a float (0.0 once it underflows)."""
        return math.exp(self.log_eta)

    @property
    def underflow(self) -> bool:
        return self.log_eta > -math.inf and self.eta == 0.0

    @property
    def log_const(self) -> float:
        return math.log(self.c0 * self.K3**2 * self.E_abs)

    @property
    def s_value(self) -> float:
        return self.xi if self.s_exp is None else self.s_exp


def d_term(state: MsaState, ell_next: int) -> float:
    """d = log(c0 K3^2 |E|) / l + (2s + 7) log(l') / l'."""
    return state.log_const / state.ell + (2 * state.s_value + 7) * math.log(ell_next) / ell_next


def recursion_step(state: MsaState, ell_next: int) -> MsaState:
    """One (gamma, eta) -> (gamma', eta') step from scale l to l'."""
    l, lp = state.ell, int(ell_next)
    if lp % l or lp <= 4 * l:
        raise ScaleRelationViolated(f"l' = {lp} must be a multiple of l = {l} and exceed 4 l")
    log_a = 4 * math.log(5 * lp / l) + 2 * state.log_eta
    log_b = -state.xi * math.log(lp) - math.log(2.0)
    log_eta = float(np.logaddexp(log_a, log_b))
    gamma = state.gamma * (1 - 4 * l / lp) - d_term(state, lp)
    return replace(state, k=state.k + 1, ell=lp, gamma=gamma, log_eta=min(log_eta, 0.0))


@dataclass
class Certificate:
    gamma_inf_lower: float  # min_k of the closed-form bound gamma0 prod(...) - sum d
    gamma_min: float  # min_k of the iterated gamma_k
    eta_ok: bool  # eta_k <= l_k^-xi for all k <= k_max
    first_eta_failure: int | None
    scales: list[int]
    gammas: np.ndarray
    log_etas: np.ndarray
    products: np.ndarray  # prod_{j<=k} (1 - 4 l_j / l_{j+1})
    d_sums: np.ndarray  # sum_{j<=k} d_j
    underflow: bool

    @property
    def certified(self) -> bool:
        return self.eta_ok and self.gamma_inf_lower > 0


def eta_threshold_holds(ell0: int, xi: float) -> bool:
    """Sufficient start condition 5^4 l0^(2 - xi/2) (1 + 2 l0^-1/2)^(4 + xi) <= 1/2."""
    return 5**4 * ell0 ** (2 - xi / 2) * (1 + 2 * ell0**-0.5) ** (4 + xi) <= 0.5


def certify(
    ell0: int,
    gamma0: float,
    xi: float,
    constants: tuple[float, float, float],
    k_max: int,
    eta0: float | None = None,
    s_exp: float | None = None,
) -> Certificate:
    """Run the recursion along the canonical scales and check the eta chain."""
    c0, K3, E_abs = constants
    scales = length_scale_sequence(ell0, k_max)
    eta0 = float(ell0) ** -xi if eta0 is None else eta0
    st = MsaState.start(ell0, gamma0, eta0, xi, c0=c0, K3=K3, E_abs=E_abs, s_exp=s_exp)
    gammas, log_etas = [st.gamma], [st.log_eta]
    prods, dsums = [], []
    prod, dsum = 1.0, 0.0
    underflow = st.underflow
    for lp in scales[1:]:
        d = d_term(st, lp)
        prod *= 1 - 4 * st.ell / lp
        dsum = math.fsum([dsum, d])
        prods.append(prod)
        dsums.append(dsum)
        st = recursion_step(st, lp)
        gammas.append(st.gamma)
        log_etas.append(st.log_eta)
        underflow |= st.underflow
    log_etas = np.array(log_etas)
    bound = -xi * np.log(np.array(scales, float))
    bad = np.flatnonzero(log_etas > bound + 1e-12)
    closed = gamma0 * np.array(prods) - np.array(dsums)
    return Certificate(
        gamma_inf_lower=float(min(closed.min(initial=gamma0), gamma0)),
        gamma_min=float(min(gammas)),
        eta_ok=len(bad) == 0,
        first_eta_failure=int(bad[0]) if len(bad) else None,
        scales=scales,
        gammas=np.array(gammas),
        log_etas=log_etas,
        products=np.array(prods),
        d_sums=np.array(dsums),
        underflow=underflow,
    )


@dataclass
class InitialCheck:
    perc_ok: bool
    lhs: float
    rhs: float
    delta_E: float


def initial_condition_check(
    ell0: int,
    C_perc: float,
    m_p: float,
    xi: float,
    K3: float,
    g_sup: float,
    area: float | None = None,
    C_W: float = 1.0,
    a: float = 1.0,
) -> InitialCheck:
    """Percolation start condition and the Wegner window dE fixing P_ini >= 1 - l0^-xi.

    ``area`` defaults to |Lambda^para_{3 l0, 3 l0}| = (3 l0)^2 sqrt(3)/2 a^2.
    """
    lhs = 2 * C_perc * ell0 * math.exp(-m_p * ell0)
    rhs = ell0**-xi / 2
    if area is None:
        area = (3 * ell0) ** 2 * math.sqrt(3) / 2 * a**2
    dE = rhs / (C_W * K3 * g_sup * area)
    return InitialCheck(lhs <= rhs, lhs, rhs, dE)
