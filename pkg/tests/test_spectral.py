import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hall_lab.errors import MissingConstant
from hall_lab.model import Density, ModelConfig, constant_realization, region_mask, sample_disorder
from hall_lab.operators import build_hamiltonian
from hall_lab.spectral import (
    WegnerParams, band_edge_bounds, eigensolve, estimate_K0_n0, fermi_projection, gap_condition,
    k3_bound, kotani_simon_check, upsilon_trace_sum, wegner_bound, wegner_scan,
)


def _hermitian(rng, n):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


def test_eigensolve_diagonal():
    s = eigensolve(np.diag([3.0, -1.0, 2.0]))
    assert list(s.eigenvalues) == [-1.0, 2.0, 3.0]


def test_eigensolve_pauli_x():
    np.testing.assert_allclose(eigensolve(np.array([[0.0, 1.0], [1.0, 0.0]])).eigenvalues, [-1.0, 1.0], atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_eigensolve_contract(seed, n):
    H = _hermitian(np.random.default_rng(seed), n)
    s = eigensolve(H)
    assert abs(np.trace(H).real - s.eigenvalues.sum()) <= 1e-9 * max(1, np.abs(s.eigenvalues).sum())
    assert s.residual <= 1e-10 * max(1.0, np.abs(s.eigenvalues).max())
    assert s.orthonormality <= 1e-10
    assert np.all(np.diff(s.eigenvalues) >= 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_fermi_projection_contract(seed, N):
    H = _hermitian(np.random.default_rng(seed), 30)
    s = eigensolve(H)
    f = fermi_projection(s, N, M=10)
    P = f.P_F
    assert np.abs(P @ P - P).max() <= 1e-10
    assert round(np.trace(P).real) == N and abs(np.trace(P).real - N) <= 1e-10
    assert np.abs(P @ H - H @ P).max() <= 1e-9
    assert f.nu == N / 10


def test_full_filling_is_identity():
    s = eigensolve(_hermitian(np.random.default_rng(0), 12))
    assert np.allclose(fermi_projection(s, 12).P_F, np.eye(12), atol=1e-12)


def test_band_edges_clean_level(small_clean):
    assert band_edge_bounds(small_clean, 0) == pytest.approx((0.5, 0.5))


def test_band_edges_with_background():
    assert band_edge_bounds(None, 1, B=1.0, AP_norm=0.0, V0_plus=0.1, V0_minus=0.1) == pytest.approx((1.6, 1.4))


def test_gap_condition_arithmetic():
    assert gap_condition(None, 0, B=1.0, AP_norm=0.0, V0_plus=0.15, V0_minus=0.15)
    assert not gap_condition(None, 0, B=1.0, AP_norm=0.0, V0_plus=0.6, V0_minus=0.6)


def test_gap_condition_shows_in_spectrum(small_clean):
    from hall_lab.model import FourierField

    cfg = small_clean.with_(V0=FourierField(((1, 0, 0.1, 0.0), (0, 1, 0.05, 0.3))))
    assert gap_condition(cfg, 0)
    E = np.linalg.eigvalsh(build_hamiltonian(cfg).entries)
    M = cfg.M
    assert E[M] - E[M - 1] > 0.5 * cfg.B


def test_band_containment(disordered16):
    cfg = disordered16
    E = eigensolve(build_hamiltonian(cfg, sample_disorder(cfg, 2))).eigenvalues
    widen = max(abs(cfg.lam_min), abs(cfg.lam_max)) * cfg.u_1
    for n in range(2):
        up, lo = band_edge_bounds(cfg, n)
        band = E[n * cfg.M : (n + 1) * cfg.M]
        assert band.min() >= lo - widen and band.max() <= up + widen


def test_wegner_window_covering_spectrum():
    cfg = ModelConfig.from_lattice(1.0, 4, 4, 0.4)
    tab = wegner_scan([cfg], 0.0, [1e6], 3, 1)
    assert np.all(tab.counts == cfg.grid_Nx * cfg.grid_Ny)


def test_wegner_counts_monotone_in_window():
    cfg = ModelConfig.from_lattice(1.0, 4, 4, 0.4)
    tab = wegner_scan([cfg], 0.5, [0.05, 0.1, 0.2, 0.4], 5, 2)
    assert np.all(np.diff(tab.counts, axis=-1) >= 0)


def test_kotani_simon_empty_window():
    cfg = ModelConfig.from_lattice(1.0, 4, 4, 0.4)
    r = kotani_simon_check(cfg, sample_disorder(cfg, 0), 0, (0.5, 0.5))
    assert r.value == 0.0


def test_kotani_simon_scaled_density():
    cfg = ModelConfig.from_lattice(1.0, 4, 4, 0.4)
    real = sample_disorder(cfg, 5)
    base = kotani_simon_check(cfg, real, 1, (0.3, 0.8))
    doubled = kotani_simon_check(cfg, real, 1, (0.3, 0.8), g=cfg.g.scaled(2.0))
    assert doubled.bound == pytest.approx(2 * base.bound)
    assert doubled.value == pytest.approx(2 * base.value, rel=1e-9)
    assert base.holds and doubled.holds


def test_k0_trace_full_torus(small_clean):
    s = eigensolve(build_hamiltonian(small_clean))
    full = region_mask("custom", {"indicator": np.ones(s.dim, bool)}, small_clean)
    fit = estimate_K0_n0(small_clean, [full], 1.0, s)
    assert fit.traces[0] == pytest.approx(np.sum((s.eigenvalues + 1.0) ** -2.0), rel=1e-12)


def _k0_fit(B):
    cfg = ModelConfig.landau(B, 9, 0.3 / math.sqrt(B))
    regions = [region_mask("rectangle", {"wx": f * cfg.Lx, "wy": f * cfg.Ly}, cfg) for f in (0.3, 0.45, 0.6, 0.75, 0.9)]
    return estimate_K0_n0(cfg, regions, 1.0 * B)


def test_k0_exponent_and_field_scaling():
    fits = [_k0_fit(B) for B in (1.0, 2.0, 4.0)]
    assert abs(fits[0].n0 - 1) <= 0.15
    kb = np.array([f.K0 * B for f, B in zip(fits, (1.0, 2.0, 4.0))])
    assert kb.max() / kb.min() < 1.5


def test_upsilon_properties():
    cfg = ModelConfig.from_lattice(1.0, 4, 4, 0.4)
    u = upsilon_trace_sum(cfg, 0.5)
    n = u.norms
    assert np.all(np.diag(n) > 0)
    assert np.all(n <= np.sqrt(np.outer(np.diag(n), np.diag(n))) + 1e-12)
    assert u.alpha_hat > 0


def test_k3_arithmetic():
    p = WegnerParams(E_min=1.0, U_min=1.0, moment_M=1.0, K0=1.0, n0=1.0, K1=1.0)
    assert k3_bound(p, (0.0, 1.0), u_sup=1.0, supp_area=1.0) == pytest.approx(9.0)
    assert k3_bound(p, (-1.0, -1.0), u_sup=1.0, supp_area=1.0) == pytest.approx(1.0)


def test_k3_needs_k1():
    p = WegnerParams(E_min=1.0, U_min=1.0, moment_M=1.0, K0=1.0)
    with pytest.raises(MissingConstant):
        k3_bound(p, (0.0, 1.0), u_sup=1.0, supp_area=1.0)
    with pytest.raises(MissingConstant):
        wegner_bound(p, 1.0, 1.0, 0.1, 10.0)


def test_k3_grows_linearly_with_field():
    vals = []
    for B in (4.0, 8.0, 16.0):
        p = WegnerParams(E_min=1.0, U_min=0.1, moment_M=1.0, K0=1.0 / B, K1=1.0)
        vals.append(k3_bound(p, (0.0, 3 * B), u_sup=1.0, supp_area=1.0) / B)
    assert max(vals) / min(vals) < 1.3
