import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hall_lab.errors import DegenerateFermiCut, RegionTouchesSeam
from hall_lab.model import ModelConfig, region_mask
from hall_lab.operators import (
    DriveParams, build_hamiltonian, position_operators, second_derivative, velocity_operators,
)
from hall_lab.spectral import SpectralData, eigensolve, fermi_projection
from hall_lab.transport import (
    IndexProbe, acceleration_coefficients, chern_marker, commutator_sigma_xy, connes_area_check,
    double_commutator_diag, drive_experiment, kubo_sigma_xy, relative_index, switch_index,
)


def _random_system(seed, n=40):
    rng = np.random.default_rng(seed)
    def herm():
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return (X + X.conj().T) / 2
    return eigensolve(herm()), herm(), herm()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 39))
def test_kubo_equals_commutator(seed, N):
    spec, vx, vy = _random_system(seed)
    k = kubo_sigma_xy(spec, vx, vy, N, 7.0)
    c = commutator_sigma_xy(spec, vx, vy, N, 7.0)
    assert c.value == pytest.approx(k.value, abs=1e-10)
    assert k.diagnostics["imag"] <= 1e-10 and c.diagnostics["imag"] <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 39))
def test_kubo_antisymmetric(seed, N):
    spec, vx, vy = _random_system(seed)
    assert kubo_sigma_xy(spec, vx, vy, N, 1.0).value == -kubo_sigma_xy(spec, vy, vx, N, 1.0).value
    assert kubo_sigma_xy(spec, vx, vx, N, 1.0).value == 0.0


def test_empty_and_full_fermi_sea():
    spec, vx, vy = _random_system(1)
    for N in (0, spec.dim):
        assert kubo_sigma_xy(spec, vx, vy, N, 1.0).value == 0.0
        assert commutator_sigma_xy(spec, vx, vy, N, 1.0).value == 0.0
    assert acceleration_coefficients(spec, vx, vy, 0, 1.0) == (0.0, 0.0)


def test_degenerate_cut():
    spec = SpectralData(np.array([0.0, 1.0, 1.0, 2.0]), np.eye(4, dtype=complex), 0.0)
    with pytest.raises(DegenerateFermiCut):
        kubo_sigma_xy(spec, np.eye(4), np.eye(4), 2, 1.0)


@pytest.fixture(scope="module")
def clean16_state(clean16):
    H = build_hamiltonian(clean16)
    spec = eigensolve(H)
    vx, vy = velocity_operators(clean16)
    return clean16, spec, vx, vy, fermi_projection(spec, clean16.M, clean16.M).P_F


def test_clean_kubo_is_minus_one(clean16_state):
    cfg, spec, vx, vy, _ = clean16_state
    k = kubo_sigma_xy(spec, vx, vy, cfg.M, cfg.area)
    assert k.value == pytest.approx(-1.0, abs=1e-3)
    assert commutator_sigma_xy(spec, vx, vy, cfg.M, cfg.area).value == pytest.approx(k.value, abs=1e-10)


def test_clean_marker_central_quarter(clean16_state):
    cfg, _, _, _, P = clean16_state
    x, y = position_operators(cfg)
    om = region_mask("rectangle", {"wx": cfg.Lx / 2, "wy": cfg.Ly / 2}, cfg)
    assert chern_marker(P, om, x, y, cfg=cfg).value == pytest.approx(-1.0, abs=0.1)


def test_marker_trivial_projections(clean16_state):
    cfg, _, _, _, P = clean16_state
    x, y = position_operators(cfg)
    om = region_mask("rectangle", {"wx": cfg.Lx / 2, "wy": cfg.Ly / 2}, cfg)
    n = P.shape[0]
    assert chern_marker(np.zeros((n, n)), om, x, y, cfg=cfg).value == 0.0
    assert abs(chern_marker(np.eye(n), om, x, y, cfg=cfg).value) < 1e-12


def test_marker_seam_guard(clean16_state):
    cfg, _, _, _, P = clean16_state
    x, y = position_operators(cfg)
    with pytest.raises(RegionTouchesSeam):
        chern_marker(P, region_mask("rectangle", {"wx": cfg.Lx * 0.9, "wy": cfg.Ly / 2}, cfg), x, y, cfg=cfg)


def test_relative_index_clean(clean16_state):
    cfg, _, _, _, P = clean16_state
    iv = relative_index(P, IndexProbe(a=(0.0, 0.0)), cfg)
    assert iv.value == pytest.approx(-1.0, abs=0.1)
    assert iv.nearest_integer == -1


def test_relative_index_without_vortex(clean16_state):
    cfg, _, _, _, P = clean16_state
    assert relative_index(P, IndexProbe(a=None), cfg).value == 0.0


def test_switch_index_clean_and_shift(clean16_state):
    cfg, _, _, _, P = clean16_state
    a = switch_index(P, (0.0, 0.0), cfg).value
    b = switch_index(P, (2 * cfg.hx, 2 * cfg.hy), cfg).value
    assert a == pytest.approx(-1.0, abs=0.1)
    # finite-size tolerance at M = 16; the disk radius shrinks with the shift
    assert abs(a - b) <= 0.1


def test_switch_index_diagonal_projection(clean16_state):
    cfg, _, _, _, P = clean16_state
    D = np.diag((np.arange(P.shape[0]) % 2).astype(float))
    assert switch_index(D, (0.0, 0.0), cfg).value == 0.0


def test_double_commutator_matches_dense(rng):
    n = 12
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, _ = np.linalg.qr(X)
    P = Q[:, :5] @ Q[:, :5].conj().T
    f, g = rng.normal(size=n), rng.normal(size=n)
    F, G = np.diag(f), np.diag(g)
    dense = P @ ((P @ F - F @ P) @ (P @ G - G @ P) - (P @ G - G @ P) @ (P @ F - F @ P))
    assert np.allclose(double_commutator_diag(P, f, g), np.diag(dense), atol=1e-12)


def test_connes_closed_form_and_collinear():
    _, closed, _ = connes_area_check((0, 0), (1, 0), (0, 1), (1, 1), 5)
    assert closed == pytest.approx(2j * math.pi)
    s, closed, err = connes_area_check((0, 0), (1, 0), (2, 0), (1, 1), 5)
    assert closed == 0


def test_connes_truncation_error():
    _, closed, err = connes_area_check((0, 0), (1, 0), (0, 1), (1, 1), 50 * math.sqrt(2))
    assert err <= 0.05 * abs(closed)


def test_acceleration_vanishes_clean(clean16_state):
    # magnetic translations make both coefficients vanish exactly at integer filling
    cfg, spec, vx, vy, _ = clean16_state
    gxy, gyy = acceleration_coefficients(spec, vx, vy, cfg.M, cfg.area, second_derivative(cfg, 1))
    assert abs(gxy) < 1e-10 and abs(gyy) < 1e-10


def test_drive_zero_field_and_unitarity(small_clean):
    r = drive_experiment(small_clean, None, small_clean.M, DriveParams(0.0, 0.5, 6.0, 0.02))
    assert np.abs(r.j_ind).max() <= 1e-10
    assert r.norm_drift <= 1e-10


def test_drive_linear_in_field(small_clean):
    s = [drive_experiment(small_clean, None, small_clean.M, DriveParams(F, 0.5, 8.0, 0.02)).sigma_xy for F in (1e-3, 5e-4)]
    assert s[0] == pytest.approx(s[1], rel=0.02)
