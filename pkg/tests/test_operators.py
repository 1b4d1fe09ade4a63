import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hall_lab.errors import BandsNotResolved, UnsupportedShift
from hall_lab.model import FourierField, ModelConfig, VectorFourierField, constant_realization, sample_disorder
from hall_lab.operators import (
    DriveParams, GridLinks, build_hamiltonian, compress, drive_hamiltonian, magnetic_translation,
    position_operators, potential_on_grid, project_to_landau_bands, second_derivative,
    velocity_operators, vortex_unitary,
)


def _zero_field(cfg):
    z = copy.copy(cfg)
    object.__setattr__(z, "B", 0.0)
    return z


def _clusters(E, M, n):
    return [E[k * M : (k + 1) * M] for k in range(n)]


def test_zero_field_laplacian_spectrum():
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    cfg = cfg.with_(grid_Nx=8, grid_Ny=8)
    z = _zero_field(cfg)
    H = GridLinks(z).assemble(np.zeros(64))
    E = np.linalg.eigvalsh(H)
    m = np.arange(8)
    cx = 2 * (1 - np.cos(2 * np.pi * m / 8)) / (2 * cfg.hx**2)
    cy = 2 * (1 - np.cos(2 * np.pi * m / 8)) / (2 * cfg.hy**2)
    ref = np.sort((cx[:, None] + cy[None, :]).ravel())
    np.testing.assert_allclose(E, ref, atol=1e-10)


def test_plane_wave_velocity():
    cfg = ModelConfig.landau(1.0, 4, 0.5).with_(grid_Nx=8, grid_Ny=8)
    z = _zero_field(cfg)
    L = GridLinks(z)
    x = cfg.grid_points()[:, 0]
    for q in range(1, 4):
        k = 2 * np.pi * q / cfg.Lx
        psi = np.exp(1j * k * x) / 8
        vx = L.derivative(0)
        val = np.vdot(psi, vx @ psi).real
        assert abs(val) == pytest.approx(math.sin(k * cfg.hx) / cfg.hx, abs=1e-12)
        # sign follows dE/dk of the cosine band
        assert np.sign(val) == np.sign(math.sin(k * cfg.hx))


def test_hermitian_exactly(disordered16):
    H = build_hamiltonian(disordered16, sample_disorder(disordered16, 1))
    assert H.hermiticity_error() == 0.0
    vx, vy = velocity_operators(disordered16)
    assert np.abs(vx - vx.conj().T).max() <= 1e-12
    assert np.abs(vy - vy.conj().T).max() <= 1e-12


def test_lowest_landau_level(clean16):
    E = np.linalg.eigvalsh(build_hamiltonian(clean16).entries)
    assert clean16.B * clean16.hx * clean16.hy <= 0.15
    assert np.all(np.abs(E[:16] / 0.5 - 1) <= 0.02)


def test_cluster_dimension_is_M(small_clean):
    E = np.linalg.eigvalsh(build_hamiltonian(small_clean).entries)
    gaps = np.diff(E[: 3 * small_clean.M + 1])
    big = np.flatnonzero(gaps > 0.3 * small_clean.B)
    assert list(big[:3] + 1) == [4, 8, 12]


def test_velocity_is_commutator_in_bulk(clean16):
    H = build_hamiltonian(clean16).entries
    _, vy = velocity_operators(clean16)
    x, y = position_operators(clean16)
    r2 = x**2 + y**2
    psi = np.exp(-r2)  # negligible weight at the seam
    psi /= np.linalg.norm(psi)
    comm = 1j * (H @ (y * psi) - y * (H @ psi))
    assert np.linalg.norm(comm - vy @ psi) <= 1e-8


def test_twist_second_derivative(small_clean):
    k = 1e-3
    for s in (0, 1):
        e = np.zeros(2)
        e[s] = k
        Hp = build_hamiltonian(small_clean, kappa=e).entries
        H0 = build_hamiltonian(small_clean).entries
        Hm = build_hamiltonian(small_clean, kappa=-e).entries
        fd = (Hp - 2 * H0 + Hm) / k**2
        assert np.abs(fd - second_derivative(small_clean, s)).max() <= 1e-6 * max(1, np.abs(fd).max())


def test_gauge_covariance(small_clean):
    chi = FourierField(((1, 0, 0.3, 0.2), (0, 1, 0.2, -1.0), (1, 1, 0.1, 0.5)))
    cfg_g = small_clean.with_(AP=VectorFourierField(gauge=chi))
    E0 = np.linalg.eigvalsh(build_hamiltonian(small_clean).entries)
    E1 = np.linalg.eigvalsh(build_hamiltonian(cfg_g).entries)
    assert np.abs(E0 - E1).max() < 1e-9


def test_full_period_translations(small_clean):
    H = build_hamiltonian(small_clean).entries
    tx = magnetic_translation(small_clean, (small_clean.Lx, 0.0))
    ty = magnetic_translation(small_clean, (0.0, small_clean.Ly))
    for t in (tx, ty):
        assert np.linalg.norm(t @ H - H @ t) / np.linalg.norm(H) <= 1e-10
        assert np.abs(t @ t.conj().T - np.eye(len(t))).max() <= 1e-12
    assert np.abs(tx @ ty - ty @ tx).max() <= 1e-12


def test_elementary_translations_commute_with_clean_H(small_clean):
    cfg = small_clean  # 12 x 12 grid, M = 4: Lx/M and Ly/M are three grid steps
    H = build_hamiltonian(cfg).entries
    tx = magnetic_translation(cfg, (cfg.Lx / cfg.M, 0.0))
    ty = magnetic_translation(cfg, (0.0, cfg.Ly / cfg.M))
    for t in (tx, ty):
        assert np.linalg.norm(t @ H - H @ t) <= 1e-10 * np.linalg.norm(H)
    # elementary translations commute up to exp(i B sx sy) = exp(2 pi i / M)
    c = tx @ ty @ tx.conj().T @ ty.conj().T
    phase = np.diag(c)
    assert np.allclose(np.abs(phase), 1.0)
    assert np.allclose(phase, phase[0])
    assert np.isclose(abs(np.angle(phase[0])), 2 * np.pi / cfg.M)


def test_partial_shift_rejected(small_clean):
    with pytest.raises(UnsupportedShift):
        magnetic_translation(small_clean, (0.3 * small_clean.hx, 0.0))
    with pytest.raises(UnsupportedShift):
        magnetic_translation(small_clean, (small_clean.hx, 0.0))
    with pytest.raises(UnsupportedShift):
        magnetic_translation(small_clean, (0.0, small_clean.hy))


def test_vortex_unit_modulus(small_clean):
    assert np.allclose(np.abs(vortex_unitary(small_clean, (0.1, -0.2))), 1.0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_vortex_phase_difference_bound(k, a1, a2):
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    pts = cfg.grid_points()
    U = vortex_unitary(cfg, (a1, a2))
    rng = np.random.default_rng(k)
    i, j = rng.integers(0, len(pts), 2)
    u, v = pts[i], pts[j]
    if max(np.abs(u).max(), np.abs(v).max()) > cfg.Lx / 4:
        return
    du = np.hypot(*(u - (a1, a2)))
    lhs = abs(1 - U[i] * np.conj(U[j]))
    assert lhs <= 2 * np.hypot(*(u - v)) / du + 1e-12


def test_vortex_cells_converge_to_points(small_clean):
    U = vortex_unitary(small_clean, (0.05, 0.05))
    errs = []
    pts = small_clean.grid_points()
    far = np.hypot(pts[:, 0] - 0.05, pts[:, 1] - 0.05) > 1.0
    for e in (0.4, 0.1, 0.025):
        errs.append(np.abs(vortex_unitary(small_clean, (0.05, 0.05), (e, e)) - U)[far].max())
    assert errs[0] > errs[1] > errs[2]


def test_drive_protocol(small_clean):
    d = DriveParams(1e-3, 0.2, 10.0, 0.01)
    assert d.alpha(0.0) == 0.0
    assert d.alpha(3.0) == pytest.approx(-3e-3)
    assert d.field(-1e-12) == pytest.approx(d.field(1e-12), rel=1e-9)
    h = 1e-6
    for t in (-4.0, -1.0, 2.0):
        assert -(d.alpha(t + h) - d.alpha(t - h)) / (2 * h) == pytest.approx(d.field(t), rel=1e-6)
    H0 = build_hamiltonian(small_clean).entries
    assert np.array_equal(drive_hamiltonian(small_clean, None, 0.0, d).entries, H0)


def test_projection_of_clean_H(clean16):
    H0 = build_hamiltonian(clean16)
    E_full = np.linalg.eigvalsh(H0.entries)
    P = project_to_landau_bands(clean16, H0, H0, 2)
    assert P.dim == 2 * clean16.M
    E = np.linalg.eigvalsh(P.entries)
    np.testing.assert_allclose(E, E_full[: 2 * clean16.M], atol=1e-10)
    off = P.entries - np.diag(np.diag(P.entries))
    assert np.abs(off).max() <= 1e-10
    for n, c in enumerate(_clusters(E, clean16.M, 2)):
        assert np.all(np.abs(c / (n + 0.5) - 1) < 0.03)


def test_weak_disorder_projected_spectrum(disordered16):
    cfg = disordered16.with_(u_amp=0.05, u_0=0.01)
    H0 = build_hamiltonian(cfg)
    real = sample_disorder(cfg, 4)
    V = potential_on_grid(cfg, real)
    H = build_hamiltonian(cfg, real)
    E = np.linalg.eigvalsh(project_to_landau_bands(cfg, H0, H, 2).entries)
    levels = np.linalg.eigvalsh(H0.entries)[: 2 * cfg.M]
    vmax = np.abs(V).max()
    for n in range(2):
        c = E[n * cfg.M : (n + 1) * cfg.M]
        lv = levels[n * cfg.M : (n + 1) * cfg.M]
        assert c.min() >= lv.min() - vmax - 1e-9 and c.max() <= lv.max() + vmax + 1e-9


def test_bands_not_resolved():
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    H0 = build_hamiltonian(cfg)
    with pytest.raises(BandsNotResolved):
        project_to_landau_bands(cfg, H0, H0, n_max=cfg.grid_Nx * cfg.grid_Ny)


def test_compress_is_identity_on_grid(small_clean):
    H = build_hamiltonian(small_clean)
    vx, _ = velocity_operators(small_clean)
    assert compress(vx, H) is vx
