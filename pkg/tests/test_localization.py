import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hall_lab.errors import GapViolated, InvalidS, NotInGap
from hall_lab.localization import (
    CTParams, check_s, combes_thomas_beta, ct_params_for_gap, fit_decay, fractional_moment_fit,
    gap_decay_fit, lemma51_inequality_check, moment_trial, probe_masks, projection_decay_fit,
    resolvent_block_norm,
)
from hall_lab.model import ModelConfig, build_lattice
from hall_lab.operators import build_hamiltonian, potential_on_grid
from hall_lab.spectral import eigensolve


@pytest.fixture(scope="module")
def clean_spec(small_clean):
    return eigensolve(build_hamiltonian(small_clean))


def test_full_masks_give_inverse_distance(small_clean, clean_spec):
    full = np.ones(clean_spec.dim, bool)
    z = 1.0 + 0.05j
    expect = 1 / np.min(np.abs(clean_spec.eigenvalues - z))
    assert resolvent_block_norm(None, z, full, full, clean_spec) == pytest.approx(expect, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 6.0), st.floats(1e-3, 3.0).map(lambda e: e) | st.floats(-3.0, -1e-3))
def test_resolvent_bounded_by_inverse_imaginary_part(E, eps):
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    spec = eigensolve(build_hamiltonian(cfg))
    full = np.ones(spec.dim, bool)
    assert resolvent_block_norm(None, complex(E, eps), full, full, spec) <= 1 / abs(eps) * (1 + 1e-12)


def test_far_below_spectrum_decays(small_clean, clean_spec):
    E0 = clean_spec.eigenvalues[0]
    z = E0 - 10 * np.abs(clean_spec.eigenvalues).max()
    d = np.array([0.5, 1.0, 1.5, 2.0])
    A, Bs = probe_masks(small_clean, (0.0, 0.0), d, 0.3)
    norms = [resolvent_block_norm(None, z, A, B, clean_spec) for B in Bs]
    assert max(norms) <= 1 / (E0 - z)
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_ct_beta_arithmetic():
    p = CTParams(E=1.0, E_minus=0.0, E_plus=2.0, C0=1.0, C0_tilde=1.0)
    assert combes_thomas_beta(p) == pytest.approx(math.sqrt(2) / 7, abs=1e-12)


def test_ct_beta_vanishes_at_edge():
    vals = [combes_thomas_beta(CTParams(E=e, E_minus=0.0, E_plus=2.0, C0=1.0, C0_tilde=1.0)) for e in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-2


def test_ct_beta_peaks_near_gap_center():
    E = np.linspace(0.01, 1.99, 397)
    b = [combes_thomas_beta(CTParams(E=e, E_minus=0.0, E_plus=2.0, C0=1.0, C0_tilde=1.0)) for e in E]
    assert abs(E[int(np.argmax(b))] - 1.0) <= 0.02 * 2.0


def test_ct_rejects_energy_outside_gap():
    with pytest.raises(GapViolated):
        CTParams(E=3.0, E_minus=0.0, E_plus=2.0, C0=1.0, C0_tilde=1.0)


def test_gap_fit_not_in_gap(small_clean, clean_spec):
    with pytest.raises(NotInGap):
        gap_decay_fit(small_clean, None, clean_spec.eigenvalues[1], [1, 1.5, 2, 2.5], spec=clean_spec)


def test_gap_fit_beats_ct_rate():
    cfg = ModelConfig.landau(1.0, 9, 0.25)
    spec = eigensolve(build_hamiltonian(cfg))
    d = np.array([2.0, 2.4, 2.8, 3.2]) * cfg.ell_B
    fit, (em, ep) = gap_decay_fit(cfg, None, 1.0, d, spec=spec)
    beta = combes_thomas_beta(ct_params_for_gap(1.0, em, ep, em))
    assert fit.rate >= beta - fit.ci


def test_fit_decay_recovers_rate():
    d = np.linspace(1, 5, 6)
    f = fit_decay(d, 3.0 * np.exp(-0.7 * d))
    assert f.rate == pytest.approx(0.7, abs=1e-12)
    assert f.ci == pytest.approx(0.0, abs=1e-9)


def test_fit_decay_needs_four_points():
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3], [1.0, 0.5, 0.25])


def test_resolvent_bounds_zero_alpha(small_clean, rng):
    n = small_clean.grid_Nx * small_clean.grid_Ny
    r = lemma51_inequality_check(small_clean, rng.normal(size=n), 1.0 + 1j, np.zeros((n, 2)))
    assert np.all(r.lhs == 0) and r.holds


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3.0, 5.0))
def test_resolvent_bounds_random_hermitian(seed, E):
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    n = cfg.grid_Nx * cfg.grid_Ny
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    V = (X + X.conj().T) / math.sqrt(8 * n)
    assert lemma51_inequality_check(cfg, V, complex(E, 1.0), np.ones((n, 2))).holds


def test_resolvent_bounds_homogeneous_in_alpha(small_clean, rng):
    n = small_clean.grid_Nx * small_clean.grid_Ny
    V = rng.normal(size=n)
    al = rng.normal(size=(n, 2))
    a = lemma51_inequality_check(small_clean, V, 0.7 + 0.3j, al)
    b = lemma51_inequality_check(small_clean, V, 0.7 + 0.3j, 2.5 * al)
    assert b.lhs[0] == pytest.approx(2.5 * a.lhs[0], rel=1e-10)
    assert b.rhs[0] == pytest.approx(2.5 * a.rhs[0], rel=1e-12)


def test_invalid_s():
    with pytest.raises(InvalidS):
        check_s(0.4)
    with pytest.raises(InvalidS):
        fractional_moment_fit(ModelConfig.from_lattice(1.0, 4, 4, 0.5), 1.0, 0.4, [1, 2, 3, 4], 1, 0)


@pytest.fixture(scope="module")
def moment_setup(disordered16):
    cfg = disordered16
    d = np.array([1.0, 1.5, 2.0, 2.5, 3.0, 3.5])
    A, Bs = probe_masks(cfg, (0.0, 0.0), d, 0.5)
    return cfg, d, A, Bs, build_lattice(cfg), potential_on_grid(cfg)


def test_moments_regularized_bound(moment_setup):
    cfg, d, A, Bs, lat, base = moment_setup
    eps = np.array([1e-2, 1e-3])
    x = moment_trial(cfg, 1, 1.0, 0.25, eps, A, Bs, lat, base)
    assert np.all(x <= eps[:, None] ** -0.25 * (1 + 1e-12))


def test_moments_monotone_in_s(moment_setup):
    cfg, d, A, Bs, lat, base = moment_setup
    norms = moment_trial(cfg, 2, 1.0, 1.0, [1e-2], A, Bs, lat, base).ravel()
    x = norms / norms.max()

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 0.32), st.floats(0.01, 0.32))
    def check(s1, s2):
        lo, hi = sorted((s1, s2))
        assert np.mean(x**lo) >= np.mean(x**hi) - 1e-15

    check()


def test_fractional_moment_decay_in_regime(disordered16):
    # below ~2 l_B the norms follow cyclotron structure rather than decay
    fit = fractional_moment_fit(disordered16, 1.0, 0.25, [2.0, 2.5, 3.0, 3.5, 4.0, 4.5], 8, 11).fit
    assert fit.rate - fit.ci > 0


def test_projection_decay_clean(clean16):
    d = np.array([1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    pd = projection_decay_fit(clean16, clean16.M, d, 1, 0, clean=True)
    assert pd.fit.rate > 0
    assert np.all(pd.samples <= 1 + 1e-12)


def test_projection_same_region_bounded(disordered16):
    pd = projection_decay_fit(disordered16, 16, [0.0, 1.0, 2.0, 3.0], 2, 5)
    assert np.all(pd.samples[:, 0] <= 1 + 1e-12)


def test_projection_decay_weak_disorder():
    cfg = ModelConfig.from_lattice(1.0, 10, 12, math.sqrt(0.12), u_amp=0.2)
    pd = projection_decay_fit(cfg, cfg.M, [1.0, 1.5, 2.0, 2.5, 3.0, 3.5], 8, 7)
    assert pd.fit.rate - pd.fit.ci > 0
