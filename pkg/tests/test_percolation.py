import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hall_lab.errors import InsufficientDecay
from hall_lab.model import Density, ModelConfig
from hall_lab.percolation import (
    NEIGHBOR_OFFSETS, always_event, circuit_event, connectivity_decay_fit, crossing_event,
    crossing_exists, estimate_event_probability, find_occupied_circuit, has_occupied_circuit,
    is_supercritical, occupation_probability, ribbon_from_circuit, ribbon_widths, unoccupied_crossing,
)


def test_occupation_probability_uniform(disordered16):
    assert occupation_probability(disordered16) == pytest.approx(0.6, abs=1e-12)


def test_occupation_probability_full_support():
    cfg = ModelConfig.from_lattice(1.0, 10, 12, 0.5, lam_minus=1.0, lam_plus=1.0)
    assert occupation_probability(cfg) == pytest.approx(1.0)


@given(st.floats(0.0, 1.0))
def test_supercritical_flag(p):
    assert is_supercritical(p) == (p > 0.5)


def test_trivial_crossings():
    assert crossing_exists(np.ones((5, 5), bool))
    assert not crossing_exists(np.zeros((5, 5), bool))


def test_duality_exhaustive_3x3():
    for bits in itertools.product([False, True], repeat=9):
        occ = np.array(bits).reshape(3, 3)
        assert crossing_exists(occ, "lr") != unoccupied_crossing(occ, "tb")


@settings(max_examples=200)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_duality_random_rectangles(rows, cols, seed, p):
    occ = np.random.default_rng(seed).random((rows, cols)) < p
    assert crossing_exists(occ, "lr") != unoccupied_crossing(occ, "tb")


def _exact_lr_probability(rows, cols, p):
    total = 0.0
    for bits in itertools.product([False, True], repeat=rows * cols):
        occ = np.array(bits).reshape(rows, cols)
        if crossing_exists(occ, "lr"):
            k = occ.sum()
            total += p**k * (1 - p) ** (rows * cols - k)
    return total


def test_estimator_consistency_against_enumeration():
    exact = _exact_lr_probability(4, 4, 0.6)
    ph, se = estimate_event_probability(crossing_event(4, 4, 0.6), 4000, 5)
    assert abs(ph - exact) <= 4 * se


def test_self_dual_rhombus_half():
    ph, se = estimate_event_probability(crossing_event(11, 11, 0.5), 4000, 9)
    assert abs(ph - 0.5) <= 4 * se


def test_always_event():
    assert estimate_event_probability(always_event(), 50, 0) == (1.0, 0.0)


def test_circuit_probability_monotone_in_p():
    ps = [estimate_event_probability(circuit_event(5, 5, p), 400, 3)[0] for p in (0.55, 0.65, 0.75)]
    assert ps[0] <= ps[1] <= ps[2]


def test_circuit_trivial_maps():
    assert has_occupied_circuit(np.ones((9, 9), bool), 3, 3)
    assert find_occupied_circuit(np.ones((9, 9), bool), 3, 3).winding in (1, -1)
    assert not has_occupied_circuit(np.zeros((9, 9), bool), 3, 3)
    assert find_occupied_circuit(np.zeros((9, 9), bool), 3, 3) is None


def test_circuits_are_valid(rng):
    found = 0
    for _ in range(30):
        occ = rng.random((15, 15)) < 0.75
        c = find_occupied_circuit(occ, 5, 5)
        assert (c is not None) == has_occupied_circuit(occ, 5, 5)
        if c is None:
            continue
        found += 1
        assert c.winding in (1, -1)
        assert np.array_equal(c.sites[0], c.sites[-1])
        assert all(occ[i + 7, j + 7] for i, j in c.sites)
        steps = np.diff(c.sites, axis=0)
        assert all(tuple(s) in NEIGHBOR_OFFSETS for s in steps)
    assert found > 0


def test_fkg_product_lower_bound():
    l = lp = 5
    p = 0.65
    n = 1500
    pd, sd = estimate_event_probability(circuit_event(l, lp, p), n, 21)
    pa, _ = estimate_event_probability(crossing_event(3 * l, lp, p, "lr"), n, 22)
    pb, _ = estimate_event_probability(crossing_event(l, 3 * lp, p, "tb"), n, 23)
    assert pd >= pa**2 * pb**2 - 5 * sd


def test_ribbon_widths_arithmetic():
    cfg = ModelConfig.landau(1.0, 4, 0.5, r_u=0.7)
    r1, r2 = ribbon_widths(cfg)
    assert r1 == pytest.approx(0.16603, abs=1e-5)
    assert r2 == pytest.approx(0.12265, abs=1e-5)


def test_ribbon_potential_window(rng):
    cfg = ModelConfig.landau(1.0, 4, 0.5)
    for _ in range(5):
        occ = rng.random((33, 33)) < 0.8
        c = find_occupied_circuit(occ, 11, 11)
        if c is None:
            continue
        r = ribbon_from_circuit(c, cfg, 11, 11)
        assert r.clearance >= r.r2 - 1e-9
        lam = np.where(occ, rng.uniform(-cfg.lam_minus, cfg.lam_plus, occ.shape) * 0.999, rng.choice([-1.0, 1.0], occ.shape))
        ok, lo, hi = r.potential_check(cfg, lam)
        assert ok, (lo, hi)


def test_connectivity_decay_needs_events():
    with pytest.raises(InsufficientDecay):
        connectivity_decay_fit(1.0, [1, 2, 3, 4], 200, 0)


def test_connectivity_decay_positive_and_monotone():
    f75 = connectivity_decay_fit(0.75, [1, 2, 3, 4, 5, 6], 4000, 4)
    assert f75.m_p - f75.ci > 0
    f60 = connectivity_decay_fit(0.6, [1, 2, 3, 4, 5, 6], 2000, 6)
    f90 = connectivity_decay_fit(0.9, [1, 2, 3], 4000, 6)
    assert f90.m_p > f60.m_p
