import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_blowup.model import DomainError, ModelParams
from dirac_blowup.pde import (
    CauchyField,
    charge,
    compare_with_ansatz,
    cosine_taper,
    dependence_window,
    evolve,
    seed_self_similar,
    step,
    steps_for,
)
from dirac_blowup.planar import theorem2_profile, theorem2_spinor
from dirac_blowup.profile import PolarState, integrate_profile

K1L1 = ModelParams(1, 1)


def gaussian_field(dx=2.0**-9, x_lo=-2.0, x_hi=2.0):
    n = int(round((x_hi - x_lo) / dx)) + 1
    x = x_lo + dx * np.arange(n)
    u1 = np.exp(-40.0 * x**2) * (1.0 + 0.5j)
    u2 = 0.8j * np.exp(-40.0 * (x - 0.1) ** 2)
    return CauchyField(0.0, x_lo, dx, u1, u2)


def theorem2_seed(dx, xi0=1.0):
    prof = theorem2_spinor(xi0)
    prof.y_range = (-0.2, 0.9)
    return seed_self_similar(K1L1, prof, 0.0, -0.2, 0.9, dx), prof


def test_field_validation():
    with pytest.raises(ValueError):
        CauchyField(0.0, 0.0, 0.1, np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        CauchyField(0.0, 0.0, 0.0, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        CauchyField(0.0, 0.0, 0.1, np.array([np.nan, 0]), np.zeros(2))


def test_zero_field_stays_zero():
    f = CauchyField(0.0, -1.0, 0.01, np.zeros(201), np.zeros(201))
    g = step(f, K1L1)
    assert g.t == 0.01
    assert not np.any(g.u1) and not np.any(g.u2)
    assert charge(g) == 0.0


def test_uniform_data_match_exact_rotation():
    a0 = 0.7 + 0.2j
    dx = 2.0**-8
    f = CauchyField(0.0, -1.0, dx, np.full(513, a0), np.full(513, a0))
    g = step(f, K1L1)
    exact = a0 * cmath.exp(-4j * abs(a0) ** 2 * dx)
    mid = slice(10, -10)
    assert np.max(np.abs(g.u1[mid] - exact)) <= 1e-8
    assert np.max(np.abs(g.u2[mid] - exact)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(-math.pi, math.pi), st.sampled_from([(1, 1), (2, 1), (1, 2), (0, 2), (2, 0)]))
def test_gauge_equivariance(theta, kl):
    params = ModelParams(*kl)
    f = gaussian_field(2.0**-7)
    rot = cmath.exp(1j * theta)
    g = step(f, params)
    h = step(CauchyField(f.t, f.x0, f.dx, rot * f.u1, rot * f.u2), params)
    scale = max(np.max(np.abs(g.u1)), np.max(np.abs(g.u2)))
    assert np.max(np.abs(h.u1 - rot * g.u1)) <= 1e-14 * scale
    assert np.max(np.abs(h.u2 - rot * g.u2)) <= 1e-14 * scale


def test_swap_reflection_symmetry_is_exact():
    f = gaussian_field(2.0**-7, -1.0, 1.0)
    g = step(f, K1L1)
    mirrored = CauchyField(0.0, f.x0, f.dx, f.u2[::-1], f.u1[::-1])
    h = step(mirrored, K1L1)
    np.testing.assert_array_equal(h.u1, g.u2[::-1])
    np.testing.assert_array_equal(h.u2, g.u1[::-1])


@pytest.mark.parametrize("kl", [(1, 1), (2, 0), (0, 2)])
def test_scaling_covariance(kl):
    # p = 1: sqrt(2) U(2t, 2x) is again a solution
    params = ModelParams(*kl)
    coarse = gaussian_field(2.0**-8)
    fine = CauchyField(0.0, coarse.x0 / 2, coarse.dx / 2, math.sqrt(2) * coarse.u1, math.sqrt(2) * coarse.u2)
    a = evolve(coarse, params, 64).field
    b = evolve(fine, params, 64).field
    assert b.t == pytest.approx(a.t / 2)
    err = max(np.max(np.abs(b.u1 - math.sqrt(2) * a.u1)), np.max(np.abs(b.u2 - math.sqrt(2) * a.u2)))
    assert err <= 1e-4


def test_gaussian_charge_quadrature():
    dx = 2.0**-10
    x = -4.0 + dx * np.arange(int(8 / dx) + 1)
    u1 = (2.0 / math.pi) ** 0.25 * np.exp(-(x**2))
    f = CauchyField(0.0, -4.0, dx, u1, np.zeros_like(u1))
    assert abs(charge(f) - 1.0) <= 1e-6


def test_charge_conserved_over_100_steps():
    f = gaussian_field()
    q0 = charge(f)
    ev = evolve(f, ModelParams(2, 1), 100)
    assert ev.verdict == "ok"
    assert abs(charge(ev.field) - q0) <= 1e-6 * q0


def test_overflow_is_reported():
    f = CauchyField(0.0, -1.0, 0.01, np.full(201, 3.0 + 0j), np.full(201, 3.0 + 0j))
    ev = evolve(f, K1L1, 1000, blowup_norm=1e-3)
    assert ev.verdict == "Overflow"
    assert ev.overflow.t == pytest.approx(0.01)


def test_snapshots_and_step_count():
    f = gaussian_field(2.0**-6)
    ev = evolve(f, K1L1, steps_for(f, 0.5), snapshot_every=8)
    assert len(ev.snapshots) == 5
    assert ev.field.t == pytest.approx(0.5)
    with pytest.raises(ValueError):
        steps_for(f, 0.3)


def test_cosine_taper_shape():
    w = cosine_taper(101)
    assert w[0] == 0.0 and w[-1] == 0.0
    assert np.all(w[10:91] == 1.0)
    np.testing.assert_allclose(w, w[::-1])


def test_seed_matches_closed_form_at_t0_zero():
    f, _ = theorem2_seed(2.0**-9)
    x = f.x
    w = cosine_taper(len(x))
    for i in range(0, len(x), 37):
        au, av, _ = theorem2_profile(1.0, float(x[i]))
        assert abs(f.u1[i]) == pytest.approx(w[i] * au, rel=1e-12, abs=1e-15)
        assert abs(f.u2[i]) == pytest.approx(w[i] * av, rel=1e-12, abs=1e-15)


def test_seed_of_zero_profile_is_zero():
    zero = lambda y: (np.zeros_like(y, dtype=complex), np.zeros_like(y, dtype=complex))  # noqa: E731
    f = seed_self_similar(K1L1, zero, 0.0, -0.5, 0.5, 0.01)
    assert not np.any(f.u1) and not np.any(f.u2)


def test_seed_time_scaling():
    prof = theorem2_spinor(1.0)
    a = seed_self_similar(K1L1, prof, 0.0, -0.1, 0.4, 2.0**-8, taper=0.0)
    b = seed_self_similar(K1L1, prof, 0.5, -0.05, 0.2, 2.0**-9, taper=0.0)
    # node i of b sits at y = x / 0.5, which is node i of a
    np.testing.assert_allclose(b.u1, math.sqrt(2) * a.u1, rtol=1e-13)
    np.testing.assert_allclose(b.u2, math.sqrt(2) * a.u2, rtol=1e-13)


def test_seed_needs_profile_range(k1l1):
    tr = integrate_profile(k1l1, PolarState(0.0, 1.0, 1.0, 0.0, -math.pi / 2), 0.5)
    with pytest.raises(DomainError):
        seed_self_similar(k1l1, tr, 0.0, -0.1, 0.8, 0.01)
    with pytest.raises(DomainError):
        seed_self_similar(k1l1, tr, 1.0, -0.1, 0.4, 0.01)


def test_seed_from_trajectory_matches_closed_form(line_profile_right, k1l1):
    f = seed_self_similar(k1l1, line_profile_right, 0.0, 0.0, 0.9, 2.0**-8, taper=0.0)
    assert compare_with_ansatz(f, k1l1, theorem2_spinor(1.0), fraction=1.0) <= 1e-8


def test_fresh_seed_has_zero_discrepancy():
    f, prof = theorem2_seed(2.0**-9)
    win = dependence_window(f, f.t)
    assert compare_with_ansatz(f, K1L1, prof, win) <= 1e-15


def test_mismatched_profile_is_detected():
    f, _ = theorem2_seed(2.0**-9)
    other = theorem2_spinor(1.1)
    assert compare_with_ansatz(f, K1L1, other, dependence_window(f, 0.0)) >= 1e-2


def test_empty_window_rejected():
    f, prof = theorem2_seed(2.0**-9)
    with pytest.raises(DomainError):
        compare_with_ansatz(f, K1L1, prof, dependence_window(f, 0.6))


def test_evolution_tracks_ansatz_and_converges():
    gaps = []
    for j in (9, 10, 11):
        dx = 2.0**-j
        seed, prof = theorem2_seed(dx)
        ev = evolve(seed, K1L1, steps_for(seed, 0.25))
        gaps.append(compare_with_ansatz(ev.field, K1L1, prof, dependence_window(seed, 0.25)))
    orders = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert gaps[-1] <= 1e-3
    assert np.all(orders >= 1.9)
