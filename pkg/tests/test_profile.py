import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_blowup.integrate import InteriorBlowup, ReachedEndpoint
from dirac_blowup.model import DomainError, ModelParams
from dirac_blowup.profile import (
    CartesianProfileState,
    InsufficientSamples,
    PolarDegenerate,
    PolarState,
    cartesian_samples,
    derivative_5pt,
    from_weighted,
    integrate_cartesian,
    integrate_profile,
    polar_to_weighted,
    residual_profile,
    rhs_cartesian,
    rhs_polar,
    rhs_weighted,
    to_weighted,
    weighted_to_polar,
)

MODELS = [ModelParams(1, 1), ModelParams(2, 1), ModelParams(1, 2), ModelParams(0, 2), ModelParams(2, 0)]
finite = st.floats(-2.0, 2.0, allow_nan=False)
interior = st.floats(-0.95, 0.95)


def test_cartesian_rhs_example(k1l1):
    dU, dV = rhs_cartesian(k1l1, CartesianProfileState(0.0, 1.0, 1.0))
    assert dU == pytest.approx(-0.5 - 4j, abs=1e-15)
    assert dV == pytest.approx(0.5 + 4j, abs=1e-15)


def test_weighted_rhs_example(k1l1):
    du, dv = rhs_weighted(k1l1, 0.0, 1.0 + 0j, 1j)
    assert du == pytest.approx(2.0, abs=1e-15)
    assert dv == pytest.approx(2j, abs=1e-15)


def test_polar_rhs_example(k1l1):
    d = rhs_polar(k1l1, PolarState(0.0, 1.0, 1.0, 0.0, math.pi / 2))
    np.testing.assert_allclose(d, [2.0, 2.0, 0.0, 0.0], atol=1e-15)


def test_cartesian_and_polar_forms_agree():
    params = ModelParams(2, 1)
    ps = PolarState(0.3, 0.7, 1.2, 0.4, -1.1)
    y, u, v = polar_to_weighted(ps)
    cs = from_weighted(params, y, u, v)
    dU, dV = rhs_cartesian(params, cs)
    s = params.sigma_float
    # d/dy of (1 +- y)^s U, written back in polar form
    du = s * (1 + y) ** (s - 1) * cs.U + (1 + y) ** s * dU
    dv = -s * (1 - y) ** (s - 1) * cs.V + (1 - y) ** s * dV
    da, db, dal, dbe = rhs_polar(params, ps)
    assert (np.conj(u) * du).real / abs(u) == pytest.approx(da, rel=1e-12)
    assert (np.conj(v) * dv).real / abs(v) == pytest.approx(db, rel=1e-12)
    assert (np.conj(u) * du).imag / abs(u) ** 2 == pytest.approx(dal, rel=1e-12)
    assert (np.conj(v) * dv).imag / abs(v) ** 2 == pytest.approx(dbe, rel=1e-12)


def test_to_weighted_example(k1l1):
    y, u, v = to_weighted(k1l1, CartesianProfileState(0.6, 1.0, 1.0))
    assert u == pytest.approx(math.sqrt(8 / 5), rel=1e-15)
    assert v == pytest.approx(math.sqrt(2 / 5), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(MODELS), interior, finite, finite, finite, finite)
def test_weighted_round_trip(params, y, a, b, c, d):
    state = CartesianProfileState(y, complex(a, b), complex(c, d))
    back = from_weighted(params, *to_weighted(params, state))
    assert abs(back.U - state.U) <= 1e-14 * max(1.0, abs(state.U))
    assert abs(back.V - state.V) <= 1e-14 * max(1.0, abs(state.V))


def test_weights_not_invertible_at_endpoints(k1l1):
    with pytest.raises(DomainError):
        from_weighted(k1l1, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        CartesianProfileState(-1.0, 1.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(MODELS), interior, finite, finite, finite, finite, st.floats(-math.pi, math.pi))
def test_gauge_invariance(params, y, a, b, c, d, theta):
    U, V = complex(a, b), complex(c, d)
    rot = cmath.exp(1j * theta)
    dU, dV = rhs_cartesian(params, CartesianProfileState(y, U, V))
    rU, rV = rhs_cartesian(params, CartesianProfileState(y, rot * U, rot * V))
    scale = 1.0 + abs(dU) + abs(dV)
    assert abs(rU - rot * dU) <= 1e-12 * scale
    assert abs(rV - rot * dV) <= 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(MODELS), interior, st.floats(0.1, 2.0), st.floats(0.1, 2.0),
       st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_polar_matches_weighted(params, y, a, b, alpha, beta):
    ps = PolarState(y, a, b, alpha, beta)
    _, u, v = polar_to_weighted(ps)
    du, dv = rhs_weighted(params, y, u, v)
    da, db, dal, dbe = rhs_polar(params, ps)
    scale = 1.0 + abs(du) + abs(dv)
    assert abs(du - cmath.exp(1j * alpha) * (da + 1j * a * dal)) <= 1e-12 * scale
    assert abs(dv - cmath.exp(1j * beta) * (db + 1j * b * dbe)) <= 1e-12 * scale


def test_weighted_to_polar_round_trip():
    ps = weighted_to_polar(0.2, 3 - 4j, -1j)
    assert (ps.amp_u, ps.amp_v) == (5.0, 1.0)
    _, u, v = polar_to_weighted(ps)
    assert abs(u - (3 - 4j)) < 1e-15 and abs(v + 1j) < 1e-15


def test_polar_degenerate():
    with pytest.raises(PolarDegenerate):
        rhs_polar(ModelParams(1, 1), PolarState(0.0, 1e-9, 1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        PolarState(0.0, -1.0, 1.0, 0.0, 0.0)


@pytest.mark.parametrize("kl", [(2, 0), (3, 0)])
def test_ell_zero_amplitudes_constant(kl):
    params = ModelParams(*kl)
    for direction in (1.0, -1.0):
        tr = integrate_profile(params, PolarState(0.0, 0.8, 0.6, 0.3, 1.7), direction, dense=False)
        assert isinstance(tr.termination, ReachedEndpoint)
        assert np.max(np.abs(tr.states[:, 0] - 0.8)) <= 1e-12
        assert np.max(np.abs(tr.states[:, 1] - 0.6)) <= 1e-12


def test_mirror_symmetry():
    # y -> -y with (u, alpha) <-> (v, beta) maps solutions to solutions
    params = ModelParams(2, 1)
    right = integrate_profile(params, PolarState(0.0, 0.3, 0.2, 0.2, 1.3), 0.8)
    left = integrate_profile(params, PolarState(0.0, 0.2, 0.3, 1.3, 0.2), -0.8)
    reach = min(right.y[-1], -left.y[-1])
    assert reach > 0.1
    for y in np.linspace(0.05, reach, 5):
        r = right.interpolate(y)
        m = left.interpolate(-y)
        np.testing.assert_allclose([r[0], r[1]], [m[1], m[0]], rtol=1e-8)
        np.testing.assert_allclose(r[3] - r[2], -(m[3] - m[2]), atol=1e-8)


def test_polar_and_cartesian_integration_agree():
    params = ModelParams(1, 2)
    ps = PolarState(0.0, 0.5, 0.4, 0.1, 0.9)
    y, u, v = polar_to_weighted(ps)
    polar = integrate_profile(params, ps, 0.6)
    cart = integrate_cartesian(params, from_weighted(params, y, u, v), 0.6)
    _, U, V = cartesian_samples(params, polar)
    assert abs(U[-1] - complex(*cart.final_state[:2])) < 1e-8
    assert abs(V[-1] - complex(*cart.final_state[2:])) < 1e-8


def test_negative_line_blows_up_left(k1l1):
    tr = integrate_profile(k1l1, PolarState(0.0, 1.0, 1.0, 0.0, -math.pi / 2), -1.0)
    assert isinstance(tr.termination, InteriorBlowup)
    assert abs(tr.termination.y0 + 1 / math.sqrt(17)) < 1e-3


def test_residual_small_on_accurate_trajectory(k1l1):
    tr = integrate_profile(k1l1, PolarState(-0.1, 1.0, 1.0, 0.0, -math.pi / 2), 0.9)
    assert residual_profile(k1l1, tr) <= 1e-6


def test_residual_detects_corruption(k1l1):
    tr = integrate_profile(k1l1, PolarState(-0.1, 1.0, 1.0, 0.0, -math.pi / 2), 0.9)
    states = tr.states.copy()
    states[len(states) // 2, 0] *= 1.01
    bad = type(tr)(tr.y, states, tr.derivs, tr.termination, tr.direction, tr.params, tr.coords, tr.y_lo)
    assert residual_profile(k1l1, bad) >= 1e-3


def test_residual_of_zero_solution():
    params = ModelParams(2, 1)
    tr = integrate_profile(params, PolarState(0.0, 0.0, 0.0, 0.0, 0.0), 0.5)
    assert residual_profile(params, tr) == 0.0


def test_residual_needs_five_samples(k1l1):
    tr = integrate_profile(k1l1, PolarState(0.0, 1.0, 1.0, 0.0, 0.5), 0.5, dense=False)
    short = type(tr)(tr.y[:3], tr.states[:3], tr.derivs[:3], tr.termination, 1, k1l1, "polar")
    with pytest.raises(InsufficientSamples):
        residual_profile(k1l1, short)


def test_derivative_5pt_exact_on_quartic():
    y = np.sort(np.random.default_rng(1).uniform(-1, 1, 40))
    f = 1 + y - 2 * y**2 + y**3 - 0.5 * y**4
    exact = 1 - 4 * y + 3 * y**2 - 2 * y**3
    np.testing.assert_allclose(derivative_5pt(y, f), exact, atol=1e-8)
