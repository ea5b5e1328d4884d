import math

import numpy as np
import pytest

from dirac_blowup import kernels
from dirac_blowup.integrate import (
    InteriorBlowup,
    ReachedEndpoint,
    StepFailure,
    Trajectory,
    extrapolate_escape,
    integrate_adaptive,
    richardson_limit,
)


def test_zero_field_gives_constant_trajectory():
    tr = integrate_adaptive(kernels.zero_rhs, [1.0, -2.0], (0.0, 1.0))
    assert isinstance(tr.termination, ReachedEndpoint)
    np.testing.assert_array_equal(tr.states, np.tile([1.0, -2.0], (len(tr), 1)))


def test_exponential_reaches_e():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 1.0))
    assert tr.termination == ReachedEndpoint(1.0)
    assert abs(tr.final_state[0] / math.e - 1.0) < 1e-8


def test_python_callable_matches_kernel():
    a = integrate_adaptive(lambda t, x: x, [1.0], (0.0, 1.0), dense=False)
    b = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 1.0), dense=False)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-14)


def test_backward_integration():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, -2.0))
    assert tr.direction == -1
    assert np.all(np.diff(tr.y) < 0)
    assert abs(tr.final_state[0] - math.exp(-2.0)) < 1e-10


def test_sigma_plus_blowup_time():
    # xi' = 2 xi^3 from xi = 1 escapes at tau = 1/4
    tr = integrate_adaptive(
        lambda t, x: np.array([2.0 * x[0] ** 3, 0.0]), [1.0, 1.0], (0.0, 1.0), norm_dims=1, dense=False
    )
    assert isinstance(tr.termination, InteriorBlowup)
    assert tr.termination.max_norm >= 1e8
    assert abs(tr.termination.y0 - 0.25) < 1e-9


def test_max_steps_is_recorded_not_raised():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 10.0), max_steps=5)
    assert isinstance(tr.termination, StepFailure)
    assert "maximum" in tr.termination.reason


def test_step_failure_on_nonintegrable_field():
    # x' = 1/(1 - t)^2 diverges at t = 1 without the state norm blowing past 1e300 ...
    tr = integrate_adaptive(
        lambda t, x: np.array([math.copysign(1.0, 1.0 - t) / abs(1.0 - t) ** 0.5]),
        [0.0], (0.0, 2.0), blowup_norm=1e300, dense=False,
    )
    # ... the step size collapses at t = 1 instead
    assert isinstance(tr.termination, StepFailure)
    assert abs(tr.termination.y_fail - 1.0) < 1e-6


def test_dense_samples_support_linear_interpolation():
    tol = (1e-8, 1e-10)
    tr = integrate_adaptive(lambda t, x: np.array([math.cos(5 * t)]), [0.0], (0.0, 3.0), tol=tol)
    mid = 0.5 * (tr.y[:-1] + tr.y[1:])
    lin = 0.5 * (tr.states[:-1, 0] + tr.states[1:, 0])
    exact = np.sin(5 * mid) / 5
    assert np.max(np.abs(lin - exact)) < 10 * (tol[0] + tol[1]) * 10


def test_samples_monotone_and_finite():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 1.0))
    assert np.all(np.diff(tr.y) > 0)
    assert np.all(np.isfinite(tr.states))


def test_nonpositive_tolerance_rejected():
    with pytest.raises(ValueError):
        integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 1.0), tol=(0.0, 1e-12))


def test_hermite_interpolation_and_ordering():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (1.0, 0.0))
    ordered = tr.ordered()
    assert np.all(np.diff(ordered.y) > 0)
    assert abs(tr.interpolate(0.5)[0] - math.exp(-0.5)) < 1e-8
    with pytest.raises(ValueError):
        tr.interpolate(1.5)


def test_trajectory_arrays_are_read_only():
    tr = integrate_adaptive(kernels.exp_rhs, [1.0], (0.0, 1.0))
    with pytest.raises(ValueError):
        tr.states[0, 0] = 2.0


def test_richardson_recovers_power_law_limit():
    h = 1e-3
    f = lambda s: 2.0 + 3.0 * s**0.7  # noqa: E731
    assert abs(richardson_limit(f(4 * h), f(2 * h), f(h)) - 2.0) < 1e-12


def test_richardson_falls_back_on_non_contracting_data():
    assert richardson_limit(1.0, 2.0, 4.0) == 4.0
    assert richardson_limit(1.0, 1.0, 1.0) == 1.0


def test_extrapolate_escape_on_exact_power_law():
    y0 = 0.3
    ys = y0 - np.logspace(-1, -9, 60)
    norms = (y0 - ys) ** -0.5
    assert abs(extrapolate_escape(ys, None, norms) - y0) < 1e-12


def test_trajectory_constructor_defaults():
    tr = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((2, 1)), ReachedEndpoint(1.0), 1)
    assert np.all(tr.y_lo == 0.0)
    assert len(tr.samples) == 2
