"""Integrable reduction of the k = l = 1 profile equations.

For k = l = 1 the difference ``C = |u|^2 - |v|^2`` is conserved.  On the
level set C = 0, the variables ``xi = |v|`` and ``eta = sin(beta - alpha)``
in the time ``tau = y / sqrt(1 - y^2)`` obey the autonomous system

    xi'  = 2 xi^3 eta,
    eta' = 8 xi^2 (1 - eta^2),

with first integral ``E = xi^8 (1 - eta^2)`` and invariant lines
``eta = +-1`` on which ``xi' = +-2 xi^3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .integrate import (
    DEFAULT_ATOL,
    DEFAULT_BLOWUP_NORM,
    DEFAULT_RTOL,
    Trajectory,
    run_core,
    termination_from_status,
)
from .model import DomainError
from .profile import ENDPOINT_OFFSET, POLAR_EPS, PolarDegenerate, clamp_to_interior

# eta is snapped onto +-1 when this close
ETA_CLAMP = 1e-12


class BlowupReached(ArithmeticError):
    """The requested time lies at or beyond a finite escape time."""


@dataclass(frozen=True)
class PlanarState:
    tau: float
    xi: float
    eta: float

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError(f"xi must be nonnegative, got {self.xi}")
        if abs(self.eta) > 1.0:
            raise ValueError(f"eta must lie in [-1, 1], got {self.eta}")


@dataclass(frozen=True)
class GeneralCState:
    y: float
    amp_v: float
    delta: float
    C: float

    def __post_init__(self):
        if self.amp_v < 0:
            raise ValueError("amp_v must be nonnegative")
        if self.C + self.amp_v**2 < 0:
            raise ValueError(f"C + amp_v^2 must be nonnegative, got {self.C + self.amp_v**2}")

    @property
    def amp_u(self) -> float:
        return math.sqrt(self.C + self.amp_v**2)


def c_invariant(amp_u: float, amp_v: float) -> float:
    if amp_u < 0 or amp_v < 0:
        raise ValueError("amplitudes must be nonnegative")
    return amp_u * amp_u - amp_v * amp_v


def tau_of_y(y):
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= 1.0):
        raise DomainError("tau(y) requires |y| < 1")
    out = y / np.sqrt((1.0 - y) * (1.0 + y))
    return float(out) if out.ndim == 0 else out


def y_of_tau(tau):
    tau = np.asarray(tau, dtype=float)
    out = tau / np.hypot(1.0, tau)
    return float(out) if out.ndim == 0 else out


def rhs_planar(state: PlanarState) -> tuple[float, float]:
    d = kernels.planar_rhs(float(state.tau), np.array([state.xi, state.eta]), np.zeros(1))
    return float(d[0]), float(d[1])


def energy_E(xi, eta):
    return xi**8 * (1.0 - eta * eta)


def sigma_flow(xi0: float, sign: int, tau: float) -> float:
    """Exact solution of ``xi' = sign * 2 xi^3`` with ``xi(0) = xi0``."""
    if xi0 <= 0:
        raise ValueError("xi0 must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    arg = 1.0 - sign * 4.0 * xi0 * xi0 * tau
    if arg <= 0.0:
        raise BlowupReached(f"tau={tau} at or beyond escape time {sign / (4.0 * xi0 * xi0)}")
    return xi0 / math.sqrt(arg)


def escape_time(xi0: float, sign: int) -> float:
    return sign / (4.0 * xi0 * xi0)


def escape_time_bound(xi0: float, eta0: float, direction: int) -> float:
    """Upper bound on the escape time from the comparison ``xi' >= 2 xi^3 eta0``.

    Along an orbit with E > 0, eta increases, so for ``direction * eta0 > 0``
    the bound ``|tau| <= 1 / (4 xi0^2 |eta0|)`` holds.  Otherwise no bound of
    this form applies and ``inf`` is returned.
    """
    if direction * eta0 <= 0:
        return math.inf
    return 1.0 / (4.0 * xi0 * xi0 * abs(eta0))


def blowup_location_theorem2(xi0: float) -> float:
    if xi0 <= 0:
        raise ValueError("xi0 must be positive")
    tau0 = -1.0 / (4.0 * xi0 * xi0)
    return y_of_tau(tau0)


def theorem2_profile(xi0: float, y: float) -> tuple[float, float, float]:
    """Closed-form profile on the line eta = -1: returns (|U|, |V|, delta)."""
    if not y < 1.0:
        raise DomainError(f"y must be below 1, got {y}")
    if y <= blowup_location_theorem2(xi0):
        raise DomainError(f"y={y} at or before the blowup point {blowup_location_theorem2(xi0)}")
    xi = sigma_flow(xi0, -1, tau_of_y(y))
    return xi / math.sqrt(1.0 + y), xi / math.sqrt(1.0 - y), -math.pi / 2


def theorem2_spinor(xi0: float) -> Callable:
    """Vectorised closed-form k = l = 1 profile ``y -> (U, V)`` on the line delta = -pi/2."""

    def f(y):
        y = np.asarray(y, dtype=float)
        tau = y / np.sqrt((1.0 - y) * (1.0 + y))
        arg = 1.0 + 4.0 * xi0 * xi0 * tau
        if np.any(arg <= 0):
            raise DomainError("y at or beyond the blowup point")
        xi = xi0 / np.sqrt(arg)
        return xi / np.sqrt(1.0 + y) + 0j, -1j * xi / np.sqrt(1.0 - y)

    return f


def rhs_general_C(state: GeneralCState, eps: float = POLAR_EPS) -> tuple[float, float]:
    """Right-hand side of the k = l = 1 system on the level set |u|^2 - |v|^2 = C."""
    if not -1.0 < state.y < 1.0:
        raise DomainError(f"vector field undefined at y={state.y}")
    if state.amp_v <= eps or state.C + state.amp_v**2 <= eps * eps:
        raise PolarDegenerate(f"amplitudes too small at y={state.y}")
    d = kernels.general_c_rhs(
        float(state.y), np.array([state.amp_v, state.delta]), np.array([float(state.C)])
    )
    return float(d[0]), float(d[1])


# ---------------------------------------------------------------------------
# integration


def integrate_planar(
    start: PlanarState,
    tau_stop: float,
    tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    cos_sign: float = 1.0,
    dense: bool = False,
) -> Trajectory:
    """Integrate the planar system in tau.

    Rows of the result are ``(xi, eta, c)`` with ``c = cos(beta - alpha)``;
    ``cos_sign`` fixes the sign of ``c`` at the start.  Carrying ``c`` keeps
    ``1 - eta^2 = c^2`` at full relative precision after ``eta`` has rounded to
    +-1, which is what makes E measurable at large xi.  The blowup test uses
    ``xi`` alone.
    """
    rtol, atol = tol
    c0 = math.copysign(math.sqrt(max(0.0, (1.0 - start.eta) * (1.0 + start.eta))), cos_sign)
    x0 = np.array([start.xi, start.eta, c0])
    atol_arr = np.array([atol, atol, 1e-300])
    ts, tlo, xs, fs, status, last_h = run_core(
        kernels.planar_lifted_rhs, x0, start.tau, tau_stop, rtol=rtol, atol=atol_arr,
        blowup_norm=blowup_norm, norm_dims=1, dense=dense,
    )
    xs = xs.copy()
    eta = xs[:, 1]
    near = np.abs(np.abs(eta) - 1.0) <= ETA_CLAMP
    eta[near] = np.sign(eta[near])
    term = termination_from_status(status, ts, tlo, np.abs(xs[:, 0]), tau_stop, last_h)
    direction = 1 if tau_stop >= start.tau else -1
    return Trajectory(ts.copy(), xs, fs.copy(), term, direction, None, "planar", tlo.copy())


def planar_energy(traj: Trajectory) -> np.ndarray:
    """E along a planar trajectory, evaluated as ``xi^8 c^2``."""
    xi, c = traj.states[:, 0], traj.states[:, 2]
    return xi**8 * c * c


def planar_from_polar(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(tau, xi, eta)`` reconstructed from a k = l = 1 polar trajectory."""
    if traj.coords != "polar":
        raise ValueError("expected a polar trajectory")
    a, b, alpha, beta = traj.states.T
    return tau_of_y(traj.y), b.copy(), np.sin(beta - alpha)


def integrate_general_c(
    start: GeneralCState,
    y_stop: float,
    tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    eps: float = POLAR_EPS,
    endpoint_offset: float = ENDPOINT_OFFSET,
    dense: bool = False,
) -> Trajectory:
    """Integrate the level-set system in y; rows are ``(amp_v, delta)``."""
    rtol, atol = tol
    if not -1.0 < start.y < 1.0:
        raise DomainError(f"start y={start.y} not interior")
    y_stop = clamp_to_interior(y_stop, endpoint_offset)
    x0 = np.array([start.amp_v, start.delta])
    ys, ylo, xs, fs, status, last_h = run_core(
        kernels.general_c_rhs, x0, start.y, y_stop, args=np.array([float(start.C)]),
        rtol=rtol, atol=atol, blowup_norm=blowup_norm, norm_dims=1, amp_dims=1,
        amp_floor=eps, dense=dense,
    )
    term = termination_from_status(status, ys, ylo, np.abs(xs[:, 0]), y_stop, last_h)
    direction = 1 if y_stop >= start.y else -1
    return Trajectory(ys.copy(), xs.copy(), fs.copy(), term, direction, None, "general_c", ylo.copy())


def c_drift(traj: Trajectory) -> float:
    """Largest change of ``|u|^2 - |v|^2`` along a polar trajectory.

    Each deviation is divided by ``max(1, |u|^2 + |v|^2)``, the scale at
    which the difference is formed, so that rounding near a blowup does not
    masquerade as drift.
    """
    if traj.coords != "polar":
        raise ValueError("expected a polar trajectory")
    a, b = traj.states[:, 0], traj.states[:, 1]
    C = a * a - b * b
    scale = np.maximum(1.0, a * a + b * b)
    return float(np.max(np.abs(C - C[0]) / scale))
