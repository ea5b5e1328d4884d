"""Self-similar profile equations in Cartesian, weighted and polar variables.

Cartesian variables ``(U, V)`` satisfy

    i[(y+1) U' + U/(2p)] = F V + G U,
    i[(y-1) V' + V/(2p)] = F U + G V,

on ``-1 < y < 1``.  The weighted variables ``u = (1+y)^sigma U`` and
``v = (1-y)^sigma V`` remove the linear terms, and the polar form
``u = |u| e^{i alpha}``, ``v = |v| e^{i beta}`` exposes that only the phase
difference ``beta - alpha`` enters the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .integrate import (
    DEFAULT_ATOL,
    DEFAULT_BLOWUP_NORM,
    DEFAULT_RTOL,
    STATUS_DEGENERATE,
    STATUS_ENDPOINT,
    Trajectory,
    run_core,
    termination_from_status,
)
from .model import DomainError, ModelParams, eval_FG_cartesian

ENDPOINT_OFFSET = 1e-8
POLAR_EPS = 1e-8
# weighted segments hand back to polar once both amplitudes clear this level
_POLAR_REENTRY = 1e-4
_WEIGHTED_CHUNK = 1e-2


class PolarDegenerate(ArithmeticError):
    """Phase equations are undefined because an amplitude is (nearly) zero."""


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class CartesianProfileState:
    y: float
    U: complex
    V: complex

    def __post_init__(self):
        if not -1.0 < self.y < 1.0:
            raise DomainError(f"y must lie strictly inside (-1, 1), got {self.y}")
        if not (np.isfinite(self.U) and np.isfinite(self.V)):
            raise ValueError("profile state must be finite")


@dataclass(frozen=True)
class PolarState:
    y: float
    amp_u: float
    amp_v: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.amp_u < 0 or self.amp_v < 0:
            raise ValueError("amplitudes must be nonnegative")

    @property
    def delta(self) -> float:
        return self.beta - self.alpha

    def as_array(self) -> np.ndarray:
        return np.array([self.amp_u, self.amp_v, self.alpha, self.beta], dtype=float)


def _check_interior(y: float):
    if not -1.0 < y < 1.0:
        raise DomainError(f"vector field undefined at y={y}")


# ---------------------------------------------------------------------------
# right-hand sides


def rhs_cartesian(params: ModelParams, state: CartesianProfileState) -> tuple[complex, complex]:
    y, U, V = state.y, complex(state.U), complex(state.V)
    _check_interior(y)
    F, G = eval_FG_cartesian(params, U, V)
    sigma = params.sigma_float
    dU = (-1j * (F * V + G * U) - sigma * U) / (y + 1.0)
    dV = (-1j * (F * U + G * V) - sigma * V) / (y - 1.0)
    return complex(dU), complex(dV)


def to_weighted(params: ModelParams, state: CartesianProfileState) -> tuple[float, complex, complex]:
    y = state.y
    sigma = params.sigma_float
    return y, (1.0 + y) ** sigma * complex(state.U), (1.0 - y) ** sigma * complex(state.V)


def from_weighted(params: ModelParams, y: float, u: complex, v: complex) -> CartesianProfileState:
    if not -1.0 < y < 1.0:
        raise DomainError(f"weights are not invertible at y={y}")
    sigma = params.sigma_float
    return CartesianProfileState(y, complex(u) / (1.0 + y) ** sigma, complex(v) / (1.0 - y) ** sigma)


def rhs_weighted(params: ModelParams, y: float, u: complex, v: complex) -> tuple[complex, complex]:
    _check_interior(y)
    x = np.array([u.real, u.imag, v.real, v.imag], dtype=float)
    d = kernels.weighted_rhs(float(y), x, params.as_array())
    return complex(d[0], d[1]), complex(d[2], d[3])


def rhs_polar(params: ModelParams, state: PolarState, eps: float = POLAR_EPS):
    """Return ``(d amp_u, d amp_v, d alpha, d beta)`` at the given point."""
    _check_interior(state.y)
    if state.amp_u <= eps or state.amp_v <= eps:
        raise PolarDegenerate(
            f"amplitudes ({state.amp_u:.3e}, {state.amp_v:.3e}) at or below {eps:.1e}"
        )
    d = kernels.polar_rhs(float(state.y), state.as_array(), params.as_array())
    return float(d[0]), float(d[1]), float(d[2]), float(d[3])


def polar_to_weighted(state: PolarState) -> tuple[float, complex, complex]:
    return (
        state.y,
        state.amp_u * complex(math.cos(state.alpha), math.sin(state.alpha)),
        state.amp_v * complex(math.cos(state.beta), math.sin(state.beta)),
    )


def weighted_to_polar(y: float, u: complex, v: complex) -> PolarState:
    return PolarState(y, abs(u), abs(v), math.atan2(u.imag, u.real), math.atan2(v.imag, v.real))


# ---------------------------------------------------------------------------
# trajectory conversions


def _polar_rows_to_weighted(states: np.ndarray) -> np.ndarray:
    a, b, alpha, beta = states.T
    return np.column_stack([a * np.cos(alpha), a * np.sin(alpha), b * np.cos(beta), b * np.sin(beta)])


def _weighted_rows_to_polar(states: np.ndarray, derivs: np.ndarray, alpha0: float, beta0: float):
    u = states[:, 0] + 1j * states[:, 1]
    v = states[:, 2] + 1j * states[:, 3]
    du = derivs[:, 0] + 1j * derivs[:, 1]
    dv = derivs[:, 2] + 1j * derivs[:, 3]
    a, b = np.abs(u), np.abs(v)

    def unwrap_from(z, start):
        ang = np.angle(z)
        ang[0] = start + np.angle(np.exp(1j * (ang[0] - start)))
        return np.unwrap(ang)

    alpha = unwrap_from(u, alpha0)
    beta = unwrap_from(v, beta0)
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(a > 0, np.real(np.conj(u) * du) / a, np.abs(du))
        db = np.where(b > 0, np.real(np.conj(v) * dv) / b, np.abs(dv))
        dalpha = np.where(a > 0, np.imag(np.conj(u) * du) / a**2, 0.0)
        dbeta = np.where(b > 0, np.imag(np.conj(v) * dv) / b**2, 0.0)
    return np.column_stack([a, b, alpha, beta]), np.column_stack([da, db, dalpha, dbeta])


def cartesian_samples(params: ModelParams, traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(y, U, V)`` arrays for a polar, weighted or Cartesian trajectory."""
    y = np.asarray(traj.y, dtype=float)
    s = traj.states
    if traj.coords == "polar":
        w = _polar_rows_to_weighted(s)
    elif traj.coords in ("weighted", "cartesian"):
        w = s
    else:
        raise ValueError(f"cannot convert {traj.coords!r} trajectory to Cartesian form")
    u = w[:, 0] + 1j * w[:, 1]
    v = w[:, 2] + 1j * w[:, 3]
    if traj.coords == "cartesian":
        return y, u, v
    sigma = params.sigma_float
    return y, u / (1.0 + y) ** sigma, v / (1.0 - y) ** sigma


# ---------------------------------------------------------------------------
# integration driver


def clamp_to_interior(y: float, offset: float = ENDPOINT_OFFSET) -> float:
    return float(min(max(y, -1.0 + offset), 1.0 - offset))


def _lifted_to_polar(lx: np.ndarray, lf: np.ndarray, delta_ref: float):
    a, b, alpha, sn, c = lx.T
    delta = np.unwrap(np.arctan2(sn, c))
    delta += 2.0 * np.pi * np.round((delta_ref - delta[0]) / (2.0 * np.pi))
    ddelta = (c * lf[:, 3] - sn * lf[:, 4]) / (sn * sn + c * c)
    rows = np.column_stack([a, b, alpha, alpha + delta])
    derivs = np.column_stack([lf[:, 0], lf[:, 1], lf[:, 2], lf[:, 2] + ddelta])
    return rows, derivs


def _polar_row_to_lifted(row: np.ndarray) -> np.ndarray:
    delta = row[3] - row[2]
    return np.array([row[0], row[1], row[2], math.sin(delta), math.cos(delta)])


def _weighted_row_to_lifted(w: np.ndarray, polar_row: np.ndarray) -> np.ndarray:
    u = complex(w[0], w[1])
    v = complex(w[2], w[3])
    a, b = abs(u), abs(v)
    if a > 0 and b > 0:
        z = v * u.conjugate() / (a * b)
        return np.array([a, b, polar_row[2], z.imag, z.real])
    return _polar_row_to_lifted(polar_row)


def integrate_profile(
    params: ModelParams,
    ic: PolarState,
    y_stop: float,
    tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    dense: bool = True,
    eps: float = POLAR_EPS,
    endpoint_offset: float = ENDPOINT_OFFSET,
) -> Trajectory:
    """Integrate the profile equations from a polar initial state to ``y_stop``.

    Integration runs in polar variables and switches to the weighted Cartesian
    form while either amplitude is below ``eps``.  The result is always a
    polar trajectory with unwrapped phases.  ``y_stop`` is clamped to
    ``+-(1 - endpoint_offset)``.
    """
    rtol, atol = tol
    y_start = float(ic.y)
    _check_interior(y_start)
    y_stop = clamp_to_interior(y_stop, endpoint_offset)
    direction = 1 if y_stop >= y_start else -1
    args = params.as_array()
    # With ell >= 1 the lines cos(delta) = 0 are invariant and trajectories can
    # hug them; sin/cos of delta are then carried as states and controlled
    # relatively.  With ell = 0, delta just rotates and plain phases are cheaper.
    lift = params.ell >= 1
    lifted_atol = np.array([atol, atol, atol, 1e-300, 1e-300])

    ys, ylos, xs, fs = [], [], [], []
    polar_row = ic.as_array()
    lifted = _polar_row_to_lifted(polar_row)
    y_cur = y_start
    use_polar = ic.amp_u > eps and ic.amp_v > eps
    status = STATUS_ENDPOINT
    last_h = 0.0

    def append(seg_y, seg_lo, seg_x, seg_f):
        skip = 1 if ys else 0
        ys.append(seg_y[skip:])
        ylos.append(seg_lo[skip:])
        xs.append(seg_x[skip:])
        fs.append(seg_f[skip:])

    while True:
        if use_polar and lift:
            seg_y, seg_lo, seg_x, seg_f, status, last_h = run_core(
                kernels.polar_lifted_rhs, lifted, y_cur, y_stop, args=args, rtol=rtol,
                atol=lifted_atol, blowup_norm=blowup_norm, norm_dims=2, amp_dims=2,
                amp_floor=eps, dense=dense,
            )
            px, pf = _lifted_to_polar(seg_x, seg_f, polar_row[3] - polar_row[2])
            append(seg_y, seg_lo, px, pf)
            polar_row = px[-1].copy()
            lifted = seg_x[-1].copy()
        if use_polar and not lift:
            seg_y, seg_lo, px, pf, status, last_h = run_core(
                kernels.polar_rhs, polar_row, y_cur, y_stop, args=args, rtol=rtol,
                atol=atol, blowup_norm=blowup_norm, norm_dims=2, amp_dims=2,
                amp_floor=eps, dense=dense,
            )
            append(seg_y, seg_lo, px, pf)
            polar_row = px[-1].copy()
        if use_polar:
            y_cur = float(seg_y[-1])
            if status == STATUS_DEGENERATE:
                use_polar = False
                status = STATUS_ENDPOINT
                continue
            break
        if direction > 0:
            chunk_stop = min(y_stop, y_cur + _WEIGHTED_CHUNK)
        else:
            chunk_stop = max(y_stop, y_cur - _WEIGHTED_CHUNK)
        w0 = _polar_rows_to_weighted(polar_row[None, :])[0]
        seg_y, seg_lo, seg_x, seg_f, status, last_h = run_core(
            kernels.weighted_rhs, w0, y_cur, chunk_stop, args=args, rtol=rtol,
            atol=atol, blowup_norm=blowup_norm, dense=dense,
        )
        px, pf = _weighted_rows_to_polar(seg_x, seg_f, polar_row[2], polar_row[3])
        append(seg_y, seg_lo, px, pf)
        lifted = _weighted_row_to_lifted(seg_x[-1], px[-1])
        polar_row = px[-1].copy()
        y_cur = float(seg_y[-1])
        if status == STATUS_ENDPOINT and chunk_stop != y_stop:
            if polar_row[0] > _POLAR_REENTRY and polar_row[1] > _POLAR_REENTRY:
                use_polar = True
            continue
        break

    y = np.concatenate(ys)
    ylo = np.concatenate(ylos)
    states = np.concatenate(xs)
    derivs = np.concatenate(fs)
    norms = np.hypot(states[:, 0], states[:, 1])
    term = termination_from_status(status, y, ylo, norms, y_stop, last_h)
    return Trajectory(y, states, derivs, term, direction, params, "polar", ylo)


def integrate_weighted(
    params: ModelParams,
    y0: float,
    u0: complex,
    v0: complex,
    y_stop: float,
    tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    dense: bool = True,
) -> Trajectory:
    y_stop = clamp_to_interior(y_stop)
    x0 = np.array([u0.real, u0.imag, v0.real, v0.imag])
    ys, ylo, xs, fs, status, last_h = run_core(
        kernels.weighted_rhs, x0, y0, y_stop, args=params.as_array(), rtol=tol[0],
        atol=tol[1], blowup_norm=blowup_norm, dense=dense,
    )
    norms = np.sqrt(np.sum(xs**2, axis=1))
    term = termination_from_status(status, ys, ylo, norms, y_stop, last_h)
    return Trajectory(ys, xs, fs, term, 1 if y_stop >= y0 else -1, params, "weighted", ylo)


def integrate_cartesian(
    params: ModelParams,
    state0: CartesianProfileState,
    y_stop: float,
    tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    dense: bool = True,
) -> Trajectory:
    y_stop = clamp_to_interior(y_stop)
    U, V = complex(state0.U), complex(state0.V)
    x0 = np.array([U.real, U.imag, V.real, V.imag])
    ys, ylo, xs, fs, status, last_h = run_core(
        kernels.cartesian_rhs, x0, state0.y, y_stop, args=params.as_array(), rtol=tol[0],
        atol=tol[1], blowup_norm=blowup_norm, dense=dense,
    )
    norms = np.sqrt(np.sum(xs**2, axis=1))
    term = termination_from_status(status, ys, ylo, norms, y_stop, last_h)
    return Trajectory(ys, xs, fs, term, 1 if y_stop >= state0.y else -1, params, "cartesian", ylo)


# ---------------------------------------------------------------------------
# residuals


def fd_weights(x0: float, nodes: np.ndarray, order: int = 1) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion)."""
    n = len(nodes)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for m in range(mn, 0, -1):
                    c[i, m] = c1 * (m * c[i - 1, m - 1] - c5 * c[i - 1, m]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for m in range(mn, 0, -1):
                c[j, m] = (c4 * c[j, m] - m * c[j, m - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def derivative_5pt(y: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Fourth-order first derivative on a nonuniform grid.

    Centred five-point stencils in the interior, one-sided five-point stencils
    at the two ends on each side.
    """
    n = len(y)
    if n < 5:
        raise InsufficientSamples(f"need at least 5 samples, got {n}")
    out = np.empty(n, dtype=np.result_type(f, float))
    for i in range(n):
        lo = min(max(i - 2, 0), n - 5)
        idx = slice(lo, lo + 5)
        out[i] = fd_weights(y[i], y[idx]) @ f[idx]
    return out


def residual_profile(params: ModelParams, traj: Trajectory) -> float:
    """Max over samples of the pointwise defect of the Cartesian profile system."""
    if len(traj) < 5:
        raise InsufficientSamples(f"need at least 5 samples, got {len(traj)}")
    ordered = traj.ordered()
    y, U, V = cartesian_samples(params, ordered)
    dU = derivative_5pt(y, U)
    dV = derivative_5pt(y, V)
    F, G = eval_FG_cartesian(params, U, V)
    sigma = params.sigma_float
    r1 = 1j * ((y + 1.0) * dU + sigma * U) - (F * V + G * U)
    r2 = 1j * ((y - 1.0) * dV + sigma * V) - (F * U + G * V)
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
