"""Direct Cauchy solver for the massless nonlinear Dirac system.

    i (d_t + d_x) U1 = F U2 + G U1,
    i (d_t - d_x) U2 = F U1 + G U2.

With dt = dx the transport part is an exact lattice shift (U1 one node to the
right, U2 one node to the left), so a Strang splitting puts all
discretisation error into the node-local nonlinear substep, which is solved
with classical RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numba import njit
from scipy.integrate import trapezoid

from .integrate import DEFAULT_BLOWUP_NORM, Trajectory
from .model import DomainError, ModelParams
from .profile import _polar_rows_to_weighted

TAPER_FRACTION = 0.1
COMPARE_FRACTION = 0.6


class FieldOverflow(ArithmeticError):
    """Some amplitude exceeded the blowup threshold during a step."""

    def __init__(self, t: float, max_amp: float):
        super().__init__(f"field amplitude {max_amp:.3e} exceeded threshold at t={t}")
        self.t = t
        self.max_amp = max_amp


@dataclass(frozen=True, eq=False)
class CauchyField:
    t: float
    x0: float
    dx: float
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = np.array(self.u1, dtype=np.complex128)
        u2 = np.array(self.u2, dtype=np.complex128)
        if u1.ndim != 1 or u1.shape != u2.shape or u1.size < 2:
            raise ValueError("u1 and u2 must be 1-d arrays of equal length >= 2")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise ValueError("field entries must be finite")
        u1.setflags(write=False)
        u2.setflags(write=False)
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.u1.size)

    def __len__(self):
        return self.u1.size


@njit(cache=True, error_model="numpy")
def _nonlinear_rhs(a, b, k, ell):
    # returns (dU1, dU2) for i U1' = F U2 + G U1, i U2' = F U1 + G U2
    # grouped so that swapping a and b gives bit-identical values
    density = (a.real * a.real + a.imag * a.imag) + (b.real * b.real + b.imag * b.imag)
    coupling = 2.0 * (a.real * b.real + a.imag * b.imag)
    F = 0.0
    G = 0.0
    if ell > 0:
        F = ell * density**k * coupling ** (ell - 1)
    if k > 0:
        G = k * density ** (k - 1) * coupling**ell
    return -1j * (F * b + G * a), -1j * (F * a + G * b)


@njit(cache=True, error_model="numpy")
def _nonlinear_substep(u1, u2, h, k, ell):
    n = u1.size
    out1 = np.empty(n, dtype=np.complex128)
    out2 = np.empty(n, dtype=np.complex128)
    for j in range(n):
        a = u1[j]
        b = u2[j]
        ka1, kb1 = _nonlinear_rhs(a, b, k, ell)
        ka2, kb2 = _nonlinear_rhs(a + 0.5 * h * ka1, b + 0.5 * h * kb1, k, ell)
        ka3, kb3 = _nonlinear_rhs(a + 0.5 * h * ka2, b + 0.5 * h * kb2, k, ell)
        ka4, kb4 = _nonlinear_rhs(a + h * ka3, b + h * kb3, k, ell)
        out1[j] = a + h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        out2[j] = b + h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4)
    return out1, out2


def nonlinear_flow(params: ModelParams, u1, u2, h: float):
    """One RK4 step of the node-local nonlinear ODE over time ``h``."""
    return _nonlinear_substep(
        np.asarray(u1, dtype=np.complex128), np.asarray(u2, dtype=np.complex128),
        float(h), params.k, params.ell,
    )


def _transport(u1: np.ndarray, u2: np.ndarray):
    s1 = np.empty_like(u1)
    s2 = np.empty_like(u2)
    s1[1:] = u1[:-1]
    s1[0] = 0.0
    s2[:-1] = u2[1:]
    s2[-1] = 0.0
    return s1, s2


def step(field: CauchyField, params: ModelParams, blowup_norm: float = DEFAULT_BLOWUP_NORM) -> CauchyField:
    """Advance by one Strang step of length ``dt = dx``."""
    h = 0.5 * field.dx
    a, b = nonlinear_flow(params, field.u1, field.u2, h)
    a, b = _transport(a, b)
    a, b = nonlinear_flow(params, a, b, h)
    t_new = field.t + field.dx
    peak = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    if not (peak <= blowup_norm):
        raise FieldOverflow(t_new, peak)
    return CauchyField(t_new, field.x0, field.dx, a, b)


@dataclass(frozen=True)
class Evolution:
    field: CauchyField
    snapshots: tuple
    overflow: FieldOverflow | None = None

    @property
    def verdict(self) -> str:
        return "ok" if self.overflow is None else "Overflow"


def evolve(
    field: CauchyField,
    params: ModelParams,
    n_steps: int,
    snapshot_every: int = 0,
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
) -> Evolution:
    """Take ``n_steps`` steps; overflow stops the run and is reported, not raised."""
    snaps = [field] if snapshot_every else []
    current = field
    for i in range(1, n_steps + 1):
        try:
            current = step(current, params, blowup_norm)
        except FieldOverflow as exc:
            return Evolution(current, tuple(snaps), exc)
        if snapshot_every and i % snapshot_every == 0:
            snaps.append(current)
    return Evolution(current, tuple(snaps))


def steps_for(field: CauchyField, duration: float) -> int:
    n = duration / field.dx
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"duration {duration} is not a multiple of dx={field.dx}")
    return int(round(n))


def charge(field: CauchyField) -> float:
    dens = np.abs(field.u1) ** 2 + np.abs(field.u2) ** 2
    return float(trapezoid(dens, dx=field.dx))


# ---------------------------------------------------------------------------
# self-similar seeding


def profile_function(params: ModelParams, profile) -> Callable:
    """Vectorised ``y -> (U, V)`` for a trajectory or a callable profile.

    Trajectories are interpolated with cubic Hermite polynomials in their own
    coordinates and then mapped to Cartesian values.
    """
    if not isinstance(profile, Trajectory):
        return profile
    ordered = profile.ordered()
    lo, hi = float(ordered.y[0]), float(ordered.y[-1])
    sigma = params.sigma_float

    def f(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y < lo) or np.any(y > hi):
            raise DomainError(f"profile only covers y in [{lo}, {hi}]")
        rows = ordered.interpolate(y)
        rows = np.atleast_2d(rows)
        if ordered.coords == "polar":
            w = _polar_rows_to_weighted(rows)
        elif ordered.coords in ("weighted", "cartesian"):
            w = rows
        else:
            raise ValueError(f"cannot seed from {ordered.coords!r} trajectory")
        U = w[:, 0] + 1j * w[:, 1]
        V = w[:, 2] + 1j * w[:, 3]
        if ordered.coords != "cartesian":
            U = U / (1.0 + y) ** sigma
            V = V / (1.0 - y) ** sigma
        return U, V

    f.y_range = (lo, hi)
    return f


def cosine_taper(n: int, fraction: float = TAPER_FRACTION) -> np.ndarray:
    """Window equal to 1 inside and rising as a half cosine over ``fraction`` of each edge."""
    w = np.ones(n)
    m = int(round(fraction * (n - 1)))
    if m > 0:
        s = np.arange(m) / m
        ramp = 0.5 * (1.0 - np.cos(np.pi * s))
        w[:m] = ramp
        w[n - m :] = ramp[::-1]
    return w


def seed_self_similar(
    params: ModelParams,
    profile,
    t0: float,
    x_lo: float,
    x_hi: float,
    dx: float,
    taper: float = TAPER_FRACTION,
) -> CauchyField:
    """Sample the self-similar lift of ``profile`` at time ``t0`` on a grid.

    ``profile`` is a trajectory or a vectorised callable ``y -> (U, V)``.
    The data are multiplied by a cosine taper over ``taper`` of the domain at
    each edge so that they vanish smoothly at the grid ends.
    """
    if not t0 < 1.0:
        raise DomainError(f"t0 must be below 1, got {t0}")
    n = int(math.floor((x_hi - x_lo) / dx + 1e-9)) + 1
    x = x_lo + dx * np.arange(n)
    y = x / (1.0 - t0)
    f = profile_function(params, profile)
    rng = getattr(f, "y_range", None)
    if rng is not None and (y[0] < rng[0] or y[-1] > rng[1]):
        raise DomainError(f"grid needs y in [{y[0]}, {y[-1]}], profile covers {rng}")
    U, V = f(y)
    scale = (1.0 - t0) ** (-params.sigma_float)
    w = cosine_taper(n, taper) if taper > 0 else np.ones(n)
    return CauchyField(t0, x_lo, dx, scale * w * np.asarray(U), scale * w * np.asarray(V))


def dependence_window(seed: CauchyField, t: float, taper: float = TAPER_FRACTION) -> tuple[float, float]:
    """x-interval whose solution at time ``t`` depends only on untapered seed data."""
    x = seed.x
    m = int(round(taper * (len(x) - 1)))
    lo = x[m] + (t - seed.t)
    hi = x[len(x) - 1 - m] - (t - seed.t)
    return float(lo), float(hi)


def compare_with_ansatz(
    field: CauchyField,
    params: ModelParams,
    profile,
    window: tuple[float, float] | None = None,
    fraction: float = COMPARE_FRACTION,
) -> float:
    """Sup-norm gap between ``field`` and the lifted profile on the central part of ``window``.

    ``window`` defaults to the whole grid; for evolved data pass the
    domain-of-dependence window of the untapered seed.
    """
    if not field.t < 1.0:
        raise DomainError("comparison needs t < 1")
    x = field.x
    lo, hi = (float(x[0]), float(x[-1])) if window is None else window
    if not hi > lo:
        raise DomainError("empty comparison window")
    mid, half = 0.5 * (lo + hi), 0.5 * fraction * (hi - lo)
    mask = (x >= mid - half) & (x <= mid + half)
    if not np.any(mask):
        raise DomainError("comparison window contains no grid nodes")
    f = profile_function(params, profile)
    y = x[mask] / (1.0 - field.t)
    U, V = f(y)
    scale = (1.0 - field.t) ** (-params.sigma_float)
    gap = max(
        float(np.max(np.abs(field.u1[mask] - scale * np.asarray(U)))),
        float(np.max(np.abs(field.u2[mask] - scale * np.asarray(V)))),
    )
    return gap


def with_data(field: CauchyField, u1, u2) -> CauchyField:
    return replace(field, u1=u1, u2=u2)
