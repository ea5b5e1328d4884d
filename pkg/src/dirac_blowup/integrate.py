"""Adaptive Dormand-Prince 5(4) integration with blowup detection.

The stepping loop is a single function that runs compiled under numba when the
right-hand side is itself a numba kernel, and interpreted otherwise.  The
independent variable is carried as an unevaluated sum ``hi + lo`` so that
trajectories can approach a finite escape point closer than one ulp of ``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from numba import njit, types
from numba.core.registry import CPUDispatcher
from scipy.optimize import brentq

from .kernels import KernelType

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_BLOWUP_NORM = 1e8
# h_min is measured relative to the span; the compensated independent
# variable resolves far below one ulp, so the floor sits well under 1e-14.
DEFAULT_H_MIN_REL = 1e-30
DEFAULT_MAX_STEPS = 2_000_000

STATUS_ENDPOINT = 0
STATUS_BLOWUP = 1
STATUS_STEPFAIL = 2
STATUS_DEGENERATE = 3
STATUS_MAXSTEPS = 4


# ---------------------------------------------------------------------------
# termination verdicts


@dataclass(frozen=True)
class ReachedEndpoint:
    y_end: float


@dataclass(frozen=True)
class InteriorBlowup:
    y0: float
    max_norm: float


@dataclass(frozen=True)
class StepFailure:
    y_fail: float
    reason: str


Termination = Union[ReachedEndpoint, InteriorBlowup, StepFailure]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of an ODE together with how the integration ended.

    ``states`` has one row per sample; ``derivs`` holds the vector field at the
    same samples.  ``y_lo`` carries the low-order part of each abscissa (the
    true abscissa is ``y + y_lo``).  ``coords`` names the state layout:
    ``"polar"`` rows are ``(amp_u, amp_v, alpha, beta)``, ``"weighted"`` rows
    are ``(Re u, Im u, Re v, Im v)``, ``"cartesian"`` rows are
    ``(Re U, Im U, Re V, Im V)``.
    """

    y: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    termination: Termination
    direction: int
    params: object = None
    coords: str = "generic"
    y_lo: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.y_lo is None:
            object.__setattr__(self, "y_lo", np.zeros_like(self.y))
        for arr in (self.y, self.states, self.derivs, self.y_lo):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.y)

    @property
    def samples(self):
        return list(zip(self.y.tolist(), self.states))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def norms(self, dims: int | None = None) -> np.ndarray:
        block = self.states if dims is None else self.states[:, :dims]
        return np.sqrt(np.sum(block * block, axis=1))

    def ordered(self) -> "Trajectory":
        """Return the trajectory with samples in increasing ``y``."""
        if self.direction > 0 or len(self) < 2:
            return self
        return Trajectory(
            self.y[::-1].copy(),
            self.states[::-1].copy(),
            self.derivs[::-1].copy(),
            self.termination,
            self.direction,
            self.params,
            self.coords,
            self.y_lo[::-1].copy(),
        )

    def interpolate(self, y: float | np.ndarray) -> np.ndarray:
        """Cubic Hermite interpolation of the state using stored derivatives."""
        traj = self.ordered()
        ys = traj.y
        yq = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(yq < ys[0]) or np.any(yq > ys[-1]):
            raise ValueError(f"interpolation point outside [{ys[0]}, {ys[-1]}]")
        idx = np.clip(np.searchsorted(ys, yq, side="right") - 1, 0, len(ys) - 2)
        h = (ys[idx + 1] - ys[idx])[:, None]
        s = ((yq - ys[idx])[:, None]) / h
        x0, x1 = traj.states[idx], traj.states[idx + 1]
        f0, f1 = traj.derivs[idx], traj.derivs[idx + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1
        return out[0] if np.ndim(y) == 0 else out


# ---------------------------------------------------------------------------
# Dormand-Prince tableau

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _dopri_loop(
    rhs,
    args,
    t_start,
    t_stop,
    x0,
    rtol,
    atol,
    h_min,
    max_step,
    max_steps,
    blowup_norm,
    norm_dims,
    amp_dims,
    amp_floor,
    dense,
):
    n = x0.shape[0]
    direction = 1.0 if t_stop >= t_start else -1.0
    span = abs(t_stop - t_start)

    cap = 256
    ts = np.empty(cap)
    tlo = np.empty(cap)
    xs = np.empty((cap, n))
    fs = np.empty((cap, n))

    x = x0.copy()
    f = rhs(t_start, x, args)
    ts[0] = t_start
    tlo[0] = 0.0
    xs[0] = x
    fs[0] = f
    count = 1

    t_hi = t_start
    t_lo = 0.0

    if span == 0.0:
        return ts[:1], tlo[:1], xs[:1], fs[:1], STATUS_ENDPOINT, 0.0

    # initial step guess
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol[i] + rtol * abs(x[i])
        d0 += (x[i] / sc) ** 2
        d1 += (f[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    x1 = x + direction * h0 * f
    f1 = rhs(t_start + direction * h0, x1, args)
    d2 = 0.0
    for i in range(n):
        sc = atol[i] + rtol * abs(x[i])
        d2 += ((f1[i] - f[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    if not math.isfinite(d2):
        d2 = 1e300
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100.0 * h0, h1, span, max_step)
    # components starting at zero under relative control can make the
    # heuristic collapse; rejections shrink an oversized first step anyway
    h = max(h, min(1e-10 * span, max_step))

    status = STATUS_ENDPOINT
    steps = 0
    while True:
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        rem = (t_stop - t_hi) - t_lo
        last = False
        if h >= abs(rem):
            h = abs(rem)
            last = True
        if h < h_min and not last:
            status = STATUS_STEPFAIL
            break
        steps += 1
        hs = direction * h
        t0 = t_hi
        k1 = f
        k2 = rhs(t0 + (t_lo + _C2 * hs), x + hs * (_A21 * k1), args)
        k3 = rhs(t0 + (t_lo + _C3 * hs), x + hs * (_A31 * k1 + _A32 * k2), args)
        k4 = rhs(t0 + (t_lo + _C4 * hs), x + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3), args)
        k5 = rhs(
            t0 + (t_lo + _C5 * hs),
            x + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4),
            args,
        )
        k6 = rhs(
            t0 + (t_lo + hs),
            x + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5),
            args,
        )
        xn = x + hs * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        if last:
            t_next = t_stop
        else:
            t_next = t0 + (t_lo + hs)
        k7 = rhs(t_next, xn, args)

        err = 0.0
        lin = 0.0
        finite = True
        for i in range(n):
            e = hs * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            if not (math.isfinite(xn[i]) and math.isfinite(k7[i]) and math.isfinite(e)):
                finite = False
                break
            sc = atol[i] + rtol * max(abs(x[i]), abs(xn[i]))
            r = abs(e) / sc
            if r > err:
                err = r
            if dense:
                r = h * abs(k7[i] - k1[i]) / (80.0 * sc)
                if r > lin:
                    lin = r
        if not finite:
            h *= 0.25
            continue

        if err > 1.0 or lin > 1.0:
            fac = 0.9 * err ** (-0.2) if err > 1.0 else 1.0
            if lin > 1.0:
                fac = min(fac, 0.9 / math.sqrt(lin))
            h *= max(0.2, fac)
            continue

        # accept
        if last:
            t_hi = t_stop
            t_lo = 0.0
        else:
            s = t_hi + hs
            bp = s - t_hi
            e2 = (t_hi - (s - bp)) + (hs - bp)
            lo = t_lo + e2
            t_hi = s + lo
            t_lo = lo - (t_hi - s)
        x = xn
        f = k7
        if count == cap:
            cap *= 2
            ts2 = np.empty(cap)
            tlo2 = np.empty(cap)
            xs2 = np.empty((cap, n))
            fs2 = np.empty((cap, n))
            ts2[:count] = ts[:count]
            tlo2[:count] = tlo[:count]
            xs2[:count] = xs[:count]
            fs2[:count] = fs[:count]
            ts, tlo, xs, fs = ts2, tlo2, xs2, fs2
        ts[count] = t_hi
        tlo[count] = t_lo
        xs[count] = x
        fs[count] = f
        count += 1

        if last:
            status = STATUS_ENDPOINT
            break
        nrm = 0.0
        for i in range(norm_dims):
            nrm += x[i] * x[i]
        if math.sqrt(nrm) >= blowup_norm:
            status = STATUS_BLOWUP
            break
        degenerate = False
        for i in range(amp_dims):
            if abs(x[i]) < amp_floor:
                degenerate = True
        if degenerate:
            status = STATUS_DEGENERATE
            break

        fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** (-0.2))
        if dense and lin > 0.0:
            fac = min(fac, 0.9 / math.sqrt(lin))
        h = min(h * max(0.2, fac), max_step)

    return ts[:count], tlo[:count], xs[:count], fs[:count], status, h


_f8 = types.float64
_LOOP_SIGNATURE = types.Tuple(
    (_f8[:], _f8[:], _f8[:, :], _f8[:, :], types.int64, _f8)
)(
    KernelType, _f8[:], _f8, _f8, _f8[:], _f8, _f8[:], _f8, _f8,
    types.int64, _f8, types.int64, types.int64, _f8, types.boolean,
)
_dopri_compiled = njit(_LOOP_SIGNATURE, cache=True, error_model="numpy")(_dopri_loop)


def is_compiled(rhs) -> bool:
    return isinstance(rhs, CPUDispatcher)


def run_core(
    rhs,
    x0,
    t_start,
    t_stop,
    args=None,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    h_min=None,
    max_step=np.inf,
    max_steps=DEFAULT_MAX_STEPS,
    blowup_norm=DEFAULT_BLOWUP_NORM,
    norm_dims=None,
    amp_dims=0,
    amp_floor=0.0,
    dense=True,
):
    """Low-level entry point; returns the raw arrays and a status code."""
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    n = x0.shape[0]
    atol_arr = np.broadcast_to(np.asarray(atol, dtype=np.float64), (n,)).copy()
    if args is None:
        args = np.zeros(1)
    if h_min is None:
        h_min = DEFAULT_H_MIN_REL * abs(t_stop - t_start)
    if norm_dims is None:
        norm_dims = n
    if is_compiled(rhs):
        loop = _dopri_compiled
    else:
        # the interpreted loop rejects non-finite trial stages like the compiled one
        def loop(*a):
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                return _dopri_loop(*a)
    return loop(
        rhs,
        args,
        float(t_start),
        float(t_stop),
        x0,
        float(rtol),
        atol_arr,
        float(h_min),
        float(max_step),
        int(max_steps),
        float(blowup_norm),
        int(norm_dims),
        int(amp_dims),
        float(amp_floor),
        bool(dense),
    )


def termination_from_status(status, ys, ylo, norms, y_stop, last_h) -> Termination:
    if status == STATUS_ENDPOINT:
        return ReachedEndpoint(float(ys[-1]))
    if status == STATUS_BLOWUP:
        y0 = extrapolate_escape(ys, ylo, norms)
        return InteriorBlowup(y0, float(norms[-1]))
    if status == STATUS_MAXSTEPS:
        return StepFailure(float(ys[-1]), "maximum number of steps exceeded")
    if status == STATUS_DEGENERATE:
        return StepFailure(float(ys[-1]), "polar representation degenerate")
    return StepFailure(float(ys[-1]), f"step size {last_h:.3e} below minimum")


def integrate_adaptive(
    rhs: Callable,
    state0: Sequence[float],
    span: tuple[float, float],
    tol: tuple[float, object] = (DEFAULT_RTOL, DEFAULT_ATOL),
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
    *,
    args=None,
    h_min: float | None = None,
    max_step: float = np.inf,
    max_steps: int = DEFAULT_MAX_STEPS,
    dense: bool = True,
    norm_dims: int | None = None,
    params=None,
    coords: str = "generic",
) -> Trajectory:
    """Integrate ``x' = rhs(y, x)`` over ``span`` and classify the outcome.

    ``rhs`` is either a numba kernel with signature ``(y, x, args)`` or any
    Python callable ``(y, x)``.  With ``dense`` on, steps are additionally
    limited so that linear interpolation between consecutive samples stays
    within ten times the local tolerance.  Step failures are recorded in the
    returned trajectory, never raised.
    """
    rel, abs_ = tol
    if rel <= 0 or np.any(np.asarray(abs_) <= 0):
        raise ValueError("tolerances must be positive")
    y_start, y_stop = float(span[0]), float(span[1])
    if is_compiled(rhs):
        kernel = rhs
    else:
        user = rhs

        def kernel(t, x, _args):
            return np.asarray(user(t, x), dtype=np.float64)

    ys, ylo, xs, fs, status, last_h = run_core(
        kernel,
        state0,
        y_start,
        y_stop,
        args=args,
        rtol=rel,
        atol=abs_,
        h_min=h_min,
        max_step=max_step,
        max_steps=max_steps,
        blowup_norm=blowup_norm,
        norm_dims=norm_dims,
        dense=dense,
    )
    nd = xs.shape[1] if norm_dims is None else norm_dims
    norms = np.sqrt(np.sum(xs[:, :nd] ** 2, axis=1))
    term = termination_from_status(status, ys, ylo, norms, y_stop, last_h)
    return Trajectory(
        ys.copy(),
        xs.copy(),
        fs.copy(),
        term,
        1 if y_stop >= y_start else -1,
        params,
        coords,
        ylo.copy(),
    )


# ---------------------------------------------------------------------------
# extrapolation helpers


def richardson_limit(f1: float, f2: float, f3: float) -> float:
    """Limit of a sequence sampled at offsets 4h, 2h, h with unknown rate.

    Uses the Aitken delta-squared form of Richardson extrapolation; falls back
    to the last value when the differences do not contract.
    """
    d1 = f2 - f1
    d2 = f3 - f2
    denom = d2 - d1
    if d1 == 0.0 or denom == 0.0 or abs(d2) >= abs(d1) or d1 * d2 < 0:
        return float(f3)
    return float(f3 - d2 * d2 / denom)


def _tail_triple(norms: np.ndarray, ratio: float = 4.0):
    i3 = len(norms) - 1
    i2 = i3
    while i2 > 0 and norms[i2] > norms[i3] / ratio:
        i2 -= 1
    i1 = i2
    while i1 > 0 and norms[i1] > norms[i2] / ratio:
        i1 -= 1
    if not (i1 < i2 < i3):
        return None
    return i1, i2, i3


def extrapolate_escape(ys, ylo, norms) -> float:
    """Estimate where the sampled norm diverges.

    Fits ``norm = A |y0 - y|^(-gamma)`` through three tail samples whose norms
    grow geometrically and solves for ``y0``.  Distances are formed from the
    compensated abscissae so that samples closer than one ulp still separate.
    """
    ys = np.asarray(ys, dtype=float)
    ylo = np.zeros_like(ys) if ylo is None else np.asarray(ylo, dtype=float)
    norms = np.asarray(norms, dtype=float)
    last = float(ys[-1])
    if len(ys) < 3 or not np.all(np.isfinite(norms)) or norms[-1] <= 0:
        return last
    triple = _tail_triple(norms)
    if triple is None:
        return last
    i1, i2, i3 = triple
    direction = 1.0 if ys[-1] >= ys[0] else -1.0
    D1 = abs((ys[i3] - ys[i1]) + (ylo[i3] - ylo[i1]))
    D2 = abs((ys[i3] - ys[i2]) + (ylo[i3] - ylo[i2]))
    if not (D1 > D2 > 0):
        return last
    l1, l2, l3 = np.log(norms[i1]), np.log(norms[i2]), np.log(norms[i3])
    if not (l1 < l2 < l3):
        return last

    def mismatch(s):
        g12 = (l2 - l1) / (math.log(D1 + s) - math.log(D2 + s))
        g23 = (l3 - l2) / (math.log(D2 + s) - math.log(s))
        return g12 - g23

    lo = D2 * 1e-12
    hi = D2
    try:
        while mismatch(hi) > 0 and hi < 1e6 * D1:
            hi *= 4.0
        if mismatch(lo) * mismatch(hi) > 0:
            return last
        s = brentq(mismatch, lo, hi, xtol=1e-16 * D2, rtol=1e-12)
    except (ValueError, ZeroDivisionError, OverflowError):
        return last
    return float((ys[i3] + ylo[i3]) + direction * s)
