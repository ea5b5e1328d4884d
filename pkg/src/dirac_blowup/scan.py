"""Numerical evidence that no nonzero self-similar profile is bounded.

Each initial condition is posed at y = 0 and integrated toward both endpoints.
A bounded profile needs ``u(-1) = 0`` and ``v(1) = 0``; the scan extrapolates
both boundary values and records which way each trajectory fails.  The
monotonicity checks verify the sign structure behind the nonexistence
argument along the same trajectories.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .integrate import (
    DEFAULT_ATOL,
    DEFAULT_BLOWUP_NORM,
    DEFAULT_RTOL,
    InteriorBlowup,
    ReachedEndpoint,
    Trajectory,
    richardson_limit,
)
from .model import ModelParams
from .profile import (
    ENDPOINT_OFFSET,
    POLAR_EPS,
    InsufficientSamples,
    PolarState,
    derivative_5pt,
    integrate_profile,
)

TOL_MONO = 1e-6
TOL_CROSS = 1e-8
ELL_ZERO_TOL = 1e-12

DEFAULT_AMPLITUDES = (0.25, 0.5, 1.0, 2.0)
DEFAULT_N_DELTA = 8
DEFAULT_MODELS = ((1, 1), (2, 1), (1, 2), (0, 2), (2, 0))


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class BoundedCandidate:
    left_deficit: float
    right_deficit: float
    label = "BoundedCandidate"


@dataclass(frozen=True)
class BoundaryDeficit:
    left_deficit: float
    right_deficit: float
    label = "BoundaryDeficit"

    def __post_init__(self):
        if not (self.left_deficit >= 0 and self.right_deficit >= 0):
            raise ValueError("deficits must be nonnegative")


@dataclass(frozen=True)
class BlowupVerdict:
    direction: int
    y0: float
    label = "InteriorBlowup"


@dataclass(frozen=True)
class Trivial:
    label = "Trivial"


ScanVerdict = Union[BoundedCandidate, BoundaryDeficit, BlowupVerdict, Trivial]


@dataclass(frozen=True)
class MonotoneReport:
    min_derivative: float
    passed: bool


@dataclass(frozen=True)
class DriftReport:
    max_amp_drift: float
    passed: bool


# ---------------------------------------------------------------------------
# property checks on single trajectories


def _require_polar(traj: Trajectory, n_min: int = 2):
    if traj.coords != "polar":
        raise ValueError(f"expected a polar trajectory, got {traj.coords!r}")
    if len(traj) < n_min:
        raise InsufficientSamples(f"need at least {n_min} samples, got {len(traj)}")


def _delta_and_rate(traj: Trajectory, method: str):
    traj = traj.ordered()
    a, b, alpha, beta = traj.states.T
    delta = beta - alpha
    if method == "stored":
        rate = traj.derivs[:, 3] - traj.derivs[:, 2]
    elif method == "samples":
        if len(traj) < 5:
            raise InsufficientSamples("finite differences need at least 5 samples")
        rate = derivative_5pt(traj.y, delta)
    else:
        raise ValueError(f"unknown method {method!r}")
    valid = (a > POLAR_EPS) & (b > POLAR_EPS)
    return delta, rate, valid


def verify_monotone_sin_delta(
    traj: Trajectory, params: ModelParams, tol: float = TOL_MONO, method: str = "stored"
) -> MonotoneReport:
    """Check that sin(beta - alpha) is nondecreasing in y (odd ell).

    ``method="stored"`` differentiates with the vector field values kept at
    each sample; ``"samples"`` uses finite differences on the sample grid.
    """
    if params.ell % 2 != 1:
        raise ValueError("sin(delta) monotonicity applies to odd ell")
    _require_polar(traj)
    delta, rate, valid = _delta_and_rate(traj, method)
    d_sin = np.cos(delta) * rate
    m = float(np.min(d_sin[valid])) if np.any(valid) else 0.0
    return MonotoneReport(m, m >= -tol)


def verify_monotone_delta(
    traj: Trajectory, params: ModelParams, tol: float = TOL_MONO, method: str = "stored"
) -> MonotoneReport:
    """Check that beta - alpha is nondecreasing in y (even ell >= 2)."""
    if params.ell < 2 or params.ell % 2:
        raise ValueError("delta monotonicity applies to even ell >= 2")
    _require_polar(traj)
    _, rate, valid = _delta_and_rate(traj, method)
    m = float(np.min(rate[valid])) if np.any(valid) else 0.0
    return MonotoneReport(m, m >= -tol)


def check_invariant_lines(traj: Trajectory, params: ModelParams, tol: float = TOL_CROSS) -> bool:
    """True iff delta stays in the closed sector between consecutive lines pi/2 + n pi."""
    if params.ell < 2 or params.ell % 2:
        raise ValueError("invariant lines exist for even ell >= 2")
    _require_polar(traj, 1)
    delta = traj.states[:, 3] - traj.states[:, 2]
    d0 = float(delta[0])
    shifted = (d0 - math.pi / 2) / math.pi
    n0 = round(shifted)
    if abs(d0 - (math.pi / 2 + n0 * math.pi)) <= tol:
        return bool(np.all(np.abs(delta - d0) <= tol))
    n0 = math.floor(shifted)
    lo = math.pi / 2 + n0 * math.pi
    return bool(np.all((delta >= lo - tol) & (delta <= lo + math.pi + tol)))


def ell_zero_check(traj: Trajectory, params: ModelParams, tol: float = ELL_ZERO_TOL) -> DriftReport:
    if params.ell != 0:
        raise ValueError("amplitude conservation applies to ell = 0")
    _require_polar(traj, 1)
    drift = np.abs(traj.states[:, :2] - traj.states[0, :2])
    m = float(np.max(drift))
    return DriftReport(m, m <= tol)


# ---------------------------------------------------------------------------
# scan


@dataclass(frozen=True)
class ScanConfig:
    params: ModelParams
    ic_grid: tuple
    endpoint_offset: float = ENDPOINT_OFFSET
    bc_tolerance: float = 1e-6
    blowup_norm: float = DEFAULT_BLOWUP_NORM
    tol: tuple = (DEFAULT_RTOL, DEFAULT_ATOL)

    def __post_init__(self):
        object.__setattr__(self, "ic_grid", tuple(self.ic_grid))
        if not self.ic_grid:
            raise ValueError("ic_grid must be nonempty")
        if not 0.0 < self.endpoint_offset < 1.0:
            raise ValueError("endpoint_offset must lie in (0, 1)")
        if self.endpoint_offset * 4.0 >= 1.0:
            raise ValueError("endpoint_offset too large for the 4h extrapolation stencil")
        if not self.bc_tolerance > 0:
            raise ValueError("bc_tolerance must be positive")
        if not self.blowup_norm > 0:
            raise ValueError("blowup_norm must be positive")


def default_ic_grid(
    amplitudes=DEFAULT_AMPLITUDES, n_delta: int = DEFAULT_N_DELTA
) -> tuple[PolarState, ...]:
    """Amplitude pairs times ``n_delta`` uniform phase differences in (-pi, pi]."""
    deltas = [-math.pi + 2.0 * math.pi * (j + 1) / n_delta for j in range(n_delta)]
    return tuple(
        PolarState(0.0, au, av, 0.0, d) for au in amplitudes for av in amplitudes for d in deltas
    )


@dataclass(frozen=True)
class SideResult:
    """Outcome of integrating from y = 0 toward one endpoint."""

    direction: int
    termination: object
    # boundary values of |u| and |v| extrapolated to the endpoint
    amp_u_end: float = math.nan
    amp_v_end: float = math.nan
    mono_min: float = math.nan
    lines_ok: bool = True
    amp_drift: float = math.nan
    n_samples: int = 0
    # d|u|/dy at the sample closest to the endpoint
    amp_u_slope_end: float = math.nan


@dataclass(frozen=True)
class ScanEntry:
    ic_id: int
    ic: PolarState
    verdict: ScanVerdict
    left: SideResult | None = None
    right: SideResult | None = None

    @property
    def u_rising_at_left(self) -> bool:
        """Whether |u| is nondecreasing at the left end, as u(-1) = 0 requires."""
        return self.left is not None and self.left.amp_u_slope_end >= 0.0

    @property
    def survived(self) -> bool:
        return (
            self.left is not None
            and self.right is not None
            and isinstance(self.left.termination, ReachedEndpoint)
            and isinstance(self.right.termination, ReachedEndpoint)
        )


@dataclass(frozen=True)
class ScanReport:
    params: ModelParams
    entries: tuple
    counts: dict = field(default_factory=dict)

    @property
    def bounded_candidates(self) -> int:
        return self.counts.get("BoundedCandidate", 0)

    def summary_line(self) -> str:
        parts = [f"bounded_candidates={self.bounded_candidates}"]
        parts += [f"{k}={v}" for k, v in sorted(self.counts.items()) if k != "BoundedCandidate"]
        return " ".join(parts)


def _side_checks(params: ModelParams, traj: Trajectory) -> dict:
    out = {}
    if params.ell % 2 == 1:
        out["mono_min"] = verify_monotone_sin_delta(traj, params).min_derivative
    elif params.ell >= 2:
        out["mono_min"] = verify_monotone_delta(traj, params).min_derivative
        out["lines_ok"] = check_invariant_lines(traj, params)
    else:
        out["amp_drift"] = ell_zero_check(traj, params).max_amp_drift
    return out


def _integrate_side(config: ScanConfig, ic: PolarState, direction: int) -> SideResult:
    params = config.params
    h = config.endpoint_offset
    kw = dict(tol=config.tol, blowup_norm=config.blowup_norm, dense=False, endpoint_offset=h)
    traj = integrate_profile(params, ic, direction * (1.0 - 4.0 * h), **kw)
    checks = _side_checks(params, traj)
    n = len(traj)
    if not isinstance(traj.termination, ReachedEndpoint):
        return SideResult(direction, traj.termination, n_samples=n, **checks)
    # continue to the 2h and h offsets for the Richardson stencil
    rows = [traj.final_state]
    state = traj.final_state
    slope = float(traj.derivs[-1, 0])
    y_cur = float(traj.y[-1])
    for m in (2.0, 1.0):
        start = PolarState(y_cur, state[0], state[1], state[2], state[3])
        seg = integrate_profile(params, start, direction * (1.0 - m * h), **kw)
        n += len(seg) - 1
        if not isinstance(seg.termination, ReachedEndpoint):
            return SideResult(direction, seg.termination, n_samples=n, **checks)
        state = seg.final_state
        slope = float(seg.derivs[-1, 0])
        y_cur = float(seg.y[-1])
        rows.append(state)
    a = [r[0] for r in rows]
    b = [r[1] for r in rows]
    return SideResult(
        direction,
        ReachedEndpoint(y_cur),
        amp_u_end=abs(richardson_limit(*a)),
        amp_v_end=abs(richardson_limit(*b)),
        n_samples=n,
        amp_u_slope_end=slope,
        **checks,
    )


def classify(config: ScanConfig, ic_id: int, ic: PolarState) -> ScanEntry:
    """Integrate one initial condition both ways and assign its verdict."""
    if ic.amp_u == 0.0 and ic.amp_v == 0.0:
        return ScanEntry(ic_id, ic, Trivial())
    right = _integrate_side(config, ic, +1)
    left = _integrate_side(config, ic, -1)
    limit = 1.0 - config.endpoint_offset
    for side in (left, right):
        term = side.termination
        if isinstance(term, ReachedEndpoint):
            continue
        y0 = term.y0 if isinstance(term, InteriorBlowup) else term.y_fail
        if abs(y0) < limit:
            return ScanEntry(ic_id, ic, BlowupVerdict(side.direction, float(y0)), left, right)
    # unbounded only at the endpoint itself: the boundary value is infinite
    left_def = left.amp_u_end if isinstance(left.termination, ReachedEndpoint) else math.inf
    right_def = right.amp_v_end if isinstance(right.termination, ReachedEndpoint) else math.inf
    if left_def < config.bc_tolerance and right_def < config.bc_tolerance:
        verdict = BoundedCandidate(left_def, right_def)
    else:
        verdict = BoundaryDeficit(left_def, right_def)
    return ScanEntry(ic_id, ic, verdict, left, right)


def _classify_star(job):
    return classify(*job)


def scan_boundedness(config: ScanConfig, jobs: int = 1) -> ScanReport:
    """Classify every initial condition of the grid.

    With ``jobs > 1`` the initial conditions are distributed over worker
    processes; the report is assembled in grid order either way.
    """
    work = [(config, i, ic) for i, ic in enumerate(config.ic_grid)]
    if jobs is None or jobs <= 1:
        entries = [_classify_star(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
            entries = list(pool.map(_classify_star, work, chunksize=8))
    counts: dict[str, int] = {}
    for e in entries:
        counts[e.verdict.label] = counts.get(e.verdict.label, 0) + 1
    return ScanReport(config.params, tuple(entries), counts)
