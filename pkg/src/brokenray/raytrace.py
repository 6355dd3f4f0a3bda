"""Geometric-acoustics ray integration.

The ray state is (x, y, z, phi, theta): position, zenith angle against +z and
azimuth against +x. Marching uses classical RK4 with step-doubling control:
a full step is compared against two half steps ending at the same time, the
step is halved until all five components agree within tolerance, and the
two-half-step result is kept. The step resets to h_init after every accepted
step.

A batched engine marches many rays in lockstep (each with its own accepted
step sizes); the scalar operations below are thin views of the same code with
a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PolarSingularity, StepUnderflow
from .geometry import Domain, SpeedField, as_point

__all__ = [
    "RayState",
    "StepControl",
    "RayPath",
    "ray_derivatives",
    "rk4_step",
    "adaptive_step",
    "trace_ray",
    "verify_time_consistency",
    "march_batch",
    "BatchMarch",
]

# minimum |sin(phi)| before Eq. for d(theta)/dt is rejected as singular
PHI_MIN = 1e-6
_SIN_FLOOR = np.sin(PHI_MIN)
# relative slack when deciding the budget has been reached
_BUDGET_RTOL = 1e-12

# terminal status codes for a marched ray
RUNNING = 0
BUDGET = 1
EXITED = 2
SINGULAR = 3
MAXSTEPS = 4

_STATUS_NAMES = {BUDGET: "budget", EXITED: "exited", SINGULAR: "singular", MAXSTEPS: "maxsteps"}


@dataclass(frozen=True)
class RayState:
    """One point on a ray: position, launch-frame angles, elapsed time."""

    p: np.ndarray
    phi: float
    theta: float
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", as_point(self.p))
        if not (np.isfinite(self.phi) and np.isfinite(self.theta) and np.isfinite(self.t)):
            raise ValueError("ray state has non-finite components")
        if self.t < 0.0:
            raise ValueError(f"elapsed time must be >= 0, got {self.t}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p[0], self.p[1], self.p[2], self.phi, self.theta])

    @staticmethod
    def from_array(a, t: float) -> "RayState":
        return RayState(p=np.array(a[:3]), phi=float(a[3]), theta=float(a[4]), t=float(t))

    def reversed(self) -> "RayState":
        """Same point with the direction flipped (phi -> pi-phi, theta -> theta+pi)."""
        return RayState(p=self.p.copy(), phi=np.pi - self.phi, theta=self.theta + np.pi, t=0.0)


@dataclass(frozen=True)
class StepControl:
    """Step-doubling tolerances and limits for the adaptive march."""

    h_init: float = 5e-3
    h_min: float = 1e-7
    eps_x: float = 1e-6
    eps_y: float = 1e-6
    eps_z: float = 1e-6
    eps_phi: float = 1e-6
    eps_theta: float = 1e-6

    def __post_init__(self):
        if not (0.0 < self.h_min < self.h_init):
            raise ValueError(f"need 0 < h_min < h_init, got {self.h_min}, {self.h_init}")
        for name in ("eps_x", "eps_y", "eps_z", "eps_phi", "eps_theta"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def tolerances(self) -> np.ndarray:
        return np.array([self.eps_x, self.eps_y, self.eps_z, self.eps_phi, self.eps_theta])

    def scaled(self, factor: float) -> "StepControl":
        """Copy with all five tolerances multiplied by factor."""
        return StepControl(self.h_init, self.h_min, factor * self.eps_x, factor * self.eps_y,
                           factor * self.eps_z, factor * self.eps_phi, factor * self.eps_theta)


def _rhs(states: np.ndarray, fld: SpeedField):
    """Right-hand side of the ray system for a (N,5) batch.

    Returns (derivatives (N,5), singular mask (N,)). Singular rows have the
    d(theta)/dt denominator floored so values stay finite; callers must
    discard those rays.
    """
    c = fld.speed(states[:, :3])
    g = fld.gradient(states[:, :3])
    phi = states[:, 3]
    theta = states[:, 4]
    sp = np.sin(phi)
    cp = np.cos(phi)
    st = np.sin(theta)
    ct = np.cos(theta)
    bad = np.abs(sp) < _SIN_FLOOR
    sp_safe = np.where(bad, np.where(sp >= 0.0, _SIN_FLOOR, -_SIN_FLOOR), sp)
    out = np.empty_like(states)
    out[:, 0] = c * sp * ct
    out[:, 1] = c * sp * st
    out[:, 2] = c * cp
    out[:, 3] = -cp * (g[:, 0] * ct + g[:, 1] * st) + g[:, 2] * sp
    out[:, 4] = (g[:, 0] * st - g[:, 1] * ct) / sp_safe
    return out, bad


def _rk4(states: np.ndarray, h, fld: SpeedField):
    """Classical 4-stage RK4 update of a (N,5) batch; h is scalar or (N,1)."""
    k1, b1 = _rhs(states, fld)
    k2, b2 = _rhs(states + 0.5 * h * k1, fld)
    k3, b3 = _rhs(states + 0.5 * h * k2, fld)
    k4, b4 = _rhs(states + h * k3, fld)
    nxt = states + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return nxt, b1 | b2 | b3 | b4


def ray_derivatives(s: RayState, fld: SpeedField) -> np.ndarray:
    """Rates of change (dx, dy, dz, dphi, dtheta)/dt at state s."""
    d, bad = _rhs(s.as_array()[None, :], fld)
    if bad[0]:
        raise PolarSingularity(f"|sin(phi)| < sin({PHI_MIN}) at phi={s.phi}")
    return d[0]


def rk4_step(s: RayState, h: float, fld: SpeedField) -> RayState:
    """Single classical RK4 step of size h > 0."""
    if not h > 0.0:
        raise ValueError(f"step must be positive, got {h}")
    nxt, bad = _rk4(s.as_array()[None, :], h, fld)
    if bad[0]:
        raise PolarSingularity(f"polar singularity inside step from phi={s.phi}")
    return RayState.from_array(nxt[0], s.t + h)


def adaptive_step(s: RayState, ctl: StepControl, fld: SpeedField):
    """Largest h = h_init/2^k passing the step-doubling test.

    Returns (next state = the two-half-step result, h used). Raises
    StepUnderflow once halving would push h below ctl.h_min.
    """
    return _adaptive_from(s, ctl.h_init, ctl, fld)


def _adaptive_from(s: RayState, h_start: float, ctl: StepControl, fld: SpeedField):
    tol = ctl.tolerances()
    state = s.as_array()[None, :]
    h = float(h_start)
    while True:
        full, bf = _rk4(state, h, fld)
        mid, b1 = _rk4(state, 0.5 * h, fld)
        half, b2 = _rk4(mid, 0.5 * h, fld)
        if bf[0] or b1[0] or b2[0]:
            raise PolarSingularity(f"polar singularity inside step at t={s.t}")
        if np.all(np.abs(full[0] - half[0]) <= tol):
            return RayState.from_array(half[0], s.t + h), h
        h *= 0.5
        if h < ctl.h_min:
            raise StepUnderflow(f"step fell below h_min={ctl.h_min} at t={s.t}")


@dataclass
class RayPath:
    """Time-ordered states along one traced ray.

    states[i] is (x, y, z, phi, theta) at times[i]; steps[i] is the accepted
    step from state i to i+1. status is "budget" (travel-time budget reached),
    "exited" (left the domain), "singular" or "maxsteps".
    """

    states: np.ndarray
    times: np.ndarray
    steps: np.ndarray
    status: str = "budget"

    def __len__(self):
        return len(self.times)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    def state(self, i: int) -> RayState:
        return RayState.from_array(self.states[i], self.times[i])

    def end(self) -> RayState:
        return self.state(len(self.times) - 1)


class BatchMarch:
    """Result of marching a batch of rays in lockstep.

    Snapshot k holds the state of every ray after its k-th accepted step;
    mask[k, j] says whether ray j advanced that far. Snapshot 0 is the launch
    state of every ray.
    """

    def __init__(self, snap_states, snap_times, snap_mask, h_used, status):
        self.snap_states = snap_states  # (K, N, 5)
        self.snap_times = snap_times    # (K, N)
        self.snap_mask = snap_mask      # (K, N) bool
        self.h_used = h_used            # (K-1, N), 0 where a ray did not step
        self.status = status            # (N,) int codes

    @property
    def n_rays(self) -> int:
        return self.snap_states.shape[1]

    def ray_path(self, j: int) -> RayPath:
        keep = self.snap_mask[:, j]
        return RayPath(
            states=self.snap_states[keep, j, :].copy(),
            times=self.snap_times[keep, j].copy(),
            steps=self.h_used[keep[1:], j].copy(),
            status=_STATUS_NAMES.get(int(self.status[j]), "budget"),
        )

    def flatten(self, include_launch: bool = False):
        """All recorded states pooled: (times (M,), states (M,5), ray (M,)).

        Rows are sorted by time (stable), which downstream time-window
        queries rely on.
        """
        mask = self.snap_mask.copy()
        if not include_launch:
            mask[0, :] = False
        snap_idx, ray_idx = np.nonzero(mask)
        times = self.snap_times[snap_idx, ray_idx]
        states = self.snap_states[snap_idx, ray_idx, :]
        order = np.argsort(times, kind="stable")
        return times[order], states[order], ray_idx[order]


def march_batch(
    start_states: np.ndarray,
    budgets,
    ctl: StepControl,
    dom: Domain,
    fld: SpeedField,
    fixed_h: float | None = None,
    max_steps: int = 2_000_000,
) -> BatchMarch:
    """March a batch of rays until budget, domain exit or singularity.

    start_states is (N,5). budgets is a scalar or (N,) per-ray travel-time
    budget; the final step of each ray is clamped so it lands exactly on its
    budget. With fixed_h set, plain RK4 steps of that size are taken with no
    error control (used for cache building).

    Raises StepUnderflow if any ray's adaptive step falls below ctl.h_min;
    per the marching contract the whole batch (one data point) is abandoned.
    """
    states = np.array(start_states, dtype=float)
    if states.ndim != 2 or states.shape[1] != 5:
        raise ValueError(f"start_states must be (N,5), got {states.shape}")
    n = len(states)
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (n,)).copy()
    t = np.zeros(n)
    status = np.full(n, RUNNING, dtype=int)
    status[~dom.contains(states[:, :3])] = EXITED
    tol = ctl.tolerances()

    snap_states = [states.copy()]
    snap_times = [t.copy()]
    snap_mask = [status == RUNNING]
    h_used_hist = []
    # rays that start outside still get their launch snapshot
    snap_mask[0] = np.ones(n, dtype=bool)

    done_eps = _BUDGET_RTOL * np.maximum(1.0, budgets)
    status[(status == RUNNING) & (budgets - t <= done_eps)] = BUDGET

    steps_taken = 0
    while True:
        running = status == RUNNING
        if not running.any():
            break
        if steps_taken >= max_steps:
            status[running] = MAXSTEPS
            break
        steps_taken += 1

        h_try = np.zeros(n)
        base = fixed_h if fixed_h is not None else ctl.h_init
        h_try[running] = np.minimum(base, budgets[running] - t[running])

        new_states = states.copy()
        h_acc = np.zeros(n)
        pending = running.copy()
        while pending.any():
            idx = np.nonzero(pending)[0]
            seg = states[idx]
            hp = h_try[idx][:, None]
            if fixed_h is not None:
                nxt, bad = _rk4(seg, hp, fld)
                ok = ~bad
            else:
                full, bf = _rk4(seg, hp, fld)
                mid, b1 = _rk4(seg, 0.5 * hp, fld)
                nxt, b2 = _rk4(mid, 0.5 * hp, fld)
                bad = bf | b1 | b2
                ok = np.all(np.abs(full - nxt) <= tol, axis=1) & ~bad
            acc = idx[ok]
            new_states[acc] = nxt[ok]
            h_acc[acc] = h_try[acc]
            status[idx[bad]] = SINGULAR
            pending[idx[ok]] = False
            pending[idx[bad]] = False
            if fixed_h is not None:
                break
            rem = idx[~ok & ~bad]
            if len(rem):
                h_try[rem] *= 0.5
                if np.any(h_try[rem] < ctl.h_min):
                    raise StepUnderflow(
                        f"step fell below h_min={ctl.h_min} for {int(np.sum(h_try[rem] < ctl.h_min))} ray(s)"
                    )

        advanced = (status == RUNNING) & (h_acc > 0.0)
        if not advanced.any():
            continue
        inside = np.zeros(n, dtype=bool)
        inside[advanced] = dom.contains(new_states[advanced, :3])
        exited = advanced & ~inside
        status[exited] = EXITED
        moved = advanced & inside
        states[moved] = new_states[moved]
        t[moved] += h_acc[moved]

        rec = np.zeros(n, dtype=bool)
        rec[moved] = True
        snap_states.append(states.copy())
        snap_times.append(t.copy())
        snap_mask.append(rec)
        h_rec = np.where(rec, h_acc, 0.0)
        h_used_hist.append(h_rec)

        hit_budget = moved & (budgets - t <= done_eps)
        status[hit_budget] = BUDGET

    return BatchMarch(
        snap_states=np.stack(snap_states),
        snap_times=np.stack(snap_times),
        snap_mask=np.stack(snap_mask),
        h_used=np.stack(h_used_hist) if h_used_hist else np.zeros((0, n)),
        status=status,
    )


def trace_ray(start: RayState, budget: float, ctl: StepControl,
              dom: Domain, fld: SpeedField, max_steps: int = 2_000_000) -> RayPath:
    """March one ray from start until the budget is spent or the domain is left.

    The returned path contains every accepted in-domain state; the final
    state's time never exceeds the budget (the last step is clamped onto it).
    A domain exit is reported through path.status, not an exception.
    """
    if not budget > 0.0:
        raise ValueError(f"budget must be positive, got {budget}")
    if not dom.contains(start.p):
        raise ValueError("trace_ray start point lies outside the domain")
    batch = march_batch(start.as_array()[None, :], budget, ctl, dom, fld, max_steps=max_steps)
    path = batch.ray_path(0)
    path.times += start.t
    return path


def verify_time_consistency(path: RayPath, fld: SpeedField) -> float:
    """Relative mismatch between the path's clock and the travel-time integral.

    Accumulates the trapezoid rule for integral ds / c(s) over the polyline of
    path positions and compares with t_end - t_start.
    """
    if len(path) < 2:
        raise ValueError("path needs at least 2 states")
    pos = path.positions
    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    slowness = 1.0 / np.asarray(fld.speed(pos))
    integral = float(np.sum(seg * 0.5 * (slowness[:-1] + slowness[1:])))
    elapsed = float(path.times[-1] - path.times[0])
    return abs(integral - elapsed) / elapsed
