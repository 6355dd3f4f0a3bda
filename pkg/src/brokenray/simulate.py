"""Forward simulator: synthetic broken-ray measurements from a known scene.

The obstacle is a sphere whose center is piecewise constant per sampling
period (it does not move while one period's rays are in flight). Reflectance
is Lambertian, so a reflected ray may leave the boundary in any direction; in
particular it may retrace the incident path back to the transmitter.

Each emitted measurement also carries the true reflection point and per-leg
travel times. Reconstruction never reads them; acceptance tests do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .angles import AngleGrid
from .errors import EmptyPeriod, StepUnderflow, UnknownPeriod
from .geometry import Domain, SpeedField, as_point
from .raytrace import RayPath, RayState, StepControl, _rk4, march_batch

__all__ = [
    "SamplingPeriod",
    "Obstacle",
    "TruthMeta",
    "DataPoint",
    "obstacle_signed_distance",
    "first_obstacle_hit",
    "generate_retro_data",
    "generate_bistatic_data",
    "sampling_delta",
]

EPS_HIT = 1e-6  # m; truth data accuracy, well below reconstruction tolerances


@dataclass(frozen=True)
class SamplingPeriod:
    """One interval during which the obstacle is treated as stationary."""

    id: str
    duration: float

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError(f"period duration must be positive, got {self.duration}")


class Obstacle:
    """Reflecting sphere with a per-period center trajectory."""

    def __init__(self, radius: float, centers: dict, lambertian: bool = True):
        if not radius > 0.0:
            raise ValueError(f"obstacle radius must be positive, got {radius}")
        self.radius = float(radius)
        self.centers = {str(k): as_point(v) for k, v in centers.items()}
        self.lambertian = bool(lambertian)

    def center_at(self, period: str) -> np.ndarray:
        try:
            return self.centers[str(period)]
        except KeyError:
            raise UnknownPeriod(f"no obstacle position for period {period!r}") from None

    def signed_distance(self, p, period: str):
        """Negative inside, zero on the boundary, positive outside."""
        c = self.center_at(period)
        a = np.asarray(p, dtype=float)
        if a.ndim == 1:
            return float(np.linalg.norm(a - c) - self.radius)
        return np.linalg.norm(a - c, axis=1) - self.radius

    def periods(self):
        return sorted(self.centers)


def obstacle_signed_distance(ob: Obstacle, p, period: str):
    return ob.signed_distance(p, period)


@dataclass(frozen=True)
class TruthMeta:
    """Ground truth attached to a simulated measurement."""

    point: np.ndarray
    t1: float
    t2: float


@dataclass(frozen=True)
class DataPoint:
    """One broken-ray measurement.

    transmitter/receiver are endpoint positions, (phi, theta) the launch
    angles at the transmitter, t the total travel time, xi the signal
    frequency (carried opaquely), period the sampling-period id.
    """

    transmitter: np.ndarray
    receiver: np.ndarray
    phi: float
    theta: float
    t: float
    xi: float = 1.0
    period: str = "p0"
    truth: Optional[TruthMeta] = None

    def __post_init__(self):
        object.__setattr__(self, "transmitter", as_point(self.transmitter))
        object.__setattr__(self, "receiver", as_point(self.receiver))
        if not self.t > 0.0:
            raise ValueError(f"travel time must be positive, got {self.t}")

    def launch_state(self) -> RayState:
        return RayState(p=self.transmitter.copy(), phi=self.phi, theta=self.theta, t=0.0)

    def is_retro(self) -> bool:
        return bool(np.all(self.transmitter == self.receiver))


def _bisect_hit(state_arr, h: float, ob: Obstacle, period: str, fld: SpeedField,
                eps_hit: float):
    """Refine a boundary crossing inside one accepted step.

    state_arr is the (5,) state at the step start (signed distance > 0 there,
    <= 0 at the step end). Sub-steps are re-integrated from the start state.
    Returns (hit position (3,), dt into the step).
    """
    lo, hi = 0.0, h
    c_here = float(fld.speed(state_arr[:3]))
    pos_hi = None
    while (hi - lo) * c_here > eps_hit:
        mid = 0.5 * (lo + hi)
        probe, _ = _rk4(state_arr[None, :], mid, fld)
        if ob.signed_distance(probe[0, :3], period) > 0.0:
            lo = mid
        else:
            hi = mid
            pos_hi = probe[0, :3]
    if pos_hi is None:
        probe, _ = _rk4(state_arr[None, :], hi, fld)
        pos_hi = probe[0, :3]
    return pos_hi, hi


def first_obstacle_hit(path: RayPath, ob: Obstacle, period: str, fld: SpeedField,
                       eps_hit: float = EPS_HIT):
    """First boundary crossing along a traced ray, or None.

    Scans the recorded states for the first sign change of the signed
    distance and refines it by bisection to within eps_hit.
    """
    sd = ob.signed_distance(path.positions, period)
    if sd[0] <= 0.0:
        return path.positions[0].copy(), float(path.times[0])
    below = np.nonzero(sd <= 0.0)[0]
    if len(below) == 0:
        return None
    i = int(below[0])
    pos, dt = _bisect_hit(path.states[i - 1], float(path.steps[i - 1]), ob, period, fld, eps_hit)
    return pos, float(path.times[i - 1] + dt)


def generate_retro_data(
    transmitters,
    angle_grid,
    ob: Obstacle,
    fld: SpeedField,
    period: str,
    ctl: StepControl,
    dom: Domain,
    budget: float,
    xi: float = 1.0,
    eps_hit: float = EPS_HIT,
) -> list:
    """Monostatic measurements: the echo returns along the incident path.

    For every (transmitter, launch angle) whose ray reaches the obstacle
    within the one-way budget, emits a data point with receiver = transmitter
    and t = twice the one-way hit time. Rays that miss, leave the domain or
    underflow the step control are skipped.
    """
    phis, thetas = _angle_nodes(angle_grid)
    out = []
    for trans in transmitters:
        trans = as_point(trans)
        if ob.signed_distance(trans, period) <= 0.0:
            raise ValueError("transmitter lies inside the obstacle")
        states = np.zeros((len(phis), 5))
        states[:, :3] = trans
        states[:, 3] = phis
        states[:, 4] = thetas
        try:
            batch = march_batch(states, budget, ctl, dom, fld)
        except StepUnderflow:
            continue
        for j in range(len(phis)):
            hit = first_obstacle_hit(batch.ray_path(j), ob, period, fld, eps_hit)
            if hit is None:
                continue
            point, t1 = hit
            out.append(DataPoint(
                transmitter=trans.copy(), receiver=trans.copy(),
                phi=float(phis[j]), theta=float(thetas[j]),
                t=2.0 * t1, xi=xi, period=period,
                truth=TruthMeta(point=point, t1=t1, t2=t1),
            ))
    return out


def _angle_nodes(angle_grid):
    if isinstance(angle_grid, AngleGrid):
        return angle_grid.nodes()
    pairs = np.asarray(list(angle_grid), dtype=float)
    return pairs[:, 0], pairs[:, 1]


def _direction_angles(v):
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    phi = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    theta = float(np.arctan2(v[1], v[0])) % (2.0 * np.pi)
    return phi, theta


def _min_distance_to(batch, target):
    """Per-ray minimum distance to target over recorded states."""
    d = np.linalg.norm(batch.snap_states[:, :, :3] - target, axis=2)
    d[~batch.snap_mask] = np.inf
    snap_idx = np.argmin(d, axis=0)
    rays = np.arange(batch.n_rays)
    return d[snap_idx, rays], snap_idx


def connect_to_point(
    receiver,
    target,
    fld: SpeedField,
    ctl: StepControl,
    dom: Domain,
    budget: float,
    eps_hit: float = EPS_HIT,
    search_levels: int = 14,
    window: float = 0.5,
):
    """Two-point connection: launch angles and time from receiver to target.

    Searches launch angles by repeated grid zoom around the best miss
    distance, starting from the straight-line aim, then refines the arrival
    time inside the best step. Returns (phi, theta, t2) or None when no ray
    passes within eps_hit of the target.
    """
    receiver = as_point(receiver)
    target = as_point(target)
    phi0, theta0 = _direction_angles(target - receiver)
    planar = abs(receiver[2] - target[2]) < 1e-12 and abs(phi0 - np.pi / 2) < 1e-12

    coarse = StepControl(h_init=max(ctl.h_init, budget / 400.0), h_min=ctl.h_min,
                         eps_x=np.inf, eps_y=np.inf, eps_z=np.inf,
                         eps_phi=np.inf, eps_theta=np.inf)
    best = (phi0, theta0)
    w = window
    for level in range(search_levels):
        if planar:
            dth = np.linspace(-w, w, 9)
            phis = np.full(9, np.pi / 2)
            thetas = best[1] + dth
        else:
            dd = np.linspace(-w, w, 5)
            pp, tt = np.meshgrid(best[0] + dd, best[1] + dd, indexing="ij")
            phis, thetas = pp.ravel(), tt.ravel()
        states = np.zeros((len(phis), 5))
        states[:, :3] = receiver
        states[:, 3] = np.clip(phis, 1e-5, np.pi - 1e-5)
        states[:, 4] = thetas
        ctl_level = ctl if level >= search_levels - 2 else coarse
        batch = march_batch(states, budget, ctl_level, dom, fld)
        miss, _ = _min_distance_to(batch, target)
        j = int(np.argmin(miss))
        best = (float(states[j, 3]), float(states[j, 4]))
        w *= 0.35
        if miss[j] < 0.25 * eps_hit:
            break

    # final accurate march along the best angles
    state0 = np.array([receiver[0], receiver[1], receiver[2], best[0], best[1]])
    batch = march_batch(state0[None, :], budget, ctl, dom, fld)
    miss, snap_idx = _min_distance_to(batch, target)
    if miss[0] > eps_hit:
        return None
    i = int(snap_idx[0])
    path = batch.ray_path(0)
    # ternary search for the closest approach inside the bracketing steps
    lo = float(path.times[max(i - 1, 0)])
    hi = float(path.times[min(i + 1, len(path) - 1)])
    base = path.states[max(i - 1, 0)]
    t_base = float(path.times[max(i - 1, 0)])

    def dist_at(tq):
        if tq <= t_base + 1e-15:
            return float(np.linalg.norm(base[:3] - target))
        probe, _ = _rk4(base[None, :], tq - t_base, fld)
        return float(np.linalg.norm(probe[0, :3] - target))

    c_here = float(fld.speed(target))
    while (hi - lo) * c_here > 0.01 * eps_hit:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if dist_at(m1) <= dist_at(m2):
            hi = m2
        else:
            lo = m1
    t2 = 0.5 * (lo + hi)
    if dist_at(t2) > eps_hit:
        return None
    return best[0], best[1], t2


def generate_bistatic_data(
    transmitter,
    receiver,
    angle_grid,
    ob: Obstacle,
    fld: SpeedField,
    period: str,
    ctl: StepControl,
    dom: Domain,
    budget: float,
    xi: float = 1.0,
    eps_hit: float = EPS_HIT,
) -> list:
    """Two-endpoint measurements, t = transmitter leg + receiver leg.

    Each transmitter angle that hits the boundary at some point P is paired
    with a receiver ray connecting to P (Lambertian boundary: any departure
    direction is admissible). P is skipped when no receiver ray connects or
    when the connecting ray is occluded by the obstacle itself.
    """
    transmitter = as_point(transmitter)
    receiver = as_point(receiver)
    for endpoint, name in ((transmitter, "transmitter"), (receiver, "receiver")):
        if ob.signed_distance(endpoint, period) <= 0.0:
            raise ValueError(f"{name} lies inside the obstacle")
    phis, thetas = _angle_nodes(angle_grid)
    states = np.zeros((len(phis), 5))
    states[:, :3] = transmitter
    states[:, 3] = phis
    states[:, 4] = thetas
    try:
        batch = march_batch(states, budget, ctl, dom, fld)
    except StepUnderflow:
        return []
    out = []
    for j in range(len(phis)):
        hit = first_obstacle_hit(batch.ray_path(j), ob, period, fld, eps_hit)
        if hit is None:
            continue
        point, t1 = hit
        conn = connect_to_point(receiver, point, fld, ctl, dom, budget, eps_hit)
        if conn is None:
            continue
        rphi, rtheta, t2 = conn
        # shadow test: the receiver leg must reach P before touching the boundary
        leg = march_batch(
            np.array([[receiver[0], receiver[1], receiver[2], rphi, rtheta]]),
            t2, ctl, dom, fld)
        leg_hit = first_obstacle_hit(leg.ray_path(0), ob, period, fld, eps_hit)
        if leg_hit is not None and leg_hit[1] < t2 - 2.0 * eps_hit / float(fld.speed(point)):
            continue
        out.append(DataPoint(
            transmitter=transmitter.copy(), receiver=receiver.copy(),
            phi=float(phis[j]), theta=float(thetas[j]),
            t=t1 + t2, xi=xi, period=period,
            truth=TruthMeta(point=point, t1=t1, t2=t2),
        ))
    return out


def sampling_delta(points, duration: float | None = None):
    """Spread of travel times within one period and the duration constraint.

    Returns (delta, ok) with delta = max(t) - min(t); ok says whether the
    supplied period duration is below delta (None when no duration given).
    Violations are reported, never rejected.
    """
    if not points:
        raise EmptyPeriod("sampling_delta needs at least one data point")
    ids = {p.period for p in points}
    if len(ids) > 1:
        raise ValueError(f"data points span several periods: {sorted(ids)}")
    times = np.array([p.t for p in points])
    delta = float(times.max() - times.min())
    ok = None if duration is None else bool(duration < delta)
    return delta, ok
