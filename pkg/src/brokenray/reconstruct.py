"""Phase 1: candidate reflection points from travel-time matching.

For one measurement the transmitter ray is marched with its recorded launch
angles up to the travel-time budget. Receiver rays are launched over a
discretized angle grid; a pair of points (one per ray) whose distance is
below eps1 and whose summed travel times match the measured time within eps2
marks the transmitter-ray point as a candidate reflection point.

Receiver rays depend only on the receiver position and launch angle, so each
ray is integrated once per data point and its stored states are tested
against every transmitter point inside the remaining time budget. The
candidate set is identical to re-integrating per transmitter step, and the
pairwise O(T^2 A) testing cost is retained.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .angles import AngleGrid
from .errors import MeasurementError, StepUnderflow
from .geometry import Domain, SpeedField
from .raytrace import RayPath, StepControl, march_batch
from .simulate import DataPoint

__all__ = [
    "ReconstructionConfig",
    "CandidateSolution",
    "find_candidates",
    "reconstruct_all",
    "refine_angles",
    "STATUS_SOLVED",
    "STATUS_NO_SOLUTION",
    "STATUS_MEASUREMENT_ERROR",
    "STATUS_STEP_UNDERFLOW",
]

log = logging.getLogger(__name__)

STATUS_SOLVED = "solved"
STATUS_NO_SOLUTION = "no-solution"
STATUS_MEASUREMENT_ERROR = "measurement-error"
STATUS_STEP_UNDERFLOW = "step-underflow"


@dataclass(frozen=True)
class ReconstructionConfig:
    """Tolerances, angle grid and march limits for phase 1.

    eps1 is the pairing distance (m), eps2 the travel-time tolerance (s);
    defaults suit desk-scale scenes. refine_* control the angle-doubling
    wrapper; seed_* control batched reconstruction of measurements with
    nearly equal launch angles.
    """

    eps1: float = 1e-2
    eps2: float = 1e-3
    grid: AngleGrid = field(default_factory=AngleGrid)
    step: StepControl = field(default_factory=StepControl)
    max_steps_transmitter: int = 500_000
    max_steps_receiver: int = 500_000
    refine_max_doublings: int = 4
    refine_min_angle_step: float = 1e-4
    seed_angle_eps: float = 0.05
    seed_window: int = 2

    def __post_init__(self):
        if not (self.eps1 > 0.0 and self.eps2 > 0.0):
            raise ValueError("eps1 and eps2 must be positive")


@dataclass(frozen=True)
class CandidateSolution:
    """A phase-1 output point and the pairing that produced it."""

    data_point: int
    p: np.ndarray
    t_transmitter: float
    t_receiver: float
    receiver_phi: float
    receiver_theta: float

    def total_time(self) -> float:
        return self.t_transmitter + self.t_receiver


def _transmitter_path(b: DataPoint, fld, dom, cfg) -> RayPath:
    if not (dom.contains(b.transmitter) and dom.contains(b.receiver)):
        raise MeasurementError("measurement endpoints lie outside the domain")
    batch = march_batch(
        b.launch_state().as_array()[None, :], b.t, cfg.step, dom, fld,
        max_steps=cfg.max_steps_transmitter)
    path = batch.ray_path(0)
    if path.status == "exited":
        raise MeasurementError(
            f"transmitter ray left the domain at t={path.times[-1]:.6g} < budget {b.t:.6g}")
    if len(path) < 2:
        raise MeasurementError("transmitter ray recorded no usable points")
    return path


def _receiver_records(b: DataPoint, phis, thetas, budget, fld, dom, cfg):
    """March all receiver rays once; pooled states sorted by time."""
    states = np.zeros((len(phis), 5))
    states[:, :3] = b.receiver
    states[:, 3] = phis
    states[:, 4] = thetas
    batch = march_batch(states, budget, cfg.step, dom, fld,
                        max_steps=cfg.max_steps_receiver)
    times, recs, ray_idx = batch.flatten(include_launch=False)
    return times, recs[:, :3], ray_idx


def _dedup(raw, eps1):
    """Greedy dedup within eps1, best time residual first.

    raw is a list of (residual, dist, order, candidate). Returns candidates
    ordered by transmitter time for reproducible output.
    """
    if not raw:
        return []
    raw = sorted(raw, key=lambda r: (r[0], r[1], r[2]))
    kept = []
    pos = np.array([r[3].p for r in raw])
    taken = np.zeros(len(raw), dtype=bool)
    for i in range(len(raw)):
        if taken[i]:
            continue
        kept.append(raw[i][3])
        close = np.linalg.norm(pos - pos[i], axis=1) < eps1
        taken |= close
    kept.sort(key=lambda c: (c.t_transmitter, c.receiver_phi, c.receiver_theta, c.t_receiver))
    return kept


def find_candidates(
    b: DataPoint,
    fld: SpeedField,
    dom: Domain,
    cfg: ReconstructionConfig,
    data_id: int = 0,
    nodes=None,
    instrument: dict | None = None,
) -> list[CandidateSolution]:
    """All candidate reflection points for one measurement.

    nodes optionally overrides the receiver angle grid with explicit
    (phis, thetas) arrays (the seeded search passes a grid subset).
    instrument, when given, collects counters: pairwise comparisons and the
    worst receiver-time budget excess (should never be positive).

    Raises MeasurementError when the transmitter ray leaves the domain before
    spending the measured travel time; StepUnderflow propagates and abandons
    the data point.
    """
    path = _transmitter_path(b, fld, dom, cfg)
    if nodes is None:
        phis, thetas = cfg.grid.nodes()
    else:
        phis, thetas = nodes
    if len(phis) == 0:
        return []

    t_first = float(path.times[1])
    recv_budget = b.t + cfg.eps2 - t_first
    if recv_budget <= 0.0:
        return []
    r_times, r_pos, r_ray = _receiver_records(b, phis, thetas, recv_budget, fld, dom, cfg)
    if len(r_times) == 0:
        return []

    raw = []
    comparisons = 0
    worst_excess = -np.inf
    for s in range(1, len(path)):
        t_s = float(path.times[s])
        hi = int(np.searchsorted(r_times, b.t + cfg.eps2 - t_s, side="right"))
        if hi == 0:
            continue
        p_s = path.positions[s]
        worst_excess = max(worst_excess, float(r_times[hi - 1] - (b.t + cfg.eps2 - t_s)))
        dt = np.abs(t_s + r_times[:hi] - b.t)
        d = r_pos[:hi] - p_s
        dist2 = d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2
        comparisons += hi
        ok = (dt < cfg.eps2) & (dist2 < cfg.eps1 * cfg.eps1)
        if not ok.any():
            continue
        for j in np.nonzero(ok)[0]:
            ridx = int(r_ray[j])
            cand = CandidateSolution(
                data_point=data_id,
                p=p_s.copy(),
                t_transmitter=t_s,
                t_receiver=float(r_times[j]),
                receiver_phi=float(phis[ridx]),
                receiver_theta=float(thetas[ridx]),
            )
            raw.append((float(dt[j]), float(np.sqrt(dist2[j])), (s, ridx, j), cand))
    if instrument is not None:
        instrument["comparisons"] = instrument.get("comparisons", 0) + comparisons
        instrument["budget_excess"] = max(instrument.get("budget_excess", -np.inf), worst_excess)
        instrument["transmitter_steps"] = len(path) - 1
        instrument["receiver_records"] = len(r_times)
    return _dedup(raw, cfg.eps1)


def refine_angles(
    b: DataPoint,
    fld: SpeedField,
    dom: Domain,
    cfg: ReconstructionConfig,
    data_id: int = 0,
) -> list[CandidateSolution]:
    """find_candidates with angle-grid doubling until a solution appears.

    The receiver grid is doubled (nested nodes) after every empty result,
    until the angle step falls below cfg.refine_min_angle_step or the
    doubling budget runs out. Returns the first nonempty candidate list, or
    an empty list when refinement is exhausted.
    """
    grid = cfg.grid
    for doubling in range(cfg.refine_max_doublings + 1):
        cands = find_candidates(b, fld, dom, replace(cfg, grid=grid), data_id=data_id)
        if cands:
            if doubling:
                log.info("data point %d solved after %d angle doubling(s)", data_id, doubling)
            return cands
        if grid.min_step() / 2.0 < cfg.refine_min_angle_step:
            break
        grid = grid.doubled()
    return []


def reconstruct_all(
    data: list[DataPoint],
    fld: SpeedField,
    dom: Domain,
    cfg: ReconstructionConfig,
    refine: bool = False,
) -> tuple[list[CandidateSolution], dict[int, str]]:
    """Phase 1 over a dataset; failures are isolated per data point.

    Returns (candidates sorted by data-point id, status per id). Statuses:
    solved, no-solution, measurement-error, step-underflow.
    """
    solve = refine_angles if refine else find_candidates
    out: list[CandidateSolution] = []
    statuses: dict[int, str] = {}
    for i, b in enumerate(data):
        try:
            cands = solve(b, fld, dom, cfg, data_id=i)
        except MeasurementError as exc:
            log.warning("data point %d: measurement error: %s", i, exc)
            statuses[i] = STATUS_MEASUREMENT_ERROR
            continue
        except StepUnderflow as exc:
            log.warning("data point %d: %s", i, exc)
            statuses[i] = STATUS_STEP_UNDERFLOW
            continue
        statuses[i] = STATUS_SOLVED if cands else STATUS_NO_SOLUTION
        out.extend(cands)
    out.sort(key=lambda c: c.data_point)
    return out, statuses
