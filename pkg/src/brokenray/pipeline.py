"""Pipeline drivers: simulate -> phase 1 -> phase 2 -> reports and plots.

All stages run single-threaded and deterministically: identical config and
seed produce byte-identical dataset, candidate and solution files (report
timings are the one exception, kept under their own key).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .consensus import (FilterConfig, cluster_and_count, cluster_and_count_hashed,
                        filter_by_support)
from .dataio import parse_data_points, write_candidates, write_data_points
from .errors import MeasurementError, ParseError, StepUnderflow
from .geometry import AffineXYField
from .raytrace import RayState, trace_ray
from .reconstruct import (STATUS_MEASUREMENT_ERROR, STATUS_NO_SOLUTION, STATUS_SOLVED,
                          STATUS_STEP_UNDERFLOW, find_candidates, reconstruct_all)
from .regions import build_cache, optimized_find_candidates, seeded_find_candidates
from .simulate import generate_bistatic_data, generate_retro_data, sampling_delta
from .svgplot import write_scatter_svg

__all__ = ["RunReport", "simulate_dataset", "run_phase1", "run_phase2",
           "run_pipeline", "verify_oracle", "diagonal_closed_form"]


def diagonal_closed_form(t: float) -> float:
    """x = y coordinate after time t along the diagonal ray of the unit
    affine medium c = x + y + 1 launched from the origin."""
    return (np.exp(np.sqrt(2.0) * t) - 1.0) / 2.0


@dataclass
class RunReport:
    """Per-point statuses, per-period summaries and stage timings."""

    mode: str = "brute"
    statuses: dict = dc_field(default_factory=dict)
    candidate_counts: dict = dc_field(default_factory=dict)
    periods: dict = dc_field(default_factory=dict)
    config_echo: dict = dc_field(default_factory=dict)
    timings: dict = dc_field(default_factory=dict)

    @property
    def total_kept(self) -> int:
        return sum(p["n_kept"] for p in self.periods.values())

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "statuses": {str(k): v for k, v in sorted(self.statuses.items())},
            "candidate_counts": {str(k): v for k, v in sorted(self.candidate_counts.items())},
            "periods": self.periods,
            "config": self.config_echo,
            "timings": self.timings,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


def simulate_dataset(cfg: PipelineConfig) -> list:
    """Generate measurements for every configured sampling period."""
    if cfg.simulate is None or cfg.obstacle is None:
        raise ParseError("config has no [simulate] and [obstacle] sections")
    sim = cfg.simulate
    data = []
    period_ids = [p.id for p in cfg.periods] or cfg.obstacle.periods()
    for period in period_ids:
        if sim.mode == "retro":
            data.extend(generate_retro_data(
                sim.transmitters, sim.grid, cfg.obstacle, cfg.field, period,
                cfg.step, cfg.domain, sim.budget, xi=sim.xi))
        else:
            for trans, recv in zip(sim.transmitters, sim.receivers):
                data.extend(generate_bistatic_data(
                    trans, recv, sim.grid, cfg.obstacle, cfg.field, period,
                    cfg.step, cfg.domain, sim.budget, xi=sim.xi))
    return data


def _phase1_cached(cfg, data):
    budget = cfg.cache_budget or (max(b.t for b in data) + cfg.recon.eps2 if data else 1.0)
    if cfg.mesh is None:
        raise ParseError("cached mode needs a [mesh] section")
    receivers = []
    for b in data:
        if not any(np.array_equal(b.receiver, r) for r in receivers):
            receivers.append(b.receiver)
    table = build_cache(receivers, cfg.recon.grid, budget, cfg.step,
                        cfg.domain, cfg.field, cfg.mesh, cfg.cache_n_r)
    cands, statuses = [], {}
    for i, b in enumerate(data):
        try:
            ci = optimized_find_candidates(b, table, cfg.field, cfg.domain,
                                           cfg.recon, data_id=i)
        except MeasurementError:
            statuses[i] = STATUS_MEASUREMENT_ERROR
            continue
        except StepUnderflow:
            statuses[i] = STATUS_STEP_UNDERFLOW
            continue
        statuses[i] = STATUS_SOLVED if ci else STATUS_NO_SOLUTION
        cands.extend(ci)
    return cands, statuses


def _seeded_batches(cfg, data):
    """Group measurement ids sharing endpoints into eps0-tight angle batches."""
    groups: dict[tuple, list[int]] = {}
    for i, b in enumerate(data):
        key = (tuple(np.round(b.transmitter / cfg.filt.pair_quantum).astype(int)),
               tuple(np.round(b.receiver / cfg.filt.pair_quantum).astype(int)),
               b.period)
        groups.setdefault(key, []).append(i)
    batches = []
    for key in sorted(groups):
        ids = sorted(groups[key], key=lambda i: (data[i].phi, data[i].theta, i))
        batch: list[int] = []
        for i in ids:
            if batch:
                a0 = np.array([[data[j].phi, data[j].theta] for j in batch])
                a1 = np.array([data[i].phi, data[i].theta])
                if np.linalg.norm(a0 - a1, axis=1).max() > cfg.recon.seed_angle_eps:
                    batches.append(batch)
                    batch = []
            batch.append(i)
        if batch:
            batches.append(batch)
    return batches


def _phase1_seeded(cfg, data):
    cands, statuses = [], {}
    for ids in _seeded_batches(cfg, data):
        try:
            got = seeded_find_candidates([data[i] for i in ids], cfg.field,
                                         cfg.domain, cfg.recon, data_ids=ids)
        except MeasurementError:
            statuses.update({i: STATUS_MEASUREMENT_ERROR for i in ids})
            continue
        except StepUnderflow:
            statuses.update({i: STATUS_STEP_UNDERFLOW for i in ids})
            continue
        solved = {c.data_point for c in got}
        for i in ids:
            statuses[i] = STATUS_SOLVED if i in solved else STATUS_NO_SOLUTION
        cands.extend(got)
    cands.sort(key=lambda c: c.data_point)
    return cands, statuses


def run_phase1(cfg: PipelineConfig, data: list):
    if cfg.mode == "brute":
        return reconstruct_all(data, cfg.field, cfg.domain, cfg.recon, refine=cfg.refine)
    if cfg.mode == "cached":
        return _phase1_cached(cfg, data)
    if cfg.mode == "seeded":
        return _phase1_seeded(cfg, data)
    raise ParseError(f"unknown reconstruct mode {cfg.mode!r}")


def run_phase2(cfg: PipelineConfig, cands: list, data: list):
    """Cluster and support-filter candidates, independently per period."""
    cluster = cluster_and_count_hashed if cfg.accelerated_filter else cluster_and_count
    out = {}
    period_ids = sorted({b.period for b in data})
    for period in period_ids:
        ids = {i for i, b in enumerate(data) if b.period == period}
        local = [c for c in cands if c.data_point in ids]
        clusters = cluster(local, data, cfg.filt)
        kept = filter_by_support(clusters, cfg.filt)
        out[period] = {"clusters": clusters, "kept": kept}
    return out


def _pair_text(key) -> str:
    return ",".join(str(v) for v in key)


def write_solutions(path, cfg: PipelineConfig, phase2_out: dict) -> None:
    with open(path, "w") as fh:
        fh.write("period x y z count pairs\n")
        for period in sorted(phase2_out):
            clusters = phase2_out[period]["clusters"]
            rows = [c for c in clusters if c.count >= cfg.filt.q]
            rows.sort(key=lambda c: (c.representative[0], c.representative[1],
                                     c.representative[2]))
            for c in rows:
                pairs = ";".join(_pair_text(k) for k in c.pairs)
                fh.write(f"{period} {float(c.representative[0])!r} "
                         f"{float(c.representative[1])!r} "
                         f"{float(c.representative[2])!r} {c.count} {pairs}\n")


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Execute the configured stages and write all artifacts to out_dir."""
    np.random.seed(cfg.seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(mode=cfg.mode, config_echo=cfg.raw)

    t0 = time.perf_counter()
    if cfg.data_path is not None:
        data = parse_data_points(cfg.data_path)
    else:
        data = simulate_dataset(cfg)
        write_data_points(out / "dataset.txt", data)
    report.timings["simulate_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cands, statuses = run_phase1(cfg, data)
    report.timings["phase1_s"] = time.perf_counter() - t0
    report.statuses = statuses
    counts = {i: 0 for i in range(len(data))}
    for c in cands:
        counts[c.data_point] += 1
    report.candidate_counts = counts
    write_candidates(out / "candidates.txt", cands)

    t0 = time.perf_counter()
    phase2_out = run_phase2(cfg, cands, data)
    report.timings["phase2_s"] = time.perf_counter() - t0

    for period, res in sorted(phase2_out.items()):
        local = [b for b in data if b.period == period]
        delta, ok = sampling_delta(local, cfg.period_duration(period)) if local else (0.0, None)
        report.periods[period] = {
            "n_data_points": len(local),
            "n_candidates": sum(counts[i] for i, b in enumerate(data) if b.period == period),
            "n_clusters": len(res["clusters"]),
            "n_kept": len(res["kept"]),
            "delta_s": delta,
            "duration_below_delta": ok,
        }
        truth_center = truth_radius = None
        if cfg.obstacle is not None and period in cfg.obstacle.centers:
            truth_center = cfg.obstacle.center_at(period)
            truth_radius = cfg.obstacle.radius
        write_scatter_svg(out / f"scatter_{period}.svg",
                          np.array(res["kept"]).reshape(-1, 3),
                          truth_center=truth_center, truth_radius=truth_radius,
                          title=f"period {period}")

    write_solutions(out / "solutions.txt", cfg, phase2_out)
    with open(out / "report.json", "w") as fh:
        fh.write(report.to_json() + "\n")
    return report


def verify_oracle(cfg: PipelineConfig) -> dict:
    """Closed-form check of the integrator and the retro reconstruction.

    Requires the unit affine medium and the diagonal retro geometry from the
    origin. For every configured travel time T the ray is traced to t = T/2
    with tolerances tightened tenfold and compared against the closed form;
    the same scene is then reconstructed and the candidate compared as well.
    Pass/fail is reported at 1% relative error (reconstruction) and 0.1%
    (integrator).
    """
    fld = cfg.field
    if not (isinstance(fld, AffineXYField) and (fld.a, fld.b, fld.d) == (1.0, 1.0, 1.0)):
        raise ParseError("verify needs field kind='affine_xy' with a=b=d=1")
    if not cfg.verify_travel_times:
        raise ParseError("config section [verify] needs travel_times = [...]")
    origin = np.zeros(3)
    tight = cfg.step.scaled(0.1)
    rows = []
    for T in cfg.verify_travel_times:
        expected = diagonal_closed_form(T / 2.0)
        path = trace_ray(RayState(p=origin, phi=np.pi / 2, theta=np.pi / 4),
                         T / 2.0, tight, cfg.domain, fld)
        end = path.end().p
        trace_err = max(abs(end[0] - expected), abs(end[1] - expected)) / expected

        from .simulate import DataPoint
        b = DataPoint(transmitter=origin, receiver=origin, phi=np.pi / 2,
                      theta=np.pi / 4, t=T, period="oracle")
        cands = find_candidates(b, fld, cfg.domain, cfg.recon)
        if cands:
            best = min(cands, key=lambda c: abs(c.t_transmitter - T / 2.0))
            recon_err = max(abs(best.p[0] - expected), abs(best.p[1] - expected)) / expected
        else:
            recon_err = float("inf")
        rows.append({"travel_time": T, "expected_xy": expected,
                     "trace_rel_err": trace_err, "recon_rel_err": recon_err})
    max_trace = max(r["trace_rel_err"] for r in rows)
    max_recon = max(r["recon_rel_err"] for r in rows)
    return {
        "rows": rows,
        "max_trace_rel_err": max_trace,
        "max_recon_rel_err": max_recon,
        "trace_pass_0p1pct": bool(max_trace < 1e-3),
        "recon_pass_1pct": bool(max_recon < 1e-2),
    }
