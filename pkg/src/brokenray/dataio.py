"""Dataset files: one measurement per line, whitespace separated.

Units are meters, seconds, radians and Hz throughout. The header names the
columns; the ten measurement fields come first in wire order, then the
sampling-period id, then (optionally) the simulator's truth columns. Floats
are written with repr so a write/parse round trip reproduces the values
bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError, SchemaMismatch
from .reconstruct import CandidateSolution
from .simulate import DataPoint, TruthMeta

__all__ = ["DATA_COLUMNS", "TRUTH_COLUMNS", "parse_data_points", "write_data_points",
           "CANDIDATE_COLUMNS", "parse_candidates", "write_candidates"]

DATA_COLUMNS = ["xl", "yl", "zl", "xr", "yr", "zr", "phi", "theta", "t", "xi", "period"]
TRUTH_COLUMNS = ["px", "py", "pz", "t1", "t2"]


def write_data_points(path, points: list[DataPoint], with_truth: bool | None = None) -> None:
    """Write a dataset; truth columns are included when every point has them."""
    if with_truth is None:
        with_truth = all(p.truth is not None for p in points) and bool(points)
    if with_truth and any(p.truth is None for p in points):
        raise ValueError("with_truth requested but some data points lack truth metadata")
    cols = DATA_COLUMNS + TRUTH_COLUMNS if with_truth else DATA_COLUMNS
    with open(path, "w") as fh:
        fh.write(" ".join(cols) + "\n")
        for p in points:
            vals = [repr(float(v)) for v in (*p.transmitter, *p.receiver, p.phi, p.theta, p.t, p.xi)]
            vals.append(str(p.period))
            if with_truth:
                tr = p.truth
                vals += [repr(float(v)) for v in (*tr.point, tr.t1, tr.t2)]
            fh.write(" ".join(vals) + "\n")


def parse_data_points(path) -> list[DataPoint]:
    """Read a dataset written by write_data_points (truth columns optional)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaMismatch(f"{path}: empty file, expected a header line")
    header = lines[0].split()
    if header == DATA_COLUMNS:
        with_truth = False
    elif header == DATA_COLUMNS + TRUTH_COLUMNS:
        with_truth = True
    else:
        raise SchemaMismatch(f"{path}: unexpected header {' '.join(header)!r}")
    n_fields = len(header)
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != n_fields:
            raise ParseError(f"expected {n_fields} fields, found {len(tokens)}", line=lineno)
        try:
            nums = [float(v) for v in tokens[:10]]
            period = tokens[10]
            truth = None
            if with_truth:
                tvals = [float(v) for v in tokens[11:16]]
                truth = TruthMeta(point=np.array(tvals[:3]), t1=tvals[3], t2=tvals[4])
            points.append(DataPoint(
                transmitter=np.array(nums[0:3]), receiver=np.array(nums[3:6]),
                phi=nums[6], theta=nums[7], t=nums[8], xi=nums[9],
                period=period, truth=truth,
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return points


CANDIDATE_COLUMNS = ["data_point", "x", "y", "z", "t_transmitter", "t_receiver",
                     "receiver_phi", "receiver_theta"]


def write_candidates(path, cands: list[CandidateSolution]) -> None:
    """Phase-1 output file, consumed by the standalone filter stage."""
    with open(path, "w") as fh:
        fh.write(" ".join(CANDIDATE_COLUMNS) + "\n")
        for c in cands:
            fh.write(f"{c.data_point} {float(c.p[0])!r} {float(c.p[1])!r} {float(c.p[2])!r} "
                     f"{float(c.t_transmitter)!r} {float(c.t_receiver)!r} "
                     f"{float(c.receiver_phi)!r} {float(c.receiver_theta)!r}\n")


def parse_candidates(path) -> list[CandidateSolution]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != CANDIDATE_COLUMNS:
        raise SchemaMismatch(f"{path}: not a candidates file")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != len(CANDIDATE_COLUMNS):
            raise ParseError(f"expected {len(CANDIDATE_COLUMNS)} fields, "
                             f"found {len(tokens)}", line=lineno)
        try:
            out.append(CandidateSolution(
                data_point=int(tokens[0]),
                p=np.array([float(tokens[1]), float(tokens[2]), float(tokens[3])]),
                t_transmitter=float(tokens[4]), t_receiver=float(tokens[5]),
                receiver_phi=float(tokens[6]), receiver_theta=float(tokens[7]),
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return out
