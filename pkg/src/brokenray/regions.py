"""Cube-mesh spatial index over precomputed receiver-ray points.

The bounding cube M (side l_m, centered at the origin) is split into N_v^3
cubes of side b = l_m / N_v. Every precomputed receiver-ray point is stored
under its cube id; a query point then only inspects its own cube and the
<= 26 adjacent ones, independent of table size.

Cube ids use the collision-free base-N_v linearization of the per-axis
indices. The product-of-indices form is kept as a documented reference
(region_index_product) but it maps distinct cubes to the same number, so it
is never used for storage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import OutsideMesh, StaleCache, StepUnderflow
from .geometry import Domain, SpeedField, as_point
from .raytrace import StepControl, march_batch
from .reconstruct import CandidateSolution, ReconstructionConfig, _dedup, _transmitter_path
from .simulate import DataPoint

__all__ = [
    "MeshSpec",
    "RTRecord",
    "RegionTable",
    "region_of",
    "region_of_many",
    "region_index_product",
    "adjacent_regions",
    "build_cache",
    "lookup_candidates",
    "optimized_find_candidates",
    "seeded_find_candidates",
    "save_cache",
    "load_cache",
]


@dataclass(frozen=True)
class MeshSpec:
    """Bounding cube side l_m (centered at the origin) and cubes per axis."""

    l_m: float
    n_v: int

    def __post_init__(self):
        if not self.l_m > 0.0:
            raise ValueError("mesh side l_m must be positive")
        if self.n_v < 1:
            raise ValueError("n_v must be >= 1")

    @property
    def b(self) -> float:
        return self.l_m / self.n_v

    def covers(self, dom: Domain) -> bool:
        return dom.bounding_radius() <= self.l_m / 2.0


def _axis_indices(pts: np.ndarray, mesh: MeshSpec) -> np.ndarray:
    """Per-axis cube indices in 1..N_v (ceiling form, clamped at faces)."""
    half = mesh.l_m / 2.0
    if np.any(pts < -half) or np.any(pts > half):
        raise OutsideMesh("point outside the bounding cube M")
    idx = np.ceil((pts + half) / mesh.b).astype(int)
    return np.clip(idx, 1, mesh.n_v)


def region_of_many(pts: np.ndarray, mesh: MeshSpec) -> np.ndarray:
    idx = _axis_indices(np.asarray(pts, dtype=float), mesh)
    return (idx[:, 0] - 1) + mesh.n_v * (idx[:, 1] - 1) + mesh.n_v ** 2 * (idx[:, 2] - 1)


def region_of(p, mesh: MeshSpec) -> int:
    """Injective cube id of p: base-N_v linearization of the axis indices."""
    return int(region_of_many(as_point(p)[None, :], mesh)[0])


def region_index_product(p, mesh: MeshSpec) -> int:
    """The plain product of the three axis indices.

    Reference form only: distinct cubes collide (e.g. indices (2,1,1) and
    (1,2,1) both give 2), so it cannot key a lookup table.
    """
    idx = _axis_indices(as_point(p)[None, :], mesh)[0]
    return int(idx[0] * idx[1] * idx[2])


def _id_to_axes(region: int, mesh: MeshSpec):
    n = mesh.n_v
    if not 0 <= region < n ** 3:
        raise OutsideMesh(f"region id {region} outside 0..{n ** 3 - 1}")
    ix = region % n
    iy = (region // n) % n
    iz = region // (n * n)
    return ix + 1, iy + 1, iz + 1


def adjacent_regions(region: int, mesh: MeshSpec) -> list[int]:
    """Ids of the cube itself and its face/edge/corner neighbors (<= 27)."""
    ix, iy, iz = _id_to_axes(region, mesh)
    n = mesh.n_v
    out = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                jx, jy, jz = ix + dx, iy + dy, iz + dz
                if 1 <= jx <= n and 1 <= jy <= n and 1 <= jz <= n:
                    out.append((jx - 1) + n * (jy - 1) + n * n * (jz - 1))
    return sorted(out)


@dataclass(frozen=True)
class RTRecord:
    """One stored receiver-ray point (column order of the table schema)."""

    pointid: int
    rayid: int
    receiverid: int
    region: int
    t: float
    x: float
    y: float
    z: float


class RegionTable:
    """Receiver-ray points grouped by cube id, plus build metadata.

    Records are held in flat arrays sorted by region with a group index, so
    fetching one region's records is a slice, independent of table size.
    """

    def __init__(self, mesh, receivers, grid_phis, grid_thetas, budget, n_r,
                 pointid, rayid, receiverid, region, t, xyz):
        self.mesh = mesh
        self.receivers = np.asarray(receivers, dtype=float).reshape(-1, 3)
        self.grid_phis = np.asarray(grid_phis, dtype=float)
        self.grid_thetas = np.asarray(grid_thetas, dtype=float)
        self.budget = float(budget)
        self.n_r = int(n_r)
        order = np.argsort(region, kind="stable")
        self.pointid = np.asarray(pointid)[order]
        self.rayid = np.asarray(rayid)[order]
        self.receiverid = np.asarray(receiverid)[order]
        self.region = np.asarray(region)[order]
        self.t = np.asarray(t, dtype=float)[order]
        self.xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)[order]
        # group index over occupied cubes only (N_v^3 can be huge, records sparse)
        uniq, starts = np.unique(self.region, return_index=True)
        stops = np.append(starts[1:], len(self.region))
        self._groups = {int(r): (int(a), int(b)) for r, a, b in zip(uniq, starts, stops)}

    def __len__(self):
        return len(self.region)

    def region_slice(self, region: int) -> slice:
        a, b = self._groups.get(int(region), (0, 0))
        return slice(a, b)

    def neighborhood_indices(self, p) -> np.ndarray:
        """Record indices in the cube of p and all adjacent cubes."""
        home = region_of(p, self.mesh)
        parts = [np.arange(*self._groups[r])
                 for r in adjacent_regions(home, self.mesh) if r in self._groups]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=int)

    def record(self, i: int) -> RTRecord:
        return RTRecord(
            pointid=int(self.pointid[i]), rayid=int(self.rayid[i]),
            receiverid=int(self.receiverid[i]), region=int(self.region[i]),
            t=float(self.t[i]), x=float(self.xyz[i, 0]),
            y=float(self.xyz[i, 1]), z=float(self.xyz[i, 2]),
        )


def build_cache(
    receivers,
    angle_grid,
    budget: float,
    ctl: StepControl,
    dom: Domain,
    fld: SpeedField,
    mesh: MeshSpec,
    n_r: int,
) -> RegionTable:
    """Trace every (receiver, angle) ray with fixed step budget/n_r.

    Each visited state becomes a record in its cube group; rays leaving the
    domain keep their records up to the exit. Launch points (t = 0) are not
    stored: a zero-length receiver leg never pairs with a measurement.
    """
    from .simulate import _angle_nodes

    if not mesh.covers(dom):
        raise ValueError("mesh bounding cube does not cover the domain")
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    phis, thetas = _angle_nodes(angle_grid)
    fixed_h = budget / n_r
    all_t, all_xyz, all_ray, all_recv = [], [], [], []
    for ridx, recv in enumerate(receivers):
        recv = as_point(recv)
        states = np.zeros((len(phis), 5))
        states[:, :3] = recv
        states[:, 3] = phis
        states[:, 4] = thetas
        batch = march_batch(states, budget, ctl, dom, fld, fixed_h=fixed_h)
        times, recs, ray_idx = batch.flatten(include_launch=False)
        all_t.append(times)
        all_xyz.append(recs[:, :3])
        all_ray.append(ray_idx + ridx * len(phis))
        all_recv.append(np.full(len(times), ridx, dtype=int))
    t = np.concatenate(all_t) if all_t else np.zeros(0)
    xyz = np.concatenate(all_xyz) if all_xyz else np.zeros((0, 3))
    rayid = np.concatenate(all_ray) if all_ray else np.zeros(0, dtype=int)
    receiverid = np.concatenate(all_recv) if all_recv else np.zeros(0, dtype=int)
    region = region_of_many(xyz, mesh) if len(xyz) else np.zeros(0, dtype=int)
    return RegionTable(
        mesh=mesh, receivers=np.array([as_point(r) for r in receivers]),
        grid_phis=phis, grid_thetas=thetas, budget=budget, n_r=n_r,
        pointid=np.arange(len(t)), rayid=rayid, receiverid=receiverid,
        region=region, t=t, xyz=xyz,
    )


def lookup_candidates(p, table: RegionTable) -> list[RTRecord]:
    """All records in the cube containing p or an adjacent cube."""
    idx = table.neighborhood_indices(p)
    return [table.record(int(i)) for i in idx]


def _match_receiver(table: RegionTable, b: DataPoint) -> int:
    d = np.linalg.norm(table.receivers - b.receiver, axis=1)
    j = int(np.argmin(d)) if len(d) else -1
    if j < 0 or d[j] > 1e-9:
        raise StaleCache("cache was not built for this measurement's receiver")
    return j


def optimized_find_candidates(
    b: DataPoint,
    table: RegionTable,
    fld: SpeedField,
    dom: Domain,
    cfg: ReconstructionConfig,
    data_id: int = 0,
    instrument: dict | None = None,
) -> list[CandidateSolution]:
    """Phase 1 with cached receiver rays: one region lookup per step.

    The transmitter ray still marches adaptively; each of its points is
    tested against the stored receiver points of its own and adjacent cubes
    using the record's time-from-receiver as the receiver leg. Cost per step
    is bounded by the (small) neighborhood population, so a data point costs
    O(T) instead of O(T^2 A).
    """
    ridx = _match_receiver(table, b)
    if table.budget + 1e-12 < b.t - cfg.eps2:
        raise StaleCache(f"cache budget {table.budget} too small for travel time {b.t}")
    path = _transmitter_path(b, fld, dom, cfg)
    raw = []
    tested = 0
    for s in range(1, len(path)):
        t_s = float(path.times[s])
        p_s = path.positions[s]
        idx = table.neighborhood_indices(p_s)
        if len(idx) == 0:
            continue
        idx = idx[table.receiverid[idx] == ridx]
        if len(idx) == 0:
            continue
        tested += len(idx)
        dt = np.abs(t_s + table.t[idx] - b.t)
        d = table.xyz[idx] - p_s
        dist2 = d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2
        ok = (dt < cfg.eps2) & (dist2 < cfg.eps1 * cfg.eps1)
        for k in np.nonzero(ok)[0]:
            i = int(idx[k])
            ray_local = int(table.rayid[i]) % max(len(table.grid_phis), 1)
            cand = CandidateSolution(
                data_point=data_id,
                p=p_s.copy(),
                t_transmitter=t_s,
                t_receiver=float(table.t[i]),
                receiver_phi=float(table.grid_phis[ray_local]),
                receiver_theta=float(table.grid_thetas[ray_local]),
            )
            raw.append((float(dt[k]), float(np.sqrt(dist2[k])), (s, ray_local, i), cand))
    if instrument is not None:
        instrument["comparisons"] = instrument.get("comparisons", 0) + tested
        instrument["transmitter_steps"] = len(path) - 1
    return _dedup(raw, cfg.eps1)


def seeded_find_candidates(
    batch: list[DataPoint],
    fld: SpeedField,
    dom: Domain,
    cfg: ReconstructionConfig,
    data_ids=None,
    seed_angles=None,
) -> list[CandidateSolution]:
    """Phase 1 for a batch of measurements with nearly equal launch angles.

    The first member is solved over the full receiver grid (or seed_angles
    are accepted as an injected seed). Later members sweep only the grid
    nodes inside a window around the seed's receiver angles; the window
    doubles on a miss until it spans the full grid, so the candidate set
    matches the unseeded search.
    """
    from .reconstruct import find_candidates

    if not batch:
        return []
    if data_ids is None:
        data_ids = list(range(len(batch)))
    first = batch[0]
    for b in batch[1:]:
        if not (np.array_equal(b.transmitter, first.transmitter)
                and np.array_equal(b.receiver, first.receiver)):
            raise ValueError("seeded batch members must share transmitter and receiver")
    ang = np.array([[b.phi, b.theta] for b in batch])
    spread = np.linalg.norm(ang[:, None, :] - ang[None, :, :], axis=2).max()
    if spread > cfg.seed_angle_eps:
        raise ValueError(f"batch launch angles spread {spread:.4g} exceeds "
                         f"eps0={cfg.seed_angle_eps}")

    phis, thetas = cfg.grid.nodes()
    out: list[CandidateSolution] = []
    seeds: list[tuple[float, float]] = list(seed_angles) if seed_angles else []
    start = 0
    if not seeds:
        first_cands = find_candidates(first, fld, dom, cfg, data_id=data_ids[0])
        out.extend(first_cands)
        seeds = [(c.receiver_phi, c.receiver_theta) for c in first_cands]
        start = 1
        if not seeds:
            # no seed to exploit; fall back to the plain search for the rest
            for b, i in zip(batch[1:], data_ids[1:]):
                out.extend(find_candidates(b, fld, dom, cfg, data_id=i))
            return out

    phi_step = (cfg.grid.phi_hi - cfg.grid.phi_lo) / cfg.grid.n_phi if not cfg.grid.phi_degenerate else 0.0
    theta_step = cfg.grid.theta_step if not cfg.grid.theta_degenerate else 0.0

    for b, i in zip(batch[start:], data_ids[start:]):
        window = cfg.seed_window
        cands: list[CandidateSolution] = []
        while True:
            mask = np.zeros(len(phis), dtype=bool)
            for sp, st in seeds:
                okp = np.abs(phis - sp) <= window * phi_step + 1e-12 if phi_step else np.ones(len(phis), bool)
                okt = np.abs(thetas - st) <= window * theta_step + 1e-12 if theta_step else np.ones(len(thetas), bool)
                mask |= okp & okt
            cands = find_candidates(b, fld, dom, cfg, data_id=i,
                                    nodes=(phis[mask], thetas[mask]))
            if cands or mask.all():
                break
            window *= 2
        out.extend(cands)
        if cands:
            seeds = [(c.receiver_phi, c.receiver_theta) for c in cands]
    return out


# --- cache persistence -------------------------------------------------------

_CACHE_MAGIC = "brokenray-region-table v1"
_RECORD_HEADER = "pointid rayid receiverid region t x y z"


def save_cache(path, table: RegionTable) -> None:
    """Plain-text cache file: metadata header, then records in schema order."""
    with open(path, "w") as fh:
        fh.write(_CACHE_MAGIC + "\n")
        fh.write(f"mesh {table.mesh.l_m!r} {table.mesh.n_v}\n")
        fh.write(f"budget {table.budget!r} {table.n_r}\n")
        fh.write(f"receivers {len(table.receivers)}\n")
        for r in table.receivers:
            fh.write(f"{float(r[0])!r} {float(r[1])!r} {float(r[2])!r}\n")
        fh.write(f"angles {len(table.grid_phis)}\n")
        for p, t in zip(table.grid_phis, table.grid_thetas):
            fh.write(f"{float(p)!r} {float(t)!r}\n")
        fh.write(f"records {len(table)}\n")
        fh.write(_RECORD_HEADER + "\n")
        for i in range(len(table)):
            fh.write(f"{int(table.pointid[i])} {int(table.rayid[i])} "
                     f"{int(table.receiverid[i])} {int(table.region[i])} "
                     f"{float(table.t[i])!r} {float(table.xyz[i, 0])!r} "
                     f"{float(table.xyz[i, 1])!r} {float(table.xyz[i, 2])!r}\n")


def load_cache(path) -> RegionTable:
    from .errors import ParseError, SchemaMismatch

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CACHE_MAGIC:
        raise SchemaMismatch(f"not a region-table cache file: {path}")
    try:
        _, l_m, n_v = lines[1].split()
        mesh = MeshSpec(l_m=float(l_m), n_v=int(n_v))
        _, budget, n_r = lines[2].split()
        n_recv = int(lines[3].split()[1])
        pos = 4
        receivers = [[float(v) for v in lines[pos + i].split()] for i in range(n_recv)]
        pos += n_recv
        n_ang = int(lines[pos].split()[1])
        pos += 1
        angles = [[float(v) for v in lines[pos + i].split()] for i in range(n_ang)]
        pos += n_ang
        n_rec = int(lines[pos].split()[1])
        pos += 1
        if lines[pos] != _RECORD_HEADER:
            raise SchemaMismatch(f"unexpected record header: {lines[pos]!r}")
        pos += 1
        rows = [lines[pos + i].split() for i in range(n_rec)]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed cache file: {exc}") from exc
    angles = np.array(angles).reshape(-1, 2)
    rows_arr = np.array(rows, dtype=object) if rows else np.zeros((0, 8), dtype=object)
    as_f = lambda col: np.array([float(v) for v in col])
    as_i = lambda col: np.array([int(v) for v in col])
    if len(rows_arr):
        pointid, rayid, receiverid, region = (as_i(rows_arr[:, k]) for k in range(4))
        t = as_f(rows_arr[:, 4])
        xyz = np.column_stack([as_f(rows_arr[:, 5]), as_f(rows_arr[:, 6]), as_f(rows_arr[:, 7])])
    else:
        pointid = rayid = receiverid = region = np.zeros(0, dtype=int)
        t = np.zeros(0)
        xyz = np.zeros((0, 3))
    return RegionTable(
        mesh=mesh, receivers=np.array(receivers).reshape(-1, 3),
        grid_phis=angles[:, 0], grid_thetas=angles[:, 1],
        budget=float(budget), n_r=int(n_r),
        pointid=pointid, rayid=rayid, receiverid=receiverid,
        region=region, t=t, xyz=xyz,
    )
