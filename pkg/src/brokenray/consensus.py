"""Phase 2: consensus filtering of phase-1 candidates.

A candidate point is kept only when it was reconstructed by at least q
distinct (transmitter, receiver) pairs. Points that pass the travel-time test
by coincidence (intangible solution points) are supported by a single pair
with overwhelming probability and are removed; q >= 3.

Clustering is greedy in a deterministic order so the output never depends on
how the candidates were produced or interleaved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DanglingCandidate
from .reconstruct import CandidateSolution
from .simulate import DataPoint

__all__ = ["FilterConfig", "SupportCluster", "cluster_and_count",
           "cluster_and_count_hashed", "filter_by_support", "pair_key"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    """eps3: clustering radius (m); q: minimum distinct-pair support;
    pair_quantum: coordinate quantization when comparing transducer
    positions (measurements carry no transducer ids)."""

    eps3: float = 2e-2
    q: int = 3
    pair_quantum: float = 1e-6

    def __post_init__(self):
        if not self.eps3 > 0.0:
            raise ValueError("eps3 must be positive")
        if self.q < 3:
            raise ValueError(f"support threshold q must be >= 3, got {self.q}")
        if not self.pair_quantum > 0.0:
            raise ValueError("pair_quantum must be positive")


@dataclass
class SupportCluster:
    """One clustered candidate point with its distinct-pair support."""

    representative: np.ndarray
    count: int
    members: list = field(default_factory=list)   # indices into the candidate list
    pairs: list = field(default_factory=list)     # sorted quantized pair keys


def pair_key(b: DataPoint, quantum: float) -> tuple:
    """Identity of a (transmitter, receiver) pair under coordinate quantization."""
    coords = np.concatenate([b.transmitter, b.receiver])
    return tuple(int(round(v / quantum)) for v in coords)


def _canonical_order(cands: list[CandidateSolution]) -> list[int]:
    """Deterministic processing order: data-point id, then lexicographic P."""
    def key(i):
        c = cands[i]
        return (c.data_point, c.p[0], c.p[1], c.p[2], c.t_transmitter,
                c.t_receiver, c.receiver_phi, c.receiver_theta)
    return sorted(range(len(cands)), key=key)


def _build_clusters(cands, data, cfg, neighbor_fn):
    for c in cands:
        if not 0 <= c.data_point < len(data):
            raise DanglingCandidate(f"candidate references data point {c.data_point}, "
                                    f"dataset has {len(data)}")
    order = _canonical_order(cands)
    pos = np.array([c.p for c in cands]) if cands else np.zeros((0, 3))
    assigned = np.zeros(len(cands), dtype=bool)
    clusters = []
    for i in order:
        if assigned[i]:
            continue
        close = neighbor_fn(pos, i)
        close &= ~assigned
        close[i] = True
        members = [j for j in order if close[j]]
        assigned[close] = True
        keys = sorted({pair_key(data[cands[j].data_point], cfg.pair_quantum) for j in members})
        clusters.append(SupportCluster(
            representative=pos[i].copy(),
            count=len(keys),
            members=members,
            pairs=keys,
        ))
    return clusters


def cluster_and_count(cands: list[CandidateSolution], data: list[DataPoint],
                      cfg: FilterConfig) -> list[SupportCluster]:
    """Greedy eps3-clustering with distinct-pair counting (reference O(N^2)).

    Every unassigned candidate, visited in canonical order, seeds a cluster
    that absorbs all still-unassigned candidates within eps3 of it; the
    cluster counts the distinct quantized (transmitter, receiver) pairs among
    its members.
    """
    def neighbors(pos, i):
        return np.linalg.norm(pos - pos[i], axis=1) < cfg.eps3
    return _build_clusters(cands, data, cfg, neighbors)


def cluster_and_count_hashed(cands: list[CandidateSolution], data: list[DataPoint],
                             cfg: FilterConfig) -> list[SupportCluster]:
    """Same clustering accelerated with a uniform cube hash (O(N)).

    Candidates are binned into cubes of side eps3; a seed only scans its own
    and adjacent cubes. Output is identical to cluster_and_count.
    """
    from .regions import MeshSpec, adjacent_regions, region_of_many

    if not cands:
        return []
    pos = np.array([c.p for c in cands])
    span = float(np.abs(pos).max()) + 2.0 * cfg.eps3
    n_v = max(1, int(np.floor(2.0 * span / cfg.eps3)))
    # cube side stays >= eps3 so neighbors always live in adjacent cubes
    mesh = MeshSpec(l_m=2.0 * span, n_v=min(n_v, 128))
    regions = region_of_many(pos, mesh)
    by_region: dict[int, np.ndarray] = {}
    for r in np.unique(regions):
        by_region[int(r)] = np.nonzero(regions == r)[0]
    adj_cache: dict[int, list] = {}

    def neighbors(pos_arr, i):
        r = int(regions[i])
        if r not in adj_cache:
            adj_cache[r] = adjacent_regions(r, mesh)
        close = np.zeros(len(pos_arr), dtype=bool)
        for rr in adj_cache[r]:
            idx = by_region.get(rr)
            if idx is None:
                continue
            d = np.linalg.norm(pos_arr[idx] - pos_arr[i], axis=1)
            close[idx[d < cfg.eps3]] = True
        return close

    return _build_clusters(cands, data, cfg, neighbors)


def filter_by_support(clusters: list[SupportCluster], cfg: FilterConfig) -> list[np.ndarray]:
    """Representatives of clusters supported by at least q distinct pairs.

    Returned points are sorted lexicographically. Logs a warning when nothing
    survives: the scene does not view the boundary from enough pairs.
    """
    kept = [c.representative for c in clusters if c.count >= cfg.q]
    kept.sort(key=lambda p: (p[0], p[1], p[2]))
    if clusters and not kept:
        log.warning("no cluster reached support q=%d (max count %d); "
                    "the scene is under-instrumented", cfg.q,
                    max(c.count for c in clusters))
    return kept
