"""Pipeline configuration: one TOML file with named sections.

Sections: field, domain, obstacle (+obstacle.centers), periods (array of
tables), simulate, step, reconstruct, filter, mesh, run, verify. Command-line
--set overrides are applied onto the parsed tree before objects are built.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .angles import AngleGrid
from .consensus import FilterConfig
from .errors import ParseError
from .geometry import (AffineXYField, BallDomain, BoxDomain, ConstantField,
                       Domain, SpeedField, load_grid_field)
from .raytrace import StepControl
from .reconstruct import ReconstructionConfig
from .regions import MeshSpec
from .simulate import Obstacle, SamplingPeriod

__all__ = ["PipelineConfig", "load_config", "apply_overrides"]


@dataclass
class SimulateSpec:
    mode: str
    transmitters: list
    receivers: list
    budget: float
    grid: AngleGrid
    xi: float = 1.0


@dataclass
class PipelineConfig:
    field: SpeedField
    domain: Domain
    step: StepControl
    recon: ReconstructionConfig
    filt: FilterConfig
    obstacle: Optional[Obstacle] = None
    periods: list = dc_field(default_factory=list)
    simulate: Optional[SimulateSpec] = None
    mesh: Optional[MeshSpec] = None
    cache_n_r: int = 400
    cache_budget: Optional[float] = None
    mode: str = "brute"
    refine: bool = False
    accelerated_filter: bool = False
    seed: int = 0
    out_dir: Path = Path("out")
    strict: bool = False
    data_path: Optional[Path] = None
    verify_travel_times: list = dc_field(default_factory=list)
    raw: dict = dc_field(default_factory=dict)

    def period_duration(self, period_id: str) -> Optional[float]:
        for p in self.periods:
            if p.id == period_id:
                return p.duration
        return None


def _require(table: dict, key: str, section: str):
    if key not in table:
        raise ParseError(f"config section [{section}] is missing {key!r}")
    return table[key]


def _build_field(tab: dict, base: Path) -> SpeedField:
    kind = _require(tab, "kind", "field")
    if kind == "constant":
        return ConstantField(float(_require(tab, "c0", "field")))
    if kind == "affine_xy":
        return AffineXYField(float(tab.get("a", 1.0)), float(tab.get("b", 1.0)),
                             float(tab.get("d", 1.0)))
    if kind == "grid":
        return load_grid_field(base / str(_require(tab, "path", "field")))
    raise ParseError(f"unknown field kind {kind!r}")


def _build_domain(tab: dict) -> Domain:
    shape = _require(tab, "shape", "domain")
    if shape == "ball":
        return BallDomain(tab.get("center", [0.0, 0.0, 0.0]),
                          float(_require(tab, "radius", "domain")))
    if shape == "box":
        return BoxDomain(_require(tab, "lo", "domain"), _require(tab, "hi", "domain"))
    raise ParseError(f"unknown domain shape {shape!r}")


def _build_grid(tab: dict, prefix: str = "") -> AngleGrid:
    g = lambda k, dflt: tab.get(prefix + k, dflt)
    return AngleGrid(
        phi_lo=float(g("phi_lo", np.pi / 2)), phi_hi=float(g("phi_hi", np.pi / 2)),
        n_phi=int(g("n_phi", 1)),
        theta_lo=float(g("theta_lo", 0.0)), theta_hi=float(g("theta_hi", 2 * np.pi)),
        n_theta=int(g("n_theta", 64)),
    )


def _build_step(tab: dict) -> StepControl:
    kw = {}
    for name in ("h_init", "h_min", "eps_x", "eps_y", "eps_z", "eps_phi", "eps_theta"):
        if name in tab:
            kw[name] = float(tab[name])
    return StepControl(**kw)


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value strings (values parsed as TOML literals)."""
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        try:
            parsed = tomllib.loads(f"v = {value}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"override {item!r}: bad value: {exc}") from exc
        node = tree
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ParseError(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = parsed
    return tree


def load_config(path, overrides: list[str] | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if overrides:
        apply_overrides(tree, overrides)
    base = path.parent

    fld = _build_field(_require(tree, "field", "config"), base)
    dom = _build_domain(_require(tree, "domain", "config"))
    step = _build_step(tree.get("step", {}))

    rtab = tree.get("reconstruct", {})
    recon = ReconstructionConfig(
        eps1=float(rtab.get("eps1", 1e-2)),
        eps2=float(rtab.get("eps2", 1e-3)),
        grid=_build_grid(rtab),
        step=step,
        max_steps_transmitter=int(rtab.get("max_steps_transmitter", 500_000)),
        max_steps_receiver=int(rtab.get("max_steps_receiver", 500_000)),
        refine_max_doublings=int(rtab.get("refine_max_doublings", 4)),
        refine_min_angle_step=float(rtab.get("refine_min_angle_step", 1e-4)),
        seed_angle_eps=float(rtab.get("seed_angle_eps", 0.05)),
        seed_window=int(rtab.get("seed_window", 2)),
    )

    ftab = tree.get("filter", {})
    filt = FilterConfig(
        eps3=float(ftab.get("eps3", 2.0 * recon.eps1)),
        q=int(ftab.get("q", 3)),
        pair_quantum=float(ftab.get("pair_quantum", 1e-6)),
    )

    obstacle = None
    if "obstacle" in tree:
        otab = tree["obstacle"]
        obstacle = Obstacle(radius=float(_require(otab, "radius", "obstacle")),
                            centers=_require(otab, "centers", "obstacle"),
                            lambertian=bool(otab.get("lambertian", True)))

    periods = [SamplingPeriod(id=str(_require(p, "id", "periods")),
                              duration=float(_require(p, "duration", "periods")))
               for p in tree.get("periods", [])]

    sim = None
    if "simulate" in tree:
        stab = tree["simulate"]
        mode = stab.get("mode", "retro")
        if mode not in ("retro", "bistatic"):
            raise ParseError(f"unknown simulate mode {mode!r}")
        transmitters = _require(stab, "transmitters", "simulate")
        receivers = stab.get("receivers", transmitters)
        if mode == "bistatic" and len(receivers) != len(transmitters):
            raise ParseError("bistatic simulate pairs transmitters and receivers by index; "
                             "lengths differ")
        sim = SimulateSpec(
            mode=mode, transmitters=transmitters, receivers=receivers,
            budget=float(_require(stab, "budget", "simulate")),
            grid=_build_grid(stab), xi=float(stab.get("xi", 1.0)),
        )

    mesh = None
    mtab = tree.get("mesh")
    if mtab:
        mesh = MeshSpec(l_m=float(_require(mtab, "l_m", "mesh")),
                        n_v=int(_require(mtab, "n_v", "mesh")))

    run = tree.get("run", {})
    data_path = run.get("data")
    vtab = tree.get("verify", {})

    return PipelineConfig(
        field=fld, domain=dom, step=step, recon=recon, filt=filt,
        obstacle=obstacle, periods=periods, simulate=sim,
        mesh=mesh,
        cache_n_r=int(mtab.get("n_r", 400)) if mtab else 400,
        cache_budget=float(mtab["budget"]) if mtab and "budget" in mtab else None,
        mode=str(rtab.get("mode", "brute")),
        refine=bool(rtab.get("refine", False)),
        accelerated_filter=bool(ftab.get("accelerated", False)),
        seed=int(run.get("seed", 0)),
        out_dir=base / str(run.get("out_dir", "out")),
        strict=bool(run.get("strict", False)),
        data_path=base / str(data_path) if data_path else None,
        verify_travel_times=[float(t) for t in vtab.get("travel_times", [])],
        raw=tree,
    )
