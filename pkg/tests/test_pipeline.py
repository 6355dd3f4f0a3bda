import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from brokenray import DataPoint
from brokenray.cli import main
from brokenray.config import load_config
from brokenray.dataio import parse_candidates, parse_data_points, write_data_points
from brokenray.errors import ParseError
from brokenray.pipeline import diagonal_closed_form, run_pipeline, verify_oracle

QUARTER_PI = float(np.pi / 4)
HALF_PI = float(np.pi / 2)


def write_tripod_dataset(path):
    """Three one-pair echoes of the same point P=(1,1,0) in unit speed."""
    pts = []
    for L, theta in (((2.0, 1.0, 0.0), np.pi), ((1.0, 2.0, 0.0), 1.5 * np.pi),
                     ((0.0, 1.0, 0.0), 0.0)):
        pts.append(DataPoint(transmitter=L, receiver=L, phi=HALF_PI, theta=theta,
                             t=2.0, period="p1"))
    write_data_points(path, pts)
    return pts


TRIPOD_CONFIG = """\
[field]
kind = "constant"
c0 = 1.0

[domain]
shape = "ball"
center = [0.0, 0.0, 0.0]
radius = 6.0

[[periods]]
id = "p1"
duration = 0.05

[step]
h_init = 0.005

[reconstruct]
eps1 = 0.01
eps2 = 0.001
n_theta = 64

[filter]
q = 3
eps3 = 0.02

[run]
data = "dataset.txt"
out_dir = "{out}"
seed = 1
"""


def setup_tripod(tmp_path, out_name="out"):
    write_tripod_dataset(tmp_path / "dataset.txt")
    cfg_path = tmp_path / "run.toml"
    cfg_path.write_text(TRIPOD_CONFIG.format(out=out_name))
    return cfg_path


def test_pipeline_keeps_triple_supported_point(tmp_path):
    cfg = load_config(setup_tripod(tmp_path))
    report = run_pipeline(cfg)
    assert report.statuses == {0: "solved", 1: "solved", 2: "solved"}
    assert report.periods["p1"]["n_kept"] == 1
    out = tmp_path / "out"
    lines = (out / "solutions.txt").read_text().splitlines()
    assert lines[0] == "period x y z count pairs"
    period, x, y, z, count, pairs = lines[1].split()
    assert period == "p1" and int(count) == 3
    assert abs(float(x) - 1.0) < 1e-6 and abs(float(y) - 1.0) < 1e-6
    assert len(pairs.split(";")) == 3
    # accepted candidates satisfy the travel-time identity
    for c in parse_candidates(out / "candidates.txt"):
        assert abs(c.t_transmitter + c.t_receiver - 2.0) < cfg.recon.eps2


def test_pipeline_byte_deterministic(tmp_path):
    cfg_path = setup_tripod(tmp_path)
    assert main(["pipeline", "--config", str(cfg_path), "--set", 'run.out_dir="o1"']) == 0
    assert main(["pipeline", "--config", str(cfg_path), "--set", 'run.out_dir="o2"']) == 0
    for name in ("candidates.txt", "solutions.txt", "scatter_p1.svg"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    r1 = json.loads((tmp_path / "o1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "o2" / "report.json").read_text())
    r1.pop("timings"), r2.pop("timings")
    r1["config"]["run"].pop("out_dir"), r2["config"]["run"].pop("out_dir")
    assert r1 == r2


def test_strict_mode_exit_code(tmp_path):
    write_tripod_dataset(tmp_path / "dataset.txt")
    # drop two of the three pairs: support can never reach q=3
    pts = parse_data_points(tmp_path / "dataset.txt")[:1]
    write_data_points(tmp_path / "dataset.txt", pts)
    cfg_path = tmp_path / "run.toml"
    cfg_path.write_text(TRIPOD_CONFIG.format(out="out"))
    assert main(["pipeline", "--config", str(cfg_path), "--strict"]) == 3


def test_cli_stagewise_chain(tmp_path):
    cfg_path = setup_tripod(tmp_path)
    data = str(tmp_path / "dataset.txt")
    assert main(["reconstruct", "--config", str(cfg_path), "--data", data,
                 "--out", str(tmp_path / "c.txt")]) == 0
    assert main(["filter", "--config", str(cfg_path), "--data", data,
                 "--candidates", str(tmp_path / "c.txt"),
                 "--out", str(tmp_path / "s.txt")]) == 0
    sol = (tmp_path / "s.txt").read_text().splitlines()
    assert len(sol) == 2 and sol[1].split()[4] == "3"


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[field\n")
    assert main(["pipeline", "--config", str(bad)]) == 2
    missing = tmp_path / "none.toml"
    assert main(["pipeline", "--config", str(missing)]) == 2


def test_config_overrides(tmp_path):
    cfg_path = setup_tripod(tmp_path)
    cfg = load_config(cfg_path, ["reconstruct.eps1=0.05", 'run.out_dir="elsewhere"'])
    assert cfg.recon.eps1 == 0.05
    assert cfg.out_dir.name == "elsewhere"
    with pytest.raises(ParseError):
        load_config(cfg_path, ["not-an-assignment"])


def test_svg_is_valid_xml(tmp_path):
    cfg = load_config(setup_tripod(tmp_path))
    run_pipeline(cfg)
    tree = ET.parse(tmp_path / "out" / "scatter_p1.svg")
    tag = tree.getroot().tag
    assert tag.endswith("svg")


SIM_CONFIG = """\
[field]
kind = "affine_xy"
a = 1.0
b = 1.0
d = 1.0

[domain]
shape = "ball"
center = [0.0, 0.0, 0.0]
radius = 12.0

[obstacle]
radius = 0.1
[obstacle.centers]
pa = [0.28276649839876087, 0.28276649839876087, 0.0]
pb = [0.42040672706246777, 0.42040672706246777, 0.0]

[[periods]]
id = "pa"
duration = 0.01
[[periods]]
id = "pb"
duration = 0.01

[simulate]
mode = "retro"
transmitters = [[0.0, 0.0, 0.0]]
budget = 0.6
phi_lo = 1.5707963267948966
phi_hi = 1.5707963267948966
n_phi = 1
theta_lo = 0.7853981633974483
theta_hi = 0.7853981633974483
n_theta = 1

[step]
h_init = 0.005

[reconstruct]
eps1 = 0.01
eps2 = 0.001
theta_lo = 0.7353981633974483
theta_hi = 0.8353981633974483
n_theta = 8

[run]
out_dir = "out"
seed = 0
"""


def test_two_period_centroids_move_along_diagonal(tmp_path):
    cfg_path = tmp_path / "sim.toml"
    cfg_path.write_text(SIM_CONFIG)
    cfg = load_config(cfg_path)
    report = run_pipeline(cfg)
    assert set(report.periods) == {"pa", "pb"}
    data = parse_data_points(tmp_path / "out" / "dataset.txt")
    cands = parse_candidates(tmp_path / "out" / "candidates.txt")
    centroid = {}
    for period in ("pa", "pb"):
        ids = {i for i, b in enumerate(data) if b.period == period}
        pts = np.array([c.p for c in cands if c.data_point in ids])
        assert len(pts)
        centroid[period] = pts.mean(axis=0)
    move = centroid["pb"] - centroid["pa"]
    assert move[0] > 0.1
    assert abs(move[0] - move[1]) < 1e-3
    # simulated times match the closed form: x(T/2) was placed on the boundary
    for b in data:
        want = 0.5 if b.period == "pa" else 0.75
        assert b.t == pytest.approx(want, abs=1e-4)


VERIFY_CONFIG = """\
[field]
kind = "affine_xy"
a = 1.0
b = 1.0
d = 1.0

[domain]
shape = "ball"
center = [0.0, 0.0, 0.0]
radius = 12.0

[step]
h_init = 0.005

[reconstruct]
eps1 = 0.01
eps2 = 0.001
theta_lo = 0.6853981633974483
theta_hi = 0.8853981633974483
n_theta = 16

[verify]
travel_times = [0.5, 1.0, 2.0]

[run]
out_dir = "out"
"""


def test_verify_oracle(tmp_path):
    cfg_path = tmp_path / "verify.toml"
    cfg_path.write_text(VERIFY_CONFIG)
    cfg = load_config(cfg_path)
    report = verify_oracle(cfg)
    assert report["trace_pass_0p1pct"]
    assert report["recon_pass_1pct"]
    assert report["max_trace_rel_err"] < 1e-6
    # closed form at T -> 0 stays continuous
    assert diagonal_closed_form(0.0) == 0.0


def test_verify_cli(tmp_path):
    cfg_path = tmp_path / "verify.toml"
    cfg_path.write_text(VERIFY_CONFIG)
    assert main(["verify", "--config", str(cfg_path)]) == 0
    doc = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert doc["recon_pass_1pct"] is True


def test_cache_build_cli(tmp_path):
    cfg_path = setup_tripod(tmp_path)
    code = main(["cache-build", "--config", str(cfg_path),
                 "--set", "mesh.l_m=12.0", "--set", "mesh.n_v=24",
                 "--set", "mesh.budget=2.1", "--set", "mesh.n_r=50",
                 "--set", "simulate.mode=\"retro\"",
                 "--set", "simulate.transmitters=[[2.0,1.0,0.0]]",
                 "--set", "simulate.budget=2.1",
                 "--out", str(tmp_path / "cache.txt")])
    assert code == 0
    from brokenray.regions import load_cache
    table = load_cache(tmp_path / "cache.txt")
    assert len(table) > 0


def test_simulate_cli_writes_dataset(tmp_path):
    cfg_path = tmp_path / "sim.toml"
    cfg_path.write_text(SIM_CONFIG)
    assert main(["simulate", "--config", str(cfg_path),
                 "--out", str(tmp_path / "d.txt")]) == 0
    pts = parse_data_points(tmp_path / "d.txt")
    assert {p.period for p in pts} == {"pa", "pb"}
