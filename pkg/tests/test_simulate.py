import numpy as np
import pytest

from brokenray import (AngleGrid, BallDomain, ConstantField, DataPoint, EmptyPeriod,
                       Obstacle, RayState, StepControl, UnknownPeriod,
                       first_obstacle_hit, generate_bistatic_data, generate_retro_data,
                       obstacle_signed_distance, sampling_delta, trace_ray)
from brokenray.pipeline import diagonal_closed_form

HALF_PI = np.pi / 2
QUARTER_PI = np.pi / 4


def sphere(center, r, period="p1"):
    return Obstacle(radius=r, centers={period: center})


def test_signed_distance():
    ob = sphere([2, 0, 0], 1.0)
    assert obstacle_signed_distance(ob, [2, 0, 0], "p1") == pytest.approx(-1.0)
    assert obstacle_signed_distance(ob, [3, 0, 0], "p1") == pytest.approx(0.0)
    assert obstacle_signed_distance(ob, [4, 0, 0], "p1") == pytest.approx(1.0)
    with pytest.raises(UnknownPeriod):
        ob.center_at("nope")


def test_first_hit_straight_ray(unit_field, ctl):
    dom = BallDomain([0, 0, 0], 6.0)
    ob = sphere([2, 0, 0], 1.0)
    path = trace_ray(RayState(p=[0, 0, 0], phi=HALF_PI, theta=0.0), 3.0, ctl, dom, unit_field)
    hit = first_obstacle_hit(path, ob, "p1", unit_field)
    assert hit is not None
    point, t = hit
    assert np.linalg.norm(point - [1, 0, 0]) < 1e-6
    assert t == pytest.approx(1.0, abs=1e-6)


def test_first_hit_on_curved_ray(affine_field, big_ball, ctl):
    # boundary placed exactly through the diagonal ray's t=1 point
    x1 = diagonal_closed_form(1.0)
    r = np.sqrt(2.0) * (2.0 - x1)
    ob = sphere([2, 2, 0], r)
    path = trace_ray(RayState(p=[0, 0, 0], phi=HALF_PI, theta=QUARTER_PI),
                     1.4, ctl, big_ball, affine_field)
    point, t = first_obstacle_hit(path, ob, "p1", affine_field)
    assert np.linalg.norm(point - [x1, x1, 0.0]) < 1e-5
    assert t == pytest.approx(1.0, abs=1e-5)


def test_first_hit_miss_returns_none(unit_field, ctl):
    dom = BallDomain([0, 0, 0], 6.0)
    ob = sphere([0, 4, 0], 0.5)
    path = trace_ray(RayState(p=[0, 0, 0], phi=HALF_PI, theta=0.0), 3.0, ctl, dom, unit_field)
    assert first_obstacle_hit(path, ob, "p1", unit_field) is None


def test_generate_retro_diagonal_scene(affine_field, big_ball, ctl):
    x1 = diagonal_closed_form(1.0)
    ob = sphere([2, 2, 0], np.sqrt(2.0) * (2.0 - x1), period="p8")
    data = generate_retro_data([[0, 0, 0]], [(HALF_PI, QUARTER_PI)], ob, affine_field,
                               "p8", ctl, big_ball, budget=1.3)
    assert len(data) == 1
    b = data[0]
    assert b.t == pytest.approx(2.0, abs=1e-5)
    assert np.array_equal(b.transmitter, b.receiver)
    # truth point sits on the boundary and the echo path is symmetric
    assert abs(ob.signed_distance(b.truth.point, "p8")) < 1e-6
    again = trace_ray(b.launch_state(), b.t / 2.0, ctl, big_ball, affine_field)
    assert np.linalg.norm(again.end().p - b.truth.point) < 1e-5


def test_generate_retro_obstacle_behind(unit_field, ctl):
    dom = BallDomain([0, 0, 0], 6.0)
    ob = sphere([-3, 0, 0], 0.5)
    data = generate_retro_data([[0, 0, 0]], [(HALF_PI, 0.0)], ob, unit_field,
                               "p1", ctl, dom, budget=2.0)
    assert data == []


def test_generate_bistatic_ellipse_legs(unit_field, ctl):
    # transmitter fires +y, hits (0, 1.5, 0); |LP| + |PS| = 1.5 + 2.5
    dom = BallDomain([0, 0, 0], 6.0)
    ob = sphere([0, 2, 0], 0.5)
    data = generate_bistatic_data([0, 0, 0], [2, 0, 0], [(HALF_PI, HALF_PI)], ob,
                                  unit_field, "p1", ctl, dom, budget=3.0)
    assert len(data) == 1
    b = data[0]
    assert np.linalg.norm(b.truth.point - [0, 1.5, 0]) < 1e-5
    assert b.truth.t1 == pytest.approx(1.5, abs=1e-5)
    assert b.truth.t2 == pytest.approx(2.5, abs=1e-5)
    assert b.t == pytest.approx(4.0, abs=1e-5)


def test_bistatic_with_coincident_endpoints_matches_retro(affine_field, big_ball, ctl):
    x1 = diagonal_closed_form(1.0)
    ob = sphere([2, 2, 0], np.sqrt(2.0) * (2.0 - x1))
    retro = generate_retro_data([[0, 0, 0]], [(HALF_PI, QUARTER_PI)], ob, affine_field,
                                "p1", ctl, big_ball, budget=1.3)
    bist = generate_bistatic_data([0, 0, 0], [0, 0, 0], [(HALF_PI, QUARTER_PI)], ob,
                                  affine_field, "p1", ctl, big_ball, budget=1.3)
    assert len(bist) == 1
    assert bist[0].t == pytest.approx(retro[0].t, abs=1e-5)


def test_bistatic_occluded_point_skipped(unit_field, ctl):
    # receiver sits behind the obstacle: the connecting leg would cross it
    dom = BallDomain([0, 0, 0], 6.0)
    ob = sphere([0, 1.5, 0], 0.5)
    data = generate_bistatic_data([0, 0, 0], [0, 3, 0], [(HALF_PI, HALF_PI)], ob,
                                  unit_field, "p1", ctl, dom, budget=4.0)
    assert data == []


def test_sampling_delta_published_spread():
    times = [1.55, 1.56, 1.58, 1.61, 1.65, 1.70]
    pts = [DataPoint(transmitter=[0, 0, 0], receiver=[0, 0, 0], phi=1.57, theta=0.7,
                     t=t, period="p1") for t in times]
    delta, ok = sampling_delta(pts, duration=0.1)
    assert delta == pytest.approx(0.15)
    assert ok is True
    delta, ok = sampling_delta(pts[:1])
    assert delta == 0.0 and ok is None
    _, bad = sampling_delta(pts, duration=0.2)
    assert bad is False


def test_sampling_delta_errors():
    with pytest.raises(EmptyPeriod):
        sampling_delta([])
    mixed = [DataPoint(transmitter=[0, 0, 0], receiver=[0, 0, 0], phi=1.0, theta=0.0,
                       t=1.0, period=p) for p in ("a", "b")]
    with pytest.raises(ValueError):
        sampling_delta(mixed)


def test_angle_grid_nodes_nested_on_doubling():
    g = AngleGrid(phi_lo=0.4, phi_hi=2.0, n_phi=3, theta_lo=0.0, theta_hi=1.0, n_theta=4)
    p1, t1 = g.nodes()
    p2, t2 = g.doubled().nodes()
    coarse = {(round(a, 12), round(b, 12)) for a, b in zip(p1, t1)}
    fine = {(round(a, 12), round(b, 12)) for a, b in zip(p2, t2)}
    assert coarse <= fine
    assert len(fine) == 4 * len(coarse)
