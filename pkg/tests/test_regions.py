import numpy as np
import pytest

from brokenray import (AngleGrid, BallDomain, ConstantField, DataPoint, MeshSpec,
                       OutsideMesh, ReconstructionConfig, StaleCache, StepControl,
                       adjacent_regions, build_cache, find_candidates, load_cache,
                       lookup_candidates, optimized_find_candidates,
                       region_index_product, region_of, save_cache,
                       seeded_find_candidates)

HALF_PI = np.pi / 2


def test_region_of_corner_cubes():
    mesh = MeshSpec(l_m=2.0, n_v=2)
    assert region_of([-0.5, -0.5, -0.5], mesh) == 0
    assert region_of([0.5, 0.5, 0.5], mesh) == 7


def test_region_outside_mesh():
    with pytest.raises(OutsideMesh):
        region_of([2.0, 0.0, 0.0], MeshSpec(l_m=2.0, n_v=2))


def test_product_form_collides():
    # axis indices (2,1,1) and (1,2,1) both multiply to 2; the linearized id
    # keeps them apart
    mesh = MeshSpec(l_m=2.0, n_v=2)
    a = [0.5, -0.5, -0.5]
    b = [-0.5, 0.5, -0.5]
    assert region_index_product(a, mesh) == region_index_product(b, mesh) == 2
    assert region_of(a, mesh) != region_of(b, mesh)


@pytest.mark.parametrize("n_v", [1, 2, 3, 5, 8])
def test_region_of_injective_over_cube_centers(n_v):
    mesh = MeshSpec(l_m=2.0, n_v=n_v)
    b = mesh.b
    ids = set()
    for iz in range(n_v):
        for iy in range(n_v):
            for ix in range(n_v):
                center = (-1.0 + (np.array([ix, iy, iz]) + 0.5) * b)
                ids.add(region_of(center, mesh))
    assert len(ids) == n_v ** 3
    assert ids == set(range(n_v ** 3))


def test_adjacent_region_counts():
    mesh = MeshSpec(l_m=4.0, n_v=4)
    interior = region_of([0.1, 0.1, 0.1], mesh)
    assert len(adjacent_regions(interior, mesh)) == 27
    corner = region_of([-1.9, -1.9, -1.9], mesh)
    assert len(adjacent_regions(corner, mesh)) == 8
    solo = MeshSpec(l_m=4.0, n_v=1)
    assert adjacent_regions(0, solo) == [0]


def test_adjacency_symmetric():
    mesh = MeshSpec(l_m=3.0, n_v=3)
    adj = {r: set(adjacent_regions(r, mesh)) for r in range(27)}
    for r, neigh in adj.items():
        for s in neigh:
            assert r in adj[s]


@pytest.fixture
def small_scene(unit_field):
    dom = BallDomain([0, 0, 0], 6.0)
    mesh = MeshSpec(l_m=12.0, n_v=24)
    ctl = StepControl(h_init=5e-3)
    return unit_field, dom, mesh, ctl


def test_build_cache_single_ray(small_scene):
    fld, dom, mesh, ctl = small_scene
    table = build_cache([[0, 0, 0]], [(HALF_PI, 0.0)], 1.0, ctl, dom, fld, mesh, n_r=10)
    assert len(table) == 10
    order = np.argsort(table.pointid)
    assert np.all(np.diff(table.t[order]) > 0)
    # stored regions agree with recomputation, and follow the +x ray in order
    for i in range(len(table)):
        assert table.region[i] == region_of(table.xyz[i], mesh)
    xs = table.xyz[order, 0]
    regions_along = [region_of([x, 0, 0], mesh) for x in xs]
    assert regions_along == sorted(regions_along)


def test_lookup_neighborhood(small_scene):
    fld, dom, mesh, ctl = small_scene
    empty = build_cache([[0, 0, 0]], [(HALF_PI, 0.0)], 0.01, ctl, dom, fld, mesh, n_r=1)
    probe = [0.25, 0.25, 0.25]
    got = lookup_candidates(probe, empty)
    assert [r for r in got if r.t > 0.012] == []

    table = build_cache([[0, 0, 0]], [(HALF_PI, 0.0)], 3.0, ctl, dom, fld, mesh, n_r=30)
    near = lookup_candidates([0.2, 0.1, 0.0], table)   # same / adjacent cube
    assert any(abs(r.x - 0.2) < 0.3 for r in near)
    far = lookup_candidates([0.2, 2.6, 0.0], table)    # 3+ cubes off the ray
    assert far == []


def ellipse_setup(n_theta=100):
    fld = ConstantField(1.0)
    dom = BallDomain([0, 0, 0], 6.0)
    ctl = StepControl(h_init=5e-3)
    grid = AngleGrid(phi_lo=HALF_PI, phi_hi=HALF_PI, n_phi=1,
                     theta_lo=2.3, theta_hi=2.7, n_theta=n_theta)
    cfg = ReconstructionConfig(grid=grid, step=ctl)
    b = DataPoint(transmitter=[0, 0, 0], receiver=[2, 0, 0], phi=HALF_PI,
                  theta=HALF_PI, t=4.0, period="p1")
    return fld, dom, ctl, cfg, b


def match_sets(a, b, eps):
    """Bipartite matching by nearest neighbor; both sets must pair off."""
    assert len(a) == len(b)
    used = set()
    for c in a:
        dists = [(np.linalg.norm(c.p - d.p), j) for j, d in enumerate(b) if j not in used]
        dist, j = min(dists)
        assert dist < eps
        used.add(j)


def test_optimized_matches_brute_force_on_ellipse():
    fld, dom, ctl, cfg, b = ellipse_setup()
    brute = find_candidates(b, fld, dom, cfg)
    mesh = MeshSpec(l_m=12.0, n_v=24)
    table = build_cache([b.receiver], cfg.grid, 4.05, ctl, dom, fld, mesh,
                        n_r=810)  # fixed step 4.05/810 = h_init
    fast = optimized_find_candidates(b, table, fld, dom, cfg)
    assert len(fast) == len(brute) == 1
    match_sets(brute, fast, cfg.eps1)
    assert fast[0].t_receiver == pytest.approx(brute[0].t_receiver, abs=1e-9)


def test_optimized_finds_candidate_near_cube_face():
    # cube side below eps1: the reflection point sits exactly on a face and
    # pairing records live in the adjacent cube
    fld = ConstantField(1.0)
    dom = BallDomain([0, 0, 0], 0.63)
    ctl = StepControl(h_init=5e-3)
    mesh = MeshSpec(l_m=1.28, n_v=160)  # b = 0.008 < eps1
    grid = AngleGrid(phi_lo=HALF_PI, phi_hi=HALF_PI, n_phi=1,
                     theta_lo=-0.1, theta_hi=0.1, n_theta=8)
    cfg = ReconstructionConfig(grid=grid, step=ctl)
    b = DataPoint(transmitter=[-0.2, 0, 0], receiver=[-0.2, 0, 0], phi=HALF_PI,
                  theta=0.0, t=0.8, period="p1")  # reflection at x=0.2, on a face
    assert (0.2 + 0.64) / mesh.b == pytest.approx(105.0)
    brute = find_candidates(b, fld, dom, cfg)
    table = build_cache([b.receiver], cfg.grid, 0.81, ctl, dom, fld, mesh, n_r=162)
    fast = optimized_find_candidates(b, table, fld, dom, cfg)
    assert len(brute) == len(fast) == 1
    assert np.linalg.norm(fast[0].p - [0.2, 0, 0]) < 1e-6
    match_sets(brute, fast, cfg.eps1)


def test_stale_cache_detected():
    fld, dom, ctl, cfg, b = ellipse_setup()
    mesh = MeshSpec(l_m=12.0, n_v=24)
    wrong_recv = build_cache([[0, 3, 0]], cfg.grid, 4.05, ctl, dom, fld, mesh, n_r=100)
    with pytest.raises(StaleCache):
        optimized_find_candidates(b, wrong_recv, fld, dom, cfg)
    short = build_cache([b.receiver], cfg.grid, 1.0, ctl, dom, fld, mesh, n_r=100)
    with pytest.raises(StaleCache):
        optimized_find_candidates(b, short, fld, dom, cfg)


def test_cache_file_roundtrip(tmp_path, small_scene):
    fld, dom, mesh, ctl = small_scene
    grid = AngleGrid(phi_lo=1.2, phi_hi=1.8, n_phi=2, theta_lo=0.0, theta_hi=1.0,
                     n_theta=3)
    table = build_cache([[0, 0, 0], [1, 0, 0]], grid, 1.5, ctl, dom, fld, mesh, n_r=20)
    path = tmp_path / "cache.txt"
    save_cache(path, table)
    loaded = load_cache(path)
    assert loaded.mesh == table.mesh
    assert loaded.budget == table.budget and loaded.n_r == table.n_r
    for name in ("pointid", "rayid", "receiverid", "region", "t"):
        assert np.array_equal(getattr(loaded, name), getattr(table, name))
    assert np.array_equal(loaded.xyz, table.xyz)
    assert np.array_equal(loaded.receivers, table.receivers)


def test_seeded_batch_of_one_matches_plain():
    fld, dom, ctl, cfg, b = ellipse_setup()
    plain = find_candidates(b, fld, dom, cfg, data_id=0)
    seeded = seeded_find_candidates([b], fld, dom, cfg)
    assert len(plain) == len(seeded)
    match_sets(plain, seeded, 1e-12)


def test_seeded_bad_seed_recovers_by_expansion():
    fld, dom, ctl, cfg, b = ellipse_setup()
    plain = find_candidates(b, fld, dom, cfg, data_id=0)
    # injected seed points at the wrong end of the grid; window doubling must
    # reach the true receiver angle and reproduce the unseeded result
    seeded = seeded_find_candidates([b], fld, dom, cfg, seed_angles=[(HALF_PI, 2.31)])
    assert len(seeded) == len(plain)
    match_sets(plain, seeded, cfg.eps1)


def test_seeded_rejects_scattered_batch():
    fld, dom, ctl, cfg, b = ellipse_setup()
    far = DataPoint(transmitter=b.transmitter, receiver=b.receiver, phi=b.phi,
                    theta=b.theta + 1.0, t=b.t, period=b.period)
    with pytest.raises(ValueError):
        seeded_find_candidates([b, far], fld, dom, cfg)
