"""Point sets, allocations, graph construction, resolution/degree/error formulas."""

import math

import numpy as np
import pytest

import hardgrid as hg
from hardgrid import rng
from hardgrid.discretize import (EmptyCellError, GraphSizeError,
                                 HypercubePartitioning)


def test_smallest_feasible_resolution_examples():
    assert hg.smallest_feasible_resolution(2.0, 3.2) == pytest.approx(3.5)
    assert hg.smallest_feasible_resolution(1.0, 10.0) == pytest.approx(10.0)
    assert hg.smallest_feasible_resolution(0.5, 1.0) == pytest.approx(2.0)


def test_resolution_for_error_examples():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)  # lam_min = 0.5
    rho = hg.resolution_for_error(m, 1.0)
    assert rho == pytest.approx(48.0 * 8.0)
    rho_half = hg.resolution_for_error(m, 0.5)
    assert rho_half == pytest.approx(768.0)

    # d = 2 scales like (1/eps)^(1/2)
    m2 = hg.ModelSpec.hard_sphere(2, 1.0, 0.25, 1.0)
    r1 = hg.resolution_for_error(m2, 1.0)
    r2 = hg.resolution_for_error(m2, 0.25)
    assert r2 / r1 == pytest.approx(2.0, rel=0.05)

    with pytest.raises(ValueError):
        hg.resolution_for_error(hg.ModelSpec.hard_sphere(1, 1.0, 0.0, 1.0), 0.5)


def test_resolution_for_error_adaptive_never_larger():
    for eps_d in (1.0, 0.5, 0.2, 0.1):
        m = hg.ModelSpec.hard_sphere(1, 10.0, 0.25, 1.0)
        closed = hg.resolution_for_error(m, eps_d)
        adaptive = hg.resolution_for_error(m, eps_d, adaptive=True)
        assert adaptive <= closed
        # the adaptive resolution still satisfies the two-sided budget
        n = round(adaptive * 10.0)
        factor = hg.discretization_error_factor(m, n, 0.0, math.sqrt(1) / adaptive)
        assert factor <= math.expm1(eps_d) + 1e-12


def test_canonical_allocate_examples():
    assert hg.canonical_allocate(np.array([0.234]), 10.0) == pytest.approx([0.2])
    assert hg.canonical_allocate(np.array([0.0, 0.0]), 7.0) == pytest.approx([0, 0])
    y = np.array([0.999])
    snapped = hg.canonical_allocate(y, 10.0)
    assert snapped == pytest.approx([0.9])
    assert abs(y[0] - snapped[0]) <= 0.1


def test_canonical_allocation_property():
    stream = rng.Stream(13)
    for d, rho, side in ((1, 10.0, 1.0), (2, 5.0, 2.0), (3, 4.0, 1.0)):
        pts = hg.CanonicalPointSet(hg.Region(d, side), rho)
        assert pts.size == round(side * rho) ** d
        ys = stream.uniforms(10_000 * d).reshape(-1, d) * side
        snapped = hg.canonical_allocate(ys, rho)
        dist = np.linalg.norm(ys - snapped, axis=1)
        assert np.all(dist <= math.sqrt(d) / rho + 1e-12)
        # cell volume is exactly vol / |X|
        assert (1.0 / rho) ** d == pytest.approx(side ** d / pts.size, rel=1e-12)


def test_canonical_point_set_feasibility():
    with pytest.raises(ValueError):
        hg.CanonicalPointSet(hg.Region(1, 1.0), 10.5)
    pts = hg.CanonicalPointSet(hg.Region(2, 0.5), 4.0)
    assert pts.points_per_axis == 2 and pts.size == 4
    pos = pts.positions()
    assert pos.shape == (4, 2)
    assert np.all(pos >= 0) and np.all(pos < 0.5)
    assert pts.point(3) == pytest.approx(pos[3])


def test_build_graph_examples():
    # interior vertex on the 1D grid: degree 8 at rho=10, threshold 0.5
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    g = hg.build_graph(m, hg.CanonicalPointSet(m.region, 10.0))
    assert g.num_vertices == 10
    deg = g.degrees()
    assert deg[5] == 8 and deg.max() == 8

    # pair at exactly the threshold distance: no edge
    m2 = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    g2 = hg.build_graph(m2, np.array([[0.25], [0.75]]))
    assert g2.max_degree() == 0

    # zero interactions, two types at the same point: not adjacent
    m3 = hg.ModelSpec.widom_rowlinson(1, 1.0, [0.0, 0.0], [1.0, 1.0])
    g3 = hg.build_graph(m3, np.array([[0.5]]))
    assert g3.num_vertices == 2 and g3.max_degree() == 0

    with pytest.raises(ValueError):
        hg.build_graph(m, np.empty((0, 1)))


def test_vertex_count_and_weights():
    m = hg.ModelSpec.widom_rowlinson(2, 1.5, [0.1, 0.2], [1.0, 0.5])
    pts = hg.CanonicalPointSet(m.region, 4.0)
    g = hg.build_graph(m, pts)
    assert g.num_vertices == m.q * round(4.0 * 1.5) ** 2
    np.testing.assert_allclose(g.weights,
                               m.fugacities.values * m.volume() / pts.size)


def test_edge_symmetry_and_oracle_equivalence():
    stream = rng.Stream(17)
    for trial in range(25):
        d = 1 + (trial % 3)
        n = 20 + stream.below(180)
        q = 1 + (trial % 2)
        if q == 1:
            m = hg.ModelSpec.hard_sphere(d, 1.0, 0.04 + 0.1 * stream.uniform(), 1.0)
        else:
            m = hg.ModelSpec.widom_rowlinson(
                d, 1.0, [0.05 + 0.1 * stream.uniform(),
                         0.05 + 0.1 * stream.uniform()], [1.0, 0.7])
        pts = hg.RandomPointSet(m.region, n, 9000 + trial)
        g = hg.build_graph(m, pts)
        offsets, neighbors = g.vertex_csr()

        # all-pairs reference adjacency over packed vertex ids
        pos = pts.points
        inter = m.interaction.entries
        ref = {v: set() for v in range(g.num_vertices)}
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                d2 = float(np.sum((pos[i] - pos[j]) ** 2))
                for ti in range(q):
                    for tj in range(q):
                        if d2 < inter[ti, tj] ** 2:
                            ref[i * q + ti].add(j * q + tj)
        for i in range(n):
            for ti in range(q):
                for tj in range(q):
                    if ti != tj and inter[ti, tj] > 0:
                        ref[i * q + ti].add(i * q + tj)

        for v in range(g.num_vertices):
            got = set(int(u) for u in neighbors[offsets[v]:offsets[v + 1]])
            assert got == ref[v], (trial, v)
        # symmetry comes along for free once both directions match the oracle
        for v in range(g.num_vertices):
            for u in ref[v]:
                assert v in ref[u]


def test_degree_bound_examples():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    rep = hg.degree_bound(m, 10.0, 1.0)
    assert rep.valid  # 10 >= 2 * 1 / 0.5 = 4
    assert rep.bounds[0, 0] == pytest.approx(20.0)
    g = hg.build_graph(m, hg.CanonicalPointSet(m.region, 10.0))
    assert g.max_degree() <= rep.bounds[0, 0]

    rep_small = hg.degree_bound(m, 10.0, 0.2)
    assert not rep_small.valid  # needs rho >= 20

    m2 = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    rep2 = hg.degree_bound(m2, 100.0, 0.1)
    assert rep2.bounds[0, 0] == pytest.approx(110.0)
    g2 = hg.build_graph(m2, hg.CanonicalPointSet(m2.region, 100.0))
    assert g2.max_degree() == 98


def test_degree_bounds_randomized():
    stream = rng.Stream(19)
    checked = 0
    for _ in range(40):
        d = 1 + stream.below(2)
        lam = 0.2 + 0.4 * stream.uniform()
        gamma = 0.25 + 0.75 * stream.uniform()
        m = hg.ModelSpec.hard_sphere(d, 1.0, lam / 2, 1.0)
        min_rho = 2 * d ** 1.5 / (gamma * lam)
        rho = hg.smallest_feasible_resolution(1.0, min_rho * (1 + stream.uniform()))
        if rho ** d > 40_000:
            continue
        rep = hg.degree_bound(m, rho, gamma)
        assert rep.valid
        g = hg.build_graph(m, hg.CanonicalPointSet(m.region, rho),
                           pair_scan_cap=2_000_000_000)
        for v in range(g.num_vertices):
            per_type = g.per_type_degree(v)
            assert np.all(per_type <= rep.bounds[v % m.q] + 1e-9)
        checked += 1
    assert checked >= 10


def test_lattice_points_examples():
    assert hg.lattice_points_in_ball(1, 2.5) == 5
    assert hg.lattice_points_in_ball(2, 1.5) == 9
    # the boundary is excluded: radius 1 keeps only the origin
    assert hg.lattice_points_in_ball(2, 1.0) == 1
    count = hg.lattice_points_in_ball(2, 20.0)
    gamma = 2 * 2 ** 1.5 / 20.0
    assert count <= (1 + gamma) * hg.ball_volume(2, 20.0)
    assert hg.lattice_points_in_ball(3, 1.5) == 19  # norms 0, 1, 2
    with pytest.raises(ValueError):
        hg.lattice_points_in_ball(4, 1.0)
    with pytest.raises(ValueError):
        hg.lattice_points_in_ball(2, 2000.0)


def test_lattice_points_brute_force():
    stream = rng.Stream(31)
    for _ in range(20):
        d = 1 + stream.below(3)
        s = 0.5 + 6.0 * stream.uniform()
        count = hg.lattice_points_in_ball(d, s)
        rng_int = range(-8, 9)
        if d == 1:
            brute = sum(1 for x in rng_int if x * x < s * s)
        elif d == 2:
            brute = sum(1 for x in rng_int for y in rng_int
                        if x * x + y * y < s * s)
        else:
            brute = sum(1 for x in rng_int for y in rng_int for z in rng_int
                        if x * x + y * y + z * z < s * s)
        assert count == brute, (d, s)


def test_error_factor_examples():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)  # lam_min = 0.5, vol = 1
    f = hg.discretization_error_factor(m, 800, 0.0, 0.5 / 400)
    assert f == pytest.approx(math.expm1(8 / 800 + 0.01), rel=1e-12)

    f2 = hg.discretization_error_factor(m, 10 ** 9, 0.01, 0.0)
    assert f2 == pytest.approx(math.expm1(0.02 + 8e-9), rel=1e-9)

    # vanishes as n grows and (delta, eps) -> 0
    assert hg.discretization_error_factor(m, 10 ** 12, 0.0, 0.0) < 1e-10

    with pytest.raises(ValueError):
        hg.discretization_error_factor(m, 2, 0.0, 0.0)   # n too small
    with pytest.raises(ValueError):
        hg.discretization_error_factor(m, 800, 0.6, 0.0)
    with pytest.raises(ValueError):
        hg.discretization_error_factor(m, 800, 0.0, 0.3)


def test_error_factor_monotonicity():
    m = hg.ModelSpec.hard_sphere(2, 2.0, 0.2, 0.8)
    lam_min = m.interaction.lambda_min()
    base = hg.discretization_error_factor(m, 1000, 0.1, lam_min / 8)
    assert hg.discretization_error_factor(m, 1000, 0.2, lam_min / 8) >= base
    assert hg.discretization_error_factor(m, 1000, 0.1, lam_min / 4) >= base
    assert hg.discretization_error_factor(m, 2000, 0.1, lam_min / 8) <= base


def test_partition_allocation_example():
    # d=1, 4 cells, counts (3,2,3,2), n=10 -> delta = 0.25
    region = hg.Region(1, 1.0)
    part = HypercubePartitioning(region, 4)
    pts_raw = np.array([0.01, 0.05, 0.2, 0.30, 0.45, 0.55, 0.6, 0.7,
                        0.8, 0.9])[:, None]
    rps = hg.RandomPointSet.__new__(hg.RandomPointSet)
    object.__setattr__(rps, "region", region)
    object.__setattr__(rps, "n", 10)
    object.__setattr__(rps, "seed", 0)
    object.__setattr__(rps, "points", pts_raw)
    alloc = hg.partition_allocation_from_random(rps, part)
    assert alloc.delta == pytest.approx(0.25)
    assert alloc.eps == pytest.approx(0.25)

    # empty cell fails with the cell index
    rps2 = hg.RandomPointSet.__new__(hg.RandomPointSet)
    object.__setattr__(rps2, "region", region)
    object.__setattr__(rps2, "n", 2)
    object.__setattr__(rps2, "seed", 0)
    object.__setattr__(rps2, "points", np.array([[0.1], [0.9]]))
    with pytest.raises(EmptyCellError) as err:
        hg.partition_allocation_from_random(rps2, part)
    assert err.value.cell_index in (1, 2)


def test_partition_allocation_balanced_delta_zero():
    region = hg.Region(1, 1.0)
    part = HypercubePartitioning(region, 4)
    rps = hg.RandomPointSet.__new__(hg.RandomPointSet)
    object.__setattr__(rps, "region", region)
    object.__setattr__(rps, "n", 8)
    object.__setattr__(rps, "seed", 0)
    object.__setattr__(rps, "points",
                       np.array([0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9])[:, None])
    alloc = hg.partition_allocation_from_random(rps, part)
    assert alloc.delta == pytest.approx(0.0)


def test_allocation_preimage_geometry():
    region = hg.Region(2, 1.0)
    alloc = hg.Allocation.canonical(region, 5.0)
    assert alloc.delta == 0.0 and alloc.eps == pytest.approx(math.sqrt(2) / 5)
    pt = alloc.preimage_sample(7, np.array([0.5, 0.5]))
    # index 7 on a 5x5 grid -> cell (1, 2), origin (0.2, 0.4)
    assert pt == pytest.approx([0.2 + 0.1, 0.4 + 0.1])

    part = HypercubePartitioning(hg.Region(1, 1.0), 2)
    rps = hg.RandomPointSet(hg.Region(1, 1.0), 12, 5)
    alloc2 = hg.partition_allocation_from_random(rps, part)
    for p in range(12):
        sample = alloc2.preimage_sample(p, np.array([0.5]))
        # the sample stays inside the owning cell
        assert alloc2.point_cell[p] == part.cell_of(sample[None, :])[0]


def test_graph_size_cap():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.3, 1.0)
    pts = hg.RandomPointSet(m.region, 2000, 3)
    with pytest.raises(GraphSizeError) as err:
        hg.build_graph(m, pts, pair_scan_cap=10_000)
    assert err.value.n_points == 2000


def test_graph_export_roundtrip(tmp_path):
    m = hg.ModelSpec.widom_rowlinson(2, 1.0, [0.1, 0.15], [1.0, 0.5])
    pts = hg.RandomPointSet(m.region, 40, 21)
    g = hg.build_graph(m, pts)
    path = tmp_path / "g.bin"
    g.write_binary(str(path))
    g2 = hg.load_graph(str(path))
    np.testing.assert_array_equal(g.point_offsets, g2.point_offsets)
    np.testing.assert_array_equal(g.point_neighbors, g2.point_neighbors)
    np.testing.assert_allclose(g.positions, g2.positions)
    np.testing.assert_allclose(g.weights, g2.weights)
    np.testing.assert_allclose(g.point_dist2, g2.point_dist2)
    o1, n1 = g.vertex_csr()
    o2, n2 = g2.vertex_csr()
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(n1, n2)

    txt = tmp_path / "g.edges"
    g.write_edgelist(str(txt))
    lines = txt.read_text().strip().splitlines()
    n_edges = sum(1 for line in lines if not line.startswith("#"))
    assert n_edges == int(np.diff(o1).sum()) // 2
