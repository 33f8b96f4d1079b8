import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthlidar.geometry import EPS_T, build_bvh, linear_scan, nearest_hit, ray_triangle, trace

from .conftest import random_rays, random_triangles
from .oracles import brute_nearest, brute_ray_triangle

TRI = np.array([[-1, -1, 5], [1, -1, 5], [0, 1, 5]], dtype=float)


def test_ray_triangle_basic():
    t, p = ray_triangle((0, 0, 0), (0, 0, 1), TRI)
    assert t == pytest.approx(5.0)
    np.testing.assert_allclose(p, [0, 0, 5])


def test_back_face_hits():
    t, _ = ray_triangle((0, 0, 10), (0, 0, -1), TRI)
    assert t == pytest.approx(5.0)


def test_parallel_miss():
    assert ray_triangle((0, 0, 0), (1, 0, 0), TRI) is None


def test_behind_and_epsilon():
    assert ray_triangle((0, 0, 6), (0, 0, 1), TRI) is None
    assert ray_triangle((0, 0, 5 - EPS_T / 2), (0, 0, 1), TRI) is None


def test_degenerate_never_hits():
    tri = np.array([[0, 0, 5], [1, 0, 5], [2, 0, 5]], dtype=float)
    assert ray_triangle((0.5, 0, 0), (0, 0, 1), tri) is None


def test_edge_counts():
    # ray through the midpoint of the edge v0-v1
    t, _ = ray_triangle((0, -1, 0), (0, 0, 1), TRI)
    assert t == pytest.approx(5.0)


def test_random_pairs_match_brute_force():
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(10_000):
        tri = rng.normal(0, 2, (3, 3))
        o = rng.normal(0, 4, 3)
        # aim half the rays near the triangle so both branches get exercised
        d = tri.mean(0) + rng.normal(0, 1.5, 3) - o if rng.random() < 0.5 else rng.normal(size=3)
        d /= np.linalg.norm(d)
        got = ray_triangle(o, d, tri)
        want = brute_ray_triangle(o, d, tri)
        assert (got is None) == (want is None)
        if got is not None:
            hits += 1
            assert got[0] == pytest.approx(want, rel=1e-7)
    assert hits > 1000


def test_empty_bvh():
    bvh = build_bvh(np.zeros((0, 3, 3)))
    assert nearest_hit(bvh, (0, 0, 0), (0, 0, 1), 80.0) is None
    t, idx = trace(bvh, np.zeros((1, 3)), np.array([[0, 0, 1.0]] * 5), 80.0)
    assert np.all(idx == -1) and np.all(np.isnan(t))


def test_single_triangle_bvh():
    bvh = build_bvh(TRI[None])
    assert bvh.n_nodes == 1
    h = nearest_hit(bvh, (0.1, 0.1, 0), (0, 0, 1), 80.0)
    t, p = ray_triangle((0.1, 0.1, 0), (0, 0, 1), TRI)
    assert h.t == t and np.array_equal(h.point, p) and h.triangle_index == 0


def test_nearest_of_two():
    near = TRI.copy()
    near[:, 2] = 3
    far = TRI.copy()
    far[:, 2] = 7
    bvh = build_bvh(np.stack([far, near]), object_refs=[5, 9])
    h = nearest_hit(bvh, (0, 0, 0), (0, 0, 1), 80.0)
    assert h.t == pytest.approx(3.0) and h.object_ref == 9 and h.triangle_index == 1


def test_range_cutoff():
    tri = TRI.copy()
    tri[:, 2] = 90
    bvh = build_bvh(tri[None])
    assert nearest_hit(bvh, (0, 0, 0), (0, 0, 1), 80.0) is None
    assert nearest_hit(bvh, (0, 0, 0), (0, 0, 1), 90.0) is not None


def test_t_max_must_be_positive():
    with pytest.raises(ValueError):
        nearest_hit(build_bvh(TRI[None]), (0, 0, 0), (0, 0, 1), 0.0)


def test_tie_break_object_then_index():
    tris = np.stack([TRI, TRI, TRI])
    bvh = build_bvh(tris, object_refs=[4, 2, 2])
    h = nearest_hit(bvh, (0, 0, 0), (0, 0, 1), 80.0)
    assert (h.object_ref, h.triangle_index) == (2, 1)


def test_bvh_boxes_contain_triangles():
    rng = np.random.default_rng(3)
    tris = random_triangles(rng, 500)
    bvh = build_bvh(tris)
    seen = np.zeros(len(tris), dtype=int)

    def walk(node, lo, hi):
        assert np.all(bvh.box_min[node] >= lo - 1e-9) and np.all(bvh.box_max[node] <= hi + 1e-9)
        if bvh.count[node] > 0:
            start = bvh.left[node]
            for slot in range(start, start + bvh.count[node]):
                tri = tris[bvh.order[slot]]
                assert np.all(tri.min(0) >= bvh.box_min[node]) and np.all(tri.max(0) <= bvh.box_max[node])
                seen[bvh.order[slot]] += 1
            assert bvh.count[node] <= 4
        else:
            walk(bvh.left[node], bvh.box_min[node], bvh.box_max[node])
            walk(bvh.right[node], bvh.box_min[node], bvh.box_max[node])

    walk(0, bvh.box_min[0], bvh.box_max[0])
    assert np.all(seen == 1)


def test_bvh_deterministic():
    rng = np.random.default_rng(4)
    tris = random_triangles(rng, 300)
    a, b = build_bvh(tris), build_bvh(tris.copy())
    for f in ("box_min", "box_max", "left", "right", "count", "order"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_bvh_matches_independent_oracle():
    rng = np.random.default_rng(5)
    tris = random_triangles(rng, 400)
    refs = rng.integers(0, 50, len(tris))
    o, d = random_rays(rng, 600)
    bvh = build_bvh(tris, refs)
    t, idx = trace(bvh, o, d, 30.0)
    for i in range(len(d)):
        want = brute_nearest(tris, refs, o[i], d[i], 30.0)
        if want is None:
            assert idx[i] == -1
        else:
            assert idx[i] == want[1]
            assert t[i] == pytest.approx(want[0], rel=1e-9)


def test_hit_point_reconstruction():
    rng = np.random.default_rng(6)
    tris = random_triangles(rng, 200)
    bvh = build_bvh(tris)
    o, d = random_rays(rng, 200)
    for i in range(len(d)):
        h = nearest_hit(bvh, o[i], d[i], 50.0)
        if h is not None:
            np.testing.assert_allclose(h.point, o[i] + h.t * d[i], rtol=1e-9)
            assert EPS_T < h.t <= 50.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 60))
def test_property_bvh_equals_linear_scan(seed, n):
    rng = np.random.default_rng(seed)
    tris = random_triangles(rng, n, spread=4.0)
    refs = rng.integers(0, 5, n)
    o, d = random_rays(rng, 64, spread=6.0)
    t1, i1 = trace(build_bvh(tris, refs), o, d, 20.0)
    t2, i2 = linear_scan(tris, o, d, 20.0, refs)
    assert np.array_equal(i1, i2)
    assert np.array_equal(t1, t2, equal_nan=True)
