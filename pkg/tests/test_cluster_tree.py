import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dirfmm.bench import GRID_ROOT, generate_grid_points
from dirfmm.cluster_tree import (
    PointOutsideRootError,
    build_cluster_tree,
    read_points,
)
from dirfmm.geometry import AxisBox


def check_tree(tree):
    pts = tree.points
    for level_nodes in tree.levels:
        level = level_nodes[0].level
        # lattice side is exact; float corners carry rounding of lower + ijk * side
        np.testing.assert_array_equal(tree.side(level), tree.root_box.sides / 2**level)
        sides = np.array([n.box.sides for n in level_nodes])
        scale = np.max(np.abs([tree.root_box.lower, tree.root_box.upper]))
        np.testing.assert_allclose(sides, np.broadcast_to(tree.side(level), sides.shape), rtol=0,
                                   atol=8 * np.finfo(float).eps * scale)
        for n in level_nodes:
            assert np.all(n.box.contains(pts[n.index_set]))
            if n.children:
                merged = np.sort(np.concatenate([c.index_set for c in n.children]))
                np.testing.assert_array_equal(merged, np.sort(n.index_set))
                assert [c.octant for c in n.children] == sorted(c.octant for c in n.children)
            elif n.level < tree.depth_cap:
                assert n.size <= tree.n_max
    np.testing.assert_array_equal(np.sort(tree.perm), np.arange(len(pts)))


def test_single_leaf():
    pts = np.random.default_rng(0).uniform(-1, 1, (512, 3))
    tree = build_cluster_tree(pts, n_max=512)
    assert tree.depth == 0 and tree.root.is_leaf


def test_one_point():
    tree = build_cluster_tree([[0.3, 0.2, 0.1]], GRID_ROOT)
    assert tree.depth == 0 and tree.root.size == 1


def test_grid_k5_full_octree():
    pts = generate_grid_points(5)
    tree = build_cluster_tree(pts, GRID_ROOT, n_max=512)
    assert tree.depth == 2
    assert len(tree.leaves) == 64
    assert all(leaf.size == 512 for leaf in tree.leaves)
    node = tree.node_at((2, 3, 3, 3))
    inside = np.all((pts > 0.5) & (pts <= 1.0), axis=1)
    assert node.size == 512 == np.count_nonzero(inside)
    np.testing.assert_array_equal(np.sort(node.index_set), np.flatnonzero(inside))
    check_tree(tree)


def test_node_at():
    pts = np.array([[-0.9, -0.9, -0.9], [-0.8, -0.9, -0.9], [0.9, 0.9, 0.9]])
    tree = build_cluster_tree(pts, GRID_ROOT, n_max=1)
    assert tree.node_at((0, 0, 0, 0)) is tree.root
    assert tree.node_at((1, 0, 1, 0)) is None
    assert tree.node_at((1, 1, 1, 1)).size == 1


def test_errors():
    with pytest.raises(ValueError):
        build_cluster_tree(np.zeros((0, 3)))
    with pytest.raises(PointOutsideRootError):
        build_cluster_tree([[2.0, 0, 0]], GRID_ROOT)
    with pytest.raises(ValueError):
        build_cluster_tree([[0, 0, 0]], n_max=0)


def test_lower_face_point_is_inside():
    tree = build_cluster_tree([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], GRID_ROOT, n_max=1)
    assert tree.root.size == 2 and len(tree.leaves) == 2


def test_depth_cap_with_duplicates():
    pts = np.zeros((10, 3))
    tree = build_cluster_tree(pts, GRID_ROOT, n_max=2, depth_cap=4)
    assert tree.depth == 4
    assert [n.size for n in tree.oversized_leaves] == [10]


def test_half_open_split():
    # a point on the splitting planes belongs to the lower child
    probe = build_cluster_tree([[0.5, 0.5, 0.5]], GRID_ROOT)
    center = probe.box_lower(1, (1, 1, 1))
    tree = build_cluster_tree([center, [0.5, 0.5, 0.5]], GRID_ROOT, n_max=1)
    assert {n.coord.ijk: n.size for n in tree.levels[1]} == {(0, 0, 0): 1, (1, 1, 1): 1}


def test_gather_scatter(rng):
    pts = rng.uniform(-1, 1, (300, 3))
    tree = build_cluster_tree(pts, n_max=20)
    v = rng.standard_normal(300)
    np.testing.assert_array_equal(tree.scatter(tree.gather(v)), v)
    np.testing.assert_array_equal(tree.sorted_points, pts[tree.perm])


def test_read_points(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("0 0 0\n1 2 3\n")
    np.testing.assert_array_equal(read_points(f), [[0, 0, 0], [1, 2, 3]])
    f.write_text("1 2\n")
    with pytest.raises(ValueError):
        read_points(f)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 400), st.just(3)), elements=st.floats(-1, 1)),
       st.integers(1, 40))
def test_tree_invariants(pts, n_max):
    tree = build_cluster_tree(pts, AxisBox((-1, -1, -1), (1, 1, 1)), n_max=n_max, depth_cap=12)
    check_tree(tree)
    assert tree.diameter(tree.depth) == pytest.approx(tree.diameter(0) / 2**tree.depth)
