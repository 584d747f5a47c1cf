"""Uniform box cluster trees (octrees built by uniform subdivision).

Every box at level ``l`` is a translate of one reference box, identified
by integer lattice coordinates ``(i, j, k)`` with ``0 <= i, j, k < 2**l``.
Points are reordered internally so that each node owns a contiguous slice
``perm[start:end]`` of original point indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .geometry import AxisBox

ROOT_PADDING = 1e-12
DEFAULT_DEPTH_CAP = 30


class PointOutsideRootError(ValueError):
    pass


class GridCoord(NamedTuple):
    level: int
    i: int
    j: int
    k: int

    @property
    def ijk(self) -> tuple[int, int, int]:
        return (self.i, self.j, self.k)


@dataclass(eq=False)
class ClusterNode:
    box: AxisBox
    coord: GridCoord
    start: int
    end: int
    tree: "ClusterTree" = field(repr=False)
    parent: Optional["ClusterNode"] = field(default=None, repr=False)
    children: list["ClusterNode"] = field(default_factory=list, repr=False)
    # position of the child inside its parent, 4*bx + 2*by + bz
    octant: int = 0
    # position inside tree.levels[level], which is lattice-lexicographic
    ordinal: int = -1

    @property
    def level(self) -> int:
        return self.coord.level

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def index_set(self) -> np.ndarray:
        """Original indices of the points inside this box."""
        return self.tree.perm[self.start:self.end]

    @property
    def points(self) -> np.ndarray:
        return self.tree.sorted_points[self.start:self.end]

    def exact_midpoint(self) -> tuple[Fraction, Fraction, Fraction]:
        """Lattice midpoint ``root.lower + (ijk + 1/2) * side`` in exact arithmetic."""
        side = self.tree.side(self.level)
        lower = self.tree.root_box.lower
        return tuple(
            Fraction(lower[a]) + Fraction(2 * self.coord.ijk[a] + 1, 2) * Fraction(float(side[a]))
            for a in range(3)
        )


class ClusterTree:
    """Result of the uniform subdivision; read-only once built."""

    def __init__(self, points: np.ndarray, root_box: AxisBox, n_max: int, depth_cap: int):
        self.points = points
        self.root_box = root_box
        self.n_max = n_max
        self.depth_cap = depth_cap
        self.perm = np.arange(len(points))
        self.sorted_points = points
        self.root: ClusterNode
        self.levels: list[list[ClusterNode]] = []
        self._by_coord: dict[GridCoord, ClusterNode] = {}

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def leaves(self) -> list[ClusterNode]:
        return [n for level in self.levels for n in level if n.is_leaf]

    @property
    def oversized_leaves(self) -> list[ClusterNode]:
        """Leaves that exceed ``n_max`` because the depth cap was hit."""
        return [n for n in self.leaves if n.size > self.n_max]

    def side(self, level: int) -> np.ndarray:
        """Side lengths of every box at ``level``."""
        return self.root_box.sides / 2.0**level

    def diameter(self, level: int) -> float:
        """q_l, the common diameter of all boxes at ``level``."""
        return float(np.sqrt(np.sum(self.side(level) ** 2)))

    def box_lower(self, level: int, ijk) -> np.ndarray:
        return np.asarray(self.root_box.lower) + np.asarray(ijk) * self.side(level)

    def make_box(self, coord: GridCoord) -> AxisBox:
        lo = self.box_lower(coord.level, coord.ijk)
        hi = self.box_lower(coord.level, np.add(coord.ijk, 1))
        return AxisBox(tuple(lo), tuple(hi))

    def node_at(self, coord) -> Optional[ClusterNode]:
        return self._by_coord.get(GridCoord(*coord))

    def level_coords(self, level: int) -> np.ndarray:
        """Integer array ``(n_boxes, 3)`` of lattice coordinates at ``level``."""
        return np.array([n.coord.ijk for n in self.levels[level]], dtype=np.int64).reshape(-1, 3)

    def level_leaf_mask(self, level: int) -> np.ndarray:
        return np.array([n.is_leaf for n in self.levels[level]], dtype=bool)

    def gather(self, v: np.ndarray) -> np.ndarray:
        """Reorder an externally indexed vector into tree order."""
        return np.asarray(v)[self.perm]

    def scatter(self, w: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`gather`."""
        out = np.empty_like(w)
        out[self.perm] = w
        return out


def padded_root(root: AxisBox) -> AxisBox:
    lo = np.asarray(root.lower) - ROOT_PADDING * root.sides
    return AxisBox(tuple(lo), root.upper)


def bounding_cube(points: np.ndarray) -> AxisBox:
    """Smallest axis-parallel cube around ``points`` (closed)."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    side = float(np.max(hi - lo))
    if side == 0.0:
        side = 1.0
    center = 0.5 * (lo + hi)
    return AxisBox(tuple(center - side / 2), tuple(center + side / 2))


def build_cluster_tree(points, root: Optional[AxisBox] = None, n_max: int = 512,
                       depth_cap: int = DEFAULT_DEPTH_CAP) -> ClusterTree:
    """Build the uniform box cluster tree over ``points``.

    A box is subdivided into its 8 half-open octants iff it holds more
    than ``n_max`` points and lies above ``depth_cap``; only nonempty
    octants become children.  The root is padded on its lower faces by a
    relative ``1e-12`` so points on those faces are inside.

    Parameters
    ----------
    points : array_like, shape (n, 3)
    root : AxisBox, optional
        Root box; defaults to the bounding cube of the points.
    n_max : int
        Maximal number of points in a leaf.
    depth_cap : int
        Safety limit on the depth for clustered duplicate points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    if len(pts) == 0:
        raise ValueError("cannot build a cluster tree over an empty point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if root is None:
        root = bounding_cube(pts)
    root = padded_root(root)
    outside = ~root.contains(pts)
    if np.any(outside):
        first = int(np.flatnonzero(outside)[0])
        raise PointOutsideRootError(f"point {first} = {pts[first]} lies outside the root box {root}")

    tree = ClusterTree(pts, root, n_max, depth_cap)
    perm = np.arange(len(pts))
    tree.root = ClusterNode(root, GridCoord(0, 0, 0, 0), 0, len(pts), tree)
    nodes = [tree.root]

    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.size <= n_max or node.level >= depth_cap:
            continue
        lvl = node.level + 1
        ijk = np.asarray(node.coord.ijk)
        # (a, c] is the lower child, (c, b] the upper one
        center = tree.box_lower(lvl, 2 * ijk + 1)
        idx = perm[node.start:node.end]
        upper_bits = (pts[idx] > center).astype(np.int64)
        octant = 4 * upper_bits[:, 0] + 2 * upper_bits[:, 1] + upper_bits[:, 2]
        order = np.argsort(octant, kind="stable")
        perm[node.start:node.end] = idx[order]
        counts = np.bincount(octant, minlength=8)
        offset = node.start
        for o in range(8):
            if counts[o] == 0:
                continue
            bits = np.array([(o >> 2) & 1, (o >> 1) & 1, o & 1])
            coord = GridCoord(lvl, *(int(v) for v in 2 * ijk + bits))
            child = ClusterNode(tree.make_box(coord), coord, offset, offset + int(counts[o]),
                                tree, parent=node, octant=o)
            offset += int(counts[o])
            node.children.append(child)
            nodes.append(child)
        # children are pushed in reverse so that the pop order is octant order
        stack.extend(reversed(node.children))

    depth = max(n.level for n in nodes)
    tree.levels = [[] for _ in range(depth + 1)]
    for n in nodes:
        tree.levels[n.level].append(n)
    for level in tree.levels:
        level.sort(key=lambda n: n.coord.ijk)
        for pos, n in enumerate(level):
            n.ordinal = pos
    tree._by_coord = {n.coord: n for n in nodes}
    tree.perm = perm
    tree.sorted_points = pts[perm]
    return tree


def read_points(path) -> np.ndarray:
    """Read a whitespace separated ``x y z`` text file."""
    data = np.loadtxt(Path(path), dtype=float, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no points")
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns, found {data.shape[1]}")
    return data
