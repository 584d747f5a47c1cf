"""Block tree over two cluster trees, leaf classification, direction sets.

The recursion of the block construction is carried out level by level:
all candidate pairs of a level are classified at once and the refined
pairs form the candidates of the next level.  Within a level, blocks are
kept in lexicographic ``(t coord, s coord)`` order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .cluster_tree import ClusterNode, ClusterTree
from .directions import DirectionId, DirectionTable, block_direction
from .geometry import box_diameter, box_distance

NEAR_EQUALITY_RTOL = 1e-12


class BlockStatus(enum.IntEnum):
    INTERNAL = 0
    ADMISSIBLE = 1
    INADMISSIBLE = 2


@dataclass(frozen=True)
class AdmissibilityParams:
    eta2: float
    kappa: float

    def __post_init__(self):
        if not self.eta2 > 0:
            raise ValueError("eta2 must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class Block:
    t: ClusterNode
    s: ClusterNode
    level: int
    status: BlockStatus
    direction: Optional[DirectionId] = None

    @property
    def offset(self) -> tuple[int, int, int]:
        return tuple(a - b for a, b in zip(self.t.coord.ijk, self.s.coord.ijk))


def is_admissible(t: ClusterNode, s: ClusterNode, p: AdmissibilityParams) -> bool:
    """Separation and cone-distance criteria, both with inclusive ``<=``."""
    diam = max(box_diameter(t.box), box_diameter(s.box))
    dist = box_distance(t.box, s.box)
    return diam <= p.eta2 * dist and p.kappa * diam**2 <= p.eta2 * dist


@dataclass
class BlockLevel:
    """All blocks of one level of the block tree, as parallel arrays."""

    level: int
    t_ord: np.ndarray
    s_ord: np.ndarray
    status: np.ndarray
    # direction slot of admissible blocks, -1 otherwise
    slot: np.ndarray

    def __len__(self):
        return len(self.t_ord)

    def mask(self, status: BlockStatus) -> np.ndarray:
        return self.status == status


@dataclass
class DirectionSets:
    """Active and inherited direction slots of every box of one tree.

    ``active[l]`` and ``inherited[l]`` are boolean arrays of shape
    ``(n_boxes(l), n_slots(l))``.
    """

    tree: ClusterTree
    active: list[np.ndarray]
    inherited: list[np.ndarray]

    def union(self, level: int) -> np.ndarray:
        return self.active[level] | self.inherited[level]

    def active_of(self, node: ClusterNode) -> set[int]:
        return set(np.flatnonzero(self.active[node.level][node.ordinal]).tolist())

    def inherited_of(self, node: ClusterNode) -> set[int]:
        return set(np.flatnonzero(self.inherited[node.level][node.ordinal]).tolist())

    def all_of(self, node: ClusterNode) -> set[int]:
        return self.active_of(node) | self.inherited_of(node)

    def total_pairs(self) -> int:
        """Number of (box, direction) pairs carrying moments or locals."""
        return int(sum(self.union(l).sum() for l in range(len(self.active))))


@dataclass
class BlockTree:
    t_tree: ClusterTree
    s_tree: ClusterTree
    params: AdmissibilityParams
    table: DirectionTable
    levels: list[BlockLevel]
    target_dirs: DirectionSets = field(repr=False)
    source_dirs: DirectionSets = field(repr=False)
    # pairs whose admissibility inequality holds with near equality
    near_equality: int = 0

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def root(self) -> Block:
        return self._block(0, 0)

    def _block(self, level: int, pos: int) -> Block:
        lv = self.levels[level]
        status = BlockStatus(int(lv.status[pos]))
        direction = DirectionId(level, int(lv.slot[pos])) if status == BlockStatus.ADMISSIBLE else None
        return Block(self.t_tree.levels[level][lv.t_ord[pos]], self.s_tree.levels[level][lv.s_ord[pos]],
                     level, status, direction)

    def blocks(self, status: Optional[BlockStatus] = None) -> list[Block]:
        out = []
        for lv in self.levels:
            positions = range(len(lv)) if status is None else np.flatnonzero(lv.status == status)
            out.extend(self._block(lv.level, int(p)) for p in positions)
        return out

    @cached_property
    def admissible_leaves(self) -> list[Block]:
        return self.blocks(BlockStatus.ADMISSIBLE)

    @cached_property
    def inadmissible_leaves(self) -> list[Block]:
        return self.blocks(BlockStatus.INADMISSIBLE)

    def count(self, status: BlockStatus) -> int:
        return int(sum(np.count_nonzero(lv.status == status) for lv in self.levels))

    @property
    def n_admissible(self) -> int:
        return self.count(BlockStatus.ADMISSIBLE)

    @property
    def n_inadmissible(self) -> int:
        return self.count(BlockStatus.INADMISSIBLE)

    def nearfield_entries(self) -> int:
        """Number of matrix entries inside inadmissible leaves."""
        total = 0
        for lv in self.levels:
            sel = lv.status == BlockStatus.INADMISSIBLE
            if not np.any(sel):
                continue
            t_sizes = np.array([n.size for n in self.t_tree.levels[lv.level]], dtype=np.int64)
            s_sizes = np.array([n.size for n in self.s_tree.levels[lv.level]], dtype=np.int64)
            total += int(np.sum(t_sizes[lv.t_ord[sel]] * s_sizes[lv.s_ord[sel]]))
        return total


def _level_boxes(tree: ClusterTree, level: int) -> tuple[np.ndarray, np.ndarray]:
    coords = tree.level_coords(level)
    return tree.box_lower(level, coords), tree.box_lower(level, coords + 1)


def _classify(t_tree, s_tree, level, t_ord, s_ord, p: AdmissibilityParams):
    t_lo, t_hi = _level_boxes(t_tree, level)
    s_lo, s_hi = _level_boxes(s_tree, level)
    gap = np.maximum(0.0, np.maximum(s_lo[s_ord] - t_hi[t_ord], t_lo[t_ord] - s_hi[s_ord]))
    dist = np.sqrt(np.sum(gap**2, axis=1))
    diam = max(t_tree.diameter(level), s_tree.diameter(level))
    rhs = p.eta2 * dist
    a1 = diam <= rhs
    a3 = p.kappa * diam**2 <= rhs
    near = (np.abs(diam - rhs) <= NEAR_EQUALITY_RTOL * diam) | (
        np.abs(p.kappa * diam**2 - rhs) <= NEAR_EQUALITY_RTOL * p.kappa * diam**2)
    return a1 & a3, int(np.count_nonzero(near))


def _children_ordinals(tree: ClusterTree, level: int) -> list[np.ndarray]:
    return [np.array([c.ordinal for c in n.children], dtype=np.int64) for n in tree.levels[level]]


def _assign_directions(t_tree, s_tree, table, level, t_ord, s_ord) -> np.ndarray:
    slots = np.zeros(len(t_ord), dtype=np.int64)
    if len(t_ord) == 0 or level > table.l_hf:
        return slots
    t_nodes = t_tree.levels[level]
    s_nodes = s_tree.levels[level]
    if np.array_equal(t_tree.root_box.sides, s_tree.root_box.sides):
        # the exact midpoint difference is a function of the lattice offset
        offsets = t_tree.level_coords(level)[t_ord] - s_tree.level_coords(level)[s_ord]
        uniq, first, inverse = np.unique(offsets, axis=0, return_index=True, return_inverse=True)
        per_offset = np.array([
            block_direction(table, level, t_nodes[t_ord[i]], s_nodes[s_ord[i]]).index for i in first
        ], dtype=np.int64)
        return per_offset[inverse.ravel()]
    for i, (a, b) in enumerate(zip(t_ord, s_ord)):
        slots[i] = block_direction(table, level, t_nodes[a], s_nodes[b]).index
    return slots


def build_block_tree(t_tree: ClusterTree, s_tree: ClusterTree, p: AdmissibilityParams,
                     table: DirectionTable) -> BlockTree:
    """Recursive block partition of ``t_tree x s_tree``.

    A pair becomes a leaf when either cluster is a leaf or when it is
    admissible; leaves are admissible iff both criteria hold.  All other
    pairs are refined into every pair of children.
    """
    max_depth = max(t_tree.depth, s_tree.depth)
    if table.max_level < max_depth:
        raise ValueError(f"direction table covers levels up to {table.max_level}, trees need {max_depth}")
    levels: list[BlockLevel] = []
    t_ord = np.zeros(1, dtype=np.int64)
    s_ord = np.zeros(1, dtype=np.int64)
    near_total = 0
    level = 0
    while len(t_ord):
        adm, near = _classify(t_tree, s_tree, level, t_ord, s_ord, p)
        near_total += near
        t_leaf = t_tree.level_leaf_mask(level)[t_ord]
        s_leaf = s_tree.level_leaf_mask(level)[s_ord]
        status = np.full(len(t_ord), BlockStatus.INTERNAL, dtype=np.int8)
        status[t_leaf | s_leaf] = BlockStatus.INADMISSIBLE
        status[adm] = BlockStatus.ADMISSIBLE
        slot = np.full(len(t_ord), -1, dtype=np.int64)
        slot[adm] = _assign_directions(t_tree, s_tree, table, level, t_ord[adm], s_ord[adm])
        levels.append(BlockLevel(level, t_ord, s_ord, status, slot))

        refine = np.flatnonzero(status == BlockStatus.INTERNAL)
        if len(refine) == 0:
            break
        t_children = _children_ordinals(t_tree, level)
        s_children = _children_ordinals(s_tree, level)
        next_t, next_s = [], []
        for pos in refine:
            tc = t_children[t_ord[pos]]
            sc = s_children[s_ord[pos]]
            next_t.append(np.repeat(tc, len(sc)))
            next_s.append(np.tile(sc, len(tc)))
        t_ord = np.concatenate(next_t)
        s_ord = np.concatenate(next_s)
        order = np.lexsort((s_ord, t_ord))
        t_ord, s_ord = t_ord[order], s_ord[order]
        level += 1

    bt = BlockTree(t_tree, s_tree, p, table, levels,
                   target_dirs=_direction_sets(t_tree, table, levels, "t"),
                   source_dirs=_direction_sets(s_tree, table, levels, "s"),
                   near_equality=near_total)
    return bt


def _direction_sets(tree: ClusterTree, table: DirectionTable, levels: list[BlockLevel], role: str) -> DirectionSets:
    active, inherited = [], []
    for level in range(tree.depth + 1):
        shape = (len(tree.levels[level]), table.n_slots(level))
        act = np.zeros(shape, dtype=bool)
        if level < len(levels):
            lv = levels[level]
            sel = lv.status == BlockStatus.ADMISSIBLE
            owners = lv.t_ord[sel] if role == "t" else lv.s_ord[sel]
            act[owners, lv.slot[sel]] = True
        inh = np.zeros(shape, dtype=bool)
        if level > 0:
            parent_union = active[level - 1] | inherited[level - 1]
            parents = np.array([n.parent.ordinal for n in tree.levels[level]], dtype=np.int64)
            mapped = table.parent_slots[level - 1]
            for c in np.flatnonzero(parent_union.any(axis=0)):
                inh[:, mapped[c]] |= parent_union[parents, c]
        active.append(act)
        inherited.append(inh)
    return DirectionSets(tree, active, inherited)


def direction_sets(bt: BlockTree) -> tuple[DirectionSets, DirectionSets]:
    """Active/inherited direction sets for the target and source tree."""
    return bt.target_dirs, bt.source_dirs
