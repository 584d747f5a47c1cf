"""Fast directional matrix-vector product and its operation counters.

Moments and locals live in dense per-level arrays with one row per
``(box, direction slot)`` pair of the box's direction set; rows are
ordered by box ordinal, then slot.  All work happens in tree order on
permuted vectors.

Phase order and summation order are fixed:

* S2M and L2T visit the leaves level by level in lattice order.
* M2M runs bottom-up, L2L top-down; within a level the children are
  handled octant by octant.
* M2L runs over the coupling groups in ``(level, offset)`` order, which
  is identical with and without translation deduplication.
* Nearfield blocks are visited in block-tree order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import nearfield_apply
from .block_tree import BlockStatus, BlockTree
from .cluster_tree import ClusterTree
from .coupling import CouplingCache, build_coupling_cache
from .directions import DirectionTable
from .geometry import SingularPointError
from .interpolation import build_transfer_reference, reference_nodes, tensor_lagrange


@dataclass
class RunStats:
    n_le: int
    n_c: int
    n_sc: int
    m_d: int
    nf_percent: float
    bytes_stored: int
    t_setup: float
    t_nf: float = 0.0
    t_ff: float = 0.0
    t_tot: float = 0.0
    # max of kappa * |unit midpoint difference - c| * diam over admissible leaves
    a2_max: float = 0.0
    phase_times: dict = field(default_factory=dict)


@dataclass
class PairIndex:
    """Rows of the moment or local store of one level."""

    box: np.ndarray
    slot: np.ndarray
    # row[box_ordinal, slot], -1 where the pair carries no data
    row: np.ndarray

    def __len__(self):
        return len(self.box)


@dataclass
class TransferPlan:
    """Parent/child pairs of one level for a fixed child octant."""

    octant: int
    parent_row: np.ndarray
    child_row: np.ndarray
    child_lower: np.ndarray
    # kappa * (c_parent - c_child); rows of zeros need no phase
    delta: np.ndarray
    has_phase: np.ndarray


def _pair_index(mask: np.ndarray) -> PairIndex:
    box, slot = np.nonzero(mask)
    row = np.full(mask.shape, -1, dtype=np.int64)
    row[box, slot] = np.arange(len(box))
    return PairIndex(box, slot, row)


def _transfer_plans(tree: ClusterTree, table: DirectionTable, index: list[PairIndex],
                    kappa: float) -> list[list[TransferPlan]]:
    """Plans for the transfer between level ``l`` and ``l + 1``."""
    plans = []
    for level in range(tree.depth):
        children = tree.levels[level + 1]
        parents = np.array([c.parent.ordinal for c in children], dtype=np.int64)
        octants = np.array([c.octant for c in children], dtype=np.int64)
        rows_p = index[level].row
        ch, c = np.nonzero(rows_p[parents] >= 0)
        c_child = table.parent_slots[level][c]
        parent_row = rows_p[parents[ch], c]
        child_row = index[level + 1].row[ch, c_child]
        if np.any(child_row < 0):  # pragma: no cover - direction sets are closed under inheritance
            raise AssertionError("child direction missing from the child's direction set")
        delta = kappa * (table.vectors[level][c] - table.vectors[level + 1][c_child])
        lowers = tree.box_lower(level + 1, tree.level_coords(level + 1))
        level_plans = []
        for o in range(8):
            sel = np.flatnonzero(octants[ch] == o)
            if len(sel) == 0:
                continue
            level_plans.append(TransferPlan(
                o, parent_row[sel], child_row[sel], lowers[ch[sel]], delta[sel],
                np.any(delta[sel] != 0.0, axis=1)))
        plans.append(level_plans)
    return plans


def _transfer_phases(plan: TransferPlan, u: np.ndarray, side: np.ndarray) -> np.ndarray:
    """``exp(i kappa <xi_child, c - c_child>)`` on the child nodes, shape ``(n, K)``."""
    n = len(plan.parent_row)
    m1 = len(u)
    out = np.ones((n, m1**3), dtype=complex)
    sel = np.flatnonzero(plan.has_phase)
    if len(sel) == 0:
        return out
    axes = plan.child_lower[sel][:, None, :] + u[None, :, None] * side[None, None, :]
    arg = axes * plan.delta[sel][:, None, :]
    total = arg[:, :, None, None, 0] + arg[:, None, :, None, 1] + arg[:, None, None, :, 2]
    out[sel] = np.exp(1j * total.reshape(len(sel), m1**3))
    return out


@dataclass
class Operator:
    t_tree: ClusterTree
    s_tree: ClusterTree
    block_tree: BlockTree
    table: DirectionTable
    kappa: float
    m: int
    zero_diagonal: bool
    transfer_ref: np.ndarray
    cache: CouplingCache
    t_index: list[PairIndex]
    s_index: list[PairIndex]
    m2m_plans: list[list[TransferPlan]]
    l2l_plans: list[list[TransferPlan]]
    nearfield_blocks: np.ndarray
    nearfield_cache: Optional[list[np.ndarray]]
    stats: RunStats
    # applications per phase during the last matvec
    last_counts: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return (self.m + 1) ** 3

    @property
    def shape(self) -> tuple[int, int]:
        return (self.t_tree.n_points, self.s_tree.n_points)


def _a2_diagnostic(bt: BlockTree, kappa: float) -> float:
    worst = 0.0
    for lv in bt.levels:
        sel = np.flatnonzero(lv.status == BlockStatus.ADMISSIBLE)
        if len(sel) == 0:
            continue
        level = lv.level
        mt = bt.t_tree.box_lower(level, bt.t_tree.level_coords(level)[lv.t_ord[sel]]) + bt.t_tree.side(level) / 2
        ms = bt.s_tree.box_lower(level, bt.s_tree.level_coords(level)[lv.s_ord[sel]]) + bt.s_tree.side(level) / 2
        unit = (mt - ms) / np.linalg.norm(mt - ms, axis=1)[:, None]
        c = bt.table.vectors[level][lv.slot[sel]]
        diam = max(bt.t_tree.diameter(level), bt.s_tree.diameter(level))
        worst = max(worst, float(kappa * diam * np.max(np.linalg.norm(unit - c, axis=1))))
    return worst


def setup(t_tree: ClusterTree, s_tree: ClusterTree, bt: BlockTree, table: Optional[DirectionTable] = None,
          kappa: Optional[float] = None, m: int = 4, aca_eps: Optional[float] = None, dedup: bool = True,
          zero_diagonal: bool = False, cache_nearfield: bool = False) -> Operator:
    """Precompute everything the matvec needs.

    Parameters
    ----------
    t_tree, s_tree : ClusterTree
        The trees the block tree was built from.
    bt : BlockTree
    table : DirectionTable, optional
        Defaults to the table of ``bt``.
    kappa : float, optional
        Defaults to the wave number of the admissibility parameters.
    m : int
        Interpolation degree per axis.
    aca_eps : float, optional
        Compress coupling matrices by ACA with this tolerance.
    dedup : bool
        Share coupling matrices between translated blocks.
    zero_diagonal : bool
        Leave out the pairs ``j == k`` (requires a single point set).
    cache_nearfield : bool
        Store the nearfield blocks instead of evaluating them on the fly.
    """
    t0 = time.perf_counter()
    if bt.t_tree is not t_tree or bt.s_tree is not s_tree:
        raise ValueError("block tree was built over different cluster trees")
    table = bt.table if table is None else table
    if table is not bt.table:
        raise ValueError("direction table differs from the one used by the block tree")
    kappa = bt.params.kappa if kappa is None else float(kappa)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if m < 0:
        raise ValueError("interpolation degree must be nonnegative")
    if zero_diagonal and not (t_tree.points is s_tree.points or np.array_equal(t_tree.points, s_tree.points)):
        raise ValueError("zero_diagonal needs identical target and source point sets")

    transfer_ref = build_transfer_reference(m)
    cache = build_coupling_cache(bt, kappa, m, aca_eps=aca_eps, dedup=dedup)
    t_index = [_pair_index(bt.target_dirs.union(l)) for l in range(t_tree.depth + 1)]
    s_index = [_pair_index(bt.source_dirs.union(l)) for l in range(s_tree.depth + 1)]
    m2m = _transfer_plans(s_tree, table, s_index, kappa)
    l2l = _transfer_plans(t_tree, table, t_index, kappa)

    blocks = []
    for lv in bt.levels:
        for pos in np.flatnonzero(lv.status == BlockStatus.INADMISSIBLE):
            t = t_tree.levels[lv.level][lv.t_ord[pos]]
            s = s_tree.levels[lv.level][lv.s_ord[pos]]
            blocks.append((t.start, t.end, s.start, s.end))
    nf_blocks = np.array(blocks, dtype=np.int64).reshape(-1, 4)
    nf_cache = None
    if cache_nearfield:
        nf_cache = [_dense_block(t_tree, s_tree, b, kappa, zero_diagonal) for b in nf_blocks]

    k = (m + 1) ** 3
    n_pairs = sum(len(i) for i in t_index) + sum(len(i) for i in s_index)
    m_d = bt.nearfield_entries()
    stats = RunStats(
        n_le=0,
        n_c=cache.n_assigned,
        n_sc=cache.n_stored,
        m_d=m_d,
        nf_percent=100.0 * m_d / (t_tree.n_points * s_tree.n_points),
        bytes_stored=int(cache.nbytes + transfer_ref.nbytes + n_pairs * k * 16),
        t_setup=0.0,
        a2_max=_a2_diagnostic(bt, kappa),
    )
    op = Operator(t_tree, s_tree, bt, table, kappa, m, zero_diagonal, transfer_ref, cache,
                  t_index, s_index, m2m, l2l, nf_blocks, nf_cache, stats)
    stats.n_le = sum(expected_counts(op)[p] for p in ("s2m", "m2m", "l2l", "l2t"))
    stats.t_setup = time.perf_counter() - t0
    return op


def _dense_block(t_tree, s_tree, b, kappa, zero_diagonal) -> np.ndarray:
    t0, t1, s0, s1 = b
    d = t_tree.sorted_points[t0:t1, None, :] - s_tree.sorted_points[None, s0:s1, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    skip = np.zeros(r.shape, dtype=bool)
    if zero_diagonal:
        skip = t_tree.perm[t0:t1, None] == s_tree.perm[None, s0:s1]
    if np.any((r == 0.0) & ~skip):
        raise SingularPointError("coincident target and source points in the nearfield")
    r = np.where(skip, 1.0, r)
    return np.where(skip, 0.0, np.exp(1j * kappa * r) / (4.0 * np.pi * r))


def expected_counts(op: Operator) -> dict:
    """Applications per phase implied by the block tree and direction sets."""
    bt = op.block_tree
    s2m = sum(int(np.count_nonzero(op.s_index[n.level].row[n.ordinal] >= 0)) for n in op.s_tree.leaves)
    l2t = sum(int(np.count_nonzero(op.t_index[n.level].row[n.ordinal] >= 0)) for n in op.t_tree.leaves)
    m2m = sum(len(p.parent_row) for plans in op.m2m_plans for p in plans)
    l2l = sum(len(p.parent_row) for plans in op.l2l_plans for p in plans)
    return {"s2m": s2m, "m2m": m2m, "m2l": bt.n_admissible, "l2l": l2l, "l2t": l2t,
            "nearfield": bt.n_inadmissible}


def stats(op: Operator) -> RunStats:
    return op.stats


def _s2m(op: Operator, v: np.ndarray, moments: list[np.ndarray]) -> int:
    count = 0
    vecs = op.table.vectors
    for level, nodes in enumerate(op.s_tree.levels):
        idx = op.s_index[level]
        side = op.s_tree.side(level)
        for node in nodes:
            if not node.is_leaf:
                continue
            rows = idx.row[node.ordinal]
            slots = np.flatnonzero(rows >= 0)
            if len(slots) == 0:
                continue
            pts = node.points
            lag = tensor_lagrange(pts, node.box.lower, side, op.m)
            weighted = np.exp(-1j * op.kappa * (pts @ vecs[level][slots].T)) * v[node.start:node.end, None]
            moments[level][rows[slots]] = (lag.T @ weighted).T
            count += len(slots)
    return count


def _m2m(op: Operator, moments: list[np.ndarray]) -> int:
    count = 0
    u = reference_nodes(op.m)
    for level in range(op.s_tree.depth - 1, -1, -1):
        side = op.s_tree.side(level + 1)
        for plan in op.m2m_plans[level]:
            phases = _transfer_phases(plan, u, side)
            x = moments[level + 1][plan.child_row] * phases.conj()
            moments[level][plan.parent_row] += x @ op.transfer_ref[plan.octant]
            count += len(plan.parent_row)
    return count


def _m2l(op: Operator, moments: list[np.ndarray], locals_: list[np.ndarray]) -> int:
    count = 0
    for level, slot, t_ord, s_ord, mats in op.cache.groups:
        src = op.s_index[level].row[s_ord, slot]
        dst = op.t_index[level].row[t_ord, slot]
        x = moments[level][src]
        x_re = np.ascontiguousarray(x.real)
        x_im = np.ascontiguousarray(x.imag)
        if len(mats) == 1:
            re, im = mats[0].apply_rows(x_re, x_im)
            locals_[level][dst] += re + 1j * im
        else:
            for b, mat in enumerate(mats):
                re, im = mat.apply_rows(x_re[b:b + 1], x_im[b:b + 1])
                locals_[level][dst[b:b + 1]] += re + 1j * im
        count += len(t_ord)
    return count


def _l2l(op: Operator, locals_: list[np.ndarray]) -> int:
    count = 0
    u = reference_nodes(op.m)
    for level in range(op.t_tree.depth):
        side = op.t_tree.side(level + 1)
        for plan in op.l2l_plans[level]:
            phases = _transfer_phases(plan, u, side)
            y = (locals_[level][plan.parent_row] @ op.transfer_ref[plan.octant].T) * phases
            np.add.at(locals_[level + 1], plan.child_row, y)
            count += len(plan.parent_row)
    return count


def _l2t(op: Operator, locals_: list[np.ndarray], g: np.ndarray) -> int:
    count = 0
    vecs = op.table.vectors
    for level, nodes in enumerate(op.t_tree.levels):
        idx = op.t_index[level]
        side = op.t_tree.side(level)
        for node in nodes:
            if not node.is_leaf:
                continue
            rows = idx.row[node.ordinal]
            slots = np.flatnonzero(rows >= 0)
            if len(slots) == 0:
                continue
            pts = node.points
            lag = tensor_lagrange(pts, node.box.lower, side, op.m)
            phase = np.exp(1j * op.kappa * (pts @ vecs[level][slots].T))
            g[node.start:node.end] += np.sum((lag @ locals_[level][rows[slots]].T) * phase, axis=1)
            count += len(slots)
    return count


def _nearfield(op: Operator, v: np.ndarray, g: np.ndarray) -> None:
    if op.nearfield_cache is not None:
        for (t0, t1, s0, s1), blk in zip(op.nearfield_blocks, op.nearfield_cache):
            g[t0:t1] += blk @ v[s0:s1]
        return
    n = len(g)
    out_re = np.zeros(n)
    out_im = np.zeros(n)
    singular = np.zeros(n, dtype=np.uint8)
    nearfield_apply(op.t_tree.sorted_points, op.s_tree.sorted_points,
                    np.ascontiguousarray(v.real), np.ascontiguousarray(v.imag),
                    op.t_tree.perm, op.s_tree.perm, op.nearfield_blocks, op.kappa,
                    op.zero_diagonal, out_re, out_im, singular)
    if np.any(singular):
        row = int(op.t_tree.perm[np.flatnonzero(singular)[0]])
        raise SingularPointError(f"target {row} coincides with a source point")
    g += out_re + 1j * out_im


def _check_input(op: Operator, v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or len(v) != op.s_tree.n_points:
        raise ValueError(f"expected a vector of length {op.s_tree.n_points}, got shape {v.shape}")
    return op.s_tree.gather(v.astype(complex))


def apply_farfield(op: Operator, v) -> np.ndarray:
    """Contribution of the admissible leaves (S2M through L2T) to ``A @ v``."""
    v_tree = _check_input(op, v)
    g = np.zeros(op.t_tree.n_points, dtype=complex)
    _farfield(op, v_tree, g)
    return op.t_tree.scatter(g)


def apply_nearfield(op: Operator, v) -> np.ndarray:
    """Contribution of the inadmissible leaves to ``A @ v``."""
    v_tree = _check_input(op, v)
    g = np.zeros(op.t_tree.n_points, dtype=complex)
    _nearfield(op, v_tree, g)
    op.last_counts["nearfield"] = len(op.nearfield_blocks)
    return op.t_tree.scatter(g)


def _farfield(op: Operator, v_tree: np.ndarray, g: np.ndarray) -> None:
    k = op.n_nodes
    moments = [np.zeros((len(i), k), dtype=complex) for i in op.s_index]
    locals_ = [np.zeros((len(i), k), dtype=complex) for i in op.t_index]
    counts, times = {}, {}
    tick = time.perf_counter()
    counts["s2m"] = _s2m(op, v_tree, moments)
    times["s2m"], tick = time.perf_counter() - tick, time.perf_counter()
    counts["m2m"] = _m2m(op, moments)
    times["m2m"], tick = time.perf_counter() - tick, time.perf_counter()
    counts["m2l"] = _m2l(op, moments, locals_)
    times["m2l"], tick = time.perf_counter() - tick, time.perf_counter()
    counts["l2l"] = _l2l(op, locals_)
    times["l2l"], tick = time.perf_counter() - tick, time.perf_counter()
    counts["l2t"] = _l2t(op, locals_, g)
    times["l2t"] = time.perf_counter() - tick
    op.last_counts = counts
    op.stats.phase_times = times


def matvec(op: Operator, v) -> np.ndarray:
    """Approximate ``A @ v`` for the Helmholtz matrix of the operator."""
    v_tree = _check_input(op, v)
    g = np.zeros(op.t_tree.n_points, dtype=complex)

    start = time.perf_counter()
    _farfield(op, v_tree, g)
    t_ff = time.perf_counter() - start

    start = time.perf_counter()
    _nearfield(op, v_tree, g)
    t_nf = time.perf_counter() - start
    op.last_counts["nearfield"] = len(op.nearfield_blocks)

    op.stats.t_ff = t_ff
    op.stats.t_nf = t_nf
    op.stats.t_tot = t_ff + t_nf
    return op.t_tree.scatter(g)
