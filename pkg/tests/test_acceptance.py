"""Acceptance criteria of the grid benchmark, one test per criterion.

Every test prints a single ``PASS`` or ``FAIL`` line before asserting.
The k = 6 problem takes a few minutes and is shared by several tests.
"""

import time
from collections import defaultdict

import numpy as np
import pytest

from dirfmm.bench import BenchConfig, build_problem, random_vector
from dirfmm.block_tree import AdmissibilityParams, BlockStatus, build_block_tree
from dirfmm.cluster_tree import build_cluster_tree
from dirfmm.coupling import aca_compress, build_coupling_matrix, coupling_key
from dirfmm.directions import build_direction_table
from dirfmm.engine import _m2m, _pair_index, _s2m, _transfer_plans, matvec, setup, stats
from dirfmm.geometry import AxisBox
from dirfmm.interpolation import (
    build_directional_diag,
    build_transfer_reference,
    lagrange_matrix,
    reference_nodes,
    tensor_lagrange,
    tensor_nodes,
)
from dirfmm.oracle import dense_matvec, sample_rows, sampled_error

pytestmark = pytest.mark.slow


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)


class GridRun:
    def __init__(self, k, sample=1024):
        t0 = time.perf_counter()
        self.problem = build_problem(BenchConfig(k=k).resolved())
        n = len(self.problem.points)
        self.v = random_vector(n, 0)
        self.g = matvec(self.problem.operator, self.v)
        self.elapsed = time.perf_counter() - t0
        self.stats = stats(self.problem.operator)
        self.n = n
        self.error = None
        if sample:
            pts = self.problem.points
            rows = sample_rows(n, sample, 0)
            self.error = sampled_error(self.g, pts, pts, self.problem.operator.kappa, self.v, rows, True)


@pytest.fixture(scope="module")
def runs():
    cache = {}

    def get(k):
        if k not in cache:
            cache[k] = GridRun(k)
        return cache[k]

    return get


def test_counters_k5(runs, capsys):
    r = runs(5)
    st = r.stats
    ok = (st.n_c == 3096 and st.n_sc == 316 and abs(st.nf_percent - 24.41) <= 0.01
          and r.elapsed < 30)
    report(capsys, "counters k=5", ok,
           f"N_C={st.n_c} N_SC={st.n_sc} nf={st.nf_percent:.4f}% time={r.elapsed:.1f}s")
    assert ok


def test_counters_k6(runs, capsys):
    r = runs(6)
    st = r.stats
    ok = (st.n_c == 166320 and st.n_sc == 1522 and abs(st.nf_percent - 4.06) <= 0.01
          and r.elapsed < 600)
    report(capsys, "counters k=6", ok,
           f"N_C={st.n_c} N_SC={st.n_sc} nf={st.nf_percent:.4f}% time={r.elapsed:.1f}s")
    assert ok


def test_accuracy(runs, capsys):
    e5, e6 = runs(5).error, runs(6).error
    ok = len(e6.rows) >= 1024 and e6.rel_l2 <= 5e-4 and e5.rel_l2 <= 1e-3
    report(capsys, "accuracy", ok, f"k=6 rel={e6.rel_l2:.3e} (<=5e-4), k=5 rel={e5.rel_l2:.3e} (<=1e-3)")
    assert ok


def test_oracle_equivalence(capsys):
    rng = np.random.default_rng(2024)
    worst = 0.0
    n_admissible = 0
    for trial in range(20):
        n = int(rng.integers(2, 2001))
        kappa = float(rng.uniform(0.5, 20))
        n_max = int(rng.integers(1, 600))
        pts = rng.uniform(-1, 1, (n, 3))
        same = trial % 2 == 0
        src = pts if same else rng.uniform(-1, 1, (int(rng.integers(2, 2001)), 3))
        root = AxisBox((-1, -1, -1), (1, 1, 1))
        tt = build_cluster_tree(pts, root, n_max=n_max)
        ts = tt if same else build_cluster_tree(src, root, n_max=n_max)
        tab = build_direction_table(int(rng.integers(-1, 3)), max(tt.depth, ts.depth))
        # eta2 small enough that no block is admissible
        bt = build_block_tree(tt, ts, AdmissibilityParams(1e-3, kappa), tab)
        n_admissible += bt.n_admissible
        op = setup(tt, ts, bt, tab, kappa, 3, zero_diagonal=same)
        v = random_vector(len(src), trial)
        g = matvec(op, v)
        ref = dense_matvec(pts, src, kappa, v, zero_diagonal=same)
        worst = max(worst, np.linalg.norm(g - ref) / np.linalg.norm(ref))
    ok = n_admissible == 0 and worst <= 1e-13
    report(capsys, "oracle equivalence", ok, f"20 sets, admissible={n_admissible}, worst rel={worst:.2e}")
    assert ok


def test_scaling(runs, capsys):
    data = {k: runs(k) for k in (4, 5, 6)}
    lines, ok = [], True
    for k in (4, 5):
        a, b = data[k], data[k + 1]
        ff_a, ff_b = a.stats.t_ff / a.n, b.stats.t_ff / b.n
        t_ratio = ff_b / ff_a if ff_a > 0 else float("inf")
        m_ratio = b.stats.bytes_stored / a.stats.bytes_stored
        ok &= t_ratio <= 2 and m_ratio <= 9
        lines.append(f"k{k}->{k + 1}: t_ff/N ratio={t_ratio:.3g} bytes ratio={m_ratio:.3g}")
    report(capsys, "scaling", ok, "; ".join(lines)
           + f" (t_ff={[round(data[k].stats.t_ff, 3) for k in (4, 5, 6)]},"
           + f" bytes={[data[k].stats.bytes_stored for k in (4, 5, 6)]})")
    assert ok


def _lagrange_suite():
    worst = 0.0
    x = np.linspace(0, 1, 101)
    for m in range(7):
        u = reference_nodes(m)
        worst = max(worst, np.abs(lagrange_matrix(u, u) - np.eye(m + 1)).max())
        worst = max(worst, np.abs(lagrange_matrix(u, x).sum(axis=1) - 1).max())
    return worst <= 1e-12, f"lagrange {worst:.1e}"


def _split_suite():
    m, kappa = 4, 6.4
    lower, side = np.array([-1.0, -0.5, 0.0]), np.full(3, 0.5)
    c = np.array([1.0, 0.5, 0.5]) / np.linalg.norm([1.0, 0.5, 0.5])
    c_child = np.array([1.0, 0.0, 0.0])
    e = build_transfer_reference(m)
    worst = 0.0
    for o in range(8):
        bits = np.array([(o >> 2) & 1, (o >> 1) & 1, o & 1])
        child_lower = lower + bits * side / 2
        xi = tensor_nodes(child_lower, side / 2, m)
        direct = np.exp(1j * kappa * xi @ (c - c_child))[:, None] * tensor_lagrange(xi, lower, side, m)
        split = build_directional_diag(child_lower, side / 2, c, c_child, kappa, m)[:, None] * e[o]
        worst = max(worst, np.abs(split - direct).max() / np.abs(direct).max())
    return worst <= 1e-13, f"split {worst:.1e}"


def _m2m_suite():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (400, 3))
    tree = build_cluster_tree(pts, AxisBox((-1, -1, -1), (1, 1, 1)), n_max=20)
    tab = build_direction_table(-1, tree.depth)
    bt = build_block_tree(tree, tree, AdmissibilityParams(5.0, 0.5), tab)
    m = 3
    op = setup(tree, tree, bt, tab, 0.5, m)
    op.s_index = [_pair_index(np.ones((len(lvl), 1), dtype=bool)) for lvl in tree.levels]
    op.m2m_plans = _transfer_plans(tree, tab, op.s_index, 0.5)
    v = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    moments = [np.zeros((len(lvl), (m + 1) ** 3), dtype=complex) for lvl in tree.levels]
    _s2m(op, tree.gather(v), moments)
    _m2m(op, moments)
    worst = 0.0
    for lvl in tree.levels:
        for n in lvl:
            direct = tensor_lagrange(n.points, n.box.lower, tree.side(n.level), m).T @ v[n.index_set]
            worst = max(worst, np.linalg.norm(moments[n.level][n.ordinal] - direct) / np.linalg.norm(direct))
    return worst <= 1e-12, f"m2m {worst:.1e}"


def _partition_suite(p):
    bt = p.block_tree
    total = sum(b.t.size * b.s.size for b in bt.blocks() if b.status != BlockStatus.INTERNAL)
    n = len(p.points)
    return total == n * n, f"partition {total}=={n}^2"


def _cardinality_suite():
    ok = True
    for l_hf in range(4):
        tab = build_direction_table(l_hf, l_hf + 1)
        ok &= all(tab.n_directions(lv) == 6 * 4 ** (l_hf - lv) for lv in range(l_hf + 1))
    return ok, "cardinalities"


def _dedup_suite(p):
    bt = p.block_tree
    groups = defaultdict(list)
    for b in bt.admissible_leaves:
        groups[coupling_key(b)].append(b)
    same = True
    for members in groups.values():
        if len(members) < 2:
            continue
        mats = []
        for b in (members[0], members[-1]):
            offset = tuple(int(x) for x in np.subtract(b.t.coord.ijk, b.s.coord.ijk))
            mats.append(build_coupling_matrix(b.level, offset, bt.table.vector(b.direction),
                                              p.operator.kappa, 4, bt.t_tree.side(b.level)))
        same &= mats[0].tobytes() == mats[1].tobytes()
    return same, f"dedup over {len(groups)} keys"


def _linearity_suite(p):
    op = p.operator
    n = len(p.points)
    v1, v2 = random_vector(n, 21), random_vector(n, 22)
    alpha = 0.3 + 2.1j
    lhs = matvec(op, alpha * v1 + v2)
    rhs = alpha * matvec(op, v1) + matvec(op, v2)
    rel = np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)
    return rel <= 1e-12, f"linearity {rel:.1e}"


def _aca_suite(p):
    groups = p.operator.cache.groups
    rng = np.random.default_rng(17)
    worst = 0.0
    for i in rng.choice(len(groups), 40, replace=False):
        level, slot, t_ord, s_ord, _ = groups[i]
        t = p.tree.levels[level][t_ord[0]]
        s = p.tree.levels[level][s_ord[0]]
        offset = tuple(int(x) for x in np.subtract(t.coord.ijk, s.coord.ijk))
        c = p.table.vectors[level][slot]
        dense = build_coupling_matrix(level, offset, c, p.operator.kappa, 4, p.tree.side(level))
        approx = aca_compress(dense, 1e-6).materialize()
        worst = max(worst, np.linalg.norm(dense - approx) / np.linalg.norm(dense))
    return worst <= 1e-5, f"aca {worst:.1e}"


def test_property_suites(runs, capsys):
    p = runs(5).problem
    results = [_lagrange_suite(), _split_suite(), _m2m_suite(), _partition_suite(p), _cardinality_suite(),
               _dedup_suite(p), _linearity_suite(p), _aca_suite(p)]
    ok = all(r[0] for r in results)
    report(capsys, "property suites", ok, ", ".join(f"{d} {'ok' if r else 'FAILED'}" for r, d in results))
    assert ok
