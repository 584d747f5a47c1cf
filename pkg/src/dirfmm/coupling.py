"""Coupling matrices between interpolation grids, translation dedup, ACA.

On uniform trees the coupling matrix of an admissible block only depends
on the level and on the lattice offset between target and source box, so
one matrix per ``(level, offset)`` is built and shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import apply_transposed
from .block_tree import BlockStatus, BlockTree
from .geometry import kernel_directional
from .interpolation import reference_nodes


class IncompatibleRootsError(ValueError):
    pass


class CouplingKey(NamedTuple):
    level: int
    offset: tuple[int, int, int]


def _split_t(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    at = a.T
    return np.ascontiguousarray(at.real), np.ascontiguousarray(at.imag)


@dataclass(eq=False)
class CouplingMatrix:
    """Dense coupling matrix or its low-rank factors ``U @ V^H``."""

    dense: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    _stages: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.dense is not None:
            self._stages = [_split_t(self.dense)]
        else:
            self._stages = [_split_t(self.v.conj().T), _split_t(self.u)]

    @property
    def shape(self) -> tuple[int, int]:
        if self.dense is not None:
            return self.dense.shape
        return (self.u.shape[0], self.v.shape[0])

    @property
    def is_compressed(self) -> bool:
        return self.dense is None

    @property
    def rank(self) -> int:
        return min(self.shape) if self.dense is not None else self.u.shape[1]

    @property
    def nbytes(self) -> int:
        if self.dense is not None:
            return self.dense.nbytes
        return self.u.nbytes + self.v.nbytes

    def materialize(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        return self.u @ self.v.conj().T

    def apply_rows(self, x_re: np.ndarray, x_im: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rows of ``(A @ X.T).T`` for ``X = x_re + 1j*x_im`` of shape ``(n, cols)``."""
        for at_re, at_im in self._stages:
            out_re = np.zeros((len(x_re), at_re.shape[1]))
            out_im = np.zeros_like(out_re)
            apply_transposed(at_re, at_im, x_re, x_im, out_re, out_im)
            x_re, x_im = out_re, out_im
        return x_re, x_im

    def __matmul__(self, x):
        x = np.asarray(x, dtype=complex)
        vec = x.ndim == 1
        rows = np.atleast_2d(x.T) if not vec else x[None, :]
        re, im = self.apply_rows(np.ascontiguousarray(rows.real), np.ascontiguousarray(rows.imag))
        out = re + 1j * im
        return out[0] if vec else out.T


def coupling_key(block, t_tree=None, s_tree=None) -> CouplingKey:
    """Translation-invariant key of an admissible block."""
    t_tree = t_tree or block.t.tree
    s_tree = s_tree or block.s.tree
    if not np.array_equal(t_tree.root_box.sides, s_tree.root_box.sides):
        raise IncompatibleRootsError("root boxes are not translates of one another")
    return CouplingKey(block.level, tuple(int(a - b) for a, b in zip(block.t.coord.ijk, block.s.coord.ijk)))


def node_differences(offset, side, root_shift, m: int) -> np.ndarray:
    """``xi_t[alpha] - xi_s[beta]`` on the lattice, shape ``(K, K, 3)``.

    Formed per axis from the reference nodes, so every block with the same
    offset sees bitwise the same differences.
    """
    u = reference_nodes(m)
    n = m + 1
    per_axis = []
    for a in range(3):
        base = root_shift[a] + offset[a] * side[a]
        per_axis.append(base + (u[:, None] - u[None, :]) * side[a])
    dx = per_axis[0][:, None, None, :, None, None]
    dy = per_axis[1][None, :, None, None, :, None]
    dz = per_axis[2][None, None, :, None, None, :]
    shape = (n, n, n, n, n, n)
    d = np.stack(np.broadcast_arrays(dx, dy, dz), axis=-1).reshape(shape + (3,))
    return d.reshape(n**3, n**3, 3)


def build_coupling_matrix(level: int, offset, c_vec, kappa: float, m: int, side, root_shift=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Dense ``f_c(xi_t[alpha_j], xi_s[beta_k])`` for the lattice offset.

    ``side`` is the box side vector at ``level`` and ``root_shift`` the
    difference of the lower corners of the target and source roots.
    """
    d = node_differences(offset, np.asarray(side, dtype=float), np.asarray(root_shift, dtype=float), m)
    return kernel_directional(d, 0.0, c_vec, kappa)


def aca_compress(mat: np.ndarray, eps: float, max_rank: Optional[int] = None) -> CouplingMatrix:
    """Partially pivoted adaptive cross approximation.

    Starts at row 0; each step takes the residual row, pivots on its
    largest entry, takes the residual column and chooses the next row at the
    largest unused entry of that column.  Stops when the next rank-one
    update is below ``eps`` times the Frobenius estimate of the
    approximation; that update is discarded.  The
    dense matrix is returned when the factors would not be smaller or the
    rank limit is reached first.
    """
    if not 0 < eps < 1:
        raise ValueError("ACA tolerance must lie in (0, 1)")
    a = np.asarray(mat, dtype=complex)
    nr, nc = a.shape
    limit = min(nr, nc) if max_rank is None else min(max_rank, nr, nc)
    us, vs = [], []
    used_rows = np.zeros(nr, dtype=bool)
    used_cols = np.zeros(nc, dtype=bool)
    norm2 = 0.0
    row = 0
    converged = False
    while len(us) < limit:
        used_rows[row] = True
        r = a[row].copy()
        for uk, vk in zip(us, vs):
            r -= uk[row] * vk
        r_abs = np.where(used_cols, -1.0, np.abs(r))
        col = int(np.argmax(r_abs))
        if r_abs[col] <= 0.0:
            # residual row vanishes: move to another row or stop
            free = np.flatnonzero(~used_rows)
            if len(free) == 0 or us:
                converged = True
                break
            row = int(free[0])
            continue
        used_cols[col] = True
        v = r / r[col]
        u = a[:, col].copy()
        for uk, vk in zip(us, vs):
            u -= vk[col] * uk
        step2 = np.vdot(u, u).real * np.vdot(v, v).real
        cross = sum(2.0 * (np.vdot(uk, u) * np.vdot(v, vk)).real for uk, vk in zip(us, vs))
        if us and step2 <= eps**2 * (norm2 + step2 + cross):
            # the new cross is below tolerance and is not kept
            converged = True
            break
        norm2 += step2 + cross
        us.append(u)
        vs.append(v)
        c_abs = np.where(used_rows, -1.0, np.abs(u))
        row = int(np.argmax(c_abs))
        if c_abs[row] < 0.0:
            converged = True
            break
    k = len(us)
    if not converged or 2 * k * max(nr, nc) >= nr * nc:
        return CouplingMatrix(dense=a)
    if k == 0:
        return CouplingMatrix(u=np.zeros((nr, 0), complex), v=np.zeros((nc, 0), complex))
    u_mat = np.stack(us, axis=1)
    # store V so that A ~ U @ V^H
    v_mat = np.stack(vs, axis=1).conj()
    return CouplingMatrix(u=u_mat, v=v_mat)


@dataclass
class CouplingCache:
    """Coupling matrices of all admissible leaves.

    ``groups`` lists, per key in sorted order, the admissible blocks that
    share it as ``(level, slot, t_ord, s_ord, matrices)`` where
    ``matrices`` holds one shared matrix, or one matrix per block when
    deduplication is off.
    """

    matrices: dict = field(default_factory=dict)
    groups: list = field(default_factory=list)
    n_assigned: int = 0

    @property
    def n_stored(self) -> int:
        return len(self.matrices)

    @property
    def nbytes(self) -> int:
        return sum(c.nbytes for c in self.matrices.values())


def build_coupling_cache(bt: BlockTree, kappa: float, m: int, aca_eps: Optional[float] = None,
                         dedup: bool = True) -> CouplingCache:
    t_tree, s_tree = bt.t_tree, bt.s_tree
    if not np.array_equal(t_tree.root_box.sides, s_tree.root_box.sides):
        raise IncompatibleRootsError("root boxes are not translates of one another")
    root_shift = np.subtract(t_tree.root_box.lower, s_tree.root_box.lower)
    cache = CouplingCache()

    def make(level, offset, slot):
        dense = build_coupling_matrix(level, offset, bt.table.vectors[level][slot], kappa, m,
                                      t_tree.side(level), root_shift)
        return aca_compress(dense, aca_eps) if aca_eps else CouplingMatrix(dense=dense)

    for lv in bt.levels:
        sel = np.flatnonzero(lv.status == BlockStatus.ADMISSIBLE)
        if len(sel) == 0:
            continue
        t_ord, s_ord = lv.t_ord[sel], lv.s_ord[sel]
        offsets = t_tree.level_coords(lv.level)[t_ord] - s_tree.level_coords(lv.level)[s_ord]
        uniq, inverse = np.unique(offsets, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
        for g, off in enumerate(uniq):
            members = order[bounds[g]:bounds[g + 1]]
            slot = int(lv.slot[sel[members[0]]])
            if np.any(lv.slot[sel[members]] != slot):  # pragma: no cover - guarded by exact directions
                raise AssertionError(f"offset {off} at level {lv.level} maps to several directions")
            key = CouplingKey(lv.level, tuple(int(v) for v in off))
            if dedup:
                mat = make(lv.level, key.offset, slot)
                cache.matrices[key] = mat
                mats = [mat]
            else:
                mats = []
                for b in members:
                    mat = make(lv.level, key.offset, slot)
                    cache.matrices[(key, int(t_ord[b]), int(s_ord[b]))] = mat
                    mats.append(mat)
            cache.groups.append((lv.level, slot, t_ord[members], s_ord[members], mats))
        cache.n_assigned += len(sel)
    return cache
