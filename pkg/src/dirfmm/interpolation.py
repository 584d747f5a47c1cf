"""Tensor Chebyshev interpolation on boxes.

Multi-indices ``(nu1, nu2, nu3)`` are flattened lexicographically with
``nu3`` running fastest; every matrix in the package uses this order for
its node axis.
"""

from __future__ import annotations

import numpy as np


def chebyshev_nodes(a: float, b: float, m: int) -> np.ndarray:
    """The ``m + 1`` Chebyshev points of the first kind mapped to ``[a, b]``."""
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if m < 0:
        raise ValueError("interpolation degree must be nonnegative")
    nu = np.arange(1, m + 2)
    return (a + b) / 2 + (b - a) / 2 * np.cos((2 * nu - 1) * np.pi / (2 * (m + 1)))


def lagrange_eval(nodes, idx: int, x):
    """Value of the ``idx``-th Lagrange polynomial of ``nodes`` at ``x``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for j, xj in enumerate(nodes):
        if j != idx:
            out = out * (x - xj) / (nodes[idx] - xj)
    return out


def lagrange_matrix(nodes, x) -> np.ndarray:
    """All cardinal functions at once: ``out[p, j] = L_j(x[p])``."""
    nodes = np.asarray(nodes, dtype=float)
    return np.stack([lagrange_eval(nodes, j, x) for j in range(len(nodes))], axis=-1)


def reference_nodes(m: int) -> np.ndarray:
    """Chebyshev nodes of the unit interval ``[0, 1]``."""
    return chebyshev_nodes(0.0, 1.0, m)


def tensor_nodes(lower, side, m: int) -> np.ndarray:
    """Flattened 3D nodes ``(node_count, 3)`` of the box ``lower + [0, side]``."""
    u = reference_nodes(m)
    axes = [np.asarray(lower)[a] + u * np.asarray(side)[a] for a in range(3)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


def tensor_lagrange(points, lower, side, m: int) -> np.ndarray:
    """Real matrix ``(n_points, (m+1)**3)`` of tensor cardinal functions.

    The box nodes are the mapped reference nodes, so the result depends on
    the point positions relative to the box only.
    """
    pts = np.atleast_2d(points)
    u = reference_nodes(m)
    rel = (pts - np.asarray(lower)) / np.asarray(side)
    lx = lagrange_matrix(u, rel[:, 0])
    ly = lagrange_matrix(u, rel[:, 1])
    lz = lagrange_matrix(u, rel[:, 2])
    n = m + 1
    return (lx[:, :, None, None] * ly[:, None, :, None] * lz[:, None, None, :]).reshape(len(pts), n**3)


def plane_wave(points, c, kappa: float) -> np.ndarray:
    """``exp(i kappa <x, c>)`` for every point."""
    return np.exp(1j * kappa * (np.atleast_2d(points) @ np.asarray(c, dtype=float)))


def build_interp_matrix(node, c_vec, kappa: float, m: int) -> np.ndarray:
    """Directional interpolation matrix of a cluster node.

    Rows follow ``node.index_set``; entry ``[j, k]`` is the tensor
    cardinal function ``k`` at ``x_j`` times ``exp(i kappa <x_j, c>)``.
    """
    side = node.tree.side(node.level)
    lag = tensor_lagrange(node.points, node.box.lower, side, m)
    if not np.any(c_vec):
        return lag.astype(complex)
    return lag * plane_wave(node.points, c_vec, kappa)[:, None]


def build_transfer_reference(m: int) -> np.ndarray:
    """The 8 parent-to-child interpolation matrices of the unit cube.

    ``E[o][j, k] = L_parent_k(xi_child_j)`` for the child in octant
    ``o = 4*bx + 2*by + bz``.
    """
    u = reference_nodes(m)
    halves = [lagrange_matrix(u, 0.5 * u), lagrange_matrix(u, 0.5 + 0.5 * u)]
    out = np.empty((8, (m + 1) ** 3, (m + 1) ** 3))
    for o in range(8):
        bx, by, bz = (o >> 2) & 1, (o >> 1) & 1, o & 1
        out[o] = np.kron(np.kron(halves[bx], halves[by]), halves[bz])
    return out


def build_directional_diag(child_lower, child_side, c_vec, c_child_vec, kappa: float, m: int) -> np.ndarray:
    """Diagonal ``exp(i kappa <xi_child, c - c_child>)`` of a transfer matrix."""
    delta = np.asarray(c_vec, dtype=float) - np.asarray(c_child_vec, dtype=float)
    nodes = tensor_nodes(child_lower, child_side, m)
    if not np.any(delta):
        return np.ones(len(nodes), dtype=complex)
    return np.exp(1j * kappa * (nodes @ delta))
