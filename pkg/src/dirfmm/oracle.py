"""Dense reference evaluation of the Helmholtz matrix-vector product."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FOUR_PI, SingularPointError

_CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class ErrorReport:
    rows: np.ndarray
    rel_l2: float
    max_rel: float

    def __post_init__(self):
        if len(self.rows) < 1:
            raise ValueError("an error report needs at least one sampled row")


def dense_rows(targets, sources, kappa: float, v, rows, zero_diagonal: bool = False) -> np.ndarray:
    """Exact ``(A v)[rows]`` by direct summation.

    ``zero_diagonal`` drops the entries ``A[j, j]``; it assumes targets and
    sources are the same point set.  Other coincident pairs raise
    :class:`SingularPointError`.
    """
    x = np.asarray(targets, dtype=float)
    y = np.asarray(sources, dtype=float)
    v = np.asarray(v, dtype=complex)
    rows = np.asarray(rows, dtype=np.int64)
    if len(v) != len(y):
        raise ValueError(f"vector length {len(v)} does not match {len(y)} sources")
    out = np.empty(len(rows), dtype=complex)
    step = max(1, _CHUNK_ENTRIES // max(1, len(y)))
    for lo in range(0, len(rows), step):
        r_idx = rows[lo:lo + step]
        d = x[r_idx, None, :] - y[None, :, :]
        r = np.sqrt(np.sum(d * d, axis=-1))
        skip = np.zeros(r.shape, dtype=bool)
        if zero_diagonal:
            skip[np.arange(len(r_idx)), r_idx] = True
        if np.any((r == 0.0) & ~skip):
            raise SingularPointError("coincident target and source points")
        r = np.where(skip, 1.0, r)
        a = np.where(skip, 0.0, np.exp(1j * kappa * r) / (FOUR_PI * r))
        out[lo:lo + step] = a @ v
    return out


def dense_matvec(targets, sources, kappa: float, v, zero_diagonal: bool = False) -> np.ndarray:
    """Full ``A v`` with ``A[j, k] = exp(i kappa r_jk) / (4 pi r_jk)``."""
    x = np.asarray(targets, dtype=float)
    if zero_diagonal and (len(x) != len(sources) or not np.array_equal(x, sources)):
        raise ValueError("zero_diagonal needs identical target and source point sets")
    return dense_rows(x, sources, kappa, v, np.arange(len(x)), zero_diagonal)


def sample_rows(n: int, count: int, seed: int) -> np.ndarray:
    """Sorted, distinct, seeded row sample of size ``min(n, count)``."""
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(n, count), replace=False))


def sampled_error(fast_g, targets, sources, kappa: float, v, sample, zero_diagonal: bool = False) -> ErrorReport:
    """Relative l2 and max error of ``fast_g`` on the sampled rows."""
    rows = np.asarray(sample, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("sample must not be empty")
    exact = dense_rows(targets, sources, kappa, v, rows, zero_diagonal)
    diff = np.asarray(fast_g)[rows] - exact
    norm = np.linalg.norm(exact)
    rel = float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.abs(exact)
        per_row = np.where(scale > 0, np.abs(diff) / np.where(scale > 0, scale, 1.0), np.abs(diff))
    return ErrorReport(rows, rel, float(np.max(per_row)))
