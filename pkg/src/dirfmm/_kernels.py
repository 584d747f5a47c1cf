"""Compiled inner loops.

Both kernels accumulate every output entry sequentially in a fixed order,
so results are bitwise reproducible and independent of batch sizes and
thread counts.  Complex data is passed as separate real and imaginary
arrays, which lets the compiler vectorize the innermost loop.
"""

import numba
import numpy as np

FOUR_PI = 4.0 * np.pi

# the system TBB may be too old for numba; prefer the other layers
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True)
def apply_transposed(at_re, at_im, x_re, x_im, out_re, out_im):
    """``out[j, :] += A @ x[j, :]`` for every row ``j``, with ``at = A.T``.

    Rows are processed in pairs sharing the loads of ``A``; the arithmetic
    per output entry is identical for paired and single rows.
    """
    n, kdim = x_re.shape
    idim = at_re.shape[1]
    j = 0
    while j + 2 <= n:
        for k in range(kdim):
            xr0 = x_re[j, k]
            xi0 = x_im[j, k]
            xr1 = x_re[j + 1, k]
            xi1 = x_im[j + 1, k]
            for i in range(idim):
                ar = at_re[k, i]
                ai = at_im[k, i]
                out_re[j, i] += ar * xr0 - ai * xi0
                out_im[j, i] += ar * xi0 + ai * xr0
                out_re[j + 1, i] += ar * xr1 - ai * xi1
                out_im[j + 1, i] += ar * xi1 + ai * xr1
        j += 2
    while j < n:
        for k in range(kdim):
            xr0 = x_re[j, k]
            xi0 = x_im[j, k]
            for i in range(idim):
                ar = at_re[k, i]
                ai = at_im[k, i]
                out_re[j, i] += ar * xr0 - ai * xi0
                out_im[j, i] += ar * xi0 + ai * xr0
        j += 1


@numba.njit(parallel=True, cache=True)
def nearfield_apply(tx, sx, v_re, v_im, t_perm, s_perm, blocks, kappa, skip_diagonal,
                    out_re, out_im, singular):
    """Direct Helmholtz sums over index blocks in tree order.

    ``blocks[b] = (t_start, t_end, s_start, s_end)``.  Blocks are visited
    sequentially; rows inside a block are independent and may run in
    parallel.  ``singular[i]`` is set when row ``i`` met a zero distance
    that was not skipped as a diagonal entry.
    """
    for b in range(blocks.shape[0]):
        t0 = blocks[b, 0]
        t1 = blocks[b, 1]
        s0 = blocks[b, 2]
        s1 = blocks[b, 3]
        for i in numba.prange(t0, t1):
            xi0 = tx[i, 0]
            xi1 = tx[i, 1]
            xi2 = tx[i, 2]
            gi = t_perm[i]
            acc_re = 0.0
            acc_im = 0.0
            for j in range(s0, s1):
                if skip_diagonal and s_perm[j] == gi:
                    continue
                d0 = xi0 - sx[j, 0]
                d1 = xi1 - sx[j, 1]
                d2 = xi2 - sx[j, 2]
                r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                if r == 0.0:
                    singular[i] = 1
                    continue
                w = 1.0 / (FOUR_PI * r)
                kr = kappa * r
                fr = np.cos(kr) * w
                fi = np.sin(kr) * w
                acc_re += fr * v_re[j] - fi * v_im[j]
                acc_im += fr * v_im[j] + fi * v_re[j]
            out_re[i] += acc_re
            out_im[i] += acc_im
