"""Compiled inner loops for the two scoring engines.

Both kernels return, per candidate, the integer pair
(solids of the window inside the mask, solids of the window). They share
no code beyond that contract so that one can check the other.
"""

import os
import warnings

import numba
import numpy as np
from numba import njit, prange, types
from numba.extending import intrinsic

# the bundled TBB is too old; skip probing it unless the user chose a layer
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"
with warnings.catch_warnings():
    warnings.simplefilter("ignore", numba.NumbaWarning)
    from numba.np.ufunc import parallel as _parallel

    _parallel._launch_threads()


@intrinsic
def _popcount64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@njit(cache=True, parallel=True)
def reference_counts(terrain, mask, pivot, cand, num, den):
    """Naive triple loop over every mask-sized window voxel.

    terrain, mask: uint8 dense arrays. Out-of-bounds terrain reads are void.
    """
    ti_n, tj_n, tk_n = terrain.shape
    mi_n, mj_n, mk_n = mask.shape
    for n in prange(cand.shape[0]):
        ci = cand[n, 0] - pivot[0]
        cj = cand[n, 1] - pivot[1]
        ck = cand[n, 2] - pivot[2]
        inner = 0
        solids = 0
        for a in range(mi_n):
            for b in range(mj_n):
                for c in range(mk_n):
                    ti = ci + a
                    tj = cj + b
                    tk = ck + c
                    if ti < 0 or ti >= ti_n or tj < 0 or tj >= tj_n or tk < 0 or tk >= tk_n:
                        continue
                    t = terrain[ti, tj, tk]
                    inner += t * mask[a, b, c]
                    solids += t * t
        num[n] = inner
        den[n] = solids


@njit(cache=True)
def _box_sum(svt, i0, i1, j0, j1, k0, k1):
    return (svt[i1, j1, k1] - svt[i0, j1, k1] - svt[i1, j0, k1] - svt[i1, j1, k0]
            + svt[i0, j0, k1] + svt[i0, j1, k0] + svt[i1, j0, k0] - svt[i0, j0, k0])


@njit(cache=True, parallel=True)
def window_words(words, tk_n, depth, nq, halo_i, halo_j):
    """Vertical windows of every column for every window start.

    Returns uint64[K + depth - 1, I + 2*halo_i, J + 2*halo_j, nq] where entry
    ``[s, i, j]`` holds terrain bits ``s - depth + 1 ... s`` of column
    ``(i - halo_i, j - halo_j)`` re-based to bit 0; outside voxels are void.
    """
    ti_n, tj_n, nw = words.shape
    starts = tk_n + depth - 1
    out = np.zeros((starts, ti_n + 2 * halo_i, tj_n + 2 * halo_j, nq), dtype=np.uint64)
    for s in prange(starts):
        lo = s - depth + 1
        for i in range(ti_n):
            for j in range(tj_n):
                for q in range(nq):
                    b = lo + 64 * q
                    acc = np.uint64(0)
                    # gather the word bit-by-bit-word: low part then high part
                    if b > -64 and b < tk_n:
                        w = b >> 6 if b >= 0 else -1
                        sh = b - 64 * w
                        if w >= 0:
                            acc = words[i, j, w] >> np.uint64(sh)
                        if sh > 0 and w + 1 < nw:
                            acc |= words[i, j, w + 1] << np.uint64(64 - sh)
                    rem = depth - 64 * q
                    if rem < 64:
                        acc &= (np.uint64(1) << np.uint64(rem)) - np.uint64(1)
                    out[s, i + halo_i, j + halo_j, q] = acc
    return out


@njit(cache=True)
def _column_window(col, nw, lo, depth):
    """Bits ``lo ... lo+depth-1`` of one packed column, re-based to bit 0."""
    acc = np.uint64(0)
    if lo >= 64 * nw or lo <= -64:
        return acc
    if lo >= 0:
        w = lo >> 6
        sh = lo & 63
        acc = col[w] >> np.uint64(sh)
        if sh > 0 and w + 1 < nw:
            acc |= col[w + 1] << np.uint64(64 - sh)
    else:
        acc = col[0] << np.uint64(-lo)
    if depth < 64:
        acc &= (np.uint64(1) << np.uint64(depth)) - np.uint64(1)
    return acc


@njit(cache=True, parallel=True)
def grouped_windows(words, tk_n, depth, halo_i, halo_j, group):
    """Window words for masks at most 64 voxels deep, plus their counts.

    For every window start ``s`` (the candidate layer) this packs the
    ``depth``-bit vertical windows of ``group`` neighbouring columns into one
    word. Result ``gw[s, i, r, m]`` covers padded columns ``j = m*group + r
    ... j + group - 1`` at bit offsets ``0, depth, ...``; the padding is
    ``halo_i``/``halo_j`` void columns per side. ``sat[s]`` is the summed-area
    table of per-column window popcounts over the padded lateral grid.
    """
    ti_n, tj_n, nw = words.shape
    n_s = tk_n + depth - 1
    pi_n = ti_n + 2 * halo_i
    pj_n = tj_n + 2 * halo_j
    n_m = (pj_n + group - 1) // group
    gw = np.zeros((n_s, pi_n, group, n_m), dtype=np.uint64)
    sat = np.zeros((n_s, pi_n + 1, pj_n + 1), dtype=np.int32)
    for s in prange(n_s):
        lo = s - depth + 1
        plain = np.zeros((pi_n, pj_n + group), dtype=np.uint64)
        for i in range(ti_n):
            for j in range(tj_n):
                plain[i + halo_i, j + halo_j] = _column_window(words[i, j], nw, lo, depth)
        for i in range(pi_n):
            run = 0
            for j in range(pj_n):
                run += _popcount64(plain[i, j])
                sat[s, i + 1, j + 1] = sat[s, i, j + 1] + run
            for j in range(pj_n):
                acc = np.uint64(0)
                for t in range(group):
                    acc |= plain[i, j + t] << np.uint64(depth * t)
                gw[s, i, j % group, j // group] = acc
    return gw, sat


@njit(cache=True, parallel=True)
def packed_counts_grouped(gw, sat, gmask, group, row_span, mask_shape, cand, num, den):
    """Scoring for masks at most 64 voxels deep; see :func:`grouped_windows`.

    gmask: (MI, U) mask words, columns ``u*group ...`` packed like ``gw``.
    row_span: (MI, 2) half-open range of non-empty groups per mask row.
    """
    mi_n = mask_shape[0]
    mj_n = mask_shape[1]
    for n in prange(cand.shape[0]):
        pi = cand[n, 0]
        pj = cand[n, 1]
        pk = cand[n, 2]
        plane = gw[pk]
        r = pj % group
        m0 = pj // group
        acc = np.uint64(0)
        for a in range(mi_n):
            u0 = row_span[a, 0]
            u1 = row_span[a, 1]
            trow = plane[pi + a, r, m0 + u0:m0 + u1]
            mrow = gmask[a, u0:u1]
            for u in range(u1 - u0):
                acc += _popcount64(trow[u] & mrow[u])
        num[n] = np.int64(acc)
        st = sat[pk]
        # padded lateral coordinates: the window starts at (pi, pj)
        den[n] = np.int64(st[pi + mi_n, pj + mj_n]) - st[pi, pj + mj_n] - st[pi + mi_n, pj] + st[pi, pj]


@njit(cache=True)
def _denominator(svt, pivot, mi_n, mj_n, mask_depth, pi, pj, pk):
    ti_n = svt.shape[0] - 1
    tj_n = svt.shape[1] - 1
    tk_n = svt.shape[2] - 1
    ci = pi - pivot[0]
    cj = pj - pivot[1]
    ck = pk - pivot[2]
    i0 = min(max(ci, 0), ti_n)
    i1 = min(max(ci + mi_n, 0), ti_n)
    j0 = min(max(cj, 0), tj_n)
    j1 = min(max(cj + mj_n, 0), tj_n)
    k0 = min(max(ck, 0), tk_n)
    k1 = min(max(ck + mask_depth, 0), tk_n)
    return _box_sum(svt, i0, i1, j0, j1, k0, k1)


@njit(cache=True, parallel=True)
def packed_counts(win, mask_words, row_span, mask_depth, pivot, svt, cand, num, den):
    """Scoring for masks of any depth: AND + popcount per column and word.

    win: :func:`window_words` output, indexed by candidate layer.
    row_span: (MI, 2) half-open range of non-empty mask columns per row.
    """
    mi_n = mask_words.shape[0]
    mj_n = mask_words.shape[1]
    nq = mask_words.shape[2]
    for n in prange(cand.shape[0]):
        pi = cand[n, 0]
        pj = cand[n, 1]
        pk = cand[n, 2]
        plane = win[pk]
        acc = np.uint64(0)
        for a in range(mi_n):
            trow = plane[pi + a]
            mrow = mask_words[a]
            for q in range(nq):
                for b in range(row_span[a, 0], row_span[a, 1]):
                    acc += _popcount64(trow[pj + b, q] & mrow[b, q])
        num[n] = np.int64(acc)
        den[n] = _denominator(svt, pivot, mi_n, mj_n, mask_depth, pi, pj, pk)
