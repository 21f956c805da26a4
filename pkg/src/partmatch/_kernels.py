"""Batch operator kernels over CSR-style adjacency arrays.

All kernels take a 2-D int64 ``states`` array (one row per matching state,
one column per query variable, ``-1`` = unbound) and return new arrays.
They are compiled with ``nogil`` so worker threads run them concurrently.

Adjacency layout: ``keys`` sorted unique owner vertices, ``offsets`` of
length ``len(keys) + 1``, and per-key segments of ``lbls``/``nbrs`` sorted
by ``(label, neighbour)``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

UNBOUND = -1
ANY_LABEL = -1
NO_LABEL = -2

_jit = njit(nogil=True, cache=True)


@_jit
def segment(keys, offsets, v):
    i = np.searchsorted(keys, v)
    if i < keys.shape[0] and keys[i] == v:
        return offsets[i], offsets[i + 1]
    return 0, 0


@_jit
def label_range(lbls, lo, hi, label):
    if label == ANY_LABEL:
        return lo, hi
    if label == NO_LABEL or lo == hi:
        return lo, lo
    sub = lbls[lo:hi]
    return lo + np.searchsorted(sub, label, "left"), lo + np.searchsorted(sub, label, "right")


@_jit
def _clashes(row, x):
    for c in range(row.shape[0]):
        if row[c] == x:
            return True
    return False


@_jit
def expand(states, bound_col, new_col, keys, offsets, lbls, nbrs, label, injective):
    """Vertex-bound step: bind ``new_col`` to every neighbour of ``bound_col``."""
    k = states.shape[0]
    count = 0
    for r in range(k):
        lo, hi = segment(keys, offsets, states[r, bound_col])
        lo, hi = label_range(lbls, lo, hi, label)
        if not injective:
            count += hi - lo
        else:
            for j in range(lo, hi):
                if not _clashes(states[r], nbrs[j]):
                    count += 1
    out = np.empty((count, states.shape[1]), dtype=np.int64)
    w = 0
    for r in range(k):
        lo, hi = segment(keys, offsets, states[r, bound_col])
        lo, hi = label_range(lbls, lo, hi, label)
        for j in range(lo, hi):
            x = nbrs[j]
            if injective and _clashes(states[r], x):
                continue
            out[w, :] = states[r, :]
            out[w, new_col] = x
            w += 1
    return out


@_jit
def _unbound_ok(row, s, d, src_col, dst_col, injective):
    if src_col == dst_col:
        return s == d and not (injective and _clashes(row, s))
    if injective:
        return s != d and not _clashes(row, s) and not _clashes(row, d)
    return True


@_jit
def unbound(states, src_col, dst_col, keys, offsets, lbls, nbrs, label, injective):
    """Scan every local edge and bind both endpoints of the predicate."""
    k = states.shape[0]
    count = 0
    for r in range(k):
        for i in range(keys.shape[0]):
            s = keys[i]
            lo, hi = label_range(lbls, offsets[i], offsets[i + 1], label)
            for j in range(lo, hi):
                if _unbound_ok(states[r], s, nbrs[j], src_col, dst_col, injective):
                    count += 1
    out = np.empty((count, states.shape[1]), dtype=np.int64)
    w = 0
    for r in range(k):
        for i in range(keys.shape[0]):
            s = keys[i]
            lo, hi = label_range(lbls, offsets[i], offsets[i + 1], label)
            for j in range(lo, hi):
                d = nbrs[j]
                if _unbound_ok(states[r], s, d, src_col, dst_col, injective):
                    out[w, :] = states[r, :]
                    out[w, src_col] = s
                    out[w, dst_col] = d
                    w += 1
    return out


@_jit
def contains(keys, offsets, lbls, nbrs, s, label, d):
    lo, hi = segment(keys, offsets, s)
    if label == ANY_LABEL:
        for j in range(lo, hi):
            if nbrs[j] == d:
                return True
        return False
    lo, hi = label_range(lbls, lo, hi, label)
    if lo == hi:
        return False
    i = lo + np.searchsorted(nbrs[lo:hi], d)
    return i < hi and nbrs[i] == d


@_jit
def edge_check(states, src_col, dst_col, keys, offsets, lbls, nbrs, label):
    """Keep the states whose bound ``(src, label, dst)`` edge exists locally."""
    k = states.shape[0]
    keep = np.zeros(k, dtype=np.bool_)
    for r in range(k):
        keep[r] = contains(keys, offsets, lbls, nbrs, states[r, src_col], label, states[r, dst_col])
    return states[keep]


@_jit
def bucket_rows(states, targets, P):
    """Counting sort of ``states`` rows by target partition.

    Returns the reordered rows and ``P + 1`` bucket bounds.
    """
    bounds = np.zeros(P + 1, dtype=np.int64)
    for r in range(targets.shape[0]):
        bounds[targets[r] + 1] += 1
    for p in range(P):
        bounds[p + 1] += bounds[p]
    fill = bounds[:P].copy()
    out = np.empty_like(states)
    for r in range(targets.shape[0]):
        t = targets[r]
        out[fill[t], :] = states[r, :]
        fill[t] += 1
    return out, bounds
