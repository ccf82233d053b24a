"""Branch-and-bound count of near-separable labelings (numba kernel).

Labels are assigned point by point.  For every half-space set still within
reach the kernel tracks the errors committed so far on each side; a subtree
is counted wholesale as soon as one set is guaranteed to stay within budget
for every completion, and dropped once no set can get back under budget.
"""
from __future__ import annotations

from math import comb

import numpy as np
import numba as nb


@nb.njit(cache=True)
def _walk(t, q, n, m, total, masks, prem, alive, err_y, err_z, count, binom, order):
    r = n - t
    kept = 0
    for a in range(count[t]):
        h = alive[t, a]
        pr = prem[h, t]
        ey = err_y[t, a]
        ez = err_z[t, a]
        lo_y = ey + max(0, q - pr)
        lo_z = ez + max(0, pr - q)
        hi_y = ey + min(q, r - pr)
        hi_z = ez + min(pr, r - q)
        if total:
            if lo_y + lo_z > m:
                continue
            if hi_y + hi_z <= m:
                return binom[r, q]
        else:
            if lo_y > m or lo_z > m:
                continue
            if hi_y <= m and hi_z <= m:
                return binom[r, q]
        alive[t + 1, kept] = h
        err_y[t + 1, kept] = ey
        err_z[t + 1, kept] = ez
        kept += 1
    if kept == 0:
        return 0
    if r == 0:
        return 1
    bit = np.uint64(1) << np.uint64(order[t])
    found = 0
    count[t + 1] = kept
    if q > 0:
        # point joins Y: an error for every set that leaves it out
        for a in range(kept):
            if masks[alive[t + 1, a]] & bit == 0:
                err_y[t + 1, a] += 1
        found += _walk(t + 1, q - 1, n, m, total, masks, prem, alive, err_y, err_z, count, binom, order)
        for a in range(kept):
            if masks[alive[t + 1, a]] & bit == 0:
                err_y[t + 1, a] -= 1
    if r > q:
        count[t + 1] = kept
        for a in range(kept):
            if masks[alive[t + 1, a]] & bit != 0:
                err_z[t + 1, a] += 1
        found += _walk(t + 1, q, n, m, total, masks, prem, alive, err_y, err_z, count, binom, order)
        for a in range(kept):
            if masks[alive[t + 1, a]] & bit != 0:
                err_z[t + 1, a] -= 1
    return found


def count_labelings(masks: np.ndarray, n: int, k: int, m: int, total: bool, order: np.ndarray) -> int:
    """Number of size-``k`` subsets within ``m`` errors of some set in ``masks``."""
    masks = np.ascontiguousarray(masks, dtype=np.uint64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    h = len(masks)
    member = ((masks[:, None] >> order[None, :].astype(np.uint64)) & np.uint64(1)).astype(np.int64)
    prem = np.zeros((h, n + 1), dtype=np.int64)
    prem[:, :n] = np.cumsum(member[:, ::-1], axis=1)[:, ::-1]
    alive = np.zeros((n + 2, h), dtype=np.int64)
    alive[0] = np.arange(h)
    err_y = np.zeros((n + 2, h), dtype=np.int64)
    err_z = np.zeros((n + 2, h), dtype=np.int64)
    count = np.zeros(n + 2, dtype=np.int64)
    count[0] = h
    binom = np.array([[comb(a, b) for b in range(n + 1)] for a in range(n + 1)], dtype=np.int64)
    return int(_walk(0, k, n, m, total, masks, prem, alive, err_y, err_z, count, binom, order))
