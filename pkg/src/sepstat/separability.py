"""Minimal misclassification counts and exact partition counting.

Two error metrics are supported for a half-space classifier that predicts
class Y on its positive side:

* ``MAXSIDE``: ``max(m_Y, m_Z)``, the larger of the two per-class error counts;
* ``TOTAL``: ``m_Y + m_Z``, the plain number of misclassified points.

All exact routines work from the point set's :class:`~sepstat.geometry.SignTable`,
so a labeling costs one matrix product once the table exists.
"""
from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetError, InputError
from .geometry import DirectedSeparator, PointSet, read_points_csv

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10**9
BRUTE_FORCE_LIMIT = 10**6
_CHUNK = 512


class Metric(str, enum.Enum):
    MAXSIDE = "maxside"
    TOTAL = "total"


def _metric(metric) -> Metric:
    try:
        return Metric(metric)
    except ValueError:
        raise InputError(f"unknown metric {metric!r}") from None


_Y_ALIASES = {"y", "1", "true"}
_Z_ALIASES = {"z", "0", "false"}


def parse_label(value) -> bool:
    """``True`` for class Y.  Accepts Y/Z, 1/0 (1 means Y) and booleans."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    text = str(value).strip().lower()
    if text in _Y_ALIASES:
        return True
    if text in _Z_ALIASES:
        return False
    raise InputError(f"unknown class label {value!r}")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Point set plus a Y/Z labeling, oriented so that Y is the smaller class."""

    base: PointSet
    labels: np.ndarray
    swapped: bool = False

    @classmethod
    def from_labels(cls, base: PointSet, labels: Iterable) -> "LabeledSample":
        lab = np.array([parse_label(v) for v in labels], dtype=bool)
        if lab.shape != (base.n,):
            raise InputError(f"{lab.size} labels for {base.n} points")
        k = int(lab.sum())
        if k == 0 or k == base.n:
            raise InputError("both classes must be non-empty")
        swapped = k > base.n - k
        if swapped:
            lab = ~lab
        lab.setflags(write=False)
        return cls(base, lab, swapped)

    @classmethod
    def from_arrays(cls, coords, labels) -> "LabeledSample":
        return cls.from_labels(PointSet.from_coords(coords), labels)

    @classmethod
    def read_csv(cls, path_or_text) -> "LabeledSample":
        coords, labels = read_points_csv(path_or_text, has_label=True)
        return cls.from_labels(PointSet.from_coords(coords), labels)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def k(self) -> int:
        return int(self.labels.sum())

    @property
    def l(self) -> int:
        return self.n - self.k


@dataclass(frozen=True)
class SeparabilityResult:
    min_errors_maxside: int
    min_errors_total: int
    witness_maxside: DirectedSeparator
    witness_total: DirectedSeparator

    def for_metric(self, metric) -> int:
        return self.min_errors_maxside if _metric(metric) is Metric.MAXSIDE else self.min_errors_total


def side_counts(ps: PointSet, labels, sep: DirectedSeparator) -> tuple[int, int]:
    """``(m_Y, m_Z)``: Y points off the positive side, Z points on it."""
    lab = np.asarray([parse_label(v) for v in labels], dtype=bool)
    pos = sep.positive_side(ps)
    return int(np.sum(lab & ~pos)), int(np.sum(~lab & pos))


def _side_errors(pos: np.ndarray, neg: np.ndarray, L: np.ndarray):
    """Per anchor subset and labeling: errors for both orientations.

    Anchors are always placed on their own class's side, which is optimal
    for either metric.  ``L`` is ``(n, B)`` with 1.0 for Y.
    """
    posf = pos.astype(np.float64)
    negf = neg.astype(np.float64)
    y_pos = posf @ L
    y_neg = negf @ L
    z_pos = posf.sum(axis=1)[:, None] - y_pos
    z_neg = negf.sum(axis=1)[:, None] - y_neg
    # orientation +1: positive side is pos; orientation -1: positive side is neg
    return (y_neg, z_pos), (y_pos, z_neg)


def _combine(my, mz, metric: Metric):
    return np.maximum(my, mz) if metric is Metric.MAXSIDE else my + mz


def min_errors_batch(ps: PointSet, labels: np.ndarray, metric) -> np.ndarray:
    """Exact minimal errors for many labelings at once.

    ``labels`` is ``(B, n)`` boolean (True = Y); returns ``(B,)`` ints.
    Class sizes may differ between rows.
    """
    metric = _metric(metric)
    table = ps.sign_table
    L = np.asarray(labels, dtype=np.float64).T
    best = np.full(L.shape[1], np.inf)
    for s in range(0, len(table.anchors), 4096):
        plus, minus = _side_errors(table.pos[s:s + 4096], table.neg[s:s + 4096], L)
        e = np.minimum(_combine(*plus, metric), _combine(*minus, metric))
        best = np.minimum(best, e.min(axis=0))
    return best.astype(np.int64)


def _witness(table, c: int, orient: int, lab: np.ndarray) -> DirectedSeparator:
    anchors = tuple(int(a) for a in table.anchors[c])
    return DirectedSeparator(anchors, orient, tuple(bool(lab[a]) for a in anchors))


def min_errors(sample: LabeledSample, metric=None) -> SeparabilityResult:
    """Exact minimum over all half-space classifiers, under both metrics.

    ``metric`` is accepted for call-site symmetry; both minima are always
    computed since they share the same pass.
    """
    if metric is not None:
        _metric(metric)
    table = sample.base.sign_table
    lab = sample.labels
    L = lab.astype(np.float64)[:, None]
    (yn, zp), (yp, zn) = _side_errors(table.pos, table.neg, L)
    out = {}
    for met in Metric:
        e = np.stack([_combine(yn, zp, met)[:, 0], _combine(yp, zn, met)[:, 0]])
        o, c = np.unravel_index(int(np.argmin(e)), e.shape)
        out[met] = (int(e[o, c]), _witness(table, int(c), 1 if o == 0 else -1, lab))
    return SeparabilityResult(
        out[Metric.MAXSIDE][0], out[Metric.TOTAL][0], out[Metric.MAXSIDE][1], out[Metric.TOTAL][1]
    )


def is_near_separable(sample: LabeledSample, m: int, metric) -> tuple[bool, DirectedSeparator | None]:
    """Whether some half-space has at most ``m`` errors; stops at the first witness."""
    metric = _metric(metric)
    if m < 0:
        raise InputError("m must be non-negative")
    table = sample.base.sign_table
    lab = sample.labels
    L = lab.astype(np.float64)[:, None]
    for s in range(0, len(table.anchors), _CHUNK):
        (yn, zp), (yp, zn) = _side_errors(table.pos[s:s + _CHUNK], table.neg[s:s + _CHUNK], L)
        for orient, (my, mz) in ((1, (yn, zp)), (-1, (yp, zn))):
            hit = np.flatnonzero(_combine(my, mz, metric)[:, 0] <= m)
            if hit.size:
                return True, _witness(table, s + int(hit[0]), orient, lab)
    return False, None


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def _check_k(ps: PointSet, k: int) -> None:
    if not 1 <= k <= ps.n - 1:
        raise InputError(f"k must lie in [1, n-1], got {k}")
    if ps.n > 63:
        raise InputError("partition counting supports at most 63 points")


def count_ksets(ps: PointSet, k: int) -> int:
    """Number of k-point subsets cut off by an open half-space."""
    _check_k(ps, k)
    masks = ps.sign_table.halfspace_masks
    return int(np.sum(_popcount(masks) == k))


def _flip_shapes(n: int, p: int, k: int, m: int, metric: Metric):
    """(removed, added) counts turning a size-p set into a size-k one within budget."""
    for a in range(0, min(p, m) + 1):
        b = k - p + a
        if b < 0 or b > n - p:
            continue
        if metric is Metric.MAXSIDE and b > m:
            continue
        if metric is Metric.TOTAL and a + b > m:
            continue
        yield a, b


def flip_work(ps: PointSet, k: int, m: int, metric) -> int:
    """Candidate labelings the flip enumeration would generate (before dedup)."""
    metric = _metric(metric)
    n = ps.n
    sizes = np.bincount(_popcount(ps.sign_table.halfspace_masks), minlength=n + 1)
    work = 0
    for p, cnt in enumerate(sizes):
        if cnt:
            work += int(cnt) * sum(math.comb(p, a) * math.comb(n - p, b) for a, b in _flip_shapes(n, p, k, m, metric))
    return work


def branch_work(ps: PointSet, k: int) -> int:
    """Worst-case node visits times live sets for the branch-and-bound counter."""
    return ps.n * math.comb(ps.n, k) * len(ps.sign_table.halfspace_masks)


@lru_cache(maxsize=256)
def _combos(p: int, a: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(p), a)), dtype=np.int64).reshape(-1, a)


def _bits_of(mask: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    members = np.array([1 << i for i in range(n) if mask >> i & 1], dtype=np.uint64)
    others = np.array([1 << i for i in range(n) if not mask >> i & 1], dtype=np.uint64)
    return members, others


def _subset_sums(bits: np.ndarray, a: int) -> np.ndarray:
    if a == 0:
        return np.zeros(1, dtype=np.uint64)
    idx = _combos(len(bits), a)
    return np.bitwise_or.reduce(bits[idx], axis=1)


def _count_by_flips(ps: PointSet, k: int, m: int, metric: Metric) -> int:
    n = ps.n
    masks = ps.sign_table.halfspace_masks
    sizes = _popcount(masks)
    found = np.zeros(0, dtype=np.uint64)
    pending: list[np.ndarray] = []
    pending_size = 0
    for mask, p in zip(masks.tolist(), sizes.tolist()):
        shapes = list(_flip_shapes(n, p, k, m, metric))
        if not shapes:
            continue
        members, others = _bits_of(mask, n)
        for a, b in shapes:
            out = _subset_sums(members, a)
            add = _subset_sums(others, b)
            block = ((np.uint64(mask) ^ out)[:, None] | add[None, :]).ravel()
            pending.append(block)
            pending_size += block.size
        if pending_size > 20_000_000:
            found = np.unique(np.concatenate([found, *pending]))
            pending, pending_size = [], 0
    if pending:
        found = np.unique(np.concatenate([found, *pending]))
    return int(found.size)


def _angular_order(ps: PointSet) -> np.ndarray:
    X = ps.coords
    c = X - X.mean(axis=0)
    if ps.dim == 1:
        return np.argsort(np.abs(c[:, 0]))[::-1].copy()
    return np.argsort(np.arctan2(c[:, 1], c[:, 0]), kind="stable")


def _count_by_branching(ps: PointSet, k: int, m: int, metric: Metric) -> int:
    from ._bnb import count_labelings

    masks = ps.sign_table.halfspace_masks
    return count_labelings(masks, ps.n, k, m, metric is Metric.TOTAL, _angular_order(ps))


def count_near_separable_partitions(
    ps: PointSet,
    k: int,
    m: int,
    metric,
    budget: int | None = DEFAULT_BUDGET,
    strategy: str = "auto",
) -> int:
    """Exact number of size-k labelings that are separable within ``m`` errors.

    ``strategy="flips"`` expands every distinct half-space set by all
    admissible error flips and deduplicates the resulting bitmasks;
    ``"branch"`` runs a branch-and-bound over labelings and suits large
    ``m``.  ``"auto"`` takes flips when it fits the budget, else branching.
    ``budget=None`` disables the work guard.
    """
    metric = _metric(metric)
    _check_k(ps, k)
    if m < 0:
        raise InputError("m must be non-negative")
    if m >= k:
        return math.comb(ps.n, k)
    if strategy not in ("auto", "flips", "branch"):
        raise InputError(f"unknown strategy {strategy!r}")
    fw = flip_work(ps, k, m, metric)
    bw = branch_work(ps, k)
    if strategy == "auto":
        strategy = "flips" if budget is None or fw <= budget or fw <= bw else "branch"
    work = fw if strategy == "flips" else bw
    if budget is not None and work > budget:
        raise BudgetError(
            f"projected work {work:.3g} exceeds budget {budget:.3g}; use Monte-Carlo permutations"
        )
    log.debug("counting with %s (flip work %d, branch bound %d)", strategy, fw, bw)
    if strategy == "flips":
        return _count_by_flips(ps, k, m, metric)
    return _count_by_branching(ps, k, m, metric)


def iter_labelings(n: int, k: int, chunk: int = 4096):
    """All size-k labelings as boolean ``(B, n)`` blocks in lexicographic order."""
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        lab = np.zeros((len(block), n), dtype=bool)
        rows = np.repeat(np.arange(len(block)), k)
        lab[rows, np.array(block).ravel()] = True
        yield lab


def brute_force_partition_count(ps: PointSet, k: int, m: int, metric) -> int:
    """Ground truth: test every one of the C(n, k) labelings."""
    metric = _metric(metric)
    _check_k(ps, k)
    total = math.comb(ps.n, k)
    if total > BRUTE_FORCE_LIMIT:
        raise BudgetError(f"C({ps.n},{k}) = {total} labelings exceeds the brute-force limit")
    return int(sum(np.sum(min_errors_batch(ps, lab, metric) <= m) for lab in iter_labelings(ps.n, k)))


@dataclass(frozen=True)
class ApproxConfig:
    """Large-C soft-margin fit by averaged Pegasos subgradient steps."""

    steps_per_point: int = 200
    lam: float = 1e-4
    seed: int = 0


def _standardize(X: np.ndarray) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    sd = Xc.std(axis=0)
    sd[sd == 0] = 1.0
    return np.hstack([Xc / sd, np.ones((X.shape[0], 1))])


def approx_min_errors_batch(
    X: np.ndarray, labels: np.ndarray, config: ApproxConfig = ApproxConfig(), metric=Metric.TOTAL
) -> np.ndarray:
    """Errors of a hinge-loss linear classifier per labeling; upper-bounds the exact minimum.

    The sample order of the subgradient steps depends on ``config.seed`` only,
    so each row's result is a deterministic function of its labeling.
    """
    metric = _metric(metric)
    F = _standardize(np.asarray(X, dtype=float))
    n = F.shape[0]
    lab = np.atleast_2d(np.asarray(labels, dtype=bool))
    ysign = np.where(lab, 1.0, -1.0)  # (B, n)
    steps = config.steps_per_point * n
    order = np.random.default_rng([config.seed, 0xA5]).integers(0, n, size=steps)
    W = np.zeros((lab.shape[0], F.shape[1]))
    avg = np.zeros_like(W)
    for t, i in enumerate(order.tolist(), start=1):
        x = F[i]
        y = ysign[:, i]
        viol = y * (W @ x) < 1.0
        W *= 1.0 - 1.0 / t
        W[viol] += (y[viol] / (config.lam * t))[:, None] * x
        avg += W
    avg /= steps
    k = lab.sum(axis=1)
    best = np.full(lab.shape[0], n, dtype=np.int64)
    for w in (avg, W):
        pos = (F @ w.T).T > 0
        my = np.sum(lab & ~pos, axis=1)
        mz = np.sum(~lab & pos, axis=1)
        # the flipped normal is another half-plane: errors become (k - my, l - mz)
        for a, b in ((my, mz), (k - my, (n - k) - mz)):
            best = np.minimum(best, _combine(a, b, metric))
    return best


def approx_min_errors(sample: LabeledSample, config: ApproxConfig = ApproxConfig(), metric=Metric.TOTAL) -> int:
    """Upper bound on the exact minimal error count from a linear SVM-style fit.

    The bias is conservative: the fitted classifier minimises hinge loss,
    not the error count, so the returned value can only overstate the
    exact minimum.
    """
    return int(approx_min_errors_batch(sample.base.coords, sample.labels[None, :], config, metric)[0])
