"""Homogeneity tests built on near-linear separability."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import (
    Assumption,
    accuracy_test_bound,
    angle_test_bound,
    linear_test_bound,
)
from .errors import InputError
from .geometry import sweep_schedule
from .separability import (
    DEFAULT_BUDGET,
    ApproxConfig,
    LabeledSample,
    Metric,
    _combine,
    _metric,
    approx_min_errors_batch,
    count_near_separable_partitions,
    min_errors,
    min_errors_batch,
)

DEFAULT_ALPHAS = (0.01, 0.05, 0.1)
_PERM_CHUNK = 256


@dataclass(frozen=True)
class PermutationConfig:
    """Monte-Carlo settings.  Relabeling ``i`` depends only on ``(seed, i)``."""

    num_permutations: int = 10_000
    seed: int = 0
    epsilon: float | None = None
    mode: str = "exact"
    workers: int = 1
    approx: ApproxConfig = ApproxConfig()

    def __post_init__(self):
        if self.mode not in ("exact", "approx"):
            raise InputError(f"mode must be 'exact' or 'approx', got {self.mode!r}")
        if self.num_permutations < 1:
            raise InputError("need at least one permutation")
        if self.epsilon is not None and self.num_permutations < self.required_permutations(self.epsilon):
            raise InputError(
                f"{self.num_permutations} permutations cannot reach standard error {self.epsilon}"
            )

    @staticmethod
    def required_permutations(epsilon: float) -> int:
        # p(1 - p) <= 1/4
        return math.ceil(epsilon ** -2 / 4.0)

    @classmethod
    def for_accuracy(cls, epsilon: float, **kw) -> "PermutationConfig":
        return cls(num_permutations=cls.required_permutations(epsilon), epsilon=epsilon, **kw)


@dataclass(frozen=True)
class TestOutcome:
    statistic_m: int
    metric: str
    method: str
    p_value: float
    ci_halfwidth: float = 0.0
    assumption: str | None = None
    reject_at: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @classmethod
    def make(cls, statistic_m, metric, method, p_value, alphas=DEFAULT_ALPHAS, **kw):
        p = float(p_value)
        return cls(
            statistic_m=int(statistic_m),
            metric=_metric(metric).value,
            method=method,
            p_value=p,
            reject_at={repr(float(a)): p <= a for a in alphas},
            **kw,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class AngleStatistic:
    mu: float
    m: int
    metric: str
    intervals: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["intervals"] = [list(iv) for iv in self.intervals]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _observed(sample: LabeledSample, metric: Metric, m: int | None):
    stat = min_errors(sample).for_metric(metric)
    return stat, stat if m is None else int(m)


def exact_conditional_pvalue(
    sample: LabeledSample,
    m: int | None = None,
    metric=Metric.MAXSIDE,
    budget: int | None = DEFAULT_BUDGET,
    strategy: str = "auto",
) -> TestOutcome:
    """Share of all C(n, k) relabelings that are separable within ``m`` errors.

    ``m`` defaults to the observed minimal error count.  With an explicit
    ``m`` smaller than the observed count the data are outside the
    rejection region and the p-value is 1.
    """
    metric = _metric(metric)
    stat, m = _observed(sample, metric, m)
    total = math.comb(sample.n, sample.k)
    details = {"n": sample.n, "k": sample.k, "l": sample.l, "m_evaluated": m}
    if stat > m:
        return TestOutcome.make(stat, metric, "exact_conditional", 1.0, details=details)
    count = count_near_separable_partitions(sample.base, sample.k, m, metric, budget=budget, strategy=strategy)
    details.update(count=count, partitions=total)
    return TestOutcome.make(stat, metric, "exact_conditional", count / total, details=details)


def permutation_labels(n: int, k: int, seed: int, start: int, stop: int) -> np.ndarray:
    """Relabelings ``start..stop-1`` as a boolean ``(stop - start, n)`` array."""
    out = np.zeros((stop - start, n), dtype=bool)
    for row, i in enumerate(range(start, stop)):
        out[row, np.random.default_rng([seed, i]).choice(n, size=k, replace=False)] = True
    return out


def _statistic_batch(sample: LabeledSample, labels: np.ndarray, metric: Metric, cfg: PermutationConfig):
    if cfg.mode == "exact":
        return min_errors_batch(sample.base, labels, metric)
    return approx_min_errors_batch(sample.base.coords, labels, cfg.approx, metric)


def _parallel_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def permutation_pvalue(
    sample: LabeledSample,
    m: int | None = None,
    metric=Metric.MAXSIDE,
    cfg: PermutationConfig = PermutationConfig(),
) -> TestOutcome:
    """Monte-Carlo estimate ``(1 + hits) / (1 + N)`` over random relabelings.

    The statistic is computed by the configured engine for the observed data
    and for every relabeling alike, so the test stays valid with the
    approximate engine too.
    """
    metric = _metric(metric)
    n, k = sample.n, sample.k
    stat = int(_statistic_batch(sample, sample.labels[None, :], metric, cfg)[0])
    m = stat if m is None else int(m)
    N = cfg.num_permutations
    details = {
        "n": n, "k": k, "l": sample.l, "m_evaluated": m,
        "engine": cfg.mode, "num_permutations": N, "seed": cfg.seed,
    }
    if stat > m:
        return TestOutcome.make(stat, metric, "monte_carlo", 1.0, details=details)

    def run(span):
        lab = permutation_labels(n, k, cfg.seed, *span)
        return int(np.sum(_statistic_batch(sample, lab, metric, cfg) <= m))

    spans = [(s, min(s + _PERM_CHUNK, N)) for s in range(0, N, _PERM_CHUNK)]
    hits = sum(_parallel_map(run, spans, cfg.workers))
    p = (1 + hits) / (1 + N)
    ci = 1.96 * math.sqrt(p * (1 - p) / N)
    details["hits"] = hits
    return TestOutcome.make(stat, metric, "monte_carlo", p, ci_halfwidth=ci, details=details)


def _merge(pieces):
    out = []
    for a, b in sorted(pieces):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return tuple(out)


def angle_measure(sample: LabeledSample, m: int, metric=Metric.MAXSIDE) -> AngleStatistic:
    """Total length of directions admitting a separating line with at most ``m`` errors.

    Within each interval of the sweep the projection order is fixed, and the
    best threshold is found by scanning prefix counts of that order.
    """
    metric = _metric(metric)
    if sample.base.dim != 2:
        raise InputError("angle measure is defined for planar samples")
    if m < 0:
        raise InputError("m must be non-negative")
    sched = sweep_schedule(sample.base)
    n, k = sample.n, sample.k
    lab = sample.labels[sched.orders].astype(np.int64)  # ascending offset to the left
    below_y = np.concatenate([np.zeros((lab.shape[0], 1), np.int64), np.cumsum(lab, axis=1)], axis=1)
    j = np.arange(n + 1)
    err_y = below_y  # Y points below the threshold are on the negative side
    err_z = (n - j)[None, :] - (k - below_y)
    good = _combine(err_y, err_z, metric).min(axis=1) <= m
    pieces = []
    for ok, (a, b) in zip(good.tolist(), sched.interval_bounds()):
        if not ok:
            continue
        if a < 0:
            pieces += [(a + 2 * math.pi, 2 * math.pi), (0.0, b)]
        else:
            pieces.append((a, b))
    intervals = _merge(pieces)
    mu = float(sum(b - a for a, b in intervals))
    return AngleStatistic(min(mu, 2 * math.pi), int(m), metric.value, intervals)


def angle_test(sample: LabeledSample, m: int = 0, metric=Metric.MAXSIDE) -> TestOutcome:
    """p-value bound from the measure of near-separating directions."""
    metric = _metric(metric)
    stat = angle_measure(sample, m, metric)
    details = {"n": sample.n, "k": sample.k, "l": sample.l, "m_evaluated": m, "mu": stat.mu}
    if stat.mu <= 0.0:
        return TestOutcome.make(m, metric, "bound", 1.0, details=details)
    rep = angle_test_bound(sample.n, sample.k, sample.l, m, stat.mu, metric)
    details.update(raw=rep.raw, formula_id=rep.formula_id)
    return TestOutcome.make(m, metric, "bound", rep.clamped, details=details)


def linear_test(sample: LabeledSample, assumption, metric=Metric.MAXSIDE, m: int | None = None) -> TestOutcome:
    """Closed-form p-value bound at the observed (or a supplied) error count.

    A supplied ``m`` lets an externally trained classifier's error count be
    assessed instead of the optimum over all half-planes.
    """
    metric = _metric(metric)
    a = Assumption.parse(assumption)
    if sample.base.dim != 2:
        raise InputError("the closed-form bounds are planar")
    if m is None:
        m = min_errors(sample).for_metric(metric)
    n, k, l = sample.n, sample.k, sample.l
    details = {"n": n, "k": k, "l": l, "m_evaluated": int(m)}
    if m >= k:
        # every labeling qualifies
        details.update(raw=1.0, formula_id="trivial")
        return TestOutcome.make(m, metric, "bound", 1.0, assumption=a.value, details=details)
    if metric is Metric.MAXSIDE:
        rep = linear_test_bound(n, k, l, m, a)
    else:
        rep = accuracy_test_bound(n, k, m, a)
    details.update(raw=rep.raw, formula_id=rep.formula_id)
    return TestOutcome.make(m, metric, "bound", rep.clamped, assumption=a.value, details=details)


def bh_fdr(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values, in input order."""
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return p
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InputError("p-values must lie in [0, 1]")
    M = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * M / np.arange(1, M + 1)
    q = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(M)
    out[order] = np.minimum(q, 1.0)
    return out
