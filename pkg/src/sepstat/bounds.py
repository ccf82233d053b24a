"""Closed-form upper bounds on separability probabilities and p-values.

Everything is evaluated in log space; ``BoundReport.raw`` is always
``exp(log_raw)`` so the two never disagree.  Raw values above one are kept
(they are what the formulas give) next to the clamped p-value.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .errors import InapplicableBoundError, InputError, UnsupportedAssumptionError
from .separability import Metric, _metric

_LOG_SQRT2 = 0.5 * math.log(2.0)


class Assumption(str, enum.Enum):
    """Distributional assumption on the pooled sample under the null.

    Listed from weakest to strongest; every stronger assumption implies the
    weaker ones.
    """

    EXCHANGEABLE_PROJCONT = "exchangeable"
    IID_PROJCONT = "iid"
    IID_SPHERICAL = "spherical"
    IID_NORMAL = "normal"

    @property
    def strength(self) -> int:
        return list(Assumption).index(self)

    def implies(self, other: "Assumption") -> bool:
        return self.strength >= other.strength

    @classmethod
    def parse(cls, value) -> "Assumption":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for a in cls:
            if text in (a.value, a.name.lower()):
                return a
        raise InputError(f"unknown assumption {value!r}")


_FORMULA = {
    Assumption.EXCHANGEABLE_PROJCONT: "kset-count",
    Assumption.IID_PROJCONT: "projcont-integral",
    Assumption.IID_SPHERICAL: "spherical-integral",
    Assumption.IID_NORMAL: "normal-integral",
}


@dataclass(frozen=True)
class BoundReport:
    formula_id: str
    assumption: str | None
    n: int
    k: int
    l: int
    m: int
    metric: str | None
    raw: float
    clamped: float
    log_raw: float

    @classmethod
    def from_log(cls, log_raw: float, formula_id: str, *, n, k, l, m=0, metric=None, assumption=None):
        raw = math.exp(log_raw) if log_raw < 709.0 else math.inf
        return cls(
            formula_id=formula_id,
            assumption=None if assumption is None else Assumption.parse(assumption).value,
            n=n,
            k=k,
            l=l,
            m=m,
            metric=None if metric is None else _metric(metric).value,
            raw=raw,
            clamped=min(raw, 1.0),
            log_raw=log_raw,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _log_binomial_gamma(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_binomial(n: int, k: int) -> float:
    """Natural log of C(n, k); exact integer evaluation up to n = 64."""
    if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))):
        raise InputError("log_binomial takes integers")
    if not 0 <= k <= n:
        raise InputError(f"need 0 <= k <= n, got n={n}, k={k}")
    if n <= 64:
        return math.log(math.comb(n, k))
    return _log_binomial_gamma(n, k)


def _log_numerator(n: int, k: int, assumption: Assumption) -> float:
    """Log of the bound on the expected number of k-sets."""
    if assumption is Assumption.EXCHANGEABLE_PROJCONT:
        return math.log(max(6.3 * n * k ** (1.0 / 3.0), 103.0 * n / 8.0))
    if assumption is Assumption.IID_PROJCONT:
        return math.log(10.0 * n) + 0.25 * math.log(k)
    if assumption is Assumption.IID_SPHERICAL:
        return math.log(8.0 * n / math.pi)
    return _LOG_SQRT2 + math.log(n)


def _log_p0(n: int, k: int, assumption: Assumption) -> float:
    return _log_numerator(n, k, assumption) - log_binomial(n, k)


def _check_sizes(n: int, k: int) -> None:
    if not (1 <= k and 2 * k <= n):
        raise InputError(f"need 1 <= k <= n/2, got n={n}, k={k}")


def p0_conditional_bound(n: int, k: int) -> BoundReport:
    """Chance that a uniformly random k-labeling of a fixed planar set is separable."""
    _check_sizes(n, k)
    a = Assumption.EXCHANGEABLE_PROJCONT
    return BoundReport.from_log(_log_p0(n, k, a), _FORMULA[a], n=n, k=k, l=n - k, assumption=a)


def p0_integral_bound(n: int, k: int, assumption) -> BoundReport:
    """Unconditional separability bound for i.i.d. samples."""
    a = Assumption.parse(assumption)
    if a is Assumption.EXCHANGEABLE_PROJCONT:
        raise UnsupportedAssumptionError(
            "integral bounds need independence; use p0_conditional_bound for exchangeable data"
        )
    _check_sizes(n, k)
    return BoundReport.from_log(_log_p0(n, k, a), _FORMULA[a], n=n, k=k, l=n - k, assumption=a)


def p0_bound(n: int, k: int, assumption) -> BoundReport:
    a = Assumption.parse(assumption)
    if a is Assumption.EXCHANGEABLE_PROJCONT:
        return p0_conditional_bound(n, k)
    return p0_integral_bound(n, k, a)


def linear_test_bound(n: int, k: int, l: int, m: int, assumption) -> BoundReport:
    """p-value bound when the samples are separable with at most ``m`` errors per class."""
    a = Assumption.parse(assumption)
    if k + l != n or k < 1 or k > l:
        raise InputError(f"need k + l = n and 1 <= k <= l, got n={n}, k={k}, l={l}")
    if m < 0:
        raise InputError("m must be non-negative")
    if k < 2 * m - 1:
        raise InapplicableBoundError(f"error inflation needs k >= 2m - 1 (k={k}, m={m})")
    log_raw = log_binomial(k, m) + log_binomial(l, m) + _log_p0(n, k, a)
    return BoundReport.from_log(
        log_raw, "linear-test/" + _FORMULA[a], n=n, k=k, l=l, m=m, metric=Metric.MAXSIDE, assumption=a
    )


def accuracy_test_bound(n: int, k: int, m: int, assumption) -> BoundReport:
    """p-value bound when the samples are separable with at most ``m`` total errors.

    Sums ``C(n, m) C(m, h) P0(n - m, k - h)`` over ``h <= m`` with each P0
    replaced by the assumption's bound, evaluated as written (no k <= n/2
    folding on the reduced sizes).
    """
    a = Assumption.parse(assumption)
    _check_sizes(n, k)
    if not 0 <= m < k:
        raise InputError(f"need 0 <= m < k, got m={m}, k={k}")
    terms = [
        log_binomial(n, m) + log_binomial(m, h) + _log_p0(n - m, k - h, a)
        for h in range(m + 1)
    ]
    return BoundReport.from_log(
        float(special.logsumexp(terms)),
        "accuracy-test/" + _FORMULA[a],
        n=n,
        k=k,
        l=n - k,
        m=m,
        metric=Metric.TOTAL,
        assumption=a,
    )


def angle_test_bound(n: int, k: int, l: int, m: int, x: float, metric) -> BoundReport:
    """Markov bound on P[angle measure > x] for a random labeling of a fixed set."""
    metric = _metric(metric)
    if k + l != n or k < 1 or l < 1:
        raise InputError("need k + l = n with both classes non-empty")
    if not (0.0 < x <= 2.0 * math.pi):
        raise InputError(f"angle measure must lie in (0, 2pi], got {x}")
    if m < 0:
        raise InputError("m must be non-negative")
    if metric is Metric.MAXSIDE:
        count = sum(math.comb(k, h) * math.comb(l, h) for h in range(m + 1))
    else:
        count = math.comb(n, m)
    log_raw = math.log(2.0 * math.pi / x) + math.log(count) - log_binomial(n, k)
    return BoundReport.from_log(log_raw, "angle-" + metric.value, n=n, k=k, l=l, m=m, metric=metric)


def best_bound(n: int, k: int, l: int, m: int, assumption, metric=Metric.MAXSIDE) -> BoundReport:
    """Smallest bound among all assumptions implied by ``assumption``.

    A stronger assumption never yields a larger value here, unlike the
    single-formula functions.
    """
    a = Assumption.parse(assumption)
    metric = _metric(metric)
    reports = []
    for weaker in Assumption:
        if a.implies(weaker):
            if metric is Metric.MAXSIDE:
                reports.append(linear_test_bound(n, k, l, m, weaker))
            else:
                reports.append(accuracy_test_bound(n, k, m, weaker))
    return min(reports, key=lambda r: r.log_raw)


def normal_p0_quadrature(n: int, k: int) -> float:
    """Exact separability probability of ``k`` vs ``n - k`` i.i.d. Gaussian planar points.

    One-dimensional integral ``k l 2 sqrt(pi) * int Phi^(l-1) (1 - Phi)^(k-1) phi^2``,
    integrated on ``(-40, 40)``; the tails beyond contribute below 1e-348.
    """
    l = n - k
    if k < 1 or l < 1:
        raise InputError("both classes must be non-empty")

    def integrand(x):
        return math.exp(
            (l - 1) * special.log_ndtr(x) + (k - 1) * special.log_ndtr(-x) - x * x - math.log(2.0 * math.pi)
        )

    mode = float(special.ndtri((l - 1) / (n - 2))) if n > 2 else 0.0
    mode = min(max(mode, -39.0), 39.0)
    parts, errs = [], []
    for lo, hi in ((-40.0, mode), (mode, 40.0)):
        val, err, info = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400, full_output=True)[:3]
        parts.append(val)
        errs.append(err)
    total = sum(parts)
    if not total > 0 or sum(errs) > 1e-8 * total:
        raise ArithmeticError(f"quadrature did not converge for n={n}, k={k}")
    return k * l * 2.0 * math.sqrt(math.pi) * total
