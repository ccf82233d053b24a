"""Synthetic two-sample experiments.

Points come from a counter-based generator (Philox) keyed by the experiment
seed and the cell coordinates, so any single trial can be regenerated on its
own and cells may run in any order.

Separability probabilities are estimated per trial by the share of all
C(n, k) relabelings of the drawn points that are separable
(``estimator="conditional"``).  This has the same expectation as the plain
indicator of the drawn labeling but far smaller variance, which is what makes
probabilities around 1e-7 measurable.  The indicator is available too.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import p0_bound
from .errors import InputError
from .geometry import PointSet
from .inference import PermutationConfig, _parallel_map, permutation_pvalue
from .separability import (
    ApproxConfig,
    LabeledSample,
    Metric,
    _metric,
    count_near_separable_partitions,
    min_errors_batch,
)

FAMILIES = ("normal_identity", "uniform_unit_square")
CSV_FIELDS = ("experiment", "family", "n", "k", "l", "m", "mu", "estimate", "std_error", "bound", "seed")
DEFAULT_N_GRID = (8, 12, 16, 20, 24, 28, 32)


def _generator(*key: int) -> np.random.Generator:
    words = np.random.SeedSequence([int(v) for v in key]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=words))


def _box_muller(u: np.ndarray) -> np.ndarray:
    # one planar standard normal per uniform pair
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    t = 2.0 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def draw_points(family: str, mu: float, count: int, rng: np.random.Generator) -> np.ndarray:
    if family not in FAMILIES:
        raise InputError(f"unknown family {family!r}; choose from {FAMILIES}")
    u = rng.random((count, 2))
    pts = _box_muller(u) if family == "normal_identity" else u
    pts[:, 0] += mu
    return pts


def sample(family: str, mu: float, k: int, l: int, seed) -> LabeledSample:
    """``k`` points of Y from the base law and ``l`` of Z shifted by ``(mu, 0)``."""
    if mu < 0:
        raise InputError("shift must be non-negative")
    if k < 1 or l < 1:
        raise InputError("both classes must be non-empty")
    key = seed if isinstance(seed, (tuple, list)) else (seed,)
    rng = _generator(*key)
    pts = np.vstack([draw_points(family, 0.0, k, rng), draw_points(family, mu, l, rng)])
    return LabeledSample.from_arrays(pts, [True] * k + [False] * l)


@dataclass(frozen=True)
class ExperimentSpec:
    family: str = "normal_identity"
    mu: float = 0.0
    k: int | None = None
    l: int | None = None
    repeats: int = 10
    inner_trials: int = 200
    seed: int = 0
    m_grid: tuple[int, ...] = (0,)
    n_grid: tuple[int, ...] = DEFAULT_N_GRID
    mu_grid: tuple[float, ...] = (0.0,)
    metric: str = "maxside"
    estimator: str = "conditional"
    alpha: float = 0.1
    epsilon: float = 0.05
    engine: str = "exact"
    workers: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}")
        if self.repeats < 1 or self.inner_trials < 1:
            raise InputError("repeats and inner_trials must be positive")
        if not (self.m_grid and self.n_grid and self.mu_grid):
            raise InputError("grids must be non-empty")
        if self.estimator not in ("conditional", "indicator"):
            raise InputError(f"unknown estimator {self.estimator!r}")
        if self.engine not in ("exact", "approx"):
            raise InputError(f"unknown engine {self.engine!r}")
        _metric(self.metric)
        for name in ("m_grid", "n_grid", "mu_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise InputError(f"bad experiment spec: {exc}") from None

    def sizes(self, n: int) -> tuple[int, int]:
        if self.k is not None and self.l is not None:
            return self.k, self.l
        if n % 2:
            raise InputError(f"balanced classes need even n, got {n}")
        return n // 2, n // 2


@dataclass(frozen=True)
class ExperimentRow:
    experiment: str
    family: str
    n: int
    k: int
    l: int
    m: int
    mu: float
    estimate: float
    std_error: float
    bound: float
    seed: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in CSV_FIELDS)


@dataclass
class ExperimentResult:
    name: str
    spec: ExperimentSpec
    rows: list[ExperimentRow]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_tuple()])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        """Write ``<name>.csv``, ``<name>.svg`` and ``<name>.json`` (metadata)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        csv_path.write_text(self.to_csv())
        svg_path = out / f"{self.name}.svg"
        write_svg(self, svg_path)
        meta = {"spec": dataclasses.asdict(self.spec), **self.metadata}
        (out / f"{self.name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return csv_path, svg_path


def _trial_counts(family: str, mu: float, n: int, k: int, l: int, ms, spec: ExperimentSpec, key) -> np.ndarray:
    """Per-trial separable shares for each ``m``: shape ``(inner_trials, len(ms))``."""
    metric = _metric(spec.metric)
    total = math.comb(n, k)
    out = np.empty((spec.inner_trials, len(ms)))
    for t in range(spec.inner_trials):
        s = sample(family, mu, k, l, (*key, t))
        if spec.estimator == "conditional":
            out[t] = [count_near_separable_partitions(s.base, s.k, m, metric) / total for m in ms]
        else:
            stat = min_errors_batch(s.base, s.labels[None, :], metric)[0]
            out[t] = [float(stat <= m) for m in ms]
    return out


def _pooled(spec: ExperimentSpec, family: str, mu: float, n: int, ms, tag: int) -> tuple[np.ndarray, np.ndarray]:
    k, l = spec.sizes(n)
    cells = [(spec.seed, tag, FAMILIES.index(family), n, r) for r in range(spec.repeats)]
    parts = _parallel_map(lambda key: _trial_counts(family, mu, n, k, l, ms, spec, key), cells, spec.workers)
    data = np.vstack(parts)
    mean = data.mean(axis=0)
    se = data.std(axis=0, ddof=1) / math.sqrt(len(data)) if len(data) > 1 else np.zeros(len(ms))
    return mean, se


def experiment_bound_tightness(spec: ExperimentSpec, families=FAMILIES) -> ExperimentResult:
    """Separability probability with no errors against the normal-law bound, per ``n``."""
    if spec.mu != 0:
        raise InputError("bound tightness is a null experiment (mu = 0)")
    rows = []
    for family in families:
        for n in spec.n_grid:
            k, l = spec.sizes(n)
            est, se = _pooled(spec, family, 0.0, n, (0,), tag=1)
            bound = p0_bound(n, k, "normal").raw
            rows.append(ExperimentRow("bound_tightness", family, n, k, l, 0, 0.0,
                                      float(est[0]), float(se[0]), bound, spec.seed))
    return ExperimentResult("bound_tightness", spec, rows, _meta(spec))


def experiment_error_growth(spec: ExperimentSpec) -> ExperimentResult:
    """Separability with at most ``m`` errors against the inflated zero-error estimate.

    The bound column is ``C(k, m) C(l, m) * estimate(m = 0)``; its ratio to the
    estimate is recorded in the metadata under ``ratios``.
    """
    if spec.mu != 0 or spec.family != "normal_identity":
        raise InputError("error growth runs on the normal null")
    ms = sorted(set(spec.m_grid) | {0})
    rows, ratios = [], {}
    for n in spec.n_grid:
        k, l = spec.sizes(n)
        est, se = _pooled(spec, spec.family, 0.0, n, ms, tag=2)
        for i, m in enumerate(ms):
            if m not in spec.m_grid:
                continue
            bound = math.comb(k, m) * math.comb(l, m) * float(est[0])
            rows.append(ExperimentRow("error_growth", spec.family, n, k, l, m, 0.0,
                                      float(est[i]), float(se[i]), bound, spec.seed))
            ratios[f"{n}:{m}"] = bound / float(est[i]) if est[i] > 0 else math.inf
    return ExperimentResult("error_growth", spec, rows, {**_meta(spec), "ratios": ratios})


def _power_cell(spec: ExperimentSpec, n: int, k: int, l: int, mu: float, rep: int) -> bool:
    key = (spec.seed, 3, FAMILIES.index(spec.family), n, int(round(mu * 1e6)), rep)
    s = sample(spec.family, mu, k, l, key)
    cfg = PermutationConfig.for_accuracy(
        spec.epsilon, seed=int(_generator(*key).integers(2**63)), mode=spec.engine, approx=ApproxConfig()
    )
    return permutation_pvalue(s, metric=spec.metric, cfg=cfg).p_value <= spec.alpha


def experiment_power(spec: ExperimentSpec) -> ExperimentResult:
    """Rejection rate of the permutation test at level ``alpha`` across shifts.

    ``repeats`` is the number of simulated data sets per shift.  The bound
    column carries ``alpha``; the ``m`` column is -1 since each data set is
    tested at its own observed error count.
    """
    rows = []
    for n in spec.n_grid:
        k, l = spec.sizes(n)
        for mu in spec.mu_grid:
            hits = _parallel_map(lambda r: _power_cell(spec, n, k, l, mu, r), range(spec.repeats), spec.workers)
            p = sum(hits) / spec.repeats
            se = math.sqrt(p * (1 - p) / spec.repeats)
            rows.append(ExperimentRow("power", spec.family, n, k, l, -1, float(mu), p, se, spec.alpha, spec.seed))
    return ExperimentResult("power", spec, rows, _meta(spec))


EXPERIMENTS = {
    "bound_tightness": experiment_bound_tightness,
    "error_growth": experiment_error_growth,
    "power": experiment_power,
}


def _meta(spec: ExperimentSpec) -> dict:
    return {
        "trials_per_cell": spec.repeats * spec.inner_trials,
        "inner_trials_note": "inner trial count is a local choice, not taken from a reference protocol",
        "estimator": spec.estimator,
    }


def write_svg(result: ExperimentResult, path) -> None:
    """Static line chart of estimate (and bound, where meaningful) per series."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    x_of = (lambda r: r.mu) if result.name == "power" else (lambda r: r.n)
    series: dict[tuple, list[ExperimentRow]] = {}
    for r in result.rows:
        series.setdefault((r.family, r.m, r.n if result.name == "power" else None), []).append(r)
    for (family, m, n), rows in sorted(series.items(), key=lambda kv: str(kv[0])):
        xs = [x_of(r) for r in rows]
        label = family if result.name == "bound_tightness" else f"{family} m={m}" if m >= 0 else f"{family} n={n}"
        ax.errorbar(xs, [r.estimate for r in rows], yerr=[2 * r.std_error for r in rows], marker="o", label=label)
        if result.name != "power":
            ax.plot(xs, [r.bound for r in rows], linestyle="--", label=f"{label} bound")
    if result.name != "power":
        ax.set_yscale("log")
    ax.set_xlabel("shift" if result.name == "power" else "n")
    ax.set_ylabel("power" if result.name == "power" else "probability")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
