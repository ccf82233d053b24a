"""Gene-pair scanning over an expression matrix."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import Assumption
from .errors import InapplicableBoundError, InputError, SepstatError
from .geometry import PointSet, perturb, write_points_csv
from .inference import _parallel_map, bh_fdr, linear_test
from .separability import LabeledSample, Metric, _metric, min_errors, parse_label

log = logging.getLogger(__name__)

TRANSFORMS = {"none": "none", "log2_plus_1": "log2_plus_1", "log2p1": "log2_plus_1"}
RESULT_FIELDS = ("gene_a", "gene_b", "m_maxside", "m_total", "p_bound", "q_value")
_MISSING = {"", "na", "nan", "null", "none", "-"}


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    gene_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    values: np.ndarray  # genes x samples
    transform: str = "none"

    def row(self, gene: str) -> np.ndarray:
        try:
            return self.values[self.gene_ids.index(gene)]
        except ValueError:
            raise InputError(f"unknown gene {gene!r}") from None


@dataclass(frozen=True)
class LabelFile:
    classes: dict  # sample id -> "Y" | "Z"

    def counts(self) -> tuple[int, int]:
        y = sum(1 for c in self.classes.values() if c == "Y")
        return y, len(self.classes) - y


def _read_rows(path) -> list[list[str]]:
    text = Path(path).read_text()
    first = text.splitlines()[0] if text.strip() else ""
    delim = "\t" if "\t" in first else ","
    return [row for row in csv.reader(io.StringIO(text), delimiter=delim) if any(c.strip() for c in row)]


def log2_plus_1(values: np.ndarray) -> np.ndarray:
    if np.any(values <= -1):
        raise InputError("log2(x + 1) needs values above -1")
    return np.log2(values + 1.0)


def read_matrix(path, transform: str = "log2_plus_1") -> ExpressionMatrix:
    """TSV/CSV with sample ids in the header and the gene id in the first column.

    Genes with missing entries are dropped with a log message.
    """
    try:
        kind = TRANSFORMS[transform]
    except KeyError:
        raise InputError(f"unknown transform {transform!r}") from None
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty matrix file")
    header = [h.strip() for h in rows[0]]
    samples = header[1:]
    if not samples or any(not s for s in samples):
        raise InputError(f"{path}: malformed header, expected a gene column followed by sample ids")
    if len(set(samples)) != len(samples):
        raise InputError(f"{path}: duplicate sample ids in header")
    genes, data, seen = [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        gene = row[0].strip()
        if gene in seen:
            raise InputError(f"{path}:{lineno}: duplicate gene id {gene!r}")
        seen.add(gene)
        cells = [c.strip() for c in row[1:]]
        if any(c.lower() in _MISSING for c in cells):
            log.warning("dropping gene %s: missing values", gene)
            continue
        try:
            data.append([float(c) for c in cells])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value for gene {gene!r}") from None
        genes.append(gene)
    values = np.array(data, dtype=float).reshape(len(genes), len(samples))
    if kind == "log2_plus_1":
        values = log2_plus_1(values)
    return ExpressionMatrix(tuple(genes), tuple(samples), values, kind)


def read_labels(path) -> LabelFile:
    """Two columns, ``sample_id`` and class (Y/Z or 1/0); a header row is optional."""
    rows = _read_rows(path)
    classes = {}
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected sample id and class")
        sid, cls = row[0].strip(), row[1].strip()
        try:
            y = parse_label(cls)
        except InputError:
            if lineno == 1:
                continue  # header
            raise
        if sid in classes:
            raise InputError(f"{path}:{lineno}: duplicate sample id {sid!r}")
        classes[sid] = "Y" if y else "Z"
    return LabelFile(classes)


def align(matrix: ExpressionMatrix, labels: LabelFile) -> tuple[ExpressionMatrix, LabelFile]:
    keep = [i for i, s in enumerate(matrix.sample_ids) if s in labels.classes]
    for s in matrix.sample_ids:
        if s not in labels.classes:
            log.warning("sample %s has no label; dropped", s)
    sample_ids = tuple(matrix.sample_ids[i] for i in keep)
    lab = LabelFile({s: labels.classes[s] for s in sample_ids})
    y, z = lab.counts()
    if y < 2 or z < 2:
        raise InputError(f"need at least 2 samples per class, got Y={y}, Z={z}")
    return ExpressionMatrix(matrix.gene_ids, sample_ids, matrix.values[:, keep], matrix.transform), lab


def ingest(matrix_path, labels_path, transform: str = "log2_plus_1") -> tuple[ExpressionMatrix, LabelFile]:
    return align(read_matrix(matrix_path, transform), read_labels(labels_path))


def read_pairs(path) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected two gene ids")
        pairs.append((parts[0], parts[1]))
    return pairs


@dataclass(frozen=True)
class ScanConfig:
    assumption: str = "normal"
    metric: str = "maxside"
    threads: int = 1
    pairs: tuple[tuple[str, str], ...] | None = None
    perturb_seed: int | None = None


@dataclass(frozen=True)
class PairResult:
    gene_a: str
    gene_b: str
    m_maxside: int | None
    m_total: int | None
    p_bound: float
    q_value: float
    runtime_us: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def extract_pair(matrix: ExpressionMatrix, labels: LabelFile, gene_a: str, gene_b: str) -> LabeledSample:
    coords = np.column_stack([matrix.row(gene_a), matrix.row(gene_b)])
    return LabeledSample.from_arrays(coords, [labels.classes[s] for s in matrix.sample_ids])


def write_pair_csv(matrix: ExpressionMatrix, labels: LabelFile, gene_a: str, gene_b: str, path) -> None:
    s = extract_pair(matrix, labels, gene_a, gene_b)
    write_points_csv(s.base, path, [labels.classes[x] for x in matrix.sample_ids])


def _scan_one(matrix, labels, pair, cfg: ScanConfig, metric: Metric, assumption: Assumption):
    a, b = pair
    t0 = time.perf_counter()
    try:
        s = extract_pair(matrix, labels, a, b)
        if cfg.perturb_seed is not None and not s.base.in_general_position:
            s = LabeledSample(perturb(s.base, cfg.perturb_seed), s.labels, s.swapped)
        res = min_errors(s)
        m = res.for_metric(metric)
        try:
            p = linear_test(s, assumption, metric, m=m).p_value
        except InapplicableBoundError:
            p = 1.0  # inflation bound undefined this far from separable
        out = (res.min_errors_maxside, res.min_errors_total, p, None)
    except SepstatError as exc:
        out = (None, None, math.nan, str(exc))
    us = int((time.perf_counter() - t0) * 1e6)
    return PairResult(a, b, out[0], out[1], out[2], math.nan, us, out[3])


def scan_pairs(matrix: ExpressionMatrix, labels: LabelFile, config: ScanConfig = ScanConfig()) -> list[PairResult]:
    """Score every gene pair and rank by q-value, p-value, error count, then gene ids.

    Pairs that fail (for instance points not in general position) are kept
    at the end of the list with ``error`` set; they take no part in the FDR
    correction.
    """
    metric = _metric(config.metric)
    assumption = Assumption.parse(config.assumption)
    if len(matrix.gene_ids) < 2:
        raise InputError("need at least two genes")
    if config.pairs is None:
        g = matrix.gene_ids
        pairs = [(g[i], g[j]) for i in range(len(g)) for j in range(i + 1, len(g))]
    else:
        pairs = [tuple(p) for p in config.pairs]
        for a, b in pairs:
            matrix.row(a), matrix.row(b)
    results = _parallel_map(lambda p: _scan_one(matrix, labels, p, config, metric, assumption), pairs, config.threads)
    ok = [r for r in results if not r.failed]
    failed = [r for r in results if r.failed]
    for r in failed:
        log.warning("pair %s/%s failed: %s", r.gene_a, r.gene_b, r.error)
    q = bh_fdr([r.p_bound for r in ok])
    ok = [PairResult(r.gene_a, r.gene_b, r.m_maxside, r.m_total, r.p_bound, float(qv), r.runtime_us)
          for r, qv in zip(ok, q)]
    m_of = (lambda r: r.m_maxside) if metric is Metric.MAXSIDE else (lambda r: r.m_total)
    ok.sort(key=lambda r: (r.q_value, r.p_bound, m_of(r), r.gene_a, r.gene_b))
    failed.sort(key=lambda r: (r.gene_a, r.gene_b))
    return ok + failed


def results_csv(results: list[PairResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in results:
        if r.failed:
            w.writerow([r.gene_a, r.gene_b, "", "", "", ""])
        else:
            w.writerow([r.gene_a, r.gene_b, r.m_maxside, r.m_total, repr(r.p_bound), repr(r.q_value)])
    return buf.getvalue()
