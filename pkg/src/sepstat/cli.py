"""``sepstat`` command line.

Every flag can also be given in a JSON file passed with ``--config``; keys use
the flag's long name with underscores.  Flags on the command line win.
Exit codes: 0 success, 2 input error, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BudgetError, InputError
from .inference import (
    PermutationConfig,
    angle_test,
    exact_conditional_pvalue,
    linear_test,
    permutation_pvalue,
)
from .separability import DEFAULT_BUDGET, ApproxConfig, LabeledSample

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3

_DEFAULTS = {
    "scan": {
        "assumption": "normal",
        "metric": "maxside",
        "transform": "log2p1",
        "threads": 1,
        "pairs": None,
        "perturb_seed": None,
    },
    "test": {
        "method": "bound",
        "metric": "maxside",
        "assumption": None,
        "m": None,
        "seed": None,
        "permutations": None,
        "epsilon": None,
        "engine": None,
        "workers": 1,
        "budget": DEFAULT_BUDGET,
        "out": None,
    },
    "lab": {"spec": None},
}


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = argparse.ArgumentParser(prog="sepstat", description="Two-sample tests based on near-linear separability.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="rank gene pairs of an expression matrix")
    scan.add_argument("--config", default=S)
    scan.add_argument("--matrix", default=S)
    scan.add_argument("--labels", default=S)
    scan.add_argument("--out", default=S)
    scan.add_argument("--assumption", default=S, choices=["exchangeable", "iid", "spherical", "normal"])
    scan.add_argument("--metric", default=S, choices=["maxside", "total"])
    scan.add_argument("--pairs", default=S, help="file with one gene pair per line")
    scan.add_argument("--transform", default=S, choices=["log2p1", "log2_plus_1", "none"])
    scan.add_argument("--threads", type=int, default=S)
    scan.add_argument("--perturb-seed", type=int, default=S, help="jitter pairs with tied points")

    test = sub.add_parser("test", help="test one labeled planar sample")
    test.add_argument("sample", nargs="?", default=S, help="CSV with x,y,label columns")
    test.add_argument("--config", default=S)
    test.add_argument("--method", default=S, choices=["bound", "angle", "exact", "permutation"])
    test.add_argument("--metric", default=S, choices=["maxside", "total"])
    test.add_argument("--assumption", default=S, choices=["exchangeable", "iid", "spherical", "normal"])
    test.add_argument("-m", type=int, default=S, help="error budget (default: observed)")
    test.add_argument("--seed", type=int, default=S)
    test.add_argument("--permutations", type=int, default=S)
    test.add_argument("--epsilon", type=float, default=S)
    test.add_argument("--engine", default=S, choices=["exact", "approx"])
    test.add_argument("--workers", type=int, default=S)
    test.add_argument("--budget", type=int, default=S)
    test.add_argument("--out", default=S)

    lab = sub.add_parser("lab", help="run a synthetic experiment")
    lab.add_argument("experiment", choices=["bound_tightness", "error_growth", "power"])
    lab.add_argument("--config", default=S)
    lab.add_argument("--spec", default=S, help="JSON experiment spec")
    lab.add_argument("--out", default=S)
    return p


def _settings(args: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    merged = dict(_DEFAULTS[args.command])
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        unknown = set(cfg) - set(merged) - {"matrix", "labels", "out", "sample", "experiment"}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        merged.update(cfg)
    merged.update(flags)
    return merged


def _require(opts: dict, *names: str) -> None:
    missing = [n for n in names if not opts.get(n)]
    if missing:
        raise InputError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _run_scan(opts: dict) -> int:
    from .pairscan import ScanConfig, ingest, read_pairs, results_csv, scan_pairs

    _require(opts, "matrix", "labels", "out")
    matrix, labels = ingest(opts["matrix"], opts["labels"], opts["transform"])
    cfg = ScanConfig(
        assumption=opts["assumption"],
        metric=opts["metric"],
        threads=int(opts["threads"]),
        pairs=None if opts["pairs"] is None else tuple(read_pairs(opts["pairs"])),
        perturb_seed=opts["perturb_seed"],
    )
    results = scan_pairs(matrix, labels, cfg)
    Path(opts["out"]).write_text(results_csv(results))
    failed = sum(r.failed for r in results)
    print(f"scanned {len(results)} pairs ({failed} failed) -> {opts['out']}", file=sys.stderr)
    return EXIT_OK


_METHOD_FLAGS = {
    "assumption": {"bound"},
    "seed": {"permutation"},
    "permutations": {"permutation"},
    "epsilon": {"permutation"},
    "engine": {"permutation"},
}


def _run_test(opts: dict) -> int:
    _require(opts, "sample")
    method = opts["method"]
    for flag, allowed in _METHOD_FLAGS.items():
        if opts.get(flag) is not None and method not in allowed:
            raise InputError(f"--{flag} does not apply to --method {method}")
    if opts["permutations"] is not None and opts["epsilon"] is not None:
        raise InputError("give either --permutations or --epsilon, not both")
    sample = LabeledSample.read_csv(opts["sample"])
    metric, m = opts["metric"], opts["m"]
    if method == "bound":
        outcome = linear_test(sample, opts["assumption"] or "normal", metric, m=m)
    elif method == "angle":
        outcome = angle_test(sample, 0 if m is None else m, metric)
    elif method == "exact":
        outcome = exact_conditional_pvalue(sample, m, metric, budget=opts["budget"])
    else:
        kw = dict(seed=opts["seed"] or 0, mode=opts["engine"] or "exact", workers=int(opts["workers"]),
                  approx=ApproxConfig())
        if opts["epsilon"] is not None:
            cfg = PermutationConfig.for_accuracy(opts["epsilon"], **kw)
        else:
            cfg = PermutationConfig(num_permutations=opts["permutations"] or 10_000, **kw)
        outcome = permutation_pvalue(sample, m, metric, cfg)
    text = outcome.to_json()
    print(text)
    if opts["out"]:
        Path(opts["out"]).write_text(text + "\n")
    return EXIT_OK


def _run_lab(opts: dict) -> int:
    from .lab import EXPERIMENTS, ExperimentSpec

    _require(opts, "out")
    spec = ExperimentSpec.from_json(opts["spec"]) if opts["spec"] else ExperimentSpec()
    result = EXPERIMENTS[opts["experiment"]](spec)
    csv_path, _ = result.write(opts["out"])
    print(f"{len(result.rows)} rows -> {csv_path}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        opts = _settings(args)
        return {"scan": _run_scan, "test": _run_test, "lab": _run_lab}[args.command](opts)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
