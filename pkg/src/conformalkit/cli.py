"""Command-line interface.

Subcommands: ``calibrate`` (turn a calibration CSV into a reusable snapshot),
``predict`` (apply a snapshot to new rows), ``simulate`` (run a Monte Carlo
config), ``outliers`` (batch screening at a target false discovery rate), and
``pac-r`` (choose the discard count for a PAC coverage target).

Exit codes: 0 success, 2 malformed input, 3 infeasible target, 4 numerical
failure. All randomness is seeded (``--seed``, default 1729), so runs are
reproducible. Tabular output is CSV by default; ``--format json`` switches to
records. Calibration snapshots are always JSON and store sorted scores, never
raw data.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from bisect import bisect_left
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as cio
from .core import DomainError, InputError, NumericalError, ScoreBag, exact_level
from .pac import PacTarget, select_r_pac
from .simlab import config_from_dict, run_experiment
from .split import one_sided_upper_bound
from .outliers import screen_scores

DEFAULT_SEED = 1729

_METHODS = ("one_sided", "mean_residual", "cqr", "class_threshold", "class_cumulative")
_CLASS_METHODS = ("class_threshold", "class_cumulative")


def _alpha_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"level {value} outside the open interval (0, 1)")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformalkit",
        description="Distribution-free prediction sets, calibration, and screening.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"seed for any randomized step (default {DEFAULT_SEED})")
    common.add_argument("--output", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="tabular output format")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common],
                       help="compute a calibration snapshot from a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True, choices=_METHODS)
    p.add_argument("--alpha", required=True, type=_alpha_arg)
    p.add_argument(
        "--model-artifact",
        default="embedded",
        help="'embedded' (prediction columns live in the input), "
        "'precomputed-scores' (use the score column), or a path to a "
        "row-aligned predictions CSV",
    )
    p.add_argument("--randomize", action="store_true",
                   help="tie-broken cumulative-probability scores (class_cumulative)")

    p = sub.add_parser("predict", parents=[common], help="apply a snapshot to new rows")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--emit-pvalues", action="store_true")

    p = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment config")
    p.add_argument("--config", required=True,
                   help="path to a config JSON, or the name of a bundled one")

    p = sub.add_parser("outliers", parents=[common], help="batch outlier screening with BH")
    p.add_argument("--reference", required=True)
    p.add_argument("--tests", required=True)
    p.add_argument("--q", required=True, type=_alpha_arg, help="FDR target")

    p = sub.add_parser("pac-r", parents=[common], help="discard count for a PAC coverage target")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--alpha", required=True, type=_alpha_arg)
    p.add_argument("--delta", required=True, type=_alpha_arg)
    return parser


def _merged_columns(args) -> tuple[dict, int]:
    cols, nrows = cio.read_columns(args.input)
    if nrows == 0:
        raise InputError(f"{args.input}: empty calibration set")
    artifact = args.model_artifact
    if artifact not in ("embedded", "precomputed-scores"):
        extra, extra_rows = cio.read_columns(artifact)
        if extra_rows != nrows:
            raise InputError(
                f"{artifact}: {extra_rows} rows but {args.input} has {nrows}"
            )
        cols = {**cols, **extra}
    return cols, nrows


def _cumulative_scores_row(pi: np.ndarray) -> np.ndarray:
    order = np.argsort(-pi, kind="stable")
    cum = np.cumsum(pi[order])
    out = np.empty(pi.size)
    out[order] = cum
    return out


def _class_columns(cols, nrows, where) -> tuple[list[int], np.ndarray]:
    pi = cio.pi_matrix(cols, where)
    if pi is None:
        raise InputError(f"{where}: class methods need pi_1..pi_k columns")
    bad = np.where(np.abs(pi.sum(axis=1) - 1.0) > 1e-6)[0]
    if bad.size:
        raise InputError(f"{where}: row {bad[0] + 1} probabilities do not sum to 1")
    pi = pi / pi.sum(axis=1, keepdims=True)
    labels = cio.column_ints(cols, "label", where)
    k = pi.shape[1]
    if any(not 1 <= lab <= k for lab in labels):
        raise InputError(f"{where}: label outside [1, {k}]")
    return labels, pi


def _calibration_scores(args, cols, nrows) -> tuple[list[float], dict]:
    where = args.input
    meta: dict = {"k": None, "randomize": False}
    if args.model_artifact == "precomputed-scores":
        scores = list(cio.column_floats(cols, "score", where))
        pi = cio.pi_matrix(cols, where)
        if args.method in _CLASS_METHODS:
            if pi is not None:
                meta["k"] = pi.shape[1]
            else:
                raise InputError(
                    f"{where}: class methods need pi_1..pi_k even with precomputed scores"
                )
        return scores, meta
    if args.method == "one_sided":
        return list(cio.column_floats(cols, "y", where)), meta
    if args.method == "mean_residual":
        y = cio.column_floats(cols, "y", where)
        m = cio.column_floats(cols, "m_hat", where)
        return list(np.abs(y - m)), meta
    if args.method == "cqr":
        y = cio.column_floats(cols, "y", where)
        lo = cio.column_floats(cols, "q_lo", where)
        hi = cio.column_floats(cols, "q_hi", where)
        return list(np.maximum(lo - y, y - hi)), meta
    labels, pi = _class_columns(cols, nrows, where)
    meta["k"] = pi.shape[1]
    if args.method == "class_threshold":
        return [-pi[i, lab - 1] for i, lab in enumerate(labels)], meta
    # class_cumulative
    meta["randomize"] = bool(args.randomize)
    if args.randomize:
        if "u" in cols:
            us = cio.column_floats(cols, "u", where)
            if np.any((us < 0) | (us > 1)):
                raise InputError(f"{where}: u values outside [0, 1]")
        else:
            us = np.random.default_rng(args.seed).random(nrows)
    scores = []
    for i, lab in enumerate(labels):
        s = _cumulative_scores_row(pi[i])[lab - 1]
        if args.randomize:
            s -= us[i] * pi[i, lab - 1]
        scores.append(float(s))
    return scores, meta


def cmd_calibrate(args) -> int:
    cols, nrows = _merged_columns(args)
    scores, meta = _calibration_scores(args, cols, nrows)
    bag = ScoreBag.of(scores)
    threshold = one_sided_upper_bound(bag, args.alpha)
    level = exact_level(args.alpha)
    payload = {
        "method": args.method,
        "alpha": args.alpha,
        "n": bag.n,
        "rank": math.ceil((1 - level) * (bag.n + 1)),
        "scores": [float(s) for s in bag.sorted_values],
        "threshold": threshold,
        "seed": args.seed,
        **meta,
    }
    text = cio.save_snapshot(payload, args.output if args.output else None)
    if args.output is None:
        sys.stdout.write(text)
    return 0


def _pvalue_from_sorted(sorted_scores: list[float], s: float) -> float:
    n = len(sorted_scores)
    below = bisect_left(sorted_scores, s)
    return (1 + n - below) / (n + 1)


def _predict_rows(args, snap, cols, nrows):
    method = snap["method"]
    threshold = snap["threshold"]
    scores = snap["scores"]
    where = args.input
    emit_p = args.emit_pvalues

    if method in ("one_sided", "mean_residual", "cqr"):
        y = cio.column_floats(cols, "y", where) if "y" in cols else None
        if method == "one_sided":
            lowers = np.full(nrows, -math.inf)
            uppers = np.full(nrows, threshold)
            score_of = y if y is not None else None
        elif method == "mean_residual":
            m = cio.column_floats(cols, "m_hat", where)
            lowers = m - threshold
            uppers = m + threshold
            score_of = np.abs(y - m) if y is not None else None
        else:
            lo = cio.column_floats(cols, "q_lo", where)
            hi = cio.column_floats(cols, "q_hi", where)
            lowers = lo - threshold
            uppers = hi + threshold
            score_of = np.maximum(lo - y, y - hi) if y is not None else None
        header = ["row", "lower", "upper", "empty"]
        if emit_p:
            if score_of is None:
                raise InputError(f"{where}: p-values need a y column")
            header.append("p")
        rows = []
        for i in range(nrows):
            row = [i, float(lowers[i]), float(uppers[i]), int(lowers[i] > uppers[i])]
            if emit_p:
                row.append(_pvalue_from_sorted(scores, float(score_of[i])))
            rows.append(row)
        return header, rows

    k = snap.get("k")
    if not k:
        raise InputError(f"{args.snapshot}: class snapshot missing k")
    pi = cio.pi_matrix(cols, where)
    if pi is None or pi.shape[1] != k:
        raise InputError(f"{where}: need pi_1..pi_{k} columns")
    pi = pi / pi.sum(axis=1, keepdims=True)
    randomize = bool(snap.get("randomize"))
    if randomize:
        if "u" in cols:
            us = cio.column_floats(cols, "u", where)
        else:
            us = np.random.default_rng(args.seed).random(nrows)
    header = ["row", "set", "size"]
    if emit_p:
        header += [f"p_{lab}" for lab in range(1, k + 1)]
    rows = []
    for i in range(nrows):
        if method == "class_threshold":
            label_scores = -pi[i]
        else:
            label_scores = _cumulative_scores_row(pi[i])
            if randomize:
                label_scores = label_scores - us[i] * pi[i]
        kept = [str(lab + 1) for lab in range(k) if label_scores[lab] <= threshold]
        row = [i, ";".join(kept), len(kept)]
        if emit_p:
            row += [_pvalue_from_sorted(scores, float(s)) for s in label_scores]
        rows.append(row)
    return header, rows


def cmd_predict(args) -> int:
    snap = cio.load_snapshot(args.snapshot)
    cols, nrows = cio.read_columns(args.input)
    if nrows == 0:
        raise InputError(f"{args.input}: no rows to predict")
    header, rows = _predict_rows(args, snap, cols, nrows)
    text = cio.write_rows(args.output, header, rows, args.format)
    if args.output is None:
        sys.stdout.write(text)
    return 0


def _resolve_config(name: str) -> dict:
    path = Path(name)
    if path.exists():
        raw = path.read_text()
    else:
        stem = name if name.endswith(".json") else name + ".json"
        try:
            raw = (resources.files("conformalkit") / "configs" / stem).read_text()
        except (FileNotFoundError, OSError):
            raise InputError(f"no such config file or bundled config: {name}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"{name}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{name}: config must be a JSON object")
    return data


def cmd_simulate(args) -> int:
    config = config_from_dict(_resolve_config(args.config))
    rows = run_experiment(config)
    header = ["method", "n", "coverage", "coverage_se", "excess", "excess_se"]
    table = [
        [r.method, r.n, r.coverage, r.coverage_se, r.excess, r.excess_se] for r in rows
    ]
    text = cio.write_rows(args.output, header, table, args.format)
    if args.output is None:
        sys.stdout.write(text)
    return 0


def cmd_outliers(args) -> int:
    ref_cols, ref_rows = cio.read_columns(args.reference)
    if ref_rows == 0:
        raise InputError(f"{args.reference}: empty reference sample")
    test_cols, test_rows = cio.read_columns(args.tests)
    if test_rows == 0:
        raise InputError(f"{args.tests}: empty test batch")
    ref_scores = cio.column_floats(ref_cols, "score", args.reference)
    test_scores = cio.column_floats(test_cols, "score", args.tests)
    result = screen_scores(ref_scores, test_scores, args.q)
    header = ["row", "p", "rejected"]
    rows = [
        [i, float(result.pvalues[i]), int(i in result.rejected)]
        for i in range(test_rows)
    ]
    text = cio.write_rows(args.output, header, rows, args.format)
    if args.output is None:
        sys.stdout.write(text)
    return 0


def cmd_pac_r(args) -> int:
    if args.n < 1:
        raise InputError("--n must be >= 1")
    selection = select_r_pac(args.n, PacTarget(alpha=args.alpha, delta=args.delta))
    if selection.infeasible:
        sys.stderr.write(
            f"infeasible: no r in [0, {args.n - 1}] reaches confidence "
            f"{1 - args.delta:g} at alpha {args.alpha:g}\n"
        )
        return 3
    header = ["n", "alpha", "delta", "r", "confidence"]
    rows = [[args.n, args.alpha, args.delta, selection.r, selection.confidence]]
    text = cio.write_rows(args.output, header, rows, args.format)
    if args.output is None:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "outliers": cmd_outliers,
    "pac-r": cmd_pac_r,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InputError, DomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
