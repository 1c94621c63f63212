"""Command-line interface.

Every subcommand reads CSV/JSON inputs and writes a CSV table or a JSON
report (``--format``) to ``--output`` (stdout by default). Errors in inputs or
arguments exit with status 1 (2 for usage errors). Monte Carlo bound
violations are not errors: they are reported in a ``verdict`` field.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .core import ContractingViolation, NonTermination, SelectionError
from .fdrcurve import FdrCurve, curve_table, gaussian_shift, p_sup, run_fdr_curve
from .fixed_point import bh_iterate_pvalues, bh_threshold, by_iterate
from .framework import PAIR_KINDS, pair_from_config
from .multirisk import run_parallel_intersection, run_sequential_composition
from .permtest import run_accelerated_bh, run_fixed_m_bh, schedule, tasks_from_records, two_sample_meandiff
from .simlab import load_scenario, run_scenario

SCHEMA_VERSION = 1


def _emit(args, header, rows, payload) -> None:
    if args.format == "json":
        io.write_text(args.output, io.json_text(payload))
    else:
        io.write_text(args.output, io.csv_text(header, rows))


def _seed(args, required: bool = True):
    if args.seed is None and required:
        raise SelectionError("this subcommand is stochastic: --seed is required")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise SelectionError("--seed must be a 64-bit unsigned integer")
    return args.seed


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise io.InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise io.InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# bh / by-iterate


def cmd_bh(args) -> None:
    p = io.read_pvalues(args.input)
    mask, sizes = bh_iterate_pvalues(p, args.q)
    thresh = bh_threshold(p, args.q)
    trace = {"schema_version": SCHEMA_VERSION, "q": args.q, "m": int(p.size), "trace": sizes,
             "rejections": mask.count, "threshold": thresh}
    if args.trace:
        io.write_text(args.trace, io.json_text(trace))
    rows = [(i, pi, bool(r)) for i, (pi, r) in enumerate(zip(p, mask))]
    _emit(args, ["task", "p", "reject"], rows, dict(trace, reject=[int(b) for b in mask]))


def cmd_by_iterate(args) -> None:
    x = io.read_columns(args.input, ["x"])["x"]
    final, trace = by_iterate(x, args.q)
    table = trace.bound_table(x)
    steps = range(trace.T)
    header = (["task", "x"] + [f"U_{t + 1}" for t in steps]
              + [f"in_S_{t + 1}" for t in steps] + ["selected"])
    rows = [[i, xi] + table[i].tolist() + [i in trace.steps[t].selected for t in steps] + [i in final]
            for i, xi in enumerate(x)]
    payload = {"schema_version": SCHEMA_VERSION, "q": args.q, "m": int(x.size), "T": trace.T,
               "sizes": trace.sizes, "offsets": [s.offset for s in trace.steps],
               "upper_bounds": [{str(k): v for k, v in b.items()} for b in trace.bounds_by_task()],
               "selected": [int(b) for b in final]}
    _emit(args, header, rows, payload)


# ---------------------------------------------------------------------------
# extra-risk / multi-risk


def _strategy_data(path):
    """Columns for the built-in pairs; a ``group`` column turns rows into grouped hypotheses."""
    raw = io.read_table(path, [], ["task_id", "p", "category", "p_minus", "group"])
    data, labels = {}, None
    if "group" in raw:
        if "p" not in raw:
            raise io.InputError(f"{path}: grouped input needs a 'p' column")
        p = io.parse_floats(path, "p", raw["p"])
        order = list(dict.fromkeys(raw["group"]))
        data["groups"] = [p[[g == lab for g in raw["group"]]] for lab in order]
        labels = order
    else:
        for col in ("p", "p_minus"):
            if col in raw:
                data[col] = io.parse_floats(path, col, raw[col])
        if "category" in raw:
            data["category"] = io.parse_floats(path, "category", raw["category"]).astype(int)
        labels = raw.get("task_id")
    if not data:
        raise io.InputError(f"{path}: no usable columns; expected some of p, category, p_minus, group")
    return data, labels


def _decision_cells(d):
    if isinstance(d, tuple):  # per-group rejection arrays
        return [int(np.sum(di)) for di in d]
    return [int(v) for v in np.asarray(d)]


def _pair_configs(cfg):
    if isinstance(cfg, dict) and "pairs" in cfg:
        cfg = cfg["pairs"]
    if isinstance(cfg, dict):
        cfg = [cfg]
    if not isinstance(cfg, list) or not cfg:
        raise SelectionError(f"strategy JSON must be an object or a list of objects with 'kind' in {PAIR_KINDS}")
    return cfg


def cmd_extra_risk(args) -> None:
    data, labels = _strategy_data(args.input)
    cfg = _pair_configs(_load_json(args.strategy))
    if len(cfg) != 1:
        raise SelectionError("extra-risk takes one strategy pair; use multi-risk for suites")
    pair = pair_from_config(cfg[0], data)
    trace = pair.run()
    labels = labels or list(range(pair.m))
    dec = _decision_cells(trace.decisions)
    rows = [(lab, i in trace.final, dec[i]) for i, lab in enumerate(labels)]
    payload = {"schema_version": SCHEMA_VERSION, "kind": cfg[0]["kind"], "m": pair.m, "T": trace.T,
               "sizes": trace.sizes, "levels": [s.level for s in trace.steps],
               "selected": [int(b) for b in trace.final], "decisions": dec}
    _emit(args, ["task", "selected", "decision"], rows, payload)


def cmd_multi_risk(args) -> None:
    data, labels = _strategy_data(args.input)
    cfgs = _pair_configs(_load_json(args.suite))
    suite = [pair_from_config(c, data) for c in cfgs]
    runner = run_parallel_intersection if args.mode == "parallel" else run_sequential_composition
    trace = runner(suite)
    labels = labels or list(range(suite[0].m))
    decs = [_decision_cells(d) for d in trace.decisions]
    header = ["task", "selected"] + [f"decision_{j + 1}" for j in range(len(suite))]
    rows = [[lab, i in trace.final] + [d[i] for d in decs] for i, lab in enumerate(labels)]
    payload = {"schema_version": SCHEMA_VERSION, "mode": args.mode, "kinds": [c["kind"] for c in cfgs],
               "T": trace.T, "sizes": trace.sizes, "selected": [int(b) for b in trace.final], "decisions": decs}
    _emit(args, header, rows, payload)


# ---------------------------------------------------------------------------
# fdr-curve


def _curve_config(cfg):
    anchors = cfg.get("anchors")
    if isinstance(anchors, list):
        anchors = {a["c"]: a["q"] for a in anchors}
    if not isinstance(anchors, dict) or not anchors:
        raise SelectionError("curve JSON needs non-empty 'anchors' ({c: q} or [{c, q}])")
    anchors = {float(c): float(q) for c, q in anchors.items()}
    g = cfg.get("grid")
    if g is None:
        grid = sorted(anchors)
    elif isinstance(g, dict):
        grid = np.linspace(float(g["start"]), float(g["stop"]), int(g["num"])).tolist()
    else:
        grid = [float(c) for c in g]
    return FdrCurve(anchors, tuple(grid))


def cmd_fdr_curve(args) -> None:
    x = io.read_columns(args.input, ["x"])["x"]
    curve = _curve_config(_load_json(args.curve))
    pf = gaussian_shift()
    mask = run_fdr_curve(x, pf, curve)
    table = curve_table(curve.anchors, x.size, curve.grid)
    if args.curve_table:
        io.write_text(args.curve_table, io.csv_text(["c", "q_bh", "q_star"], table))
    scores = p_sup(x, pf, curve)
    rows = [(i, xi, si, bool(r)) for i, (xi, si, r) in enumerate(zip(x, scores, mask))]
    payload = {"schema_version": SCHEMA_VERSION, "m": int(x.size), "anchors": {str(c): q for c, q in curve.anchors.items()},
               "rejections": mask.count, "reject": [int(b) for b in mask],
               "curve": [{"c": c, "q_bh": a, "q_star": b} for c, a, b in table]}
    _emit(args, ["task", "x", "p_sup", "reject"], rows, payload)


# ---------------------------------------------------------------------------
# perm-bh


def cmd_perm_bh(args) -> None:
    seed = _seed(args)
    groups = args.groups.split(",") if args.groups else None
    if groups is not None and len(groups) != 2:
        raise SelectionError("--groups takes two labels: A,B")
    tasks = tasks_from_records(io.read_observations(args.input), groups)
    if args.fixed_m is not None:
        report = run_fixed_m_bh(tasks, two_sample_meandiff, args.q, args.fixed_m, seed)
    else:
        sched = schedule(args.q, args.epsilon, args.delta, len(tasks))
        report = run_accelerated_bh(tasks, two_sample_meandiff, args.q, sched, seed)
    rows = [(t.task_id, int(c), p, bool(r)) for t, c, p, r in zip(tasks, report.consumed, report.pvalues, report.mask)]
    _emit(args, ["task_id", "consumed", "p", "reject"], rows, report.to_dict())


# ---------------------------------------------------------------------------
# simulate


def _scenario_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("selrisk") / "scenarios" / f"{name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise io.InputError(f"no scenario file or bundled scenario named {name!r}")


def cmd_simulate(args) -> None:
    path = _scenario_path(args.scenario)
    cfg = load_scenario(path)
    if args.reps is not None:
        cfg["reps"] = args.reps
    if cfg.get("procedure") != "verify_rejections" and args.seed is None and cfg.get("seed") is None:
        raise SelectionError("simulate is stochastic: give --seed or a scenario 'seed'")
    result = run_scenario(cfg, _seed(args, required=False))
    if "curve" in result:
        header = ["c", "q_star", "estimate", "se", "reps"]
        rows = [[r[k] for k in header] for r in result["curve"]]
    else:
        header = [k for k in ("scenario", "procedure", "q", "reps", "estimate", "se", "bound", "verdict") if k in result]
        rows = [[result[k] for k in header]]
    _emit(args, header, rows, result)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (required for perm-bh and simulate)")
    common.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="selrisk", description="Selective risk control procedures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bh", parents=[common], help="BH rejections and iteration trace from a p-value CSV")
    p.add_argument("input", help="CSV with a 'p' column")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--trace", default=None, help="also write the trace JSON here")
    p.set_defaults(func=cmd_bh)

    p = sub.add_parser("by-iterate", parents=[common], help="per-iteration BY upper bounds from a z CSV")
    p.add_argument("input", help="CSV with an 'x' column")
    p.add_argument("--q", type=float, required=True)
    p.set_defaults(func=cmd_by_iterate)

    p = sub.add_parser("extra-risk", parents=[common], help="run one decision/selection pair")
    p.add_argument("input", help="CSV with columns among task_id, p, category, p_minus, group")
    p.add_argument("--strategy", required=True, help="strategy JSON, e.g. {\"kind\": \"threshold\", \"q\": 0.1}")
    p.set_defaults(func=cmd_extra_risk)

    p = sub.add_parser("multi-risk", parents=[common], help="run a suite of pairs on a common selection")
    p.add_argument("input")
    p.add_argument("--suite", required=True, help="JSON list of strategy objects (or {\"pairs\": [...]})")
    p.add_argument("--mode", choices=("parallel", "sequential"), default="parallel")
    p.set_defaults(func=cmd_multi_risk)

    p = sub.add_parser("fdr-curve", parents=[common], help="modified BH for an FDR curve (Gaussian shift)")
    p.add_argument("input", help="CSV with an 'x' column")
    p.add_argument("--curve", required=True, help="JSON with 'anchors' and optional 'grid'")
    p.add_argument("--curve-table", default=None, help="write the (c, q_bh, q_star) table here")
    p.set_defaults(func=cmd_fdr_curve)

    p = sub.add_parser("perm-bh", parents=[common], help="permutation BH with an adaptive budget")
    p.add_argument("input", help="CSV with columns task_id, group, value")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--fixed-m", type=int, default=None, help="use M permutations per task instead")
    p.add_argument("--groups", default=None, help="labels of group A and group B, e.g. case,control")
    p.set_defaults(func=cmd_perm_bh)

    p = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo scenario")
    p.add_argument("scenario", help="scenario JSON path or bundled name (e.g. bh_fdr_m100)")
    p.add_argument("--reps", type=int, default=None, help="override the scenario's replication count")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (SelectionError, ContractingViolation, NonTermination, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"selrisk {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
