"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 invalid or infeasible input,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from . import bench as benchmod
from .errors import (InfeasibleInstance, InvalidInstance, InvalidPlan, NodeBudgetExceeded,
                     OracleLimitExceeded, ProtocolViolation, ReplayMismatch)
from .formats import dumps, instance_to_dict, load_instance, plan_to_dict
from .generator import GeneratorConfig, congestion_ratio, generate, wagner_whitin_violations
from .model import check_feasibility, normalize_instance
from .oracle import OracleLimits, export_lp, verify_against_oracle
from .runtime import RunOptions, replay, run_spillover, write_trace

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _nonneg(text: str) -> int:
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _ints(text: str) -> tuple[int, ...]:
    """Comma list ``2,3,5`` or inclusive range ``start:stop:step``."""
    if ":" in text:
        parts = [int(v) for v in text.split(":")]
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        start, stop = parts[:2]
        step = parts[2] if len(parts) == 3 else 1
        if step < 1:
            raise argparse.ArgumentTypeError("range step must be >= 1")
        return tuple(range(start, stop + 1, step))
    return tuple(int(v) for v in text.split(",") if v.strip())


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _limits(args) -> OracleLimits:
    base = OracleLimits()
    return OracleLimits(
        max_items=args.max_items or base.max_items,
        max_horizon=args.max_horizon or base.max_horizon,
        max_total_demand=args.max_total_demand or base.max_total_demand,
        node_budget=args.node_budget or base.node_budget,
    )


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    flags = {"n_items": args.items, "horizon": args.horizon, "seed": args.seed,
             "kappa": args.kappa, "backorder_factor": args.factor,
             "capacity_scale": args.capacity_scale, "big_m": args.big_m}
    doc.update({k: v for k, v in flags.items() if v is not None})
    if "n_items" not in doc:
        raise UsageError("--items is required (flag or config file)")
    try:
        cfg = GeneratorConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InvalidInstance(f"invalid generator config: {exc}") from None
    inst = generate(cfg)
    _write(dumps(instance_to_dict(inst)), args.out)
    total = sum(spec.total_demand for spec in inst.items)
    info = sys.stderr if args.out in (None, "-") else sys.stdout
    print(f"items={inst.n_items} horizon={inst.horizon} total_demand={total} "
          f"total_capacity={sum(inst.capacities)}", file=info)
    try:
        print(f"congestion_ratio={congestion_ratio(inst):.6f}", file=info)
    except ZeroDivisionError:
        print("congestion_ratio=undefined (zero capacity)", file=info)
    print(f"wagner_whitin_violations={len(wagner_whitin_violations(inst))}", file=info)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if inst.items:
        _, log = normalize_instance(inst)
        for line in log.lines():
            print(f"note: {line}", file=sys.stderr)
    rep = run_spillover(inst, RunOptions(trace=bool(args.trace), max_rounds=args.max_rounds))
    bad = check_feasibility(inst, rep.plan)
    if bad:
        raise ProtocolViolation("spillover plan infeasible: " + "; ".join(map(str, bad)))
    if args.trace:
        write_trace(rep.trace, args.trace)
        if replay(inst, rep.trace) != rep.plan:
            raise ReplayMismatch("trace does not reproduce the plan")
    if args.report:
        _write(dumps(rep.to_dict(include_plan=True)), args.report)
    if args.plan:
        _write(dumps(plan_to_dict(rep.plan)), args.plan)
    print(f"exact_obj={rep.exact_obj!r}")
    print(f"heuristic_obj={rep.heuristic_obj!r}")
    print(f"total_unmet={rep.total_unmet}")
    print(f"rounds={rep.rounds}")
    print("messages=" + " ".join(f"{k}:{v}" for k, v in rep.msg_counts.items())
          + f" total:{rep.msg_count_total}")
    print(f"wall_time_ms={rep.wall_time * 1000:.3f}")
    return EXIT_OK


def _verify_one(path: Path, limits: OracleLimits) -> dict:
    inst = load_instance(path)
    rep = run_spillover(inst, RunOptions())
    g, cert = verify_against_oracle(inst, rep.plan, limits)
    if cert.z_x < cert.z_o:
        raise ProtocolViolation(f"{path}: spillover cost {cert.z_x!r} below optimum {cert.z_o!r}")
    return {"z_x": cert.z_x, "z_o": cert.z_o, "gap": g, "nodes": cert.nodes}


def cmd_verify(args) -> int:
    limits = _limits(args)
    target = Path(args.instance)
    if not target.is_dir():
        try:
            res = _verify_one(target, limits)
        except OracleLimitExceeded as exc:
            raise OracleLimitExceeded(
                f"{exc}; instance too large for the exact oracle, "
                f"use `spillover export-lp` and an external MILP solver") from None
        print(f"z_x={res['z_x']!r}")
        print(f"z_o={res['z_o']!r}")
        print("gap=" + ("undefined (z_o = 0)" if res["gap"] is None else repr(res["gap"])))
        return EXIT_OK

    rows = []
    for path in sorted(target.glob("*.json")):
        row = {"file": path.name, "z_x": "", "z_o": "", "gap": "", "status": "ok"}
        try:
            res = _verify_one(path, limits)
            row.update(z_x=repr(res["z_x"]), z_o=repr(res["z_o"]),
                       gap="" if res["gap"] is None else repr(res["gap"]))
        except (OracleLimitExceeded, NodeBudgetExceeded) as exc:
            row["status"] = f"oracle_limit: {exc}"
        except (InvalidInstance, InvalidPlan, InfeasibleInstance, OSError) as exc:
            row["status"] = f"invalid: {exc}"
        rows.append(row)
    out = sys.stdout if args.csv in (None, "-") else open(args.csv, "w", encoding="utf-8", newline="")
    try:
        writer = csv.DictWriter(out, ["file", "z_x", "z_o", "gap", "status"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_export_lp(args) -> int:
    _write(export_lp(load_instance(args.instance)), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.config:
        cfg = benchmod.BenchConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        cfg = benchmod.PRESETS[args.preset]
    changes = {k: v for k, v in {
        "items": args.items, "horizons": args.horizons, "kappas": args.kappas,
        "factors": args.factors, "reps": args.reps, "seed_base": args.seed_base,
        "congestion": args.congestion, "oracle": args.oracle,
    }.items() if v is not None}
    try:
        cfg = benchmod.BenchConfig.from_dict({**cfg.to_dict(), **changes})
    except (TypeError, ValueError) as exc:
        raise InvalidInstance(f"invalid bench config: {exc}") from None
    rows = benchmod.run_bench(cfg, args.workers)
    _write(benchmod.rows_to_csv(cfg, rows), args.csv)
    summary = benchmod.summarize(cfg, rows)
    if args.summary:
        _write(benchmod.summary_json(summary), args.summary)
    info = sys.stderr if args.csv in (None, "-") else sys.stdout
    print(f"cells={summary['cells']} failed={summary['failed']}", file=info)
    if "oracle_coverage" in summary:
        print(f"oracle_coverage={summary['oracle_coverage']}", file=info)
    for n, ms in summary["timing"]["wall_ms_mean_by_items"].items():
        print(f"items={n} mean_wall_ms={ms:.3f}", file=info)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spillover", description="Decentralized lot-sizing via the spillover auction.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--config", help="JSON generator config; flags override it")
    g.add_argument("--items", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--kappa", type=float)
    g.add_argument("--factor", type=float, help="back-order cost as a multiple of holding cost")
    g.add_argument("--capacity-scale", type=float)
    g.add_argument("--big-m", type=float)
    g.add_argument("--out", help="instance file (default stdout)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the spillover algorithm")
    s.add_argument("instance")
    s.add_argument("--report", help="write the run report (JSON)")
    s.add_argument("--plan", help="write the plan (JSON)")
    s.add_argument("--trace", help="write the message log (JSON lines)")
    s.add_argument("--max-rounds", type=int)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="compare against the exact optimum")
    v.add_argument("instance", help="instance file or directory of *.json")
    v.add_argument("--csv", help="batch mode output (default stdout)")
    v.add_argument("--max-items", type=int)
    v.add_argument("--max-horizon", type=int)
    v.add_argument("--max-total-demand", type=int)
    v.add_argument("--node-budget", type=int)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export-lp", help="write the full MILP in LP format")
    e.add_argument("instance")
    e.add_argument("--out", help="LP file (default stdout)")
    e.set_defaults(func=cmd_export_lp)

    b = sub.add_parser("bench", help="run a benchmark sweep")
    b.add_argument("--preset", choices=sorted(benchmod.PRESETS), default="full")
    b.add_argument("--config", help="JSON bench config (replaces the preset)")
    b.add_argument("--items", type=_ints, help="e.g. 50:150:10 or 2,3")
    b.add_argument("--horizons", type=_ints)
    b.add_argument("--kappas", type=_floats)
    b.add_argument("--factors", type=_floats)
    b.add_argument("--reps", type=int)
    b.add_argument("--seed-base", type=int)
    b.add_argument("--congestion", type=_floats, help="capacity multipliers")
    b.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=None)
    b.add_argument("--workers", type=_nonneg,
                   help="worker processes (default: CPU count, capped by SPILLOVER_THREADS; 0 = in-process)")
    b.add_argument("--csv", help="CSV output (default stdout)")
    b.add_argument("--summary", help="JSON summary output")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spillover: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProtocolViolation, ReplayMismatch, AssertionError) as exc:
        print(f"spillover: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InvalidInstance, InvalidPlan, InfeasibleInstance, OracleLimitExceeded,
            NodeBudgetExceeded, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"spillover: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
