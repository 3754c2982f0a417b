"""Benchmark sweeps: generated instances, spillover runs, optional oracle gaps.

Cells are independent jobs keyed by their parameters and seed; they run in
a process pool and come back in sweep order, so the CSV is byte-identical
across runs apart from the ``wall_ms`` column.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import fmean
from typing import Any, Sequence

from .generator import GeneratorConfig, congestion_ratio, generate
from .oracle import OracleLimits, verify_against_oracle
from .errors import OracleLimitExceeded
from .runtime import RunOptions, run_spillover

BASE_COLUMNS = ["items", "horizon", "kappa", "factor", "congestion", "seed",
                "congestion_ratio", "exact_obj", "heuristic_obj", "total_unmet",
                "rounds", "messages", "status", "error"]
GAP_COLUMNS = ["z_o", "gap", "oracle_nodes"]
TIMING_COLUMNS = ["wall_ms"]


@dataclass(frozen=True)
class BenchConfig:
    items: tuple[int, ...] = tuple(range(50, 151, 10))
    horizons: tuple[int, ...] = (100,)
    kappas: tuple[float, ...] = (2.0, 4.0)
    factors: tuple[float, ...] = (10.0, 2.0, 0.5, 0.1)
    reps: int = 8
    seed_base: int = 0
    congestion: tuple[float, ...] = (1.0,)
    generator: dict[str, Any] = field(default_factory=dict)  # GeneratorConfig overrides
    oracle: bool = False
    oracle_limits: OracleLimits = field(default_factory=OracleLimits)

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        # fail early on bad overrides rather than in every cell
        GeneratorConfig(n_items=1, **self.generator)

    def cells(self) -> list[dict[str, Any]]:
        out = []
        for n, T, kappa, factor, cong, rep in itertools.product(
                self.items, self.horizons, self.kappas, self.factors,
                self.congestion, range(self.reps)):
            out.append({"items": n, "horizon": T, "kappa": kappa, "factor": factor,
                        "congestion": cong, "seed": self.seed_base + rep})
        return out

    def columns(self) -> list[str]:
        return BASE_COLUMNS + (GAP_COLUMNS if self.oracle else []) + TIMING_COLUMNS

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["oracle_limits"] = asdict(self.oracle_limits)
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> BenchConfig:
        kw = dict(doc)
        for key in ("items", "horizons", "kappas", "factors", "congestion"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "generator" in kw:
            kw["generator"] = {k: tuple(v) if isinstance(v, list) else v
                               for k, v in kw["generator"].items()}
        if "oracle_limits" in kw:
            kw["oracle_limits"] = OracleLimits(**kw["oracle_limits"])
        return cls(**kw)


PRESETS: dict[str, BenchConfig] = {
    "full": BenchConfig(),
    # small enough for the exact oracle to cover every cell
    "desk": BenchConfig(
        items=(2, 3), horizons=(3, 4), reps=8, oracle=True,
        generator={"capacity_mean": 8.0, "demand_mean": (0.5, 2.5), "demand_max": 3},
    ),
}


def _gen_config(cfg: BenchConfig, cell: dict[str, Any]) -> GeneratorConfig:
    return GeneratorConfig(
        n_items=cell["items"], horizon=cell["horizon"], seed=cell["seed"],
        kappa=cell["kappa"], backorder_factor=cell["factor"],
        capacity_scale=cell["congestion"], **cfg.generator)


def run_cell(cfg: BenchConfig, cell: dict[str, Any]) -> dict[str, Any]:
    row: dict[str, Any] = {c: "" for c in cfg.columns()}
    row.update(cell)
    try:
        inst = generate(_gen_config(cfg, cell))
        row["congestion_ratio"] = congestion_ratio(inst)
        rep = run_spillover(inst, RunOptions())
        row.update(exact_obj=rep.exact_obj, heuristic_obj=rep.heuristic_obj,
                   total_unmet=rep.total_unmet, rounds=rep.rounds,
                   messages=rep.msg_count_total, wall_ms=rep.wall_time * 1000.0,
                   status="ok")
        if cfg.oracle:
            try:
                g, cert = verify_against_oracle(inst, rep.plan, cfg.oracle_limits)
            except OracleLimitExceeded:
                row["status"] = "oracle_limit"
            else:
                row.update(z_o=cert.z_o, gap="" if g is None else g, oracle_nodes=cert.nodes)
    except Exception as exc:  # recorded per row, the sweep goes on
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def worker_cap() -> int:
    env = os.environ.get("SPILLOVER_THREADS")
    cap = os.cpu_count() or 1
    if env:
        cap = max(1, min(cap, int(env)))
    return cap


def run_bench(cfg: BenchConfig, workers: int | None = None) -> list[dict[str, Any]]:
    """Run every cell; rows come back in sweep order.

    Cells run in freshly spawned worker processes (``workers`` of them,
    capped by :func:`worker_cap`), so timings do not depend on the size or
    state of the calling process.  ``workers=0`` runs them in-process.
    """
    cells = cfg.cells()
    if workers == 0 or not cells:
        return [run_cell(cfg, c) for c in cells]
    workers = min(workers or worker_cap(), worker_cap(), len(cells))
    with ProcessPoolExecutor(max_workers=workers,
                             mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(run_cell, itertools.repeat(cfg), cells))


def _cell_text(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(cfg: BenchConfig, rows: Sequence[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = cfg.columns()
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell_text(row[c]) for c in cols])
    return buf.getvalue()


def strip_timing(csv_text: str) -> str:
    """CSV text without the timing columns (for determinism checks)."""
    reader = csv.reader(io.StringIO(csv_text))
    rows = list(reader)
    if not rows:
        return ""
    keep = [j for j, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([row[j] for j in keep])
    return buf.getvalue()


def summarize(cfg: BenchConfig, rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    ok = [r for r in rows if r["status"] in ("ok", "oracle_limit")]
    by_items: dict[str, Any] = {}
    wall: dict[str, float] = {}
    for n in sorted({r["items"] for r in ok}):
        group = [r for r in ok if r["items"] == n]
        entry = {
            "cells": len(group),
            "exact_obj": fmean(r["exact_obj"] for r in group),
            "heuristic_obj": fmean(r["heuristic_obj"] for r in group),
            "rounds": fmean(r["rounds"] for r in group),
            "messages": fmean(r["messages"] for r in group),
            "total_unmet": fmean(r["total_unmet"] for r in group),
        }
        gaps = [r["gap"] for r in group if cfg.oracle and r.get("gap") != ""]
        if gaps:
            entry["gap"] = fmean(gaps)
        by_items[str(n)] = entry
        wall[str(n)] = fmean(r["wall_ms"] for r in group)
    doc: dict[str, Any] = {
        "config": cfg.to_dict(),
        "cells": len(rows),
        "failed": sum(r["status"] == "error" for r in rows),
        "means_by_items": by_items,
    }
    if cfg.oracle:
        covered = sum(r.get("z_o", "") != "" for r in rows)
        doc["oracle_coverage"] = covered / len(rows) if rows else None
    doc["timing"] = {"wall_ms_mean_by_items": wall}
    return doc


def summary_json(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"
