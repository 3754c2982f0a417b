"""JSON documents for instances and plans (``format_version`` 1)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import InvalidInstance, InvalidPlan
from .model import Instance, ItemSpec, Plan

FORMAT_VERSION = 1

_ITEM_FIELDS = ("resource_req", "demand", "prod_cost", "setup_cost",
                "hold_cost", "back_cost", "init_stock", "init_backorder")


def _num(v: float) -> int | float:
    # integral costs are written as ints so hand-written files round-trip
    return int(v) if float(v).is_integer() and abs(v) < 2**53 else v


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "horizon": instance.horizon,
        "big_m": _num(instance.big_m),
        "capacities": list(instance.capacities),
        "items": [
            {
                "resource_req": spec.resource_req,
                "demand": list(spec.demand),
                "prod_cost": [_num(v) for v in spec.prod_cost],
                "setup_cost": [_num(v) for v in spec.setup_cost],
                "hold_cost": [_num(v) for v in spec.hold_cost],
                "back_cost": [_num(v) for v in spec.back_cost],
                "init_stock": spec.init_stock,
                "init_backorder": spec.init_backorder,
            }
            for spec in instance.items
        ],
    }


def _check_version(doc: dict, kind: str, exc: type[Exception]) -> None:
    if not isinstance(doc, dict):
        raise exc(f"{kind} document must be a JSON object")
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise exc(f"unsupported {kind} format_version {version!r}")


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    _check_version(doc, "instance", InvalidInstance)
    try:
        items = []
        for raw in doc["items"]:
            unknown = set(raw) - set(_ITEM_FIELDS)
            if unknown:
                raise InvalidInstance(f"unknown item fields {sorted(unknown)}")
            items.append(ItemSpec(
                resource_req=raw["resource_req"],
                demand=raw["demand"],
                prod_cost=raw["prod_cost"],
                setup_cost=raw["setup_cost"],
                hold_cost=raw["hold_cost"],
                back_cost=raw["back_cost"],
                init_stock=raw.get("init_stock", 0),
                init_backorder=raw.get("init_backorder", 0),
            ))
        return Instance(
            horizon=int(doc["horizon"]),
            items=tuple(items),
            capacities=doc["capacities"],
            big_m=doc.get("big_m", 10000.0),
        )
    except KeyError as exc:
        raise InvalidInstance(f"missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise InvalidInstance(str(exc)) from None


def plan_to_dict(plan: Plan) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "alloc": [{"item": i, "t": t, "k": k, "qty": q} for (i, t, k), q in sorted(plan.alloc.items())],
        "unmet": [{"item": i, "t": t, "qty": q} for (i, t), q in sorted(plan.unmet.items())],
    }


def plan_from_dict(doc: dict[str, Any]) -> Plan:
    _check_version(doc, "plan", InvalidPlan)
    alloc: dict = {}
    unmet: dict = {}
    try:
        for row in doc.get("alloc", []):
            key = (int(row["item"]), int(row["t"]), int(row["k"]))
            alloc[key] = alloc.get(key, 0) + row["qty"]
        for row in doc.get("unmet", []):
            key = (int(row["item"]), int(row["t"]))
            unmet[key] = unmet.get(key, 0) + row["qty"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidPlan(f"malformed plan row: {exc}") from None
    return Plan(alloc, unmet)


def dumps(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=1) + "\n"


def load_instance(path: str | Path) -> Instance:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"{path}: {exc}") from None
    return instance_from_dict(doc)


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps(instance_to_dict(instance)))


def load_plan(path: str | Path) -> Plan:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidPlan(f"{path}: {exc}") from None
    return plan_from_dict(doc)


def save_plan(plan: Plan, path: str | Path) -> None:
    Path(path).write_text(dumps(plan_to_dict(plan)))
