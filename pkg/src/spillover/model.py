"""Lot-sizing instances, production plans and their cost evaluators.

Indexing convention: items are numbered ``1..n_items`` and periods
``1..horizon`` everywhere in the public API (plan keys, agent ids, file
formats).  Period ``horizon + 1`` stands for "after the horizon" and is only
meaningful for holding/back-order costs and inventory levels.  The sequences
stored on :class:`ItemSpec` are ordinary 0-based Python tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleInstance, InvalidInstance, InvalidPlan, UndefinedGap

Pair = tuple[int, int]            # (item, demand period)
AllocKey = tuple[int, int, int]   # (item, demand period, production period)


def _as_int_tuple(values: Iterable, name: str) -> tuple[int, ...]:
    out = []
    for v in values:
        if isinstance(v, bool) or int(v) != v:
            raise InvalidInstance(f"{name} must hold integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


def _as_float_tuple(values: Iterable, name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if any(not math.isfinite(v) for v in out):
        raise InvalidInstance(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class ItemSpec:
    """Data of one item over the horizon.

    ``hold_cost`` and ``back_cost`` carry one extra trailing entry for the
    surplus-stock and backlog cost after the horizon.
    """

    resource_req: int
    demand: tuple[int, ...]
    prod_cost: tuple[float, ...]
    setup_cost: tuple[float, ...]
    hold_cost: tuple[float, ...]
    back_cost: tuple[float, ...]
    init_stock: int = 0
    init_backorder: int = 0

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "demand", _as_int_tuple(self.demand, "demand"))
        for name in ("prod_cost", "setup_cost", "hold_cost", "back_cost"):
            set_(self, name, _as_float_tuple(getattr(self, name), name))
        if isinstance(self.resource_req, bool) or int(self.resource_req) != self.resource_req:
            raise InvalidInstance("resource_req must be an integer")
        set_(self, "resource_req", int(self.resource_req))
        set_(self, "init_stock", int(self.init_stock))
        set_(self, "init_backorder", int(self.init_backorder))
        if self.resource_req < 1:
            raise InvalidInstance("resource_req must be >= 1")
        if any(d < 0 for d in self.demand):
            raise InvalidInstance("demand must be non-negative")
        for name in ("prod_cost", "setup_cost", "hold_cost", "back_cost"):
            if any(v < 0 for v in getattr(self, name)):
                raise InvalidInstance(f"{name} must be non-negative")
        if self.init_stock < 0 or self.init_backorder < 0:
            raise InvalidInstance("initial stock/backorder must be non-negative")
        if self.init_stock and self.init_backorder:
            raise InvalidInstance("initial stock and backorder cannot both be positive")

    @property
    def horizon(self) -> int:
        return len(self.demand)

    @property
    def total_demand(self) -> int:
        return sum(self.demand)

    def check_lengths(self, horizon: int) -> None:
        expected = {
            "demand": horizon,
            "prod_cost": horizon,
            "setup_cost": horizon,
            "hold_cost": horizon + 1,
            "back_cost": horizon + 1,
        }
        for name, n in expected.items():
            got = len(getattr(self, name))
            if got != n:
                raise InvalidInstance(f"{name} has length {got}, expected {n}")


@dataclass(frozen=True)
class Instance:
    horizon: int
    items: tuple[ItemSpec, ...]
    capacities: tuple[int, ...]
    big_m: float = 10000.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "capacities", _as_int_tuple(self.capacities, "capacities"))
        object.__setattr__(self, "big_m", float(self.big_m))
        if self.horizon < 1:
            raise InvalidInstance("horizon must be >= 1")
        if len(self.capacities) != self.horizon:
            raise InvalidInstance("capacities must have one entry per period")
        if any(r < 0 for r in self.capacities):
            raise InvalidInstance("capacities must be non-negative")
        if not self.big_m > 0:
            raise InvalidInstance("big_m must be positive")
        for spec in self.items:
            spec.check_lengths(self.horizon)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def item(self, i: int) -> ItemSpec:
        return self.items[i - 1]

    def demand(self, i: int, t: int) -> int:
        return self.items[i - 1].demand[t - 1]

    def pairs(self) -> list[Pair]:
        """All (item, period) pairs with positive demand, item-major order."""
        return [
            (i, t)
            for i, spec in enumerate(self.items, start=1)
            for t, d in enumerate(spec.demand, start=1)
            if d > 0
        ]


@dataclass
class Plan:
    """Allocation of each pair's demand to production periods.

    Zero entries are dropped on construction so that equal plans compare
    equal regardless of how they were built.
    """

    alloc: dict[AllocKey, int] = field(default_factory=dict)
    unmet: dict[Pair, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.alloc = {k: v for k, v in sorted(self.alloc.items()) if v != 0}
        self.unmet = {k: v for k, v in sorted(self.unmet.items()) if v != 0}

    def allocated(self, pair: Pair) -> int:
        i, t = pair
        return sum(q for (ii, tt, _), q in self.alloc.items() if ii == i and tt == t)

    def production(self, pair: Pair) -> dict[int, int]:
        i, t = pair
        return {k: q for (ii, tt, k), q in self.alloc.items() if ii == i and tt == t}

    @property
    def total_unmet(self) -> int:
        return sum(self.unmet.values())


@dataclass
class AggregatePlan:
    """Item-level view of a plan: production, setups and inventory paths.

    ``stock`` and ``backorder`` run over periods ``1..horizon+1``.
    """

    u: dict[tuple[int, int], int]
    y: dict[tuple[int, int], int]
    stock: dict[tuple[int, int], int]
    backorder: dict[tuple[int, int], int]


@dataclass
class RemovalLog:
    removed_items: list[int] = field(default_factory=list)
    unusable_periods: list[int] = field(default_factory=list)
    # new item index -> index in the raw instance
    item_origin: dict[int, int] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.removed_items or self.unusable_periods)

    def lines(self) -> list[str]:
        out = [f"removed item {i}: resource requirement exceeds every capacity"
               for i in self.removed_items]
        out += [f"period {k} unusable: capacity below the smallest resource requirement"
                for k in self.unusable_periods]
        return out


@dataclass(frozen=True)
class Violation:
    constraint: str
    where: tuple
    detail: str

    def __str__(self) -> str:
        return f"{self.constraint}{list(self.where)}: {self.detail}"


def normalize_instance(raw: Instance) -> tuple[Instance, RemovalLog]:
    """Drop items that can never be produced and flag unusable periods.

    Items with ``r_i > max_t R_t`` are removed (survivors are renumbered,
    see ``RemovalLog.item_origin``).  Periods with ``R_t < min_i r_i`` keep
    their capacity and are only reported.
    """
    log = RemovalLog()
    max_cap = max(raw.capacities)
    kept = []
    for i, spec in enumerate(raw.items, start=1):
        if spec.resource_req > max_cap:
            log.removed_items.append(i)
        else:
            kept.append(spec)
            log.item_origin[len(kept)] = i
    if not kept:
        raise InfeasibleInstance("no item fits the capacity of any period")
    min_req = min(spec.resource_req for spec in kept)
    log.unusable_periods = [k for k, cap in enumerate(raw.capacities, start=1) if cap < min_req]
    if not log.removed_items:
        return raw, log
    return Instance(raw.horizon, tuple(kept), raw.capacities, raw.big_m), log


def _pair_totals(plan: Plan) -> dict[Pair, int]:
    totals: dict[Pair, int] = {}
    for (i, t, _), q in plan.alloc.items():
        totals[(i, t)] = totals.get((i, t), 0) + q
    return totals


def _accounting_errors(instance: Instance, plan: Plan) -> list[Violation]:
    out = []
    totals = _pair_totals(plan)
    T = instance.horizon
    keys = set(totals) | set(plan.unmet)
    keys |= set(instance.pairs())
    for (i, t) in sorted(keys):
        if not (1 <= i <= instance.n_items and 1 <= t <= T):
            out.append(Violation("index", (i, t), "pair outside the instance"))
            continue
        got = totals.get((i, t), 0) + plan.unmet.get((i, t), 0)
        want = instance.demand(i, t)
        if got != want:
            out.append(Violation("demand_accounting", (i, t),
                                 f"allocated+unmet = {got}, demand = {want}"))
    for (i, t, k) in plan.alloc:
        if not 1 <= k <= T:
            out.append(Violation("index", (i, t, k), "production period outside the horizon"))
    return out


def _aggregate_production(instance: Instance, plan: Plan) -> dict[tuple[int, int], int]:
    u = {(i, k): 0 for i in range(1, instance.n_items + 1) for k in range(1, instance.horizon + 1)}
    for (i, _t, k), q in plan.alloc.items():
        if (i, k) in u:
            u[(i, k)] += q
    return u


def _inventory_paths(instance: Instance, u: Mapping[tuple[int, int], int]):
    T = instance.horizon
    stock: dict[tuple[int, int], int] = {}
    back: dict[tuple[int, int], int] = {}
    for i, spec in enumerate(instance.items, start=1):
        x = spec.init_stock - spec.init_backorder
        for k in range(1, T + 1):
            x += u[(i, k)] - spec.demand[k - 1]
            stock[(i, k)] = max(x, 0)
            back[(i, k)] = max(-x, 0)
        stock[(i, T + 1)] = max(x, 0)
        back[(i, T + 1)] = max(-x, 0)
    return stock, back


def derive_aggregate(instance: Instance, plan: Plan) -> AggregatePlan:
    """Aggregate pair allocations per (item, period) and propagate inventory.

    Raises :class:`InvalidPlan` unless every pair's allocations plus unmet
    demand add up to its demand and all quantities are non-negative integers.
    """
    bad = [v for v in _accounting_errors(instance, plan)]
    for key, q in list(plan.alloc.items()) + list(plan.unmet.items()):
        if isinstance(q, bool) or int(q) != q or q < 0:
            bad.append(Violation("integrality", key, f"quantity {q!r}"))
    if bad:
        raise InvalidPlan("; ".join(str(v) for v in bad))
    u = _aggregate_production(instance, plan)
    y = {key: int(q > 0) for key, q in u.items()}
    stock, back = _inventory_paths(instance, u)
    return AggregatePlan(u=u, y=y, stock=stock, backorder=back)


def check_feasibility(instance: Instance, plan: Plan) -> list[Violation]:
    """Every constraint of the lot-sizing model the plan breaks (empty if feasible)."""
    out: list[Violation] = []
    entries = [(("alloc",) + k, q) for k, q in plan.alloc.items()]
    entries += [(("unmet",) + k, q) for k, q in plan.unmet.items()]
    for key, q in entries:
        if isinstance(q, bool) or not float(q).is_integer():
            out.append(Violation("integrality", key[1:], f"{key[0]} quantity {q!r} is not integral"))
        if q < 0:
            out.append(Violation("nonnegativity", key[1:], f"{key[0]} quantity {q!r} is negative"))
    out += _accounting_errors(instance, plan)

    u = _aggregate_production(instance, plan)
    for k in range(1, instance.horizon + 1):
        load = 0
        for i, spec in enumerate(instance.items, start=1):
            load += u[(i, k)] * spec.resource_req
        cap = instance.capacities[k - 1]
        if load > cap:
            out.append(Violation("capacity", (k,), f"load {load} > capacity {cap}"))
    for (i, k), q in u.items():
        limit = instance.item(i).total_demand
        if q > limit:
            out.append(Violation("setup_linking", (i, k),
                                 f"production {q} exceeds total item demand {limit}"))
    return out


def exact_cost(instance: Instance, plan: Plan) -> float:
    """Objective of the centralized model: setups counted once per (item, period)."""
    agg = derive_aggregate(instance, plan)
    return _aggregate_cost(instance, agg.u, agg.stock, agg.backorder)


def _aggregate_cost(instance, u, stock, back) -> float:
    T = instance.horizon
    total = 0.0
    for i, spec in enumerate(instance.items, start=1):
        for k in range(1, T + 1):
            q = u[(i, k)]
            total += spec.hold_cost[k - 1] * stock[(i, k)]
            total += spec.back_cost[k - 1] * back[(i, k)]
            if q:
                total += spec.prod_cost[k - 1] * q
                total += spec.setup_cost[k - 1]
    for i, spec in enumerate(instance.items, start=1):
        total += spec.back_cost[T] * back[(i, T + 1)]
        total += spec.hold_cost[T] * stock[(i, T + 1)]
    return total


def production_cost(instance: Instance, u: Mapping[tuple[int, int], int]) -> float:
    """Objective of the centralized model for an item-level production vector.

    Unlike :func:`exact_cost` this accepts overproduction (it needs no
    per-pair plan), which is what the exact solver explores.
    """
    stock, back = _inventory_paths(instance, u)
    return _aggregate_cost(instance, u, stock, back)


def compute_upc(instance: Instance, pair: Pair, k: int) -> float:
    """Accumulated unit production cost of serving ``pair`` from period ``k``.

    Holding (k before the demand period) or back-order costs (k after it)
    are accumulated left to right starting from 0.0, then added to
    ``c + s``; ``k = horizon + 1`` prices never producing at ``M`` times
    the back-order costs from ``t+1`` through ``horizon+1``.
    """
    i, t = pair
    T = instance.horizon
    if not 1 <= k <= T + 1:
        raise ValueError(f"period {k} outside 1..{T + 1}")
    spec = instance.item(i)
    acc = 0.0
    if k == T + 1:
        for m in range(t + 1, T + 2):
            acc += spec.back_cost[m - 1]
        return instance.big_m * acc
    if k < t:
        for m in range(k, t):
            acc += spec.hold_cost[m - 1]
    elif k > t:
        for m in range(t + 1, k + 1):
            acc += spec.back_cost[m - 1]
    return (spec.prod_cost[k - 1] + spec.setup_cost[k - 1]) + acc


def upc_matrix(instance: Instance, i: int) -> np.ndarray:
    """UPC of item ``i`` for every demand period (rows) and k (columns).

    Entry ``[t-1, k-1]`` equals ``compute_upc(instance, (i, t), k)``
    bit-for-bit: ``np.cumsum`` accumulates sequentially, in the same order.
    """
    spec = instance.item(i)
    T = instance.horizon
    base = np.asarray(spec.prod_cost) + np.asarray(spec.setup_cost)
    h = np.asarray(spec.hold_cost[:T])
    b = np.asarray(spec.back_cost)
    # hold[k0, j] = h[k0] + ... + h[j];  back[r, j] = b[r] + ... + b[j]
    hold = np.cumsum(np.triu(np.broadcast_to(h, (T, T))), axis=1)
    back = np.cumsum(np.triu(np.broadcast_to(b, (T + 1, T + 1))), axis=1)
    t0, k0 = np.indices((T, T))
    early = base[k0] + hold[k0, np.maximum(t0 - 1, 0)]
    late = base[k0] + back[np.minimum(t0 + 1, T), k0]
    out = np.empty((T, T + 1))
    out[:, :T] = np.where(k0 < t0, early, np.where(k0 > t0, late, base[k0]))
    out[:, T] = instance.big_m * back[np.arange(1, T + 1), T]
    return out


def heuristic_cost_za(instance: Instance | None, pair: Pair, plan: Plan,
                      upc: Sequence[float] | None = None) -> float:
    """Heuristic cost of one pair: UPC-weighted allocations plus backlog.

    ``upc`` may carry a precomputed table (index ``k-1``, length
    ``horizon + 1``); ``instance`` is then not consulted.
    """
    T = len(upc) - 1 if upc is not None else instance.horizon

    def cost(k: int) -> float:
        return upc[k - 1] if upc is not None else compute_upc(instance, pair, k)

    total = 0.0
    for k, q in sorted(plan.production(pair).items()):
        total += cost(k) * q
    unmet = plan.unmet.get(pair, 0)
    if unmet:
        total += cost(T + 1) * unmet
    return total


def lagrangian_cost(instance: Instance, plan: Plan, multipliers: Sequence[float]) -> float:
    """Relaxed objective on the pair decomposition for fixed capacity prices.

    Each pair keeps its own setup indicators and inventory path (starting
    empty); the capacity rows enter as ``sum_k lam_k * (load_k - R_k)``.
    """
    T = instance.horizon
    lam = [float(v) for v in multipliers]
    if len(lam) != T or any(v < 0 for v in lam):
        raise ValueError("need one non-negative multiplier per period")
    by_pair: dict[Pair, dict[int, int]] = {}
    for (i, t, k), q in plan.alloc.items():
        by_pair.setdefault((i, t), {})[k] = q
    pairs = sorted(set(instance.pairs()) | set(by_pair) | set(plan.unmet))
    total = 0.0
    load = [0] * T
    for (i, t) in pairs:
        spec = instance.item(i)
        prod = by_pair.get((i, t), {})
        x = 0
        for k in range(1, T + 1):
            q = prod.get(k, 0)
            x += q - (spec.demand[t - 1] if k == t else 0)
            total += spec.hold_cost[k - 1] * max(x, 0)
            total += spec.back_cost[k - 1] * max(-x, 0)
            if q:
                total += spec.prod_cost[k - 1] * q + spec.setup_cost[k - 1]
                load[k - 1] += q * spec.resource_req
        total += spec.back_cost[T] * max(-x, 0) + spec.hold_cost[T] * max(x, 0)
    for k in range(T):
        total += lam[k] * (load[k] - instance.capacities[k])
    return total


def gap(z_x: float, z_o: float) -> float:
    """Relative optimality gap ``(z_x - z_o) / z_o``."""
    if not z_o > 0:
        raise UndefinedGap(f"gap undefined for reference cost {z_o!r}")
    return (z_x - z_o) / z_o
