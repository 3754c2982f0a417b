"""Seeded random instances with Wagner-Whitin cost structure.

Random streams: every quantity of every item, and the capacity of every
period, draws from its own ``numpy`` PCG64 stream derived from
``SeedSequence(seed, spawn_key=...)``:

    (0, item_index, q)   q = 0 setup, 1 holding, 2 production,
                             3 mean demand, 4 demand path, 5 resource req
    (1, period_index)    capacity

so adding items or periods never perturbs the draws of existing ones.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from .model import Instance, ItemSpec

_ITEM, _PERIOD = 0, 1
_SETUP, _HOLD, _PROD, _DBAR, _DEMAND, _RREQ = range(6)


@dataclass(frozen=True)
class GeneratorConfig:
    n_items: int
    horizon: int = 100
    seed: int = 0
    kappa: float = 2.0
    backorder_factor: float = 2.0
    capacity_mean: float = 110000.0
    capacity_sd: float | None = None        # None -> capacity_mean / 4
    capacity_scale: float = 1.0             # congestion knob, applied before rounding
    big_m: float = 10000.0
    setup_initial: tuple[float, float] = (50.0, 100.0)
    setup_step: float = 1.0                 # s_{k+1} - s_k ~ U(-step, step)
    holding: tuple[float, float] = (20.0, 100.0)
    production: tuple[float, float] = (1000.0, 10000.0)
    demand_mean: tuple[float, float] = (100.0, 1000.0)
    demand_max: int | None = None
    resource_req: tuple[int, int] = (1, 3)  # inclusive integer range
    backlog_factor: float = 1.0             # b_{i,T+1} = backlog_factor * b_i

    def __post_init__(self) -> None:
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.kappa > 1:
            raise ValueError("kappa must be > 1")
        if self.backorder_factor < 0 or self.capacity_scale < 0 or self.backlog_factor < 0:
            raise ValueError("factors must be non-negative")
        if not self.big_m > 0:
            raise ValueError("big_m must be positive")
        lo, hi = self.resource_req
        if not 1 <= lo <= hi:
            raise ValueError("resource_req range must satisfy 1 <= lo <= hi")
        for name in ("setup_initial", "holding", "production", "demand_mean"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} range must satisfy 0 <= lo <= hi")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> GeneratorConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known - {"format_version"}
        if unknown:
            raise ValueError(f"unknown generator fields {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items() if k in known}
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def with_(self, **changes) -> GeneratorConfig:
        return replace(self, **changes)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _item(cfg: GeneratorConfig, idx: int) -> ItemSpec:
    T = cfg.horizon
    seed = cfg.seed

    g = _rng(seed, _ITEM, idx, _SETUP)
    s = np.empty(T)
    s[0] = g.uniform(*cfg.setup_initial)
    steps = g.uniform(-cfg.setup_step, cfg.setup_step, size=T - 1)
    for k in range(1, T):
        s[k] = max(s[k - 1] + steps[k - 1], 0.0)

    h = float(_rng(seed, _ITEM, idx, _HOLD).uniform(*cfg.holding))
    b = float(round(cfg.backorder_factor * h))
    c = float(_rng(seed, _ITEM, idx, _PROD).uniform(*cfg.production))
    dbar = float(_rng(seed, _ITEM, idx, _DBAR).uniform(*cfg.demand_mean))
    d = np.rint(_rng(seed, _ITEM, idx, _DEMAND).normal(dbar, dbar / cfg.kappa, size=T))
    d = np.clip(d, 0, cfg.demand_max)
    lo, hi = cfg.resource_req
    r = int(_rng(seed, _ITEM, idx, _RREQ).integers(lo, hi + 1))

    return ItemSpec(
        resource_req=r,
        demand=[int(v) for v in d],
        prod_cost=[c] * T,
        setup_cost=s.tolist(),
        hold_cost=[h] * (T + 1),
        back_cost=[b] * T + [cfg.backlog_factor * b],
    )


def _capacity(cfg: GeneratorConfig, idx: int) -> int:
    sd = cfg.capacity_sd if cfg.capacity_sd is not None else cfg.capacity_mean / 4
    draw = _rng(cfg.seed, _PERIOD, idx).normal(cfg.capacity_mean, sd)
    return max(int(np.rint(draw * cfg.capacity_scale)), 0)


def generate(cfg: GeneratorConfig) -> Instance:
    items = tuple(_item(cfg, j) for j in range(cfg.n_items))
    caps = tuple(_capacity(cfg, k) for k in range(cfg.horizon))
    return Instance(cfg.horizon, items, caps, cfg.big_m)


def wagner_whitin_violations(instance: Instance) -> list[tuple[int, int]]:
    """(item, k) pairs breaking ``-b_ik < s_{i,k+1} - s_ik < h_ik``."""
    bad = []
    for i, spec in enumerate(instance.items, start=1):
        for k in range(1, instance.horizon):
            ds = spec.setup_cost[k] - spec.setup_cost[k - 1]
            if not -spec.back_cost[k - 1] < ds < spec.hold_cost[k - 1]:
                bad.append((i, k))
    return bad


def congestion_ratio(instance: Instance) -> float:
    """Resource units demanded over the horizon divided by capacity offered."""
    cap = sum(instance.capacities)
    if cap <= 0:
        raise ZeroDivisionError("instance offers no capacity")
    need = sum(spec.resource_req * spec.total_demand for spec in instance.items)
    return need / cap
