"""Decision procedures of liquid (item-period) and buffer (period) agents.

Agents are immutable records; every step function returns a fresh record
and never looks at another agent's state.  Everything an agent learns about
the others arrives as arguments that mirror protocol messages: a capacity
snapshot (what buffers announced) for liquids, bids plus the registered
resource requirements for buffers.

Capacity snapshots are plain sequences indexed by ``period - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ProtocolViolation
from .model import Instance, Pair, Plan, compute_upc, heuristic_cost_za, upc_matrix

__all__ = [
    "Bid", "BufferAgent", "PairAgent", "Phase",
    "build_gamma", "buffer_allocate", "buffer_running", "buffer_step",
    "compute_bids", "compute_eac", "compute_upc",
    "liquid_apply_responses", "liquid_can_bid", "liquid_finalize",
    "liquid_register", "make_pair_agent", "make_pair_agents",
]


class Phase(enum.Enum):
    REGISTERING = "Registering"
    BIDDING = "Bidding"
    DONE = "Done"


@dataclass(frozen=True, slots=True)
class Bid:
    bidder: Pair
    period: int
    rho: int      # resource units requested, a multiple of the bidder's r_i
    eac: float


class PairAgent(NamedTuple):
    """Liquid agent state; step functions return updated copies."""

    item: int
    period: int
    resource_req: int
    demand: int
    remaining: int
    upc: tuple[float, ...]          # index k-1, k = 1..horizon+1
    order: tuple[int, ...]          # periods sorted by (UPC, period)
    alloc: Mapping[int, int] = MappingProxyType({})
    phase: Phase = Phase.REGISTERING

    @property
    def id(self) -> Pair:
        return (self.item, self.period)

    @property
    def horizon(self) -> int:
        return len(self.upc) - 1


def _agent(i: int, t: int, spec_r: int, d: int, upc: Sequence[float],
           order: Sequence[int] | None = None) -> PairAgent:
    if order is None:
        order = sorted(range(1, len(upc)), key=lambda k: (upc[k - 1], k))
    return PairAgent(item=i, period=t, resource_req=spec_r, demand=d,
                     remaining=d, upc=tuple(upc), order=tuple(order))


def make_pair_agent(instance: Instance, pair: Pair) -> PairAgent:
    """Liquid agent for ``pair`` with its UPC table computed once, up front."""
    i, t = pair
    upc = [compute_upc(instance, pair, k) for k in range(1, instance.horizon + 2)]
    return _agent(i, t, instance.item(i).resource_req, instance.demand(i, t), upc)


def make_pair_agents(instance: Instance) -> list[PairAgent]:
    """One agent per positive-demand pair, item-major order (vectorized UPC)."""
    agents = []
    for i, spec in enumerate(instance.items, start=1):
        if not any(spec.demand):
            continue
        matrix = upc_matrix(instance, i)
        # stable sort keeps the earlier period first on equal UPC
        orders = (np.argsort(matrix[:, :-1], axis=1, kind="stable") + 1).tolist()
        table = matrix.tolist()
        for t, d in enumerate(spec.demand, start=1):
            if d > 0:
                agents.append(_agent(i, t, spec.resource_req, d, table[t - 1], orders[t - 1]))
    return agents


def liquid_register(agent: PairAgent) -> PairAgent:
    phase = Phase.BIDDING if agent.remaining > 0 else Phase.DONE
    return agent._replace(phase=phase)


def liquid_can_bid(agent: PairAgent, capacities: Sequence[int]) -> bool:
    """Loop guard of the liquid agent: demand left and some buffer fits a unit."""
    return (agent.phase is Phase.BIDDING and agent.remaining >= 1
            and max(capacities, default=0) >= agent.resource_req)


def build_gamma(agent: PairAgent, capacities: Sequence[int]) -> list[int]:
    """Buffers able to produce at least one unit, cheapest UPC first.

    Ties in UPC keep the earlier period first.
    """
    r = agent.resource_req
    return [k for k in agent.order if capacities[k - 1] >= r]


def compute_eac(agent: PairAgent, gamma: Iterable[int]) -> float:
    """Sum of UPC over the available buffers plus the post-horizon term.

    ``math.fsum`` is correctly rounded, so the value does not depend on the
    order of ``gamma``.
    """
    upc = agent.upc
    return math.fsum([upc[k - 1] for k in gamma] + [upc[-1]])


def compute_bids(agent: PairAgent, gamma: Sequence[int], capacities: Sequence[int],
                 eac: float | None = None, include_zero: bool = True) -> list[Bid]:
    """Greedy resource requests over ``gamma``, capped by the remaining demand.

    With ``include_zero=False`` the zero requests that follow once the
    demand is covered are left out (they change no allocation).
    """
    if agent.remaining < 1:
        raise ProtocolViolation(f"agent {agent.id} has no demand to bid for")
    if eac is None:
        eac = compute_eac(agent, gamma)
    r = agent.resource_req
    left = agent.remaining * r
    bids = []
    for k in gamma:
        rho = min(capacities[k - 1] // r * r, left)
        left -= rho
        if rho or include_zero:
            bids.append(Bid(agent.id, k, rho, eac))
        if not left and not include_zero:
            break
    return bids


def liquid_apply_responses(agent: PairAgent, allocations: Mapping[int, int]) -> PairAgent:
    """Book the quantities granted by buffers (period -> units)."""
    granted = sum(allocations.values())
    if any(q < 0 for q in allocations.values()):
        raise ProtocolViolation(f"negative allocation to {agent.id}")
    if granted > agent.remaining:
        raise ProtocolViolation(
            f"agent {agent.id} granted {granted} units with only {agent.remaining} outstanding")
    if not granted:
        return agent
    alloc = dict(agent.alloc)
    for k, q in allocations.items():
        if q:
            alloc[k] = alloc.get(k, 0) + q
    remaining = agent.remaining - granted
    phase = Phase.DONE if remaining == 0 else agent.phase
    return agent._replace(alloc=alloc, remaining=remaining, phase=phase)


def liquid_finalize(agent: PairAgent,
                    capacities: Sequence[int] | None = None) -> tuple[int, float]:
    """Unmet demand and heuristic cost of a terminated agent.

    An agent counts as terminated when it is Done or, given the latest
    ``capacities``, no buffer can take a unit of its item.
    """
    stuck = capacities is not None and max(capacities, default=0) < agent.resource_req
    if agent.phase is not Phase.DONE and agent.remaining > 0 and not stuck:
        raise ProtocolViolation(f"agent {agent.id} is still active")
    unmet = agent.remaining
    i, t = agent.id
    plan = Plan({(i, t, k): q for k, q in agent.alloc.items()}, {(i, t): unmet})
    return unmet, heuristic_cost_za(None, agent.id, plan, upc=agent.upc)


@dataclass(frozen=True)
class BufferAgent:
    """Owner of one period's capacity.

    What a buffer knows about bidders (their ``r_i`` and outstanding demand)
    arrives by broadcast and is identical for every buffer, so the runtime
    keeps it in one directory and passes it to the step functions.
    """

    period: int
    capacity: int


def buffer_running(buffer: BufferAgent, open_reqs: Iterable[int]) -> bool:
    """Loop guard of the buffer.

    ``open_reqs`` are the resource requirements of bidders whose last
    reported demand is positive; the buffer keeps going while one of them
    still fits.
    """
    smallest = min(open_reqs, default=None)
    return smallest is not None and buffer.capacity >= smallest


def buffer_step(buffer: BufferAgent, bids: Iterable[Bid],
                resource_reqs: Mapping[Pair, int]) -> tuple[BufferAgent, dict[Pair, int]]:
    grants, left = buffer_allocate(buffer.period, buffer.capacity, bids, resource_reqs)
    return replace(buffer, capacity=left), grants


def buffer_allocate(period: int, capacity: int, bids: Iterable[Bid],
                    resource_reqs: Mapping[Pair, int]) -> tuple[dict[Pair, int], int]:
    """Serve bids greedily, highest EAC first; return grants and leftover capacity.

    Equal EAC values are served in ascending (item, period) order.
    """
    grants: dict[Pair, int] = {}
    for bid in sorted(bids, key=lambda b: (-b.eac, b.bidder)):
        if bid.period != period:
            raise ProtocolViolation(f"bid for period {bid.period} sent to buffer {period}")
        r = resource_reqs[bid.bidder]
        if bid.rho < 0 or bid.rho % r:
            raise ProtocolViolation(f"bid of {bid.bidder} asks {bid.rho}, not a multiple of {r}")
        if bid.bidder in grants:
            raise ProtocolViolation(f"duplicate bid from {bid.bidder} at buffer {period}")
        u = min(bid.rho // r, capacity // r)
        capacity -= u * r
        grants[bid.bidder] = u
    return grants, capacity
