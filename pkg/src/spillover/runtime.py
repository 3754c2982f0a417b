"""Synchronous-round engine carrying messages between liquid and buffer agents.

Round 0 is registration: every buffer announces its capacity to every
liquid and every liquid registers ``(d_a, r_i)`` with every buffer.  Each
later round is a full barrier sequence:

1. every active liquid sends one bid to each buffer in its Gamma set;
2. every running buffer serves the bids it received and sends
   ``Allocation(u, R_k)`` to each bidder with outstanding demand;
3. every liquid that bid books its grants and broadcasts ``DemandUpdate``.

Message payloads carry quantities, capacities and EAC values only; cost
parameters never leave an agent.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter, defaultdict
from itertools import compress
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Union

from .agents import (
    Bid, BufferAgent, PairAgent, build_gamma, buffer_running, buffer_step,
    compute_bids, compute_eac, liquid_apply_responses, liquid_can_bid,
    liquid_finalize, liquid_register, make_pair_agents,
)
from .errors import ProtocolViolation, ReplayMismatch
from .model import Instance, Pair, Plan, exact_cost


@dataclass(frozen=True, slots=True)
class CapacityAnnounce:
    capacity: int


@dataclass(frozen=True, slots=True)
class Register:
    demand: int
    resource_req: int


@dataclass(frozen=True, slots=True)
class BidMsg:
    rho: int
    eac: float


@dataclass(frozen=True, slots=True)
class Allocation:
    qty: int
    capacity: int


@dataclass(frozen=True, slots=True)
class DemandUpdate:
    demand: int


Payload = Union[CapacityAnnounce, Register, BidMsg, Allocation, DemandUpdate]
PAYLOAD_TYPES: dict[str, type] = {
    cls.__name__: cls for cls in (CapacityAnnounce, Register, BidMsg, Allocation, DemandUpdate)
}
KINDS = tuple(PAYLOAD_TYPES)


def liquid_address(pair: Pair) -> str:
    return f"L{pair[0]}.{pair[1]}"


def buffer_address(k: int) -> str:
    return f"B{k}"


def parse_address(addr: str) -> Pair | int:
    if addr.startswith("L"):
        i, t = addr[1:].split(".")
        return int(i), int(t)
    if addr.startswith("B"):
        return int(addr[1:])
    raise ValueError(f"bad address {addr!r}")


@dataclass(frozen=True, slots=True)
class Message:
    round: int
    sender: str
    recipient: str
    payload: Payload

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    def to_record(self) -> dict[str, Any]:
        return {"round": self.round, "kind": self.kind, "from": self.sender,
                "to": self.recipient, "payload": asdict(self.payload)}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> Message:
        try:
            payload_cls = PAYLOAD_TYPES[rec["kind"]]
            names = {f.name for f in fields(payload_cls)}
            if set(rec["payload"]) != names:
                raise ProtocolViolation(f"payload fields {sorted(rec['payload'])} for {rec['kind']}")
            return cls(int(rec["round"]), rec["from"], rec["to"], payload_cls(**rec["payload"]))
        except KeyError as exc:
            raise ProtocolViolation(f"malformed trace record: missing {exc}") from None


def write_trace(messages: Iterable[Message], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for msg in messages:
            fh.write(json.dumps(msg.to_record(), separators=(",", ":")) + "\n")


def read_trace(path: str | Path) -> list[Message]:
    with open(path, encoding="utf-8") as fh:
        return [Message.from_record(json.loads(line)) for line in fh if line.strip()]


@dataclass
class RunOptions:
    trace: bool = False
    # None -> horizon + 2; going past it contradicts the termination bound
    max_rounds: int | None = None


@dataclass
class RunReport:
    plan: Plan
    exact_obj: float
    heuristic_obj: float
    rounds: int
    msg_counts: dict[str, int]
    agent_iterations: int
    wall_time: float
    n_liquids: int
    n_buffers: int
    total_unmet: int
    max_liquid_sent: int = 0         # per liquid per round
    max_liquid_received: int = 0     # per liquid per round
    max_buffer_messages: int = 0     # per buffer per round, sent + received
    max_bids_same_buffer: int = 0    # most bids one liquid sent to one buffer
    za: dict[Pair, float] = field(default_factory=dict)
    trace: list[Message] | None = None

    @property
    def msg_count_total(self) -> int:
        return sum(self.msg_counts.values())

    def to_dict(self, include_plan: bool = True) -> dict[str, Any]:
        from .formats import plan_to_dict

        doc: dict[str, Any] = {
            "exact_obj": self.exact_obj,
            "heuristic_obj": self.heuristic_obj,
            "total_unmet": self.total_unmet,
            "rounds": self.rounds,
            "agent_iterations": self.agent_iterations,
            "n_liquids": self.n_liquids,
            "n_buffers": self.n_buffers,
            "msg_count_total": self.msg_count_total,
            "msg_counts": dict(self.msg_counts),
            "max_liquid_sent": self.max_liquid_sent,
            "max_liquid_received": self.max_liquid_received,
            "max_buffer_messages": self.max_buffer_messages,
            "max_bids_same_buffer": self.max_bids_same_buffer,
        }
        if include_plan:
            doc["plan"] = plan_to_dict(self.plan)
        doc["timing"] = {"wall_time_s": self.wall_time}
        return doc


def trace(report: RunReport) -> list[Message]:
    """Ordered message log of a run executed with ``RunOptions(trace=True)``."""
    if report.trace is None:
        raise ValueError("run was executed without tracing")
    return report.trace


def run_spillover(instance: Instance, options: RunOptions | None = None) -> RunReport:
    opts = options or RunOptions()
    T = instance.horizon
    round_cap = opts.max_rounds if opts.max_rounds is not None else T + 2
    started = time.perf_counter()
    log: list[Message] | None = [] if opts.trace else None
    counts = Counter({kind: 0 for kind in KINDS})

    liquids: dict[Pair, PairAgent] = {a.id: a for a in make_pair_agents(instance)}
    buffers = [BufferAgent(k, cap) for k, cap in enumerate(instance.capacities, start=1)]
    n_liq = len(liquids)
    stats = Counter()

    # round 0: registration
    if n_liq:
        counts["CapacityAnnounce"] += T * n_liq
        counts["Register"] += T * n_liq
        stats["liq_sent"] = stats["liq_recv"] = T
        stats["buf"] = 2 * n_liq
    if log is not None:
        for b in buffers:
            for pid in liquids:
                log.append(Message(0, buffer_address(b.period), liquid_address(pid),
                                   CapacityAnnounce(b.capacity)))
        for pid, a in liquids.items():
            for b in buffers:
                log.append(Message(0, liquid_address(pid), buffer_address(b.period),
                                   Register(a.demand, a.resource_req)))
    # every liquid holds the same snapshot: the latest broadcast R_k of each buffer
    view = [b.capacity for b in buffers]
    # every buffer holds the same directory: r_i and last reported d_a
    reqs = {pid: a.resource_req for pid, a in liquids.items()}
    reported = {pid: a.demand for pid, a in liquids.items()}
    for pid in liquids:
        liquids[pid] = liquid_register(liquids[pid])

    active = [pid for pid, a in liquids.items() if liquid_can_bid(a, view)]
    rounds = 0
    iterations = 0
    bid_rounds: Counter = Counter()
    while active:
        rounds += 1
        if rounds > round_cap:
            raise ProtocolViolation(f"no termination after {round_cap} rounds")
        iterations += len(active)

        # 1. liquids bid
        bids_at: dict[int, list[Bid]] = defaultdict(list)
        active_by_req: Counter = Counter()
        # per requirement r: which buffers fit a unit (shared by every liquid of that r)
        masks = {r: [cap >= r for cap in view] + [True] for r in set(reqs.values())}
        for pid in active:
            a = liquids[pid]
            mask = masks[a.resource_req]
            # fsum is exact, so summing in period order equals compute_eac over Gamma
            eac = math.fsum(compress(a.upc, mask))
            n_gamma = sum(mask) - 1
            gamma = (build_gamma(a, view) if log is not None
                     else (k for k in a.order if mask[k - 1]))
            for bid in compute_bids(a, gamma, view, eac, include_zero=log is not None):
                bids_at[bid.period].append(bid)
                if log is not None:
                    log.append(Message(rounds, liquid_address(pid), buffer_address(bid.period),
                                       BidMsg(bid.rho, bid.eac)))
            counts["BidMsg"] += n_gamma
            stats["liq_sent"] = max(stats["liq_sent"], n_gamma + T)
            active_by_req[a.resource_req] += 1
            bid_rounds[pid] += 1
        # bids reaching buffer k: every active liquid whose unit fits R_k
        bids_received = [sum(n for r, n in active_by_req.items() if r <= cap) for cap in view]

        # 2. buffers allocate
        open_pids = [pid for pid, d in reported.items() if d > 0]
        open_reqs = {reqs[pid] for pid in open_pids}
        grants_to: dict[Pair, dict[int, int]] = defaultdict(dict)
        running = 0
        for idx, b in enumerate(buffers):
            if not buffer_running(b, open_reqs):
                if bids_at.get(b.period):
                    raise ProtocolViolation(f"bids sent to idle buffer {b.period}")
                continue
            running += 1
            new_b, grants = buffer_step(b, bids_at.get(b.period, ()), reqs)
            buffers[idx] = new_b
            view[idx] = new_b.capacity
            for pid, u in grants.items():
                if u:
                    grants_to[pid][b.period] = u
            counts["Allocation"] += len(open_pids)
            stats["buf"] = max(stats["buf"], bids_received[idx] + len(open_pids) + len(active))
            if log is not None:
                src = buffer_address(b.period)
                for pid in open_pids:
                    log.append(Message(rounds, src, liquid_address(pid),
                                       Allocation(grants.get(pid, 0), new_b.capacity)))
        stats["liq_recv"] = max(stats["liq_recv"], running)

        # 3. liquids book grants and report remaining demand
        for pid in active:
            a = liquid_apply_responses(liquids[pid], grants_to.get(pid, {}))
            liquids[pid] = a
            reported[pid] = a.remaining
            counts["DemandUpdate"] += T
            if log is not None:
                for b in buffers:
                    log.append(Message(rounds, liquid_address(pid), buffer_address(b.period),
                                       DemandUpdate(a.remaining)))
        # the guard only needs the largest capacity, taken once per round
        top = (max(view, default=0),)
        active = [pid for pid in active if liquid_can_bid(liquids[pid], top)]

    alloc: dict = {}
    unmet: dict = {}
    za: dict[Pair, float] = {}
    heuristic = 0.0
    top = (max(view, default=0),)
    for pid, a in liquids.items():
        left, z = liquid_finalize(a, top)
        za[pid] = z
        heuristic += z
        if left:
            unmet[pid] = left
        for k, q in a.alloc.items():
            alloc[(pid[0], pid[1], k)] = q
    plan = Plan(alloc, unmet)
    wall = time.perf_counter() - started
    return RunReport(
        plan=plan,
        exact_obj=exact_cost(instance, plan),
        heuristic_obj=heuristic,
        rounds=rounds,
        msg_counts=dict(counts),
        agent_iterations=iterations,
        wall_time=wall,
        n_liquids=n_liq,
        n_buffers=T,
        total_unmet=plan.total_unmet,
        max_liquid_sent=stats["liq_sent"],
        max_liquid_received=stats["liq_recv"],
        max_buffer_messages=stats["buf"],
        max_bids_same_buffer=max(bid_rounds.values(), default=0),
        za=za,
        trace=log,
    )


def replay(instance: Instance, messages: Iterable[Message]) -> Plan:
    """Re-drive the agent step functions from a recorded trace.

    Every logged bid and allocation is checked against what the step
    functions produce; any difference raises :class:`ReplayMismatch`.
    """
    by_round: dict[int, list[Message]] = defaultdict(list)
    for msg in messages:
        by_round[msg.round].append(msg)
    liquids = {a.id: liquid_register(a) for a in make_pair_agents(instance)}
    T = instance.horizon

    reg = {(parse_address(m.sender), parse_address(m.recipient)): m.payload
           for m in by_round.get(0, []) if m.kind == "Register"}
    expected = {(pid, k): Register(a.demand, a.resource_req)
                for pid, a in liquids.items() for k in range(1, T + 1)}
    if reg != expected:
        raise ReplayMismatch("registrations differ from the instance")
    view = list(instance.capacities)
    for m in by_round.get(0, []):
        if m.kind == "CapacityAnnounce":
            view[parse_address(m.sender) - 1] = m.payload.capacity
    reqs = {pid: a.resource_req for pid, a in liquids.items()}
    caps = list(view)

    for rnd in sorted(r for r in by_round if r > 0):
        msgs = by_round[rnd]
        logged_bids = {(parse_address(m.sender), parse_address(m.recipient)): m.payload
                       for m in msgs if m.kind == "BidMsg"}
        bids_at: dict[int, list[Bid]] = defaultdict(list)
        redone = {}
        for pid, a in liquids.items():
            if not liquid_can_bid(a, view):
                continue
            gamma = build_gamma(a, view)
            for bid in compute_bids(a, gamma, view):
                redone[(pid, bid.period)] = BidMsg(bid.rho, bid.eac)
                bids_at[bid.period].append(bid)
        if redone != logged_bids:
            raise ReplayMismatch(f"round {rnd}: bids differ from the log")

        logged_alloc = {(parse_address(m.recipient), parse_address(m.sender)): m.payload
                        for m in msgs if m.kind == "Allocation"}
        grants_to: dict[Pair, dict[int, int]] = defaultdict(dict)
        for k, bids in sorted(bids_at.items()):
            grants, caps[k - 1] = _allocate(k, caps[k - 1], bids, reqs)
            for pid, u in grants.items():
                got = logged_alloc.get((pid, k))
                if got is None or got.qty != u or got.capacity != caps[k - 1]:
                    raise ReplayMismatch(f"round {rnd}: allocation of buffer {k} to {pid} differs")
                if u:
                    grants_to[pid][k] = u
        for (pid, k), payload in logged_alloc.items():
            if payload.capacity != caps[k - 1]:
                raise ReplayMismatch(f"round {rnd}: buffer {k} capacity differs")
            view[k - 1] = payload.capacity
        for pid in {p for p, _ in redone}:
            liquids[pid] = liquid_apply_responses(liquids[pid], grants_to.get(pid, {}))

    alloc: dict = {}
    unmet: dict = {}
    for pid, a in liquids.items():
        left, _ = liquid_finalize(a, view)
        if left:
            unmet[pid] = left
        for k, q in a.alloc.items():
            alloc[(pid[0], pid[1], k)] = q
    return Plan(alloc, unmet)


def _allocate(k, cap, bids, reqs):
    new_b, grants = buffer_step(BufferAgent(k, cap), bids, reqs)
    return grants, new_b.capacity
