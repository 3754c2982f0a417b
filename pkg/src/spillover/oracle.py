"""Ground truth for small instances and LP-format export of the full model.

``solve_exact`` enumerates item-level production per period, depth first
over periods, and prunes with two rules:

* a lower bound on the cost still to come (each outstanding unit is either
  produced later, paying at least the cheapest remaining unit cost, or left
  unmet, paying at least the last-period and post-horizon back-order cost);
* dominance: the future only depends on the period and the cumulative
  production vector, so reaching the same state again at no lower cost
  cannot help.

Cumulative production of an item is capped at its net requirement
(demand plus initial backlog minus initial stock).  With non-negative
costs this loses no optimum: trimming the last production run of an
over-produced item only lowers positive stock.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

from .errors import NodeBudgetExceeded, OracleLimitExceeded, UndefinedGap
from .model import Instance, Plan, exact_cost, gap, production_cost


@dataclass(frozen=True)
class OracleLimits:
    max_items: int = 3
    max_horizon: int = 4
    max_total_demand: int = 12     # per item, summed over the horizon
    node_budget: int = 10**7

    def __post_init__(self) -> None:
        if min(self.max_items, self.max_horizon, self.max_total_demand, self.node_budget) < 1:
            raise ValueError("oracle limits must be positive")

    def check(self, instance: Instance) -> None:
        if instance.n_items > self.max_items:
            raise OracleLimitExceeded(f"{instance.n_items} items > {self.max_items}")
        if instance.horizon > self.max_horizon:
            raise OracleLimitExceeded(f"horizon {instance.horizon} > {self.max_horizon}")
        worst = max((spec.total_demand for spec in instance.items), default=0)
        if worst > self.max_total_demand:
            raise OracleLimitExceeded(f"item demand {worst} > {self.max_total_demand}")


@dataclass
class OracleResult:
    z_o: float
    production: dict[tuple[int, int], int]
    plan: Plan | None     # None when the optimum cannot be written per pair
    nodes: int


def _net_requirement(spec) -> int:
    return max(0, spec.total_demand + spec.init_backorder - spec.init_stock)


def solve_exact(instance: Instance, limits: OracleLimits | None = None) -> OracleResult:
    limits = limits or OracleLimits()
    limits.check(instance)
    T = instance.horizon
    specs = instance.items
    n = len(specs)
    need = [_net_requirement(s) for s in specs]
    total = [s.total_demand for s in specs]     # setup linking caps each period at this
    req = [s.resource_req for s in specs]
    x0 = [s.init_stock - s.init_backorder for s in specs]
    cum_d = [list(itertools.accumulate(s.demand)) for s in specs]

    # feasible production vectors per period, largest quantities first
    cands = []
    for k in range(T):
        cap = instance.capacities[k]
        ranges = [range(min(need[i], total[i], cap // req[i]), -1, -1) for i in range(n)]
        vecs = [u for u in itertools.product(*ranges)
                if sum(q * r for q, r in zip(u, req)) <= cap]
        vecs.sort(key=lambda u: -sum(u))
        cands.append(vecs)

    beta = [s.back_cost[T - 1] + s.back_cost[T] for s in specs]
    # cheapest unit / setup cost over periods k..T-1 (0-based)
    min_c = [[min(s.prod_cost[k:]) for k in range(T)] for s in specs]
    min_s = [[min(s.setup_cost[k:]) for k in range(T)] for s in specs]

    def lower_bound(k: int, P: tuple[int, ...]) -> float:
        if k >= T:
            return 0.0
        lb = 0.0
        for i in range(n):
            rem = need[i] - P[i]
            if rem:
                lb += min(rem * beta[i], min_s[i][k] + rem * min(min_c[i][k], beta[i]))
        return lb

    def period_cost(k: int, u: tuple[int, ...], P: tuple[int, ...]) -> float:
        total = 0.0
        for i, s in enumerate(specs):
            if u[i]:
                total += s.prod_cost[k] * u[i] + s.setup_cost[k]
            x = x0[i] + P[i] - cum_d[i][k]
            total += s.hold_cost[k] * x if x > 0 else -s.back_cost[k] * x
        return total

    def terminal_cost(P: tuple[int, ...]) -> float:
        total = 0.0
        for i, s in enumerate(specs):
            x = x0[i] + P[i] - cum_d[i][T - 1]
            total += s.hold_cost[T] * x if x > 0 else -s.back_cost[T] * x
        return total

    best = math.inf
    best_path: list[tuple[int, ...]] = []
    seen: dict[tuple[int, tuple[int, ...]], float] = {}
    nodes = 0
    path: list[tuple[int, ...]] = []

    def dfs(k: int, P: tuple[int, ...], cost: float) -> None:
        nonlocal best, best_path, nodes
        if k == T:
            total = cost + terminal_cost(P)
            if total < best:
                best = total
                best_path = list(path)
            return
        for u in cands[k]:
            if any(P[i] + u[i] > need[i] for i in range(n)):
                continue
            nodes += 1
            if nodes > limits.node_budget:
                raise NodeBudgetExceeded(f"node budget {limits.node_budget} exhausted")
            nP = tuple(P[i] + u[i] for i in range(n))
            c = cost + period_cost(k, u, nP)
            key = (k + 1, nP)
            if seen.get(key, math.inf) <= c:
                continue
            seen[key] = c
            if c + lower_bound(k + 1, nP) >= best:
                continue
            path.append(u)
            dfs(k + 1, nP, c)
            path.pop()

    dfs(0, (0,) * n, 0.0)
    production = {(i + 1, k + 1): best_path[k][i] if best_path else 0
                  for i in range(n) for k in range(T)}
    plan = production_to_plan(instance, production)
    return OracleResult(production_cost(instance, production), production, plan, nodes)


def production_to_plan(instance: Instance, production: Mapping[tuple[int, int], int]) -> Plan | None:
    """Assign item-level production to demand pairs, earliest demand first.

    Returns None when some item produces more than its total demand.
    """
    alloc: dict = {}
    unmet: dict = {}
    T = instance.horizon
    for i, spec in enumerate(instance.items, start=1):
        left = list(spec.demand)
        t = 0
        for k in range(1, T + 1):
            q = production.get((i, k), 0)
            while q:
                while t < T and left[t] == 0:
                    t += 1
                if t == T:
                    return None
                take = min(q, left[t])
                key = (i, t + 1, k)
                alloc[key] = alloc.get(key, 0) + take
                left[t] -= take
                q -= take
        for tt, d in enumerate(left, start=1):
            if d:
                unmet[(i, tt)] = d
    return Plan(alloc, unmet)


@dataclass
class Certificate:
    z_x: float
    z_o: float
    spillover_plan: Plan
    optimal_plan: Plan | None
    optimal_production: dict[tuple[int, int], int]
    nodes: int
    gap: float | None = None


def verify_against_oracle(instance: Instance, plan: Plan,
                          limits: OracleLimits | None = None) -> tuple[float | None, Certificate]:
    """Gap of ``plan`` against the exact optimum; None when the optimum costs 0."""
    res = solve_exact(instance, limits)
    z_x = exact_cost(instance, plan)
    try:
        g = gap(z_x, res.z_o)
    except UndefinedGap:
        g = None
    cert = Certificate(z_x, res.z_o, plan, res.plan, res.production, res.nodes, g)
    return g, cert


# ---------------------------------------------------------------------------
# LP text format


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def _expr(terms: list[tuple[float, str]]) -> str:
    parts = []
    for coef, var in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = var if mag == 1 else f"{_fmt(mag)} {var}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(line: str, width: int = 78) -> list[str]:
    body = line.lstrip(" ")
    first, *rest = body.split(" ")
    out, cur = [], line[:len(line) - len(body)] + first
    for tok in rest:
        if cur and len(cur) + 1 + len(tok) > width and tok in "+-":
            out.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    out.append(cur)
    return out


def export_lp(instance: Instance) -> str:
    """Full lot-sizing MILP in CPLEX LP text format.

    Variables ``u_i_k``, ``y_i_k`` (k = 1..T) and ``xp_i_k``, ``xm_i_k``
    (k = 1..T+1), items outer and periods inner.
    """
    T = instance.horizon
    items = list(enumerate(instance.items, start=1))
    lines = [f"\\ lot-sizing model: {len(items)} items, {T} periods", "Minimize"]

    obj: list[tuple[float, str]] = []
    for i, s in items:
        for k in range(1, T + 1):
            obj += [(s.prod_cost[k - 1], f"u_{i}_{k}"), (s.setup_cost[k - 1], f"y_{i}_{k}"),
                    (s.hold_cost[k - 1], f"xp_{i}_{k}"), (s.back_cost[k - 1], f"xm_{i}_{k}")]
    for i, s in items:
        obj += [(s.back_cost[T], f"xm_{i}_{T + 1}"), (s.hold_cost[T], f"xp_{i}_{T + 1}")]
    lines += _wrap(" obj: " + _expr([(c, v) for c, v in obj if c != 0]))

    lines.append("Subject To")
    for k in range(1, T + 1):
        terms = [(s.resource_req, f"u_{i}_{k}") for i, s in items]
        if terms:
            lines += _wrap(f" cap_{k}: {_expr(terms)} <= {_fmt(instance.capacities[k - 1])}")
    for i, s in items:
        x0 = s.init_stock - s.init_backorder
        for k in range(1, T + 2):
            terms = [(1, f"xp_{i}_{k}"), (-1, f"xm_{i}_{k}")]
            if k > 1:
                terms += [(-1, f"xp_{i}_{k - 1}"), (1, f"xm_{i}_{k - 1}")]
            if k <= T:
                terms.append((-1, f"u_{i}_{k}"))
                rhs = (x0 if k == 1 else 0) - s.demand[k - 1]
            else:
                rhs = 0
            lines += _wrap(f" bal_{i}_{k}: {_expr(terms)} = {_fmt(rhs)}")
    for i, s in items:
        D = s.total_demand
        for k in range(1, T + 1):
            terms = [(1, f"u_{i}_{k}")] + ([(-D, f"y_{i}_{k}")] if D else [])
            lines += _wrap(f" link_{i}_{k}: {_expr(terms)} <= 0")

    lines.append("Bounds")
    for i, s in items:
        for k in range(1, T + 1):
            lines.append(f" 0 <= u_{i}_{k} <= {s.total_demand}")
    lines.append("Generals")
    for i, _ in items:
        names = [f"u_{i}_{k}" for k in range(1, T + 1)]
        names += [f"{p}_{i}_{k}" for p in ("xp", "xm") for k in range(1, T + 2)]
        lines += _wrap(" " + " ".join(names))
    lines.append("Binaries")
    for i, _ in items:
        lines += _wrap(" " + " ".join(f"y_{i}_{k}" for k in range(1, T + 1)))
    lines.append("End")
    return "\n".join(lines) + "\n"


@dataclass
class LPRow:
    name: str
    coefs: dict[str, float]
    sense: str      # "<=", ">=" or "="
    rhs: float


@dataclass
class LPModel:
    sense: str = "min"
    objective: dict[str, float] = field(default_factory=dict)
    obj_constant: float = 0.0
    rows: list[LPRow] = field(default_factory=list)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    generals: set[str] = field(default_factory=set)
    binaries: set[str] = field(default_factory=set)

    def variables(self) -> set[str]:
        names = set(self.objective) | self.generals | self.binaries | set(self.bounds)
        for row in self.rows:
            names |= set(row.coefs)
        return names

    def evaluate(self, values: Mapping[str, float]) -> float:
        total = self.obj_constant
        for var, coef in self.objective.items():
            total += coef * values.get(var, 0)
        return total

    def violations(self, values: Mapping[str, float], tol: float = 1e-9) -> list[str]:
        bad = []
        for row in self.rows:
            lhs = sum(c * values.get(v, 0) for v, c in row.coefs.items())
            ok = {"<=": lhs <= row.rhs + tol, ">=": lhs >= row.rhs - tol,
                  "=": abs(lhs - row.rhs) <= tol}[row.sense]
            if not ok:
                bad.append(row.name)
        for var in sorted(self.variables()):
            v = values.get(var, 0)
            lo, hi = self.bounds.get(var, (0.0, 1.0 if var in self.binaries else math.inf))
            if not lo - tol <= v <= hi + tol:
                bad.append(f"bound:{var}")
            if var in self.generals | self.binaries and v != round(v):
                bad.append(f"integer:{var}")
        return bad


_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "minimum": "obj", "min": "obj",
    "maximize": "obj", "maximise": "obj", "maximum": "obj", "max": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "gen": "gen", "integers": "gen",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "end": "end",
}
_TOKEN = re.compile(r"""
    (?P<label>[A-Za-z_][\w.\[\]]*)\s*:      |
    (?P<op><=|>=|=<|=>|<|>|=)                |
    (?P<sign>[+-])                           |
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?) |
    (?P<var>[A-Za-z_][\w.\[\]]*)
""", re.VERBOSE)


def _tokens(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse LP text near {text[pos:pos + 20]!r}")
        out.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return out


def _parse_terms(toks, pos):
    """Linear expression starting at ``pos``: (coefs, constant, next pos)."""
    coefs: dict[str, float] = {}
    const = 0.0
    sign = 1.0
    num = None
    while pos < len(toks) and toks[pos][0] in ("sign", "num", "var"):
        kind, val = toks[pos]
        if kind == "sign":
            if num is not None:
                const += sign * num
                num = None
                sign = 1.0
            sign *= -1.0 if val == "-" else 1.0
        elif kind == "num":
            if num is not None:
                raise ValueError("two numbers in a row")
            num = float(val)
        else:
            coefs[val] = coefs.get(val, 0.0) + sign * (1.0 if num is None else num)
            sign, num = 1.0, None
        pos += 1
    if num is not None:
        const += sign * num
    return coefs, const, pos


_OPS = {"<": "<=", "=<": "<=", "<=": "<=", ">": ">=", "=>": ">=", ">=": ">=", "=": "="}


def parse_lp(text: str) -> LPModel:
    """Read the LP subset produced by :func:`export_lp` (and common variants)."""
    model = LPModel()
    section = None
    chunks: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "gen": [], "bin": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        key = line.strip().lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "obj":
                model.sense = "max" if key.startswith("max") else "min"
            if section == "end":
                break
            continue
        if line.strip() and section in chunks:
            chunks[section].append(line)

    toks = _tokens(" ".join(chunks["obj"]))
    pos = 1 if toks and toks[0][0] == "label" else 0
    model.objective, model.obj_constant, pos = _parse_terms(toks, pos)
    if pos != len(toks):
        raise ValueError("trailing tokens in objective")

    toks = _tokens(" ".join(chunks["st"]))
    pos = 0
    while pos < len(toks):
        name = f"R{len(model.rows) + 1}"
        if toks[pos][0] == "label":
            name = toks[pos][1]
            pos += 1
        coefs, const, pos = _parse_terms(toks, pos)
        if pos >= len(toks) or toks[pos][0] != "op":
            raise ValueError(f"row {name}: missing comparison")
        sense = _OPS[toks[pos][1]]
        pos += 1
        sign = 1.0
        if pos < len(toks) and toks[pos][0] == "sign":
            sign = -1.0 if toks[pos][1] == "-" else 1.0
            pos += 1
        if pos >= len(toks) or toks[pos][0] != "num":
            raise ValueError(f"row {name}: right-hand side must be a number")
        rhs = sign * float(toks[pos][1])
        pos += 1
        model.rows.append(LPRow(name, coefs, sense, rhs - const))

    for line in chunks["bounds"]:
        _parse_bound(model, line)
    for line in chunks["gen"]:
        model.generals.update(line.split())
    for line in chunks["bin"]:
        model.binaries.update(line.split())
    return model


def _bound_value(tok: str) -> float:
    low = tok.lower().lstrip("+")
    if low in ("inf", "infinity"):
        return math.inf
    if low in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def _parse_bound(model: LPModel, line: str) -> None:
    parts = line.split()
    if len(parts) == 2 and parts[1].lower() == "free":
        model.bounds[parts[0]] = (-math.inf, math.inf)
        return
    if len(parts) == 5:
        lo, op1, var, op2, hi = parts
        if _OPS.get(op1) != "<=" or _OPS.get(op2) != "<=":
            raise ValueError(f"unsupported bound {line!r}")
        model.bounds[var] = (_bound_value(lo), _bound_value(hi))
        return
    if len(parts) == 3:
        var, op, val = parts
        lo, hi = model.bounds.get(var, (0.0, math.inf))
        sense = _OPS.get(op)
        if sense == "<=":
            hi = _bound_value(val)
        elif sense == ">=":
            lo = _bound_value(val)
        elif sense == "=":
            lo = hi = _bound_value(val)
        else:
            raise ValueError(f"unsupported bound {line!r}")
        model.bounds[var] = (lo, hi)
        return
    raise ValueError(f"unsupported bound {line!r}")


def lp_values(instance: Instance, plan: Plan) -> dict[str, int]:
    """Variable assignment of :func:`export_lp` names induced by a plan."""
    from .model import derive_aggregate

    agg = derive_aggregate(instance, plan)
    values: dict[str, int] = {}
    for (i, k), q in agg.u.items():
        values[f"u_{i}_{k}"] = q
        values[f"y_{i}_{k}"] = agg.y[(i, k)]
    for (i, k), q in agg.stock.items():
        values[f"xp_{i}_{k}"] = q
        values[f"xm_{i}_{k}"] = agg.backorder[(i, k)]
    return values
