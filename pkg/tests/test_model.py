import random

import pytest
from hypothesis import given, settings, strategies as st

from spillover.errors import InfeasibleInstance, InvalidInstance, InvalidPlan, UndefinedGap
from spillover.model import (Instance, ItemSpec, Plan, check_feasibility, compute_upc,
                             derive_aggregate, exact_cost, gap, heuristic_cost_za,
                             lagrangian_cost, normalize_instance, production_cost, upc_matrix)

from reference import e1, objective, tiny_instance, upc_straight


def item(r=1, demand=(1,), c=0.0, s=0.0, h=0.0, b=0.0, **kw):
    T = len(demand)
    return ItemSpec(r, list(demand), [c] * T, [s] * T, [h] * (T + 1), [b] * (T + 1), **kw)


E1_PLAN = Plan({(1, 2, 1): 2, (1, 2, 2): 2})


# -- types -----------------------------------------------------------------

def test_itemspec_rejects_wrong_lengths():
    with pytest.raises(InvalidInstance):
        Instance(2, (ItemSpec(1, [1, 1], [0, 0], [0, 0], [0, 0], [0, 0, 0]),), (1, 1))


@pytest.mark.parametrize("kw", [
    {"resource_req": 0}, {"demand": [-1]}, {"prod_cost": [-1.0]},
    {"init_stock": 1, "init_backorder": 1},
])
def test_itemspec_rejects_bad_values(kw):
    base = dict(resource_req=1, demand=[1], prod_cost=[0], setup_cost=[0],
                hold_cost=[0, 0], back_cost=[0, 0])
    base.update(kw)
    with pytest.raises(InvalidInstance):
        ItemSpec(**base)


def test_instance_rejects_bad_shape():
    with pytest.raises(InvalidInstance):
        Instance(0, (), ())
    with pytest.raises(InvalidInstance):
        Instance(2, (item(demand=(1, 1)),), (1,))
    with pytest.raises(InvalidInstance):
        Instance(1, (item(),), (-1,))


def test_pairs_are_positive_demand_item_major():
    inst = Instance(2, (item(demand=(0, 3)), item(demand=(1, 1))), (5, 5))
    assert inst.pairs() == [(1, 2), (2, 1), (2, 2)]


def test_plan_drops_zero_entries():
    assert Plan({(1, 1, 1): 0}, {(1, 1): 0}) == Plan()
    assert Plan({(1, 2, 2): 1, (1, 1, 1): 1}) == Plan({(1, 1, 1): 1, (1, 2, 2): 1})


# -- normalize_instance ----------------------------------------------------

def test_normalize_removes_oversized_item():
    inst = Instance(2, (item(r=5, demand=(1, 1)), item(r=1, demand=(1, 1))), (4, 4))
    out, log = normalize_instance(inst)
    assert log.removed_items == [1]
    assert out.n_items == 1 and out.item(1).resource_req == 1
    assert log.item_origin == {1: 2}
    assert log.lines()


def test_normalize_identity_when_nothing_violated():
    inst = Instance(2, (item(r=1, demand=(1, 1)),), (3, 3))
    out, log = normalize_instance(inst)
    assert out is inst and not log


def test_normalize_flags_unusable_period():
    inst = Instance(2, (item(r=2, demand=(1, 1)), item(r=3, demand=(1, 1))), (1, 9))
    out, log = normalize_instance(inst)
    assert log.unusable_periods == [1]
    assert log.removed_items == []
    assert out.capacities == (1, 9)


def test_normalize_everything_removed_is_infeasible():
    with pytest.raises(InfeasibleInstance):
        normalize_instance(Instance(1, (item(r=5),), (4,)))


# -- aggregate and feasibility ---------------------------------------------

def test_derive_aggregate_e1():
    agg = derive_aggregate(e1(), E1_PLAN)
    assert [agg.stock[(1, k)] for k in (1, 2, 3, 4)] == [2, 0, 0, 0]
    assert [agg.backorder[(1, k)] for k in (1, 2, 3, 4)] == [0, 0, 0, 0]
    assert agg.u == {(1, 1): 2, (1, 2): 2, (1, 3): 0}
    assert agg.y == {(1, 1): 1, (1, 2): 1, (1, 3): 0}


def test_derive_aggregate_zero():
    inst = Instance(2, (item(demand=(0, 0)),), (1, 1))
    agg = derive_aggregate(inst, Plan())
    assert set(agg.stock.values()) == {0} and set(agg.backorder.values()) == {0}


def test_derive_aggregate_just_in_time():
    inst = Instance(3, (item(demand=(1, 2, 3)),), (9, 9, 9))
    plan = Plan({(1, t, t): d for t, d in ((1, 1), (2, 2), (3, 3))})
    agg = derive_aggregate(inst, plan)
    assert not any(agg.stock.values()) and not any(agg.backorder.values())


def test_derive_aggregate_rejects_bad_accounting():
    with pytest.raises(InvalidPlan):
        derive_aggregate(e1(), Plan({(1, 2, 1): 1}))


def test_feasibility_e1():
    assert check_feasibility(e1(), E1_PLAN) == []


def test_feasibility_over_capacity_and_accounting():
    bad = check_feasibility(e1(), Plan({(1, 2, 1): 3, (1, 2, 2): 2}))
    kinds = {v.constraint for v in bad}
    assert "capacity" in kinds and "demand_accounting" in kinds
    cap = [v for v in bad if v.constraint == "capacity"][0]
    assert cap.where == (1,) and "load 6 > capacity 4" == cap.detail


def test_feasibility_empty():
    inst = Instance(1, (item(demand=(0,)),), (0,))
    assert check_feasibility(inst, Plan()) == []


def test_feasibility_flags_non_integer_and_negative():
    kinds = {v.constraint for v in check_feasibility(e1(), Plan({(1, 2, 1): 2.5, (1, 2, 2): -1}))}
    assert {"integrality", "nonnegativity"} <= kinds


def test_feasibility_flags_bad_period():
    kinds = {v.constraint for v in check_feasibility(e1(), Plan({(1, 2, 7): 4}))}
    assert "index" in kinds


# -- costs -----------------------------------------------------------------

def test_exact_cost_e1():
    assert exact_cost(e1(), E1_PLAN) == 28


def test_exact_cost_e1_late_plan():
    assert exact_cost(e1(), Plan({(1, 2, 2): 2, (1, 2, 3): 2})) == 30


def test_exact_cost_zero():
    inst = Instance(2, (item(demand=(0, 0), c=3, s=3),), (1, 1))
    assert exact_cost(inst, Plan()) == 0


def test_exact_cost_counts_setup_once_per_item_period():
    spec = item(demand=(1, 1), s=10.0, h=0.0)
    inst = Instance(2, (spec,), (5, 5))
    plan = Plan({(1, 1, 1): 1, (1, 2, 1): 1})
    assert exact_cost(inst, plan) == 10


def test_exact_cost_unmet_uses_post_horizon_back_cost():
    spec = ItemSpec(1, [1], [0], [0], [0, 0], [2, 7])
    inst = Instance(1, (spec,), (0,))
    assert exact_cost(inst, Plan(unmet={(1, 1): 1})) == 2 + 7


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_exact_cost_matches_reference_objective(seed):
    rng = random.Random(seed)
    inst = tiny_instance(rng, integer_costs=False)
    alloc, unmet = {}, {}
    for (i, t) in inst.pairs():
        left = inst.demand(i, t)
        for k in range(1, inst.horizon + 1):
            q = rng.randint(0, left)
            alloc[(i, t, k)] = q
            left -= q
        unmet[(i, t)] = left
    plan = Plan(alloc, unmet)
    u = derive_aggregate(inst, plan).u
    assert exact_cost(inst, plan) == pytest.approx(objective(inst, u), rel=1e-12)
    assert production_cost(inst, u) == exact_cost(inst, plan)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["c", "s", "h", "b"]))
def test_exact_cost_monotone_in_costs(seed, which):
    rng = random.Random(seed)
    inst = tiny_instance(rng)
    plan = Plan({(i, t, t): inst.demand(i, t) for (i, t) in inst.pairs()})
    base = exact_cost(inst, plan)
    spec = inst.items[0]
    field = {"c": "prod_cost", "s": "setup_cost", "h": "hold_cost", "b": "back_cost"}[which]
    vals = list(getattr(spec, field))
    vals[rng.randrange(len(vals))] += 5
    bumped = ItemSpec(**{**{f: getattr(spec, f) for f in spec.__dataclass_fields__}, field: vals})
    inst2 = Instance(inst.horizon, (bumped,) + inst.items[1:], inst.capacities, inst.big_m)
    assert exact_cost(inst2, plan) >= base


def test_exact_cost_all_costs_zero():
    inst = Instance(2, (item(demand=(2, 1)),), (0, 0))
    assert exact_cost(inst, Plan(unmet={(1, 1): 2, (1, 2): 1})) == 0


def test_initial_conditions_enter_inventory():
    spec = item(demand=(2,), h=1.0, b=5.0, init_stock=3)
    inst = Instance(1, (spec,), (0,))
    # one unit left over in period 1 and carried to the post-horizon slot
    assert exact_cost(inst, Plan(unmet={(1, 1): 2})) == 2


# -- UPC -------------------------------------------------------------------

def test_upc_e1():
    inst = e1()
    assert [compute_upc(inst, (1, 2), k) for k in (1, 2, 3, 4)] == [9, 8, 10, 40000]


def test_upc_zero_costs():
    inst = Instance(1, (item(),), (1,))
    assert compute_upc(inst, (1, 1), 1) == 0


def test_upc_out_of_range():
    with pytest.raises(ValueError):
        compute_upc(e1(), (1, 2), 5)
    with pytest.raises(ValueError):
        compute_upc(e1(), (1, 2), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_upc_matches_straight_line(seed):
    rng = random.Random(seed)
    T = rng.randint(1, 8)
    spec = ItemSpec(1, [1] * T, [rng.uniform(0, 1e4) for _ in range(T)],
                    [rng.uniform(0, 100) for _ in range(T)],
                    [rng.uniform(0, 100) for _ in range(T + 1)],
                    [rng.uniform(0, 100) for _ in range(T + 1)])
    inst = Instance(T, (spec,), (1,) * T, big_m=rng.uniform(1, 1e4))
    mat = upc_matrix(inst, 1)
    for t in range(1, T + 1):
        for k in range(1, T + 2):
            ref = upc_straight(spec.prod_cost, spec.setup_cost, spec.hold_cost, spec.back_cost,
                               inst.big_m, T, t, k)
            assert compute_upc(inst, (1, t), k) == ref
            assert mat[t - 1, k - 1] == ref


# -- heuristic and relaxed costs -------------------------------------------

def test_za_e1():
    assert heuristic_cost_za(e1(), (1, 2), E1_PLAN) == 34


def test_za_empty():
    assert heuristic_cost_za(e1(), (1, 2), Plan()) == 0


def test_za_with_unmet():
    plan = Plan({(1, 2, 1): 2, (1, 2, 2): 1}, {(1, 2): 1})
    assert heuristic_cost_za(e1(), (1, 2), plan) == 18 + 8 + 40000


def test_lagrangian_e1():
    # per-pair: setups 3+3, production 10+10, holding 2; penalty 1*(4-4)+1*(4-4)+1*(0-4)
    assert lagrangian_cost(e1(), E1_PLAN, [1, 1, 1]) == 24


def test_lagrangian_zero_multipliers_single_pair_equals_exact():
    assert lagrangian_cost(e1(), E1_PLAN, [0, 0, 0]) == exact_cost(e1(), E1_PLAN)


def test_lagrangian_penalizes_excess_load():
    plan = Plan({(1, 2, 1): 4})   # load 8 on capacity 4
    base = lagrangian_cost(e1(), plan, [0, 0, 0])
    assert lagrangian_cost(e1(), plan, [2, 0, 0]) == base + 2 * 4


def test_lagrangian_counts_setups_per_pair():
    spec = item(demand=(1, 1), s=10.0)
    inst = Instance(2, (spec,), (5, 5))
    plan = Plan({(1, 1, 1): 1, (1, 2, 1): 1})
    assert lagrangian_cost(inst, plan, [0, 0]) == 20
    assert exact_cost(inst, plan) == 10


def test_lagrangian_rejects_bad_multipliers():
    with pytest.raises(ValueError):
        lagrangian_cost(e1(), E1_PLAN, [1, 1])
    with pytest.raises(ValueError):
        lagrangian_cost(e1(), E1_PLAN, [1, -1, 1])


def test_gap():
    assert gap(125, 100) == 0.25
    assert gap(7.5, 7.5) == 0
    with pytest.raises(UndefinedGap):
        gap(1, 0)
    with pytest.raises(UndefinedGap):
        gap(1, -2)
