"""Cooperative-game layer: characteristic tables, checks, core, sweeps."""

import math

import numpy as np
import pytest

from cpdptw import instance, toy
from cpdptw.coalition import (Coalition, CoalitionTable, agent_label,
                              build_table, characteristic, check_convexity,
                              check_subadditivity, coalition_sweep, core_check,
                              sweep_summary, sweep_to_csv)
from cpdptw.solver import solve_exact
from cpdptw.instance import FleetSpec


# -- random tables -----------------------------------------------------------------
#
# Costs are 0.1-multiples and monotone (supersets never get cheaper).  Under
# monotonicity every core allocation is componentwise non-negative (the
# grand-coalition residual of each agent is bounded below by a superset
# difference), and with 0.1-multiple data every vertex of the core polytope
# lies on 0.05-multiples, so a 0.01-step grid over [0, C(grand)] is a
# complete search — an independent oracle for core emptiness.


def _proper_subsets(tbl, s):
    for t in tbl.subsets():
        if 0 < t.size < s.size and t.uavs <= s.uavs and t.adrs <= s.adrs:
            yield t


def _random_monotone_table(rng, n_uav, n_adr):
    tbl = CoalitionTable(uav_ids=tuple(range(n_uav)),
                         adr_ids=tuple(range(n_adr)))
    for s in sorted((s for s in tbl.subsets() if s.size > 0),
                    key=lambda s: (s.size, sorted(s.uavs), sorted(s.adrs))):
        if s.size == 1:
            cost = int(rng.integers(5, 31)) / 10.0          # 0.5 .. 3.0
        else:
            floor_ = max(tbl.costs[t] for t in _proper_subsets(tbl, s))
            cost = floor_ + int(rng.integers(0, 21)) / 10.0  # + 0.0 .. 2.0
        tbl.costs[s] = cost
    return tbl


def _random_free_table(rng, n_uav, n_adr):
    """Arbitrary positive 0.1-multiple costs (not necessarily monotone)."""
    tbl = CoalitionTable(uav_ids=tuple(range(n_uav)),
                         adr_ids=tuple(range(n_adr)))
    for s in tbl.subsets():
        if s.size > 0:
            tbl.costs[s] = int(rng.integers(1, 61)) / 10.0
    return tbl


def _grid_core_oracle(tbl, step=0.01, tol=1e-9):
    """Exhaustive 0.01-grid search for a core allocation (2-3 agents)."""
    agents = tbl.agents()
    grand = tbl.cost(tbl.grand())
    idx = {a: i for i, a in enumerate(agents)}
    constraints = []
    for s in tbl.subsets():
        if 0 < s.size < len(agents):
            member = np.zeros(len(agents), dtype=bool)
            for m in s.members():
                member[idx[m]] = True
            constraints.append((member, tbl.cost(s)))
    axis = np.arange(int(round(grand / step)) + 1) * step
    if len(agents) == 2:
        shares = [axis, grand - axis]
        ok = shares[1] >= -tol
    elif len(agents) == 3:
        shares = [axis[:, None], axis[None, :], None]
        shares[2] = grand - shares[0] - shares[1]
        ok = shares[2] >= -tol
    else:
        raise NotImplementedError("oracle covers 2-3 agents")
    for member, cost in constraints:
        total = sum(s for s, m in zip(shares, member) if m)
        ok = ok & (total <= cost + tol)
    return bool(np.any(ok))


def _assert_core_allocation_valid(tbl, allocation, tol=1e-6):
    total = sum(allocation.values())
    assert total == pytest.approx(tbl.cost(tbl.grand()), abs=tol)
    for s in tbl.subsets():
        if s.size == 0 or s == tbl.grand():
            continue
        share = sum(allocation[agent_label(m, i)] for m, i in s.members())
        assert share <= tbl.cost(s) + tol, s.label()


# -- reference example ----------------------------------------------------------


def test_reference_table_values():
    tbl = toy.toy_characteristic()
    want = {
        "{D1}": 6.7993384, "{D2}": 5.4000349, "{R1}": 14.1214756,
        "{D1,D2}": 6.3213456, "{D1,R1}": 20.9208140, "{D2,R1}": 19.5215105,
        "{D1,D2,R1}": 13.4012237,
    }
    got = {s.label(): tbl.cost(s) for s in tbl.subsets() if s.size > 0}
    assert set(got) == set(want)
    for label, value in want.items():
        assert got[label] == pytest.approx(value, abs=1e-6), label


def test_reference_table_checks_and_core():
    tbl = toy.toy_characteristic()
    assert tbl.subadditive is True and tbl.sub_witness is None
    assert tbl.convex is True
    assert tbl.core["nonempty"]
    alloc = tbl.core["allocation"]
    assert set(alloc) == {"D1", "D2", "R1"}
    _assert_core_allocation_valid(tbl, alloc)
    assert _grid_core_oracle(tbl)   # independent confirmation


def test_pairwise_coalitions_price_by_cheapest_split():
    """No published joint plan for {D1,R1}: its cost is the sum of solos."""
    tbl = toy.toy_characteristic()
    d1 = tbl.cost(Coalition.of(uavs=[0]))
    r1 = tbl.cost(Coalition.of(adrs=[0]))
    assert tbl.cost(Coalition.of(uavs=[0], adrs=[0])) == \
        pytest.approx(d1 + r1, abs=1e-9)


# -- coalition helpers -------------------------------------------------------------


def test_coalition_set_algebra_and_labels():
    a = Coalition.of(uavs=[0], adrs=[0])
    b = Coalition.of(uavs=[1])
    assert a.isdisjoint(b)
    u = a.union(b)
    assert u.size == 3 and u.label() == "{D1,D2,R1}"
    assert u.intersection(a) == a
    assert a.members() == (("UAV", 0), ("ADR", 0))
    assert agent_label("UAV", 1) == "D2" and agent_label("ADR", 0) == "R1"
    assert Coalition.of().label() == "{}"


def test_table_cost_lookup_errors():
    tbl = CoalitionTable(uav_ids=(0,), adr_ids=())
    assert tbl.cost(Coalition.of()) == 0.0
    with pytest.raises(ValueError, match="incomplete"):
        tbl.cost(Coalition.of(uavs=[0]))


def test_characteristic_rejects_out_of_pool_ids():
    inst = instance.generate(n_customers=1, seed=0)
    pool = instance.default_fleet(1, 1, inst.depot_nodes()[0])
    with pytest.raises(ValueError, match="outside the pool"):
        characteristic(Coalition.of(uavs=[5]), inst, pool)


def test_characteristic_takes_cheapest_partition():
    def cost_fn(uavs, adrs):
        return 5.0 if len(uavs) == 2 else 1.0
    inst = instance.generate(n_customers=1, seed=0)
    pool = instance.default_fleet(2, 1, inst.depot_nodes()[0])
    c = characteristic(Coalition.of(uavs=[0, 1]), inst, pool, cost_fn=cost_fn)
    assert c == pytest.approx(2.0)    # split beats the joint plan


def test_homogeneous_cache_collapses_by_composition():
    calls = []

    def cost_fn(uavs, adrs):
        calls.append((len(uavs), len(adrs)))
        return 10.0 / (len(uavs) + len(adrs))

    inst = instance.generate(n_customers=1, seed=0)
    pool = instance.default_fleet(2, 1, inst.depot_nodes()[0])
    build_table(inst, pool, cost_fn=cost_fn, homogeneous=True)
    # compositions: (1,0) (2,0) (0,1) (1,1) (2,1) - one joint pricing each
    assert sorted(set(calls)) == [(0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]
    assert len(calls) == 5


def test_build_table_solver_backend_on_single_customer():
    inst = instance.generate(n_customers=1, seed=3)
    pool = instance.default_fleet(1, 1, inst.depot_nodes()[0])
    tbl = build_table(inst, pool)
    uav_only = solve_exact(inst, FleetSpec([pool.vehicles[0]]))
    assert uav_only.feasible
    assert tbl.cost(Coalition.of(uavs=[0])) == \
        pytest.approx(uav_only.solution.total, abs=1e-9)
    grand = tbl.cost(tbl.grand())
    singles = tbl.cost(Coalition.of(uavs=[0])) + tbl.cost(Coalition.of(adrs=[0]))
    assert grand <= singles + 1e-9


# -- theorems ----------------------------------------------------------------------


def _two_agent_table(c1, c2, c12):
    tbl = CoalitionTable(uav_ids=(0,), adr_ids=(0,))
    tbl.costs[Coalition.of(uavs=[0])] = c1
    tbl.costs[Coalition.of(adrs=[0])] = c2
    tbl.costs[Coalition.of(uavs=[0], adrs=[0])] = c12
    return tbl


def test_super_additive_pair_has_empty_core():
    tbl = _two_agent_table(2.0, 3.0, 6.0)   # C(12) > C(1) + C(2)
    holds, witness = check_subadditivity(tbl)
    assert not holds and witness is not None
    s1, s2 = witness
    assert tbl.cost(s1.union(s2)) > tbl.cost(s1) + tbl.cost(s2)
    result = core_check(tbl)
    assert result == {"nonempty": False, "allocation": None}
    assert not _grid_core_oracle(tbl)


def test_sub_additive_pair_has_core_on_the_boundary():
    tbl = _two_agent_table(2.0, 3.0, 5.0)   # exactly additive
    assert check_subadditivity(tbl)[0]
    result = core_check(tbl)
    assert result["nonempty"]
    _assert_core_allocation_valid(tbl, result["allocation"])


def test_core_check_requires_finite_costs():
    tbl = _two_agent_table(1.0, 2.0, math.inf)
    with pytest.raises(ValueError, match="finite"):
        core_check(tbl)


def test_convexity_witness_identifies_violating_pair():
    rng = np.random.default_rng(11)
    seen_fail = False
    for _ in range(60):
        tbl = _random_free_table(rng, 2, 1)
        holds, witness = check_convexity(tbl)
        if holds:
            continue
        seen_fail = True
        s1, s2 = witness
        ci = tbl.cost(s1.intersection(s2))
        assert tbl.cost(s1.union(s2)) > tbl.cost(s1) + tbl.cost(s2) - ci + 1e-9
    assert seen_fail


def test_convex_tables_always_have_nonempty_cores():
    rng = np.random.default_rng(2)
    convex_seen = 0
    for trial in range(120):
        n_uav, n_adr = (1, 1) if trial % 3 else (2, 1)
        tbl = _random_monotone_table(rng, n_uav, n_adr)
        if check_convexity(tbl)[0]:
            convex_seen += 1
            assert core_check(tbl)["nonempty"], trial
    assert convex_seen >= 10


def test_core_check_agrees_with_grid_oracle():
    rng = np.random.default_rng(7)
    verdicts = {True: 0, False: 0}
    for trial in range(120):
        if trial % 2:
            tbl = _random_monotone_table(rng, 1, 1)
        else:
            tbl = _random_monotone_table(rng, *((2, 1) if trial % 4 else (1, 2)))
        result = core_check(tbl)
        oracle = _grid_core_oracle(tbl)
        assert result["nonempty"] == oracle, \
            f"trial {trial}: simplex {result['nonempty']} grid {oracle}"
        verdicts[result["nonempty"]] += 1
        if result["nonempty"]:
            _assert_core_allocation_valid(tbl, result["allocation"])
    assert verdicts[True] >= 10 and verdicts[False] >= 10


def test_core_check_agrees_with_reference_lp_solver():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(13)
    for trial in range(60):
        tbl = _random_free_table(rng, *((1, 1) if trial % 2 else (2, 1)))
        agents = tbl.agents()
        idx = {a: i for i, a in enumerate(agents)}
        a_ub, b_ub = [], []
        for s in tbl.subsets():
            if 0 < s.size < len(agents):
                row = np.zeros(len(agents))
                for m in s.members():
                    row[idx[m]] = 1.0
                a_ub.append(row)
                b_ub.append(tbl.cost(s))
        res = scipy_opt.linprog(
            np.zeros(len(agents)), A_ub=np.array(a_ub), b_ub=np.array(b_ub),
            A_eq=np.ones((1, len(agents))), b_eq=[tbl.cost(tbl.grand())],
            bounds=[(None, None)] * len(agents), method="highs")
        assert core_check(tbl)["nonempty"] == res.success, trial


# -- sweep -------------------------------------------------------------------------


def test_sweep_over_reference_costs(tmp_path):
    inst, fleet = toy.build_toy_instance()
    sweep = coalition_sweep(inst, fleet, cost_fn=toy.toy_cost_fn(inst),
                            homogeneous=False)
    assert (sweep.m, sweep.n) == (2, 1)
    assert len(sweep.cells) == 2
    full = sweep.cell(2, 1)
    assert not full.failed
    assert full.cost == pytest.approx(13.4012237, abs=1e-6)
    singles = 6.7993384 + 5.4000349 + 14.1214756
    assert full.gain == pytest.approx(singles - 13.4012237, abs=1e-6)
    assert full.core_nonempty is True

    path = tmp_path / "sweep.csv"
    sweep_to_csv(sweep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "d,r,C,gain,core_nonempty"
    assert len(lines) == 3
    text = sweep_summary(sweep)
    assert "coalition sweep over 2 UAV(s) x 1 ADR(s)" in text
    assert "core nonempty" in text


def test_sweep_requires_both_modes():
    inst, _ = toy.build_toy_instance()
    uav_only = instance.default_fleet(2, 0, toy.DEPOT_NODE)
    with pytest.raises(ValueError, match="each mode"):
        coalition_sweep(inst, uav_only, cost_fn=lambda u, a: 1.0)
