"""Simulator: reset, masking rules, transitions, costs, rollouts, writers."""

import csv
import math

import numpy as np
import pytest

from cpdptw import env, instance, toy
from cpdptw.energy import PhysicsConfig
from cpdptw.instance import Customer, Depot, FleetSpec, Instance, Vehicle
from cpdptw.network import AdjacencySpec, build_networks
from conftest import make_case


def _toy_state(zeta=120.0, mu=10.0):
    inst, fleet = toy.build_toy_instance()
    nets = build_networks(inst, AdjacencySpec(zeta=zeta, mu=mu))
    return inst, fleet, env.reset(inst, fleet, nets)


# -- reset --------------------------------------------------------------------


def test_reset_initial_state():
    inst, fleet, s = _toy_state()
    assert s.pos.tolist() == [toy.DEPOT_NODE] * 3
    assert s.clock.tolist() == [0.0] * 3
    assert s.load.tolist() == [0.0] * 3
    assert s.battery.tolist() == [v.battery for v in fleet.vehicles]
    assert not s.visited.any()
    assert all(len(c) == 0 for c in s.carrying)
    assert not s.battery_dipped.any()
    assert [len(v) for v in s.visits] == [1, 1, 1]
    assert s.step_limit() == env.STEP_LIMIT_FACTOR * 2 * inst.n_customers
    assert not s.all_served() and s.all_parked() and not s.terminal()


def test_reset_twice_is_identical():
    _, _, a = _toy_state()
    _, _, b = _toy_state()
    assert a.pos.tolist() == b.pos.tolist()
    assert a.battery.tolist() == b.battery.tolist()
    assert a.demand.tolist() == b.demand.tolist()


# -- masking rules --------------------------------------------------------------


def test_mask_rule_visited_nodes_close():
    _, _, s = _toy_state()
    assert env.feasible_mask(s)[0, 0]
    s2 = env.step(s, (0, 0))
    assert s2.visited[0]
    assert not env.feasible_mask(s2)[:, 0].any()


def test_mask_rule_hard_pickup_window():
    """A pickup whose deadline cannot be met from the depot is masked."""
    customers = [Customer(0, (4.0, 4.0), (4.5, 4.5), 0.0, 1.0, 10.0, 30.0, 1.0)]
    inst = Instance(customers, [Depot(2, (0.0, 0.0))], service_time=0.0,
                    area_km=5.0)
    fleet = FleetSpec([Vehicle("UAV", 50.0, 5.0, 1e6, 1e6, 0.0, 2)])
    s = env.reset(inst, fleet)
    # dist ~5.66 km at 3 km/min ~ 1.9 min > late 1.0
    assert not env.feasible_mask(s)[0, 0]


def test_mask_rule_capacity():
    _, _, s = _toy_state()
    s = env.step(s, (2, 0))          # robot (capacity 5) picks A: load 4
    mask = env.feasible_mask(s)
    assert not mask[2, 2]            # C has demand 2.5: 6.5 > 5
    assert mask[2, 1]                # B has demand 1: fits
    assert mask[0, 2]                # drones (capacity 10) unaffected


def test_mask_rule_neighborhood():
    # spatial radius excludes the far pickup; temporal is mute from a depot
    _, _, s = _toy_state(zeta=120.0, mu=3.0)
    mask = env.feasible_mask(s)
    assert mask[0, 0] and mask[0, 1]     # dist sqrt(5) ~ 2.24 <= 3
    assert not mask[0, 2]                # dist 5.0 > 3
    # with both thresholds tiny nothing is admissible at all
    _, _, tight = _toy_state(zeta=1e-6, mu=0.05)
    assert not env.feasible_mask(tight).any()


def test_mask_rule_delivery_requires_carrier():
    inst, _, s = _toy_state()
    n = inst.n_customers
    assert not env.feasible_mask(s)[:, n:2 * n].any()   # nothing on board yet
    s = env.step(s, (0, 0))
    mask = env.feasible_mask(s)
    assert mask[0, 0 + n]
    assert not mask[1, 0 + n] and not mask[2, 0 + n]


def test_mask_no_depot_hopping():
    inst = instance.generate(n_customers=2, n_depots=3, seed=0)
    fleet = instance.default_fleet(1, 1, inst.depot_nodes()[0])
    s = env.reset(inst, fleet)
    mask = env.feasible_mask(s)
    for d in inst.depot_nodes():
        assert not mask[:, d].any()


def test_mask_battery_blocks_unreachable_pickup():
    customers = [Customer(0, (2.0, 0.0), (2.5, 0.0), 0.0, 500.0, 0.0, 500.0, 1.0)]
    inst = Instance(customers, [Depot(2, (0.0, 0.0))], service_time=0.0,
                    area_km=5.0)
    weak = FleetSpec([Vehicle("UAV", 20.0, 5.0, 0.5, 0.65, 0.0, 2)])
    strong = FleetSpec([Vehicle("UAV", 20.0, 5.0, 6.5, 0.65, 0.0, 2)])
    assert not env.feasible_mask(env.reset(inst, weak))[0, 0]
    assert env.feasible_mask(env.reset(inst, strong))[0, 0]


def test_mask_depot_return_requires_reserve():
    _, _, s = _toy_state()
    s = env.step(s, (0, 0))
    mask = env.feasible_mask(s)
    assert mask[0, toy.DEPOT_NODE]   # huge toy battery: return always fine
    assert bool(s.carrying[0]) and not s.inst.is_depot(int(s.pos[0]))


# -- transitions ----------------------------------------------------------------


def test_step_pickup_waits_for_window_open():
    """Depot -> P_A: arrive sqrt(5) early, hold for the opening, then load."""
    _, _, s = _toy_state()
    s2 = env.step(s, (2, 0))         # robot at 1 unit/min
    v = s2.visits[2][-1]
    assert v.arrival == pytest.approx(math.sqrt(5.0), abs=1e-9)   # 2.236
    assert v.departure == pytest.approx(3.0)                       # e_A = 3
    assert s2.load[2] == pytest.approx(4.0)
    assert s2.carrying[2] == {0}
    assert s2.clock[2] == v.departure


def test_step_delivery_adds_tardiness_fields():
    inst, _, s = _toy_state()
    s = env.step(s, (2, 0))
    s = env.step(s, (2, 0 + inst.n_customers))
    v = s.visits[2][-1]
    # P_A (1,2) -> D_A (4,5): 3*sqrt(2) at 1 km/min after leaving at 3.0
    assert v.arrival == pytest.approx(3.0 + 3.0 * math.sqrt(2.0))
    assert v.departure == v.arrival    # zero service time in the example
    assert s.load[2] == pytest.approx(0.0)
    assert s.carrying[2] == set()


def test_step_depot_recharges_at_half_speed():
    inst = instance.generate(n_customers=1, n_depots=1, seed=0)
    fleet = instance.default_fleet(1, 0, inst.depot_nodes()[0])
    s0 = env.reset(inst, fleet)
    s = env.step(s0, (0, 0))
    veh = fleet.vehicles[0]
    d = inst.depot_nodes()[0]
    t_full = s.legs.time_min(veh, int(s.pos[0]), d, half=False)
    s2 = env.step(s, (0, d))
    v = s2.visits[0][-1]
    assert v.arrival == pytest.approx(float(s.clock[0]) + 2.0 * t_full)
    assert s2.battery[0] == pytest.approx(veh.battery)    # recharged to full
    expected_recharge = (veh.battery - v.battery_arrival) / veh.charge_rate
    assert v.departure == pytest.approx(v.arrival + expected_recharge)


def test_step_same_node_raises():
    _, _, s = _toy_state()
    with pytest.raises(ValueError, match="already at node"):
        env.step(s, (0, toy.DEPOT_NODE))


def test_step_leaves_input_state_unchanged():
    _, _, s = _toy_state()
    before = s.clock.copy()
    env.step(s, (0, 0))
    assert np.array_equal(s.clock, before)
    assert not s.visited.any()


def test_battery_dip_flag_sets_once():
    customers = [Customer(0, (3.0, 0.0), (3.5, 0.0), 0.0, 500.0, 0.0, 500.0, 1.0)]
    inst = Instance(customers, [Depot(2, (0.0, 0.0))], service_time=0.0,
                    area_km=5.0)
    # floor at 90 percent (5.85 kJ): the 3 km leg burns ~0.81 kJ and dips
    fleet = FleetSpec([Vehicle("UAV", 20.0, 5.0, 6.5, 0.65, 0.9, 2)])
    s = env.step(env.reset(inst, fleet), (0, 0))
    assert bool(s.battery_dipped[0])


# -- cost decomposition -----------------------------------------------------------


def _manual_breakdown(sol, inst):
    w = inst.cost_weights
    uav = adr = early = late = dips = 0.0
    for route in sol.routes:
        vs = route.visits
        ride = sum(b.arrival - a.departure for a, b in zip(vs, vs[1:]))
        if route.vehicle.mode == "UAV":
            uav += ride
        else:
            adr += ride
        floor = route.vehicle.battery_floor * route.vehicle.battery
        if any(min(v.battery_arrival, v.battery_after) < floor - 1e-9
               for v in vs[1:]):
            dips += 1
        for v in vs[1:]:
            if inst.is_pickup(v.node):
                early += max(inst.node_window(v.node)[0] - v.arrival, 0.0)
            elif inst.is_delivery(v.node):
                late += max(v.arrival - inst.node_window(v.node)[1], 0.0)
    return {"travel_uav": w.alpha1 * uav, "travel_adr": w.alpha2 * adr,
            "early_penalty": w.alpha3_early * early,
            "delay_penalty": w.alpha3_late * late,
            "battery_penalty": w.lambda_battery * dips}


def test_episode_cost_decomposition_matches_visit_log():
    for seed in range(4):
        inst, fleet = make_case(n=3, n_depots=2, seed=seed, n_uav=1, n_adr=1)
        sol = env.rollout(env.greedy_nearest, inst, fleet, seed=seed)
        manual = _manual_breakdown(sol, inst)
        for key, val in manual.items():
            assert sol.breakdown[key] == pytest.approx(val, abs=1e-12)
        assert sol.total == pytest.approx(sum(manual.values()), abs=1e-9)
        keys = set(sol.breakdown)
        assert keys == {"travel_uav", "travel_adr", "early_penalty",
                        "delay_penalty", "battery_penalty", "total"}


# -- rollout ----------------------------------------------------------------------


def test_rollout_deterministic_and_complete():
    inst, fleet = make_case(n=3, seed=1, n_uav=2, n_adr=1)
    a = env.rollout(env.greedy_nearest, inst, fleet, seed=7)
    b = env.rollout(env.greedy_nearest, inst, fleet, seed=7)
    assert a.total == b.total
    assert [v.node for r in a.routes for v in r.visits] == \
        [v.node for r in b.routes for v in r.visits]
    if a.complete:
        served = {v.node for r in a.routes for v in r.visits
                  if not inst.is_depot(v.node)}
        assert served == set(range(2 * inst.n_customers))
        for r in a.routes:
            assert inst.is_depot(r.visits[-1].node)


def test_rollout_strategies():
    inst, fleet = make_case(n=2, seed=0, n_uav=1, n_adr=1)
    for strategy in ("paired", "uav-prior", "adr-prior"):
        sol = env.rollout(env.greedy_nearest, inst, fleet, strategy=strategy)
        assert sol.total >= 0.0
    with pytest.raises(ValueError, match="strategy"):
        env.rollout(env.greedy_nearest, inst, fleet, strategy="alphabetical")


def test_rollout_rejects_policy_that_ignores_mask():
    inst, fleet = make_case(n=2, seed=0)

    def rogue(state, mask):
        return np.where(mask, -np.inf, 1.0)   # prefers masked pairs only

    with pytest.raises(RuntimeError, match="masked"):
        env.rollout(rogue, inst, fleet)


def test_greedy_nearest_prefers_customers_over_depots():
    _, _, s = _toy_state()
    mask = env.feasible_mask(s)
    scores = env.greedy_nearest(s, mask)
    assert scores.shape == mask.shape
    assert np.isneginf(scores[~mask]).all()
    k, j = np.unravel_index(int(np.argmax(np.where(mask, scores, -np.inf))),
                            mask.shape)
    assert not s.inst.is_depot(int(j))


# -- solution files ----------------------------------------------------------------


def test_solution_csv_schema(tmp_path):
    inst, fleet = make_case(n=2, seed=3)
    sol = env.rollout(env.greedy_nearest, inst, fleet, seed=3)
    path = tmp_path / "solution.csv"
    env.save_solution_csv(sol, inst, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"vehicle", "node", "kind", "arrival",
                                     "departure", "battery", "load"}
    assert len(rows) == sum(len(r.visits) for r in sol.routes)
    for row in rows:
        assert row["kind"] in ("pickup", "delivery", "depot")
        float(row["arrival"]), float(row["battery"])   # parse cleanly


def test_solution_text_writer(tmp_path):
    inst, fleet = make_case(n=2, seed=3)
    sol = env.rollout(env.greedy_nearest, inst, fleet, seed=3)
    path = tmp_path / "solution.txt"
    env.save_solution_text(sol, inst, path)
    text = path.read_text()
    assert f"total cost {sol.total:.4f}" in text
    assert "vehicle 0" in text
    for key in ("travel_uav", "delay_penalty"):
        assert key in text
