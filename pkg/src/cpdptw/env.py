"""MDP simulator: state, feasibility masking, transitions, cost accounting.

The simulator advances one (vehicle, node) decision at a time.  Each step
moves the chosen vehicle along the cached shortest path of its network,
spends battery, waits for hard pickup windows to open, serves the node and
updates the clock.  Vehicles ride at max speed between customers and at half
speed when heading to a depot; recharging is linear in the missing charge.

Masking enforces, per candidate (vehicle k at node i, target j):

1. visited customer nodes are closed;
2. battery reach: the leg must end with enough charge to still make the
   energy-nearest depot at half speed with the reserve floor intact, and a
   pickup must leave its whole pair serviceable (deliver directly, or top up
   at a depot first);
3. capacity: a pickup may not overflow the vehicle;
4. customers outside both the temporal and the spatial neighborhood of the
   vehicle's position are closed (depots always qualify);
5. a delivery opens only for the vehicle currently carrying its pickup.

An episode ends when every customer is served and every vehicle is parked at
a depot; if no action is feasible before that (or after 10*(2N) steps), the
rollout is flagged incomplete.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import PhysicsConfig, leg_energy
from .network import AdjacencySpec, build_networks

STEP_LIMIT_FACTOR = 10


# ---------------------------------------------------------------------------
# leg pricing


class LegCosts:
    """Lazy per-leg (time, energy) tables shared by simulator and solvers.

    Time depends on (mode, speed); energy additionally on the carried load
    and on the half-speed depot-run flag.  Legs follow the cached shortest
    path of the mode's graph, so blocked aerial pairs are priced along their
    detour, edge by edge (each edge carries its own wind heading).
    """

    def __init__(self, inst, nets, physics):
        self.inst = inst
        self.nets = nets
        self.physics = physics
        self._time = {}     # (mode, speed, half) -> {(i, j): minutes}
        self._energy = {}   # (mode, speed, half, load_r) -> {(i, j): kJ}

    def _speed(self, vehicle, half):
        return vehicle.max_speed / 2.0 if half else vehicle.max_speed

    def time_min(self, vehicle, i, j, half=False):
        if i == j:
            return 0.0
        key = (vehicle.mode, vehicle.max_speed, half)
        table = self._time.setdefault(key, {})
        hit = table.get((i, j))
        if hit is None:
            hit = self.nets.graph(vehicle.mode).travel_min(
                i, j, self._speed(vehicle, half))
            table[(i, j)] = hit
        return hit

    def energy_kj(self, vehicle, i, j, load, half=False):
        if i == j:
            return 0.0
        key = (vehicle.mode, vehicle.max_speed, half, load)
        table = self._energy.setdefault(key, {})
        hit = table.get((i, j))
        if hit is None:
            hit = self._price_leg(vehicle, i, j, load, half)
            table[(i, j)] = hit
        return hit

    def _price_leg(self, vehicle, i, j, load, half):
        ph = self.physics
        g = self.nets.graph(vehicle.mode)
        path = g.path_to(i, j)
        if path is None:
            return math.inf
        speed = self._speed(vehicle, half)
        payload = load * ph.payload_kg_per_unit
        params = ph.uav if vehicle.mode == "UAV" else ph.adr
        total = 0.0
        for a, b in zip(path, path[1:]):
            length, cap = g.edge_attr(a, b)
            (xa, ya), (xb, yb) = g.nodes[a], g.nodes[b]
            course = math.atan2(yb - ya, xb - xa)
            total += leg_energy(vehicle.mode, length, min(speed, cap), payload,
                                ph.wind, params, course=course,
                                formula=ph.wind_formula, leg_key=(a, b))
        return total

    def depot_reserve_kj(self, vehicle, node, load):
        """Cheapest half-speed escape to any depot from ``node``."""
        return min(self.energy_kj(vehicle, node, d, load, half=True)
                   for d in self.inst.depot_nodes())


# ---------------------------------------------------------------------------
# state


@dataclass
class Visit:
    node: int
    arrival: float
    departure: float
    battery_after: float
    load_after: float
    battery_arrival: float = 0.0


@dataclass
class Route:
    vehicle: object                 # instance.Vehicle
    visits: list[Visit] = field(default_factory=list)


@dataclass
class Solution:
    routes: list[Route]
    breakdown: dict
    total: float
    complete: bool = True

    def vehicle_nodes(self, k):
        return [v.node for v in self.routes[k].visits]


@dataclass
class SimState:
    inst: object
    fleet: object
    nets: object
    physics: object
    legs: LegCosts
    pos: np.ndarray          # node index per vehicle
    clock: np.ndarray        # min
    load: np.ndarray         # units
    battery: np.ndarray      # kJ
    visited: np.ndarray      # bool per node (customers only meaningful)
    demand: np.ndarray       # remaining demand per node
    carrying: list           # per vehicle: set of customer ids on board
    t: int = 0
    battery_dipped: np.ndarray = None
    visits: list = None      # per vehicle: list of Visit

    def copy(self):
        return SimState(
            self.inst, self.fleet, self.nets, self.physics, self.legs,
            self.pos.copy(), self.clock.copy(), self.load.copy(),
            self.battery.copy(), self.visited.copy(), self.demand.copy(),
            [set(c) for c in self.carrying], self.t,
            self.battery_dipped.copy(),
            [list(v) for v in self.visits])

    def all_served(self):
        n = self.inst.n_customers
        return bool(self.visited[:2 * n].all())

    def all_parked(self):
        return all(self.inst.is_depot(p) for p in self.pos)

    def terminal(self):
        return self.all_served() and self.all_parked()

    def step_limit(self):
        return STEP_LIMIT_FACTOR * 2 * self.inst.n_customers


def reset(inst, fleet, nets=None, physics=None):
    """Fresh state: everyone at their start depot, full battery, empty."""
    inst.validate()
    fleet.validate(inst)
    if nets is None:
        nets = build_networks(inst)
    if physics is None:
        physics = PhysicsConfig()
    physics.validate()
    nv = len(fleet.vehicles)
    n = inst.n_nodes
    pos = np.array([v.start_depot for v in fleet.vehicles], dtype=int)
    battery = np.array([v.battery for v in fleet.vehicles], dtype=float)
    demand = np.array([inst.node_demand(k) for k in range(n)], dtype=float)
    state = SimState(
        inst=inst, fleet=fleet, nets=nets, physics=physics,
        legs=LegCosts(inst, nets, physics),
        pos=pos, clock=np.zeros(nv), load=np.zeros(nv), battery=battery,
        visited=np.zeros(n, dtype=bool), demand=demand,
        carrying=[set() for _ in range(nv)], t=0,
        battery_dipped=np.zeros(nv, dtype=bool),
        visits=[[Visit(int(v.start_depot), 0.0, 0.0, v.battery, 0.0, v.battery)]
                for v in fleet.vehicles])
    return state


# ---------------------------------------------------------------------------
# masking


def _pair_serviceable(s, k, j, battery_at_j, load_after_pickup):
    """Once picked up at j, can the parcel still be brought home?

    Either deliver directly and keep the depot reserve, or reach some depot
    with the reserve intact and finish the round trip on a full charge.
    """
    veh = s.fleet.vehicles[k]
    inst, legs = s.inst, s.legs
    dest = inst.pair_of(j)
    floor = veh.battery_floor * veh.battery
    load_after_drop = load_after_pickup - inst.node_demand(j)
    # direct: j -> delivery -> nearest depot
    direct = (battery_at_j
              - legs.energy_kj(veh, j, dest, load_after_pickup)
              - legs.depot_reserve_kj(veh, dest, load_after_drop))
    if direct >= floor - 1e-12:
        return True
    # recharge first: j -> depot d (reserve intact), then d -> delivery -> depot
    for d in inst.depot_nodes():
        if battery_at_j - legs.energy_kj(veh, j, d, load_after_pickup, half=True) \
                < floor - 1e-12:
            continue
        rt = (veh.battery
              - legs.energy_kj(veh, d, dest, load_after_pickup)
              - legs.depot_reserve_kj(veh, dest, load_after_drop))
        if rt >= floor - 1e-12:
            return True
    return False


def feasible_mask(s):
    """Boolean (n_vehicles, n_nodes) matrix of admissible assignments."""
    inst, legs = s.inst, s.legs
    nv = len(s.fleet.vehicles)
    nn = inst.n_nodes
    mask = np.zeros((nv, nn), dtype=bool)
    temporal, spatial = s.nets.temporal, s.nets.spatial
    for k in range(nv):
        veh = s.fleet.vehicles[k]
        i = int(s.pos[k])
        e, u, tau = float(s.battery[k]), float(s.load[k]), float(s.clock[k])
        floor = veh.battery_floor * veh.battery
        at_depot = inst.is_depot(i)
        for j in range(nn):
            if j == i:
                continue
            kind = inst.node_kind(j)
            if kind == "depot":
                if at_depot:
                    continue            # no depot hopping
                cost = legs.energy_kj(veh, i, j, u, half=True)
                mask[k, j] = e - cost >= floor - 1e-12
                continue
            if s.visited[j]:
                continue                # rule 1
            if not (temporal[i, j] or spatial[i, j]):
                continue                # rule 4 (depots exempt above)
            if kind == "pickup":
                q = inst.node_demand(j)
                if u + q > veh.capacity + 1e-9:
                    continue            # rule 3: capacity
                t_leg = legs.time_min(veh, i, j)
                if tau + t_leg > inst.node_window(j)[1] + 1e-9:
                    continue            # rule 2: hard pickup window
                e_after = e - legs.energy_kj(veh, i, j, u)
                if e_after < -1e-12:
                    continue
                mask[k, j] = _pair_serviceable(s, k, j, e_after, u + q)
            else:                       # delivery
                if (j - inst.n_customers) not in s.carrying[k]:
                    continue            # rule 5
                e_after = e - legs.energy_kj(veh, i, j, u)
                if e_after < -1e-12:
                    continue
                drop = u - abs(inst.node_demand(j))
                mask[k, j] = (e_after - legs.depot_reserve_kj(veh, j, drop)
                              >= floor - 1e-12)
    return mask


# ---------------------------------------------------------------------------
# transition


def step(s, action):
    """Apply (vehicle, node); returns the successor state (input unchanged)."""
    k, j = action
    s = s.copy()
    inst = s.inst
    veh = s.fleet.vehicles[k]
    i = int(s.pos[k])
    if i == j:
        raise ValueError(f"vehicle {k} is already at node {j}")
    kind = inst.node_kind(j)
    half = kind == "depot"
    load = float(s.load[k])
    t_leg = s.legs.time_min(veh, i, j, half=half)
    e_leg = s.legs.energy_kj(veh, i, j, load, half=half)
    arrival = float(s.clock[k]) + t_leg
    battery_arr = float(s.battery[k]) - e_leg

    if kind == "depot":
        recharge = max(veh.battery - battery_arr, 0.0) / veh.charge_rate \
            if veh.charge_rate > 0 else 0.0
        departure = arrival + recharge
        battery_after = veh.battery
        load_after = load
    elif kind == "pickup":
        early, late = inst.node_window(j)
        departure = max(arrival, early) + inst.service_time
        battery_after = battery_arr
        load_after = load + inst.node_demand(j)
        s.carrying[k].add(j)
        s.visited[j] = True
        s.demand[j] = 0.0
    else:  # delivery
        departure = arrival + inst.service_time
        battery_after = battery_arr
        load_after = load + inst.node_demand(j)   # demand is negative here
        s.carrying[k].discard(j - inst.n_customers)
        s.visited[j] = True
        s.demand[j] = 0.0

    if min(battery_arr, battery_after) < veh.battery_floor * veh.battery - 1e-9:
        s.battery_dipped[k] = True
    s.pos[k] = j
    s.clock[k] = departure
    s.load[k] = load_after
    s.battery[k] = battery_after
    s.t += 1
    s.visits[k].append(Visit(int(j), arrival, departure, battery_after,
                             load_after, battery_arr))
    return s


def _solution_from_state(s, complete):
    routes = [Route(vehicle=s.fleet.vehicles[k], visits=list(s.visits[k]))
              for k in range(len(s.fleet.vehicles))]
    sol = Solution(routes=routes, breakdown={}, total=0.0, complete=complete)
    sol.breakdown = episode_cost(sol, s.inst)
    sol.total = sol.breakdown["total"]
    return sol


# ---------------------------------------------------------------------------
# cost


def episode_cost(sol, inst):
    """Weighted cost breakdown recomputed from the visit log alone.

    travel_* are the alpha-weighted riding minutes (waiting and recharging
    excluded), early counts pickup arrivals ahead of their window, delay
    counts delivery arrivals past theirs, battery charges lambda once per
    vehicle that dipped under its reserve floor.
    """
    w = inst.cost_weights
    travel_uav = travel_adr = early = delay = dips = 0.0
    for route in sol.routes:
        veh = route.vehicle
        vs = route.visits
        ride = sum(vs[x + 1].arrival - vs[x].departure for x in range(len(vs) - 1))
        if veh.mode == "UAV":
            travel_uav += ride
        else:
            travel_adr += ride
        floor = veh.battery_floor * veh.battery
        if any(min(v.battery_arrival, v.battery_after) < floor - 1e-9
               for v in vs[1:]):
            dips += 1.0
        for v in vs[1:]:
            kind = inst.node_kind(v.node)
            if kind == "pickup":
                early += max(inst.node_window(v.node)[0] - v.arrival, 0.0)
            elif kind == "delivery":
                delay += max(v.arrival - inst.node_window(v.node)[1], 0.0)
    out = {
        "travel_uav": w.alpha1 * travel_uav,
        "travel_adr": w.alpha2 * travel_adr,
        "early_penalty": w.alpha3_early * early,
        "delay_penalty": w.alpha3_late * delay,
        "battery_penalty": w.lambda_battery * dips,
    }
    out["total"] = sum(out.values())
    return out


# ---------------------------------------------------------------------------
# rollout


def greedy_nearest(state, mask):
    """Baseline scorer: prefer the closest admissible customer; keep depots
    as a last resort so vehicles do not loiter on recharges."""
    inst = state.inst
    scores = np.full(mask.shape, -np.inf)
    for k in range(mask.shape[0]):
        veh = state.fleet.vehicles[k]
        i = int(state.pos[k])
        for j in np.nonzero(mask[k])[0]:
            half = inst.is_depot(int(j))
            t = state.legs.time_min(veh, i, int(j), half=half)
            scores[k, j] = -t - (1e6 if half else 0.0)
    return scores


def _select(scores, mask, state, strategy):
    masked = np.where(mask, scores, -np.inf)
    modes = np.array([v.mode for v in state.fleet.vehicles])
    if strategy in ("uav-prior", "adr-prior"):
        want = "UAV" if strategy == "uav-prior" else "ADR"
        rows = modes == want
        if mask[rows].any():
            sub = np.where(rows[:, None], masked, -np.inf)
            flat = int(np.argmax(sub))
            return np.unravel_index(flat, mask.shape)
    elif strategy != "paired":
        raise ValueError(f"strategy: paired|uav-prior|adr-prior, got {strategy!r}")
    flat = int(np.argmax(masked))
    return np.unravel_index(flat, mask.shape)


def rollout(policy, inst, fleet, strategy="paired", seed=0,
            nets=None, physics=None):
    """Run ``policy`` to termination and return its Solution.

    ``policy(state, mask) -> score matrix``; the highest-scoring unmasked
    pair is executed each step (mode-restricted first under the *-prior
    strategies).  Deterministic for fixed (policy, seed, strategy).
    """
    if nets is None:
        nets = build_networks(inst, AdjacencySpec(seed=seed))
    if physics is None:
        physics = PhysicsConfig()
        physics.wind.seed = seed
    s = reset(inst, fleet, nets, physics)
    limit = s.step_limit()
    while True:
        if s.terminal():
            return _solution_from_state(s, complete=True)
        if s.t >= limit:
            return _solution_from_state(s, complete=False)
        mask = feasible_mask(s)
        if not mask.any():
            return _solution_from_state(s, complete=False)
        scores = policy(s, mask)
        k, j = _select(scores, mask, s, strategy)
        if not mask[k, j]:
            raise RuntimeError("policy selected a masked pair")
        s = step(s, (int(k), int(j)))


# ---------------------------------------------------------------------------
# solution files


def solution_rows(sol, inst):
    rows = []
    for k, route in enumerate(sol.routes):
        for v in route.visits:
            rows.append({
                "vehicle": k, "node": v.node, "kind": inst.node_kind(v.node),
                "arrival": v.arrival, "departure": v.departure,
                "battery": v.battery_after, "load": v.load_after,
            })
    return rows


def save_solution_csv(sol, inst, path):
    fields = ["vehicle", "node", "kind", "arrival", "departure", "battery", "load"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in solution_rows(sol, inst):
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                        for k, v in row.items()})


def format_solution(sol, inst):
    lines = []
    status = "complete" if sol.complete else "INCOMPLETE"
    lines.append(f"solution ({status})  total cost {sol.total:.4f}")
    for name, val in sol.breakdown.items():
        if name != "total":
            lines.append(f"  {name:16s} {val:.4f}")
    for k, route in enumerate(sol.routes):
        veh = route.vehicle
        lines.append(f"vehicle {k} [{veh.mode}]")
        for v in route.visits:
            lines.append(
                f"  {inst.node_kind(v.node):8s} node {v.node:3d}  "
                f"arr {v.arrival:8.3f}  dep {v.departure:8.3f}  "
                f"bat {v.battery_after:7.3f}  load {v.load_after:5.1f}")
    return "\n".join(lines) + "\n"


def save_solution_text(sol, inst, path):
    with open(path, "w") as fh:
        fh.write(format_solution(sol, inst))
