"""Exact branch-and-bound and construct-and-improve solvers.

Both solvers (and the exhaustive enumeration used as a testing oracle) walk
the same route space through one shared move generator:

* a *direct* move serves the next customer straight away;
* a *composite* move (depot, customer) tops the battery up first — offered
  for every candidate customer that recharging could still help (so early
  voluntary recharges are searched too), but never from a depot and never
  when the customer is blocked by capacity or a closed window;
* an *end* move returns the (empty) vehicle to a depot at half speed.

Because the simulator forbids depot-to-depot hops, at most one recharge can
sit between consecutive customers, so this move set covers every route the
simulator itself could execute.

Battery must clear the reserve floor at every visit, pickups respect their
hard windows (waiting for openings), deliveries may be late at a price.
Routes are priced with the same weighted terms as the simulator's cost
accounting, so solver totals and episode costs agree.
"""

from __future__ import annotations

import math
import random
import time as _time
from dataclasses import dataclass

import numpy as np

from .energy import PhysicsConfig
from .env import LegCosts, Route, Solution, Visit, episode_cost
from .network import build_networks

_EPS = 1e-9


@dataclass
class SolverLimits:
    max_nodes_expanded: int | None = None
    time_budget: float | None = None       # seconds
    optimality_gap_target: float = 0.0

    def validate(self):
        if self.max_nodes_expanded is not None and self.max_nodes_expanded <= 0:
            raise ValueError("max_nodes_expanded: must be positive")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget: must be positive")
        if self.optimality_gap_target < 0:
            raise ValueError("optimality_gap_target: must be >= 0")
        return self


@dataclass
class SolveReport:
    solution: Solution | None
    proven_optimal: bool
    nodes_expanded: int
    wall_time: float
    feasible: bool = True


# ---------------------------------------------------------------------------
# shared route mechanics
#
# A route state is the light tuple (pos, clock, battery, load, carried)
# with `carried` a frozenset of customer ids.  The search tracks only the
# move plan — (depot-or-None, customer) steps plus a closing depot — and
# the Visit trail is rebuilt once, for the winning plan, by `_replay`.


class _Ctx:
    def __init__(self, inst, fleet, nets, physics):
        self.inst = inst
        self.fleet = fleet
        self.nets = nets
        self.physics = physics
        self.legs = LegCosts(inst, nets, physics)
        w = inst.cost_weights
        self.alpha = [w.alpha1 if v.mode == "UAV" else w.alpha2
                      for v in fleet.vehicles]
        self.w = w
        self.w3e = w.alpha3_early
        self.w3l = w.alpha3_late
        self.depots = inst.depot_nodes()
        # flat per-node tables so the hot path skips instance method calls
        self.n_cust = inst.n_customers
        self.ncust2 = 2 * inst.n_customers
        self.service = inst.service_time
        self.demand = [inst.node_demand(v) if v < self.ncust2 else 0.0
                       for v in range(inst.n_nodes)]
        self.win_e = [inst.node_window(v)[0] for v in range(inst.n_nodes)]
        self.win_l = [inst.node_window(v)[1] for v in range(inst.n_nodes)]
        self.floor = [v.battery_floor * v.battery for v in fleet.vehicles]

    def fresh(self, k):
        v = self.fleet.vehicles[k]
        return (v.start_depot, 0.0, v.battery, 0.0, frozenset())


def _direct_status(ctx, k, rs, c):
    """(feasible, battery_blocked_only) for serving ``c`` straight away."""
    veh = ctx.fleet.vehicles[k]
    pos, clock, batt, load, carried = rs
    legs = ctx.legs
    if c < ctx.n_cust:
        if load + ctx.demand[c] > veh.capacity + _EPS:
            return False, False
        if clock + legs.time_min(veh, pos, c) > ctx.win_l[c] + _EPS:
            return False, False
    e_arr = batt - legs.energy_kj(veh, pos, c, load)
    if e_arr < ctx.floor[k] - 1e-12:
        return False, True
    return True, False


def _apply_customer(ctx, k, rs, c):
    """Serve ``c`` from ``rs``; returns (new_rs, added_cost)."""
    veh = ctx.fleet.vehicles[k]
    pos, clock, batt, load, carried = rs
    legs = ctx.legs
    t_leg = legs.time_min(veh, pos, c)
    arrival = clock + t_leg
    e_arr = batt - legs.energy_kj(veh, pos, c, load)
    cost = ctx.alpha[k] * t_leg
    if c < ctx.n_cust:
        early = ctx.win_e[c]
        wait = max(early - arrival, 0.0)
        cost += ctx.w3e * wait
        departure = max(arrival, early) + ctx.service
        carried2 = carried | {c}
    else:
        cost += ctx.w3l * max(arrival - ctx.win_l[c], 0.0)
        departure = arrival + ctx.service
        carried2 = carried - {c - ctx.n_cust}
    load2 = load + ctx.demand[c]                # negative for deliveries
    return (c, departure, e_arr, load2, carried2), cost


def _apply_depot(ctx, k, rs, d):
    """Half-speed run to depot ``d`` plus a full recharge; (new_rs, cost)."""
    veh = ctx.fleet.vehicles[k]
    pos, clock, batt, load, carried = rs
    legs = ctx.legs
    t_leg = legs.time_min(veh, pos, d, half=True)
    e_arr = batt - legs.energy_kj(veh, pos, d, load, half=True)
    recharge = max(veh.battery - e_arr, 0.0) / veh.charge_rate \
        if veh.charge_rate > 0 else 0.0
    departure = clock + t_leg + recharge
    rs2 = (d, departure, veh.battery, load, carried)
    return rs2, ctx.alpha[k] * t_leg


def _depot_reachable(ctx, k, rs, d):
    veh = ctx.fleet.vehicles[k]
    pos, clock, batt, load, carried = rs
    e_arr = batt - ctx.legs.energy_kj(veh, pos, d, load, half=True)
    return e_arr >= ctx.floor[k] - 1e-12


def _composite_ok(ctx, k, rs, d, c):
    """Whether recharging at ``d`` and then serving ``c`` is feasible."""
    veh = ctx.fleet.vehicles[k]
    pos, clock, batt, load, carried = rs
    legs = ctx.legs
    e_d = batt - legs.energy_kj(veh, pos, d, load, half=True)
    if e_d < ctx.floor[k] - 1e-12:
        return False
    dep = clock + legs.time_min(veh, pos, d, half=True)
    if veh.charge_rate > 0:
        dep += max(veh.battery - e_d, 0.0) / veh.charge_rate
    if c < ctx.n_cust:
        if load + ctx.demand[c] > veh.capacity + _EPS:
            return False
        if dep + legs.time_min(veh, d, c) > ctx.win_l[c] + _EPS:
            return False
    return veh.battery - legs.energy_kj(veh, d, c, load) \
        >= ctx.floor[k] - 1e-12


def _route_moves(ctx, k, rs, open_pickups):
    """Ordered (depot-or-None, customer) moves from ``rs``.

    ``open_pickups`` are globally unserved pickups; carried parcels add
    their deliveries.  Every customer move also comes in composite
    (recharge at a depot, then serve) variants: stopping early — before the
    battery actually blocks — is sometimes the only way to keep a later leg
    alive.  From a depot position no composites are generated: the battery
    is already full there and depot-to-depot hops are not legal moves.
    """
    carried = rs[4]
    candidates = sorted([p + ctx.n_cust for p in carried] + open_pickups)
    at_depot = rs[0] >= ctx.ncust2
    moves = []
    for c in candidates:
        ok, battery_only = _direct_status(ctx, k, rs, c)
        if ok:
            moves.append((None, c))
        if at_depot or (not ok and not battery_only):
            continue
        for d in ctx.depots:
            if _composite_ok(ctx, k, rs, d, c):
                moves.append((d, c))
    return moves


def _apply_move(ctx, k, rs, move):
    d, c = move
    cost = 0.0
    if d is not None:
        rs, cost = _apply_depot(ctx, k, rs, d)
    rs2, c2 = _apply_customer(ctx, k, rs, c)
    return rs2, cost + c2


def _end_moves(ctx, k, rs):
    """Ways to close the route as (closing_depot_or_None, added_cost).

    None means the vehicle already stands at a depot (fresh route).
    """
    pos, clock, batt, load, carried = rs
    if carried:
        return []
    if pos >= ctx.ncust2:
        return [(None, 0.0)]
    veh = ctx.fleet.vehicles[k]
    out = []
    for d in ctx.depots:
        if _depot_reachable(ctx, k, rs, d):
            out.append((d, ctx.alpha[k] *
                        ctx.legs.time_min(veh, pos, d, half=True)))
    return out


def _replay(ctx, k, moves, end_depot):
    """Rebuild the Visit trail of a finished plan for vehicle ``k``."""
    veh = ctx.fleet.vehicles[k]
    legs = ctx.legs
    pos, clock, batt, load = veh.start_depot, 0.0, veh.battery, 0.0
    visits = [Visit(int(pos), 0.0, 0.0, batt, 0.0, batt)]
    seq = []
    for d, c in moves:
        if d is not None:
            seq.append(d)
        seq.append(c)
    if end_depot is not None:
        seq.append(end_depot)
    for node in seq:
        is_depot = node >= ctx.ncust2
        t_leg = legs.time_min(veh, pos, node, half=is_depot)
        arrival = clock + t_leg
        e_arr = batt - legs.energy_kj(veh, pos, node, load, half=is_depot)
        if is_depot:
            recharge = max(veh.battery - e_arr, 0.0) / veh.charge_rate \
                if veh.charge_rate > 0 else 0.0
            departure = arrival + recharge
            batt = veh.battery
        else:
            if node < ctx.n_cust:
                departure = max(arrival, ctx.win_e[node]) + ctx.service
            else:
                departure = arrival + ctx.service
            load += ctx.demand[node]
            batt = e_arr
        visits.append(Visit(int(node), arrival, departure, batt, load, e_arr))
        pos, clock = node, departure
    return visits


# ---------------------------------------------------------------------------
# branch and bound / exhaustive enumeration


class _Search:
    def __init__(self, ctx, limits, use_bound):
        self.ctx = ctx
        self.limits = limits
        self.use_bound = use_bound
        self.nv = len(ctx.fleet.vehicles)
        self.best_cost = math.inf
        self.best_plan = None
        self.nodes = 0
        self.stopped = False
        self.t0 = _time.perf_counter()
        if use_bound:
            self._prepare_bound()

    def _prepare_bound(self):
        """suffix_in[k][v]: cheapest alpha-weighted entering arc of node v
        over vehicles k.., a lower bound on the cost of ever serving v."""
        ctx = self.ctx
        inst = ctx.inst
        nn = inst.n_nodes
        ncust = 2 * inst.n_customers
        per_vehicle = np.full((self.nv, nn), math.inf)
        half_ret = np.zeros((self.nv, nn))
        for k, veh in enumerate(ctx.fleet.vehicles):
            for v in range(ncust):
                best = min(ctx.legs.time_min(veh, u, v)
                           for u in range(nn) if u != v)
                per_vehicle[k, v] = ctx.alpha[k] * best
            for v in range(nn):
                half_ret[k, v] = ctx.alpha[k] * min(
                    ctx.legs.time_min(veh, v, d, half=True)
                    for d in ctx.depots)
        self.suffix_in = np.minimum.accumulate(per_vehicle[::-1], axis=0)[::-1]
        self.half_ret = half_ret

    def _bound(self, k, rs, unserved):
        if not self.use_bound:
            return 0.0
        ctx = self.ctx
        total = 0.0
        row = self.suffix_in[min(k, self.nv - 1)]
        for v in unserved:
            total += row[v]
        if rs is not None and rs[0] < ctx.ncust2:
            # The active vehicle's final leg back to a depot departs either
            # from where it stands or from one of the still-unserved
            # customers, whichever its route ends on.
            ret = self.half_ret[k][rs[0]]
            for v in unserved:
                r = self.half_ret[k][v]
                if r < ret:
                    ret = r
            total += ret
        return max(total - 1e-9, 0.0)

    def _tick(self):
        self.nodes += 1
        lim = self.limits
        if lim.max_nodes_expanded and self.nodes > lim.max_nodes_expanded:
            self.stopped = True
        if lim.time_budget and (self.nodes % 256 == 0) and \
                _time.perf_counter() - self.t0 > lim.time_budget:
            self.stopped = True

    def run(self):
        self._vehicle(0, frozenset(), 0.0, [])
        return self

    def _vehicle(self, k, served, cost, plans):
        if self.stopped:
            return
        ctx = self.ctx
        if k == self.nv:
            if len(served) == ctx.ncust2 and cost < self.best_cost:
                self.best_cost = cost
                self.best_plan = [(list(mv), end) for mv, end in plans]
            return
        if self.use_bound:
            unserved = [v for v in range(ctx.ncust2) if v not in served]
            if cost + self._bound(k, None, unserved) >= self.best_cost:
                return
        self._route(k, ctx.fresh(k), served, cost, plans, [])

    def _route(self, k, rs, served, cost, plans, trail):
        if self.stopped:
            return
        self._tick()
        ctx = self.ctx
        if self.use_bound:
            unserved = [v for v in range(ctx.ncust2) if v not in served]
            if cost + self._bound(k, rs, unserved) >= self.best_cost:
                return
        carried = rs[4]
        open_pickups = [p for p in range(ctx.n_cust)
                        if p not in served and p not in carried]
        for move in _route_moves(ctx, k, rs, open_pickups):
            rs2, dcost = _apply_move(ctx, k, rs, move)
            trail.append(move)
            self._route(k, rs2, served | {move[1]}, cost + dcost, plans, trail)
            trail.pop()
        for d, dcost in _end_moves(ctx, k, rs):
            plans.append((trail, d))
            self._vehicle(k + 1, served, cost + dcost, plans)
            plans.pop()


def _report(ctx, search):
    wall = _time.perf_counter() - search.t0
    if search.best_plan is None:
        return SolveReport(solution=None, proven_optimal=not search.stopped,
                           nodes_expanded=search.nodes, wall_time=wall,
                           feasible=False)
    routes = [Route(vehicle=ctx.fleet.vehicles[k],
                    visits=_replay(ctx, k, mv, end))
              for k, (mv, end) in enumerate(search.best_plan)]
    sol = Solution(routes=routes, breakdown={}, total=0.0, complete=True)
    sol.breakdown = episode_cost(sol, ctx.inst)
    sol.total = sol.breakdown["total"]
    return SolveReport(solution=sol, proven_optimal=not search.stopped,
                       nodes_expanded=search.nodes, wall_time=wall)


def _make_ctx(inst, fleet, nets, physics):
    inst.validate()
    fleet.validate(inst)
    if nets is None:
        nets = build_networks(inst)
    if physics is None:
        physics = PhysicsConfig()
    return _Ctx(inst, fleet, nets, physics)


def solve_exact(inst, fleet, nets=None, physics=None, limits=None):
    """Depth-first branch and bound over (vehicle, next-node) decisions.

    The lower bound adds, for every unserved customer node, the cheapest
    alpha-weighted arc that could ever enter it (over the vehicles still
    available), plus the active vehicle's cheapest depot return — admissible,
    since every unserved node must still be entered once.
    """
    limits = (limits or SolverLimits()).validate()
    ctx = _make_ctx(inst, fleet, nets, physics)
    search = _Search(ctx, limits, use_bound=True).run()
    return _report(ctx, search)


def solve_enumerate(inst, fleet, nets=None, physics=None):
    """Exhaustive enumeration of the same route space — no bound, no
    incumbent pruning.  Intended as a correctness oracle for small cases."""
    ctx = _make_ctx(inst, fleet, nets, physics)
    search = _Search(ctx, SolverLimits(), use_bound=False).run()
    return _report(ctx, search)


# ---------------------------------------------------------------------------
# heuristic


def _prune_states(states):
    """Pareto filter on (cost, clock, battery); deterministic keep order."""
    states.sort(key=lambda s: (s[0], s[1][1], -s[1][2]))
    kept = []
    for item in states:
        cost, rs = item[0], item[1]
        dominated = any(
            kp[0] <= cost + 1e-12 and kp[1][1] <= rs[1] + 1e-12
            and kp[1][2] >= rs[2] - 1e-12
            for kp in kept)
        if not dominated:
            kept.append(item)
    return kept


def _seq_eval(ctx, k, seq):
    """Price a fixed customer sequence, choosing recharge stops optimally.

    Before each customer the vehicle either rides straight or tops up at
    one reachable depot first; a small Pareto sweep over (cost, clock,
    battery) keeps every undominated realization, because an early recharge
    can be what saves a later leg.  Returns (cost, moves, end_depot) of the
    cheapest full realization or (inf, None, None).  Moves are recorded as
    parent chains so states stay allocation-light.
    """
    states = [(0.0, ctx.fresh(k), None)]
    for c in seq:
        nxt = []
        for cost, rs, chain in states:
            ok, battery_only = _direct_status(ctx, k, rs, c)
            if ok:
                rs2, dc = _apply_customer(ctx, k, rs, c)
                nxt.append((cost + dc, rs2, ((None, c), chain)))
            if rs[0] >= ctx.ncust2 or (not ok and not battery_only):
                continue
            for d in ctx.depots:
                if not _composite_ok(ctx, k, rs, d, c):
                    continue
                rs2, dc = _apply_move(ctx, k, rs, (d, c))
                nxt.append((cost + dc, rs2, ((d, c), chain)))
        states = _prune_states(nxt)
        if not states:
            return math.inf, None, None
    best = None
    for cost, rs, chain in states:
        for d, dcost in _end_moves(ctx, k, rs):
            key = (cost + dcost, rs[1], -1 if d is None else d)
            if best is None or key < best[0]:
                best = (key, chain, d)
    if best is None:
        return math.inf, None, None
    moves = []
    chain = best[1]
    while chain is not None:
        moves.append(chain[0])
        chain = chain[1]
    moves.reverse()
    return best[0][0], moves, best[2]


def _simulate_seq(ctx, k, seq):
    """(visits, cost) of the cheapest realization of ``seq`` or (None, inf)."""
    cost, moves, end = _seq_eval(ctx, k, seq)
    if moves is None:
        return None, math.inf
    return _replay(ctx, k, moves, end), cost


def _seq_cost(ctx, k, seq, cache):
    key = (k, tuple(seq))
    hit = cache.get(key)
    if hit is None:
        hit = _seq_eval(ctx, k, seq)[0]
        cache[key] = hit
    return hit


def _pair_positions(seq, pickup, delivery):
    """All sequences obtained by inserting the pair into ``seq``."""
    n = len(seq)
    for i in range(n + 1):
        for j in range(i, n + 1):
            yield seq[:i] + [pickup] + seq[i:j] + [delivery] + seq[j:]


def _insertion_best2(ctx, seqs, pair, cache):
    """Best insertion of ``pair`` plus the runner-up cost delta.

    Returns ``(best, second_delta)`` where ``best`` is
    ``(delta, vehicle, new_seq)`` or None and ``second_delta`` is the delta
    of the second-cheapest feasible slot (inf when there is at most one).
    """
    inst = ctx.inst
    pickup, delivery = pair, pair + inst.n_customers
    best = None
    second = math.inf
    for k in range(len(seqs)):
        base = _seq_cost(ctx, k, seqs[k], cache)
        if math.isinf(base):
            continue
        for cand in _pair_positions(seqs[k], pickup, delivery):
            c = _seq_cost(ctx, k, cand, cache)
            if math.isinf(c):
                continue
            delta = c - base
            if best is None or delta < best[0] - 1e-12:
                second = best[0] if best is not None else math.inf
                best = (delta, k, cand)
            elif delta < second:
                second = delta
    return best, second


def _best_insertion(ctx, seqs, pair, cache):
    """Cheapest (delta, vehicle, new_seq) insertion of ``pair`` or None."""
    return _insertion_best2(ctx, seqs, pair, cache)[0]


def _total(ctx, seqs, cache):
    return sum(_seq_cost(ctx, k, seqs[k], cache) for k in range(len(seqs)))


def _improve(ctx, seqs, cache):
    """First-improvement local search: pair relocate, pair exchange between
    routes, whole-route mode swap.  Deterministic sweep order."""
    inst = ctx.inst
    nv = len(seqs)
    improved = True
    while improved:
        improved = False
        current = _total(ctx, seqs, cache)
        # relocate one pair anywhere
        for p in range(inst.n_customers):
            k_from = next(k for k in range(nv) if p in seqs[k])
            stripped = [c for c in seqs[k_from] if c not in (p, p + inst.n_customers)]
            trial = [list(s) for s in seqs]
            trial[k_from] = stripped
            best = _best_insertion(ctx, trial, p, cache)
            if best is None:
                continue
            trial[best[1]] = best[2]
            t = _total(ctx, trial, cache)
            if t < current - 1e-9:
                seqs[:] = trial
                improved = True
                break
        if improved:
            continue
        # exchange two pairs across routes
        pairs = [(p, next(k for k in range(nv) if p in seqs[k]))
                 for p in range(inst.n_customers)]
        for ia in range(len(pairs)):
            for ib in range(ia + 1, len(pairs)):
                (pa, ka), (pb, kb) = pairs[ia], pairs[ib]
                if ka == kb:
                    continue
                trial = [list(s) for s in seqs]
                trial[ka] = [c for c in trial[ka] if c not in (pa, pa + inst.n_customers)]
                trial[kb] = [c for c in trial[kb] if c not in (pb, pb + inst.n_customers)]
                # a moves into kb, b moves into ka, each at its best slot
                ok = True
                for p, k_to in ((pa, kb), (pb, ka)):
                    best = None
                    base = _seq_cost(ctx, k_to, trial[k_to], cache)
                    if math.isinf(base):
                        ok = False
                        break
                    for cand in _pair_positions(trial[k_to], p, p + inst.n_customers):
                        c = _seq_cost(ctx, k_to, cand, cache)
                        if math.isinf(c):
                            continue
                        if best is None or c < best[0] - 1e-12:
                            best = (c, cand)
                    if best is None:
                        ok = False
                        break
                    trial[k_to] = best[1]
                if not ok:
                    continue
                t = _total(ctx, trial, cache)
                if t < current - 1e-9:
                    seqs[:] = trial
                    improved = True
                    break
            if improved:
                break
        if improved:
            continue
        # swap the full sequences of two vehicles with different modes
        for ka in range(nv):
            for kb in range(ka + 1, nv):
                if ctx.fleet.vehicles[ka].mode == ctx.fleet.vehicles[kb].mode:
                    continue
                trial = [list(s) for s in seqs]
                trial[ka], trial[kb] = trial[kb], trial[ka]
                t = _total(ctx, trial, cache)
                if t < current - 1e-9:
                    seqs[:] = trial
                    improved = True
                    break
            if improved:
                break
    return seqs


def _construct(ctx, cache, rule, order):
    """One greedy construction pass; returns ``(seqs, insertions)``.

    ``rule`` picks which unrouted pair goes next:

    * ``"cheapest"`` — the pair with the globally cheapest insertion delta;
    * ``"regret"``   — the pair that would lose the most if postponed
      (largest gap between its best and second-best slot, with pairs that
      have a single feasible slot taking absolute priority);
    * ``"sequence"`` — pairs strictly in the given ``order``, each at its
      own cheapest slot.

    ``seqs`` is None when some pair could not be placed anywhere.
    """
    seqs = [[] for _ in ctx.fleet.vehicles]
    steps = 0
    if rule == "sequence":
        for p in order:
            best = _best_insertion(ctx, seqs, p, cache)
            if best is None:
                return None, steps
            seqs[best[1]] = best[2]
            steps += 1
        return seqs, steps
    unrouted = list(order)
    while unrouted:
        chosen = None
        for p in unrouted:
            best, second = _insertion_best2(ctx, seqs, p, cache)
            if best is None:
                continue
            key = best[0] if rule == "cheapest" else best[0] - second
            if chosen is None or key < chosen[0] - 1e-12:
                chosen = (key, best, p)
        if chosen is None:
            return None, steps
        _, (_, k, new_seq), p = chosen
        seqs[k] = new_seq
        unrouted.remove(p)
        steps += 1
    return seqs, steps


def solve_heuristic(inst, fleet, nets=None, physics=None, seed=0):
    """Cheapest pair insertion followed by first-improvement local search.

    Construction is multi-start: a globally-cheapest pass, a regret pass,
    fixed priority orders (largest demand first, tightest pickup deadline
    first) and a few seeded shuffles.  The cheapest feasible construction
    is then polished by local search; infeasible is reported only when
    every start dead-ends.
    """
    ctx = _make_ctx(inst, fleet, nets, physics)
    t0 = _time.perf_counter()
    cache = {}
    by_demand = sorted(range(inst.n_customers),
                       key=lambda p: -inst.customers[p].demand)
    by_deadline = sorted(range(inst.n_customers),
                         key=lambda p: inst.node_window(p)[1])
    rng = random.Random(seed)
    starts = [("cheapest", by_demand), ("regret", by_demand),
              ("sequence", by_demand), ("sequence", by_deadline)]
    for _ in range(4):
        shuffled = list(range(inst.n_customers))
        rng.shuffle(shuffled)
        starts.append(("sequence", shuffled))
    best_seqs, best_total, steps = None, math.inf, 0
    for rule, order in starts:
        seqs_i, s = _construct(ctx, cache, rule, order)
        steps += s
        if seqs_i is None:
            continue
        tot = _total(ctx, seqs_i, cache)
        if tot < best_total - 1e-12:
            best_total, best_seqs = tot, seqs_i
    if best_seqs is None:
        return SolveReport(solution=None, proven_optimal=False,
                           nodes_expanded=steps,
                           wall_time=_time.perf_counter() - t0,
                           feasible=False)
    seqs = best_seqs
    _improve(ctx, seqs, cache)
    routes = []
    for k in range(len(fleet.vehicles)):
        visits, _ = _simulate_seq(ctx, k, seqs[k])
        routes.append(Route(vehicle=fleet.vehicles[k], visits=list(visits)))
    sol = Solution(routes=routes, breakdown={}, total=0.0, complete=True)
    sol.breakdown = episode_cost(sol, inst)
    sol.total = sol.breakdown["total"]
    return SolveReport(solution=sol, proven_optimal=False, nodes_expanded=steps,
                       wall_time=_time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# validation and the optimality-gap metric


def validate(sol, inst, fleet, nets=None, physics=None):
    """Replay a Solution against the instance; returns violation strings."""
    if nets is None:
        nets = build_networks(inst)
    if physics is None:
        physics = PhysicsConfig()
    legs = LegCosts(inst, nets, physics)
    out = []
    tol = 1e-6
    seen = {}
    pickup_times = {}
    delivery_times = {}
    for k, route in enumerate(sol.routes):
        veh = route.vehicle
        vs = route.visits
        if not vs or not inst.is_depot(vs[0].node):
            out.append(f"vehicle {k}: route must start at a depot")
            continue
        if not inst.is_depot(vs[-1].node):
            out.append(f"vehicle {k}: route must end at a depot")
        carried = set()
        load = 0.0
        for idx in range(1, len(vs)):
            prev, v = vs[idx - 1], vs[idx]
            node = v.node
            kind = inst.node_kind(node)
            half = kind == "depot"
            t_leg = legs.time_min(veh, prev.node, node, half=half)
            e_leg = legs.energy_kj(veh, prev.node, node, load, half=half)
            if abs(v.arrival - (prev.departure + t_leg)) > tol:
                out.append(f"vehicle {k} visit {idx}: arrival {v.arrival:.6f} "
                           f"!= departure+travel {prev.departure + t_leg:.6f}")
            if abs(v.battery_arrival - (prev.battery_after - e_leg)) > tol:
                out.append(f"vehicle {k} visit {idx}: battery inconsistent with leg energy")
            if v.battery_arrival < -tol:
                out.append(f"vehicle {k} visit {idx}: battery negative "
                           f"({v.battery_arrival:.6f} kJ) at node {node}")
            if kind == "depot":
                if v.battery_arrival < veh.battery_floor * veh.battery - tol:
                    out.append(f"vehicle {k} visit {idx}: depot reached below "
                               f"reserve floor ({v.battery_arrival:.6f} kJ)")
            if kind == "pickup":
                e, l = inst.node_window(node)
                if v.arrival > l + tol:
                    out.append(f"vehicle {k}: pickup {node} visited at "
                               f"{v.arrival:.3f} after window close {l}")
                if node in seen:
                    out.append(f"node {node}: served more than once")
                seen[node] = k
                carried.add(node)
                load += inst.node_demand(node)
                pickup_times[node] = v.departure
                if load > veh.capacity + tol:
                    out.append(f"vehicle {k}: capacity exceeded at node {node} "
                               f"({load:.3f} > {veh.capacity})")
            elif kind == "delivery":
                p = inst.pair_of(node)
                if node in seen:
                    out.append(f"node {node}: served more than once")
                seen[node] = k
                if p not in carried:
                    out.append(f"vehicle {k}: delivery {node} without carrying "
                               f"its pickup {p}")
                carried.discard(p)
                load += inst.node_demand(node)
                delivery_times[node] = v.arrival
            if abs(v.load_after - load) > tol:
                out.append(f"vehicle {k} visit {idx}: recorded load {v.load_after} "
                           f"!= recomputed {load}")
        if carried:
            out.append(f"vehicle {k}: ends still carrying {sorted(carried)}")
    for p in range(inst.n_customers):
        d = p + inst.n_customers
        if p not in seen:
            out.append(f"pickup {p}: never served")
        if d not in seen:
            out.append(f"delivery {d}: never served")
        if p in seen and d in seen and seen[p] != seen[d]:
            out.append(f"customer {p}: pickup and delivery on different vehicles")
        if p in pickup_times and d in delivery_times and \
                pickup_times[p] > delivery_times[d] + tol:
            out.append(f"customer {p}: delivery precedes pickup")
    return out


def gap(costs, baseline):
    """Mean relative regret (cost - baseline) / baseline.

    ``baseline`` may be one value or a list matching ``costs``.
    """
    costs = [float(c) for c in np.atleast_1d(costs)]
    bases = [float(b) for b in np.atleast_1d(baseline)]
    if len(bases) == 1:
        bases = bases * len(costs)
    if len(bases) != len(costs):
        raise ValueError(f"gap: {len(costs)} costs vs {len(bases)} baselines")
    for b in bases:
        if not b > 0:
            raise ValueError(f"gap: baseline must be > 0, got {b}")
    return float(np.mean([(c - b) / b for c, b in zip(costs, bases)]))
