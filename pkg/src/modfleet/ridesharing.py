"""Insertion-based ridesharing assignment with a rejection bidder, plus an
exhaustive solver for small instances used to check the heuristic."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cost import CostFunction
from .metrics import assemble_rows, candidate_metrics, customer_arrays, rejected_array
from .network import NetworkGraph
from .schedule import DROPOFF, PICKUP, Customer, Schedule, Stop, VehiclePlan

REJECT = None
MAX_EXACT_CUSTOMERS = 6


@dataclass
class Candidates:
    """Feasible insertions of one customer into one schedule, in enumeration order.

    Candidate k puts the pickup at ``pickup_pos[k]`` and the drop-off at
    ``dropoff_pos[k]`` of the extended stop list.
    """

    schedule: Schedule
    customer: Customer
    pickup_pos: np.ndarray
    dropoff_pos: np.ndarray

    def __len__(self):
        return len(self.pickup_pos)

    def stop_list(self, k: int) -> tuple[Stop, ...]:
        c = self.customer
        s = list(self.schedule.stops)
        s.insert(int(self.pickup_pos[k]), Stop(c.pickup, PICKUP, c.id))
        s.insert(int(self.dropoff_pos[k]), Stop(c.dropoff, DROPOFF, c.id))
        return tuple(s)

    @property
    def stop_lists(self) -> list[tuple[Stop, ...]]:
        return [self.stop_list(k) for k in range(len(self))]


def _insertion_grid(L: int):
    I, J = np.triu_indices(L + 2, k=1)
    keep = I <= L
    return I[keep].astype(np.int64), J[keep].astype(np.int64)


def _candidates(schedule: Schedule, customer: Customer, check_capacity=True) -> Candidates:
    L = len(schedule.stops)
    I, J = _insertion_grid(L)
    if check_capacity:
        # the new customer rides from before base stop I to after base stop J-2,
        # so the largest existing load over that span must leave a free seat
        before = np.array([schedule.initial_onboard()] + schedule.load_profile(), dtype=float)
        span = np.where(np.arange(L + 1)[None, :] >= np.arange(L + 1)[:, None], before[None, :], -np.inf)
        span_max = np.maximum.accumulate(span, axis=1)
        keep = span_max[I, J - 1] + 1 <= schedule.capacity
        I, J = I[keep], J[keep]
    return Candidates(schedule, customer, I, J)


def enumerate_insertions(schedule: Schedule, customer: Customer, check_capacity: bool = True) -> list[Schedule]:
    """Every way to insert the customer's pickup and drop-off, pickup first.

    Pickup goes to position i in [0, L], drop-off to j in (i, L + 1] of the
    extended list; order is i-major. Capacity-violating schedules are removed
    unless ``check_capacity`` is False.
    """
    c = _candidates(schedule, customer, check_capacity)
    return [Schedule(lst, schedule.capacity) for lst in c.stop_lists]


def _positions(stop_lists, customers):
    """Pickup/drop-off stop positions per customer; pickup -1 when absent."""
    n = len(stop_lists)
    pos = {c.id: (np.full(n, -1, dtype=np.int64), np.full(n, -1, dtype=np.int64)) for c in customers}
    for k, lst in enumerate(stop_lists):
        for q, s in enumerate(lst):
            p = pos.get(s.customer_id)
            if p is not None:
                (p[0] if s.kind == PICKUP else p[1])[k] = q
    return pos


def _node_array(graph, stop_lists) -> np.ndarray:
    return np.array([[graph.index[s.node] for s in lst] for lst in stop_lists], dtype=np.int64)


def _evaluate(graph, plan: VehiclePlan, nodes, pos, customers, cost_fn: CostFunction, now_s: float):
    if not cost_fn.per_customer:
        D = graph.dist_matrix
        prev = np.concatenate([np.full((len(nodes), 1), graph.index[plan.node]), nodes[:, :-1]], axis=1)
        return D[prev, nodes].sum(axis=1), None
    M = candidate_metrics(graph, plan, nodes, pos, customers, now_s)
    return cost_fn.batch(M).sum(axis=1), M


def evaluate_stop_lists(graph, plan: VehiclePlan, stop_lists, customers, cost_fn: CostFunction, now_s: float):
    """Total cost of each candidate stop list plus the metric tensor behind it.

    For per-customer costs the result sums the cost over ``customers``; for the
    vehicle-distance baseline it is the planned driving distance.
    """
    if not stop_lists or not stop_lists[0]:
        return np.zeros(len(stop_lists)), np.empty((len(stop_lists), 0, 13))
    nodes = _node_array(graph, stop_lists)
    return _evaluate(graph, plan, nodes, _positions(stop_lists, customers), customers, cost_fn, now_s)


class _Detours:
    """Arrival times and odometer readings along every candidate, from base-schedule prefix sums.

    With pickup at extended position I and drop-off at J, base stop b moves to
    b + (b >= I) + (b >= J - 1) and its arrival shifts by 0, ``mid`` or ``after``.
    """

    def __init__(self, graph, plan: VehiclePlan, cands: Candidates):
        T, D = graph.time_matrix, graph.dist_matrix
        idx = graph.index
        base = np.array([idx[s.node] for s in plan.schedule.stops], dtype=np.int64)
        L = len(base)
        ext = np.r_[idx[plan.node], base]
        self.cum_t = np.r_[0.0, np.cumsum(T[ext[:-1], ext[1:]])] + plan.offset_s
        self.cum_d = np.r_[0.0, np.cumsum(D[ext[:-1], ext[1:]])]
        I, J = cands.pickup_pos, cands.dropoff_pos
        pu, do = idx[cands.customer.pickup], idx[cands.customer.dropoff]
        adj = J == I + 1
        a = ext[I]
        nxt_i = base[np.minimum(I, L - 1)] if L else np.zeros_like(I)
        prev_d = np.where(adj, pu, ext[J - 1])
        has_next = J - 1 < L
        nxt_d = base[np.minimum(J - 1, L - 1)] if L else np.zeros_like(J)
        self.I, self.J = I, J
        self.t_pick, self.mid_t, self.t_drop, self.after_t = self._legs(T, self.cum_t, I, J, a, nxt_i, prev_d, nxt_d, adj, has_next, pu, do)
        self.d_pick, self.mid_d, self.d_drop, self.after_d = self._legs(D, self.cum_d, I, J, a, nxt_i, prev_d, nxt_d, adj, has_next, pu, do)

    @staticmethod
    def _legs(X, cum, I, J, a, nxt_i, prev_d, nxt_d, adj, has_next, pu, do):
        pick = cum[I] + X[a, pu]
        mid = np.where(adj, 0.0, X[a, pu] + X[pu, nxt_i] - X[a, nxt_i])
        drop = np.where(adj, pick + X[pu, do], cum[J - 1] + mid + X[prev_d, do])
        after = np.where(has_next, drop + X[do, nxt_d] - cum[np.minimum(J, len(cum) - 1)], 0.0)
        return pick, mid, drop, after

    def shift(self, rows, b, mid, after):
        I, J = self.I[rows], self.J[rows]
        return np.where(b < I, 0.0, np.where(b <= J - 2, mid[rows], after[rows]))

    def position(self, rows, b):
        return b + (b >= self.I[rows]) + (b >= self.J[rows] - 1)


def _marginal_costs(graph, plan: VehiclePlan, cands: Candidates, customers, cost_fn: CostFunction, now_s: float):
    """Cost change of every candidate relative to the current schedule.

    Only customers whose drop-off is at or after the inserted pickup can change,
    so the metric rows are built for those (candidate, customer) pairs alone and
    summed per candidate.
    """
    geo = _Detours(graph, plan, cands)
    if not cost_fn.per_customer:
        return np.where(cands.dropoff_pos - 1 < len(plan.schedule.stops), geo.after_d, geo.d_drop - geo.cum_d[-1]), None
    old = customers[:-1]
    static = customer_arrays(graph, plan, customers, now_s)
    n_cand, n_old = len(cands), len(old)
    base_pos = _positions([plan.schedule.stops], old)
    bp = np.array([base_pos[c.id][0][0] for c in old], dtype=np.int64)
    bd = np.array([base_pos[c.id][1][0] for c in old], dtype=np.int64)
    on = static["on"]

    def rows_for(t_pick, t_drop, d_pick, d_drop, p_pos, d_pos, cidx):
        onb = on[cidx]
        pickup_abs = np.where(onb, static["b_pick"][cidx], now_s + t_pick)
        traveled = np.where(onb, plan.odometer_m + d_drop - static["b_odo"][cidx], d_drop - d_pick)
        n_stops = np.where(onb, static["b_stops"][cidx] + d_pos, d_pos - p_pos - 1)
        return assemble_rows(pickup_abs, now_s + t_drop, traveled, n_stops, static, cidx)

    base_rows = rows_for(geo.cum_t[np.maximum(bp, 0) + 1], geo.cum_t[bd + 1], geo.cum_d[np.maximum(bp, 0) + 1],
                         geo.cum_d[bd + 1], bp, bd, np.arange(n_old))
    base_cost = cost_fn.batch(base_rows) if n_old else np.zeros(0)

    r, c = np.nonzero(bd[None, :] >= cands.pickup_pos[:, None])
    bpc, bdc = np.maximum(bp[c], 0), bd[c]
    old_rows = rows_for(
        geo.cum_t[bpc + 1] + geo.shift(r, bpc, geo.mid_t, geo.after_t),
        geo.cum_t[bdc + 1] + geo.shift(r, bdc, geo.mid_t, geo.after_t),
        geo.cum_d[bpc + 1] + geo.shift(r, bpc, geo.mid_d, geo.after_d),
        geo.cum_d[bdc + 1] + geo.shift(r, bdc, geo.mid_d, geo.after_d),
        geo.position(r, bp[c]),
        geo.position(r, bdc),
        c,
    )
    new_rows = rows_for(geo.t_pick, geo.t_drop, geo.d_pick, geo.d_drop, cands.pickup_pos, cands.dropoff_pos,
                        np.full(n_cand, n_old))
    delta = cost_fn.batch(old_rows) - base_cost[c] if len(r) else np.zeros(0)
    marg = np.bincount(r, weights=delta, minlength=n_cand) + cost_fn.batch(new_rows)
    return marg, base_cost


def _plan_customers(plan: VehiclePlan) -> list[Customer]:
    ids = []
    for s in plan.schedule.stops:
        if s.customer_id not in ids:
            ids.append(s.customer_id)
    return [plan.customers[i] for i in ids]


def baseline_cost(graph, plan: VehiclePlan, cost_fn: CostFunction, now_s: float):
    """Cost of the vehicle's current schedule and the metrics of its customers."""
    customers = _plan_customers(plan)
    if not plan.schedule.stops:
        return 0.0, np.empty((0, 13)), customers
    totals, M = evaluate_stop_lists(graph, plan, [plan.schedule.stops], customers, cost_fn, now_s)
    return float(totals[0]), (None if M is None else M[0]), customers


@dataclass
class Insertion:
    schedule: Schedule
    cost: float
    metrics: np.ndarray | None  # (n_customers, 13) for the chosen schedule
    customers: list[Customer]
    marginal: float = 0.0


def best_insertion(graph, plan: VehiclePlan, customer: Customer, cost_fn: CostFunction, now_s: float = 0.0):
    """Cheapest feasible insertion, or None when capacity rules out every candidate.

    Candidates are compared by their cost change; ties go to the earliest
    enumerated candidate.
    """
    cands = _candidates(plan.schedule, customer)
    if not len(cands):
        return None
    customers = _plan_customers(plan) + [customer]
    marg, base_cost = _marginal_costs(graph, plan, cands, customers, cost_fn, now_s)
    k = int(np.argmin(marg))
    schedule = Schedule(cands.stop_list(k), plan.schedule.capacity)
    if base_cost is None:
        base = baseline_cost(graph, plan, cost_fn, now_s)[0]
        return Insertion(schedule, base + float(marg[k]), None, customers, float(marg[k]))
    _, M = evaluate_stop_lists(graph, plan, [schedule.stops], customers, cost_fn, now_s)
    return Insertion(schedule, float(base_cost.sum() + marg[k]), M[0], customers, float(marg[k]))


@dataclass
class Bid:
    vehicle_id: int | None
    marginal_cost: float
    candidate: Insertion | None = None
    baseline_cost: float = 0.0


@dataclass
class Assignment:
    vehicle_id: int | None
    schedule: Schedule | None
    bids: list[Bid] = field(default_factory=list)
    rejected_metrics: np.ndarray | None = None

    @property
    def rejected(self) -> bool:
        return self.vehicle_id is REJECT


def collect_bids(graph, plans, customer, cost_fn, now_s=0.0, notify_time_s=0.0):
    bids = []
    for plan in sorted(plans, key=lambda p: p.vid):
        ins = best_insertion(graph, plan, customer, cost_fn, now_s)
        if ins is None:
            continue
        bids.append(Bid(plan.vid, ins.marginal, ins, ins.cost - ins.marginal))
    rej = rejected_array(graph, customer, notify_time_s)
    if cost_fn.per_customer:
        rej_bid = float(cost_fn.batch(rej[None, :])[0])
    else:
        vehicle_min = min((b.marginal_cost for b in bids), default=np.inf)
        rej_bid = 0.0 if vehicle_min > cost_fn.max_detour_m else np.inf
    bids.append(Bid(REJECT, rej_bid))
    return bids, rej


def assign_request(
    graph: NetworkGraph,
    plans: list[VehiclePlan],
    customer: Customer,
    cost_fn: CostFunction,
    now_s: float = 0.0,
    notify_time_s: float = 0.0,
    barred: set | None = None,
) -> Assignment:
    """Pick the lowest marginal-cost bidder and apply its schedule.

    Vehicle ties go to the lowest id; the rejection bid loses ties. The winning
    plan is updated in place. Rejected customer ids are added to ``barred``.
    """
    if barred is not None and customer.id in barred:
        return Assignment(REJECT, None, [], rejected_array(graph, customer, notify_time_s))
    bids, rej = collect_bids(graph, plans, customer, cost_fn, now_s, notify_time_s)
    vehicle_bids = [b for b in bids if b.vehicle_id is not REJECT]
    reject_bid = bids[-1]
    best = None
    for b in vehicle_bids:
        if best is None or b.marginal_cost < best.marginal_cost:
            best = b
    if best is None or reject_bid.marginal_cost < best.marginal_cost:
        if barred is not None:
            barred.add(customer.id)
        return Assignment(REJECT, None, bids, rej)
    plan = next(p for p in plans if p.vid == best.vehicle_id)
    plan.schedule = best.candidate.schedule
    plan.customers[customer.id] = customer
    return Assignment(best.vehicle_id, plan.schedule, bids)


def fleet_cost(graph, plans, cost_fn, now_s=0.0, rejected=(), notify_time_s=0.0) -> float:
    """Total customer cost of the current fleet schedules plus rejected customers."""
    total = 0.0
    for plan in plans:
        total += baseline_cost(graph, plan, cost_fn, now_s)[0]
    for c in rejected:
        total += float(cost_fn.batch(rejected_array(graph, c, notify_time_s)[None, :])[0])
    return total


def sequential_assign(graph, plans, customers, cost_fn, now_s=0.0, notify_time_s=0.0):
    """Run the online heuristic over ``customers`` in order; returns (total cost, rejected)."""
    rejected = []
    for c in customers:
        a = assign_request(graph, plans, c, cost_fn, now_s, notify_time_s)
        if a.rejected:
            rejected.append(c)
    return fleet_cost(graph, plans, cost_fn, now_s, rejected, notify_time_s), rejected


def _orderings(stops: list[Stop], capacity: int, initial_load: int):
    """All stop sequences with pickups before drop-offs and load within capacity."""
    out = []
    n = len(stops)

    def rec(seq, used, load, picked):
        if len(seq) == n:
            out.append(tuple(seq))
            return
        for k in range(n):
            if used[k]:
                continue
            s = stops[k]
            if s.kind == DROPOFF:
                has_pickup = any(t.customer_id == s.customer_id and t.kind == PICKUP for t in stops)
                if has_pickup and s.customer_id not in picked:
                    continue
                nl = load - 1
            else:
                nl = load + 1
                if nl > capacity:
                    continue
            used[k] = True
            seq.append(s)
            if s.kind == PICKUP:
                picked.add(s.customer_id)
            rec(seq, used, nl, picked)
            if s.kind == PICKUP:
                picked.discard(s.customer_id)
            seq.pop()
            used[k] = False

    rec([], [False] * n, initial_load, set())
    return out


@dataclass
class ExactSolution:
    total_cost: float
    assignment: dict  # customer id -> vehicle id, or None when rejected
    schedules: dict  # vehicle id -> Schedule


def exact_solve(
    graph: NetworkGraph,
    plans: list[VehiclePlan],
    customers: list[Customer],
    cost_fn: CostFunction,
    now_s: float = 0.0,
    allow_reject: bool = True,
    notify_time_s: float = 0.0,
) -> ExactSolution:
    """Exhaustive minimum-cost assignment and stop ordering.

    Every customer goes to one vehicle (or, with ``allow_reject``, to the
    rejection bidder); each vehicle's stops, including any it already holds, are
    reordered over all precedence- and capacity-feasible sequences.
    """
    if len(customers) > MAX_EXACT_CUSTOMERS:
        raise ValueError(f"exact_solve handles at most {MAX_EXACT_CUSTOMERS} customers")
    if not cost_fn.per_customer:
        raise ValueError("exact_solve needs a per-customer cost function")
    rej_cost = {
        c.id: float(cost_fn.batch(rejected_array(graph, c, notify_time_s)[None, :])[0]) for c in customers
    }
    memo = {}

    def vehicle_best(plan, subset):
        key = (plan.vid, subset)
        if key in memo:
            return memo[key]
        extra = [c for c in customers if c.id in subset]
        stops = list(plan.schedule.stops)
        for c in extra:
            stops += [Stop(c.pickup, PICKUP, c.id), Stop(c.dropoff, DROPOFF, c.id)]
        if not stops:
            memo[key] = (0.0, ())
            return memo[key]
        orders = _orderings(stops, plan.capacity, plan.schedule.initial_onboard())
        if not orders:
            memo[key] = (np.inf, ())
            return memo[key]
        trial = VehiclePlan(plan.vid, plan.node, plan.schedule, dict(plan.customers), plan.onboard, plan.offset_s, plan.odometer_m)
        for c in extra:
            trial.customers[c.id] = c
        ids = []
        for s in stops:
            if s.customer_id not in ids:
                ids.append(s.customer_id)
        cust = [trial.customers[i] for i in ids]
        totals, _ = evaluate_stop_lists(graph, trial, orders, cust, cost_fn, now_s)
        k = int(np.argmin(totals))
        memo[key] = (float(totals[k]), orders[k])
        return memo[key]

    options = [p.vid for p in plans] + ([REJECT] if allow_reject else [])
    by_id = {p.vid: p for p in plans}
    best = None
    for combo in itertools.product(options, repeat=len(customers)):
        total = 0.0
        chosen = {}
        for vid in by_id:
            subset = frozenset(c.id for c, v in zip(customers, combo) if v == vid)
            cost, order = vehicle_best(by_id[vid], subset)
            total += cost
            chosen[vid] = order
        total += sum(rej_cost[c.id] for c, v in zip(customers, combo) if v is REJECT)
        if best is None or total < best[0]:
            best = (total, combo, chosen)
    total, combo, chosen = best
    return ExactSolution(
        total,
        {c.id: v for c, v in zip(customers, combo)},
        {vid: Schedule(order, by_id[vid].capacity) for vid, order in chosen.items()},
    )
