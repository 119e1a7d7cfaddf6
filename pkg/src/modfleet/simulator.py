"""Deterministic discrete-event simulation of a small MOD fleet.

Vehicles move link by link along stored minimum-time routes. Requests are
assigned online by the insertion heuristic; idle vehicles either stay put
(unmanaged) or drive to the expected-wait-minimizing placement (predictive).
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arrivals import Arrival, ArrivalModel, sample_arrivals
from .cost import CostFunction, RaterCost, make_cost
from .metrics import CSV_COLUMNS, RideMetrics, check_identities, realized_metrics, rejected_metrics
from .network import NetworkGraph, bundled_graph_path, load_graph, next_hop, precompute_routes
from .positioning import WaitTimeTable, cache_path, load_table, match_to_slots, placement_targets
from .ratings import PREFERENCE_MODES, RaterParams, focus_weights, rate_with_weights, sample_preference_weights
from .ridesharing import assign_request
from .schedule import DROPOFF, PICKUP, Boarded, Customer, Schedule, VehiclePlan

STRATEGIES = ("unmanaged", "predictive")
EVENT_COLUMNS = ("time_s", "event_type", "vehicle_id", "customer_id", "node")


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass
class SimConfig:
    graph_path: str | None = None
    duration_s: float = 7200.0
    rates_per_min: dict | None = None
    arrival_rate_per_vehicle: float | None = None  # ped/min/vehicle, spread over random active nodes
    n_active_nodes: int = 10
    max_node_rate_per_min: float = 5.0
    n_vehicles: int = 3
    capacity: int = 1
    positioning: str = "unmanaged"
    cost: str = "service_time"
    preference_mode: str = "service"
    rater_concentration: tuple | None = None
    seed: int = 0
    decision_latency_s: float = 0.0
    pedestrian_speed_mps: float = 1.4
    initial_nodes: list | None = None
    scripted_arrivals: list | None = None  # [(time_s, pickup, dropoff), ...]
    cache_dir: str | None = None
    audit: bool = False

    def validate(self):
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")
        if self.n_vehicles < 1:
            raise ConfigError("n_vehicles must be >= 1")
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if self.positioning not in STRATEGIES:
            raise ConfigError(f"positioning must be one of {STRATEGIES}")
        if self.rates_per_min is not None:
            for n, r in self.rates_per_min.items():
                if not 0 <= r <= self.max_node_rate_per_min:
                    raise ConfigError(f"rate {r} at node {n} outside [0, {self.max_node_rate_per_min}]")
        if self.arrival_rate_per_vehicle is not None and self.arrival_rate_per_vehicle < 0:
            raise ConfigError("arrival_rate_per_vehicle must be non-negative")
        if self.rater_concentration is None and self.preference_mode not in PREFERENCE_MODES:
            raise ConfigError(f"unknown preference mode {self.preference_mode!r}")
        if self.decision_latency_s < 0:
            raise ConfigError("decision_latency_s must be non-negative")
        return self

    @property
    def concentration(self) -> tuple:
        if self.rater_concentration is not None:
            return tuple(self.rater_concentration)
        return PREFERENCE_MODES[self.preference_mode]


@dataclass
class CustomerRecord:
    customer: Customer
    weights: np.ndarray
    metrics: RideMetrics | None = None
    rating: int | None = None
    vehicle_id: int | None = None
    pickup_time_s: float | None = None
    dropoff_time_s: float | None = None

    @property
    def rejected(self) -> bool:
        return self.metrics is not None and self.metrics.is_rejected

    @property
    def delivered(self) -> bool:
        return self.dropoff_time_s is not None


@dataclass
class SimResult:
    config: SimConfig
    records: list[CustomerRecord]
    vehicle_distance_m: list[float]
    events: list[tuple]
    horizon_s: float
    violations: list[str] = field(default_factory=list)

    def counted(self) -> list[CustomerRecord]:
        """Customers that enter summary means: rejected, or picked up by the horizon."""
        return [r for r in self.records if r.rejected or (r.pickup_time_s is not None and r.pickup_time_s <= self.horizon_s)]

    def excluded(self) -> list[CustomerRecord]:
        keep = {id(r) for r in self.counted()}
        return [r for r in self.records if id(r) not in keep]

    def summary(self) -> dict:
        rows = self.counted()
        norm = [normalized_service_time(r.metrics) for r in rows]
        service = [r.metrics.service_time_s for r in rows if not r.rejected]
        wait = [r.metrics.wait_time_s for r in rows if not r.rejected]
        ratings = [r.rating for r in rows]
        n_rej = sum(1 for r in rows if r.rejected)
        return {
            "n_customers": len(self.records),
            "n_counted": len(rows),
            "n_excluded": len(self.records) - len(rows),
            "n_accepted": sum(1 for r in self.records if not r.rejected),
            "n_rejected": sum(1 for r in self.records if r.rejected),
            "rejection_rate": _mean([1.0 if r.rejected else 0.0 for r in rows]),
            "mean_normalized_service": _mean(norm),
            "mean_service_s": _mean(service),
            "mean_wait_s": _mean(wait),
            "mean_rating": _mean(ratings),
            "fleet_distance_m": math.fsum(self.vehicle_distance_m),
        }


def _mean(xs) -> float:
    return math.fsum(xs) / len(xs) if xs else float("nan")


def normalized_service_time(m: RideMetrics) -> float:
    """Service time over direct drive time; a rejected customer's service is their walk."""
    if m.is_rejected:
        return m.walk_time_s / m.direct_time_s
    return m.service_time_s / m.direct_time_s


@dataclass
class _Vehicle:
    vid: int
    node: int
    capacity: int
    schedule: Schedule = None
    customers: dict = field(default_factory=dict)
    onboard: dict = field(default_factory=dict)
    link: object = None
    link_end: float = 0.0
    odometer: float = 0.0
    target: int | None = None

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = Schedule((), self.capacity)

    @property
    def idle(self) -> bool:
        return not self.schedule.stops

    def origin(self, now: float):
        if self.link is None:
            return self.node, 0.0, self.odometer
        return self.link.dst, self.link_end - now, self.odometer + self.link.length_m

    def plan(self, now: float) -> VehiclePlan:
        node, offset, odo = self.origin(now)
        return VehiclePlan(self.vid, node, self.schedule, self.customers, self.onboard, offset, odo)


def resolve_rates(config: SimConfig, graph: NetworkGraph, rng: np.random.Generator) -> ArrivalModel:
    """Per-node rates from the config, or random active nodes when only a fleet-normalized rate is given."""
    if config.rates_per_min is not None:
        rates = [float(config.rates_per_min.get(n, config.rates_per_min.get(str(n), 0.0))) for n in graph.nodes]
        return ArrivalModel.from_per_minute(graph.nodes, rates)
    total = (config.arrival_rate_per_vehicle or 0.0) * config.n_vehicles
    k = min(config.n_active_nodes, graph.n_nodes)
    active = rng.choice(graph.n_nodes, size=k, replace=False)
    w = rng.uniform(0.0, 1.0, size=k)
    rates = np.zeros(graph.n_nodes)
    if total > 0:
        rates[active] = total * w / w.sum()
    return ArrivalModel.from_per_minute(graph.nodes, rates)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def scenario(config: SimConfig, graph: NetworkGraph):
    """Everything random about a run that must not depend on the strategy."""
    rate_rng, arr_rng, pref_rng, init_rng = _streams(config.seed)
    model = resolve_rates(config, graph, rate_rng)
    if config.scripted_arrivals is not None:
        arrivals = [Arrival(float(t), int(p), int(e)) for t, p, e in config.scripted_arrivals]
        arrivals.sort(key=lambda a: a.time_s)
    elif model.total_rate > 0:
        arrivals = sample_arrivals(model, config.duration_s, arr_rng)
    else:
        arrivals = []
    conc = config.concentration
    weights = [sample_preference_weights(conc, pref_rng) for _ in arrivals]
    if config.initial_nodes is not None:
        start = list(config.initial_nodes)
        if len(start) != config.n_vehicles:
            raise ConfigError("initial_nodes needs one node per vehicle")
    else:
        start = [graph.nodes[i] for i in init_rng.choice(graph.n_nodes, size=config.n_vehicles, replace=config.n_vehicles > graph.n_nodes)]
    return model, arrivals, weights, start


def build_cost(name: str, forest=None, rater_params: RaterParams | None = None) -> CostFunction:
    if name.startswith("rater_"):
        metric = name[len("rater_") :]
        return RaterCost(focus_weights(metric), rater_params, name=name)
    return make_cost(name, forest=forest)


def load_sim_graph(config: SimConfig) -> NetworkGraph:
    path = config.graph_path or bundled_graph_path()
    return precompute_routes(load_graph(path, pedestrian_speed_mps=config.pedestrian_speed_mps))


def _resolve_table(config, graph, table):
    if config.positioning != "predictive":
        return None
    if table is not None:
        return table
    path = cache_path(graph, config.n_vehicles, config.cache_dir)
    if not path.exists():
        raise MissingArtifactError(
            f"predictive positioning needs a wait-time table at {path}; "
            f"run `modfleet precompute --vehicles {config.n_vehicles}` first"
        )
    return load_table(path, graph)


def run_simulation(
    config: SimConfig,
    graph: NetworkGraph | None = None,
    table: WaitTimeTable | None = None,
    forest=None,
    cost_fn: CostFunction | None = None,
    rater_params: RaterParams = RaterParams(),
) -> SimResult:
    config.validate()
    graph = graph if graph is not None else load_sim_graph(config)
    precompute_routes(graph)
    table = _resolve_table(config, graph, table)
    if table is not None and table.n_vehicles < config.n_vehicles:
        raise ConfigError(f"wait table covers {table.n_vehicles} vehicles, fleet has {config.n_vehicles}")
    if cost_fn is None:
        if config.cost == "ratings" and forest is None:
            raise MissingArtifactError("ratings cost needs a trained forest (see `modfleet train-ratings`)")
        cost_fn = build_cost(config.cost, forest, rater_params)
    return _Sim(config, graph, table, cost_fn, rater_params).run()


class _Sim:
    def __init__(self, config, graph, table, cost_fn, rater_params):
        self.cfg = config
        self.g = graph
        self.cost_fn = cost_fn
        self.params = rater_params
        model, arrivals, weights, start = scenario(config, graph)
        self.model = model
        self.targets = placement_targets(graph, table, model) if table is not None else {}
        self.vehicles = [_Vehicle(i, n, config.capacity) for i, n in enumerate(start)]
        self.records = []
        self.events = []
        self.heap = []
        self.seq = 0
        self.now = 0.0
        self.barred = set()
        self.violations = []
        for cid, (a, w) in enumerate(zip(arrivals, weights)):
            c = Customer(cid, a.node, a.dropoff, a.time_s)
            self.records.append(CustomerRecord(c, w))
            self._push(a.time_s, 0, ("request", cid))
            self._push(a.time_s + config.decision_latency_s, 1, ("decide", cid))

    def _push(self, t, prio, item):
        heapq.heappush(self.heap, (t, prio, self.seq, item))
        self.seq += 1

    def log(self, kind, vid, cid, node):
        self.events.append((self.now, kind, -1 if vid is None else vid, -1 if cid is None else cid, node))

    def run(self) -> SimResult:
        self._retarget()
        last = 0.0
        while self.heap:
            t, _, _, item = heapq.heappop(self.heap)
            if t < last:
                self.violations.append(f"clock went back from {last} to {t}")
            self.now = last = t
            kind = item[0]
            if kind == "request":
                r = self.records[item[1]]
                self.log("request", None, item[1], r.customer.pickup)
            elif kind == "decide":
                self._decide(item[1])
            elif kind == "reach":
                self._reach(self.vehicles[item[1]])
            if self.cfg.audit:
                self._audit_state()
        return SimResult(
            self.cfg,
            self.records,
            [v.odometer for v in self.vehicles],
            self.events,
            self.cfg.duration_s,
            self.violations,
        )

    def _decide(self, cid):
        rec = self.records[cid]
        c = rec.customer
        latency = self.cfg.decision_latency_s
        plans = [v.plan(self.now) for v in self.vehicles]
        was_idle = [v.idle for v in self.vehicles]
        a = assign_request(self.g, plans, c, self.cost_fn, self.now, latency, self.barred)
        if a.rejected:
            rec.metrics = rejected_metrics(self.g, c, latency)
            rec.rating = rate_with_weights(rec.metrics, rec.weights, self.params)
            self.log("reject", None, cid, c.pickup)
            return
        v = self.vehicles[a.vehicle_id]
        rec.vehicle_id = v.vid
        v.schedule = a.schedule
        v.customers[cid] = replace(c, assigned_time_s=self.now)
        v.target = None
        self.log("assign", v.vid, cid, c.pickup)
        if self.cfg.audit:
            try:
                a.schedule.validate()
            except ValueError as e:
                self.violations.append(f"t={self.now}: vehicle {v.vid}: {e}")
        if v.link is None:
            self._at_node(v)
        if was_idle[v.vid]:
            self._retarget()

    def _reach(self, v: _Vehicle):
        link = v.link
        v.odometer += link.length_m
        v.node = link.dst
        v.link = None
        self.log("arrive", v.vid, None, v.node)
        self._at_node(v)

    def _at_node(self, v: _Vehicle):
        became_idle = False
        while v.schedule.stops and v.schedule.stops[0].node == v.node:
            stop = v.schedule.stops[0]
            v.schedule = Schedule(v.schedule.stops[1:], v.capacity)
            self._serve(v, stop)
            if not v.schedule.stops:
                became_idle = True
        if became_idle:
            self._retarget()
        self._move(v)

    def _serve(self, v: _Vehicle, stop):
        cid = stop.customer_id
        for other, b in list(v.onboard.items()):
            if other != cid:
                v.onboard[other] = Boarded(b.pickup_time_s, b.odometer_m, b.stops_so_far + 1)
        rec = self.records[cid]
        if stop.kind == PICKUP:
            v.onboard[cid] = Boarded(self.now, v.odometer, 0)
            rec.pickup_time_s = self.now
            self.log("pickup", v.vid, cid, v.node)
            if len(v.onboard) > v.capacity:
                self.violations.append(f"t={self.now}: vehicle {v.vid} over capacity")
        else:
            b = v.onboard.pop(cid)
            c = v.customers.pop(cid)
            rec.dropoff_time_s = self.now
            rec.metrics = realized_metrics(
                self.g, c, b.pickup_time_s, self.now, v.odometer - b.odometer_m, b.stops_so_far, c.assigned_time_s - c.request_time_s
            )
            rec.rating = rate_with_weights(rec.metrics, rec.weights, self.params)
            self.log("dropoff", v.vid, cid, v.node)

    def _move(self, v: _Vehicle):
        if v.link is not None:
            return
        if v.schedule.stops:
            dest = v.schedule.stops[0].node
        elif v.target is not None and v.target != v.node:
            dest = v.target
        else:
            return
        link = next_hop(self.g, v.node, dest)
        v.link = link
        v.link_end = self.now + link.length_m / link.speed_mps
        self.log("depart", v.vid, None, v.node)
        self._push(v.link_end, 2, ("reach", v.vid))

    def _retarget(self):
        if not self.targets:
            return
        idle = [v for v in self.vehicles if v.idle]
        if not idle:
            return
        slots = self.targets.get(len(idle))
        if slots is None:
            return
        origins = [v.origin(self.now) for v in idle]
        goals = match_to_slots(self.g, [o[0] for o in origins], slots, [o[1] for o in origins])
        for v, goal in zip(idle, goals):
            if v.target != goal:
                v.target = goal
                self.log("reposition", v.vid, None, goal)
            if v.link is None:
                self._move(v)

    def _audit_state(self):
        for v in self.vehicles:
            if len(v.onboard) > v.capacity:
                self.violations.append(f"t={self.now}: vehicle {v.vid} carries {len(v.onboard)} > {v.capacity}")
            if not v.schedule.is_valid():
                self.violations.append(f"t={self.now}: vehicle {v.vid} holds an invalid schedule")
            pending_drop = {s.customer_id for s in v.schedule.stops if s.kind == DROPOFF}
            pending_pick = {s.customer_id for s in v.schedule.stops if s.kind == PICKUP}
            if set(v.onboard) != pending_drop - pending_pick:
                self.violations.append(f"t={self.now}: vehicle {v.vid} onboard set disagrees with its schedule")
            if self.barred & (pending_drop | pending_pick):
                self.violations.append(f"t={self.now}: rejected customer in vehicle {v.vid} schedule")


def audit(result: SimResult, graph: NetworkGraph) -> list[str]:
    """Post-hoc checks over the event log and customer records."""
    bad = list(result.violations)
    last = -math.inf
    picked, dropped, assigned = {}, {}, {}
    rejected = set()
    moving = {}
    for t, kind, vid, cid, node in result.events:
        if t < last:
            bad.append(f"event log clock decreases at {t}")
        last = t
        if kind == "assign":
            assigned[cid] = vid
        elif kind == "reject":
            rejected.add(cid)
        elif kind == "pickup":
            if cid in picked:
                bad.append(f"customer {cid} picked up twice")
            if cid in rejected:
                bad.append(f"rejected customer {cid} picked up")
            picked[cid] = t
        elif kind == "dropoff":
            if cid in dropped:
                bad.append(f"customer {cid} dropped off twice")
            if cid not in picked:
                bad.append(f"customer {cid} dropped off before pickup")
            dropped[cid] = t
        elif kind == "depart":
            moving[vid] = (t, node)
        elif kind == "arrive":
            if vid not in moving:
                bad.append(f"vehicle {vid} arrived without departing")
                continue
            t0, src = moving.pop(vid)
            try:
                link = graph.link(src, node)
            except KeyError:
                bad.append(f"vehicle {vid} jumped from {src} to {node}")
                continue
            if abs((t - t0) - link.length_m / link.speed_mps) > 1e-6:
                bad.append(f"vehicle {vid} crossed {src}->{node} at the wrong speed")
    n = len(result.records)
    if len(assigned) + len(rejected) != n:
        bad.append(f"conservation: {n} arrivals != {len(assigned)} accepted + {len(rejected)} rejected")
    for cid in assigned:
        if cid not in picked or cid not in dropped:
            bad.append(f"accepted customer {cid} not delivered")
        elif dropped[cid] < picked[cid]:
            bad.append(f"customer {cid} dropped before pickup")
    for r in result.records:
        if r.metrics is None:
            bad.append(f"customer {r.customer.id} has no metrics")
            continue
        for msg in check_identities(r.metrics):
            bad.append(f"customer {r.customer.id}: {msg}")
    return bad


def _f(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_events(result: SimResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for t, kind, vid, cid, node in result.events:
            w.writerow([repr(float(t)), kind, vid, cid, node])


CUSTOMER_COLUMNS = ("customer_id", "pickup", "dropoff", "request_s") + CSV_COLUMNS + (
    "direct_s",
    "direct_m",
    "rating",
    "vehicle_id",
    "counted",
)


def write_customers(result: SimResult, path):
    counted = {id(r) for r in result.counted()}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CUSTOMER_COLUMNS)
        for r in result.records:
            c = r.customer
            m = r.metrics
            extra = m.as_dict()
            w.writerow(
                [c.id, c.pickup, c.dropoff, repr(c.request_time_s)]
                + m.csv_row()
                + [_f(extra["direct_time_s"]), _f(extra["direct_m"]), r.rating, _f(r.vehicle_id), int(id(r) in counted)]
            )


def write_summary(result: SimResult, path):
    s = result.summary()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(s))
        w.writerow([_f(v) for v in s.values()])


def write_outputs(result: SimResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"events": out / "events.csv", "customers": out / "customers.csv", "summary": out / "summary.csv"}
    write_events(result, paths["events"])
    write_customers(result, paths["customers"])
    write_summary(result, paths["summary"])
    return paths
