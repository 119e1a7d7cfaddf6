"""Per-customer quality-of-service metrics computed from vehicle schedules.

Metric rows are 13 wide: the 11 customer metrics in fixed order followed by
the direct drive time and distance, which rating code needs as context.
Absent metrics of rejected customers are NaN in array form.
"""

from __future__ import annotations

import math

import numpy as np

from .network import NetworkGraph, walk_time
from .schedule import DROPOFF, PICKUP, Boarded, Customer, Schedule, ScheduleError, VehiclePlan

FIELDS = (
    "rejected",
    "ride_time_s",
    "wait_time_s",
    "service_time_s",
    "ratio",
    "excess_ride_s",
    "n_stops",
    "notify_time_s",
    "traveled_m",
    "walk_time_s",
    "excess_walk_s",
)
CSV_COLUMNS = (
    "rejected",
    "ride_s",
    "wait_s",
    "service_s",
    "ratio",
    "excess_ride_s",
    "n_stops",
    "notify_s",
    "traveled_m",
    "walk_s",
    "excess_walk_s",
)
EXTRA = ("direct_time_s", "direct_m")
WIDTH = len(FIELDS) + len(EXTRA)
COL = {name: i for i, name in enumerate(FIELDS + EXTRA)}
REJECTED_PRESENT = ("rejected", "notify_time_s", "walk_time_s")


class AbsentMetricError(AttributeError):
    """A metric that does not exist for rejected customers was accessed."""


class RideMetrics:
    __slots__ = ("_v",)

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (WIDTH,):
            raise ValueError(f"expected {WIDTH} values, got shape {v.shape}")
        self._v = v

    @classmethod
    def accepted(cls, **kw) -> "RideMetrics":
        v = np.full(WIDTH, np.nan)
        v[0] = 0.0
        for k, x in kw.items():
            v[COL[k]] = x
        return cls(v)

    @property
    def is_rejected(self) -> bool:
        return self._v[0] == 1.0

    def as_array(self) -> np.ndarray:
        return self._v.copy()

    def as_dict(self) -> dict:
        return {k: (None if math.isnan(x) else float(x)) for k, x in zip(FIELDS + EXTRA, self._v)}

    def csv_row(self) -> list:
        return [_fmt(x) for x in self._v[: len(FIELDS)]]

    def __eq__(self, other):
        return isinstance(other, RideMetrics) and np.array_equal(self._v, other._v, equal_nan=True)

    def __repr__(self):
        parts = ", ".join(f"{k}={v:.6g}" for k, v in self.as_dict().items() if v is not None)
        return f"RideMetrics({parts})"


def _field_property(name):
    i = COL[name]

    def get(self):
        x = self._v[i]
        if math.isnan(x):
            raise AbsentMetricError(f"{name} is not defined for this customer")
        return float(x)

    return property(get)


for _name in FIELDS + EXTRA:
    setattr(RideMetrics, _name, _field_property(_name))


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def _direct(graph: NetworkGraph, customer: Customer):
    i, j = graph.index[customer.pickup], graph.index[customer.dropoff]
    return float(graph.time_matrix[i, j]), float(graph.dist_matrix[i, j])


def _notify(customer: Customer, now_s: float) -> float:
    assigned = customer.assigned_time_s if customer.assigned_time_s is not None else now_s
    return assigned - customer.request_time_s


def compute_metrics(
    graph: NetworkGraph,
    vehicle_node: int,
    schedule: Schedule,
    customer: Customer,
    now_s: float,
    offset_s: float = 0.0,
    boarded: Boarded | None = None,
    odometer_m: float = 0.0,
) -> RideMetrics:
    """Metrics for one customer when the vehicle follows ``schedule`` from ``vehicle_node``.

    Scalar reference path: walks the schedule leg by leg. For an onboard customer
    pass ``boarded``; the realized pickup is kept and only drop-off terms change.
    """
    stops = schedule.stops
    i = schedule.index_of(customer.id, PICKUP)
    j = schedule.index_of(customer.id, DROPOFF)
    if j < 0 or (i < 0 and boarded is None):
        raise ScheduleError(f"customer {customer.id} is not in the schedule")
    if i >= 0 and j < i:
        raise ScheduleError(f"customer {customer.id}: dropoff before pickup")

    arrive_t = []
    arrive_d = []
    t = offset_s
    d = 0.0
    prev = vehicle_node
    for s in stops:
        t += graph.time(prev, s.node)
        d += graph.distance(prev, s.node)
        arrive_t.append(t)
        arrive_d.append(d)
        prev = s.node

    dropoff_abs = now_s + arrive_t[j]
    if i >= 0:
        pickup_abs = now_s + arrive_t[i]
        traveled = arrive_d[j] - arrive_d[i]
        n_stops = j - i - 1
    else:
        pickup_abs = boarded.pickup_time_s
        traveled = odometer_m + arrive_d[j] - boarded.odometer_m
        n_stops = boarded.stops_so_far + j
    return _assemble(graph, customer, pickup_abs, dropoff_abs, traveled, n_stops, _notify(customer, now_s))


def _assemble(graph, customer, pickup_abs, dropoff_abs, traveled, n_stops, notify) -> RideMetrics:
    direct_t, direct_d = _direct(graph, customer)
    walk = walk_time(graph, customer.pickup, customer.dropoff)
    ride = dropoff_abs - pickup_abs
    wait = pickup_abs - customer.request_time_s
    service = wait + ride
    return RideMetrics(
        [
            0.0,
            ride,
            wait,
            service,
            ride / direct_t,
            ride - direct_t,
            n_stops,
            notify,
            traveled,
            walk,
            service - walk,
            direct_t,
            direct_d,
        ]
    )


def realized_metrics(
    graph: NetworkGraph,
    customer: Customer,
    pickup_time_s: float,
    dropoff_time_s: float,
    traveled_m: float,
    n_stops: int,
    notify_time_s: float,
) -> RideMetrics:
    """Metrics from what actually happened to a delivered customer."""
    return _assemble(graph, customer, pickup_time_s, dropoff_time_s, traveled_m, n_stops, notify_time_s)


def rejected_metrics(graph: NetworkGraph, customer: Customer, notify_time_s: float = 0.0) -> RideMetrics:
    v = np.full(WIDTH, np.nan)
    v[COL["rejected"]] = 1.0
    v[COL["notify_time_s"]] = notify_time_s
    v[COL["walk_time_s"]] = walk_time(graph, customer.pickup, customer.dropoff)
    v[COL["direct_time_s"]], v[COL["direct_m"]] = _direct(graph, customer)
    return RideMetrics(v)


def rejected_array(graph: NetworkGraph, customer: Customer, notify_time_s: float = 0.0) -> np.ndarray:
    return rejected_metrics(graph, customer, notify_time_s)._v


def customer_arrays(graph: NetworkGraph, plan: VehiclePlan, customers: list[Customer], now_s: float) -> dict:
    """Per-customer quantities that do not depend on the candidate stop order."""
    T, D, W = graph.time_matrix, graph.dist_matrix, graph.walk_matrix
    pu = np.array([graph.index[c.pickup] for c in customers], dtype=np.int64)
    do = np.array([graph.index[c.dropoff] for c in customers], dtype=np.int64)
    boarded = [plan.onboard.get(c.id) for c in customers]
    return {
        "direct_t": T[pu, do],
        "direct_d": D[pu, do],
        "walk": W[pu, do],
        "request": np.array([c.request_time_s for c in customers], dtype=float),
        "notify": np.array([_notify(c, now_s) for c in customers], dtype=float),
        "on": np.array([bd is not None for bd in boarded], dtype=bool),
        "b_pick": np.array([bd.pickup_time_s if bd else 0.0 for bd in boarded]),
        "b_odo": np.array([bd.odometer_m if bd else 0.0 for bd in boarded]),
        "b_stops": np.array([bd.stops_so_far if bd else 0 for bd in boarded], dtype=np.int64),
    }


def metrics_tensor(graph: NetworkGraph, plan: VehiclePlan, node_seqs, PI, PJ, static: dict, now_s: float) -> np.ndarray:
    """Metrics for candidate stop sequences given per-customer stop positions.

    ``PI`` and ``PJ`` are ``(n_cand, n_cust)`` pickup and drop-off positions,
    pickup -1 for onboard customers. ``static`` comes from ``customer_arrays``.
    """
    T, D = graph.time_matrix, graph.dist_matrix
    n_cand = node_seqs.shape[0]
    prev = np.empty_like(node_seqs)
    prev[:, 0] = graph.index[plan.node]
    prev[:, 1:] = node_seqs[:, :-1]
    cum_t = np.cumsum(T[prev, node_seqs], axis=1) + plan.offset_s
    cum_d = np.cumsum(D[prev, node_seqs], axis=1)

    on = static["on"]
    PIc = np.where(on, 0, PI)
    dropoff_abs = now_s + np.take_along_axis(cum_t, PJ, axis=1)
    pickup_abs = np.where(on, static["b_pick"], now_s + np.take_along_axis(cum_t, PIc, axis=1))
    cd_j = np.take_along_axis(cum_d, PJ, axis=1)
    traveled = np.where(on, plan.odometer_m + cd_j - static["b_odo"], cd_j - np.take_along_axis(cum_d, PIc, axis=1))
    n_stops_c = np.where(on, static["b_stops"] + PJ, PJ - PI - 1)
    cidx = np.broadcast_to(np.arange(PI.shape[1]), PI.shape)
    return assemble_rows(pickup_abs, dropoff_abs, traveled, n_stops_c, static, cidx)


def assemble_rows(pickup_abs, dropoff_abs, traveled, n_stops, static: dict, cidx) -> np.ndarray:
    """Stack metric rows for accepted customers; ``cidx`` picks each row's customer in ``static``."""
    direct_t = static["direct_t"][cidx]
    walk = static["walk"][cidx]
    ride = dropoff_abs - pickup_abs
    wait = pickup_abs - static["request"][cidx]
    service = wait + ride
    out = np.empty(np.shape(ride) + (WIDTH,))
    out[..., 0] = 0.0
    out[..., 1] = ride
    out[..., 2] = wait
    out[..., 3] = service
    out[..., 4] = ride / direct_t
    out[..., 5] = ride - direct_t
    out[..., 6] = n_stops
    out[..., 7] = static["notify"][cidx]
    out[..., 8] = traveled
    out[..., 9] = walk
    out[..., 10] = service - walk
    out[..., 11] = direct_t
    out[..., 12] = static["direct_d"][cidx]
    return out


def candidate_metrics(
    graph: NetworkGraph,
    plan: VehiclePlan,
    node_seqs: np.ndarray,
    positions: dict[int, tuple[np.ndarray, np.ndarray]],
    customers: list[Customer],
    now_s: float,
) -> np.ndarray:
    """Vectorized metrics for many candidate schedules of one vehicle.

    ``node_seqs`` is ``(n_cand, n_stops)`` of graph row indices. ``positions[cid]``
    holds the pickup and drop-off stop positions per candidate (pickup -1 when
    the customer is onboard). Returns ``(n_cand, len(customers), WIDTH)``.
    """
    n_cand = node_seqs.shape[0]
    PI = np.empty((n_cand, len(customers)), dtype=np.int64)
    PJ = np.empty((n_cand, len(customers)), dtype=np.int64)
    for k, c in enumerate(customers):
        PI[:, k], PJ[:, k] = positions[c.id]
    return metrics_tensor(graph, plan, node_seqs, PI, PJ, customer_arrays(graph, plan, customers, now_s), now_s)


def check_identities(m: RideMetrics, tol: float = 1e-9) -> list[str]:
    """Return the list of violated metric identities (empty when consistent)."""
    bad = []
    if m.is_rejected:
        for name in FIELDS:
            if name not in REJECTED_PRESENT and not math.isnan(m._v[COL[name]]):
                bad.append(f"{name} present on rejected customer")
        return bad
    v = m.as_dict()
    scale = max(1.0, abs(v["service_time_s"]))
    if abs(v["service_time_s"] - v["wait_time_s"] - v["ride_time_s"]) > tol * scale:
        bad.append("service != wait + ride")
    if abs(v["excess_ride_s"] - (v["ride_time_s"] - v["direct_time_s"])) > tol * scale:
        bad.append("excess_ride != ride - direct")
    if abs(v["excess_walk_s"] - (v["service_time_s"] - v["walk_time_s"])) > tol * scale:
        bad.append("excess_walk != service - walk")
    if v["ratio"] < 1 - 1e-9:
        bad.append("ratio < 1")
    if v["excess_ride_s"] < -tol * scale:
        bad.append("excess_ride < 0")
    if v["wait_time_s"] < -tol * scale:
        bad.append("wait < 0")
    return bad

