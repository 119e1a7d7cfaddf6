"""Customer QoS cost functions. Lower cost is better."""

from __future__ import annotations

import numpy as np

from .metrics import COL, FIELDS, REJECTED_PRESENT, RideMetrics

# weight vectors index the 10 metrics that follow the rejection indicator
WEIGHTED_FIELDS = FIELDS[1:]


class CostFunction:
    """Maps metric rows to costs.

    ``per_customer`` cost functions are summed over a vehicle's customers by the
    scheduler. Vehicle-level ones (the distance baseline) are handled separately.
    """

    name = "cost"
    per_customer = True

    def batch(self, M: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, m: RideMetrics) -> float:
        return float(self.batch(m.as_array()[None, :])[0])


class WeightedCost(CostFunction):
    name = "weighted"

    def __init__(self, w_rej, w_acpt, name=None):
        w_rej = np.asarray(w_rej, dtype=float)
        w_acpt = np.asarray(w_acpt, dtype=float)
        if w_rej.shape != (len(WEIGHTED_FIELDS),) or w_acpt.shape != (len(WEIGHTED_FIELDS),):
            raise ValueError(f"weight vectors need {len(WEIGHTED_FIELDS)} entries")
        for k, f in enumerate(WEIGHTED_FIELDS):
            if w_rej[k] != 0 and f not in REJECTED_PRESENT:
                raise ValueError(f"rejected-branch weight on {f}, which rejected customers do not have")
        self.w_rej, self.w_acpt = w_rej, w_acpt
        if name:
            self.name = name

    @classmethod
    def focused(cls, field: str, rejected_field: str = "walk_time_s", name=None) -> "WeightedCost":
        w_rej = np.zeros(len(WEIGHTED_FIELDS))
        w_acpt = np.zeros(len(WEIGHTED_FIELDS))
        w_rej[WEIGHTED_FIELDS.index(rejected_field)] = 1.0
        w_acpt[WEIGHTED_FIELDS.index(field)] = 1.0
        return cls(w_rej, w_acpt, name=name)

    def scaled(self, factor: float) -> "WeightedCost":
        return WeightedCost(self.w_rej * factor, self.w_acpt * factor, name=self.name)

    def batch(self, M):
        M = np.asarray(M)
        vals = M[..., 1 : len(FIELDS)]
        vals = np.where(np.isnan(vals), 0.0, vals)
        rej = M[..., 0] == 1.0
        return np.where(rej, vals @ self.w_rej, vals @ self.w_acpt)


def service_time_cost() -> WeightedCost:
    return WeightedCost.focused("service_time_s", name="service_time")


def wait_time_cost() -> WeightedCost:
    return WeightedCost.focused("wait_time_s", name="wait_time")


def ride_time_cost() -> WeightedCost:
    return WeightedCost.focused("ride_time_s", name="ride_time")


def weighted_cost(w_rej, w_acpt, m: RideMetrics) -> float:
    return WeightedCost(w_rej, w_acpt)(m)


class VehicleDistanceCost(CostFunction):
    """Added scheduled driving distance; blind to customer metrics.

    The rejection bid is zero added distance, but it only competes when every
    vehicle bid exceeds ``max_detour_m`` (default: never).
    """

    name = "distance"
    per_customer = False

    def __init__(self, max_detour_m: float = np.inf):
        self.max_detour_m = max_detour_m

    def batch(self, M):
        raise TypeError("distance cost is evaluated on vehicle routes, not metric rows")


def schedule_distance(graph, node: int, stops) -> float:
    d, prev = 0.0, node
    for s in stops:
        d += graph.distance(prev, s.node)
        prev = s.node
    return d


def vehicle_distance_cost(graph, before, after) -> float:
    """Driving distance added by replacing the plan ``before`` with ``after``.

    Both arguments are ``(node, schedule)`` pairs for the same vehicle.
    """
    return schedule_distance(graph, after[0], after[1].stops) - schedule_distance(graph, before[0], before[1].stops)


class RatingsCost(CostFunction):
    """Negated rating predicted by a trained forest."""

    name = "ratings"

    def __init__(self, forest):
        self.forest = forest

    def batch(self, M):
        M = np.asarray(M)
        flat = M.reshape(-1, M.shape[-1])
        return -self.forest.predict_rows(flat).reshape(M.shape[:-1])


def ratings_cost(model, m: RideMetrics) -> float:
    return RatingsCost(model)(m)


class RaterCost(CostFunction):
    """Negated ground-truth rating under fixed preference weights.

    Used for the focused strategies, which know the rating function but pick the
    weights according to their own focus. The rating is left unrounded.
    """

    def __init__(self, weights, rater_params=None, name="rater"):
        from .ratings import RaterParams

        self.weights = np.asarray(weights, dtype=float)
        self.params = rater_params or RaterParams()
        self.name = name

    def batch(self, M):
        from .ratings import expected_rating_rows

        M = np.asarray(M)
        flat = M.reshape(-1, M.shape[-1])
        return -expected_rating_rows(flat, self.weights, self.params).reshape(M.shape[:-1])


PRESETS = ("service_time", "wait_time", "ride_time", "distance", "weighted", "ratings")


def make_cost(name: str, *, forest=None, w_rej=None, w_acpt=None, max_detour_m=np.inf) -> CostFunction:
    if name == "service_time":
        return service_time_cost()
    if name == "wait_time":
        return wait_time_cost()
    if name == "ride_time":
        return ride_time_cost()
    if name == "distance":
        return VehicleDistanceCost(max_detour_m)
    if name == "weighted":
        if w_rej is None or w_acpt is None:
            raise ValueError("weighted cost needs w_rej and w_acpt")
        return WeightedCost(w_rej, w_acpt)
    if name == "ratings":
        if forest is None:
            raise ValueError("ratings cost needs a trained forest")
        return RatingsCost(forest)
    raise ValueError(f"unknown cost preset {name!r}; choose from {', '.join(PRESETS)}")


__all__ = [
    "CostFunction",
    "WeightedCost",
    "VehicleDistanceCost",
    "RatingsCost",
    "RaterCost",
    "make_cost",
    "weighted_cost",
    "ratings_cost",
    "vehicle_distance_cost",
    "service_time_cost",
    "wait_time_cost",
    "ride_time_cost",
]
