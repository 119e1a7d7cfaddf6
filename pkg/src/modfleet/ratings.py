"""Simulated ground-truth 5-star rater with Dirichlet-distributed preferences.

The trained rating predictor lives in :mod:`modfleet.forest`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import COL, RideMetrics

SUB_RATINGS = ("wait", "ride", "service", "stops", "distance")

# total concentration 10; 90% of it on the focus metric(s)
PREFERENCE_MODES = {
    "wait": (9.0, 0.25, 0.25, 0.25, 0.25),
    "ride": (0.25, 9.0, 0.25, 0.25, 0.25),
    "service": (0.25, 0.25, 9.0, 0.25, 0.25),
    "stops": (0.25, 0.25, 0.25, 9.0, 0.25),
    "distance": (0.25, 0.25, 0.25, 0.25, 9.0),
    "combined": (1 / 3, 1 / 3, 4.5, 1 / 3, 4.5),
}


@dataclass(frozen=True)
class RaterParams:
    """Rating thresholds.

    ``spacing_base`` sets the interval edges: edge i sits at
    ``(base**i - 1) / (base**5 - 1)`` of the way from the best to the worst bound.
    """

    spacing_base: float = 2.0
    time_upper: float = 1.0
    distance_upper: float = 0.5
    notify_ratio: float = 0.1
    min_denominator_s: float = 60.0


def range_edges(beta: float, gamma: float, base: float = 2.0) -> np.ndarray:
    if not gamma > beta:
        raise ValueError("range needs gamma > beta")
    i = np.arange(6)
    if base == 1.0:
        frac = i / 5.0
    else:
        frac = (base**i - 1.0) / (base**5 - 1.0)
    return beta + (gamma - beta) * frac


def range_map(alpha, beta: float, gamma: float, base: float = 2.0):
    """Map ``alpha`` onto five intervals between beta (best, 5) and gamma (worst, 1).

    Intervals are closed on the left, so an edge value falls in the worse interval.
    """
    edges = range_edges(beta, gamma, base)
    interval = np.searchsorted(edges[1:5], alpha, side="right") + 1
    rating = 6 - interval
    if np.ndim(rating) == 0:
        return int(rating)
    return rating.astype(float)


def sub_ratings_rows(M: np.ndarray, params: RaterParams = RaterParams()) -> np.ndarray:
    """The five sub-ratings (wait, ride, service, stops, distance) per accepted row."""
    M = np.asarray(M, dtype=float)
    direct_t = M[:, COL["direct_time_s"]]
    direct_d = M[:, COL["direct_m"]]
    denom = np.maximum(M[:, COL["walk_time_s"]] - direct_t, params.min_denominator_s)
    b = params.spacing_base
    out = np.empty((len(M), 5))
    out[:, 0] = range_map(M[:, COL["wait_time_s"]] / denom, 0.0, params.time_upper, b)
    out[:, 1] = range_map((M[:, COL["ride_time_s"]] - direct_t) / denom, 0.0, params.time_upper, b)
    out[:, 2] = range_map((M[:, COL["service_time_s"]] - direct_t) / denom, 0.0, params.time_upper, b)
    out[:, 3] = np.clip(6.0 - M[:, COL["n_stops"]], 1.0, 5.0)
    out[:, 4] = range_map((M[:, COL["traveled_m"]] - direct_d) / direct_d, 0.0, params.distance_upper, b)
    return out


def rejected_rating_rows(M: np.ndarray, params: RaterParams = RaterParams()) -> np.ndarray:
    ratio = M[:, COL["notify_time_s"]] / M[:, COL["walk_time_s"]]
    return np.where(ratio <= params.notify_ratio, 2.0, 1.0)


def expected_rating_rows(M: np.ndarray, weights, params: RaterParams = RaterParams()) -> np.ndarray:
    """Unrounded rating for each metric row under ``weights`` (one row of weights
    shared by all rows, or one row per metric row)."""
    M = np.asarray(M, dtype=float)
    rej = M[:, 0] == 1.0
    out = np.empty(len(M))
    if rej.any():
        out[rej] = rejected_rating_rows(M[rej], params)
    acc = ~rej
    if acc.any():
        w = np.asarray(weights, dtype=float)
        if w.ndim == 2:
            w = w[acc]
        out[acc] = (sub_ratings_rows(M[acc], params) * w).sum(axis=-1)
    return out


def round_rating(r: float) -> int:
    return int(min(5, max(1, math.floor(r + 0.5))))


def rate_with_weights(m: RideMetrics, weights, params: RaterParams = RaterParams()) -> int:
    r = expected_rating_rows(m.as_array()[None, :], weights, params)[0]
    return round_rating(r)


def sample_preference_weights(concentration, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw via normalized Gamma variates."""
    conc = np.asarray(concentration, dtype=float)
    if (conc <= 0).any():
        raise ValueError("concentration entries must be positive")
    g = rng.gamma(conc)
    s = g.sum()
    if s == 0:
        # all variates underflowed; fall back to the mean
        return conc / conc.sum()
    return g / s


@dataclass
class SimulatedRater:
    concentration: tuple[float, ...]
    rng: np.random.Generator
    params: RaterParams = RaterParams()

    def __post_init__(self):
        if len(self.concentration) != 5 or any(c <= 0 for c in self.concentration):
            raise ValueError("concentration needs 5 positive entries")

    def draw_weights(self) -> np.ndarray:
        return sample_preference_weights(self.concentration, self.rng)

    def rate(self, m: RideMetrics, weights=None) -> int:
        if weights is None:
            weights = self.draw_weights()
        return rate_with_weights(m, weights, self.params)


def simulated_rating(rater: SimulatedRater, m: RideMetrics, weights=None) -> int:
    return rater.rate(m, weights)


def focus_weights(metric: str) -> np.ndarray:
    w = np.zeros(5)
    w[SUB_RATINGS.index(metric)] = 1.0
    return w
