"""Poisson customer arrivals and multinomial arrival-combination probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np


@dataclass(frozen=True)
class ArrivalModel:
    """Static per-node Poisson rates in arrivals per second.

    ``nodes`` gives the node id for each rate entry. ``dest_weights`` optionally
    replaces the uniform drop-off distribution: row i holds unnormalized weights
    over destinations for pickups at ``nodes[i]``.
    """

    nodes: tuple[int, ...]
    rates: tuple[float, ...]
    dest_weights: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if len(self.nodes) != len(self.rates):
            raise ValueError("one rate per node required")
        if any(r < 0 or not math.isfinite(r) for r in self.rates):
            raise ValueError("arrival rates must be finite and non-negative")

    @classmethod
    def from_per_minute(cls, nodes, rates_per_min, dest_weights=None) -> "ArrivalModel":
        return cls(tuple(nodes), tuple(float(r) / 60.0 for r in rates_per_min), dest_weights)

    @property
    def total_rate(self) -> float:
        return math.fsum(self.rates)

    @property
    def support(self) -> tuple[int, ...]:
        """Node ids with a non-zero rate."""
        return tuple(n for n, r in zip(self.nodes, self.rates) if r > 0)

    def scaled(self, factor: float) -> "ArrivalModel":
        return ArrivalModel(self.nodes, tuple(r * factor for r in self.rates), self.dest_weights)


@dataclass(frozen=True)
class ArrivalVector:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class Arrival:
    time_s: float
    node: int
    dropoff: int


def sample_arrivals(model: ArrivalModel, duration_s: float, rng: np.random.Generator) -> list[Arrival]:
    """Merge independent per-node Poisson processes over ``[0, duration_s)``.

    Each node draws its count from Poisson(rate * duration) and places that many
    uniform event times, which is equivalent to exponential inter-arrival gaps.
    Drop-off nodes are drawn after all times so that they never perturb the
    arrival stream.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    events = []
    for node, rate in zip(model.nodes, model.rates):
        if rate <= 0:
            continue
        k = rng.poisson(rate * duration_s)
        for t in rng.uniform(0.0, duration_s, size=k):
            events.append((float(t), node))
    events.sort()
    out = []
    pos = {n: i for i, n in enumerate(model.nodes)}
    nodes = np.asarray(model.nodes)
    for t, node in events:
        if model.dest_weights is not None:
            w = np.asarray(model.dest_weights[pos[node]], dtype=float).copy()
        else:
            w = np.ones(len(nodes))
        w[pos[node]] = 0.0
        dest = int(rng.choice(nodes, p=w / w.sum()))
        out.append(Arrival(t, node, dest))
    return out


def enumerate_arrival_vectors(model: ArrivalModel, n_arrivals: int) -> list[ArrivalVector]:
    """All count vectors summing to ``n_arrivals`` over the non-zero-rate nodes."""
    if n_arrivals < 1:
        raise ValueError("n_arrivals must be >= 1")
    active = [i for i, r in enumerate(model.rates) if r > 0]
    out = []
    for combo in combinations_with_replacement(active, n_arrivals):
        counts = [0] * len(model.rates)
        for i in combo:
            counts[i] += 1
        out.append(ArrivalVector(tuple(counts)))
    return out


def arrival_probability(model: ArrivalModel, a: ArrivalVector) -> float:
    """Multinomial probability of the arrival vector given the node rates."""
    total = model.total_rate
    if total <= 0:
        raise ValueError("total arrival rate is zero")
    logp = math.lgamma(a.total + 1)
    for k, rate in zip(a.counts, model.rates):
        if k == 0:
            continue
        q = rate / total
        if q <= 0:
            return 0.0
        logp += k * math.log(q) - math.lgamma(k + 1)
    return math.exp(logp)


def multiset_count(n_items: int, k: int) -> int:
    """Number of size-k multisets over n items, C(n + k - 1, k)."""
    return math.comb(n_items + k - 1, k)
