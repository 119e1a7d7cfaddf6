"""Stops, schedules and the per-vehicle planning snapshot shared by scheduling code."""

from __future__ import annotations

from dataclasses import dataclass, field

PICKUP = "pickup"
DROPOFF = "dropoff"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Customer:
    id: int
    pickup: int
    dropoff: int
    request_time_s: float = 0.0
    assigned_time_s: float | None = None

    def __post_init__(self):
        if self.pickup == self.dropoff:
            raise ValueError(f"customer {self.id}: pickup equals dropoff")
        if self.assigned_time_s is not None and self.assigned_time_s < self.request_time_s:
            raise ValueError(f"customer {self.id}: assigned before request")


@dataclass(frozen=True)
class Stop:
    node: int
    kind: str
    customer_id: int


@dataclass(frozen=True)
class Schedule:
    """Ordered stop list for one vehicle with capacity ``capacity``.

    Customers whose drop-off appears without a pickup are already onboard.
    """

    stops: tuple[Stop, ...] = ()
    capacity: int = 1

    def __len__(self):
        return len(self.stops)

    def __iter__(self):
        return iter(self.stops)

    def initial_onboard(self) -> int:
        picked = {s.customer_id for s in self.stops if s.kind == PICKUP}
        return sum(1 for s in self.stops if s.kind == DROPOFF and s.customer_id not in picked)

    def load_profile(self) -> list[int]:
        """Onboard count after each stop, starting from the initial load."""
        load = self.initial_onboard()
        out = []
        for s in self.stops:
            load += 1 if s.kind == PICKUP else -1
            out.append(load)
        return out

    def customer_ids(self) -> set[int]:
        return {s.customer_id for s in self.stops}

    def index_of(self, customer_id: int, kind: str) -> int:
        for i, s in enumerate(self.stops):
            if s.customer_id == customer_id and s.kind == kind:
                return i
        return -1

    def validate(self):
        seen_p, seen_d = set(), set()
        for s in self.stops:
            if s.kind == PICKUP:
                if s.customer_id in seen_p or s.customer_id in seen_d:
                    raise ScheduleError(f"customer {s.customer_id}: pickup repeated or after dropoff")
                seen_p.add(s.customer_id)
            elif s.kind == DROPOFF:
                if s.customer_id in seen_d:
                    raise ScheduleError(f"customer {s.customer_id}: dropoff repeated")
                seen_d.add(s.customer_id)
            else:
                raise ScheduleError(f"unknown stop kind {s.kind!r}")
        if seen_p - seen_d:
            raise ScheduleError(f"pickups without dropoff: {sorted(seen_p - seen_d)}")
        if self.initial_onboard() > self.capacity:
            raise ScheduleError("initial load exceeds capacity")
        if any(x > self.capacity or x < 0 for x in self.load_profile()):
            raise ScheduleError("capacity exceeded")
        return True

    def is_valid(self) -> bool:
        try:
            return self.validate()
        except ScheduleError:
            return False


@dataclass(frozen=True)
class Boarded:
    """What is already realized for an onboard customer."""

    pickup_time_s: float
    odometer_m: float
    stops_so_far: int = 0


@dataclass
class VehiclePlan:
    """Planning snapshot of one vehicle.

    ``node`` is where the vehicle next stands still: its current node, or the
    end node of the link it is traversing, reached after ``offset_s`` seconds.
    ``odometer_m`` is the distance driven once it gets there.
    """

    vid: int
    node: int
    schedule: Schedule
    customers: dict[int, Customer] = field(default_factory=dict)
    onboard: dict[int, Boarded] = field(default_factory=dict)
    offset_s: float = 0.0
    odometer_m: float = 0.0

    @property
    def capacity(self) -> int:
        return self.schedule.capacity
