"""First-come-first-served baseline allocator."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .composer import ComposedService
from .schedule import AllocEntry, Schedule, arrival_slots, skip_reason


class _Occupancy:
    """Drones in use at every candidate departure instant.

    Occupancy only steps up at departures, so the peak over a candidate's
    interval is the maximum over the candidate departures inside it.
    """

    def __init__(self, departures: Sequence[float], fleet_size: int):
        self.points = np.unique(np.asarray(departures, dtype=float))
        self.occ = np.zeros(len(self.points), dtype=np.int64)
        self.fleet_size = fleet_size

    def _span(self, depart: float, release: float):
        lo = int(np.searchsorted(self.points, depart, side="left"))
        hi = int(np.searchsorted(self.points, release, side="left"))
        return lo, hi

    def fits(self, depart: float, release: float, drones: int) -> bool:
        lo, hi = self._span(depart, release)
        return int(self.occ[lo:hi].max()) + drones <= self.fleet_size

    def add(self, depart: float, release: float, drones: int) -> None:
        lo, hi = self._span(depart, release)
        self.occ[lo:hi] += drones


def allocate_fcfs(services: Sequence[ComposedService], fleet_size: int,
                  slot_granularity: float = 600.0) -> Schedule:
    """Serve requests in arrival order, each at its earliest feasible slot.

    A request that cannot be placed anywhere in its window is skipped; no
    later request displaces an earlier one.
    """
    schedule = Schedule()
    slots = {s.request_id: arrival_slots(s, slot_granularity) for s in services if s.eligible}
    timeline = _Occupancy([a - s.at for s in services if s.eligible
                           for a in slots[s.request_id]], fleet_size)
    for s in services:
        if not s.eligible:
            schedule.skipped[s.request_id] = skip_reason(s)
            continue
        if s.swarm_size > fleet_size:
            schedule.skipped[s.request_id] = "swarm larger than fleet"
            continue
        if not slots[s.request_id]:
            schedule.skipped[s.request_id] = "no slot with departure inside the day"
            continue
        for a in slots[s.request_id]:
            depart = a - s.at
            if timeline.fits(depart, depart + s.rtt, s.swarm_size):
                timeline.add(depart, depart + s.rtt, s.swarm_size)
                schedule.add(AllocEntry(s.request_id, depart, depart + s.rtt,
                                        s.swarm_size, a, s.profit))
                break
        else:
            schedule.skipped[s.request_id] = "drones occupied for every slot"
    return schedule


class FCFSAllocator(BaseEstimator):
    """Estimator wrapper around :func:`allocate_fcfs`."""

    def __init__(self, slot_granularity=600.0):
        self.slot_granularity = slot_granularity

    def fit(self, services, provider):
        fleet = getattr(provider, "fleet_size", provider)
        self.schedule_ = allocate_fcfs(services, int(fleet), self.slot_granularity)
        return self

    def predict(self, services=None) -> Schedule:
        check_is_fitted(self, "schedule_")
        return self.schedule_

    def fit_predict(self, services, provider) -> Schedule:
        return self.fit(services, provider).schedule_
