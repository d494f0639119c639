"""Allocation entries, schedules and the shared action grid.

A request served with arrival slot ``a`` occupies its drones on the
half-open interval ``[a - at, a - at + rtt)``. Occupancy is piecewise
constant, so capacity only needs checking at departure instants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from numba import njit

from .composer import ComposedService


@dataclass(frozen=True, order=True)
class Action:
    request_id: int
    arrival_slot: float


@dataclass(frozen=True)
class AllocEntry:
    request_id: int
    depart: float
    release: float
    drones_used: int
    arrival: float = float("nan")
    profit: float = 0.0

    def __post_init__(self):
        if self.depart < 0:
            raise ValueError(f"request {self.request_id}: departs before the day starts")
        if self.drones_used < 1:
            raise ValueError("drones_used must be >= 1")


def peak_occupancy(entries: Iterable[AllocEntry]) -> int:
    """Maximum simultaneous drone use, evaluated at every departure instant."""
    entries = list(entries)
    peak = 0
    for t in {e.depart for e in entries}:
        peak = max(peak, sum(e.drones_used for e in entries if e.depart <= t < e.release))
    return peak


@dataclass
class Schedule:
    entries: List[AllocEntry] = field(default_factory=list)
    skipped: Dict[int, str] = field(default_factory=dict)

    @property
    def total_profit(self) -> float:
        # fsum is order independent: equal sets give bit-equal totals
        return math.fsum(e.profit for e in self.entries)

    @property
    def request_ids(self) -> List[int]:
        return [e.request_id for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def fits(self, entry: AllocEntry, fleet_size: int) -> bool:
        if entry.request_id in self.request_ids:
            return False
        overlapping = [e for e in self.entries
                       if e.depart < entry.release and entry.depart < e.release]
        return peak_occupancy(overlapping + [entry]) <= fleet_size

    def add(self, entry: AllocEntry) -> None:
        self.entries.append(entry)

    def check(self, services: Sequence[ComposedService], fleet_size: int) -> List[str]:
        """Invariant violations; empty when the schedule is sound."""
        by_id = {s.request_id: s for s in services}
        problems = []
        ids = self.request_ids
        if len(ids) != len(set(ids)):
            problems.append("a request is allocated more than once")
        peak = peak_occupancy(self.entries)
        if peak > fleet_size:
            problems.append(f"occupancy {peak} exceeds fleet of {fleet_size}")
        for e in self.entries:
            s = by_id.get(e.request_id)
            if s is None or not s.eligible:
                problems.append(f"request {e.request_id} is not eligible")
                continue
            arrival = e.depart + s.at
            if not (s.window.st - 1e-6 <= arrival <= s.window.et + 1e-6):
                problems.append(f"request {e.request_id}: arrival {arrival} outside window")
            if abs(e.release - e.depart - s.rtt) > 1e-6:
                problems.append(f"request {e.request_id}: release != depart + rtt")
            if e.drones_used != s.swarm_size:
                problems.append(f"request {e.request_id}: wrong drone count")
            if abs(e.profit - s.profit) > 1e-9:
                problems.append(f"request {e.request_id}: profit mismatch")
        return problems

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["request_id", "depart", "arrival", "release", "drones_used", "profit"])
            for e in sorted(self.entries, key=lambda e: (e.depart, e.request_id)):
                w.writerow([e.request_id, repr(e.depart), repr(e.arrival), repr(e.release),
                            e.drones_used, repr(e.profit)])

    def skipped_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["request_id", "reason"])
            for rid, reason in sorted(self.skipped.items()):
                w.writerow([rid, reason])

    @classmethod
    def from_csv(cls, path) -> "Schedule":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls([AllocEntry(int(r["request_id"]), float(r["depart"]), float(r["release"]),
                               int(r["drones_used"]), float(r["arrival"]), float(r["profit"]))
                    for r in rows])


def arrival_slots(service: ComposedService, granularity: float) -> List[float]:
    """In-window arrival instants on the slot grid whose departure is >= 0."""
    if granularity <= 0:
        raise ValueError("slot granularity must be positive")
    st, et = service.window.st, service.window.et
    n = int(np.floor((et - st) / granularity + 1e-9))
    slots = [st + k * granularity for k in range(n + 1)]
    return [a for a in slots if a - service.at >= 0]


class ActionGrid:
    """Vectorized table of every (request, arrival slot) action.

    Actions are ordered by (request_id, arrival_slot), so the lowest index
    is also the canonical tie-break winner.
    """

    def __init__(self, services: Sequence[ComposedService], fleet_size: int,
                 slot_granularity: float = 600.0):
        self.fleet_size = int(fleet_size)
        self.services = {s.request_id: s for s in services if s.eligible}
        acts = []
        for rid in sorted(self.services):
            s = self.services[rid]
            if s.swarm_size > fleet_size:
                continue
            for a in arrival_slots(s, slot_granularity):
                acts.append((rid, a))
        self.actions = [Action(rid, a) for rid, a in acts]
        self.request_ids = sorted({rid for rid, _ in acts})
        req_index = {rid: i for i, rid in enumerate(self.request_ids)}
        self.req = np.array([req_index[rid] for rid, _ in acts], dtype=np.int64)
        self.arrival = np.array([a for _, a in acts], dtype=float)
        self.depart = np.array([a - self.services[rid].at for rid, a in acts], dtype=float)
        self.release = np.array([d + self.services[rid].rtt
                                 for (rid, _), d in zip(acts, self.depart)], dtype=float)
        self.drones = np.array([self.services[rid].swarm_size for rid, _ in acts], dtype=np.int64)
        self.profit = np.array([self.services[rid].profit for rid, _ in acts], dtype=float)
        self.by_request = [np.flatnonzero(self.req == i) for i in range(len(self.request_ids))]
        n = len(acts)
        if n:
            self.overlap = ((self.depart[:, None] < self.release[None, :])
                            & (self.depart[None, :] < self.release[:, None]))
        else:
            self.overlap = np.zeros((0, 0), dtype=bool)
        # occupancy only steps up at departures, so candidate departures
        # are the only instants where a peak can occur
        self.points = np.unique(self.depart)
        self.lo = np.searchsorted(self.points, self.depart, side="left")
        self.hi = np.searchsorted(self.points, self.release, side="left")
        # overlap neighbours in CSR form; these are the only actions a
        # commit can invalidate through capacity
        rows, cols = np.nonzero(self.overlap)
        self.nbr = cols.astype(np.int64)
        self.nbr_ptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        self.first = np.array([idx[0] for idx in self.by_request], dtype=np.int64)
        self.last = np.array([idx[-1] + 1 for idx in self.by_request], dtype=np.int64)

    def __len__(self):
        return len(self.actions)

    @property
    def n_requests(self) -> int:
        return len(self.request_ids)

    def entry(self, i: int) -> AllocEntry:
        rid = self.actions[i].request_id
        return AllocEntry(rid, float(self.depart[i]), float(self.release[i]),
                          int(self.drones[i]), float(self.arrival[i]), float(self.profit[i]))

    def initial_mask(self) -> np.ndarray:
        return np.ones(len(self), dtype=bool)

    def initial_occupancy(self) -> np.ndarray:
        """Drones in use at each candidate departure instant."""
        return np.zeros(len(self.points), dtype=np.int64)

    def feasible(self, candidates: np.ndarray, chosen: Sequence[int]) -> np.ndarray:
        """Capacity feasibility of each candidate action given chosen actions.

        Recounts occupancy from scratch; the incremental path in `apply`
        must agree with it.
        """
        candidates = np.asarray(candidates, dtype=np.int64)
        if not len(chosen) or not len(candidates):
            return self.drones[candidates] <= self.fleet_size
        e = np.asarray(chosen, dtype=np.int64)
        de, re_, ke = self.depart[e], self.release[e], self.drones[e]
        dc, rc = self.depart[candidates], self.release[candidates]
        at_dc = ((de[None, :] <= dc[:, None]) & (dc[:, None] < re_[None, :])) @ ke
        at_de = ((de[None, :] <= de[:, None]) & (de[:, None] < re_[None, :])) @ ke
        inside = (dc[:, None] < de[None, :]) & (de[None, :] < rc[:, None])
        peak = np.maximum(at_dc, np.where(inside, at_de[None, :], 0).max(axis=1))
        return peak + self.drones[candidates] <= self.fleet_size

    def apply(self, mask: np.ndarray, chosen: List[int], i: int,
              occupancy: Optional[np.ndarray] = None) -> None:
        """Commit action `i`, invalidating affected actions in place.

        With an `occupancy` array (from `initial_occupancy`) the update is
        incremental; otherwise candidates are recounted with `feasible`.
        """
        chosen.append(i)
        if occupancy is None:
            mask[self.by_request[self.req[i]]] = False
            cand = np.flatnonzero(mask & self.overlap[i])
            if len(cand):
                mask[cand] = self.feasible(cand, chosen)
            return
        r = self.req[i]
        _commit(i, self.first[r], self.last[r], mask, occupancy, self.lo, self.hi,
                self.drones, self.fleet_size, self.nbr, self.nbr_ptr)

    def schedule(self, chosen: Sequence[int]) -> Schedule:
        return Schedule([self.entry(i) for i in chosen])


def skip_reason(service: ComposedService) -> str:
    if not service.servable:
        return f"unservable: {service.error}"
    if not service.profit > 0:
        return "non-positive profit"
    return "not selected"


@njit(cache=True)
def _commit(i, first, last, mask, occ, lo, hi, drones, fleet, nbr, nbr_ptr):
    # action i covers departure points lo[i]..hi[i]-1; occupancy only rises
    # there, and every still-valid action was feasible before, so only the
    # shared points need a recount
    for p in range(lo[i], hi[i]):
        occ[p] += drones[i]
    for j in range(first, last):
        mask[j] = False
    for k in range(nbr_ptr[i], nbr_ptr[i + 1]):
        j = nbr[k]
        if mask[j]:
            a = max(lo[i], lo[j])
            b = min(hi[i], hi[j])
            peak = 0
            for p in range(a, b):
                if occ[p] > peak:
                    peak = occ[p]
            if peak + drones[j] > fleet:
                mask[j] = False
