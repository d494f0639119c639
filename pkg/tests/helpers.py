"""Builders for hand-made composed services and brute-force references."""

import itertools

from sdaas.composer import ComposedService
from sdaas.core import TimeWindow
from sdaas.schedule import AllocEntry, arrival_slots


def svc(rid, drones, at, rtt, profit, st=0.0, et=3600.0):
    return ComposedService(request_id=rid, swarm_size=drones, window=TimeWindow(st, et),
                           out_path=(0, 1), back_path=(1, 0), at=at, rtt=rtt, profit=profit)


def recount_ok(entries, fleet):
    """Instant-by-instant occupancy on every event point."""
    events = sorted({e.depart for e in entries} | {e.release for e in entries})
    return all(sum(e.drones_used for e in entries if e.depart <= t < e.release) <= fleet
               for t in events)


def brute_force_best(services, fleet, granularity):
    """Enumerate every subset and slot assignment; return the best profit."""
    elig = [s for s in services if s.eligible]
    options = [[None] + arrival_slots(s, granularity) for s in elig]
    best = 0.0
    for combo in itertools.product(*options):
        entries = [AllocEntry(s.request_id, a - s.at, a - s.at + s.rtt, s.swarm_size, a,
                              s.profit) for s, a in zip(elig, combo) if a is not None]
        if recount_ok(entries, fleet):
            best = max(best, sum(e.profit for e in entries))
    return best


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
