"""Scenario generation, exhaustive oracle and experiment driver."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .composer import (
    ComposedService,
    PricingParams,
    SwarmComposer,
    replay,
)
from .core import (
    Node,
    ProviderConfig,
    Request,
    Segment,
    SkywayNetwork,
    TimeWindow,
    load_network,
    NetworkValidationError,
)
from .energy import EnergyParams
from .fcfs import allocate_fcfs
from .rl import QLearningAllocator
from .schedule import AllocEntry, Schedule, arrival_slots, skip_reason

log = logging.getLogger(__name__)

METHODS = ("rl", "fcfs", "oracle")
RL_KEYS = ("episodes", "alpha", "gamma", "epsilon_start", "epsilon_end", "decay_fraction",
           "slot_granularity", "encoder", "exact_max_requests", "profit_bins")


class GenerationError(RuntimeError):
    """A connected network could not be drawn within the attempt budget."""


class OracleLimitError(ValueError):
    """Instance too large for exhaustive search."""


@dataclass
class Scenario:
    network: SkywayNetwork
    provider: ProviderConfig
    requests: List[Request]
    energy: EnergyParams = field(default_factory=EnergyParams)
    pricing: PricingParams = field(default_factory=PricingParams)
    rl: Dict = field(default_factory=dict)
    seed: int = 0
    generator: Optional[Dict] = None
    network_file: Optional[str] = None

    def __post_init__(self):
        if self.provider.source not in self.network.nodes:
            raise NetworkValidationError(f"source {self.provider.source} not in network")
        ids = [r.id for r in self.requests]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate request ids")
        unknown = set(self.rl) - set(RL_KEYS)
        if unknown:
            raise ValueError(f"unknown rl keys: {sorted(unknown)}")

    def composer(self, congestion=True) -> SwarmComposer:
        return SwarmComposer(self.network, self.provider, self.energy, self.pricing,
                             congestion).fit()

    def compose(self, congestion=True) -> List[ComposedService]:
        return self.composer(congestion).transform(self.requests)

    def with_fleet(self, fleet_size: int) -> "Scenario":
        return replace(self, provider=replace(self.provider, fleet_size=fleet_size))

    def with_requests(self, n: int) -> "Scenario":
        if n > len(self.requests):
            raise ValueError(f"scenario holds only {len(self.requests)} requests")
        return replace(self, requests=self.requests[:n])

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> Dict:
        doc = {
            "seed": self.seed,
            "provider": asdict(self.provider),
            "energy": self.energy.to_dict(),
            "pricing": self.pricing.to_dict(),
            "rl": dict(self.rl),
            "requests": [{"id": r.id, "dest": r.dest, "packages": list(r.packages),
                          "window": [r.window.st, r.window.et]} for r in self.requests],
        }
        if self.network_file:
            doc["network"] = {"file": self.network_file}
        else:
            doc["network"] = {
                "nodes": [[n.id, n.position[0], n.position[1], n.pads]
                          for n in sorted(self.network.nodes.values(), key=lambda n: n.id)],
                "edges": [[s.u, s.v, s.dist] for s in self.network.segments],
            }
        if self.generator is not None:
            doc["generator"] = dict(self.generator)
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: Dict, base_dir=None) -> "Scenario":
        net_doc = doc["network"]
        network_file = None
        if "file" in net_doc:
            network_file = net_doc["file"]
            p = Path(network_file)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            network = load_network(p)
        else:
            network = SkywayNetwork(
                [Node(int(i), (float(x), float(y)), int(p)) for i, x, y, p in net_doc["nodes"]],
                [Segment(int(u), int(v), float(d)) for u, v, d in net_doc["edges"]])
        requests = [Request(int(r["id"]), int(r["dest"]), tuple(r["packages"]),
                            TimeWindow(*map(float, r["window"]))) for r in doc["requests"]]
        return cls(network=network, provider=ProviderConfig(**doc["provider"]),
                   requests=requests, energy=EnergyParams(**doc.get("energy", {})),
                   pricing=PricingParams(**doc.get("pricing", {})), rl=doc.get("rl", {}),
                   seed=int(doc.get("seed", 0)), generator=doc.get("generator"),
                   network_file=network_file)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)


# -- generation --------------------------------------------------------------

def random_geometric_network(n_nodes: int, rng: np.random.Generator, side: float,
                             radius: float, pad_range=(1, 4), max_attempts: int = 100):
    """Connected random geometric graph on a square of `side` meters."""
    lo, hi = pad_range
    for _ in range(max_attempts):
        pos = np.round(rng.uniform(0.0, side, size=(n_nodes, 2)), 1)
        pads = rng.integers(lo, hi + 1, size=n_nodes)
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        iu, ju = np.nonzero(np.triu((dist <= radius) & (dist > 0), k=1))
        nodes = [Node(i, (float(pos[i, 0]), float(pos[i, 1])), int(pads[i]))
                 for i in range(n_nodes)]
        segments = [Segment(int(i), int(j), float(dist[i, j])) for i, j in zip(iu, ju)]
        try:
            return SkywayNetwork(nodes, segments)
        except NetworkValidationError:
            continue
    raise GenerationError(f"no connected {n_nodes}-node network after {max_attempts} attempts")


def generate_scenario(n_nodes: int = 129, n_requests: int = 50, fleet_size: int = 30,
                      pad_range=(1, 4), seed: int = 0, n_windows: int = 8,
                      window_width: float = 3600.0, side: float = 10000.0,
                      radius: Optional[float] = None, source_pads: Optional[int] = 4,
                      max_packages: int = 5, max_weight: float = 1.4,
                      network: Optional[SkywayNetwork] = None,
                      energy: Optional[EnergyParams] = None,
                      pricing: Optional[PricingParams] = None,
                      rl: Optional[Dict] = None) -> Scenario:
    """Draw a seeded scenario: network, pads, requests and windows.

    The source is the node nearest the centre of the area. When `network`
    is given it is used as-is and only requests are drawn.
    """
    if n_requests < 1:
        raise ValueError("n_requests must be >= 1")
    rng = np.random.default_rng(seed)
    gen = {"n_nodes": n_nodes, "n_requests": n_requests, "fleet_size": fleet_size,
           "pad_range": list(pad_range), "seed": seed, "n_windows": n_windows,
           "window_width": window_width, "side": side, "radius": radius,
           "source_pads": source_pads, "max_packages": max_packages, "max_weight": max_weight}
    if network is None:
        if n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if radius is None:
            # mean degree around 9 on the unit-density square
            radius = side * math.sqrt(9.0 / (math.pi * n_nodes))
        network = random_geometric_network(n_nodes, rng, side, radius, pad_range)
        gen["radius"] = radius
        centre = np.array([side / 2, side / 2])
        source = min(network.nodes.values(),
                     key=lambda n: (float(np.hypot(*(np.array(n.position) - centre))), n.id)).id
        if source_pads is not None:
            nodes = [replace(n, pads=source_pads) if n.id == source else n
                     for n in network.nodes.values()]
            network = SkywayNetwork(nodes, network.segments)
    else:
        gen = None
        ids = sorted(network.nodes)
        source = ids[int(rng.integers(len(ids)))]
    others = sorted(i for i in network.nodes if i != source)
    requests = []
    for rid in range(n_requests):
        dest = others[int(rng.integers(len(others)))]
        k = int(rng.integers(1, max_packages + 1))
        # uniform on (0, max_weight], gram resolution
        weights = tuple(max(round(max_weight - float(u), 3), 0.001)
                        for u in rng.uniform(0.0, max_weight, size=k))
        w = int(rng.integers(n_windows))
        requests.append(Request(rid, dest, weights,
                                TimeWindow(w * window_width, (w + 1) * window_width)))
    provider = ProviderConfig(fleet_size=fleet_size, source=source,
                              max_swarm_size=max_packages,
                              day_length=n_windows * window_width,
                              max_package_weight=max_weight)
    return Scenario(network=network, provider=provider, requests=requests,
                    energy=energy or EnergyParams(), pricing=pricing or PricingParams(),
                    rl=dict(rl or {}), seed=seed, generator=gen)


def regenerate(scenario: Scenario, **changes) -> Scenario:
    """Redraw a generated scenario with some generator settings changed."""
    if scenario.generator is None:
        raise ValueError("scenario was not produced by the generator")
    cfg = dict(scenario.generator)
    cfg.update(changes)
    cfg["pad_range"] = tuple(cfg["pad_range"])
    return generate_scenario(**cfg, energy=scenario.energy, pricing=scenario.pricing,
                             rl=scenario.rl)


# -- oracle ------------------------------------------------------------------

def oracle_optimal(services: Sequence[ComposedService], fleet_size: int,
                   slot_granularity: float = 600.0, max_requests: int = 6,
                   max_slots: int = 4) -> Schedule:
    """Maximum-profit schedule by exhaustive search over subsets and slots.

    Ties on profit go to the lexicographically smallest set of request ids,
    then to the earliest slots.
    """
    cands = []
    for s in sorted((s for s in services if s.eligible), key=lambda s: s.request_id):
        slots = arrival_slots(s, slot_granularity) if s.swarm_size <= fleet_size else []
        if len(slots) > max_slots:
            raise OracleLimitError(f"request {s.request_id} has {len(slots)} slots > {max_slots}")
        if slots:
            cands.append((s, slots))
    if len(cands) > max_requests:
        raise OracleLimitError(f"{len(cands)} eligible requests > {max_requests}")

    suffix = [0.0] * (len(cands) + 1)
    for i in range(len(cands) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + cands[i][0].profit
    best = None
    current = Schedule()

    def search(i, profit):
        nonlocal best
        if i == len(cands):
            ids = tuple(current.request_ids)
            if best is None or profit > best[0] or (profit == best[0] and ids < best[1]):
                best = (profit, ids, list(current.entries))
            return
        if best is not None and profit + suffix[i] < best[0]:
            return
        s, slots = cands[i]
        for a in slots:
            d = a - s.at
            e = AllocEntry(s.request_id, d, d + s.rtt, s.swarm_size, a, s.profit)
            if current.fits(e, fleet_size):
                current.add(e)
                search(i + 1, profit + s.profit)
                current.entries.pop()
        search(i + 1, profit)

    search(0, 0.0)
    out = Schedule(best[2])
    out.skipped = {s.request_id: skip_reason(s) for s in services
                   if s.request_id not in out.request_ids}
    return out


# -- experiments -------------------------------------------------------------

@dataclass
class ExperimentReport:
    profit: Dict[str, float] = field(default_factory=dict)
    seconds: Dict[str, float] = field(default_factory=dict)
    served: Dict[str, int] = field(default_factory=dict)
    schedules: Dict[str, Schedule] = field(default_factory=dict)
    services: List[ComposedService] = field(default_factory=list)
    reward_history: Optional[np.ndarray] = None
    encoder: Optional[str] = None

    def method_summary(self, method: str) -> Dict:
        out = {"method": method, "profit": self.profit[method],
               "seconds": self.seconds[method], "served": self.served[method],
               "eligible": sum(s.eligible for s in self.services),
               "eligible_profit": math.fsum(s.profit for s in self.services if s.eligible)}
        if method == "rl":
            out["encoder"] = self.encoder
        return out


def rl_allocator(scenario: Scenario, **overrides) -> QLearningAllocator:
    params = dict(scenario.rl)
    params.update({k: v for k, v in overrides.items() if v is not None})
    params.setdefault("seed", scenario.seed)
    return QLearningAllocator(**params)


def run_experiment(scenario: Scenario, methods: Sequence[str] = ("rl", "fcfs"),
                   outdir=None, services: Optional[List[ComposedService]] = None,
                   **rl_overrides) -> ExperimentReport:
    """Compose once, run each allocation method and optionally write CSVs.

    Timings cover the allocation phase only.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    services = scenario.compose() if services is None else services
    fleet = scenario.provider.fleet_size
    gran = rl_overrides.get("slot_granularity") or scenario.rl.get("slot_granularity", 600.0)
    report = ExperimentReport(services=services)
    for m in methods:
        t0 = time.perf_counter()
        if m == "rl":
            est = rl_allocator(scenario, **rl_overrides).fit(services, scenario.provider)
            sched = est.schedule_
            report.reward_history = est.reward_history_
            report.encoder = est.encoder_.name
        elif m == "fcfs":
            sched = allocate_fcfs(services, fleet, gran)
        else:
            sched = oracle_optimal(services, fleet, gran)
        report.seconds[m] = time.perf_counter() - t0
        report.schedules[m] = sched
        report.profit[m] = sched.total_profit
        report.served[m] = len(sched)
        log.info("%s: profit %.3f, %d served, %.3fs", m, sched.total_profit, len(sched),
                 report.seconds[m])
    if outdir is not None:
        write_outputs(scenario, report, outdir)
    return report


def write_compose_csv(services: Sequence[ComposedService], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["request_id", "swarm_size", "at", "rtt", "profit", "out_path", "back_path"])
        for s in services:
            w.writerow([s.request_id, s.swarm_size, repr(s.at), repr(s.rtt), repr(s.profit),
                        "|".join(map(str, s.out_path)), "|".join(map(str, s.back_path))])


def read_compose_csv(path) -> List[Dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "return"])
        for i, r in enumerate(history):
            w.writerow([i, repr(float(r))])


def write_outputs(scenario: Scenario, report: ExperimentReport, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scenario.save(outdir / "scenario.json")
    write_compose_csv(report.services, outdir / "compose.csv")
    for m, sched in report.schedules.items():
        sub = outdir / m
        sub.mkdir(exist_ok=True)
        sched.to_csv(sub / "schedule.csv")
        sched.skipped_to_csv(sub / "skipped.csv")
        if m == "rl" and report.reward_history is not None:
            write_history_csv(report.reward_history, sub / "reward_history.csv")
        (sub / "report.json").write_text(json.dumps(report.method_summary(m), indent=1,
                                                    sort_keys=True) + "\n", encoding="utf-8")


# -- verification ------------------------------------------------------------

def composition_problems(scenario: Scenario, services: Sequence[ComposedService]) -> List[str]:
    """Battery safety, AT <= RTT, congestion monotonicity and stop bounds."""
    problems = []
    by_id = {r.id: r for r in scenario.requests}
    n_nodes = len(scenario.network)
    for s in services:
        if not s.servable:
            continue
        req = by_id[s.request_id]
        at, rtt, low = replay(scenario.network, req, s, scenario.energy, scenario.provider)
        free_at, free_rtt, _ = replay(scenario.network, req, s, scenario.energy,
                                      scenario.provider, contending=0)
        tag = f"request {s.request_id}"
        if low < -1e-9:
            problems.append(f"{tag}: battery dropped to {low}")
        if not 0 < s.at <= s.rtt:
            problems.append(f"{tag}: AT {s.at} vs RTT {s.rtt}")
        if not (math.isclose(at, s.at, rel_tol=1e-9) and math.isclose(rtt, s.rtt, rel_tol=1e-9)):
            problems.append(f"{tag}: replay timings differ from composition")
        if free_rtt > s.rtt + 1e-9:
            problems.append(f"{tag}: congestion-free RTT {free_rtt} exceeds {s.rtt}")
        if len(s.out_stops) > n_nodes or len(s.back_stops) > n_nodes:
            problems.append(f"{tag}: more stops than nodes")
        if s.out_path[0] != scenario.provider.source or s.out_path[-1] != req.dest:
            problems.append(f"{tag}: outbound path endpoints wrong")
    return problems


def verify_outdir(outdir) -> List[str]:
    """Re-check every emitted artifact in an output directory."""
    outdir = Path(outdir)
    scenario = Scenario.load(outdir / "scenario.json")
    services = scenario.compose()
    problems = composition_problems(scenario, services)
    rows = read_compose_csv(outdir / "compose.csv")
    by_id = {s.request_id: s for s in services}
    if len(rows) != len(services):
        problems.append("compose.csv row count differs from recomposition")
    for row in rows:
        s = by_id.get(int(row["request_id"]))
        if s is None:
            problems.append(f"compose.csv: unknown request {row['request_id']}")
            continue
        if row["profit"] != repr(s.profit) or row["rtt"] != repr(s.rtt) \
                or row["at"] != repr(s.at):
            problems.append(f"compose.csv: request {s.request_id} differs from recomposition")
    fleet = scenario.provider.fleet_size
    for sub in sorted(p for p in outdir.iterdir() if p.is_dir() and p.name in METHODS):
        sched = Schedule.from_csv(sub / "schedule.csv")
        problems += [f"{sub.name}: {p}" for p in sched.check(services, fleet)]
        csv_profit = {int(r["request_id"]): float(r["profit"]) for r in rows}
        recomputed = math.fsum(csv_profit[rid] for rid in sched.request_ids)
        summary = json.loads((sub / "report.json").read_text(encoding="utf-8"))
        claimed = summary.get("profit")
        if claimed is None or not math.isclose(recomputed, claimed, rel_tol=1e-9, abs_tol=1e-9):
            problems.append(f"{sub.name}: reported profit {claimed} != recomputed {recomputed}")
    return problems


def sweep(scenario: Scenario, vary: str, values: Sequence[int],
          methods: Sequence[str] = ("rl", "fcfs"), seeds: Optional[Sequence[int]] = None,
          n_jobs: int = 1, **rl_overrides) -> List[Dict]:
    """Run experiments over request counts or fleet sizes; one row per point."""
    if vary not in ("requests", "fleet"):
        raise ValueError("vary must be 'requests' or 'fleet'")
    seeds = list(seeds) if seeds else [scenario.seed]

    def point(seed, value):
        base = scenario if seed == scenario.seed else regenerate(scenario, seed=seed)
        sc = base.with_requests(value) if vary == "requests" else base.with_fleet(value)
        rep = run_experiment(sc, methods, **rl_overrides)
        eligible = sum(s.profit for s in rep.services if s.eligible)
        return [{"vary": vary, "value": value, "seed": seed, "method": m,
                 "encoder": rep.encoder if m == "rl" else "",
                 "profit": rep.profit[m], "served": rep.served[m],
                 "seconds": rep.seconds[m], "eligible_profit": eligible} for m in methods]

    jobs = [(s, v) for s in seeds for v in values]
    if n_jobs == 1:
        results = [point(s, v) for s, v in jobs]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(point)(s, v) for s, v in jobs)
    return [row for rows in results for row in rows]


def write_sweep_csv(rows: Sequence[Dict], path) -> None:
    cols = ["vary", "value", "seed", "method", "encoder", "profit", "served", "seconds",
            "eligible_profit"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
