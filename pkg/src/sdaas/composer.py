"""Congestion-aware composition of a swarm's round trip for one request.

The swarm leaves the source fully charged, one package per drone. On each
leg it flies the shortest path nonstop whenever every drone can cover it;
otherwise it hops to the unvisited neighbour with the lowest
``flight time + node time + straight-to-goal estimate`` and recharges
fully there. Node times assume the worst case: another swarm of the
provider's remaining drones (capped at the maximum swarm size) charges
ahead of us on the same pads.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import (
    Node,
    ProviderConfig,
    Request,
    SkywayNetwork,
    Swarm,
    TimeWindow,
    validate_request,
)
from .energy import EnergyParams, can_reach, charge_time, energy_consumed


class UnservableRequest(RuntimeError):
    """No feasible route exists for a request."""


class NoFeasiblePath(UnservableRequest):
    """The greedy walk reached a node with no reachable unvisited neighbour."""


class UnreachableStop(UnservableRequest):
    """A recharge stop was attempted at a node without pads."""


@dataclass(frozen=True)
class PricingParams:
    revenue_per_package: float = 10.0
    cost_per_drone_second: float = 0.0005

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ComposedService:
    """Composition result for one request.

    ``at`` runs from departure until the packages land, ``rtt`` until the
    swarm is back and recharged at the source. Stops list the nodes where the
    swarm recharged on the way out and back (the final source recharge is
    implicit). Unservable requests carry ``error`` and NaN timings.
    """

    request_id: int
    swarm_size: int
    window: TimeWindow
    out_path: Tuple[int, ...] = ()
    back_path: Tuple[int, ...] = ()
    at: float = math.nan
    rtt: float = math.nan
    profit: float = math.nan
    out_stops: Tuple[int, ...] = ()
    back_stops: Tuple[int, ...] = ()
    error: Optional[str] = None

    @property
    def servable(self) -> bool:
        return self.error is None

    @property
    def eligible(self) -> bool:
        return self.servable and self.profit > 0


class Leg(NamedTuple):
    path: List[int]
    duration: float
    stops: List[int]


@dataclass
class LegState:
    swarm: Swarm
    elapsed: float = 0.0
    visited: set = field(default_factory=set)


def contending_size(swarm_size: int, cfg: ProviderConfig) -> int:
    return min(cfg.max_swarm_size, cfg.fleet_size - swarm_size)


def node_time(swarm: Swarm, node: Node, params: EnergyParams, cfg: ProviderConfig,
              contending: Optional[int] = None) -> float:
    """Worst-case time to recharge the whole swarm to full at `node`.

    Pads serve drones in parallel rounds whose length is the slowest drone's
    charge time; a contending swarm of ``contending`` drones (default: the
    provider's other drones, at most one max-size swarm) is served first.
    """
    ct_max = max(charge_time(d, 1.0, params) for d in swarm.drones)
    if ct_max == 0:
        return 0.0
    if node.pads <= 0:
        raise UnreachableStop(f"node {node.id} has no recharging pads")
    c = contending_size(len(swarm), cfg) if contending is None else contending
    return math.ceil((len(swarm) + c) / node.pads) * ct_max


def _fly(swarm: Swarm, dist: float, params: EnergyParams) -> None:
    for d in swarm.drones:
        # clamp float noise; can_reach already guaranteed feasibility
        d.battery = max(0.0, d.battery - energy_consumed(dist, d.payload, params))


def _recharge(swarm: Swarm) -> None:
    for d in swarm.drones:
        d.battery = 1.0


def compose_leg(net: SkywayNetwork, swarm: Swarm, start: int, goal: int,
                params: EnergyParams, cfg: ProviderConfig,
                contending: Optional[int] = None) -> Leg:
    """Walk the swarm from `start` to `goal`, recharging where needed.

    Mutates `swarm` (batteries and position). Raises NoFeasiblePath when the
    walk dead-ends.
    """
    to_goal = net._dijkstra(goal)[0]
    state = LegState(swarm, 0.0, {start})
    cur = start
    path = [start]
    stops = []
    while True:
        d_goal = to_goal[cur]
        if can_reach(swarm, d_goal, params):
            _fly(swarm, d_goal, params)
            state.elapsed += d_goal / params.speed
            path.extend(net.shortest_path(cur, goal)[1:])
            break
        best = None
        for nb in sorted(net.neighbors(cur)):
            if nb in state.visited or net.nodes[nb].pads <= 0:
                continue
            seg = net.edge_dist(cur, nb)
            if not can_reach(swarm, seg, params):
                continue
            trial = swarm.copy()
            _fly(trial, seg, params)
            nt = node_time(trial, net.nodes[nb], params, cfg, contending)
            score = (seg + to_goal[nb]) / params.speed + nt
            # strict < keeps the lowest id on ties
            if best is None or score < best[0]:
                best = (score, nb, seg, nt)
        if best is None:
            raise NoFeasiblePath(f"dead end at node {cur} while heading to {goal}")
        _, nb, seg, nt = best
        _fly(swarm, seg, params)
        _recharge(swarm)
        state.elapsed += seg / params.speed + nt
        state.visited.add(nb)
        path.append(nb)
        stops.append(nb)
        cur = nb
    swarm.at_node = goal
    return Leg(path, state.elapsed, stops)


def profit_of(swarm_size: int, rtt: float, pricing: PricingParams) -> float:
    return (pricing.revenue_per_package * swarm_size
            - pricing.cost_per_drone_second * swarm_size * rtt)


def compose(net: SkywayNetwork, request: Request, params: EnergyParams,
            cfg: ProviderConfig, pricing: PricingParams = PricingParams(),
            contending: Optional[int] = None) -> ComposedService:
    """Compose the round trip serving `request`.

    The swarm recharges at the destination only when it cannot fly straight
    back to the source. Raises UnservableRequest if no route exists.
    """
    src = cfg.source
    swarm = Swarm.loaded(request.packages, src)
    out = compose_leg(net, swarm, src, request.dest, params, cfg, contending)
    at = out.duration
    for d in swarm.drones:
        d.payload = 0.0
    elapsed = at
    back_stops = []
    if not can_reach(swarm, net.distance(request.dest, src), params) \
            and net.nodes[request.dest].pads > 0:
        elapsed += node_time(swarm, net.nodes[request.dest], params, cfg, contending)
        _recharge(swarm)
        back_stops.append(request.dest)
    back = compose_leg(net, swarm, request.dest, src, params, cfg, contending)
    elapsed += back.duration
    back_stops.extend(back.stops)
    rtt = elapsed + node_time(swarm, net.nodes[src], params, cfg, contending)
    n = request.swarm_size
    return ComposedService(
        request_id=request.id, swarm_size=n, window=request.window,
        out_path=tuple(out.path), back_path=tuple(back.path),
        at=at, rtt=rtt, profit=profit_of(n, rtt, pricing),
        out_stops=tuple(out.stops), back_stops=tuple(back_stops))


def unservable(request: Request, reason: str) -> ComposedService:
    return ComposedService(request.id, request.swarm_size, request.window, error=reason)


def replay(net: SkywayNetwork, request: Request, service: ComposedService,
           params: EnergyParams, cfg: ProviderConfig,
           contending: Optional[int] = None):
    """Re-fly a composed trip edge by edge along its recorded stops.

    Returns ``(at, rtt, min_battery)`` where ``min_battery`` is the lowest
    level any drone reached at any event point. Passing ``contending=0``
    retimes the identical route without congestion.
    """
    swarm = Swarm.loaded(request.packages, cfg.source)
    low = 1.0
    elapsed = 0.0

    def walk(path, stops):
        nonlocal elapsed, low
        pending = list(stops)
        for u, v in zip(path, path[1:]):
            seg = net.edge_dist(u, v)
            for d in swarm.drones:
                d.battery -= energy_consumed(seg, d.payload, params)
            low = min(low, min(d.battery for d in swarm.drones))
            elapsed += seg / params.speed
            if pending and v == pending[0]:
                pending.pop(0)
                for d in swarm.drones:
                    d.battery = max(d.battery, 0.0)
                elapsed += node_time(swarm, net.nodes[v], params, cfg, contending)
                _recharge(swarm)

    walk(service.out_path, service.out_stops)
    at = elapsed
    for d in swarm.drones:
        d.payload = 0.0
    back_stops = list(service.back_stops)
    if back_stops and back_stops[0] == request.dest:
        back_stops.pop(0)
        elapsed += node_time(swarm, net.nodes[request.dest], params, cfg, contending)
        _recharge(swarm)
    walk(service.back_path, back_stops)
    for d in swarm.drones:
        d.battery = max(d.battery, 0.0)
    rtt = elapsed + node_time(swarm, net.nodes[cfg.source], params, cfg, contending)
    return at, rtt, low


class SwarmComposer(TransformerMixin, BaseEstimator):
    """Transform requests into composed services on a fixed network.

    Parameters
    ----------
    network : SkywayNetwork
    provider : ProviderConfig
    energy : EnergyParams, optional
    pricing : PricingParams, optional
    congestion : bool, default True
        When False, node times ignore contending swarms.
    """

    def __init__(self, network=None, provider=None, energy=None, pricing=None,
                 congestion=True):
        self.network = network
        self.provider = provider
        self.energy = energy
        self.pricing = pricing
        self.congestion = congestion

    def fit(self, requests=None, y=None):
        if not isinstance(self.network, SkywayNetwork):
            raise TypeError("network must be a SkywayNetwork")
        if not isinstance(self.provider, ProviderConfig):
            raise TypeError("provider must be a ProviderConfig")
        if self.provider.source not in self.network.nodes:
            raise ValueError(f"source {self.provider.source} not in network")
        self.energy_ = self.energy or EnergyParams()
        self.pricing_ = self.pricing or PricingParams()
        longest = max(s.dist for s in self.network.segments) if self.network.segments else 0
        if self.energy_.rate_empty * longest / 1000.0 >= 1:
            raise ValueError(f"longest segment ({longest:.0f} m) exceeds single-charge range")
        self.contending_ = None if self.congestion else 0
        return self

    def transform(self, requests: Sequence[Request]) -> List[ComposedService]:
        check_is_fitted(self, "energy_")
        out = []
        for req in requests:
            problems = validate_request(req, self.network, self.provider)
            if problems:
                out.append(unservable(req, "; ".join(problems)))
                continue
            try:
                out.append(compose(self.network, req, self.energy_, self.provider,
                                   self.pricing_, self.contending_))
            except UnservableRequest as exc:
                out.append(unservable(req, str(exc)))
        return out
