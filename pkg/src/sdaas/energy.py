"""Linear battery consumption and charging model."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .core import Drone, Swarm


@dataclass(frozen=True)
class EnergyParams:
    """Consumption and charging constants for one drone model.

    rate_empty      battery fraction per km for an unloaded drone
    payload_factor  extra consumption multiplier at full payload capacity
    full_charge_time  seconds to charge from empty to full
    speed           cruise speed in m/s
    """

    rate_empty: float = 0.05
    payload_factor: float = 1.0
    full_charge_time: float = 3600.0
    speed: float = 10.0
    payload_capacity: float = 2.5
    reserve: float = 0.0

    def __post_init__(self):
        for name in ("rate_empty", "payload_factor", "full_charge_time", "speed",
                     "payload_capacity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0 <= self.reserve < 1:
            raise ValueError("reserve must lie in [0, 1)")

    def max_range_m(self, payload: float = 0.0) -> float:
        """Distance a full battery covers at the given payload."""
        return 1000.0 * (1.0 - self.reserve) / self._rate(payload)

    def _rate(self, payload: float) -> float:
        return self.rate_empty * (1.0 + self.payload_factor * payload / self.payload_capacity)

    def to_dict(self):
        return asdict(self)


def energy_consumed(dist: float, payload: float, params: EnergyParams) -> float:
    """Battery fraction used to fly `dist` meters carrying `payload` kg."""
    if dist < 0 or payload < 0:
        raise ValueError(f"negative input: dist={dist}, payload={payload}")
    if payload > params.payload_capacity:
        raise ValueError(f"payload {payload} exceeds capacity {params.payload_capacity}")
    return params._rate(payload) * dist / 1000.0


def can_reach(swarm: Swarm, dist: float, params: EnergyParams) -> bool:
    # the swarm moves as a unit, so the weakest drone decides
    return all(energy_consumed(dist, d.payload, params) <= d.battery - params.reserve
               for d in swarm.drones)


def charge_time(drone: Drone, target_level: float, params: EnergyParams) -> float:
    if target_level < drone.battery:
        raise ValueError(f"target {target_level} below current level {drone.battery}")
    if target_level > 1.0:
        raise ValueError("target level above full charge")
    return (target_level - drone.battery) * params.full_charge_time
