"""Swarm-based drone delivery: congestion-aware trip composition and
Q-learning fleet allocation."""

from .core import (
    Drone,
    Node,
    ProviderConfig,
    Request,
    Segment,
    SkywayNetwork,
    Swarm,
    TimeWindow,
    load_network,
    save_network,
    shortest_path_table,
    validate_request,
)
from .energy import EnergyParams, can_reach, charge_time, energy_consumed
from .composer import (
    ComposedService,
    PricingParams,
    SwarmComposer,
    compose,
    compose_leg,
    node_time,
    profit_of,
)
from .schedule import Action, AllocEntry, Schedule
from .rl import QLearningAllocator, QTable, q_update
from .fcfs import FCFSAllocator, allocate_fcfs
from .harness import Scenario, generate_scenario, oracle_optimal, run_experiment

__all__ = [
    "Action",
    "AllocEntry",
    "ComposedService",
    "Drone",
    "EnergyParams",
    "FCFSAllocator",
    "Node",
    "PricingParams",
    "ProviderConfig",
    "QLearningAllocator",
    "QTable",
    "Request",
    "Scenario",
    "Schedule",
    "Segment",
    "SkywayNetwork",
    "Swarm",
    "SwarmComposer",
    "TimeWindow",
    "allocate_fcfs",
    "can_reach",
    "charge_time",
    "compose",
    "compose_leg",
    "energy_consumed",
    "generate_scenario",
    "load_network",
    "node_time",
    "oracle_optimal",
    "profit_of",
    "q_update",
    "run_experiment",
    "save_network",
    "shortest_path_table",
    "validate_request",
]
