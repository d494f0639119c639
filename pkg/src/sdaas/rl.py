"""Tabular Q-learning allocation of a fleet to time-windowed requests.

The agent picks one (request, arrival slot) action at a time. Invalid
actions (request already served, drones not available over the occupancy
interval, departure before the day starts) are masked out, and an episode
ends when no valid action is left. The reward of an action is the profit
of the request it serves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence, Set

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .composer import ComposedService
from .core import ProviderConfig
from .schedule import Action, ActionGrid, Schedule, skip_reason


class InvalidAction(ValueError):
    """The environment rejected an action."""


class QTable:
    """Action values per state key; unseen entries read as zero."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.table: Dict[Hashable, np.ndarray] = {}
        self._zeros = np.zeros(n_actions)
        self._zeros.flags.writeable = False

    def __len__(self):
        return len(self.table)

    def __contains__(self, state):
        return state in self.table

    def values(self, state) -> np.ndarray:
        return self.table.get(state, self._zeros)

    def get(self, state, action: int) -> float:
        return float(self.values(state)[action])

    def row(self, state) -> np.ndarray:
        """Writable row for `state`, created on first use."""
        r = self.table.get(state)
        if r is None:
            r = self.table[state] = np.zeros(self.n_actions)
        return r


def q_update(q: QTable, s, a: int, r: float, s_next, alpha: float = 0.1,
             gamma: float = 0.9, next_valid: Optional[np.ndarray] = None,
             terminal: bool = False) -> QTable:
    """One Watkins update, in place. The bootstrap max runs over `next_valid`
    (boolean mask or indices) when given, and is 0 for terminal transitions."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if terminal:
        future = 0.0
    else:
        nxt = q.values(s_next)
        if next_valid is not None:
            nxt = nxt[next_valid]
        future = float(nxt.max()) if len(nxt) else 0.0
    row = q.row(s)
    row[a] += alpha * (r + gamma * future - row[a])
    return q


# -- state encoders ----------------------------------------------------------

class ExactEncoder:
    """State = the set of actions taken so far, as an integer bitmask."""

    name = "exact"

    def initial(self):
        return 0

    def next(self, key, action: int, accumulated: float):
        return key | (1 << action)


class ProfitBinEncoder:
    """State = accumulated profit discretized into fixed-width bins."""

    name = "profit"

    def __init__(self, width: float):
        if not width > 0:
            raise ValueError("bin width must be positive")
        self.width = width

    def initial(self):
        return 0

    def next(self, key, action: int, accumulated: float):
        return int(accumulated // self.width)


@dataclass
class EnvState:
    allocated: Set[int] = field(default_factory=set)
    accumulated_profit: float = 0.0


class AllocationEnv:
    """Masked environment over an ActionGrid."""

    def __init__(self, grid: ActionGrid, encoder=None):
        self.grid = grid
        self.encoder = encoder or ExactEncoder()
        self.reset()

    def reset(self):
        self.mask = self.grid.initial_mask()
        self.occupancy = self.grid.initial_occupancy()
        self.chosen: List[int] = []
        self.state = EnvState()
        self.key = self.encoder.initial()
        return self.key

    def valid_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def valid_actions(self) -> List[Action]:
        return [self.grid.actions[i] for i in self.valid_indices()]

    @property
    def done(self) -> bool:
        return not self.mask.any()

    def index_of(self, action: Action) -> int:
        try:
            return self.grid.actions.index(action)
        except ValueError:
            raise InvalidAction(f"{action} is not on the action grid") from None

    def step(self, action):
        """Apply an action (index or Action); returns (state key, reward, done)."""
        i = self.index_of(action) if isinstance(action, Action) else int(action)
        if not (0 <= i < len(self.grid)) or not self.mask[i]:
            raise InvalidAction(f"action {i} is not valid in the current state")
        reward = float(self.grid.profit[i])
        self.grid.apply(self.mask, self.chosen, i, self.occupancy)
        self.state.allocated.add(self.grid.actions[i].request_id)
        self.state.accumulated_profit += reward
        self.key = self.encoder.next(self.key, i, self.state.accumulated_profit)
        return self.key, reward, self.done

    def schedule(self) -> Schedule:
        return self.grid.schedule(self.chosen)


def epsilon_at(episode: int, episodes: int, start: float, end: float,
               decay_fraction: float) -> float:
    horizon = max(1.0, decay_fraction * episodes)
    if episode >= horizon:
        return end
    return start + (end - start) * episode / horizon


def train(env: AllocationEnv, episodes: int = 20000, alpha: float = 0.1,
          gamma: float = 0.9, epsilon_start: float = 1.0, epsilon_end: float = 0.05,
          decay_fraction: float = 0.8, seed=None, q: Optional[QTable] = None):
    """Epsilon-greedy Q-learning; returns (QTable, per-episode returns)."""
    rng = np.random.default_rng(seed)
    q = q or QTable(len(env.grid))
    history = np.zeros(episodes)
    if not len(env.grid):
        return q, history
    for ep in range(episodes):
        eps = epsilon_at(ep, episodes, epsilon_start, epsilon_end, decay_fraction)
        s = env.reset()
        total = 0.0
        while not env.done:
            valid = env.valid_indices()
            if rng.random() < eps:
                a = int(valid[rng.integers(len(valid))])
            else:
                a = int(valid[np.argmax(q.values(s)[valid])])
            s_next, r, done = env.step(a)
            q_update(q, s, a, r, s_next, alpha, gamma, env.mask, terminal=done)
            total += r
            s = s_next
        history[ep] = total
    return q, history


def extract_schedule(q: QTable, env: AllocationEnv) -> Schedule:
    """Greedy rollout; ties go to the lowest (request_id, arrival_slot)."""
    s = env.reset()
    while not env.done:
        valid = env.valid_indices()
        s, _, _ = env.step(int(valid[np.argmax(q.values(s)[valid])]))
    return env.schedule()


def _fleet(provider) -> int:
    return provider.fleet_size if isinstance(provider, ProviderConfig) else int(provider)


class QLearningAllocator(BaseEstimator):
    """Learn which requests to serve and when, maximizing total profit.

    Parameters
    ----------
    episodes : int, default 20000
    alpha, gamma : float
        Learning rate and discount.
    epsilon_start, epsilon_end, decay_fraction : float
        Exploration decays linearly from start to end over the first
        ``decay_fraction`` of the episodes.
    slot_granularity : float, default 600
        Spacing in seconds of candidate arrival slots inside each window.
    encoder : {"auto", "exact", "profit"}
        "auto" uses the exact encoder up to ``exact_max_requests`` eligible
        requests and profit bins beyond.
    profit_bins : int
        Number of bins spanning the summed eligible profit.
    seed : int or None
    """

    def __init__(self, episodes=20000, alpha=0.1, gamma=0.9, epsilon_start=1.0,
                 epsilon_end=0.05, decay_fraction=0.8, slot_granularity=600.0,
                 encoder="auto", exact_max_requests=20, profit_bins=100, seed=None):
        self.episodes = episodes
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.decay_fraction = decay_fraction
        self.slot_granularity = slot_granularity
        self.encoder = encoder
        self.exact_max_requests = exact_max_requests
        self.profit_bins = profit_bins
        self.seed = seed

    def _make_encoder(self, grid: ActionGrid):
        kind = self.encoder
        if kind == "auto":
            kind = "exact" if grid.n_requests <= self.exact_max_requests else "profit"
        if kind == "exact":
            return ExactEncoder()
        if kind == "profit":
            total = sum(grid.services[r].profit for r in grid.request_ids)
            return ProfitBinEncoder(max(total, 1e-9) / self.profit_bins)
        raise ValueError(f"unknown encoder {self.encoder!r}")

    def fit(self, services: Sequence[ComposedService], provider):
        self.grid_ = ActionGrid(services, _fleet(provider), self.slot_granularity)
        self.encoder_ = self._make_encoder(self.grid_)
        self.env_ = AllocationEnv(self.grid_, self.encoder_)
        self.q_table_, self.reward_history_ = train(
            self.env_, self.episodes, self.alpha, self.gamma, self.epsilon_start,
            self.epsilon_end, self.decay_fraction, self.seed)
        self.schedule_ = extract_schedule(self.q_table_, self.env_)
        self.schedule_.skipped = {s.request_id: skip_reason(s) for s in services
                                  if s.request_id not in self.schedule_.request_ids}
        return self

    def predict(self, services: Optional[Sequence[ComposedService]] = None) -> Schedule:
        check_is_fitted(self, "q_table_")
        if services is not None:
            ids = sorted(s.request_id for s in services if s.eligible)
            if ids != sorted(self.grid_.services):
                raise ValueError("services differ from those seen in fit")
        return extract_schedule(self.q_table_, self.env_)

    def fit_predict(self, services, provider) -> Schedule:
        return self.fit(services, provider).schedule_
