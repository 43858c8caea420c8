"""Tabular Q-learning over binned queue states and a joint green-time grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .network import Scenario, advance, capacity, check_action, discharge_capacity
from .reward import RewardParams, reward
from .stochastics import UncertaintyConfig, sample_inputs

UPDATE_RULES = ("standard", "literal")


@dataclass(frozen=True)
class AgentParams:
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon: float = 0.5
    episodes: int = 3000
    horizon: int = 6
    update_rule: str = "standard"
    anneal_epsilon: bool = False

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 <= self.discount <= 1:
            raise ValueError("discount must lie in [0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.update_rule not in UPDATE_RULES:
            raise ValueError(f"update_rule must be one of {UPDATE_RULES}")

    def epsilon_at(self, episode: int) -> float:
        if not self.anneal_epsilon or self.episodes <= 1:
            return self.epsilon
        return self.epsilon * max(0.0, 1.0 - episode / (self.episodes - 1))


@dataclass(frozen=True)
class StateEncoder:
    """Bins queue lengths on the monitored roads and packs them into one integer.

    Bins are packed little-endian with radix ``max_bins + 1``. Optionally the
    step index (radix ``step_radix``) and the previous action index (top digit,
    0 meaning "no previous grid action") are appended, which makes the encoded
    state Markov for the action-change term of the cost.
    """

    bin_width: float = 10.0
    max_bins: int = 15
    monitored: tuple[int, ...] | None = None
    include_step: bool = False
    include_prev_action: bool = False
    step_radix: int = 64

    def __post_init__(self):
        if self.bin_width < 1:
            raise ValueError("bin_width must be at least 1 vehicle")
        if self.max_bins < 0:
            raise ValueError("max_bins must be non-negative")
        if self.monitored is not None and len(self.monitored) == 0:
            raise ValueError("monitored roads must be non-empty")

    def encode(self, queues, step: int = 0, prev_action: int = -1) -> int:
        q = np.asarray(queues, dtype=float)
        if self.monitored is not None:
            q = q[list(self.monitored)]
        bins = np.minimum(q // self.bin_width, self.max_bins)
        radix = self.max_bins + 1
        scale = radix ** len(bins)
        if scale < 2**52:
            sid = int(bins @ _radix_weights(radix, len(bins)))
        else:
            sid = 0
            for b in bins[::-1]:
                sid = sid * radix + int(b)
        if self.include_step:
            if not 0 <= step < self.step_radix:
                raise ValueError(f"step {step} exceeds step_radix {self.step_radix}")
            sid += scale * step
            scale *= self.step_radix
        if self.include_prev_action:
            sid += scale * (prev_action + 1)
        return sid


@lru_cache(maxsize=None)
def _radix_weights(radix: int, n: int) -> np.ndarray:
    return radix ** np.arange(n, dtype=np.float64)


class QTable:
    """Sparse action-value table; rows are allocated on first write.

    Reading an unseen state or action returns 0.
    """

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("n_actions must be at least 1")
        self.n_actions = n_actions
        self._rows: dict[int, np.ndarray] = {}
        self._seen: dict[int, np.ndarray] = {}
        self._zeros = np.zeros(n_actions)
        self._zeros.setflags(write=False)

    def __len__(self) -> int:
        return sum(int(m.sum()) for m in self._seen.values())

    def __contains__(self, key) -> bool:
        s, a = key
        return s in self._seen and bool(self._seen[s][a])

    def states(self) -> list[int]:
        return sorted(self._rows)

    def row(self, state: int) -> np.ndarray:
        return self._rows.get(state, self._zeros)

    def get(self, state: int, action: int) -> float:
        return float(self.row(state)[action])

    def max(self, state: int) -> float:
        return float(self.row(state).max())

    def set(self, state: int, action: int, value: float) -> None:
        if not 0 <= action < self.n_actions:
            raise IndexError(f"action {action} out of range for {self.n_actions} actions")
        if not np.isfinite(value):
            raise ValueError("Q-values must be finite")
        if state not in self._rows:
            self._rows[state] = np.zeros(self.n_actions)
            self._seen[state] = np.zeros(self.n_actions, dtype=bool)
        self._rows[state][action] = value
        self._seen[state][action] = True

    def items(self) -> Iterator[tuple[int, int, float]]:
        for s in sorted(self._rows):
            for a in np.nonzero(self._seen[s])[0]:
                yield s, int(a), float(self._rows[s][a])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(s, a): q for s, a, q in self.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state_id", "action_index", "q_value"])
            for s, a, q in self.items():
                w.writerow([s, a, repr(q)])

    @classmethod
    def from_csv(cls, path, n_actions: int) -> "QTable":
        table = cls(n_actions)
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                table.set(int(rec["state_id"]), int(rec["action_index"]), float(rec["q_value"]))
        return table


def select_action(qtable: QTable, state_id: int, action_count: int, epsilon: float, rng) -> int:
    """Epsilon-greedy choice; ties in the greedy branch go to the lowest index."""
    if action_count < 1:
        raise ValueError("action_count must be at least 1")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(action_count))
    return int(np.argmax(qtable.row(state_id)[:action_count]))


def update(qtable: QTable, s: int, a: int, r: float, s_next: int | None,
           alpha: float, gamma: float, rule: str = "standard") -> float:
    """One Q-learning backup. ``s_next=None`` marks a terminal transition."""
    q = qtable.get(s, a)
    best_next = 0.0 if s_next is None else qtable.max(s_next)
    if rule == "standard":
        new = q + alpha * (r + gamma * best_next - q)
    elif rule == "literal":
        # discount applied to the whole temporal difference
        new = q + alpha * (r + gamma * (best_next - q))
    else:
        raise ValueError(f"unknown update rule {rule!r}")
    qtable.set(s, a, new)
    return new


@dataclass
class TrainStats:
    returns: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.returns)


@dataclass
class RunTrace:
    """Per-step record of one rollout. Row ``k`` describes step ``k + 1``."""

    road_ids: list[str]
    intersection_ids: list[str]
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    overflow: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    @property
    def any_overflow(self) -> bool:
        return bool(self.overflow.any())

    def step_overflow(self) -> np.ndarray:
        return self.overflow.any(axis=1)


def as_action_array(actions) -> np.ndarray:
    arr = np.asarray(actions, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or len(arr) == 0:
        raise ValueError("action list must be a non-empty (n_actions, n_intersections) array")
    return arr


class _Env:
    """Per-run constants needed to step and score one transition."""

    def __init__(self, scenario: Scenario, actions: np.ndarray, reward_params: RewardParams,
                 uncertainty: UncertaintyConfig):
        self.scenario = scenario
        self.actions = actions
        self.discharge = discharge_capacity(scenario, actions)
        self.reward_params = reward_params
        self.uncertainty = uncertainty
        self.capacities = capacity(scenario)
        self.no_disturbance = np.zeros(scenario.n_roads)

    def transition(self, state, ai, prev_action, rng):
        if self.uncertainty.deterministic:
            s = self.scenario
            demand, turning, dist = s.demand, s.turning, self.no_disturbance
        else:
            demand, turning, dist = sample_inputs(self.scenario, self.uncertainty, rng)
        nxt = advance(state, self.discharge[ai], demand, turning, dist, self.scenario)
        return nxt, reward(nxt, self.actions[ai], prev_action, self.capacities, self.reward_params)


def train(
    scenario: Scenario,
    params: AgentParams,
    actions,
    initial_state,
    rng: np.random.Generator,
    *,
    reward_params: RewardParams = RewardParams(),
    uncertainty: UncertaintyConfig = UncertaintyConfig(),
    encoder: StateEncoder = StateEncoder(),
    initial_action=None,
) -> tuple[QTable, TrainStats]:
    """Run ``params.episodes`` epsilon-greedy episodes of ``params.horizon`` steps.

    Rewards are computed on the post-transition state. The last step of an
    episode is treated as terminal (no bootstrap).
    """
    acts = as_action_array(actions)
    check_action(scenario, acts)
    n = len(acts)
    table = QTable(n)
    stats = TrainStats()
    env = _Env(scenario, acts, reward_params, uncertainty)
    s0 = np.asarray(initial_state, dtype=float)
    a0 = scenario.initial_action() if initial_action is None else np.asarray(initial_action, dtype=float)
    alpha, gamma, rule, H = params.learning_rate, params.discount, params.update_rule, params.horizon
    for ep in range(params.episodes):
        eps = params.epsilon_at(ep)
        state, prev, prev_idx = s0, a0, -1
        sid = encoder.encode(state, 0, prev_idx)
        G = 0.0
        for t in range(H):
            ai = select_action(table, sid, n, eps, rng)
            action = acts[ai]
            state, r = env.transition(state, ai, prev, rng)
            G += gamma ** t * r
            if t == H - 1:
                update(table, sid, ai, r, None, alpha, gamma, rule)
            else:
                nxt = encoder.encode(state, t + 1, ai)
                update(table, sid, ai, r, nxt, alpha, gamma, rule)
                sid = nxt
            prev, prev_idx = action, ai
        stats.returns.append(G)
    return table, stats


def rollout(
    policy: Callable[[np.ndarray, int, int], int],
    scenario: Scenario,
    actions,
    initial_state,
    horizon: int,
    rng: np.random.Generator | None = None,
    *,
    reward_params: RewardParams = RewardParams(),
    uncertainty: UncertaintyConfig = UncertaintyConfig(),
    initial_action=None,
) -> RunTrace:
    """Simulate ``horizon`` steps choosing ``policy(state, step, prev_index)``."""
    acts = as_action_array(actions)
    check_action(scenario, acts)
    env = _Env(scenario, acts, reward_params, uncertainty)
    state = np.asarray(initial_state, dtype=float)
    prev = scenario.initial_action() if initial_action is None else np.asarray(initial_action, dtype=float)
    prev_idx = -1
    states, chosen, rewards, overflow = [], [], [], []
    for t in range(horizon):
        ai = policy(state, t, prev_idx)
        action = acts[ai]
        state, r = env.transition(state, ai, prev, rng)
        states.append(state)
        chosen.append(action)
        rewards.append(r)
        overflow.append(state > env.capacities)
        prev, prev_idx = action, ai
    rewards = np.array(rewards)
    return RunTrace(
        road_ids=scenario.road_ids,
        intersection_ids=scenario.intersection_ids,
        states=np.array(states).reshape(horizon, scenario.n_roads),
        actions=np.array(chosen).reshape(horizon, scenario.n_intersections),
        rewards=rewards,
        costs=-rewards,
        overflow=np.array(overflow, dtype=bool).reshape(horizon, scenario.n_roads),
    )


def greedy_rollout(
    qtable: QTable,
    scenario: Scenario,
    actions,
    initial_state,
    horizon: int,
    rng: np.random.Generator | None = None,
    *,
    encoder: StateEncoder = StateEncoder(),
    first_action: int | None = None,
    **kwargs,
) -> RunTrace:
    """Pure-exploitation rollout. ``first_action`` forces the step-1 choice."""
    n = len(as_action_array(actions))

    def policy(state, t, prev_idx):
        if t == 0 and first_action is not None:
            return first_action
        return int(np.argmax(qtable.row(encoder.encode(state, t, prev_idx))[:n]))

    return rollout(policy, scenario, actions, initial_state, horizon, rng, **kwargs)


def cost_of_sequence(scenario: Scenario, sequence, initial_state, reward_params: RewardParams,
                     initial_action=None) -> float:
    """Total cost of applying an explicit list of joint actions (deterministic)."""
    seq = as_action_array(sequence)
    trace = rollout(lambda s, t, p: t, scenario, seq, initial_state, len(seq),
                    reward_params=reward_params, initial_action=initial_action)
    return trace.total_cost


__all__ = [
    "AgentParams", "StateEncoder", "QTable", "TrainStats", "RunTrace",
    "select_action", "update", "train", "rollout", "greedy_rollout",
    "cost_of_sequence",
]
