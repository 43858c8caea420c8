"""Control cost and overflow-penalised reward."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import overflow_vector


@dataclass(frozen=True)
class RewardParams:
    punishment_weight: float = 100.0
    cost_scale: float = 1e4

    def __post_init__(self):
        if not self.punishment_weight > 0:
            raise ValueError("punishment_weight must be positive")
        if not self.cost_scale > 0:
            raise ValueError("cost_scale must be positive")


def control_cost(state, action, prev_action, cost_scale: float = 1.0) -> float:
    """Squared queue norm plus squared action change, divided by ``cost_scale``."""
    s = np.asarray(state, dtype=float)
    da = np.asarray(action, dtype=float) - np.asarray(prev_action, dtype=float)
    return float(s @ s + da @ da) / cost_scale


def reward(state, action, prev_action, capacities, params: RewardParams) -> float:
    """Negative control cost, with an extra penalty on the overflow norm.

    The penalty uses the Euclidean norm of the positive part of
    ``queue - capacity`` and is not divided by ``cost_scale``, so a single
    vehicle of overflow outweighs a typical normalised step cost.
    """
    f = control_cost(state, action, prev_action, params.cost_scale)
    over = overflow_vector(state, capacities)
    if over.any():
        return -(f + params.punishment_weight * math.sqrt(over @ over))
    return -f


def batch_reward(states, actions, prev_actions, capacities, params: RewardParams) -> np.ndarray:
    """Row-wise :func:`reward` over a leading batch axis."""
    s = np.asarray(states, dtype=float)
    da = np.asarray(actions, dtype=float) - np.asarray(prev_actions, dtype=float)
    f = (np.einsum("ij,ij->i", s, s) + np.einsum("ij,ij->i", da, da)) / params.cost_scale
    over = np.linalg.norm(np.maximum(s - capacities, 0.0), axis=1)
    return -(f + params.punishment_weight * over)
