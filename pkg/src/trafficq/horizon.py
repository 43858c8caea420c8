"""Adaptive green-time grids.

Each intersection owns an integer interval ``[lo, hi]`` sampled at a fixed
number of evenly spaced values, so the joint action count stays constant
while the interval shrinks around the best-performing value. Once every
interval is down to unit spacing, the intervals are nudged sideways by a
small leeway and a move is kept only if the learned controller gets cheaper.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .agent import (
    AgentParams,
    QTable,
    StateEncoder,
    as_action_array,
    greedy_rollout,
    rollout,
    train,
)
from .network import Scenario, step_batch
from .reward import RewardParams, batch_reward
from .stochastics import PROBE, ROLLOUT, TRAIN, UncertaintyConfig, rng_stream


class NoEvaluatedActions(ValueError):
    pass


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ActionGrid:
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    n_values: int = 7
    generation: int = 0

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("lo and hi must be non-empty and of equal length")
        if self.n_values < 2:
            raise ValueError("n_values must be at least 2")
        for a, b in zip(self.lo, self.hi):
            if a > b:
                raise ValueError(f"interval [{a}, {b}] is empty")

    @classmethod
    def uniform(cls, n_intersections: int, lo: int, hi: int, n_values: int = 7) -> "ActionGrid":
        return cls((lo,) * n_intersections, (hi,) * n_intersections, n_values)

    @property
    def n_intersections(self) -> int:
        return len(self.lo)

    def width(self, i: int) -> int:
        return self.hi[i] - self.lo[i]

    def spacing(self, i: int) -> float:
        w = self.width(i)
        if w == 0:
            return 0.0
        return w / (min(self.n_values, w + 1) - 1)

    def values(self, i: int) -> list[int]:
        lo, hi = self.lo[i], self.hi[i]
        if lo == hi:
            return [lo]
        if hi - lo + 1 <= self.n_values:
            return list(range(lo, hi + 1))
        step = (hi - lo) / (self.n_values - 1)
        return [_round(lo + k * step) for k in range(self.n_values)]

    def converged(self, i: int, min_spacing: int = 1) -> bool:
        return self.spacing(i) <= min_spacing

    def all_converged(self, min_spacing: int = 1) -> bool:
        return all(self.converged(i, min_spacing) for i in range(self.n_intersections))

    def contains(self, other: "ActionGrid") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    @property
    def action_count(self) -> int:
        return math.prod(len(self.values(i)) for i in range(self.n_intersections))


@dataclass(frozen=True)
class HorizonParams:
    rounds_per_generation: int = 3000
    shift_leeway: int = 5
    min_spacing: int = 1
    convergence_patience: int = 8
    max_generations: int = 40
    probe_budget: int | None = None

    def __post_init__(self):
        for name in ("rounds_per_generation", "shift_leeway", "min_spacing",
                     "convergence_patience", "max_generations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


def build_actions(grid: ActionGrid) -> np.ndarray:
    """Lexicographic Cartesian product of the per-intersection values."""
    per = [grid.values(i) for i in range(grid.n_intersections)]
    return np.array(list(itertools.product(*per)), dtype=float)


def marginal_costs(actions, costs) -> list[dict[int, float]]:
    """Mean cost per (intersection, value) over the evaluated joint actions."""
    acts = as_action_array(actions)
    costs = np.asarray(costs, dtype=float)
    stats = []
    for i in range(acts.shape[1]):
        col = acts[:, i]
        stats.append({int(v): float(costs[col == v].mean()) for v in np.unique(col)})
    return stats


def contract(grid: ActionGrid, action_stats: Sequence[Mapping[int, float]],
             bounds: tuple[int, int] | None = None) -> ActionGrid:
    """Shrink every interval around its cheapest value.

    The new interval is ``best +/- spacing`` (current spacing), clipped to the
    parent interval. The new spacing shrinks by ``max(2, (n_values - 1) / 2)``
    down to 1 s, which is what keeps ``n_values`` points inside the new
    interval; the interval is widened back (inside the parent) if clipping left
    room for fewer than ``n_values`` integers.
    """
    if len(action_stats) != grid.n_intersections or any(not s for s in action_stats):
        raise NoEvaluatedActions("no evaluated actions")
    lo_b, hi_b = bounds if bounds is not None else (min(grid.lo), max(grid.hi))
    factor = max(2.0, (grid.n_values - 1) / 2)
    new_lo, new_hi = [], []
    for i, stats in enumerate(action_stats):
        plo, phi = max(grid.lo[i], lo_b), min(grid.hi[i], hi_b)
        if plo == phi:
            new_lo.append(plo)
            new_hi.append(phi)
            continue
        best = min(sorted(stats), key=lambda v: stats[v])
        new_spacing = max(1.0, grid.spacing(i) / factor)
        full = grid.n_values - 1
        width = max(full, _round(new_spacing * full))
        lo = best - width // 2
        hi = lo + width
        lo, hi = max(lo, plo), min(hi, phi)
        need = min(full, phi - plo)
        if hi - lo < need:
            lo = min(lo, phi - need)
            hi = max(hi, plo + need)
            lo, hi = max(lo, plo), min(hi, phi)
            if hi - lo > need:
                # widened on both sides; keep the side nearer the best value
                if best - lo < hi - best:
                    hi = lo + need
                else:
                    lo = hi - need
        new_lo.append(int(lo))
        new_hi.append(int(hi))
    return ActionGrid(tuple(new_lo), tuple(new_hi), grid.n_values, grid.generation + 1)


def shift(grid: ActionGrid, intersection: int, direction: int, eta: int,
          bounds: tuple[int, int]) -> ActionGrid:
    """Slide one intersection's interval by ``direction * eta``, staying in bounds."""
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    lo_b, hi_b = bounds
    width = grid.width(intersection)
    lo = grid.lo[intersection] + direction * eta
    lo = min(max(lo, lo_b), hi_b - width)
    new_lo = list(grid.lo)
    new_hi = list(grid.hi)
    new_lo[intersection] = lo
    new_hi[intersection] = lo + width
    return ActionGrid(tuple(new_lo), tuple(new_hi), grid.n_values, grid.generation + 1)


def fixed_action_costs(scenario: Scenario, actions, initial_state, horizon: int,
                       reward_params: RewardParams, initial_action=None):
    """Deterministic cost of holding each joint action for the whole horizon.

    Returns ``(total_cost, any_overflow)`` arrays, one entry per action.
    """
    acts = as_action_array(actions)
    m = len(acts)
    caps = np.array([r.length_m for r in scenario.roads]) / scenario.vehicle_length
    q = np.tile(np.asarray(initial_state, dtype=float), (m, 1))
    prev = np.tile(scenario.initial_action() if initial_action is None else initial_action, (m, 1))
    total = np.zeros(m)
    over = np.zeros(m, dtype=bool)
    zeros = np.zeros(scenario.n_roads)
    for _ in range(horizon):
        q = step_batch(q, acts, scenario.demand, scenario.turning, zeros, scenario)
        total -= batch_reward(q, acts, prev, caps, reward_params)
        over |= (q > caps).any(axis=1)
        prev = acts
    return total, over


def _probe_costs(scenario, actions, initial_state, horizon, reward_params, uncertainty,
                 seed, generation, budget):
    m = len(actions)
    idx = np.arange(m)
    if budget is not None and budget < m:
        idx = np.sort(rng_stream(seed, PROBE, generation, 0, 1).choice(m, budget, replace=False))
    if uncertainty.deterministic:
        costs, _ = fixed_action_costs(scenario, actions[idx], initial_state, horizon, reward_params)
        return idx, costs
    costs = np.empty(len(idx))
    for k, ai in enumerate(idx):
        rng = rng_stream(seed, PROBE, generation * m + int(ai))
        trace = rollout(lambda s, t, p, ai=ai: int(ai), scenario, actions, initial_state, horizon, rng,
                        reward_params=reward_params, uncertainty=uncertainty)
        costs[k] = trace.total_cost
    return idx, costs


@dataclass
class GenerationRecord:
    generation: int
    phase: str
    grid: ActionGrid
    best_values: tuple[int, ...]
    greedy_cost: float
    best_cost: float
    accepted: bool


@dataclass
class GenerationLog:
    records: list[GenerationRecord] = field(default_factory=list)

    FIELDS = ("generation", "phase", "intersection", "lo", "hi", "spacing",
              "best_value", "greedy_cost", "best_cost", "accepted", "action_count")

    def __len__(self):
        return len(self.records)

    def rows(self) -> list[dict]:
        out = []
        for rec in self.records:
            for i in range(rec.grid.n_intersections):
                out.append({
                    "generation": rec.generation,
                    "phase": rec.phase,
                    "intersection": i + 1,
                    "lo": rec.grid.lo[i],
                    "hi": rec.grid.hi[i],
                    "spacing": f"{rec.grid.spacing(i):.4f}",
                    "best_value": rec.best_values[i],
                    "greedy_cost": f"{rec.greedy_cost:.6f}",
                    "best_cost": f"{rec.best_cost:.6f}",
                    "accepted": int(rec.accepted),
                    "action_count": rec.grid.action_count,
                })
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows())

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    def contraction_chain(self) -> list[ActionGrid]:
        """Grids of the contraction phase, ending with the first converged grid."""
        chain = []
        for rec in self.records:
            if rec.phase in ("contract", "converged"):
                chain.append(rec.grid)
        return chain

    def subset_violations(self) -> int:
        chain = self.contraction_chain()
        return sum(not parent.contains(child) for parent, child in zip(chain, chain[1:]))

    def action_counts(self) -> list[int]:
        return [rec.grid.action_count for rec in self.records]


@dataclass
class AdaptiveResult:
    grid: ActionGrid
    qtable: QTable
    log: GenerationLog
    actions: np.ndarray
    greedy_cost: float


def adaptive_train(
    scenario: Scenario,
    agent_params: AgentParams,
    horizon_params: HorizonParams,
    seed: int,
    *,
    initial_grid: ActionGrid | None = None,
    reward_params: RewardParams = RewardParams(),
    uncertainty: UncertaintyConfig = UncertaintyConfig(),
    encoder: StateEncoder = StateEncoder(),
) -> AdaptiveResult:
    """Contract the action grid until unit spacing, then probe shifted grids.

    Every generation trains a fresh Q-table for ``rounds_per_generation``
    episodes on the current grid and scores its greedy rollout. While some
    interval is still coarse, each joint action is also probed by holding it
    fixed over the horizon; per-intersection mean probe cost picks the value
    the next interval is centred on. In the shift phase intersections are
    probed in ascending order, ``+eta`` before ``-eta``, and the first
    strictly cheaper candidate is adopted.
    """
    lo_b, hi_b = scenario.green_bounds
    grid = initial_grid or ActionGrid.uniform(scenario.n_intersections, lo_b, hi_b)
    params = replace(agent_params, episodes=horizon_params.rounds_per_generation)
    s0 = scenario.initial_state()
    H = params.horizon
    log = GenerationLog()

    def evaluate(g: ActionGrid, gen: int):
        actions = build_actions(g)
        q, _ = train(scenario, params, actions, s0, rng_stream(seed, TRAIN, gen),
                     reward_params=reward_params, uncertainty=uncertainty, encoder=encoder)
        trace = greedy_rollout(q, scenario, actions, s0, H, rng_stream(seed, ROLLOUT, gen),
                               encoder=encoder, reward_params=reward_params, uncertainty=uncertainty)
        return actions, q, trace

    best_cost = math.inf
    gen = 0
    # contraction phase
    while True:
        actions, q, trace = evaluate(grid, gen)
        cost = trace.total_cost
        best_cost = min(best_cost, cost)
        if grid.all_converged(horizon_params.min_spacing) or gen + 1 >= horizon_params.max_generations:
            log.records.append(GenerationRecord(
                gen, "converged", grid, tuple(int(v) for v in trace.actions[0]), cost, best_cost, True))
            break
        idx, costs = _probe_costs(scenario, actions, s0, H, reward_params, uncertainty,
                                  seed, gen, horizon_params.probe_budget)
        stats = marginal_costs(actions[idx], costs)
        best_values = tuple(min(sorted(s), key=lambda v: s[v]) for s in stats)
        log.records.append(GenerationRecord(gen, "contract", grid, best_values, cost, best_cost, True))
        grid = replace(contract(grid, stats, scenario.green_bounds), generation=gen + 1)
        gen += 1

    incumbent = (grid, q, actions, cost)
    best_cost = cost if math.isfinite(cost) else best_cost
    stale = 0
    gen += 1
    while stale < horizon_params.convergence_patience and gen < horizon_params.max_generations:
        base = incumbent[0]
        candidates = []
        for i in range(base.n_intersections):
            for d in (1, -1):
                cand = shift(base, i, d, horizon_params.shift_leeway, (lo_b, hi_b))
                if cand.lo != base.lo:
                    candidates.append(cand)
        if not candidates:
            break
        improved = False
        for cand in candidates:
            if stale >= horizon_params.convergence_patience or gen >= horizon_params.max_generations:
                break
            cand = replace(cand, generation=gen)
            actions, q, trace = evaluate(cand, gen)
            cost = trace.total_cost
            accepted = cost < incumbent[3]
            if accepted:
                incumbent = (cand, q, actions, cost)
                best_cost = cost
                stale = 0
            else:
                stale += 1
            log.records.append(GenerationRecord(
                gen, "shift", cand, tuple(int(v) for v in trace.actions[0]), cost, best_cost, accepted))
            gen += 1
            if accepted:
                improved = True
                break
        if not improved and stale < horizon_params.convergence_patience:
            # every neighbour of the incumbent was tried without success
            break
    grid, q, actions, cost = incumbent
    return AdaptiveResult(grid, q, log, actions, cost)
