"""Seeded demand, turning-rate and disturbance sampling.

All randomness flows from :func:`rng_stream`, which derives an independent
``numpy`` generator from a master seed and a tuple of integer keys. The same
(seed, keys) pair always yields the same stream, so runs replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# stream kinds, used as the first key after the master seed
TRAIN = 1
ROLLOUT = 2
PROBE = 3
SWEEP = 4


class TurningSampleError(RuntimeError):
    pass


@dataclass(frozen=True)
class UncertaintyConfig:
    demand_pct: float = 0.0
    turning_pct: float = 0.0
    disturbance_std: float = 0.0
    seed: int = 0
    renormalize_turning: bool = True
    pct_is_variance: bool = False

    def __post_init__(self):
        if self.demand_pct < 0 or self.turning_pct < 0 or self.disturbance_std < 0:
            raise ValueError("uncertainty levels must be non-negative")

    @property
    def deterministic(self) -> bool:
        return self.demand_pct == 0 and self.turning_pct == 0 and self.disturbance_std == 0


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _spread(mean, pct: float, pct_is_variance: bool):
    if pct_is_variance:
        # variance expressed as a percentage of the mean itself
        return np.sqrt(pct / 100.0 * np.asarray(mean, dtype=float))
    return pct / 100.0 * np.asarray(mean, dtype=float)


def sample_demand(mean, demand_pct: float, rng: np.random.Generator, pct_is_variance: bool = False):
    """Normal draw around ``mean`` with relative spread ``demand_pct``, truncated at 0.

    A standard normal is always consumed, so streams stay aligned across
    uncertainty levels.
    """
    m = np.asarray(mean, dtype=float)
    z = rng.standard_normal(m.shape)
    if demand_pct == 0:
        return m.copy() if m.ndim else float(m)
    d = np.maximum(m + _spread(m, demand_pct, pct_is_variance) * z, 0.0)
    return d if d.ndim else float(d)


def sample_turning(
    base: np.ndarray,
    turning_pct: float,
    rng: np.random.Generator,
    renormalize: bool = True,
    pct_is_variance: bool = False,
    max_retries: int = 100,
) -> np.ndarray:
    """Perturb the non-zero turning rates, clamp to [0, 1] and renormalise rows."""
    base = np.asarray(base, dtype=float)
    nz = base > 0
    z = rng.standard_normal(int(nz.sum()))
    if turning_pct == 0:
        return base.copy()
    spread = _spread(base[nz], turning_pct, pct_is_variance)
    tau = np.zeros_like(base)
    tau[nz] = np.clip(base[nz] + spread * z, 0.0, 1.0)
    rows = np.nonzero(nz.any(axis=1))[0]
    for p in rows:
        tries = 0
        while tau[p].sum() == 0:
            if tries >= max_retries:
                raise TurningSampleError(f"turning row {p} collapsed to zero {max_retries} times")
            cols = nz[p]
            tau[p, cols] = np.clip(base[p, cols] + _spread(base[p, cols], turning_pct, pct_is_variance)
                                   * rng.standard_normal(int(cols.sum())), 0.0, 1.0)
            tries += 1
        if renormalize:
            tau[p] /= tau[p].sum()
    return tau


def sample_disturbance(road_count: int, disturbance_std: float, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(road_count)
    if disturbance_std == 0:
        return np.zeros(road_count)
    return disturbance_std * z


def sample_inputs(scenario, uncertainty: UncertaintyConfig, rng: np.random.Generator | None):
    """Demand vector, turning matrix and disturbance for one control interval.

    Deterministic configurations return the scenario's means without touching
    ``rng``.
    """
    if uncertainty.deterministic or rng is None:
        return scenario.demand, scenario.turning, np.zeros(scenario.n_roads)
    demand = sample_demand(scenario.demand, uncertainty.demand_pct, rng, uncertainty.pct_is_variance)
    turning = sample_turning(
        scenario.turning, uncertainty.turning_pct, rng,
        renormalize=uncertainty.renormalize_turning,
        pct_is_variance=uncertainty.pct_is_variance,
    )
    disturbance = sample_disturbance(scenario.n_roads, uncertainty.disturbance_std, rng)
    return demand, turning, disturbance
