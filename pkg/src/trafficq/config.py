"""Experiment configuration: one JSON document drives every command."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .agent import AgentParams, StateEncoder
from .horizon import ActionGrid, HorizonParams
from .network import Scenario, ScenarioError, default_scenario_path
from .reward import RewardParams
from .stochastics import UncertaintyConfig


class ConfigError(ValueError):
    """Bad or unknown configuration field; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    reward: RewardParams = RewardParams()
    uncertainty: UncertaintyConfig = UncertaintyConfig()
    agent: AgentParams = AgentParams()
    adaptive: HorizonParams = HorizonParams()
    encoder: StateEncoder = StateEncoder()
    n_values: int = 7
    source: str | None = field(default=None, compare=False)

    def initial_grid(self) -> ActionGrid:
        lo, hi = self.scenario.green_bounds
        return ActionGrid.uniform(self.scenario.n_intersections, lo, hi, self.n_values)

    def with_demand(self, mean) -> "ExperimentConfig":
        return replace(self, scenario=self.scenario.with_demand(mean))

    def to_dict(self) -> dict:
        enc = asdict(self.encoder)
        if enc["monitored"] is not None:
            enc["monitored"] = [self.scenario.road_ids[j] for j in enc["monitored"]]
        doc = self.scenario.to_dict()
        doc.update(
            reward=asdict(self.reward),
            uncertainty=asdict(self.uncertainty),
            agent=asdict(self.agent),
            adaptive=asdict(self.adaptive),
            encoder=enc,
            n_values=self.n_values,
        )
        return doc


def _build(cls, section: str, values: Mapping[str, Any] | None):
    if not values:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown field(s) in '{section}': {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def config_from_dict(doc: Mapping[str, Any], source: str | None = None) -> ExperimentConfig:
    try:
        scenario = Scenario.from_dict(doc)
    except ScenarioError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None
    enc = dict(doc.get("encoder") or {})
    if enc.get("monitored") is not None:
        ids = scenario.road_ids
        try:
            enc["monitored"] = tuple(ids.index(r) for r in enc["monitored"])
        except ValueError:
            raise ConfigError("encoder.monitored names an unknown road") from None
    n_values = int(doc.get("n_values", 7))
    if n_values < 2:
        raise ConfigError("n_values must be at least 2")
    return ExperimentConfig(
        scenario=scenario,
        reward=_build(RewardParams, "reward", doc.get("reward")),
        uncertainty=_build(UncertaintyConfig, "uncertainty", doc.get("uncertainty")),
        agent=_build(AgentParams, "agent", doc.get("agent")),
        adaptive=_build(HorizonParams, "adaptive", doc.get("adaptive")),
        encoder=_build(StateEncoder, "encoder", enc),
        n_values=n_values,
        source=source,
    )


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    path = Path(path) if path is not None else default_scenario_path()
    with open(path) as fh:
        return config_from_dict(json.load(fh), source=str(path))


def default_config() -> ExperimentConfig:
    return load_config(None)
