"""Store-and-forward queue model of a signalised road network.

Every road is a single vehicle queue. Over one control interval of length
``T`` seconds a road receives exogenous demand (entry roads) plus the routed
outflow of its upstream roads, and discharges at a cycle-averaged rate set by
the green time of the intersection it feeds::

    x(k+1) = x(k) + T * (q_in(k) - q_out(k)) + e(k)
    q_in   = sum_p tau[p, r] * q_out[p]
    q_out  = S / C * green

Units: queues in vehicles, rates in veh/s, times in seconds. The saturation
flow is stored in veh/h, as it is usually quoted, and converted on use.

Each intersection has two phases. Roads on the ``go`` phase receive the
intersection's green time ``a``; roads on the ``cross`` phase receive the
remainder of the cycle ``C - a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ROAD_KINDS = ("entry", "internal", "exit")
PHASES = ("go", "cross")


class ScenarioError(ValueError):
    """Raised when a scenario document is structurally invalid."""


class DimensionError(ValueError):
    """Raised when state, action or demand vectors do not match the scenario."""


class GreenTimeError(ValueError):
    """Raised when a green time lies outside its admissible bounds."""


@dataclass(frozen=True)
class RoadSpec:
    id: str
    length_m: float
    kind: str
    intersection: str
    phase: str = "go"


@dataclass(frozen=True)
class Intersection:
    id: str
    incoming: tuple[str, ...]
    outgoing: tuple[str, ...]


@dataclass(frozen=True)
class Scenario:
    """Network topology plus the physical and signal-timing parameters.

    ``turning`` is a dense ``(n_roads, n_roads)`` array where
    ``turning[p, r]`` is the share of road ``p``'s outflow sent to road ``r``.
    ``demand`` holds the mean exogenous arrival rate (veh/s) per road and is
    zero everywhere except on entry roads.
    """

    roads: tuple[RoadSpec, ...]
    turning: np.ndarray
    demand: np.ndarray
    saturation_flow: float = 3600.0
    cycle_time: float = 120.0
    control_interval: float = 200.0
    vehicle_length: float = 5.0
    green_bounds: tuple[int, int] = (30, 90)
    initial_queue: float = 20.0
    initial_green: float | None = None
    intersections: tuple[Intersection, ...] = field(init=False)
    levels: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        self._validate()
        ids = self.road_ids
        by_node: dict[str, list[str]] = {}
        for road in self.roads:
            by_node.setdefault(road.intersection, []).append(road.id)
        nodes = []
        for node in sorted(by_node):
            incoming = tuple(by_node[node])
            outgoing = tuple(
                ids[r]
                for r in range(len(ids))
                if any(self.turning[ids.index(p), r] > 0 for p in incoming)
            )
            nodes.append(Intersection(node, incoming, outgoing))
        object.__setattr__(self, "intersections", tuple(nodes))
        object.__setattr__(self, "levels", self._topological_levels())
        self.turning.setflags(write=False)
        self.demand.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    # -- structure -----------------------------------------------------

    @property
    def road_ids(self) -> list[str]:
        return [r.id for r in self.roads]

    @property
    def intersection_ids(self) -> list[str]:
        return [node.id for node in self.intersections]

    @property
    def n_roads(self) -> int:
        return len(self.roads)

    @property
    def n_intersections(self) -> int:
        return len(self.intersections)

    @cached_property
    def entry_mask(self) -> np.ndarray:
        return np.array([r.kind == "entry" for r in self.roads])

    @property
    def saturation_veh_s(self) -> float:
        return self.saturation_flow / 3600.0

    @cached_property
    def road_intersection_index(self) -> np.ndarray:
        ids = self.intersection_ids
        return np.array([ids.index(r.intersection) for r in self.roads])

    @cached_property
    def cross_mask(self) -> np.ndarray:
        return np.array([r.phase == "cross" for r in self.roads])

    @property
    def default_green(self) -> float:
        if self.initial_green is not None:
            return float(self.initial_green)
        return 0.5 * (self.green_bounds[0] + self.green_bounds[1])

    def initial_state(self) -> np.ndarray:
        return np.full(self.n_roads, float(self.initial_queue))

    def initial_action(self) -> np.ndarray:
        return np.full(self.n_intersections, self.default_green)

    def with_demand(self, mean: float | Mapping[str, float]) -> "Scenario":
        """Copy of the scenario with new entry-road demand means."""
        if isinstance(mean, Mapping):
            demand = _demand_vector(self.roads, mean)
        else:
            demand = np.where(self.entry_mask, float(mean), 0.0)
        return Scenario(
            roads=self.roads,
            turning=self.turning.copy(),
            demand=demand,
            saturation_flow=self.saturation_flow,
            cycle_time=self.cycle_time,
            control_interval=self.control_interval,
            vehicle_length=self.vehicle_length,
            green_bounds=self.green_bounds,
            initial_queue=self.initial_queue,
            initial_green=self.initial_green,
        )

    def _validate(self):
        n = len(self.roads)
        if n == 0:
            raise ScenarioError("scenario has no roads")
        ids = [r.id for r in self.roads]
        if len(set(ids)) != n:
            raise ScenarioError("duplicate road ids")
        for road in self.roads:
            if road.kind not in ROAD_KINDS:
                raise ScenarioError(f"road {road.id}: kind must be one of {ROAD_KINDS}")
            if road.phase not in PHASES:
                raise ScenarioError(f"road {road.id}: phase must be one of {PHASES}")
            if not road.length_m > 0:
                raise ScenarioError(f"road {road.id}: length_m must be positive")
        for name in ("saturation_flow", "cycle_time", "control_interval", "vehicle_length"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        lo, hi = self.green_bounds
        if not 0 < lo <= hi <= self.cycle_time:
            raise ScenarioError("green_bounds must satisfy 0 < min <= max <= cycle_time")
        if self.initial_queue < 0:
            raise ScenarioError("initial_queue must be non-negative")
        if self.turning.shape != (n, n):
            raise ScenarioError(f"turning matrix must be {n}x{n}")
        if np.any(self.turning < 0) or np.any(self.turning > 1):
            raise ScenarioError("turning rates must lie in [0, 1]")
        sums = self.turning.sum(axis=1)
        for j, s in enumerate(sums):
            if s > 0 and abs(s - 1.0) > 1e-9:
                raise ScenarioError(f"turning row {ids[j]} sums to {s}, expected 1")
        if self.demand.shape != (n,):
            raise ScenarioError("demand vector has wrong length")
        if np.any(self.demand < 0):
            raise ScenarioError("demand must be non-negative")
        entry = np.array([r.kind == "entry" for r in self.roads])
        if np.any(self.demand[~entry] != 0):
            raise ScenarioError("demand may only be placed on entry roads")
        if not entry.any():
            raise ScenarioError("scenario has no entry roads")
        reach = entry.copy()
        for _ in range(n):
            reach = reach | (self.turning[reach].sum(axis=0) > 0)
        for j, road in enumerate(self.roads):
            if not reach[j]:
                raise ScenarioError(f"road {road.id} is unreachable from any entry road")

    def _topological_levels(self) -> tuple[np.ndarray, ...]:
        n = self.n_roads
        upstream = [set(np.nonzero(self.turning[:, r])[0]) for r in range(n)]
        done: set[int] = set()
        levels = []
        while len(done) < n:
            ready = [r for r in range(n) if r not in done and upstream[r] <= done]
            if not ready:
                raise ScenarioError("turning graph contains a cycle")
            levels.append(np.array(ready))
            done.update(ready)
        return tuple(levels)

    # -- serialisation -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        try:
            roads = tuple(
                RoadSpec(
                    id=str(r["id"]),
                    length_m=float(r["length_m"]),
                    kind=str(r["kind"]),
                    intersection=str(r["intersection"]),
                    phase=str(r.get("phase", "go")),
                )
                for r in doc["roads"]
            )
            params = doc.get("params", {})
        except KeyError as exc:
            raise ScenarioError(f"missing field {exc.args[0]!r}") from None
        ids = [r.id for r in roads]
        turning = np.zeros((len(roads), len(roads)))
        for src, row in doc.get("turning", {}).items():
            for dst, rate in row.items():
                if src not in ids or dst not in ids:
                    raise ScenarioError(f"turning refers to unknown road {src}->{dst}")
                turning[ids.index(src), ids.index(dst)] = float(rate)
        kwargs = {}
        for key, name in _PARAM_KEYS.items():
            if key in params:
                kwargs[name] = float(params[key])
        if "green_min_s" in params or "green_max_s" in params:
            kwargs["green_bounds"] = (
                int(params.get("green_min_s", 30)),
                int(params.get("green_max_s", 90)),
            )
        return cls(
            roads=roads,
            turning=turning,
            demand=_demand_vector(roads, doc.get("demand", {})),
            **kwargs,
        )

    def to_dict(self) -> dict:
        ids = self.road_ids
        turning = {}
        for p in range(self.n_roads):
            row = {ids[r]: float(self.turning[p, r]) for r in range(self.n_roads) if self.turning[p, r] > 0}
            if row:
                turning[ids[p]] = row
        params = {key: getattr(self, name) for key, name in _PARAM_KEYS.items()}
        if params["initial_green_s"] is None:
            del params["initial_green_s"]
        params["green_min_s"], params["green_max_s"] = self.green_bounds
        return {
            "roads": [
                {"id": r.id, "length_m": r.length_m, "kind": r.kind,
                 "intersection": r.intersection, "phase": r.phase}
                for r in self.roads
            ],
            "turning": turning,
            "params": params,
            "demand": {ids[j]: float(self.demand[j]) for j in range(self.n_roads) if self.roads[j].kind == "entry"},
        }


_PARAM_KEYS = {
    "cycle_s": "cycle_time",
    "interval_s": "control_interval",
    "saturation_veh_h": "saturation_flow",
    "vehicle_len_m": "vehicle_length",
    "initial_queue_veh": "initial_queue",
    "initial_green_s": "initial_green",
}


def _demand_vector(roads: Sequence[RoadSpec], demand: Mapping[str, float]) -> np.ndarray:
    ids = [r.id for r in roads]
    vec = np.zeros(len(roads))
    for rid, mean in demand.items():
        if rid not in ids:
            raise ScenarioError(f"demand refers to unknown road {rid}")
        vec[ids.index(rid)] = float(mean)
    return vec


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        return Scenario.from_dict(json.load(fh))


def default_scenario_path() -> Path:
    return Path(__file__).with_name("data") / "default_scenario.json"


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())


# -- dynamics ----------------------------------------------------------


def capacity(scenario: Scenario) -> np.ndarray:
    """Per-road storage capacity in vehicles (road length / vehicle length)."""
    return np.array([r.length_m for r in scenario.roads]) / scenario.vehicle_length


def outflow_rate(green_time, saturation_flow: float, cycle_time: float, bounds=None):
    """Cycle-averaged discharge rate in veh/s.

    ``saturation_flow`` is in veh/h. With ``bounds`` the green time must lie
    inside ``[min, max]``; otherwise it only has to fit inside the cycle.
    """
    g = np.asarray(green_time, dtype=float)
    lo, hi = bounds if bounds is not None else (0.0, cycle_time)
    if np.any(g < lo) or np.any(g > hi):
        raise GreenTimeError(f"green time {green_time} outside [{lo}, {hi}]")
    rate = saturation_flow / 3600.0 * g / cycle_time
    return float(rate) if rate.ndim == 0 else rate


def inflow_rate(road: int, turning: np.ndarray, outflow: np.ndarray) -> float:
    """Routed inflow (veh/s) into ``road`` from the upstream outflow rates."""
    return float(np.dot(turning[:, road], outflow))


def road_greens(scenario: Scenario, joint_action) -> np.ndarray:
    """Expand per-intersection green times to per-road green times.

    Accepts ``(n_intersections,)`` or a batch ``(m, n_intersections)``.
    """
    a = np.asarray(joint_action, dtype=float)
    g = a[..., scenario.road_intersection_index]
    return np.where(scenario.cross_mask, scenario.cycle_time - g, g)


def check_action(scenario: Scenario, joint_action) -> np.ndarray:
    a = np.asarray(joint_action, dtype=float)
    if a.shape[-1:] != (scenario.n_intersections,):
        raise DimensionError(
            f"joint action has {a.shape[-1] if a.ndim else 0} entries, "
            f"scenario has {scenario.n_intersections} intersections"
        )
    lo, hi = scenario.green_bounds
    if np.any(a < lo) or np.any(a > hi):
        raise GreenTimeError(f"joint action {a.tolist()} outside green bounds [{lo}, {hi}]")
    return a


def discharge_capacity(scenario: Scenario, joint_actions) -> np.ndarray:
    """Vehicles each road can discharge in one interval under the given actions."""
    greens = road_greens(scenario, joint_actions)
    return scenario.saturation_veh_s * greens / scenario.cycle_time * scenario.control_interval


def advance(queues, discharge, demand, turning, disturbance, scenario: Scenario) -> np.ndarray:
    """Queue update given precomputed discharge capacities (vehicles per interval).

    Works on a single ``(n_roads,)`` state or a ``(m, n_roads)`` batch.
    """
    q = np.asarray(queues, dtype=float)
    base = np.asarray(demand, dtype=float) * scenario.control_interval
    out = np.zeros_like(q)
    # one sweep per topological level settles every road's discharge; a road
    # cannot discharge more than is present plus what arrives this interval
    for _ in scenario.levels:
        out = np.minimum(discharge, q + base + out @ turning)
    return np.maximum(q + base + out @ turning - out + disturbance, 0.0)


def step_batch(queues, joint_action, demand, turning, disturbance, scenario: Scenario) -> np.ndarray:
    """Vectorised transition over a leading batch axis.

    ``queues`` is ``(m, n_roads)`` and ``joint_action`` ``(m, n_intersections)``;
    ``demand``, ``turning`` and ``disturbance`` are shared across the batch
    (``disturbance`` may also be ``(m, n_roads)``).
    """
    return advance(queues, discharge_capacity(scenario, joint_action), demand, turning, disturbance, scenario)


def step(state, joint_action, demand, turning, disturbance, scenario: Scenario) -> np.ndarray:
    """Advance the network one control interval. Returns a new queue vector."""
    s = np.asarray(state, dtype=float)
    n = scenario.n_roads
    if s.shape != (n,):
        raise DimensionError(f"state has shape {s.shape}, scenario has {n} roads")
    a = check_action(scenario, joint_action)
    if a.ndim != 1:
        raise DimensionError("step expects a single joint action; use step_batch")
    d = np.asarray(demand, dtype=float)
    e = np.asarray(disturbance, dtype=float)
    tau = np.asarray(turning, dtype=float)
    if d.shape != (n,) or e.shape != (n,) or tau.shape != (n, n):
        raise DimensionError("demand/disturbance/turning do not match the road count")
    if np.any(d[~scenario.entry_mask] != 0):
        raise DimensionError("demand may only be applied to entry roads")
    return advance(s, discharge_capacity(scenario, a), d, tau, e, scenario)


def overflow_vector(state, capacities) -> np.ndarray:
    """Positive part of queue minus capacity, per road."""
    s = np.asarray(state, dtype=float)
    c = np.asarray(capacities, dtype=float)
    if s.shape[-1] != c.shape[-1]:
        raise DimensionError("state and capacity vectors differ in length")
    return np.maximum(s - c, 0.0)


def overflowed(state, capacities) -> bool:
    return bool(np.any(overflow_vector(state, capacities) > 0))
