import time
from dataclasses import dataclass
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from trafficq import harness
from trafficq.config import default_config, load_config
from trafficq.stochastics import ROLLOUT, rng_stream

settings.register_profile(
    "trafficq", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("trafficq")

DATA = Path(harness.__file__).with_name("data")
PAIRED_SEEDS = range(10)

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_cfg():
    return default_config()


@pytest.fixture(scope="session")
def toy_cfg():
    return load_config(DATA / "toy_scenario.json")


@dataclass
class PairedRun:
    seed: int
    regular: object
    adaptive: object
    controller: harness.Controller
    log: object


@pytest.fixture(scope="session")
def paired_runs(default_cfg):
    """Reg-RL and Adaptive-RL on the default scenario for ten paired seeds."""
    t0 = time.perf_counter()
    runs = []
    for seed in PAIRED_SEEDS:
        regular = harness.run_regular(default_cfg, seed)
        ctrl, glog = harness.train_adaptive(default_cfg, seed)
        adaptive = ctrl.rollout(default_cfg, rng_stream(seed, ROLLOUT, 0))
        runs.append(PairedRun(seed, regular, adaptive, ctrl, glog))
    return runs, time.perf_counter() - t0
