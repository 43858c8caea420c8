import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trafficq.agent import (
    AgentParams,
    QTable,
    StateEncoder,
    cost_of_sequence,
    greedy_rollout,
    select_action,
    train,
    update,
)
from trafficq.network import Scenario
from trafficq.reward import RewardParams
from trafficq.stochastics import UncertaintyConfig, rng_stream


def one_junction(demand=(0.35, 0.25), queue=20):
    return Scenario.from_dict({
        "roads": [
            {"id": "a", "length_m": 400, "kind": "entry", "intersection": "J", "phase": "go"},
            {"id": "b", "length_m": 400, "kind": "entry", "intersection": "J", "phase": "cross"},
        ],
        "demand": {"a": demand[0], "b": demand[1]},
        "params": {"initial_queue_veh": queue},
    })


# -- encoder -------------------------------------------------------------


def test_encoder_examples():
    enc = StateEncoder(bin_width=10, max_bins=15)
    assert enc.encode([0, 0]) == 0
    assert enc.encode([25, 0]) == 2
    assert enc.encode([0, 25]) == 32
    assert enc.encode([21, 3]) == enc.encode([29.9, 9.9])
    assert enc.encode([1000, 0]) == 15


def test_encoder_monitored_subset():
    enc = StateEncoder(monitored=(1,))
    assert enc.encode([500, 25]) == 2


def test_encoder_validation():
    with pytest.raises(ValueError):
        StateEncoder(bin_width=0.5)
    with pytest.raises(ValueError):
        StateEncoder(monitored=())
    with pytest.raises(ValueError):
        StateEncoder(include_step=True, step_radix=4).encode([0], step=4)


bins = st.lists(st.integers(0, 15), min_size=3, max_size=3)


@given(bins, bins, st.integers(0, 5), st.integers(0, 5), st.integers(-1, 8), st.integers(-1, 8))
def test_encoder_injective_over_bins(b1, b2, t1, t2, p1, p2):
    enc = StateEncoder(include_step=True, include_prev_action=True)
    q1, q2 = np.array(b1) * 10 + 5, np.array(b2) * 10 + 5
    same = enc.encode(q1, t1, p1) == enc.encode(q2, t2, p2)
    assert same == (b1 == b2 and t1 == t2 and p1 == p2)


# -- table and updates -----------------------------------------------------


def test_qtable_defaults_and_guards():
    q = QTable(3)
    assert q.get(99, 2) == 0.0
    assert (99, 2) not in q
    assert len(q) == 0
    with pytest.raises(IndexError):
        q.set(0, 3, 1.0)
    with pytest.raises(ValueError):
        q.set(0, 0, float("nan"))


def test_qtable_csv_round_trip(tmp_path):
    q = QTable(4)
    q.set(7, 1, -0.123456789012345)
    q.set(3, 3, 2.5)
    q.set(7, 0, 0.0)
    q.to_csv(tmp_path / "q.csv")
    back = QTable.from_csv(tmp_path / "q.csv", 4)
    assert back.as_dict() == q.as_dict()
    assert (tmp_path / "q.csv").read_text().splitlines()[0] == "state_id,action_index,q_value"


def test_select_action_exploit_ties_lowest():
    q = QTable(4)
    for a, v in enumerate([0, 5, 5, 1]):
        q.set(0, a, v)
    rng = rng_stream(0)
    assert select_action(q, 0, 4, 0.0, rng) == 1
    assert select_action(QTable(4), 1, 4, 0.0, rng) == 0


def test_select_action_full_exploration_replays():
    q = QTable(5)
    a = [select_action(q, 0, 5, 1.0, rng) for rng in [rng_stream(3)] for _ in range(20)]
    b = [select_action(q, 0, 5, 1.0, rng) for rng in [rng_stream(3)] for _ in range(20)]
    assert a == b
    assert len(set(a)) > 1


def test_update_examples():
    q = QTable(2)
    assert update(q, 0, 0, 0.0, 1, 0.1, 0.9) == 0
    assert update(q, 0, 1, 1.0, 1, 0.1, 0.9) == pytest.approx(0.1)
    q2 = QTable(2)
    q2.set(0, 0, 0.1)
    q2.set(1, 0, 0.1)
    assert update(q2, 0, 0, 1.0, 1, 0.1, 0.9) == pytest.approx(0.199)


def test_update_literal_rule():
    q = QTable(2)
    q.set(0, 0, 0.1)
    q.set(1, 0, 0.1)
    # 0.1 + 0.1 * (1 + 0.9 * (0.1 - 0.1))
    assert update(q, 0, 0, 1.0, 1, 0.1, 0.9, rule="literal") == pytest.approx(0.2)


def test_terminal_update_has_no_bootstrap():
    q = QTable(1)
    q.set(1, 0, 100.0)
    assert update(q, 0, 0, -1.0, None, 0.5, 0.9) == pytest.approx(-0.5)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2), st.floats(-5, 0), st.integers(0, 3)),
                min_size=1, max_size=200),
       st.floats(0.01, 1), st.floats(0, 0.95))
def test_q_values_stay_in_reward_bounds(transitions, alpha, gamma):
    r_max = 5.0
    q = QTable(3)
    for s, a, r, s2 in transitions:
        update(q, s, a, r, s2, alpha, gamma)
    vals = np.array([v for _, _, v in q.items()])
    assert np.all(vals <= 1e-12)
    assert np.all(vals >= -r_max / (1 - gamma) - 1e-9)


# -- params ----------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    {"learning_rate": 0}, {"discount": 1.5}, {"epsilon": -0.1}, {"episodes": -1},
    {"horizon": 0}, {"update_rule": "sarsa"},
])
def test_agent_params_validation(kw):
    with pytest.raises(ValueError):
        AgentParams(**kw)


def test_epsilon_annealing():
    p = AgentParams(epsilon=0.8, episodes=5, anneal_epsilon=True)
    assert [p.epsilon_at(e) for e in range(5)] == pytest.approx([0.8, 0.6, 0.4, 0.2, 0.0])
    assert AgentParams(epsilon=0.8).epsilon_at(1000) == 0.8


# -- training on a small junction -------------------------------------------


def test_zero_episodes_gives_empty_table():
    sc = one_junction()
    q, stats = train(sc, AgentParams(episodes=0), [[30], [60]], sc.initial_state(), rng_stream(0))
    assert len(q) == 0 and len(stats) == 0


def test_training_is_deterministic():
    sc = one_junction()
    p = AgentParams(episodes=200, horizon=4)
    unc = UncertaintyConfig(demand_pct=20)
    q1, s1 = train(sc, p, [[30], [60], [90]], sc.initial_state(), rng_stream(5), uncertainty=unc)
    q2, s2 = train(sc, p, [[30], [60], [90]], sc.initial_state(), rng_stream(5), uncertainty=unc)
    assert q1.as_dict() == q2.as_dict()
    assert s1.returns == s2.returns


def test_greedy_policy_matches_enumeration_on_two_actions():
    sc = one_junction()
    actions = [[30], [90]]
    params = AgentParams(episodes=600, horizon=2, discount=1.0, epsilon=1.0, anneal_epsilon=True,
                         learning_rate=0.3)
    enc = StateEncoder(include_step=True, include_prev_action=True)
    rp = RewardParams()
    seqs = list(itertools.product(range(2), repeat=2))
    assert len(seqs) == 4
    costs = {s: cost_of_sequence(sc, [actions[i] for i in s], sc.initial_state(), rp) for s in seqs}
    best = min(costs.values())
    q, _ = train(sc, params, actions, sc.initial_state(), rng_stream(1), encoder=enc)
    trace = greedy_rollout(q, sc, actions, sc.initial_state(), 2, encoder=enc)
    assert trace.total_cost == pytest.approx(best, abs=1e-9)


def test_zero_demand_costs_only_reflect_action_changes():
    sc = one_junction(demand=(0, 0), queue=0)
    q = QTable(2)
    q.set(0, 1, 1.0)
    trace = greedy_rollout(q, sc, [[30], [90]], sc.initial_state(), 3)
    assert not trace.states.any()
    # 90 chosen each step; the first change is from the 60 s midpoint
    np.testing.assert_allclose(trace.costs, [900 / 1e4, 0, 0])


def test_rollout_replay_identical():
    sc = one_junction()
    p = AgentParams(episodes=100, horizon=4)
    q, _ = train(sc, p, [[30], [60], [90]], sc.initial_state(), rng_stream(0))
    unc = UncertaintyConfig(demand_pct=30, turning_pct=10)
    t1 = greedy_rollout(q, sc, [[30], [60], [90]], sc.initial_state(), 4, rng_stream(9), uncertainty=unc)
    t2 = greedy_rollout(q, sc, [[30], [60], [90]], sc.initial_state(), 4, rng_stream(9), uncertainty=unc)
    np.testing.assert_array_equal(t1.states, t2.states)
    np.testing.assert_array_equal(t1.rewards, t2.rewards)


def test_trace_invariants():
    sc = one_junction(demand=(0.6, 0.6))
    q, _ = train(sc, AgentParams(episodes=50, horizon=6), [[30], [60], [90]], sc.initial_state(), rng_stream(0))
    t = greedy_rollout(q, sc, [[30], [60], [90]], sc.initial_state(), 6)
    assert t.horizon == 6 and t.states.shape == (6, 2)
    assert np.all(t.costs >= 0)
    np.testing.assert_array_equal(t.overflow, t.states > 80)
