from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trafficq.agent import rollout
from trafficq.harness import oracle_search
from trafficq.horizon import (
    ActionGrid,
    GenerationLog,
    HorizonParams,
    NoEvaluatedActions,
    adaptive_train,
    build_actions,
    contract,
    fixed_action_costs,
    marginal_costs,
    shift,
)
from trafficq.stochastics import UncertaintyConfig

BOUNDS = (30, 90)


def test_initial_grid_values():
    g = ActionGrid.uniform(4, 30, 90, 7)
    assert g.values(0) == [30, 40, 50, 60, 70, 80, 90]
    acts = build_actions(g)
    assert acts.shape == (2401, 4)
    assert acts[0].tolist() == [30, 30, 30, 30] and acts[1].tolist() == [30, 30, 30, 40]


def test_degenerate_and_endpoint_grids():
    assert build_actions(ActionGrid((60,), (60,), 7)).tolist() == [[60]]
    acts = build_actions(ActionGrid((50, 50), (60, 60), 2))
    assert acts.tolist() == [[50, 50], [50, 60], [60, 50], [60, 60]]


def test_narrow_interval_uses_every_integer():
    g = ActionGrid((54,), (60,), 7)
    assert g.values(0) == list(range(54, 61))
    assert g.spacing(0) == 1


def stats_with_best(grid, best):
    return [{v: abs(v - b) for v in grid.values(i)} for i, b in enumerate(best)]


def test_contract_examples():
    g = ActionGrid.uniform(1, 30, 90, 7)
    c = contract(g, stats_with_best(g, [60]), BOUNDS)
    assert (c.lo, c.hi) == ((50,), (70,))
    g5 = ActionGrid((50,), (70,), 5)
    c5 = contract(g5, stats_with_best(g5, [55]), BOUNDS)
    assert (c5.lo, c5.hi) == ((50,), (60,))
    assert g5.contains(c5)
    c0 = contract(g, stats_with_best(g, [30]), BOUNDS)
    assert (c0.lo, c0.hi) == ((30,), (40,))
    assert c.generation == 1


def test_contract_requires_stats():
    g = ActionGrid.uniform(2, 30, 90)
    with pytest.raises(NoEvaluatedActions, match="no evaluated actions"):
        contract(g, [{}, {}], BOUNDS)


def test_shift_examples():
    g = ActionGrid((55,), (65,), 7)
    s = shift(g, 0, 1, 5, BOUNDS)
    assert (s.lo, s.hi) == ((60,), (70,))
    s = shift(ActionGrid((30,), (40,), 7), 0, -1, 5, BOUNDS)
    assert (s.lo, s.hi) == ((30,), (40,))
    s = shift(g, 0, 1, 0, BOUNDS)
    assert (s.lo, s.hi) == (g.lo, g.hi)
    with pytest.raises(ValueError):
        shift(g, 0, 2, 5, BOUNDS)


@st.composite
def grid_and_stats(draw):
    n = draw(st.integers(1, 3))
    nv = draw(st.integers(2, 9))
    lo, hi = [], []
    for _ in range(n):
        a = draw(st.integers(30, 90))
        b = draw(st.integers(a, 90))
        lo.append(a)
        hi.append(b)
    g = ActionGrid(tuple(lo), tuple(hi), nv)
    stats = [{v: draw(st.floats(0, 10)) for v in g.values(i)} for i in range(n)]
    return g, stats


@given(grid_and_stats())
def test_contract_subset_count_and_spacing(gs):
    g, stats = gs
    c = contract(g, stats, BOUNDS)
    assert g.contains(c)
    assert c.action_count == g.action_count
    for i in range(g.n_intersections):
        assert c.spacing(i) <= g.spacing(i)
        assert BOUNDS[0] <= c.lo[i] <= c.hi[i] <= BOUNDS[1]


@given(grid_and_stats())
def test_contract_keeps_best_value(gs):
    g, stats = gs
    c = contract(g, stats, BOUNDS)
    for i, s in enumerate(stats):
        best = min(sorted(s), key=lambda v: s[v])
        assert c.lo[i] <= best <= c.hi[i]


def test_spacing_reaches_one_in_few_generations():
    g = ActionGrid.uniform(1, 30, 90, 7)
    for m in range(10):
        if g.all_converged():
            break
        g = contract(g, stats_with_best(g, [47]), BOUNDS)
    assert g.all_converged() and m <= 4
    assert g.lo[0] <= 47 <= g.hi[0]


@given(grid_and_stats(), st.integers(0, 10), st.sampled_from([-1, 1]))
def test_shift_preserves_width_and_bounds(gs, eta, d):
    g, _ = gs
    s = shift(g, 0, d, eta, BOUNDS)
    assert s.width(0) == g.width(0)
    assert BOUNDS[0] <= s.lo[0] and s.hi[0] <= BOUNDS[1]
    assert s.lo[1:] == g.lo[1:] and s.hi[1:] == g.hi[1:]


def test_marginal_costs_average_per_value():
    acts = [[30, 30], [30, 60], [60, 30], [60, 60]]
    stats = marginal_costs(acts, [1, 3, 5, 7])
    assert stats == [{30: 2.0, 60: 6.0}, {30: 3.0, 60: 5.0}]


def test_fixed_action_costs_match_rollouts(toy_cfg):
    sc = toy_cfg.scenario
    acts = build_actions(ActionGrid.uniform(1, 30, 90, 7))
    costs, over = fixed_action_costs(sc, acts, sc.initial_state(), 4, toy_cfg.reward)
    for k, a in enumerate(acts):
        t = rollout(lambda s, t, p: 0, sc, [a], sc.initial_state(), 4, reward_params=toy_cfg.reward)
        assert costs[k] == pytest.approx(t.total_cost, rel=1e-12)
        assert over[k] == t.any_overflow


@pytest.fixture(scope="module")
def toy_adaptive(toy_cfg):
    cfg = replace(toy_cfg, n_values=7)
    hp = HorizonParams(rounds_per_generation=1500)
    return cfg, adaptive_train(cfg.scenario, cfg.agent, hp, 0, initial_grid=cfg.initial_grid(),
                               reward_params=cfg.reward, encoder=cfg.encoder)


def test_toy_final_interval_contains_integer_optimum(toy_adaptive):
    cfg, res = toy_adaptive
    oracle = oracle_search(cfg.scenario, cfg.agent.horizon, "fixed_action", None, cfg.reward)
    best = int(oracle.best_actions[0, 0])
    assert res.grid.lo[0] <= best <= res.grid.hi[0]
    assert res.grid.all_converged()


def test_toy_log_properties(toy_adaptive, tmp_path):
    _, res = toy_adaptive
    log = res.log
    assert log.subset_violations() == 0
    assert len(set(log.action_counts())) == 1
    best = [r.best_cost for r in log.records]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    spacing = [r.grid.spacing(0) for r in log.records if r.phase != "shift"]
    assert all(s2 <= s1 for s1, s2 in zip(spacing, spacing[1:]))
    log.to_csv(tmp_path / "g.csv")
    rows = GenerationLog.read_csv(tmp_path / "g.csv")
    assert len(rows) == len(log.records)
    assert list(rows[0]) == list(GenerationLog.FIELDS)
    assert [int(r["generation"]) for r in rows] == [r.generation for r in log.records]


def test_probe_budget_and_noise_are_replayable(toy_cfg):
    cfg = replace(toy_cfg, n_values=7)
    hp = HorizonParams(rounds_per_generation=200, probe_budget=4, max_generations=4)
    unc = UncertaintyConfig(demand_pct=10)
    runs = [adaptive_train(cfg.scenario, cfg.agent, hp, 3, reward_params=cfg.reward, uncertainty=unc,
                           encoder=cfg.encoder) for _ in range(2)]
    assert runs[0].log.rows() == runs[1].log.rows()
    assert len(runs[0].log) <= hp.max_generations


def test_horizon_params_validation():
    with pytest.raises(ValueError):
        HorizonParams(shift_leeway=0)
