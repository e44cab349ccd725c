import math

import numpy as np
import pytest

from _models import calm, line_mission
from rendezvous_cmdp.cmdp import build_cmdp
from rendezvous_cmdp.lp import extract_policy, solve_cmdp
from rendezvous_cmdp.mission import benchmark_mission
from rendezvous_cmdp.sim import (OUT_OF_CHARGE, SUCCESS, GreedyPolicy, Simulator, evaluate, greedy_compare,
                                 pareto_sweep, rows_to_csv, unconstrained_optimum)


@pytest.fixture(scope="module")
def bench():
    m = benchmark_mission(n_uav_nodes=6, energy_samples=2000)
    model = build_cmdp(m)
    pol = extract_policy(solve_cmdp(model, 0.1), model, seed=0)
    return m, model, pol


def test_forward_only_run():
    m = line_mission([(0, 0), (1500, 0), (3000, 400), (4200, 400)], params=calm())
    tr = Simulator(m, GreedyPolicy(1.0)).rollout(0, 0)
    assert tr.outcome == SUCCESS and tr.rendezvous == 0
    expect = (1500 + math.hypot(1500, 400) + 1200) / m.vehicle.v_br
    assert tr.time == pytest.approx(expect)
    assert tr.distance == pytest.approx(expect * m.vehicle.v_br)


def test_low_start_runs_out_on_first_leg():
    m = line_mission([(0, 0), (8000, 0), (16000, 0)], initial_soc_bin=5)
    tr = Simulator(m, GreedyPolicy(1.0)).rollout(0, 0)
    assert tr.outcome == OUT_OF_CHARGE
    assert len(tr.events) == 1 and tr.events[0].k == 0
    assert tr.distance < 8000


def test_greedy_validation():
    for bad in (0, -5, 100.5):
        with pytest.raises(ValueError):
            GreedyPolicy(bad)


def test_rollout_deterministic(bench):
    m, model, pol = bench
    sim = Simulator(m, pol, model)
    a, b = sim.rollout(3, 17), sim.rollout(3, 17)
    assert a == b
    assert sim.rollout(4, 17) != a or sim.rollout(3, 18) != a


def test_single_trial_totals(bench):
    m, model, pol = bench
    sim = Simulator(m, pol, model)
    tr = sim.rollout(5, 0)
    rep = evaluate(sim, 1, 5)
    assert rep.trials == 1
    if tr.outcome == SUCCESS:
        assert rep.mean_time == pytest.approx(tr.time) and rep.std_time == 0
        assert rep.mean_rendezvous == tr.rendezvous
    else:
        assert rep.failures == 1 and math.isnan(rep.mean_time)


def test_pooled_ranges_match_one_run(bench):
    m, model, pol = bench
    sim = Simulator(m, pol, model)
    a = evaluate(sim, 150, 9, first_trial=0)
    b = evaluate(sim, 150, 9, first_trial=150)
    both = evaluate(sim, 300, 9)
    assert a.failures + b.failures == both.failures
    na, nb = a.trials - a.failures, b.trials - b.failures
    assert (a.mean_time * na + b.mean_time * nb) / (na + nb) == pytest.approx(both.mean_time, rel=1e-12)


def test_jobs_do_not_change_results(bench):
    m, model, pol = bench
    sim = Simulator(m, pol, model)
    assert evaluate(sim, 200, 2, jobs=1) == evaluate(sim, 200, 2, jobs=3)


def test_greedy_full_threshold_meets_at_every_leg():
    m = benchmark_mission(energy_samples=2000)
    sim = Simulator(m, GreedyPolicy(100.0))
    tr = sim.rollout(0, 0)
    # the first leg starts full, after that every recharge leaves the battery below 100 %
    assert tr.outcome == SUCCESS
    assert tr.rendezvous == len(m.uav_route) - 1


def test_greedy_low_threshold_never_meets():
    m = line_mission([(0, 0), (3000, 0), (6000, 0), (9000, 0)])
    rep = evaluate(Simulator(m, GreedyPolicy(1.0)), 50, 0)
    assert rep.failures == 0 and rep.mean_rendezvous == 0


def test_duplicate_deltas_give_identical_rows(bench):
    m, model, _ = bench
    rows = pareto_sweep(m, [0.1, 0.1], 100, 1, model=model)
    assert rows[0] == rows[1]


def test_delta_one_row_equals_value_iteration(bench):
    m, model, _ = bench
    (row,) = pareto_sweep(m, [1.0], 20, 1, model=model)
    assert row.lp_objective_s == pytest.approx(unconstrained_optimum(model), abs=1e-6)


def test_infeasible_row():
    m = line_mission([(0, 0), (20_000, 0)], road_x=(0.0, 1000.0), ugv_route=(0, 1))
    (row,) = pareto_sweep(m, [0.01], 10, 0)
    assert row.status == "infeasible" and 0.1 < row.model_risk < 0.3
    text = rows_to_csv([row])
    assert text.splitlines()[1].endswith(",infeasible")


def test_quantized_simulator_reproduces_model_risk(bench):
    m, model, pol = bench
    sim = Simulator(m, pol, model, quantize=True)
    n = 3000
    rep = evaluate(sim, n, 11)
    r = sim.model_risk
    assert abs(rep.failure_rate - r) <= 3 * math.sqrt(r * (1 - r) / n)


def test_greedy_compare_rows(bench):
    m, model, _ = bench
    rows = greedy_compare(m, [40, 60], 50, 0, model=model)
    assert [r.label for r in rows] == ["greedy-40", "greedy-60", "cmdp"]
    csv = rows_to_csv(rows, "seed=0", label_column=True).splitlines()
    assert csv[0] == "# seed=0" and csv[1].startswith("policy,delta,")
    assert len(csv) == 5


def test_unknown_lookup_rejected(bench):
    m, model, pol = bench
    with pytest.raises(ValueError):
        Simulator(m, pol, model, lookup="other")
