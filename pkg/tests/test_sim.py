import math
import random
from fractions import Fraction

import pytest

from ppmdp.core import (CountableMdp, FrontierPolicy, StateKind, TailLabel, as_countable,
                        truncate)
from ppmdp.families import (cobuchi_escalating, cobuchi_infbranch, incomparable,
                            incomparable_exit_at, ladder_divergence_rule,
                            ladder_escalating, ladder_fd_table, ladder_limsup,
                            randf_escalating, randf_escalating_pass_process, randf_ladder,
                            randf_mr_pass_process, randf_mr_table)
from ppmdp.objectives import Verdict, liminf_geq0, limsup_geq0, reach
from ppmdp.sim import (CycleReport, InvalidStrategy, NoLassoFound, UnsupportedSpec,
                       cycle_analysis, estimate_attainment, hoeffding_slack,
                       lasso_attainment, pass_process_estimate, run_strategy,
                       survival_product)
from ppmdp.solve import iter_md_policies, evaluate_md, solve_reachability
from ppmdp.strategies import from_finite_policy, md_machine
from conftest import random_finite_mdp

F = Fraction


def test_run_strategy_deterministic_per_seed(corpus):
    fm = corpus[0]
    m = as_countable(fm)
    machine = from_finite_policy(fm, next(iter_md_policies(fm)))
    r1 = run_strategy(m, machine, seed=42, horizon=300)
    r2 = run_strategy(m, machine, seed=42, horizon=300)
    assert r1.states == r2.states and r1.rewards == r2.rewards
    r3 = run_strategy(m, machine, seed=43, horizon=300)
    assert len(r3.states) == len(r1.states)


def test_run_strategy_stops_at_tail_label():
    m = randf_ladder()
    # always exit at rung 1: half the runs drop to the losing tail quickly
    mach = randf_mr_table({1: F(1)})
    hits = 0
    for seed in range(40):
        run = run_strategy(m, mach, seed=seed, horizon=500)
        if run.tail is not None:
            hits += 1
            assert run.tail == TailLabel(F(-1), F(-1))
            assert run.states[-1] == ("bot", 0)
    assert hits > 5


def test_run_strategy_rejects_bad_choice_index():
    m = ladder_limsup()
    bad = md_machine(lambda s, ch: 5)
    with pytest.raises(InvalidStrategy):
        run_strategy(m, bad, seed=0, horizon=10)


def test_estimate_brackets_cover_exact_value(corpus):
    for i, fm in enumerate(corpus[:3]):
        target = fm.ids[fm.n_states() - 1]
        obj = reach({target})
        policy = next(iter_md_policies(fm))
        exact = evaluate_md(fm, policy, obj)[fm.initial]
        machine = from_finite_policy(fm, policy)
        est = estimate_attainment(as_countable(fm), machine, obj, horizon=200,
                                  samples=1500, delta=0.02, seed=100 + i)
        assert est.lower <= float(exact) <= est.upper


def test_estimate_threads_do_not_change_counts(corpus):
    fm = corpus[1]
    obj = reach({fm.ids[fm.n_states() - 1]})
    machine = from_finite_policy(fm, next(iter_md_policies(fm)))
    a = estimate_attainment(as_countable(fm), machine, obj, 100, 400, 0.05, 7, threads=1)
    b = estimate_attainment(as_countable(fm), machine, obj, 100, 400, 0.05, 7, threads=4)
    assert (a.sat_frac, a.viol_frac) == (b.sat_frac, b.viol_frac)


def test_lasso_attainment_examples():
    m = ladder_limsup()
    always_reset = ladder_fd_table(1, {0: ("reset", 0)}, {0: 0})
    verdict, lasso, info = lasso_attainment(m, always_reset, limsup_geq0)
    assert verdict is Verdict.VIOL
    assert {str(t.reward) for t in lasso.cycle} == {"-1"}
    # two-mode table: reset on mode 1 only; cycle spans two climbs
    tab = ladder_fd_table(2, {0: ("continue", 1), 1: ("reset", 0)}, {0: 0, 1: 1})
    verdict, lasso, info = lasso_attainment(m, tab, limsup_geq0,
                                            divergence=ladder_divergence_rule(2))
    assert verdict is Verdict.VIOL
    if lasso is not None:
        assert max(t.reward for t in lasso.cycle) < 0


def test_lasso_attainment_divergence_certificate():
    m = ladder_limsup()
    climber = ladder_fd_table(3, {0: ("continue", 1), 1: ("continue", 2),
                                  2: ("continue", 0)}, {0: 0, 1: 1, 2: 2})
    verdict, lasso, info = lasso_attainment(m, climber, limsup_geq0,
                                            divergence=ladder_divergence_rule(3))
    assert verdict is Verdict.VIOL and lasso is None and info["kind"] == "diverging"


def test_lasso_attainment_budget_error():
    m = ladder_limsup()
    climber = ladder_fd_table(1, {0: ("continue", 0)}, {0: 0})
    with pytest.raises(NoLassoFound):
        lasso_attainment(m, climber, limsup_geq0, budget=50)


def test_survival_product_bracket_tightness():
    lo, hi = survival_product(lambda k: F(1, 2 ** k), lambda k: F(1, 2 ** k))
    assert hi - lo <= F(1, 10 ** 12)
    # partial products of prod(1 - 2^-k) approach ~0.2887880951
    assert abs(float(lo) - 0.288788095) < 1e-6


def test_cycle_analysis_examples():
    esc = cycle_analysis("randf_ladder", {}, {"type": "escalating", "offset": 0})
    assert esc.value_bracket[1] <= F(1, 2)  # first pass already fails w.p. 1/2
    lad = cycle_analysis("ladder_limsup", {}, {"type": "escalating"})
    assert lad.value_exact == 1
    fd = cycle_analysis("ladder_limsup", {}, {"type": "fixed", "branch": 4})
    assert fd.value_exact == 0 and fd.detail["cycle_limsup"] == F(-1, 4)
    co1 = cycle_analysis("cobuchi_infbranch", {}, {"type": "escalating", "offset": 0})
    assert co1.value_exact == 1
    co0 = cycle_analysis("cobuchi_infbranch", {},
                         {"type": "table", "weights": {2: F(1, 2), 5: F(1, 2)}})
    assert co0.value_exact == 0
    delta = co0.detail["per_cycle_fail"]
    assert delta == F(1, 2) * F(1, 4) + F(1, 2) * F(1, 32)
    n = co0.detail["breach_horizon"]
    assert (1 - delta) ** n < F(1, 10 ** 6) <= (1 - delta) ** (n - 1)
    inc = cycle_analysis("incomparable", {}, {"type": "exit_at", "i": 3})
    assert inc.value_exact == F(7, 8)
    with pytest.raises(UnsupportedSpec):
        cycle_analysis("randf_ladder", {}, {"type": "mystery"})


def test_pass_process_agrees_with_step_simulation():
    # small scale: the embedded pass engine and the generic stepper see the
    # same absorption statistics for the escalating strategy
    offset = 2
    horizon, samples = 400, 3000
    proc = randf_escalating_pass_process(offset)
    est = pass_process_estimate(proc, horizon, samples, 0.05, seed=5)
    m = randf_ladder()
    mach = randf_escalating(offset)
    absorbed = 0
    for i in range(800):
        run = run_strategy(m, mach, seed=(9 << 20) ^ i, horizon=horizon)
        if run.tail is not None:
            absorbed += 1
    frac_step = absorbed / 800
    assert abs(frac_step - est.viol_frac) < 0.05


def test_incomparable_exit_strategy_runs():
    m = incomparable()
    run = run_strategy(m, incomparable_exit_at(3), seed=0, horizon=50)
    assert run.tail == TailLabel(F(7, 8), F(7, 8))
