import random
from fractions import Fraction

import pytest

from ppmdp.core import (FiniteMdp, FrontierPolicy, StateKind, Transition, truncate,
                        validate)
from ppmdp.families import incomparable, ladder_limsup
from ppmdp.objectives import (TransSet, buchi, cobuchi, liminf_geq0, limsup_geq0, reach,
                              safety)
from ppmdp.solve import (BudgetExceeded, bellman_residual_reach, bounded_avoid_values,
                         enumerate_strategies, evaluate_md, evaluate_md_expected,
                         fd_product, induced_chain, mec_decomposition, ref_of,
                         solve_buchi, solve_cobuchi, solve_expected, solve_reachability,
                         solve_reachability_edges, solve_safety, solve_threshold,
                         sure_avoid_sets, sure_safety_region)
from conftest import random_finite_mdp

F = Fraction


def _chain_mdp():
    # a -> b -> goal(loop), plus a dead self-loop state
    return FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.RANDOM, StateKind.CONTROLLED,
               StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(0)), Transition(3, None, F(0))],
            [Transition(2, F(1, 2), F(1)), Transition(3, F(1, 2), F(-1))],
            [Transition(2, None, F(1))],
            [Transition(3, None, F(-1))],
        ],
        initial=0, ids=["a", "b", "goal", "dead"])


def test_mec_decomposition_loops_and_closure():
    fm = _chain_mdp()
    mecs = mec_decomposition(fm)
    state_sets = sorted(sorted(m.states) for m in mecs)
    assert state_sets == [[2], [3]]
    # random state with an edge leaving a candidate set is never in a MEC
    assert all(1 not in m.states for m in mecs)


def test_reachability_examples():
    fm = _chain_mdp()
    vals, pol = solve_reachability(fm, {0})
    assert vals[0] == 1
    vals, pol = solve_reachability(fm, {2})
    assert vals[0] == F(1, 2)
    assert bellman_residual_reach(fm, vals, {2}) == 0
    # uniform: optimal from every state
    assert vals[1] == F(1, 2) and vals[2] == 1 and vals[3] == 0


def test_reachability_ladder_truncation_exit_edge():
    m = ladder_limsup()
    fm, idx = truncate(m, 5)
    reset = TransSet.where(lambda t: t.src == "(r,3)" and t.dst == "s0")
    vals, pol = solve_reachability_edges(fm, reset)
    assert vals[fm.initial] == 1  # all controlled: walk to r_3 and reset


def test_safety_trivial_cases(corpus):
    for fm in corpus[:3]:
        all_allowed = TransSet.where(lambda t: True)
        vals, _ = solve_safety(fm, all_allowed)
        assert all(v == 1 for v in vals)
        none_allowed = TransSet.where(lambda t: False)
        vals, _ = solve_safety(fm, none_allowed)
        assert all(v == 0 for v in vals)


def test_sure_safety_region_witness(corpus):
    allowed = TransSet.reward_at_least(F(0))
    for fm in corpus[:5]:
        region, witness = sure_safety_region(fm, allowed)
        for s in region:
            if fm.kinds[s] is StateKind.CONTROLLED:
                tr = fm.trans[s][witness[s]]
                assert tr.to in region and tr.reward >= 0
            else:
                for tr in fm.trans[s]:
                    assert tr.to in region and tr.reward >= 0


def test_buchi_cobuchi_examples():
    fm = _chain_mdp()
    everything = TransSet.where(lambda t: True)
    vals, _ = solve_buchi(fm, everything)
    assert all(v == 1 for v in vals)
    vals, _ = solve_cobuchi(fm, TransSet.where(lambda t: False))
    assert all(v == 0 for v in vals)
    # only the goal loop is positive-reward: Buchi on it = reach of its MEC
    vals, _ = solve_buchi(fm, TransSet.reward_at_least(F(1)))
    assert vals[0] == F(1, 2)


def test_buchi_two_mec_fork():
    # random fork: 1/3 to a good loop, 2/3 to a bad loop
    fm = FiniteMdp(
        kinds=[StateKind.RANDOM, StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, F(1, 3), F(0)), Transition(2, F(2, 3), F(0))],
            [Transition(1, None, F(1))],
            [Transition(2, None, F(-1))],
        ],
        initial=0, ids=["fork", "good", "bad"])
    vals, _ = solve_buchi(fm, TransSet.reward_at_least(F(0)))
    assert vals[0] == F(1, 3)


def test_threshold_examples():
    fm = _chain_mdp()
    vals, _ = solve_threshold(fm, "limsup")
    assert vals[0] == F(1, 2)
    nonneg = FiniteMdp(
        kinds=[StateKind.CONTROLLED], trans=[[Transition(0, None, F(0))]],
        initial=0, ids=["x"])
    for which in ("limsup", "liminf"):
        vals, _ = solve_threshold(nonneg, which)
        assert vals[0] == 1


def test_threshold_ladder_truncation_value_zero():
    m = ladder_limsup()
    fm, _ = truncate(m, 4, FrontierPolicy.LOSING_SINK)
    vals, _ = solve_threshold(fm, "limsup")
    assert vals[fm.initial] == 0
    res = enumerate_strategies(fm, "md", limsup_geq0)
    assert res.best == 0


def test_threshold_incomparable_truncation_all_strategies_win():
    m = incomparable()
    fm, _ = truncate(m, 5)
    vals, _ = solve_threshold(fm, "limsup")
    assert vals[fm.initial] == 1
    # every reward in this family is nonnegative, so every infinite run wins;
    # the winning-sink frontier reflects that (the losing sink would penalize
    # the never-exit walk that is harmless in the full model)
    fw, _ = truncate(m, 5, FrontierPolicy.WINNING_SINK)
    res = enumerate_strategies(fw, "md", limsup_geq0)
    assert res.best == 1
    assert len(res.argmax) == res.evaluated


def test_expected_examples():
    loop = FiniteMdp(kinds=[StateKind.CONTROLLED],
                     trans=[[Transition(0, None, F(3, 7))]], initial=0, ids=["x"])
    vals, _ = solve_expected(loop, "limsup")
    assert vals[0] == F(3, 7)
    two = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(0)), Transition(2, None, F(0))],
            [Transition(1, None, F(0))],
            [Transition(2, None, F(1))],
        ],
        initial=0, ids=["s", "zero", "one"])
    vals, pol = solve_expected(two, "limsup")
    assert vals[0] == 1
    assert two.trans[0][pol[0]].to == 2


def test_expected_liminf_sub_end_component():
    # strongly connected MEC with rewards {-1, +1}: the +1 self-loop is a sub
    # end component, so liminf weight is +1 when the controller can stay there
    fm = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(1)), Transition(0, None, F(1))],
            [Transition(1, None, F(1)), Transition(0, None, F(-1))],
        ],
        initial=0, ids=["p", "q"])
    vals, _ = solve_expected(fm, "liminf")
    assert vals[0] == 1
    # force the -1 edge into every cycle through q: weight drops
    fm2 = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(1))],
            [Transition(0, None, F(-1))],
        ],
        initial=0, ids=["p", "q"])
    vals2, _ = solve_expected(fm2, "liminf")
    assert vals2[0] == -1


OBJECTIVES = [
    ("reach", None),
    ("safety", None),
    ("buchi", None),
    ("cobuchi", None),
    ("limsup", None),
    ("liminf", None),
    ("exp_limsup", None),
    ("exp_liminf", None),
]


def _solver_value(fm, name):
    nonneg = TransSet.reward_at_least(F(0))
    target = {fm.n_states() - 1}
    if name == "reach":
        return solve_reachability(fm, target)[0], reach({fm.ids[fm.n_states() - 1]})
    if name == "safety":
        return solve_safety(fm, nonneg)[0], safety(nonneg)
    if name == "buchi":
        return solve_buchi(fm, nonneg)[0], buchi(nonneg)
    if name == "cobuchi":
        return solve_cobuchi(fm, nonneg)[0], cobuchi(nonneg)
    if name == "limsup":
        return solve_threshold(fm, "limsup")[0], limsup_geq0
    if name == "liminf":
        return solve_threshold(fm, "liminf")[0], liminf_geq0
    if name == "exp_limsup":
        return solve_expected(fm, "limsup")[0], ("expected", "limsup")
    if name == "exp_liminf":
        return solve_expected(fm, "liminf")[0], ("expected", "liminf")
    raise AssertionError(name)


def test_solver_matches_enumeration_on_corpus(corpus):
    for fm in corpus[:8]:
        for name, _ in OBJECTIVES:
            vals, obj = _solver_value(fm, name)
            res = enumerate_strategies(fm, "md", obj, budget=5000)
            assert res.best == vals[fm.initial], (name, fm.ids)


def test_solver_uniformity_spot_check(corpus):
    # the returned strategy achieves the value from every state, not just s0
    for fm in corpus[:4]:
        vals, pol = solve_threshold(fm, "limsup")
        achieved = evaluate_md(fm, pol, limsup_geq0)
        assert achieved == vals


def test_expected_strategy_achieves_value(corpus):
    for fm in corpus[:6]:
        for which in ("limsup", "liminf"):
            vals, pol = solve_expected(fm, which)
            achieved = evaluate_md_expected(fm, pol, which)
            assert achieved == vals, (which, fm.ids)


def test_monotonicity_in_rewards(corpus):
    rng = random.Random(7)
    for fm in corpus[:5]:
        bumped = fm.copy()
        s = rng.randrange(fm.n_states())
        i = rng.randrange(len(fm.trans[s]))
        tr = bumped.trans[s][i]
        bumped.trans[s][i] = Transition(tr.to, tr.prob, tr.reward + 1)
        for which in ("limsup", "liminf"):
            before, _ = solve_threshold(fm, which)
            after, _ = solve_threshold(bumped, which)
            assert all(a >= b for a, b in zip(after, before))
            before_e, _ = solve_expected(fm, which)
            after_e, _ = solve_expected(bumped, which)
            assert all(a >= b for a, b in zip(after_e, before_e))


def test_bounded_avoidance_property(corpus):
    # whenever the bad transitions cannot be avoided forever, the sure-avoid
    # horizon collapses within |states| steps
    bad = TransSet.where(lambda t: t.reward < 0)
    for fm in corpus:
        sets = sure_avoid_sets(fm, bad)
        gfp = sets[-1]
        n = fm.n_states()
        assert len(sets) - 1 <= n + 1
        vals = bounded_avoid_values(fm, bad, min(len(sets) - 1, n))
        for s in range(n):
            if s not in gfp:
                k = next(k for k, w in enumerate(sets) if s not in w)
                assert k <= n
                assert vals[k][s] < 1
            else:
                assert all(v[s] == 1 for v in vals)


def test_enumerate_budget_error():
    rng = random.Random(3)
    fm = random_finite_mdp(rng, n_states=8, max_branch=3, max_controlled=8)
    with pytest.raises(BudgetExceeded):
        enumerate_strategies(fm, "md", limsup_geq0, budget=2)


def test_fd_product_enumeration_at_least_md(corpus):
    fm = corpus[0]
    md = enumerate_strategies(fm, "md", limsup_geq0, budget=5000)
    fd = enumerate_strategies(fm, "fd:2", limsup_geq0, budget=200000)
    assert fd.best >= md.best
    # MD value is attainable inside the product space on finite MDPs
    assert fd.best == md.best
