import random
from fractions import Fraction

import pytest

from ppmdp.core import (Arm, CountableMdp, FiniteMdp, FiniteSupport, FrontierPolicy,
                        StateKind, Transition, as_countable, distance_and_bubble,
                        successors, truncate, validate)
from ppmdp.families import ladder_limsup, randf_ladder
from ppmdp.objectives import (ObjKind, TransSet, buchi, family_from_rewards, limsup_geq0,
                              reach)
from ppmdp.sim import run_strategy
from ppmdp.solve import (enumerate_strategies, evaluate_md, evaluate_md_expected,
                         induced_chain, iter_md_policies, solve_expected,
                         solve_reachability, solve_threshold)
from ppmdp.strategies import from_finite_policy, md_machine
from ppmdp.transforms import (ExitDistribution, InvalidValues, MassMismatch, NotOptimal,
                              ProbOverflow, ZeroValueStart, carry_back_finite_memory,
                              carry_back_step_counter, conditioned_finite, conditioned_mdp,
                              expected_to_threshold, gadget_exit_stats,
                              is_shift_invariant_in, ladder_binarize,
                              lift_policy_to_conditioned, state_rewards_as_transition_view,
                              state_to_transition_rewards, step_counter_encode,
                              transition_to_state_rewards)
from conftest import random_finite_mdp

F = Fraction


# ---------------------------------------------------------------------------
# step-counter encoding
# ---------------------------------------------------------------------------

def test_step_encode_unrolls_self_loop():
    def succ(s):
        return StateKind.CONTROLLED, ((s, F(0)),)

    m = CountableMdp(initial="x", succ_fn=succ)
    enc = step_counter_encode(m)
    kind, data = successors(enc, ("x", 0))
    assert data == ((("x", 1), F(0)),)
    kind, data = successors(enc, ("x", 5))
    assert data == ((("x", 6), F(0)),)
    assert enc.claims_acyclic and enc.claims_universally_transient


def test_step_encode_coupled_reward_sequences(corpus):
    fm = corpus[0]
    m = as_countable(fm)
    enc = step_counter_encode(m)
    policy = next(iter_md_policies(fm))
    base_machine = from_finite_policy(fm, policy)

    def enc_choice(state, _choices):
        s, _n = state
        return policy[s]

    enc_machine = md_machine(enc_choice)
    carried = carry_back_step_counter(enc_machine)
    for seed in (1, 2, 3):
        r_enc = run_strategy(enc, enc_machine, seed=seed, horizon=1000)
        r_car = run_strategy(m, carried, seed=seed, horizon=1000)
        assert r_enc.rewards == r_car.rewards
        r_base = run_strategy(m, base_machine, seed=seed, horizon=1000)
        assert r_base.rewards == r_enc.rewards


def test_step_encode_truncation_size_bound():
    m = ladder_limsup()
    enc = step_counter_encode(m)
    for d in (2, 4, 6):
        bubble = distance_and_bubble(m, [m.initial], d)
        fm, _ = truncate(enc, d)
        assert fm.n_states() - 1 <= (d + 1) * len(bubble)


def test_carry_back_tags():
    from ppmdp.strategies import TAG_MARKOV, TAG_MD, with_step_counter
    inner = md_machine(lambda s, ch: 0)
    assert with_step_counter(inner).tag == TAG_MARKOV


# ---------------------------------------------------------------------------
# conditioned MDP
# ---------------------------------------------------------------------------

def test_conditioned_examples_random_fork():
    # s0 random: 1/2 to a winning sink, 1/2 to a losing sink
    fm = FiniteMdp(
        kinds=[StateKind.RANDOM, StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, F(1, 2), F(0)), Transition(2, F(1, 2), F(0))],
            [Transition(1, None, F(0))],
            [Transition(2, None, F(0))],
        ],
        initial=0, ids=["s0", "a", "b"])
    vals, _ = solve_reachability(fm, {1})
    assert vals[0] == F(1, 2)
    cond, index = conditioned_finite(fm, vals)
    s0 = index[0]
    row = cond.trans[s0]
    assert len(row) == 1           # the zero-value branch is dropped
    assert row[0].prob == 1        # p * val(t) / val(s) = (1/2) / (1/2)
    assert cond.ids[row[0].to] == "a"


def test_conditioned_controlled_gadget_ratio():
    # controlled s (value 1/2) -> t (value 1/4): gadget succeeds w.p. 1/2
    fm = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.RANDOM, StateKind.CONTROLLED,
               StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(0))],
            [Transition(2, F(1, 4), F(0)), Transition(3, F(3, 4), F(0))],
            [Transition(2, None, F(0))],
            [Transition(3, None, F(0))],
        ],
        initial=0, ids=["s", "t", "goal", "dead"])
    vals, _ = solve_reachability(fm, {2})
    assert vals[0] == F(1, 4) and vals[1] == F(1, 4)
    # treat the controlled edge s -> t with val(t)/val(s) = 1: now shrink vals
    # artificially is invalid; instead check a genuine two-level instance
    fm2 = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.RANDOM, StateKind.CONTROLLED,
               StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(0)), Transition(2, None, F(0))],
            [Transition(2, F(1, 4), F(0)), Transition(3, F(3, 4), F(0))],
            [Transition(2, None, F(0))],
            [Transition(3, None, F(0))],
        ],
        initial=0, ids=["s", "t", "goal", "dead"])
    vals2, _ = solve_reachability(fm2, {2})
    assert vals2[0] == 1
    cond, index = conditioned_finite(fm2, vals2)
    # the edge s -> t has ratio (1/4) / 1: gadget succeeds w.p. 1/4
    s = index[0]
    gadget = next(tr.to for tr in cond.trans[s] if cond.ids[tr.to] == "(s>t)")
    arms = cond.trans[gadget]
    succ_arm = next(a for a in arms if cond.ids[a.to] == "t")
    assert succ_arm.prob == F(1, 4)
    bot_arm = next(a for a in arms if cond.ids[a.to] == "__bot__")
    assert bot_arm.prob == F(3, 4)


def test_conditioned_all_values_one_keeps_probabilities(corpus):
    fm = corpus[1]
    vals = [F(1)] * fm.n_states()
    cond, index = conditioned_finite(fm, vals)
    for s_old, s_new in index.items():
        if fm.kinds[s_old] is StateKind.RANDOM:
            old = {(fm.ids[tr.to], tr.prob) for tr in fm.trans[s_old]}
            new = {(cond.ids[tr.to], tr.prob) for tr in cond.trans[s_new]}
            assert old == new


def test_conditioned_zero_start_raises():
    fm = FiniteMdp(kinds=[StateKind.CONTROLLED], trans=[[Transition(0, None, F(0))]],
                   initial=0, ids=["x"])
    with pytest.raises(ZeroValueStart):
        conditioned_finite(fm, [F(0)])


def test_conditioned_scaling_invariant_small(corpus):
    # val(s0) * P_cond(reach) = P_orig(reach) for every MD policy
    rng = random.Random(11)
    for _ in range(6):
        fm = random_finite_mdp(rng, n_states=6, max_branch=2, max_controlled=3,
                               absorbing_target=True)
        target = fm.n_states() - 1
        vals, _ = solve_reachability(fm, {target})
        if vals[fm.initial] == 0:
            continue
        obj = reach({fm.ids[target]})
        assert is_shift_invariant_in(fm, obj)
        cond, index = conditioned_finite(fm, vals, obj)
        for policy in iter_md_policies(fm):
            orig = evaluate_md(fm, policy, obj)[fm.initial]
            lifted = lift_policy_to_conditioned(fm, cond, index, policy)
            scaled = evaluate_md(cond, lifted, obj)[cond.initial]
            assert vals[fm.initial] * scaled == orig


def test_conditioned_scaling_invariant_buchi(corpus):
    rng = random.Random(13)
    for _ in range(4):
        fm = random_finite_mdp(rng, n_states=5, max_branch=2, max_controlled=2)
        nonneg = TransSet.reward_at_least(F(0))
        from ppmdp.solve import solve_buchi
        vals, _ = solve_buchi(fm, nonneg)
        if vals[fm.initial] == 0:
            continue
        obj = buchi(nonneg)
        cond, index = conditioned_finite(fm, vals, obj)
        from ppmdp.synth import lift_objective_to_conditioned
        lifted_obj = lift_objective_to_conditioned(fm, obj)
        for policy in iter_md_policies(fm):
            orig = evaluate_md(fm, policy, obj)[fm.initial]
            lifted = lift_policy_to_conditioned(fm, cond, index, policy)
            scaled = evaluate_md(cond, lifted, lifted_obj)[cond.initial]
            assert vals[fm.initial] * scaled == orig


# ---------------------------------------------------------------------------
# ladder binarization
# ---------------------------------------------------------------------------

def _wide_mdp():
    # controlled 3-way branch plus a random 3-way branch
    return FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.RANDOM, StateKind.CONTROLLED,
               StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[
            [Transition(1, None, F(0)), Transition(2, None, F(-1, 2)),
             Transition(3, None, F(1))],
            [Transition(2, F(1, 2), F(0)), Transition(3, F(1, 4), F(1, 2)),
             Transition(4, F(1, 4), F(-1))],
            [Transition(2, None, F(0))],
            [Transition(3, None, F(-1, 3))],
            [Transition(4, None, F(1))],
        ],
        initial=0, ids=["c", "x", "p", "q", "r"])


def test_binarize_probability_gadget_formula():
    fm = _wide_mdp()
    m = ladder_binarize(as_countable(fm))
    kind, data = successors(m, 1)  # the random 3-way state
    assert kind is StateKind.RANDOM
    assert data.arms[0].state == ("__z__", 1, 0) and data.arms[0].prob == 1
    _k, z0 = successors(m, ("__z__", 1, 0))
    assert z0.arms[0].prob == F(1, 2)          # p'_1 = 1/2
    _k, z1 = successors(m, ("__z__", 1, 1))
    assert z1.arms[0].prob == F(1, 2)          # p'_2 = (1/4)/(1/2)
    _k, z2 = successors(m, ("__z__", 1, 2))
    assert z2.arms[0].prob == 1                # p'_3 = (1/4)/(1/4)
    assert len(z2.arms) == 1


def test_binarize_controlled_ladder_shape():
    fm = _wide_mdp()
    m = ladder_binarize(as_countable(fm))
    kind, data = successors(m, 0)
    assert kind is StateKind.CONTROLLED and len(data) == 2
    (t1, r1), (rung, rr) = data
    assert t1 == 1 and r1 == F(0)
    assert rung == ("__rung__", 0, 1) and rr == F(-1)
    _k, last = successors(m, ("__rung__", 0, 1))
    assert len(last) == 2
    assert last == ((2, F(-1, 2)), (3, F(1)))


def test_binarize_branching_at_most_two_and_value_preserved():
    fm = _wide_mdp()
    m = ladder_binarize(as_countable(fm))
    states = distance_and_bubble(m, [0], 12)
    for s in states:
        if m.tail_label(s) is not None:
            continue
        kind, data = successors(m, s)
        width = len(data) if kind is StateKind.CONTROLLED else len(data.arms)
        assert width <= 2
    # binarized finite models: limsup threshold values agree exactly
    binarized, _ = truncate(m, 16)
    vals_orig, _ = solve_threshold(fm, "limsup")
    vals_bin, _ = solve_threshold(binarized, "limsup")
    assert vals_bin[binarized.initial] == vals_orig[fm.initial]


def test_binarize_unchanged_for_binary_states():
    fm = FiniteMdp(
        kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED],
        trans=[[Transition(1, None, F(0)), Transition(0, None, F(1))],
               [Transition(0, None, F(0))]],
        initial=0, ids=["a", "b"])
    m = ladder_binarize(as_countable(fm))
    kind, data = successors(m, 0)
    assert data == ((1, F(0)), (0, F(1)))


def test_binarize_rejects_other_objectives():
    with pytest.raises(Exception):
        ladder_binarize(as_countable(_wide_mdp()), objective_kind=ObjKind.LIMINF_GEQ0)


# ---------------------------------------------------------------------------
# carrying finite-memory strategies back through gadgets
# ---------------------------------------------------------------------------

def test_exit_distribution_mass_check():
    with pytest.raises(MassMismatch):
        ExitDistribution(weights={("y", 0): F(1, 2)}, non_exit=F(1, 4))
    ExitDistribution(weights={("y", 0): F(1, 2)}, non_exit=F(1, 2))


def test_gadget_exit_stats_deterministic_exit():
    fm = _wide_mdp()
    m = ladder_binarize(as_countable(fm))
    # strategy that walks the rung once then exits at the second target
    def choose(mode, state, choices):
        if state == 0:
            return [(F(1), (mode, 1))]      # climb to rung 1
        return [(F(1), (mode, 0))]          # exit at the first rung choice

    from ppmdp.strategies import StrategyMachine, TAG_FD
    mach = StrategyMachine(tag=TAG_FD, init_mode="m", choose_fn=choose)
    law = gadget_exit_stats(m, mach, 0, "m")
    assert law.non_exit == 0
    assert law.weights == {(2, "m"): F(1)}


def test_gadget_exit_stats_never_exit_folds_into_first():
    # an infinitely branching controlled hub, capped at 4 rungs: a strategy
    # that always climbs falls into the losing tail and never exits
    from ppmdp.core import InfiniteChoices

    def succ(s):
        if s == "hub":
            return StateKind.CONTROLLED, InfiniteChoices(
                choice=lambda i: (("exit", i), F(0)))
        return StateKind.CONTROLLED, ((s, F(0)),)

    hub = CountableMdp(initial="hub", succ_fn=succ, claims_finitely_branching=False)
    m = ladder_binarize(hub, branch_bound=4)

    def choose(mode, state, choices):
        # always climb when a rung or tail continuation exists
        for i, (t, _r) in enumerate(choices):
            if isinstance(t, tuple) and t[0] in ("__rung__", "__lt__"):
                return [(F(1), (mode, i))]
        return [(F(1), (mode, 0))]

    from ppmdp.strategies import StrategyMachine, TAG_FD
    mach = StrategyMachine(tag=TAG_FD, init_mode="m", choose_fn=choose)
    law = gadget_exit_stats(m, mach, "hub", "m")
    assert law.non_exit == 1
    assert law.weights == {}
    carried = carry_back_finite_memory(mach, {("hub", "m"): law}, {"hub"}, set(), "m")
    choices = tuple(((("exit", i)), F(0)) for i in range(4))
    dist = carried.choose("m", "hub", choices)
    assert dist == [(F(1), ("m", 0))]   # non-exit mass lands on the first exit


def test_carried_strategy_attains_at_least_as_much():
    fm = _wide_mdp()
    m_bin = ladder_binarize(as_countable(fm))
    fm_bin, idx = truncate(m_bin, 16)
    vals_bin, pol_bin = solve_threshold(fm_bin, "limsup")
    # carry the MD strategy of the binarized model back to the original
    mach = from_finite_policy(fm_bin, pol_bin)
    law = gadget_exit_stats(m_bin, _lift_table_machine(fm_bin, idx, pol_bin), 0, None)
    carried = carry_back_finite_memory(
        _lift_table_machine(fm_bin, idx, pol_bin), {(0, None): law}, {0}, set(), None)
    # evaluate the carried memoryless strategy exactly on the original model
    weights = carried.choose(None, 0, tuple((tr.to, tr.reward) for tr in fm.trans[0]))
    mr_policy = []
    for s in range(fm.n_states()):
        if fm.kinds[s] is StateKind.RANDOM:
            mr_policy.append(None)
        elif s == 0:
            mr_policy.append(tuple((w, idx_e) for (w, (_m, idx_e)) in weights))
        else:
            mr_policy.append(((F(1), 0),))
    from ppmdp.solve import evaluate_mr
    carried_val = evaluate_mr(fm, tuple(mr_policy), limsup_geq0)[0]
    assert carried_val >= vals_bin[fm_bin.initial]


def _lift_table_machine(fm_bin, idx, pol):
    """Machine on the binarized countable model that follows a policy computed
    on its truncation (states are mapped through the truncation index)."""
    from ppmdp.strategies import StrategyMachine, TAG_MD

    def choose(mode, state, choices):
        s = idx.get(state)
        if s is None or pol[s] is None:
            return [(F(1), (mode, 0))]
        return [(F(1), (mode, pol[s]))]

    return StrategyMachine(tag=TAG_MD, init_mode=None, choose_fn=choose)


# ---------------------------------------------------------------------------
# state rewards <-> transition rewards
# ---------------------------------------------------------------------------

def test_state_to_transition_self_loop_example():
    fm = FiniteMdp(kinds=[StateKind.CONTROLLED],
                   trans=[[Transition(0, None, F(0))]],
                   initial=0, ids=["s"], state_rewards=[F(2, 3)])
    out = state_to_transition_rewards(fm, F(1), "limsup")
    assert validate(out) == []
    # 2-cycle with rewards (r(s), -m); lasso limsup is r(s)
    chain = induced_chain(out, tuple(0 if k is StateKind.CONTROLLED else None
                                     for k in out.kinds))
    rewards = {r for row in chain for (_t, _p, r) in row}
    assert rewards == {F(2, 3), F(-1)}
    vals, _ = solve_threshold(out, "limsup")
    assert vals[out.initial] == 1


def test_state_to_transition_liminf_buffer():
    fm = FiniteMdp(kinds=[StateKind.CONTROLLED],
                   trans=[[Transition(0, None, F(0))]],
                   initial=0, ids=["s"], state_rewards=[F(0)])
    out = state_to_transition_rewards(fm, F(1), "liminf")
    vals, _ = solve_threshold(out, "liminf")
    assert vals[out.initial] == 1  # +1 buffers do not break liminf >= 0


def test_transition_to_state_round_trip_verdicts(corpus):
    for fm in corpus[:3]:
        bound = max(abs(tr.reward) for s in range(fm.n_states()) for tr in fm.trans[s])
        bound = max(bound, F(1))
        for mode in ("limsup", "liminf"):
            staged = transition_to_state_rewards(fm, bound, mode)
            assert validate(staged) == []
            view = state_rewards_as_transition_view(staged)
            v_orig, _ = solve_threshold(fm, mode)
            v_view, _ = solve_threshold(view, mode)
            assert v_view[view.initial] == v_orig[fm.initial]


# ---------------------------------------------------------------------------
# expected -> threshold reduction
# ---------------------------------------------------------------------------

def _state_reward_instance(rng):
    fm = random_finite_mdp(rng, n_states=6, max_branch=2, max_controlled=3)
    fm.state_rewards = [rng.choice([F(0), F(1, 4), F(1, 2), F(1)])
                        for _ in range(fm.n_states())]
    return fm


def test_expected_to_threshold_deficit_cases():
    rng = random.Random(5)
    fm = _state_reward_instance(rng)
    view = state_rewards_as_transition_view(fm)
    vals, pol = solve_expected(view, "limsup")
    res = expected_to_threshold(fm, pol, vals, "limsup")
    for s_old, s_new in res.state_map.items():
        deficit = vals[s_old] - fm.state_rewards[s_old]
        u = res.reweighted.state_rewards[s_new]
        if deficit <= 0:
            assert u == 0
        elif deficit > 1:
            assert u == -1
        else:
            assert u < 0 and -u <= deficit * 2  # u = -2^-max{i: deficit <= 2^-i}


def test_expected_to_threshold_rejects_suboptimal():
    rng = random.Random(6)
    fm = _state_reward_instance(rng)
    view = state_rewards_as_transition_view(fm)
    vals, pol = solve_expected(view, "limsup")
    with pytest.raises(NotOptimal):
        expected_to_threshold(fm, pol, [v + 1 for v in vals], "limsup")


def test_expected_to_threshold_optimal_sets_inclusion():
    rng = random.Random(9)
    checked = 0
    for _ in range(10):
        fm = _state_reward_instance(rng)
        view = state_rewards_as_transition_view(fm)
        vals, pol = solve_expected(view, "limsup")
        res = expected_to_threshold(fm, pol, vals, "limsup")
        thr = enumerate_strategies(state_rewards_as_transition_view(res.reweighted),
                                   "md", limsup_geq0, budget=4000)
        exp = enumerate_strategies(state_rewards_as_transition_view(res.restricted),
                                   "md", ("expected", "limsup"), budget=4000)
        assert set(thr.argmax) <= set(exp.argmax)
        checked += 1
    assert checked == 10
