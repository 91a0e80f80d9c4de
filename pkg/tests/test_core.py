import json
import random
from fractions import Fraction

import pytest

from ppmdp.core import (CountableMdp, FiniteMdp, FrontierPolicy, InfiniteBubble,
                        ModelError, StateKind, TailLabel, Transition, as_countable,
                        distance_and_bubble, finite_mdp_from_json, finite_mdp_to_json,
                        parse_rational, successors, truncate, validate)
from ppmdp.families import incomparable, ladder_limsup, randf_ladder

F = Fraction


def test_parse_rational_accepts_exact_and_rejects_decimals():
    assert parse_rational("3/4") == F(3, 4)
    assert parse_rational("-2") == F(-2)
    for bad in ["0.5", "1e-3", "1/0", "", "1/2/3", "+1"]:
        with pytest.raises(ModelError):
            parse_rational(bad)


def test_validate_flags_bad_probability_sum():
    fm = FiniteMdp(
        kinds=[StateKind.RANDOM, StateKind.CONTROLLED],
        trans=[[Transition(1, F(1, 2), F(0)), Transition(0, F(1, 3), F(0))],
               [Transition(1, None, F(0))]],
        initial=0, ids=["a", "b"])
    problems = validate(fm)
    assert any("5/6" in p for p in problems)


def test_validate_flags_missing_successors_and_ok_chain():
    fm = FiniteMdp(kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED],
                   trans=[[Transition(1, None, F(0))], []],
                   initial=0, ids=["a", "b"])
    assert any("no successors" in p for p in validate(fm))
    ok = FiniteMdp(kinds=[StateKind.CONTROLLED, StateKind.CONTROLLED],
                   trans=[[Transition(1, None, F(0))], [Transition(1, None, F(0))]],
                   initial=0, ids=["a", "b"])
    assert validate(ok) == []


def test_successor_oracle_memoized_and_deterministic():
    calls = []

    def succ(s):
        calls.append(s)
        return StateKind.CONTROLLED, ((s, F(0)),)

    m = CountableMdp(initial="x", succ_fn=succ)
    first = successors(m, "x")
    second = successors(m, "x")
    assert first == second
    assert calls == ["x"]


def test_ladder_successor_examples():
    m = ladder_limsup()
    kind, data = successors(m, "s0")
    assert kind is StateKind.CONTROLLED
    assert data == ((("r", 1), F(-1)),)
    kind, data = successors(m, ("r", 3))
    assert (("s0", F(-1, 3))) in data
    # incomparable loop state: self-loop with reward 1 - 2^-i
    mi = incomparable()
    kind, data = successors(mi, ("b", 4))
    assert data == (((("b", 4)), F(15, 16)),)


def test_bubble_zero_and_ladder():
    m = ladder_limsup()
    assert distance_and_bubble(m, ["s0"], 0) == {"s0"}
    assert distance_and_bubble(m, ["s0"], 2) == {"s0", ("r", 1), ("r", 2)}


def test_bubble_requires_finite_branching():
    from ppmdp.families import cobuchi_infbranch
    m = cobuchi_infbranch()
    with pytest.raises(InfiniteBubble):
        distance_and_bubble(m, ["s"], 2)
    capped = distance_and_bubble(m, ["s"], 1, branch_cap=4)
    assert capped == {"s", ("r", 1), ("r", 2), ("r", 3), ("r", 4)}


def test_truncate_depth_zero_single_state_plus_sink():
    m = ladder_limsup()
    fm, idx = truncate(m, 0)
    assert fm.n_states() == 2
    assert fm.ids[-1] == "__frontier__"


def test_truncate_bubble_coherence():
    for model in (ladder_limsup(), randf_ladder(), incomparable()):
        for depth in (1, 3, 5):
            fm, idx = truncate(model, depth)
            bubble = distance_and_bubble(model, [model.initial], depth)
            assert set(idx) == bubble
            assert fm.n_states() == len(bubble) + 1


def test_truncate_frontier_policies_set_tail_labels():
    m = ladder_limsup()
    losing, _ = truncate(m, 2, FrontierPolicy.LOSING_SINK)
    sink = losing.n_states() - 1
    assert losing.tail_labels[sink] == TailLabel(F(-1), F(-1))
    winning, _ = truncate(m, 2, FrontierPolicy.WINNING_SINK)
    assert winning.tail_labels[winning.n_states() - 1] == TailLabel(F(0), F(0))


def test_truncate_reroutes_frontier_edges():
    m = ladder_limsup()
    fm, idx = truncate(m, 2)
    frontier_state = idx[("r", 2)]
    assert [tr.to for tr in fm.trans[frontier_state]] == [fm.n_states() - 1]


def test_json_round_trip(corpus):
    for fm in corpus[:4]:
        doc = finite_mdp_to_json(fm)
        back = finite_mdp_from_json(json.loads(json.dumps(doc)))
        assert back.ids == fm.ids
        assert back.kinds == fm.kinds
        for s in range(fm.n_states()):
            assert back.trans[s] == fm.trans[s]


def test_json_rejects_decimal_probabilities():
    doc = {"states": [{"id": "a", "kind": "random",
                       "trans": [{"to": "a", "prob": "0.5", "reward": "0"}]}],
           "initial": "a"}
    with pytest.raises(ModelError):
        finite_mdp_from_json(doc)


def test_tail_label_soundness_running_extrema():
    # a custom oscillating tail: rewards alternate -1, +1 from the labeled state
    def succ(s):
        if s == ("osc", 0):
            return StateKind.CONTROLLED, ((("osc", 1), F(-1)),)
        _t, k = s
        r = F(1) if k % 2 else F(-1)
        return StateKind.CONTROLLED, ((("osc", k + 1), r),)

    m = CountableMdp(initial=("osc", 0), succ_fn=succ,
                     tail_fn=lambda s: TailLabel(F(1), F(-1)) if s == ("osc", 0) else None)
    rewards = []
    s = m.initial
    for _ in range(10000):
        _k, data = successors(m, s)
        t, r = data[0]
        rewards.append(r)
        s = t
    label = m.tail_label(m.initial)
    # running sup from position n is non-increasing toward the limsup, running
    # inf non-decreasing toward the liminf
    sups = []
    infs = []
    for n in (0, 10, 100, 1000, 9000):
        tail = rewards[n:]
        sups.append(max(tail))
        infs.append(min(tail))
    assert all(a >= b for a, b in zip(sups, sups[1:]))
    assert all(a <= b for a, b in zip(infs, infs[1:]))
    assert sups[-1] == label.limsup
    assert infs[-1] == label.liminf


def test_truncate_rejects_oscillating_tail_labels():
    def succ(s):
        return StateKind.CONTROLLED, ((s, F(0)),)

    m = CountableMdp(initial="x", succ_fn=succ,
                     tail_fn=lambda s: TailLabel(F(1), F(-1)))
    with pytest.raises(ModelError):
        truncate(m, 1)


def test_as_countable_round_trip(corpus):
    fm = corpus[0]
    m = as_countable(fm)
    kind, data = successors(m, fm.initial)
    assert kind is fm.kinds[fm.initial]
