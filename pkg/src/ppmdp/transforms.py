"""MDP-to-MDP constructions: step-counter encoding, value-conditioned rescaling,
ladder binarization, state/transition reward encodings, and the reduction from
optimal expected limsup/liminf to the matching threshold objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .core import (Arm, CountableMdp, FiniteMdp, FiniteSupport, InfiniteChoices,
                   InfiniteSupport, ModelError, StateKind, TailLabel, Transition,
                   ONE, ZERO, successors, validate)
from .objectives import INF, ObjKind, Objective, TransRef, level_of_reward, reward_of_level
from .solve import Policy, evaluate_md_expected, induced_chain, ref_of, solve_expected
from .strategies import StrategyMachine, with_step_counter


class ZeroValueStart(ModelError):
    """Conditioning requested from a state of value zero."""


class InvalidValues(ModelError):
    """Supplied value oracle is inconsistent with the model."""


class ProbOverflow(ModelError):
    """Ladder gadget probability left [0,1]; the input distribution is corrupt."""


class MassMismatch(ModelError):
    """Exit distribution plus non-exit mass does not sum to one."""


class NotOptimal(ModelError):
    """A strategy claimed optimal fails the exact optimality check."""


class BoundViolation(ModelError):
    """A reward exceeds the declared bound."""


# ---------------------------------------------------------------------------
# Step-counter encoding
# ---------------------------------------------------------------------------

def step_counter_encode(m: CountableMdp) -> CountableMdp:
    """States become (state, steps); the result is acyclic, hence universally
    transient.  Rewards are copied, so reward-sequence objectives transfer."""

    def succ(key):
        s, n = key
        kind, data = successors(m, s)
        if kind is StateKind.CONTROLLED:
            if isinstance(data, InfiniteChoices):
                return kind, InfiniteChoices(
                    choice=lambda i: ((data.choice(i)[0], n + 1), data.choice(i)[1]),
                    description=data.description)
            return kind, tuple(((t, n + 1), r) for (t, r) in data)
        if isinstance(data, InfiniteSupport):
            return kind, InfiniteSupport(
                arm=lambda i: Arm((data.arm(i).state, n + 1), data.arm(i).prob,
                                  data.arm(i).reward),
                tail_mass=data.tail_mass,
                description=data.description)
        return kind, FiniteSupport(tuple(Arm((a.state, n + 1), a.prob, a.reward)
                                         for a in data.arms))

    def tail(key):
        s, _n = key
        return m.tail_label(s)

    return CountableMdp(
        initial=(m.initial, 0), succ_fn=succ, reward_bound=m.reward_bound,
        tail_fn=tail if m.tail_fn is not None else None,
        claims_finitely_branching=m.claims_finitely_branching,
        claims_universally_transient=True, claims_acyclic=True,
        name=f"sc({m.name})" if m.name else "sc")


def carry_back_step_counter(machine: StrategyMachine) -> StrategyMachine:
    """A strategy on the step-counter-encoded model, replayed on the original
    model by keeping the counter in memory.  Attainment is identical for any
    objective that depends only on the reward sequence."""
    return with_step_counter(machine)


# ---------------------------------------------------------------------------
# Conditioned MDP (value rescaling)
# ---------------------------------------------------------------------------

SHIFT_INVARIANT_KINDS = {ObjKind.BUCHI, ObjKind.COBUCHI, ObjKind.GF_FAMILY,
                         ObjKind.FG_FAMILY, ObjKind.LIMSUP_GEQ0, ObjKind.LIMINF_GEQ0,
                         ObjKind.TRANSIENCE}


def is_shift_invariant_in(fm: FiniteMdp, obj: Objective) -> bool:
    """Shift invariance, possibly using structure of fm (reach with absorbing
    targets is shift invariant in that model)."""
    if obj.kind in SHIFT_INVARIANT_KINDS:
        return True
    if obj.kind is ObjKind.AND:
        return all(is_shift_invariant_in(fm, p) for p in obj.parts)
    if obj.kind is ObjKind.REACH:
        targets = {s for s in range(fm.n_states()) if fm.ids[s] in obj.targets}
        return all(tr.to in targets for s in targets for tr in fm.trans[s])
    return False


BOT = ("__bot__",)


def conditioned_mdp(m: CountableMdp, vals: Callable[[object], Fraction],
                    shift_invariant: bool = True) -> CountableMdp:
    """Value-rescaled model: states of value zero vanish, controlled edges pass
    through a success/failure gadget, and failures feed an infinite losing
    chain of reward -1 transitions."""
    if not shift_invariant:
        raise ModelError("conditioning requires a shift invariant objective")
    v0 = vals(m.initial)
    if v0 == 0:
        raise ZeroValueStart(f"initial state has value 0")
    if v0 < 0 or v0 > 1:
        raise InvalidValues(f"value {v0} outside [0,1]")

    def succ(key):
        if isinstance(key, tuple) and key and key[0] == "__bot__":
            k = key[1]
            return StateKind.CONTROLLED, (((("__bot__", k + 1)), Fraction(-1)),)
        if isinstance(key, tuple) and key and key[0] == "__pair__":
            _tag, s, t, reward = key
            vs, vt = vals(s), vals(t)
            if vt > vs:
                raise InvalidValues(f"value increases along controlled edge {s!r}->{t!r}")
            ratio = vt / vs
            arms = []
            if ratio > 0:
                arms.append(Arm(t, ratio, reward))
            if ratio < 1:
                arms.append(Arm(("__bot__", 0), 1 - ratio, Fraction(-1)))
            return StateKind.RANDOM, FiniteSupport(tuple(arms))
        s = key
        vs = vals(s)
        if vs <= 0:
            raise InvalidValues(f"state {s!r} of value {vs} entered the conditioned model")
        kind, data = successors(m, s)
        if kind is StateKind.CONTROLLED:
            if isinstance(data, InfiniteChoices):
                def pair_choice(i, s=s, data=data):
                    t, r = data.choice(i)
                    return ("__pair__", s, t, r), r
                return kind, InfiniteChoices(choice=pair_choice,
                                             description=data.description)
            return kind, tuple((("__pair__", s, t, r), r) for (t, r) in data)
        if isinstance(data, InfiniteSupport):
            raise ModelError("conditioning of infinite random branching is not supported")
        arms = []
        total = ZERO
        for a in data.arms:
            vt = vals(a.state)
            if vt > 0:
                p = a.prob * vt / vs
                arms.append(Arm(a.state, p, a.reward))
                total += p
        if total != 1:
            raise InvalidValues(
                f"random state {s!r}: conditioned probabilities sum to {total} != 1")
        return kind, FiniteSupport(tuple(arms))

    def tail(key):
        if isinstance(key, tuple) and key and key[0] == "__bot__":
            return TailLabel(Fraction(-1), Fraction(-1))
        if isinstance(key, tuple) and key and key[0] == "__pair__":
            return None
        label = m.tail_label(key)
        if label is None:
            return None
        if vals(key) != 1:
            raise InvalidValues("tail-labeled state with fractional value")
        return label

    return CountableMdp(initial=m.initial, succ_fn=succ, reward_bound=None,
                        tail_fn=tail, claims_finitely_branching=m.claims_finitely_branching,
                        claims_universally_transient=m.claims_universally_transient,
                        claims_acyclic=False,
                        name=f"cond({m.name})" if m.name else "cond")


def conditioned_finite(fm: FiniteMdp, vals: Sequence[Fraction],
                       obj: Optional[Objective] = None) -> Tuple[FiniteMdp, Dict[int, int]]:
    """Finite carrier of the conditioned model.

    The losing chain is folded into a single reward -1 self-loop sink, which is
    losing for every objective in scope.  Returns the model and the map from
    old state indices to new ones (dropped states absent).  Controlled edge
    order is preserved, so MD policies transfer by index.
    """
    if obj is not None and not is_shift_invariant_in(fm, obj):
        raise ModelError("objective is not shift invariant in this model")
    n = fm.n_states()
    if vals[fm.initial] == 0:
        raise ZeroValueStart("initial state has value 0")
    keep = [s for s in range(n) if vals[s] > 0]
    index = {s: i for i, s in enumerate(keep)}
    kinds: List[StateKind] = [fm.kinds[s] for s in keep]
    ids: List[str] = [fm.ids[s] for s in keep]
    trans: List[List[Transition]] = [[] for _ in keep]
    bot = None

    def get_bot() -> int:
        nonlocal bot
        if bot is None:
            bot = len(kinds)
            kinds.append(StateKind.CONTROLLED)
            ids.append("__bot__")
            trans.append([Transition(bot, None, Fraction(-1))])
        return bot

    pair_index: Dict[Tuple[int, int], int] = {}
    for s in keep:
        if fm.kinds[s] is StateKind.CONTROLLED:
            row = []
            for tr in fm.trans[s]:
                if vals[tr.to] > vals[s]:
                    raise InvalidValues("value increases along a controlled edge")
                pi = len(kinds)
                pair_index[(s, tr.to)] = pi
                kinds.append(StateKind.RANDOM)
                ids.append(f"({fm.ids[s]}>{fm.ids[tr.to]})")
                trans.append([])  # filled below; keeps row indices aligned
                ratio = vals[tr.to] / vals[s]
                gadget_row: List[Transition] = []
                if ratio > 0:
                    gadget_row.append(Transition(index[tr.to], ratio, tr.reward))
                if ratio < 1:
                    gadget_row.append(Transition(get_bot(), ONE - ratio, Fraction(-1)))
                trans[pi] = gadget_row
                row.append(Transition(pi, None, tr.reward))
            trans[index[s]] = row
        else:
            total = ZERO
            row = []
            for tr in fm.trans[s]:
                if vals[tr.to] > 0:
                    p = tr.prob * vals[tr.to] / vals[s]
                    row.append(Transition(index[tr.to], p, tr.reward))
                    total += p
            if total != 1:
                raise InvalidValues(
                    f"random state {fm.ids[s]}: conditioned probabilities sum to {total}")
            trans[index[s]] = row
    out = FiniteMdp(kinds=kinds, trans=trans, initial=index[fm.initial], ids=ids)
    out.tail_labels = {}
    if bot is not None:
        out.tail_labels[bot] = TailLabel(Fraction(-1), Fraction(-1))
    problems = validate(out)
    if problems:
        raise ModelError("conditioned model invalid: " + "; ".join(problems))
    return out, index


def lift_policy_to_conditioned(fm: FiniteMdp, cond: FiniteMdp, index: Dict[int, int],
                               policy: Policy) -> Policy:
    """Map an MD policy of fm onto the conditioned model (same edge indices)."""
    out: List[Optional[int]] = [None] * cond.n_states()
    for s_old, s_new in index.items():
        if fm.kinds[s_old] is StateKind.CONTROLLED:
            out[s_new] = policy[s_old]
    for s in range(cond.n_states()):
        if cond.kinds[s] is StateKind.CONTROLLED and out[s] is None:
            out[s] = 0
    return tuple(out)


# ---------------------------------------------------------------------------
# Ladder binarization
# ---------------------------------------------------------------------------

def ladder_binarize(m: CountableMdp, branch_bound: int = 64,
                    objective_kind: ObjKind = ObjKind.LIMSUP_GEQ0) -> CountableMdp:
    """Replace branching > 2 by ladder gadgets with reward -1 rungs.

    Sound for the limsup threshold / GF-family objectives only: runs stuck on a
    ladder see reward -1 forever and lose.  Infinite ladders are capped at
    branch_bound rungs; the remainder continues into a losing tail, consistent
    with the gadget's design.
    """
    if objective_kind not in (ObjKind.LIMSUP_GEQ0, ObjKind.GF_FAMILY, ObjKind.BUCHI):
        raise ModelError("ladder binarization applies to limsup-threshold objectives only")
    NEG1 = Fraction(-1)

    def ctrl_rung(s, i, data):
        """Choices of the i-th rung of the ladder replacing controlled s."""
        if isinstance(data, InfiniteChoices):
            t, r = data.choice(i)
            if i + 1 >= branch_bound:
                return ((t, r), (("__lt__", s, 0), NEG1))
            return ((t, r), (("__rung__", s, i + 1), NEG1))
        k = len(data)
        if i == k - 2:
            return (data[i], data[i + 1])
        return (data[i], (("__rung__", s, i + 1), NEG1))

    def succ(key):
        if isinstance(key, tuple) and key and key[0] == "__lt__":
            _t, s, j = key
            return StateKind.CONTROLLED, ((("__lt__", s, j + 1), NEG1),)
        if isinstance(key, tuple) and key and key[0] == "__rung__":
            _t, s, i = key
            _kind, data = successors(m, s)
            return StateKind.CONTROLLED, ctrl_rung(s, i, data)
        if isinstance(key, tuple) and key and key[0] == "__z__":
            _t, s, i = key
            _kind, data = successors(m, s)
            return StateKind.RANDOM, z_support(s, i, data)
        s = key
        kind, data = successors(m, s)
        if kind is StateKind.CONTROLLED:
            if isinstance(data, InfiniteChoices):
                return kind, ctrl_rung(s, 0, data)
            if len(data) <= 2:
                return kind, data
            return kind, ctrl_rung(s, 0, data)
        if isinstance(data, FiniteSupport) and len(data.arms) <= 2:
            return kind, data
        # random state: one sure step onto the probability ladder
        return StateKind.RANDOM, FiniteSupport((Arm(("__z__", s, 0), ONE, NEG1),))

    def z_support(s, i, data):
        if isinstance(data, InfiniteSupport):
            arms = [data.arm(j) for j in range(i + 1)]
        else:
            arms = list(data.arms)
        prefix = sum((a.prob for a in arms[:i]), ZERO)
        remaining = ONE - prefix
        if remaining <= 0:
            raise ProbOverflow(f"no probability mass left at rung {i} of {s!r}")
        p_i = arms[i].prob / remaining
        if p_i > 1:
            raise ProbOverflow(f"gadget probability {p_i} > 1 at {s!r}")
        out = []
        if p_i > 0:
            out.append(Arm(arms[i].state, p_i, arms[i].reward))
        if p_i < 1:
            last = (isinstance(data, FiniteSupport) and i + 1 >= len(data.arms))
            capped = (isinstance(data, InfiniteSupport) and i + 1 >= branch_bound)
            if last:
                raise ProbOverflow(f"distribution at {s!r} does not sum to 1")
            nxt = ("__lt__", s, 0) if capped else ("__z__", s, i + 1)
            out.append(Arm(nxt, ONE - p_i, NEG1))
        return FiniteSupport(tuple(out))

    def tail(key):
        if isinstance(key, tuple) and key and key[0] == "__lt__":
            return TailLabel(NEG1, NEG1)
        if isinstance(key, tuple) and key and key[0] in ("__rung__", "__z__"):
            return None
        return m.tail_label(key)

    return CountableMdp(initial=m.initial, succ_fn=succ, reward_bound=m.reward_bound,
                        tail_fn=tail,
                        claims_finitely_branching=True,
                        claims_universally_transient=m.claims_universally_transient,
                        claims_acyclic=m.claims_acyclic,
                        name=f"bin({m.name})" if m.name else "bin")


# ---------------------------------------------------------------------------
# Carrying finite-memory strategies back through ladder gadgets
# ---------------------------------------------------------------------------

@dataclass
class ExitDistribution:
    """Joint exit law of one gadget entered in one memory mode: probability of
    leaving at (exit state, exit mode), plus the non-exit mass."""

    weights: Dict[Tuple[object, object], Fraction]
    non_exit: Fraction

    def __post_init__(self):
        total = sum(self.weights.values(), self.non_exit)
        if total != 1:
            raise MassMismatch(f"exit weights + non-exit mass = {total} != 1")


def gadget_exit_stats(m_bin: CountableMdp, machine: StrategyMachine, source: object,
                      mode, max_rungs: int = 10000) -> ExitDistribution:
    """Exact exit law of the (controlled) ladder replacing `source`, entered in
    `mode`: forward probability propagation over the acyclic gadget."""
    weights: Dict[Tuple[object, object], Fraction] = {}
    frontier: Dict[Tuple[object, object], Fraction] = {(source, mode): ONE}
    non_exit = ZERO
    rungs = 0
    while frontier:
        rungs += 1
        if rungs > max_rungs:
            non_exit += sum(frontier.values(), ZERO)
            break
        nxt: Dict[Tuple[object, object], Fraction] = {}
        for (node, md), mass in frontier.items():
            kind, choices = successors(m_bin, node)
            if kind is not StateKind.CONTROLLED:
                raise ModelError("controlled-gadget walk entered a random state")
            for p, (md2, idx) in machine.choose(md, node, choices):
                if p == 0:
                    continue
                target, _r = choices[idx]
                share = mass * p
                if isinstance(target, tuple) and target and target[0] == "__rung__":
                    nxt[(target, md2)] = nxt.get((target, md2), ZERO) + share
                elif isinstance(target, tuple) and target and target[0] == "__lt__":
                    non_exit += share
                else:
                    key = (target, md2)
                    weights[key] = weights.get(key, ZERO) + share
        frontier = nxt
    return ExitDistribution(weights=weights, non_exit=non_exit)


def carry_back_finite_memory(machine: StrategyMachine,
                             exit_stats: Dict[Tuple[object, object], ExitDistribution],
                             replaced_controlled: Set[object],
                             replaced_random: Set[object],
                             first_mode) -> StrategyMachine:
    """Finite-memory strategy on the original model from one on the binarized
    model, folding each gadget's exit law into a single decision.

    At a replaced controlled state the carried strategy picks (exit, mode) with
    the exit law's probability and dumps the non-exit mass onto the first exit
    with mode `first_mode`.  At a replaced random state only the memory is
    resampled, conditioned on the sampled successor.
    """

    def choose(mode, state, choices):
        if state in replaced_controlled:
            law = exit_stats[(state, mode)]
            index_of = {}
            for i, (t, _r) in enumerate(choices):
                index_of[t] = i
            out = []
            first_key = (choices[0][0], first_mode)
            for (exit_state, exit_mode), w in sorted(law.weights.items(), key=str):
                bonus = law.non_exit if (exit_state, exit_mode) == first_key else ZERO
                out.append((w + bonus, (exit_mode, index_of[exit_state])))
            if law.non_exit > 0 and all(k != first_key for k in law.weights):
                out.append((law.non_exit, (first_mode, index_of[choices[0][0]])))
            return out
        return machine.choose(mode, state, choices)

    def update(mode, state, succ):
        if state in replaced_random:
            law = exit_stats[(state, mode)]
            total = sum((w for (t, _md), w in law.weights.items() if t == succ), ZERO)
            if total == 0:
                return [(ONE, mode)]
            return [(w / total, md) for (t, md), w in sorted(law.weights.items(), key=str)
                    if t == succ]
        return machine.update(mode, state, succ)

    det = machine.tag in ("md", "fd", "markov", "sc_1bit")
    dirac = all(len(law.weights) <= 1 for law in exit_stats.values())
    tag = machine.tag if (det and dirac) else ("fr" if machine.tag in ("fd", "fr") else "general")
    return StrategyMachine(tag=tag, init_mode=machine.init_mode, choose_fn=choose,
                           update_fn=update, label=f"carried({machine.label})")


# ---------------------------------------------------------------------------
# State rewards <-> transition rewards
# ---------------------------------------------------------------------------

def state_to_transition_rewards(fm: FiniteMdp, bound: Fraction, mode: str) -> FiniteMdp:
    """Split s into s.in -> s.out carrying reward r(s); connecting edges carry
    the buffer reward -bound (limsup mode) or +bound (liminf mode)."""
    if fm.state_rewards is None:
        raise ModelError("model carries no state rewards")
    if mode not in ("limsup", "liminf"):
        raise ModelError("mode must be 'limsup' or 'liminf'")
    bound = Fraction(bound)
    buffer = -bound if mode == "limsup" else bound
    n = fm.n_states()
    for s in range(n):
        if abs(fm.state_rewards[s]) > bound:
            raise BoundViolation(f"state reward {fm.state_rewards[s]} exceeds bound {bound}")
    kinds: List[StateKind] = []
    ids: List[str] = []
    trans: List[List[Transition]] = []

    def idx_in(s): return 2 * s
    def idx_out(s): return 2 * s + 1

    for s in range(n):
        kinds.append(fm.kinds[s])
        ids.append(f"{fm.ids[s]}.in")
        if fm.kinds[s] is StateKind.CONTROLLED:
            trans.append([Transition(idx_out(s), None, fm.state_rewards[s])])
        else:
            trans.append([Transition(idx_out(s), ONE, fm.state_rewards[s])])
        kinds.append(fm.kinds[s])
        ids.append(f"{fm.ids[s]}.out")
        row = []
        for tr in fm.trans[s]:
            row.append(Transition(idx_in(tr.to), tr.prob, buffer))
        trans.append(row)
    # fix the .out row placement: rows alternate in/out per state
    out_trans: List[List[Transition]] = []
    for s in range(n):
        out_trans.append(trans[2 * s])
        out_trans.append(trans[2 * s + 1])
    return FiniteMdp(kinds=kinds, trans=out_trans, initial=idx_in(fm.initial), ids=ids)


def transition_to_state_rewards(fm: FiniteMdp, bound: Fraction, mode: str) -> FiniteMdp:
    """Reverse encoding: insert a state per transition carrying its reward as a
    state reward; original states get the buffer state reward."""
    if mode not in ("limsup", "liminf"):
        raise ModelError("mode must be 'limsup' or 'liminf'")
    bound = Fraction(bound)
    buffer = -bound if mode == "limsup" else bound
    n = fm.n_states()
    for s in range(n):
        for tr in fm.trans[s]:
            if abs(tr.reward) > bound:
                raise BoundViolation(f"transition reward {tr.reward} exceeds bound {bound}")
    kinds: List[StateKind] = [fm.kinds[s] for s in range(n)]
    ids: List[str] = list(fm.ids)
    trans: List[List[Transition]] = [[] for _ in range(n)]
    rewards: List[Fraction] = [buffer] * n
    for s in range(n):
        for tr in fm.trans[s]:
            mid = len(kinds)
            kinds.append(StateKind.CONTROLLED)
            ids.append(f"{fm.ids[s]}>{fm.ids[tr.to]}")
            rewards.append(tr.reward)
            trans.append([Transition(tr.to, None, ZERO)])
            trans[s].append(Transition(mid, tr.prob, ZERO))
    return FiniteMdp(kinds=kinds, trans=trans, initial=fm.initial, ids=ids,
                     state_rewards=rewards)


def state_rewards_as_transition_view(fm: FiniteMdp) -> FiniteMdp:
    """Source-state convention: the reward of each transition is the state
    reward of its source, so point-payoff sequences coincide."""
    if fm.state_rewards is None:
        raise ModelError("model carries no state rewards")
    out = fm.copy()
    for s in range(out.n_states()):
        out.trans[s] = [Transition(tr.to, tr.prob, fm.state_rewards[s])
                        for tr in out.trans[s]]
    return out


# ---------------------------------------------------------------------------
# Expected limsup/liminf -> threshold reduction
# ---------------------------------------------------------------------------

@dataclass
class ExpectedToThresholdResult:
    restricted: FiniteMdp        # support restriction of the optimal strategy
    reweighted: FiniteMdp        # same structure, deficit-encoded state rewards
    state_map: Dict[int, int]    # original index -> restricted index
    values: List[Fraction]       # optimal expected values on the original model


def _reachable_support(fm: FiniteMdp, chain) -> List[int]:
    seen = {fm.initial}
    stack = [fm.initial]
    while stack:
        s = stack.pop()
        for (t, p, _r) in chain[s]:
            if p > 0 and t not in seen:
                seen.add(t)
                stack.append(t)
    return sorted(seen)


def expected_to_threshold(fm: FiniteMdp, policy, vals: Sequence[Fraction],
                          which: str = "limsup") -> ExpectedToThresholdResult:
    """Support restriction + deficit reweighting.

    `fm` carries state rewards; `policy` is an optimal MD policy (edge index
    per controlled state) or an MR policy (list of (weight, edge) pairs).
    Optimality is verified exactly against `vals`; all kept controlled edges
    must be value preserving.  The returned reweighted model's state rewards
    encode the deficit val(s) - r(s) through the usual 0 / -2^-i / -1 scheme,
    so its threshold objective characterizes equalizing behavior.
    """
    if fm.state_rewards is None:
        raise ModelError("expected_to_threshold needs state rewards")
    view = state_rewards_as_transition_view(fm)
    solver_vals, _pol = solve_expected(view, which)
    if list(solver_vals) != list(vals):
        raise NotOptimal("supplied value oracle disagrees with the exact solver")
    mr = policy and isinstance(policy[next(s for s in range(fm.n_states())
                                           if fm.kinds[s] is StateKind.CONTROLLED)], (list, tuple)) \
        if any(k is StateKind.CONTROLLED for k in fm.kinds) else False
    if mr:
        from .solve import evaluate_mr_expected, induced_chain_mr
        chain = induced_chain_mr(view, policy)
        achieved = evaluate_mr_expected(view, policy, which)
    else:
        chain = induced_chain(view, policy)
        achieved = evaluate_md_expected(view, policy, which)
    support = _reachable_support(view, chain)
    for s in support:
        if achieved[s] != vals[s]:
            raise NotOptimal(f"strategy attains {achieved[s]} != value {vals[s]} at {fm.ids[s]}")
    index = {s: i for i, s in enumerate(support)}
    kinds = [fm.kinds[s] for s in support]
    ids = [fm.ids[s] for s in support]
    trans: List[List[Transition]] = []
    rewards: List[Fraction] = []
    for s in support:
        rewards.append(fm.state_rewards[s])
        row: List[Transition] = []
        if fm.kinds[s] is StateKind.CONTROLLED:
            kept = set()
            for (t, p, _r) in chain[s]:
                if p > 0:
                    kept.add(t)
            for tr in fm.trans[s]:
                if tr.to in kept:
                    if vals[tr.to] != vals[s]:
                        raise NotOptimal(
                            f"kept edge {fm.ids[s]}->{fm.ids[tr.to]} is not value preserving")
                    row.append(Transition(index[tr.to], None, tr.reward))
        else:
            for tr in fm.trans[s]:
                row.append(Transition(index[tr.to], tr.prob, tr.reward))
        trans.append(row)
    restricted = FiniteMdp(kinds=kinds, trans=trans, initial=index[fm.initial], ids=ids,
                           state_rewards=rewards)
    problems = validate(restricted)
    if problems:
        raise ModelError("support restriction invalid: " + "; ".join(problems))
    u: List[Fraction] = []
    for s in support:
        deficit = vals[s] - fm.state_rewards[s]
        u.append(reward_of_level(level_of_reward(-deficit)))
    reweighted = restricted.copy()
    reweighted.state_rewards = u
    return ExpectedToThresholdResult(restricted=restricted, reweighted=reweighted,
                                     state_map=index, values=list(vals))
