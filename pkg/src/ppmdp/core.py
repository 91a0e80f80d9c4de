"""Core data model: countable and finite MDPs over exact rational arithmetic.

States are either controlled (the controller picks a successor) or random
(a fixed distribution picks one).  Rewards sit on transitions.  Countable
models are given by a lazy successor oracle; finite models are dense tables
used by every exact solver.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Set, Tuple, Union

StateId = Hashable

ZERO = Fraction(0)
ONE = Fraction(1)


class StateKind(Enum):
    CONTROLLED = "controlled"
    RANDOM = "random"


class ModelError(Exception):
    """A model violates a structural invariant."""


class OracleFailure(ModelError):
    """The successor oracle rejected a state key."""


class EmptySuccessors(ModelError):
    """A state has no successors (every state must have at least one)."""


class InfiniteBubble(ModelError):
    """Bubble/truncation requested on a model that is not finitely branching."""


@dataclass(frozen=True)
class TailLabel:
    """Closed-form limsup/liminf of the reward tail from a state whose future
    is a single strategy-independent run (a sink chain or a self-loop)."""

    limsup: Fraction
    liminf: Fraction

    def __post_init__(self):
        if self.liminf > self.limsup:
            raise ModelError("tail label liminf exceeds limsup")


@dataclass(frozen=True)
class Arm:
    """One branch of a random state: target, probability, transition reward."""

    state: StateId
    prob: Fraction
    reward: Fraction


@dataclass(frozen=True)
class FiniteSupport:
    arms: Tuple[Arm, ...]

    def total_mass(self) -> Fraction:
        return sum((a.prob for a in self.arms), ZERO)


@dataclass(frozen=True)
class InfiniteSupport:
    """Countably infinite random branching, given arm by arm.

    ``arm(i)`` yields the i-th branch (i = 0, 1, ...); ``tail_mass(n)`` is the
    exact probability mass not covered by the first n arms.  Partial sums must
    be monotone and converge to 1.
    """

    arm: Callable[[int], Arm]
    tail_mass: Callable[[int], Fraction]
    description: str = ""


RandomSuccs = Union[FiniteSupport, InfiniteSupport]


@dataclass(frozen=True)
class InfiniteChoices:
    """Countably infinite controlled branching: ``choice(i) -> (state, reward)``."""

    choice: Callable[[int], Tuple[StateId, Fraction]]
    description: str = ""


ControlledSuccs = Union[Tuple[Tuple[StateId, Fraction], ...], InfiniteChoices]
SuccResult = Tuple[StateKind, Union[ControlledSuccs, RandomSuccs]]


@dataclass
class CountableMdp:
    """Lazily generated, possibly infinite MDP.

    The successor oracle must be deterministic (same key, same answer); results
    are memoized.  The memo dict is safe to share between threads: inserts are
    idempotent and reads never see partial values.
    """

    initial: StateId
    succ_fn: Callable[[StateId], SuccResult]
    reward_bound: Optional[Fraction] = None
    tail_fn: Optional[Callable[[StateId], Optional[TailLabel]]] = None
    claims_finitely_branching: bool = True
    claims_universally_transient: bool = False
    claims_acyclic: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict)
    _memo: Dict[StateId, SuccResult] = field(default_factory=dict, repr=False)

    def tail_label(self, s: StateId) -> Optional[TailLabel]:
        if self.tail_fn is None:
            return None
        return self.tail_fn(s)


def successors(m: CountableMdp, s: StateId) -> SuccResult:
    """Memoized successor lookup; raises OracleFailure / EmptySuccessors."""
    hit = m._memo.get(s)
    if hit is not None:
        return hit
    try:
        kind, data = m.succ_fn(s)
    except ModelError:
        raise
    except Exception as exc:  # oracle rejected the key
        raise OracleFailure(f"successor oracle failed on {s!r}: {exc}") from exc
    if kind is StateKind.CONTROLLED:
        if isinstance(data, tuple):
            data = tuple((t, Fraction(r)) for (t, r) in data)
            if not data:
                raise EmptySuccessors(f"state {s!r} has no successors")
    else:
        if isinstance(data, FiniteSupport):
            if not data.arms:
                raise EmptySuccessors(f"state {s!r} has no successors")
    result = (kind, data)
    m._memo[s] = result
    return result


def _neighbor_states(m: CountableMdp, s: StateId, branch_cap: Optional[int]) -> List[StateId]:
    """Successor states of s, capping infinite supports at branch_cap arms."""
    kind, data = successors(m, s)
    out: List[StateId] = []
    if kind is StateKind.CONTROLLED:
        if isinstance(data, InfiniteChoices):
            if branch_cap is None:
                raise InfiniteBubble(f"state {s!r} has infinite controlled branching")
            for i in range(branch_cap):
                out.append(data.choice(i)[0])
        else:
            out.extend(t for (t, _r) in data)
    else:
        if isinstance(data, InfiniteSupport):
            if branch_cap is None:
                raise InfiniteBubble(f"state {s!r} has infinite random branching")
            for i in range(branch_cap):
                out.append(data.arm(i).state)
        else:
            out.extend(a.state for a in data.arms)
    return out


def distance_and_bubble(m: CountableMdp, base: Iterable[StateId], n: int,
                        branch_cap: Optional[int] = None) -> Set[StateId]:
    """States at BFS distance <= n from the base set.

    Finite only for finitely branching models; pass branch_cap to explore a
    capped version of an infinitely branching model.
    """
    if not m.claims_finitely_branching and branch_cap is None:
        raise InfiniteBubble("model does not claim finite branching; pass branch_cap")
    frontier = list(dict.fromkeys(base))
    seen: Set[StateId] = set(frontier)
    for _ in range(n):
        nxt: List[StateId] = []
        for s in frontier:
            if m.tail_label(s) is not None:
                continue  # tail-labeled futures are not expanded
            for t in _neighbor_states(m, s, branch_cap):
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        if not nxt:
            break
        frontier = nxt
    return seen


class FrontierPolicy(Enum):
    LOSING_SINK = "losing"
    WINNING_SINK = "winning"
    SELF_LOOP_ZERO = "selfloop0"


FRONTIER_SINK = ("__frontier__",)

_POLICY_REWARD = {
    FrontierPolicy.LOSING_SINK: Fraction(-1),
    FrontierPolicy.WINNING_SINK: ZERO,
    FrontierPolicy.SELF_LOOP_ZERO: ZERO,
}

_POLICY_LABEL = {
    FrontierPolicy.LOSING_SINK: TailLabel(Fraction(-1), Fraction(-1)),
    FrontierPolicy.WINNING_SINK: TailLabel(ZERO, ZERO),
    FrontierPolicy.SELF_LOOP_ZERO: TailLabel(ZERO, ZERO),
}


@dataclass(frozen=True)
class Transition:
    """One outgoing edge of a finite MDP. prob is None at controlled states."""

    to: int
    prob: Optional[Fraction]
    reward: Fraction


@dataclass
class FiniteMdp:
    """Explicit finite MDP: dense state table with exact rationals."""

    kinds: List[StateKind]
    trans: List[List[Transition]]
    initial: int
    ids: List[str]
    tail_labels: Dict[int, TailLabel] = field(default_factory=dict)
    state_rewards: Optional[List[Fraction]] = None

    def n_states(self) -> int:
        return len(self.kinds)

    def transition_pairs(self) -> Set[Tuple[int, int]]:
        return {(s, tr.to) for s in range(self.n_states()) for tr in self.trans[s]}

    def reward_of(self, s: int, t: int) -> Fraction:
        for tr in self.trans[s]:
            if tr.to == t:
                return tr.reward
        raise KeyError((s, t))

    def copy(self) -> "FiniteMdp":
        return FiniteMdp(
            kinds=list(self.kinds),
            trans=[list(row) for row in self.trans],
            initial=self.initial,
            ids=list(self.ids),
            tail_labels=dict(self.tail_labels),
            state_rewards=None if self.state_rewards is None else list(self.state_rewards),
        )


def validate(m: FiniteMdp) -> List[str]:
    """Structural check; returns a list of violations (empty means valid)."""
    out: List[str] = []
    n = m.n_states()
    if not (0 <= m.initial < n):
        out.append(f"initial index {m.initial} out of range")
    if len(m.trans) != n or len(m.ids) != n:
        out.append("state table lengths disagree")
        return out
    if len(set(m.ids)) != n:
        out.append("duplicate state ids")
    for s in range(n):
        row = m.trans[s]
        if not row:
            out.append(f"state {m.ids[s]} has no successors")
            continue
        seen_targets = set()
        for tr in row:
            if not (0 <= tr.to < n):
                out.append(f"state {m.ids[s]} has dangling edge to index {tr.to}")
            if tr.to in seen_targets:
                out.append(f"state {m.ids[s]} has duplicate edge to {m.ids[tr.to]}")
            seen_targets.add(tr.to)
        if m.kinds[s] is StateKind.RANDOM:
            total = ZERO
            for tr in row:
                if tr.prob is None:
                    out.append(f"random state {m.ids[s]} has an unweighted edge")
                    break
                if tr.prob < 0 or tr.prob > 1:
                    out.append(f"random state {m.ids[s]} has probability {tr.prob} outside [0,1]")
                total += tr.prob if tr.prob is not None else ZERO
            else:
                if total != 1:
                    out.append(f"random state {m.ids[s]} has probability sum {total} != 1")
        else:
            for tr in row:
                if tr.prob is not None:
                    out.append(f"controlled state {m.ids[s]} carries a probability")
                    break
    if m.state_rewards is not None and len(m.state_rewards) != n:
        out.append("state reward table length disagrees")
    return out


def _id_str(s: StateId) -> str:
    if isinstance(s, str):
        return s
    if isinstance(s, tuple):
        return "(" + ",".join(_id_str(x) for x in s) + ")"
    return str(s)


def truncate(m: CountableMdp, depth: int, policy: FrontierPolicy = FrontierPolicy.LOSING_SINK,
             branch_cap: Optional[int] = None) -> Tuple[FiniteMdp, Dict[StateId, int]]:
    """Finite instance spanning bubble(depth, {initial}) plus one frontier sink.

    Interior states keep their transitions (capped at branch_cap arms for
    infinite supports, with the remaining random mass routed to the sink).
    Frontier states (at distance exactly depth) have all outgoing edges
    rerouted to the sink.  Tail-labeled states become absorbing self-loops,
    which requires limsup == liminf on the label.
    """
    if depth < 0:
        raise ModelError("depth must be >= 0")
    if not m.claims_finitely_branching and branch_cap is None:
        raise InfiniteBubble("model does not claim finite branching; pass branch_cap")

    dist: Dict[StateId, int] = {m.initial: 0}
    order: List[StateId] = [m.initial]
    queue = deque([m.initial])
    while queue:
        s = queue.popleft()
        d = dist[s]
        if d == depth or m.tail_label(s) is not None:
            continue
        for t in _neighbor_states(m, s, branch_cap):
            if t not in dist:
                dist[t] = d + 1
                order.append(t)
                queue.append(t)

    index = {s: i for i, s in enumerate(order)}
    sink = len(order)
    kinds: List[StateKind] = []
    trans: List[List[Transition]] = []
    tails: Dict[int, TailLabel] = {}
    sink_reward = _POLICY_REWARD[policy]

    for s in order:
        label = m.tail_label(s)
        if label is not None:
            if label.limsup != label.liminf:
                raise ModelError(
                    f"cannot truncate oscillating tail {label} at {s!r} into a self-loop")
            kinds.append(StateKind.CONTROLLED)
            trans.append([Transition(index[s], None, label.limsup)])
            tails[index[s]] = label
            continue
        kind, data = successors(m, s)
        if dist[s] == depth:
            kinds.append(StateKind.CONTROLLED)
            trans.append([Transition(sink, None, sink_reward)])
            continue
        kinds.append(kind)
        row: List[Transition] = []
        if kind is StateKind.CONTROLLED:
            if isinstance(data, InfiniteChoices):
                for i in range(branch_cap):
                    t, r = data.choice(i)
                    row.append(Transition(index[t], None, r))
            else:
                for (t, r) in data:
                    row.append(Transition(index[t], None, r))
        else:
            if isinstance(data, InfiniteSupport):
                kept = ZERO
                for i in range(branch_cap):
                    a = data.arm(i)
                    row.append(Transition(index[a.state], a.prob, a.reward))
                    kept += a.prob
                tail = data.tail_mass(branch_cap)
                if kept + tail != 1:
                    raise ModelError(f"infinite support at {s!r}: prefix {kept} + tail {tail} != 1")
                if tail > 0:
                    row.append(Transition(sink, tail, sink_reward))
            else:
                for a in data.arms:
                    row.append(Transition(index[a.state], a.prob, a.reward))
        # merge accidental duplicate targets at random states (capped arms may collide)
        row = _merge_duplicate_edges(row, kind)
        trans.append(row)

    kinds.append(StateKind.CONTROLLED)
    trans.append([Transition(sink, None, sink_reward)])
    tails[sink] = _POLICY_LABEL[policy]
    ids = [_id_str(s) for s in order] + ["__frontier__"]
    fm = FiniteMdp(kinds=kinds, trans=trans, initial=index[m.initial], ids=ids,
                   tail_labels=tails)
    problems = validate(fm)
    if problems:
        raise ModelError("truncation produced an invalid model: " + "; ".join(problems))
    return fm, index


def _merge_duplicate_edges(row: List[Transition], kind: StateKind) -> List[Transition]:
    seen: Dict[int, int] = {}
    out: List[Transition] = []
    for tr in row:
        if tr.to in seen:
            i = seen[tr.to]
            prev = out[i]
            if kind is StateKind.RANDOM:
                if prev.reward != tr.reward:
                    raise ModelError("duplicate edge with conflicting rewards")
                out[i] = Transition(prev.to, prev.prob + tr.prob, prev.reward)
            # controlled duplicates with equal rewards collapse silently
            elif prev.reward != tr.reward:
                raise ModelError("duplicate controlled edge with conflicting rewards")
        else:
            seen[tr.to] = len(out)
            out.append(tr)
    return out


def as_countable(fm: FiniteMdp, name: str = "") -> CountableMdp:
    """View a finite MDP through the lazy-oracle interface (states = indices)."""

    def succ(s: int) -> SuccResult:
        kind = fm.kinds[s]
        row = fm.trans[s]
        if kind is StateKind.CONTROLLED:
            return kind, tuple((tr.to, tr.reward) for tr in row)
        return kind, FiniteSupport(tuple(Arm(tr.to, tr.prob, tr.reward) for tr in row))

    def tail(s: int) -> Optional[TailLabel]:
        return fm.tail_labels.get(s)

    return CountableMdp(initial=fm.initial, succ_fn=succ, tail_fn=tail,
                        claims_finitely_branching=True, name=name or "finite")


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

_RATIONAL_RE = re.compile(r"^-?\d+(/[1-9]\d*)?$")


def parse_rational(text: str) -> Fraction:
    """Parse an exact rational string 'num' or 'num/den'; decimals rejected."""
    if not isinstance(text, str) or not _RATIONAL_RE.match(text):
        raise ModelError(f"not an exact rational literal: {text!r}")
    return Fraction(text)


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def finite_mdp_to_json(m: FiniteMdp) -> dict:
    states = []
    for s in range(m.n_states()):
        entry = {
            "id": m.ids[s],
            "kind": m.kinds[s].value,
            "trans": [],
        }
        for tr in m.trans[s]:
            t = {"to": m.ids[tr.to], "reward": format_rational(tr.reward)}
            if m.kinds[s] is StateKind.RANDOM:
                t["prob"] = format_rational(tr.prob)
            entry["trans"].append(t)
        states.append(entry)
    doc = {"states": states, "initial": m.ids[m.initial]}
    if m.state_rewards is not None:
        doc["state_rewards"] = {m.ids[s]: format_rational(r)
                                for s, r in enumerate(m.state_rewards)}
    return doc


def finite_mdp_from_json(doc: dict) -> FiniteMdp:
    if "states" not in doc or "initial" not in doc:
        raise ModelError("model JSON needs 'states' and 'initial'")
    ids = [st["id"] for st in doc["states"]]
    index = {sid: i for i, sid in enumerate(ids)}
    if len(index) != len(ids):
        raise ModelError("duplicate state ids in model JSON")
    kinds: List[StateKind] = []
    trans: List[List[Transition]] = []
    for st in doc["states"]:
        kind = StateKind(st["kind"])
        kinds.append(kind)
        row: List[Transition] = []
        for t in st.get("trans", []):
            if t["to"] not in index:
                raise ModelError(f"edge to unknown state {t['to']!r}")
            prob = None
            if kind is StateKind.RANDOM:
                if "prob" not in t:
                    raise ModelError(f"random state {st['id']} edge lacks prob")
                prob = parse_rational(t["prob"])
            elif "prob" in t:
                raise ModelError(f"controlled state {st['id']} edge carries prob")
            row.append(Transition(index[t["to"]], prob, parse_rational(t["reward"])))
        trans.append(row)
    if doc["initial"] not in index:
        raise ModelError("unknown initial state")
    state_rewards = None
    if "state_rewards" in doc:
        state_rewards = [ZERO] * len(ids)
        for sid, r in doc["state_rewards"].items():
            state_rewards[index[sid]] = parse_rational(r)
    m = FiniteMdp(kinds=kinds, trans=trans, initial=index[doc["initial"]], ids=ids,
                  state_rewards=state_rewards)
    problems = validate(m)
    if problems:
        raise ModelError("invalid model JSON: " + "; ".join(problems))
    return m


def load_finite_mdp(path: str) -> FiniteMdp:
    with open(path) as fh:
        return finite_mdp_from_json(json.load(fh))


def dump_finite_mdp(m: FiniteMdp, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(finite_mdp_to_json(m), fh, indent=2)
        fh.write("\n")
