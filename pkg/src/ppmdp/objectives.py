"""Objective algebra, finite-prefix verdicts, and the reward/family reductions.

An objective is a predicate on infinite runs.  On finite prefixes we only
return Sat/Viol when logically forced; lassos (stem + cycle of a deterministic
finite product) are always decidable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple, Union

from .core import FiniteMdp, Fraction, ModelError, TailLabel, ZERO, parse_rational, format_rational

INF = math.inf
Level = Union[int, float, None]  # int level, math.inf, or None (not even in A_0)


class Verdict(Enum):
    SAT = "sat"
    VIOL = "viol"
    UNDETERMINED = "undetermined"

    def conj(self, other: "Verdict") -> "Verdict":
        if self is Verdict.VIOL or other is Verdict.VIOL:
            return Verdict.VIOL
        if self is Verdict.SAT and other is Verdict.SAT:
            return Verdict.SAT
        return Verdict.UNDETERMINED


@dataclass(frozen=True)
class TransRef:
    """A transition as seen by objective predicates."""

    src: object
    dst: object
    reward: Fraction


class TransSet:
    """A set of transitions, either an explicit (src, dst) table or a predicate."""

    def __init__(self, pairs: Optional[FrozenSet[Tuple[object, object]]] = None,
                 predicate: Optional[Callable[[TransRef], bool]] = None,
                 label: str = ""):
        if (pairs is None) == (predicate is None):
            raise ModelError("TransSet needs exactly one of pairs or predicate")
        self.pairs = pairs
        self.predicate = predicate
        self.label = label

    @staticmethod
    def of(pairs: Sequence[Tuple[object, object]], label: str = "") -> "TransSet":
        return TransSet(pairs=frozenset(pairs), label=label)

    @staticmethod
    def where(predicate: Callable[[TransRef], bool], label: str = "") -> "TransSet":
        return TransSet(predicate=predicate, label=label)

    @staticmethod
    def reward_at_least(threshold: Fraction) -> "TransSet":
        thr = Fraction(threshold)
        return TransSet(predicate=lambda t: t.reward >= thr, label=f"r>={thr}")

    def contains(self, t: TransRef) -> bool:
        if self.pairs is not None:
            return (t.src, t.dst) in self.pairs
        return self.predicate(t)

    def __repr__(self):
        return f"TransSet({self.label or (self.pairs if self.pairs is not None else 'pred')})"


class MonotoneFamily:
    """Monotone decreasing transition-set family A_0 >= A_1 >= ... given by a
    membership-level function: level(t) = max { i : t in A_i }.

    Levels are None (t not in A_0), a natural number, or math.inf.
    """

    def __init__(self, level: Callable[[TransRef], Level], label: str = ""):
        self._level = level
        self.label = label

    def level(self, t: TransRef) -> Level:
        return self._level(t)

    def in_set(self, i: int, t: TransRef) -> bool:
        lv = self._level(t)
        if lv is None:
            return False
        return lv >= i

    def set_at(self, i: int) -> TransSet:
        return TransSet.where(lambda t, i=i: self.in_set(i, t), label=f"{self.label}[{i}]")


def level_of_reward(r: Fraction) -> Level:
    """max { i >= 0 : r >= -2^-i }; inf when r >= 0, None when r < -1."""
    r = Fraction(r)
    if r >= 0:
        return INF
    if r < -1:
        return None
    # find the largest i with -r <= 2^-i, i.e. (-r) * 2^i <= 1
    i = 0
    x = -r
    while x * 2 <= 1:
        x *= 2
        i += 1
    return i


def family_from_rewards(label: str = "from_rewards") -> MonotoneFamily:
    """The family A_i = { t : r(t) >= -2^-i } induced by transition rewards."""
    return MonotoneFamily(lambda t: level_of_reward(t.reward), label=label)


def reward_of_level(lv: Level) -> Fraction:
    """0 for level inf, -2^-i for finite level i, -1 when outside A_0."""
    if lv is None:
        return Fraction(-1)
    if lv == INF:
        return ZERO
    return Fraction(-1, 2 ** int(lv))


def rewards_from_family(m: FiniteMdp, fam: MonotoneFamily) -> FiniteMdp:
    """Copy of m whose rewards encode the family (verdict-equivalent on runs)."""
    out = m.copy()
    for s in range(out.n_states()):
        row = []
        for tr in out.trans[s]:
            ref = TransRef(s, tr.to, tr.reward)
            row.append(type(tr)(tr.to, tr.prob, reward_of_level(fam.level(ref))))
        out.trans[s] = row
    return out


def family_table(levels: Dict[Tuple[object, object], Level], default: Level = None,
                 label: str = "table") -> MonotoneFamily:
    table = dict(levels)
    return MonotoneFamily(lambda t: table.get((t.src, t.dst), default), label=label)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

class ObjKind(Enum):
    REACH = "reach"
    REACH_WITHIN = "reach_within"
    SAFETY = "safety"
    BUCHI = "buchi"
    COBUCHI = "cobuchi"
    GF_FAMILY = "gf_family"
    FG_FAMILY = "fg_family"
    LIMSUP_GEQ0 = "limsup_geq0"
    LIMINF_GEQ0 = "liminf_geq0"
    TRANSIENCE = "transience"
    AND = "and"


@dataclass(frozen=True)
class Objective:
    kind: ObjKind
    targets: Optional[FrozenSet[object]] = None      # reach variants
    within: Optional[int] = None                     # reach_within bound
    transitions: Optional[TransSet] = None           # safety / buchi / cobuchi
    family: Optional[MonotoneFamily] = None          # gf / fg families
    parts: Tuple["Objective", ...] = ()              # conjunctions

    def __repr__(self):
        return f"Objective({self.kind.value})"


def reach(targets) -> Objective:
    return Objective(ObjKind.REACH, targets=frozenset(targets))


def reach_within(targets, k: int) -> Objective:
    return Objective(ObjKind.REACH_WITHIN, targets=frozenset(targets), within=k)


def safety(allowed: TransSet) -> Objective:
    return Objective(ObjKind.SAFETY, transitions=allowed)


def buchi(trans: TransSet) -> Objective:
    return Objective(ObjKind.BUCHI, transitions=trans)


def cobuchi(trans: TransSet) -> Objective:
    return Objective(ObjKind.COBUCHI, transitions=trans)


def gf_family(fam: MonotoneFamily) -> Objective:
    return Objective(ObjKind.GF_FAMILY, family=fam)


def fg_family(fam: MonotoneFamily) -> Objective:
    return Objective(ObjKind.FG_FAMILY, family=fam)


limsup_geq0 = Objective(ObjKind.LIMSUP_GEQ0)
liminf_geq0 = Objective(ObjKind.LIMINF_GEQ0)
transience = Objective(ObjKind.TRANSIENCE)


def conj(*parts: Objective) -> Objective:
    flat: List[Objective] = []
    for p in parts:
        if p.kind is ObjKind.AND:
            flat.extend(p.parts)
        else:
            flat.append(p)
    seen = []
    for p in flat:
        if p not in seen:
            seen.append(p)
    if len(seen) == 1:
        return seen[0]
    return Objective(ObjKind.AND, parts=tuple(seen))


# ---------------------------------------------------------------------------
# Finite-prefix verdicts
# ---------------------------------------------------------------------------

@dataclass
class RunPrefix:
    """A finite run prefix: states s_0..s_n and the rewards of the n steps.

    ``tail`` is set when the prefix ended by absorption at a tail-labeled
    state, in which case the whole infinite future is known in closed form.
    """

    states: List[object]
    rewards: List[Fraction]
    tail: Optional[TailLabel] = None
    modes: Optional[List[object]] = None

    def transitions(self) -> List[TransRef]:
        return [TransRef(self.states[i], self.states[i + 1], self.rewards[i])
                for i in range(len(self.rewards))]

    def steps(self) -> int:
        return len(self.rewards)


def classify_prefix(run: RunPrefix, obj: Objective) -> Verdict:
    """Sat/Viol only when logically forced by the prefix (plus tail label)."""
    k = obj.kind
    if k is ObjKind.AND:
        v = Verdict.SAT
        for p in obj.parts:
            v = v.conj(classify_prefix(run, p))
        return v
    if k is ObjKind.REACH:
        if any(s in obj.targets for s in run.states):
            return Verdict.SAT
        return Verdict.UNDETERMINED
    if k is ObjKind.REACH_WITHIN:
        horizon = min(len(run.states) - 1, obj.within)
        if any(s in obj.targets for s in run.states[: obj.within + 1]):
            return Verdict.SAT
        if len(run.states) - 1 >= obj.within:
            return Verdict.VIOL
        if run.tail is not None:
            # absorbed: the future repeats tail states; new targets unreachable
            return Verdict.VIOL
        return Verdict.UNDETERMINED
    if k is ObjKind.SAFETY:
        for t in run.transitions():
            if not obj.transitions.contains(t):
                return Verdict.VIOL
        return Verdict.UNDETERMINED
    if k is ObjKind.LIMSUP_GEQ0:
        if run.tail is not None:
            return Verdict.SAT if run.tail.limsup >= 0 else Verdict.VIOL
        return Verdict.UNDETERMINED
    if k is ObjKind.LIMINF_GEQ0:
        if run.tail is not None:
            return Verdict.SAT if run.tail.liminf >= 0 else Verdict.VIOL
        return Verdict.UNDETERMINED
    # Buchi, co-Buchi, families, Transience: never decided by a finite prefix
    return Verdict.UNDETERMINED


# ---------------------------------------------------------------------------
# Lasso verdicts (exact on eventually periodic runs)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lasso:
    """Eventually periodic run: stem transitions then a repeated cycle."""

    stem: Tuple[TransRef, ...]
    cycle: Tuple[TransRef, ...]

    def __post_init__(self):
        if not self.cycle:
            raise ModelError("lasso cycle must be nonempty")

    def states(self) -> List[object]:
        out = [t.src for t in self.stem] + [t.src for t in self.cycle]
        out.append(self.cycle[-1].dst)
        return out


def lasso_verdict(lasso: Lasso, obj: Objective) -> Verdict:
    k = obj.kind
    if k is ObjKind.AND:
        v = Verdict.SAT
        for p in obj.parts:
            v = v.conj(lasso_verdict(lasso, p))
        return v
    cyc = lasso.cycle
    if k is ObjKind.REACH:
        hit = any(s in obj.targets for s in lasso.states())
        return Verdict.SAT if hit else Verdict.VIOL
    if k is ObjKind.REACH_WITHIN:
        states = [t.src for t in lasso.stem]
        i = 0
        while len(states) <= obj.within:
            states.append(cyc[i % len(cyc)].src)
            i += 1
        hit = any(s in obj.targets for s in states[: obj.within + 1])
        return Verdict.SAT if hit else Verdict.VIOL
    if k is ObjKind.SAFETY:
        ok = all(obj.transitions.contains(t) for t in lasso.stem + cyc)
        return Verdict.SAT if ok else Verdict.VIOL
    if k is ObjKind.BUCHI:
        hit = any(obj.transitions.contains(t) for t in cyc)
        return Verdict.SAT if hit else Verdict.VIOL
    if k is ObjKind.COBUCHI:
        ok = all(obj.transitions.contains(t) for t in cyc)
        return Verdict.SAT if ok else Verdict.VIOL
    if k is ObjKind.GF_FAMILY:
        hit = any(obj.family.level(t) == INF for t in cyc)
        return Verdict.SAT if hit else Verdict.VIOL
    if k is ObjKind.FG_FAMILY:
        ok = all(obj.family.level(t) == INF for t in cyc)
        return Verdict.SAT if ok else Verdict.VIOL
    if k is ObjKind.LIMSUP_GEQ0:
        return Verdict.SAT if max(t.reward for t in cyc) >= 0 else Verdict.VIOL
    if k is ObjKind.LIMINF_GEQ0:
        return Verdict.SAT if min(t.reward for t in cyc) >= 0 else Verdict.VIOL
    if k is ObjKind.TRANSIENCE:
        return Verdict.VIOL  # a lasso revisits its cycle states forever
    raise ModelError(f"lasso verdict not defined for {obj}")


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def _trans_pairs_to_json(ts: TransSet) -> list:
    if ts.pairs is None:
        raise ModelError("cannot serialize a predicate transition set")
    return sorted([f"{a}->{b}" for (a, b) in ts.pairs])


def _trans_pairs_from_json(items: list) -> TransSet:
    pairs = []
    for it in items:
        a, _, b = it.partition("->")
        if not _:
            raise ModelError(f"bad transition id {it!r}")
        pairs.append((a, b))
    return TransSet.of(pairs)


def objective_to_json(obj: Objective) -> dict:
    k = obj.kind
    if k in (ObjKind.LIMSUP_GEQ0, ObjKind.LIMINF_GEQ0, ObjKind.TRANSIENCE):
        return {"kind": k.value}
    if k in (ObjKind.REACH, ObjKind.REACH_WITHIN):
        doc = {"kind": k.value, "targets": sorted(str(t) for t in obj.targets)}
        if obj.within is not None:
            doc["within"] = obj.within
        return doc
    if k in (ObjKind.SAFETY, ObjKind.BUCHI, ObjKind.COBUCHI):
        return {"kind": k.value, "transitions": _trans_pairs_to_json(obj.transitions)}
    if k in (ObjKind.GF_FAMILY, ObjKind.FG_FAMILY):
        fam = obj.family
        if getattr(fam, "_table_json", None) is not None:
            famdoc = fam._table_json
        else:
            famdoc = {"type": "from_rewards"}
        return {"kind": k.value, "family": famdoc}
    if k is ObjKind.AND:
        return {"kind": "and", "parts": [objective_to_json(p) for p in obj.parts]}
    raise ModelError(f"cannot serialize {obj}")


def objective_from_json(doc: dict) -> Objective:
    kind = ObjKind(doc["kind"])
    if kind is ObjKind.REACH:
        return reach(doc["targets"])
    if kind is ObjKind.REACH_WITHIN:
        return reach_within(doc["targets"], int(doc["within"]))
    if kind in (ObjKind.SAFETY, ObjKind.BUCHI, ObjKind.COBUCHI):
        ts = _trans_pairs_from_json(doc["transitions"])
        return Objective(kind, transitions=ts)
    if kind in (ObjKind.GF_FAMILY, ObjKind.FG_FAMILY):
        famdoc = doc.get("family", {"type": "from_rewards"})
        if famdoc.get("type") == "from_rewards":
            fam = family_from_rewards()
        elif famdoc.get("type") == "table":
            levels: Dict[Tuple[object, object], Level] = {}
            for tid, lv in famdoc.get("levels", {}).items():
                a, _, b = tid.partition("->")
                levels[(a, b)] = INF if lv == "inf" else (None if lv is None else int(lv))
            fam = family_table(levels)
            fam._table_json = famdoc
        else:
            raise ModelError(f"unknown family spec {famdoc!r}")
        return Objective(kind, family=fam)
    if kind is ObjKind.LIMSUP_GEQ0:
        return limsup_geq0
    if kind is ObjKind.LIMINF_GEQ0:
        return liminf_geq0
    if kind is ObjKind.TRANSIENCE:
        return transience
    if kind is ObjKind.AND:
        return conj(*[objective_from_json(p) for p in doc["parts"]])
    raise ModelError(f"unknown objective kind {doc['kind']!r}")
