"""Built-in generator families: the parametric countable MDPs used by the
verification lab, their closed-form tail labels, and the matching built-in
strategies (escalating infinite-memory schedules, finite tables, memoryless
randomized tables).

Every generated model is exact: probabilities 2^-i and rewards -1/i are
rationals, and identical across runs and platforms.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .core import (Arm, CountableMdp, FiniteSupport, InfiniteChoices, InfiniteSupport,
                   ModelError, StateKind, TailLabel, ONE, ZERO, successors)
from .sim import PassProcess
from .strategies import (StrategyMachine, TAG_FD, TAG_GENERAL, TAG_MD, TAG_MR,
                         md_machine, mr_machine)

FAMILIES = ("ladder_limsup", "randf_ladder", "cobuchi_infbranch", "incomparable")


class BadParams(ModelError):
    """Family parameters outside the documented range."""


# ---------------------------------------------------------------------------
# ladder_limsup: controlled ladder with -1 rungs and -1/i reset edges
# ---------------------------------------------------------------------------

def ladder_limsup() -> CountableMdp:
    def succ(s):
        if s == "s0":
            return StateKind.CONTROLLED, ((("r", 1), Fraction(-1)),)
        tag, i = s
        return StateKind.CONTROLLED, (
            (("r", i + 1), Fraction(-1)),
            ("s0", Fraction(-1, i)),
        )

    return CountableMdp(initial="s0", succ_fn=succ, reward_bound=Fraction(1),
                        claims_finitely_branching=True, name="ladder_limsup")


def ladder_escalating() -> StrategyMachine:
    """Exit the ladder at rung i on the i-th pass; infinite memory, the unique
    run sees every reset reward -1/i exactly once, so its limsup is 0."""

    def choose(mode, state, _choices):
        if state == "s0":
            return [(ONE, (mode, 0))]
        _tag, i = state
        if i == mode:
            return [(ONE, (mode + 1, 1))]   # reset edge
        return [(ONE, (mode, 0))]           # climb

    return StrategyMachine(tag=TAG_GENERAL, init_mode=1, choose_fn=choose,
                           label="ladder-escalating")


def ladder_fd_table(k: int, rung_action: Dict[int, Tuple[str, int]],
                    s0_update: Dict[int, int], init_mode: int = 0) -> StrategyMachine:
    """Finitely presentable Det(F) strategy over the named partition
    {s0} | {all rungs}: per mode, one action at rungs ('continue'|'reset', next
    mode) and one memory update at s0."""
    for m in range(k):
        if m not in rung_action or m not in s0_update:
            raise BadParams("table must cover every mode")

    def choose(mode, state, _choices):
        if state == "s0":
            return [(ONE, (s0_update[mode], 0))]
        action, nxt = rung_action[mode]
        return [(ONE, (nxt, 1 if action == "reset" else 0))]

    return StrategyMachine(tag=TAG_FD, init_mode=init_mode, choose_fn=choose,
                           label=f"ladder-fd{k}")


def ladder_divergence_rule(k_modes: int) -> Callable[[List[object], List[Fraction]],
                                                     Optional[TailLabel]]:
    """Pigeonhole certificate for named-partition FD tables on the ladder: a
    climb that passes 2k rungs without a reset has cycled its finite memory on
    the one-class rung partition and will climb forever, seeing -1 only."""
    limit = 2 * k_modes + 1

    def rule(states, _rewards):
        run = 0
        for s in reversed(states):
            if isinstance(s, tuple) and s[0] == "r":
                run += 1
            else:
                break
        if run >= limit:
            return TailLabel(Fraction(-1), Fraction(-1))
        return None

    return rule


# ---------------------------------------------------------------------------
# randf_ladder: the Rand(F) lower-bound ladder with 2^-i drop probabilities
# ---------------------------------------------------------------------------

def randf_ladder() -> CountableMdp:
    def succ(s):
        if s == "s0":
            return StateKind.CONTROLLED, ((("L", 1), Fraction(-1)),)
        tag = s[0]
        i = s[1]
        if tag == "L":
            return StateKind.CONTROLLED, (
                (("L", i + 1), Fraction(-1)),
                (("R", i), ZERO),
            )
        if tag == "R":
            p = Fraction(1, 2 ** i)
            return StateKind.RANDOM, FiniteSupport((
                Arm(("bot", 0), p, Fraction(-1)),
                Arm(("T", i), ONE - p, ZERO),
            ))
        if tag == "T":
            if i == 1:
                return StateKind.CONTROLLED, (("s0", ZERO),)
            return StateKind.CONTROLLED, ((("T", i - 1), ZERO),)
        if tag == "bot":
            return StateKind.CONTROLLED, ((("bot", i + 1), Fraction(-1)),)
        raise ModelError(f"unknown state {s!r}")

    def tail(s):
        if isinstance(s, tuple) and s[0] == "bot":
            return TailLabel(Fraction(-1), Fraction(-1))
        return None

    return CountableMdp(initial="s0", succ_fn=succ, reward_bound=Fraction(1),
                        tail_fn=tail, claims_finitely_branching=True,
                        name="randf_ladder")


def randf_escalating(offset: int) -> StrategyMachine:
    """On pass k, exit the ladder at rung k + offset; survival of every pass
    forces infinitely many returns to s0, so the limsup threshold holds."""
    if offset < 0:
        raise BadParams("offset must be >= 0")

    def choose(mode, state, _choices):
        if state == "s0":
            return [(ONE, (mode, 0))]
        tag = state[0]
        i = state[1]
        if tag == "L":
            if i == mode + offset:
                return [(ONE, (mode, 1))]   # step down to R_i
            return [(ONE, (mode, 0))]
        if tag == "T":
            if i == 1:
                return [(ONE, (mode + 1, 0))]   # back at s0: next pass
            return [(ONE, (mode, 0))]
        return [(ONE, (mode, 0))]   # bot chain

    return StrategyMachine(tag=TAG_GENERAL, init_mode=1, choose_fn=choose,
                           label=f"randf-escalating(c={offset})")


def randf_mr_table(weights: Dict[int, Fraction]) -> StrategyMachine:
    """Memoryless randomized exit-rung distribution, realized by per-rung exit
    hazards h_i = w_i / (1 - sum_{j<i} w_j)."""
    ws = {int(i): Fraction(w) for i, w in weights.items()}
    if sum(ws.values(), ZERO) != 1:
        raise BadParams(f"weights sum to {sum(ws.values(), ZERO)} != 1")
    if any(w < 0 for w in ws.values()):
        raise BadParams("negative weight")
    top = max(ws)
    hazards: Dict[int, Fraction] = {}
    remaining = ONE
    for i in range(1, top + 1):
        w = ws.get(i, ZERO)
        hazards[i] = w / remaining if remaining > 0 else ONE
        remaining -= w

    def dist(state, _choices):
        if state == "s0" or state[0] in ("T", "bot"):
            return [(ONE, 0)]
        if state[0] == "L":
            i = state[1]
            h = hazards.get(i)
            if h is None:
                return [(ONE, 1)]  # beyond the table: exit now (mass exhausted)
            if h >= 1:
                return [(ONE, 1)]
            out = []
            if h > 0:
                out.append((h, 1))
            out.append((ONE - h, 0))
            return out
        return [(ONE, 0)]

    return mr_machine(dist, label=f"randf-mr({sorted(ws.items())})")


def _ladder_pass_steps(i: int) -> Tuple[int, int]:
    """Steps consumed by one ladder pass exiting at rung i: failure observed
    when the drop edge fires, survival returns to s0."""
    return i + 2, 2 * i + 2


def randf_escalating_pass_process(offset: int) -> PassProcess:
    """Pass-level view of the escalating strategy on randf_ladder.

    A run alive at the horizon is adjudicated Sat: under this strategy, staying
    on the ladder forever has probability zero, and the chance that an alive
    run ever drops later is below tail_fail_bound(pass), which the bracket
    absorbs as residual.
    """
    cache = {}

    def play(rng, k: int):
        entry = cache.get(k)
        if entry is None:
            i = k + offset
            fail_steps, ok_steps = _ladder_pass_steps(i)
            entry = (0.5 ** i, fail_steps, ok_steps)
            cache[k] = entry
        q, fail_steps, ok_steps = entry
        if rng.random() < q:
            return True, fail_steps
        return False, ok_steps

    def tail_bound(k: int) -> Fraction:
        return Fraction(1, 2 ** (k + offset - 1))

    return PassProcess(play=play, alive_sat=True, tail_fail_bound=tail_bound,
                       label=f"randf-escalating(c={offset})")


def randf_mr_pass_process(weights: Dict[int, Fraction]) -> PassProcess:
    """Pass-level view of a memoryless exit table: every pass drops with the
    same positive probability, so runs alive at the horizon still lose almost
    surely (geometric trials); alive runs are adjudicated Viol exactly."""
    ws = {int(i): Fraction(w) for i, w in weights.items()}
    if sum(ws.values(), ZERO) != 1:
        raise BadParams("weights must sum to 1")
    delta = sum((w * Fraction(1, 2 ** i) for i, w in ws.items()), ZERO)
    if delta <= 0:
        raise BadParams("per-pass drop probability must be positive")
    rungs = sorted(ws)
    cumulative = []
    acc = 0.0
    for i in rungs:
        acc += float(ws[i])
        cumulative.append((acc, i))

    def play(rng, _k: int):
        u = rng.random()
        i = rungs[-1]
        for cum, rung in cumulative:
            if u < cum:
                i = rung
                break
        fail_steps, ok_steps = _ladder_pass_steps(i)
        if rng.random() < float(Fraction(1, 2 ** i)):
            return True, fail_steps
        return False, ok_steps

    mean_steps = float(sum((w * _ladder_pass_steps(i)[1] for i, w in ws.items()), ZERO))
    max_fail_steps = float(max(_ladder_pass_steps(i)[0] for i in ws))
    return PassProcess(play=play, alive_sat=False, tail_fail_bound=None,
                       label=f"randf-mr({sorted(ws.items())})",
                       iid=(float(delta), mean_steps, max_fail_steps))


# ---------------------------------------------------------------------------
# cobuchi_infbranch: infinitely branching liminf lower bound
# ---------------------------------------------------------------------------

def cobuchi_infbranch() -> CountableMdp:
    def succ(s):
        if s == "s":
            return StateKind.CONTROLLED, InfiniteChoices(
                choice=lambda i: (("r", i + 1), ZERO),
                description="pick a branch index")
        if s == "t":
            return StateKind.CONTROLLED, (("s", Fraction(1)),)
        _tag, i = s
        p = Fraction(1, 2 ** i)
        return StateKind.RANDOM, FiniteSupport((
            Arm("t", p, Fraction(-1)),
            Arm("s", ONE - p, ZERO),
        ))

    return CountableMdp(initial="s", succ_fn=succ, reward_bound=Fraction(1),
                        claims_finitely_branching=False, name="cobuchi_infbranch")


def cobuchi_escalating(offset: int = 0) -> StrategyMachine:
    """Pick branch k + offset on the k-th visit to the hub; the drop chances
    2^-(k+offset) are summable, so only finitely many drops occur."""

    def choose(mode, state, _choices):
        if state == "s":
            return [(ONE, (mode + 1, mode + offset - 1))]  # choice index i -> r_{i+1}
        return [(ONE, (mode, 0))]

    return StrategyMachine(tag=TAG_GENERAL, init_mode=1, choose_fn=choose,
                           label=f"cobuchi-escalating(c={offset})")


def cobuchi_mr_table(weights: Dict[int, Fraction]) -> StrategyMachine:
    ws = {int(i): Fraction(w) for i, w in weights.items()}
    if sum(ws.values(), ZERO) != 1:
        raise BadParams("weights must sum to 1")

    def dist(state, _choices):
        if state == "s":
            return [(w, i - 1) for i, w in sorted(ws.items()) if w > 0]
        return [(ONE, 0)]

    return mr_machine(dist, label=f"cobuchi-mr({sorted(ws.items())})")


# ---------------------------------------------------------------------------
# incomparable: optimal thresholds everywhere, no optimal expectation
# ---------------------------------------------------------------------------

def incomparable() -> CountableMdp:
    def succ(s):
        tag, i = s
        if tag == "a":
            return StateKind.CONTROLLED, (
                (("a", i + 1), ZERO),
                (("b", i), ZERO),
            )
        loop_reward = ONE - Fraction(1, 2 ** i)
        return StateKind.CONTROLLED, ((("b", i), loop_reward),)

    def tail(s):
        tag, i = s
        if tag == "b":
            r = ONE - Fraction(1, 2 ** i)
            return TailLabel(r, r)
        return None

    return CountableMdp(initial=("a", 1), succ_fn=succ, reward_bound=Fraction(1),
                        tail_fn=tail, claims_finitely_branching=True,
                        name="incomparable")


def incomparable_exit_at(i: int) -> StrategyMachine:
    if i < 1:
        raise BadParams("exit index must be >= 1")

    def choice(state, _choices):
        tag, j = state
        if tag == "a" and j == i:
            return 1
        return 0

    return md_machine(choice, label=f"exit-at-{i}")


# ---------------------------------------------------------------------------
# Reward relabeling of a user-supplied Buchi MDP
# ---------------------------------------------------------------------------

def buchi_relabel(m: CountableMdp, in_target: Callable[[object], bool],
                  name: str = "") -> CountableMdp:
    """Rewards +1 from target states and -1 elsewhere, so the limsup threshold
    objective coincides with visiting the target set infinitely often.

    Tail labels are dropped: the relabeling changes the closed forms.
    """
    def succ(s):
        kind, data = successors(m, s)
        r = Fraction(1) if in_target(s) else Fraction(-1)
        if kind is StateKind.CONTROLLED:
            if isinstance(data, InfiniteChoices):
                return kind, InfiniteChoices(
                    choice=lambda i: (data.choice(i)[0], r),
                    description=data.description)
            return kind, tuple((t, r) for (t, _old) in data)
        if isinstance(data, InfiniteSupport):
            return kind, InfiniteSupport(
                arm=lambda i: Arm(data.arm(i).state, data.arm(i).prob, r),
                tail_mass=data.tail_mass, description=data.description)
        return kind, FiniteSupport(tuple(Arm(a.state, a.prob, r) for a in data.arms))

    return CountableMdp(initial=m.initial, succ_fn=succ, reward_bound=Fraction(1),
                        claims_finitely_branching=m.claims_finitely_branching,
                        claims_universally_transient=m.claims_universally_transient,
                        claims_acyclic=m.claims_acyclic,
                        name=name or f"buchi_relabel({m.name})")


def generate(family: str, params: Optional[dict] = None) -> CountableMdp:
    params = params or {}
    if family == "ladder_limsup":
        return ladder_limsup()
    if family == "randf_ladder":
        return randf_ladder()
    if family == "cobuchi_infbranch":
        return cobuchi_infbranch()
    if family == "incomparable":
        return incomparable()
    raise BadParams(f"unknown family {family!r}; known: {FAMILIES}")
