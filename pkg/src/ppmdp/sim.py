"""Strategy execution on countable MDPs, Monte Carlo attainment estimation with
Hoeffding brackets, deterministic-product lasso analysis, and closed-form cycle
analysis for the parametric counterexample families.

Exact rationals everywhere except the sampling itself: uniform draws are
floats, which is the one place the package tolerates floating point.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .core import (CountableMdp, FiniteSupport, InfiniteChoices, InfiniteSupport,
                   ModelError, StateKind, TailLabel, ONE, ZERO, successors)
from .objectives import (Lasso, Objective, RunPrefix, TransRef, Verdict, classify_prefix,
                         lasso_verdict)
from .strategies import StrategyMachine


class InvalidStrategy(ModelError):
    """Strategy machine inconsistent with the model."""


class NoLassoFound(ModelError):
    """Deterministic product did not close a cycle within the step budget."""


class UnsupportedSpec(ModelError):
    """cycle_analysis does not cover this family/strategy combination."""


# ---------------------------------------------------------------------------
# Run engine
# ---------------------------------------------------------------------------

def _sample(rng: random.Random, weights: Sequence[Fraction]) -> int:
    u = rng.random()
    acc = 0.0
    for i, w in enumerate(weights):
        acc += float(w)
        if u < acc:
            return i
    return len(weights) - 1


def _sample_support(rng: random.Random, support, arm_guard: int = 1000000):
    if isinstance(support, FiniteSupport):
        idx = _sample(rng, [a.prob for a in support.arms])
        return support.arms[idx]
    u = rng.random()
    acc = 0.0
    i = 0
    while i < arm_guard:
        a = support.arm(i)
        acc += float(a.prob)
        if u < acc:
            return a
        i += 1
    raise ModelError("infinite support sampling exceeded the arm guard")


def run_strategy(m: CountableMdp, machine: StrategyMachine, seed: int, horizon: int,
                 stop_at_tail: bool = True) -> RunPrefix:
    """Execute the strategy for up to `horizon` steps (or to tail absorption).

    Reproducible: the same seed yields the same run.  Raises InvalidStrategy
    when the machine picks a choice index outside the successor range.
    """
    rng = random.Random(seed)
    mode = machine.init_mode
    s = m.initial
    states: List[object] = [s]
    rewards: List[Fraction] = []
    modes: List[object] = [mode]
    tail: Optional[TailLabel] = None
    for _ in range(horizon):
        label = m.tail_label(s)
        if label is not None and stop_at_tail:
            tail = label
            break
        kind, data = successors(m, s)
        if kind is StateKind.CONTROLLED:
            dist = machine.choose(mode, s, data)
            j = _sample(rng, [p for p, _ in dist])
            mode, idx = dist[j][1]
            if isinstance(data, InfiniteChoices):
                t, r = data.choice(idx)
            else:
                if not (0 <= idx < len(data)):
                    raise InvalidStrategy(f"choice index {idx} out of range at {s!r}")
                t, r = data[idx]
        else:
            a = _sample_support(rng, data)
            t, r = a.state, a.reward
            up = machine.update(mode, s, t)
            j = _sample(rng, [p for p, _ in up])
            mode = up[j][1]
        states.append(t)
        rewards.append(r)
        modes.append(mode)
        s = t
    else:
        label = m.tail_label(s)
        if label is not None:
            tail = label
    if tail is None:
        label = m.tail_label(s)
        if label is not None:
            tail = label
    return RunPrefix(states=states, rewards=rewards, tail=tail, modes=modes)


# ---------------------------------------------------------------------------
# Bracketed Monte Carlo estimation
# ---------------------------------------------------------------------------

@dataclass
class BracketedEstimate:
    lower: float
    upper: float
    sat_frac: float
    viol_frac: float
    undetermined_frac: float
    samples: int
    horizon: int
    delta: float
    slack: float
    residual: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lower": self.lower, "upper": self.upper,
            "sat_frac": self.sat_frac, "viol_frac": self.viol_frac,
            "undetermined_frac": self.undetermined_frac,
            "samples": self.samples, "horizon": self.horizon,
            "delta": self.delta, "slack": self.slack, "residual": self.residual,
            "detail": self.detail,
        }


def hoeffding_slack(delta: float, samples: int) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * samples))


# An adjudicator may sharpen an Undetermined prefix into Sat/Viol using a
# closed-form certificate about the family/strategy pair; it returns the
# verdict plus an exact bound on the probability that the claim is wrong.
Adjudicator = Callable[[RunPrefix], Tuple[Verdict, Fraction]]


def _seed_chunks(samples: int, threads: int) -> List[Tuple[int, int]]:
    threads = max(1, threads)
    size = (samples + threads - 1) // threads
    return [(i, min(i + size, samples)) for i in range(0, samples, size)]


def estimate_attainment(m: CountableMdp, machine: StrategyMachine, obj: Objective,
                        horizon: int, samples: int, delta: float, seed: int,
                        adjudicator: Optional[Adjudicator] = None,
                        threads: int = 1) -> BracketedEstimate:
    """Hoeffding-bracketed estimate of P(obj) under the strategy.

    Sat/Viol counts come from classify_prefix; the optional adjudicator may
    resolve Undetermined runs, and its certified error mass widens the bracket.
    Sampling is split into deterministic per-chunk seed streams and reduced by
    order-independent summation, so the result does not depend on the number
    of worker threads.
    """
    counts = {Verdict.SAT: 0, Verdict.VIOL: 0, Verdict.UNDETERMINED: 0}
    residual = ZERO
    for (start, end) in _seed_chunks(samples, threads):
        for i in range(start, end):
            run = run_strategy(m, machine, seed=(seed << 20) ^ i, horizon=horizon)
            v = classify_prefix(run, obj)
            if v is Verdict.UNDETERMINED and adjudicator is not None:
                v, err = adjudicator(run)
                if v is not Verdict.UNDETERMINED and err > residual:
                    residual = err
            counts[v] += 1
    return _bracket(counts, samples, horizon, delta, residual)


def _bracket(counts: Dict[Verdict, int], samples: int, horizon: int, delta: float,
             residual: Fraction) -> BracketedEstimate:
    slack = hoeffding_slack(delta, samples)
    sat = counts[Verdict.SAT] / samples
    viol = counts[Verdict.VIOL] / samples
    undet = counts[Verdict.UNDETERMINED] / samples
    res = float(residual)
    lower = max(0.0, sat - slack - res)
    upper = min(1.0, 1.0 - viol + slack + res)
    return BracketedEstimate(lower=lower, upper=upper, sat_frac=sat, viol_frac=viol,
                             undetermined_frac=undet, samples=samples, horizon=horizon,
                             delta=delta, slack=slack, residual=res)


# ---------------------------------------------------------------------------
# Fast pass-level engine for ladder-shaped parametric families
# ---------------------------------------------------------------------------

@dataclass
class PassProcess:
    """Embedded-cycle view of a ladder family under a fixed strategy.

    play(rng, k) simulates the k-th pass (k = 1, 2, ...) and reports whether it
    ended in absorption, plus the number of steps consumed up to the outcome.
    alive_sat tells how a run still alive at the horizon is adjudicated;
    tail_fail_bound(k) bounds the probability that a run alive at pass k ever
    fails later (the certificate folded into the bracket when alive runs are
    declared Sat).
    """

    play: Callable[[random.Random, int], Tuple[bool, int]]
    alive_sat: bool
    tail_fail_bound: Optional[Callable[[int], Fraction]] = None
    label: str = ""
    # set when every pass is identically distributed: (fail prob, mean pass
    # steps, fail steps); lets the engine sample the failing pass index
    # geometrically in one draw per run
    iid: Optional[Tuple[float, float, float]] = None


def pass_process_estimate(proc: PassProcess, horizon: int, samples: int, delta: float,
                          seed: int, threads: int = 1) -> BracketedEstimate:
    """Embedded simulation of the pass process up to the step horizon: one or
    two draws per pass instead of one per step, same outcome distribution."""
    rng = random.Random(seed)
    counts = {Verdict.SAT: 0, Verdict.VIOL: 0, Verdict.UNDETERMINED: 0}
    min_alive_pass: Optional[int] = None
    absorbed_by_horizon = 0
    if proc.iid is not None and not proc.alive_sat:
        # every outcome is Viol (absorbed now or doomed later); one geometric
        # draw per run resolves the absorbed-by-horizon detail
        q, mean_steps, fail_steps = proc.iid
        log1q = math.log1p(-q)
        for _i in range(samples):
            u = rng.random()
            t_fail = 1 + int(math.log(1.0 - u) / log1q) if q < 1.0 else 1
            if (t_fail - 1) * mean_steps + fail_steps <= horizon:
                absorbed_by_horizon += 1
            counts[Verdict.VIOL] += 1
        est = _bracket(counts, samples, horizon, delta, ZERO)
        est.detail["label"] = proc.label
        est.detail["absorbed_frac"] = absorbed_by_horizon / samples
        return est
    for _chunk in _seed_chunks(samples, threads):
        for _i in range(_chunk[0], _chunk[1]):
            t = 0
            k = 1
            verdict: Optional[Verdict] = None
            while t < horizon:
                failed, steps = proc.play(rng, k)
                if failed:
                    if t + steps <= horizon:
                        verdict = Verdict.VIOL
                    break
                t += steps
                k += 1
            if verdict is None:
                # alive at the horizon (possibly doomed after it)
                if min_alive_pass is None or k < min_alive_pass:
                    min_alive_pass = k
                verdict = Verdict.SAT if proc.alive_sat else Verdict.VIOL
            counts[verdict] += 1
    residual = ZERO
    if proc.alive_sat and proc.tail_fail_bound is not None and min_alive_pass is not None:
        residual = proc.tail_fail_bound(min_alive_pass)
    est = _bracket(counts, samples, horizon, delta, residual)
    est.detail["label"] = proc.label
    est.detail["min_alive_pass"] = min_alive_pass
    return est


# ---------------------------------------------------------------------------
# Lasso analysis of deterministic products
# ---------------------------------------------------------------------------

def lasso_attainment(m: CountableMdp, machine: StrategyMachine, obj: Objective,
                     budget: int = 100000,
                     divergence: Optional[Callable[[List[object], List[Fraction]],
                                                   Optional[TailLabel]]] = None
                     ) -> Tuple[Verdict, Optional[Lasso], dict]:
    """Exact verdict of a deterministic strategy whose reachable product
    (state, mode) is a lasso.

    The optional divergence rule may certify a non-returning run by a tail
    label describing its limit rewards (for example the all-rungs ladder climb
    whose rewards are -1 forever); the verdict then comes from classify_prefix.
    """
    mode = machine.init_mode
    s = m.initial
    seen: Dict[Tuple[object, object], int] = {(s, mode): 0}
    states = [s]
    rewards: List[Fraction] = []
    modes = [mode]
    for step in range(budget):
        label = m.tail_label(s)
        if label is not None:
            run = RunPrefix(states=states, rewards=rewards, tail=label, modes=modes)
            v = classify_prefix(run, obj)
            return v, None, {"kind": "tail", "steps": step}
        kind, data = successors(m, s)
        if kind is StateKind.CONTROLLED:
            dist = machine.choose(mode, s, data)
            live = [(p, x) for (p, x) in dist if p > 0]
            if len(live) != 1:
                raise InvalidStrategy("lasso analysis needs a deterministic strategy")
            mode2, idx = live[0][1]
            if isinstance(data, InfiniteChoices):
                t, r = data.choice(idx)
            else:
                t, r = data[idx]
        else:
            if not isinstance(data, FiniteSupport) or len(data.arms) != 1:
                raise InvalidStrategy("deterministic product hit a branching random state")
            a = data.arms[0]
            t, r = a.state, a.reward
            up = [(p, md) for (p, md) in machine.update(mode, s, t) if p > 0]
            if len(up) != 1:
                raise InvalidStrategy("randomized memory update in lasso analysis")
            mode2 = up[0][1]
        states.append(t)
        rewards.append(r)
        modes.append(mode2)
        s, mode = t, mode2
        key = (s, mode)
        if key in seen:
            at = seen[key]
            refs = [TransRef(states[i], states[i + 1], rewards[i])
                    for i in range(len(rewards))]
            lasso = Lasso(stem=tuple(refs[:at]), cycle=tuple(refs[at:]))
            return lasso_verdict(lasso, obj), lasso, {"kind": "lasso", "stem": at,
                                                      "cycle": len(refs) - at}
        seen[key] = len(states) - 1
        if divergence is not None:
            tl = divergence(states, rewards)
            if tl is not None:
                run = RunPrefix(states=states, rewards=rewards, tail=tl, modes=modes)
                return classify_prefix(run, obj), None, {"kind": "diverging",
                                                         "steps": step + 1}
    raise NoLassoFound(f"no lasso within {budget} steps")


# ---------------------------------------------------------------------------
# Closed-form cycle analysis for the built-in families
# ---------------------------------------------------------------------------

@dataclass
class CycleReport:
    family: str
    strategy: dict
    objective: str
    value_exact: Optional[Fraction] = None
    value_bracket: Optional[Tuple[Fraction, Fraction]] = None
    detail: dict = field(default_factory=dict)

    def midpoint(self) -> Fraction:
        if self.value_exact is not None:
            return self.value_exact
        lo, hi = self.value_bracket
        return (lo + hi) / 2


def survival_product(fail: Callable[[int], Fraction], tail_bound: Callable[[int], Fraction],
                     tol: Fraction = Fraction(1, 10 ** 12)) -> Tuple[Fraction, Fraction]:
    """Bracket prod_{k>=1} (1 - fail(k)) within tol.

    tail_bound(k) must bound sum_{j>k} fail(j); then the remaining product is
    between 1 - tail_bound(k) and 1.
    """
    partial = ONE
    k = 0
    while True:
        k += 1
        partial *= (ONE - fail(k))
        tb = tail_bound(k)
        lo = partial * (ONE - tb) if tb < 1 else ZERO
        if partial - lo <= tol or partial == 0:
            return (max(lo, ZERO), partial)


def _geometric_fail_tail(offset: int) -> Callable[[int], Fraction]:
    # sum_{j > k} 2^-(j+offset) = 2^-(k+offset)
    return lambda k: Fraction(1, 2 ** (k + offset))


def cycle_analysis(family: str, params: dict, strategy: dict) -> CycleReport:
    """Closed-form attainment for the parametric figure families."""
    stype = strategy.get("type")
    if family == "ladder_limsup":
        if stype == "escalating":
            # the unique run resets at every rung index once; reward -1/i seen
            # for every i, so the limsup of the payoffs is exactly 0
            return CycleReport(family, strategy, "limsup_geq0", value_exact=ONE,
                               detail={"run": "resets at rung i on pass i; limsup = 0"})
        if stype in ("fixed", "table"):
            i_max = strategy.get("branch") or max(strategy.get("resets", [1]))
            return CycleReport(family, strategy, "limsup_geq0", value_exact=ZERO,
                               detail={"cycle_limsup": Fraction(-1, i_max)})
        raise UnsupportedSpec(f"ladder_limsup: {strategy}")
    if family == "randf_ladder":
        if stype == "escalating":
            c = int(strategy.get("offset", 0))
            fail = lambda k: Fraction(1, 2 ** (k + c))
            lo, hi = survival_product(fail, _geometric_fail_tail(c))
            return CycleReport(family, strategy, "limsup_geq0", value_bracket=(lo, hi),
                               detail={"lower_closed_form": ONE - Fraction(1, 2 ** c)})
        if stype in ("fixed", "table"):
            delta = _per_cycle_fail(strategy)
            n = _breach_horizon(delta, Fraction(1, 10 ** 6))
            return CycleReport(family, strategy, "limsup_geq0", value_exact=ZERO,
                               detail={"per_cycle_fail": delta, "breach_horizon": n})
        raise UnsupportedSpec(f"randf_ladder: {strategy}")
    if family == "cobuchi_infbranch":
        if stype == "escalating":
            c = int(strategy.get("offset", 0))
            # sum_k 2^-(k+c) converges, so only finitely many drops occur a.s.
            return CycleReport(family, strategy, "liminf_geq0", value_exact=ONE,
                               detail={"fire_mass": Fraction(1, 2 ** c)})
        if stype in ("fixed", "table"):
            delta = _per_cycle_fail(strategy)
            n = _breach_horizon(delta, Fraction(1, 10 ** 6))
            # constant positive fire chance per visit: infinitely many fires a.s.
            return CycleReport(family, strategy, "liminf_geq0", value_exact=ZERO,
                               detail={"per_cycle_fail": delta, "breach_horizon": n})
        raise UnsupportedSpec(f"cobuchi_infbranch: {strategy}")
    if family == "incomparable":
        if stype == "exit_at":
            i = int(strategy["i"])
            if i < 1:
                raise UnsupportedSpec("exit_at needs i >= 1")
            val = ONE - Fraction(1, 2 ** i)
            return CycleReport(family, strategy, "expected_limsup", value_exact=val,
                               detail={"threshold_attainment": ONE})
        raise UnsupportedSpec(f"incomparable: {strategy}")
    raise UnsupportedSpec(f"unknown family {family!r}")


def _per_cycle_fail(strategy: dict) -> Fraction:
    if strategy.get("type") == "fixed":
        i = int(strategy["branch"])
        return Fraction(1, 2 ** i)
    weights = strategy["weights"]
    total = sum((Fraction(w) for w in weights.values()), ZERO)
    if total != 1:
        raise UnsupportedSpec(f"table weights sum to {total} != 1")
    return sum((Fraction(w) * Fraction(1, 2 ** int(i)) for i, w in weights.items()), ZERO)


def _breach_horizon(delta: Fraction, target: Fraction) -> int:
    """Smallest n with (1 - delta)^n < target, verified exactly."""
    if delta <= 0:
        raise UnsupportedSpec("per-cycle failure probability must be positive")
    if delta >= 1:
        return 1
    n = max(1, int(math.log(float(target)) / math.log(1.0 - float(delta))))
    q = ONE - delta
    while q ** n >= target:
        n += 1
    while n > 1 and q ** (n - 1) < target:
        n -= 1
    return n
