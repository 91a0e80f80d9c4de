"""Memory-implemented strategies.

A strategy machine owns a set of memory modes, an initial mode, and a joint
rule: at controlled states it picks (new mode, successor choice) jointly; at
random states it may only update its mode after observing the sampled
successor, so the successor marginal always equals the model's distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

from .core import (CountableMdp, FiniteMdp, InfiniteChoices, ModelError, StateKind, ONE, ZERO)

# class tags, ordered roughly by memory strength
TAG_MD = "md"
TAG_MR = "mr"
TAG_FD = "fd"
TAG_FR = "fr"
TAG_MARKOV = "markov"        # deterministic, step counter only
TAG_RAND_SC = "rand_sc"
TAG_SC_1BIT = "sc_1bit"      # deterministic, step counter plus one bit
TAG_GENERAL = "general"

_DETERMINISTIC_TAGS = {TAG_MD, TAG_FD, TAG_MARKOV, TAG_SC_1BIT}

ChoiceDist = List[Tuple[Fraction, Tuple[object, int]]]   # (prob, (mode', choice idx))
ModeDist = List[Tuple[Fraction, object]]                 # (prob, mode')


@dataclass
class StrategyMachine:
    tag: str
    init_mode: object
    choose_fn: Callable[[object, object, object], ChoiceDist]
    update_fn: Optional[Callable[[object, object, object], ModeDist]] = None
    label: str = ""

    def choose(self, mode, state, choices) -> ChoiceDist:
        dist = self.choose_fn(mode, state, choices)
        total = sum((p for p, _ in dist), ZERO)
        if total != 1:
            raise ModelError(f"strategy choice weights sum to {total} != 1 at {state!r}")
        if self.tag in _DETERMINISTIC_TAGS and len([p for p, _ in dist if p > 0]) != 1:
            raise ModelError(f"deterministic tag {self.tag} with a non-Dirac choice")
        return dist

    def update(self, mode, state, succ) -> ModeDist:
        if self.update_fn is None:
            return [(ONE, mode)]
        dist = self.update_fn(mode, state, succ)
        total = sum((p for p, _ in dist), ZERO)
        if total != 1:
            raise ModelError(f"strategy update weights sum to {total} != 1 at {state!r}")
        return dist


def md_machine(choice: Callable[[object, object], int], label: str = "md") -> StrategyMachine:
    """Memoryless deterministic: choice(state, choices) -> choice index."""
    return StrategyMachine(
        tag=TAG_MD, init_mode=None,
        choose_fn=lambda _m, s, ch: [(ONE, (None, choice(s, ch)))],
        label=label)


def mr_machine(dist: Callable[[object, object], Sequence[Tuple[Fraction, int]]],
               label: str = "mr") -> StrategyMachine:
    """Memoryless randomized: dist(state, choices) -> [(prob, choice index)]."""
    return StrategyMachine(
        tag=TAG_MR, init_mode=None,
        choose_fn=lambda _m, s, ch: [(p, (None, i)) for (p, i) in dist(s, ch)],
        label=label)


def from_finite_policy(fm: FiniteMdp, policy: Sequence[Optional[int]],
                       label: str = "md-table") -> StrategyMachine:
    """MD machine for running a solver policy on as_countable(fm)."""
    def choice(state, _choices) -> int:
        return policy[state]
    return md_machine(choice, label=label)


def from_finite_mr_policy(fm: FiniteMdp, policy, label: str = "mr-table") -> StrategyMachine:
    def dist(state, _choices):
        return [(w, e) for (w, e) in policy[state]]
    return mr_machine(dist, label=label)


def general_machine(init_mode, choose_fn, update_fn=None, deterministic: bool = False,
                    label: str = "general") -> StrategyMachine:
    return StrategyMachine(tag=TAG_GENERAL if not deterministic else TAG_GENERAL,
                           init_mode=init_mode, choose_fn=choose_fn, update_fn=update_fn,
                           label=label)


def with_step_counter(inner: StrategyMachine, label: str = "") -> StrategyMachine:
    """Wrap a machine so its mode also tracks the number of steps taken.

    Used to carry strategies from a step-counter-encoded model back to the
    original model: the wrapped machine at (state, n) plays what the inner
    machine plays at the encoded state (state, n).
    """
    tag_map = {TAG_MD: TAG_MARKOV, TAG_MR: TAG_RAND_SC, TAG_FD: TAG_SC_1BIT,
               TAG_MARKOV: TAG_MARKOV, TAG_SC_1BIT: TAG_SC_1BIT}
    new_tag = tag_map.get(inner.tag, TAG_GENERAL)

    def choose(mode, state, choices):
        n, im = mode
        lifted_choices = _lift_choices(choices, n)
        out = []
        for p, (im2, idx) in inner.choose(im, (state, n), lifted_choices):
            out.append((p, ((n + 1, im2), idx)))
        return out

    def update(mode, state, succ):
        n, im = mode
        return [(p, (n + 1, im2)) for (p, im2) in inner.update(im, (state, n), (succ, n + 1))]

    return StrategyMachine(tag=new_tag, init_mode=(0, inner.init_mode),
                           choose_fn=choose, update_fn=update,
                           label=label or f"sc({inner.label})")


def _lift_choices(choices, n: int):
    if isinstance(choices, InfiniteChoices):
        return InfiniteChoices(
            choice=lambda i: ((choices.choice(i)[0], n + 1), choices.choice(i)[1]),
            description=choices.description)
    return tuple(((t, n + 1), r) for (t, r) in choices)
