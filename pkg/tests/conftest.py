import random
from fractions import Fraction

import pytest

from ppmdp.core import FiniteMdp, StateKind, Transition, validate

REWARD_POOL = [Fraction(-1), Fraction(-1, 2), Fraction(-1, 3), Fraction(0),
               Fraction(1, 2), Fraction(1)]


def random_finite_mdp(rng: random.Random, n_states: int = 8, max_branch: int = 3,
                      max_controlled: int = 4, reward_pool=None,
                      absorbing_target: bool = False) -> FiniteMdp:
    """Seeded valid random MDP with exact probabilities.

    With absorbing_target, the last state is a controlled self-loop sink, so
    reaching it is a shift-invariant event in the model.
    """
    pool = reward_pool or REWARD_POOL
    n = n_states
    controlled = set(rng.sample(range(n), min(max_controlled, n)))
    kinds = [StateKind.CONTROLLED if s in controlled else StateKind.RANDOM
             for s in range(n)]
    trans = []
    for s in range(n):
        if absorbing_target and s == n - 1:
            kinds[s] = StateKind.CONTROLLED
            trans.append([Transition(s, None, Fraction(0))])
            continue
        k = rng.randint(1, min(max_branch, n))
        targets = rng.sample(range(n), k)
        if kinds[s] is StateKind.CONTROLLED:
            trans.append([Transition(t, None, rng.choice(pool)) for t in targets])
        else:
            weights = [rng.randint(1, 4) for _ in targets]
            total = sum(weights)
            trans.append([Transition(t, Fraction(w, total), rng.choice(pool))
                          for t, w in zip(targets, weights)])
    fm = FiniteMdp(kinds=kinds, trans=trans, initial=0,
                   ids=[f"q{s}" for s in range(n)])
    assert validate(fm) == []
    return fm


@pytest.fixture
def corpus():
    rng = random.Random(20240531)
    return [random_finite_mdp(rng, n_states=rng.randint(4, 8),
                              max_branch=rng.randint(2, 3), max_controlled=3)
            for _ in range(12)]
