"""Exact solvers and brute-force oracles on finite MDPs.

Everything here runs over exact rationals.  Reachability is solved by policy
iteration with least-fixed-point evaluation; Buchi / co-Buchi / threshold /
expected values reduce to maximal-end-component analysis plus reachability.
``enumerate_strategies`` exhaustively evaluates induced Markov chains and
backs every solver in the test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .core import FiniteMdp, ModelError, StateKind, Transition, ZERO, ONE
from .objectives import (INF, Lasso, MonotoneFamily, ObjKind, Objective, TransRef, TransSet,
                         Verdict, lasso_verdict)


class BudgetExceeded(Exception):
    def __init__(self, attempted: int, budget: int):
        super().__init__(f"{attempted} strategies exceed budget {budget}")
        self.attempted = attempted
        self.budget = budget


# An MD policy maps each controlled state to the index of the chosen edge
# (None at random states).
Policy = Tuple[Optional[int], ...]
# An MR policy maps each controlled state to a list of (weight, edge index).
MrPolicy = Tuple[Optional[Tuple[Tuple[Fraction, int], ...]], ...]

# A chain is a per-state list of (to, prob, reward) with probs summing to 1.
ChainRow = List[Tuple[int, Fraction, Fraction]]
Chain = List[ChainRow]


def ref_of(fm: FiniteMdp, s: int, tr: Transition) -> TransRef:
    return TransRef(fm.ids[s], fm.ids[tr.to], tr.reward)


def default_policy(fm: FiniteMdp) -> Policy:
    return tuple(0 if fm.kinds[s] is StateKind.CONTROLLED else None
                 for s in range(fm.n_states()))


def induced_chain(fm: FiniteMdp, policy: Policy) -> Chain:
    chain: Chain = []
    for s in range(fm.n_states()):
        if fm.kinds[s] is StateKind.CONTROLLED:
            tr = fm.trans[s][policy[s]]
            chain.append([(tr.to, ONE, tr.reward)])
        else:
            chain.append([(tr.to, tr.prob, tr.reward) for tr in fm.trans[s]])
    return chain


def induced_chain_mr(fm: FiniteMdp, policy: MrPolicy) -> Chain:
    chain: Chain = []
    for s in range(fm.n_states()):
        if fm.kinds[s] is StateKind.CONTROLLED:
            row: Dict[int, Tuple[Fraction, Fraction]] = {}
            total = ZERO
            for weight, edge in policy[s]:
                tr = fm.trans[s][edge]
                total += weight
                if tr.to in row:
                    p, r = row[tr.to]
                    if r != tr.reward:
                        raise ModelError("mixed edges to one target with unequal rewards")
                    row[tr.to] = (p + weight, r)
                else:
                    row[tr.to] = (weight, tr.reward)
            if total != 1:
                raise ModelError(f"MR weights at state {fm.ids[s]} sum to {total} != 1")
            chain.append([(t, p, r) for t, (p, r) in row.items()])
        else:
            chain.append([(tr.to, tr.prob, tr.reward) for tr in fm.trans[s]])
    return chain


# ---------------------------------------------------------------------------
# Graph utilities
# ---------------------------------------------------------------------------

def strongly_connected_components(adj: Sequence[Iterable[int]], n: int) -> List[List[int]]:
    """Iterative Tarjan; components returned in reverse topological order."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: List[int] = []
    comps: List[List[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                elif on_stack[w]:
                    if index[w] < low[v]:
                        low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


@dataclass(frozen=True)
class Mec:
    """Maximal end component: states plus the internal transitions."""

    states: FrozenSet[int]
    transitions: FrozenSet[Tuple[int, int]]
    has_controlled: bool


def mec_decomposition(fm: FiniteMdp,
                      controlled_edges: Optional[List[Set[int]]] = None) -> List[Mec]:
    """Standard SCC-refinement MEC algorithm.

    ``controlled_edges`` optionally restricts the edges available at controlled
    states (by target index); random states always carry their full
    distribution and are dropped if any branch leaves the candidate component.
    A None entry marks a state excluded outright.
    """
    n = fm.n_states()
    alive = [True] * n
    ctrl: List[Optional[Set[int]]] = []
    for s in range(n):
        if controlled_edges is not None:
            allowed = controlled_edges[s]
            ctrl.append(None if allowed is None else set(allowed))
        elif fm.kinds[s] is StateKind.CONTROLLED:
            ctrl.append({tr.to for tr in fm.trans[s]})
        else:
            ctrl.append(None)
    # ctrl[s] is None at random states: they always carry their full distribution
    def random_targets(s: int) -> List[int]:
        return [tr.to for tr in fm.trans[s]]

    if controlled_edges is not None:
        for s in range(n):
            if fm.kinds[s] is StateKind.CONTROLLED and ctrl[s] is not None and not ctrl[s]:
                alive[s] = False
            if fm.kinds[s] is StateKind.CONTROLLED and ctrl[s] is None:
                alive[s] = False
            if fm.kinds[s] is StateKind.RANDOM and isinstance(controlled_edges[s], set) \
                    and not controlled_edges[s]:
                alive[s] = False

    changed = True
    while changed:
        changed = False
        adj: List[List[int]] = [[] for _ in range(n)]
        for s in range(n):
            if not alive[s]:
                continue
            if fm.kinds[s] is StateKind.CONTROLLED:
                adj[s] = [t for t in sorted(ctrl[s]) if alive[t]]
            else:
                adj[s] = [t for t in random_targets(s) if alive[t]]
        comps = strongly_connected_components(adj, n)
        comp_of = [-1] * n
        for ci, comp in enumerate(comps):
            for v in comp:
                comp_of[v] = ci
        for s in range(n):
            if not alive[s]:
                continue
            if fm.kinds[s] is StateKind.RANDOM:
                for t in random_targets(s):
                    if not alive[t] or comp_of[t] != comp_of[s]:
                        alive[s] = False
                        changed = True
                        break
            else:
                kept = {t for t in ctrl[s] if alive[t] and comp_of[t] == comp_of[s]}
                if kept != ctrl[s]:
                    ctrl[s] = kept
                    changed = True
                if not kept:
                    alive[s] = False
                    changed = True
    # final components with at least one internal edge
    adj = [[] for _ in range(n)]
    for s in range(n):
        if not alive[s]:
            continue
        if fm.kinds[s] is StateKind.CONTROLLED:
            adj[s] = sorted(ctrl[s])
        else:
            adj[s] = random_targets(s)
    comps = strongly_connected_components(adj, n)
    mecs: List[Mec] = []
    for comp in comps:
        comp = [v for v in comp if alive[v]]
        if not comp:
            continue
        cset = set(comp)
        edges: Set[Tuple[int, int]] = set()
        has_ctrl = False
        for s in comp:
            if fm.kinds[s] is StateKind.CONTROLLED:
                has_ctrl = True
                for t in ctrl[s]:
                    edges.add((s, t))
            else:
                for t in random_targets(s):
                    edges.add((s, t))
        if not edges:
            continue  # singleton without a self-loop is not an end component
        mecs.append(Mec(frozenset(cset), frozenset(edges), has_ctrl))
    mecs.sort(key=lambda m: min(m.states))
    return mecs


# ---------------------------------------------------------------------------
# Exact chain analysis
# ---------------------------------------------------------------------------

def chain_bsccs(chain: Chain) -> List[Set[int]]:
    n = len(chain)
    adj = [[t for (t, p, _r) in row if p > 0] for row in chain]
    comps = strongly_connected_components(adj, n)
    out = []
    for comp in comps:
        cset = set(comp)
        bottom = all(t in cset for v in comp for t in adj[v])
        has_edge = any(adj[v] for v in comp)
        if bottom and has_edge:
            out.append(cset)
    return out


def _solve_linear(states: List[int], coeff: Dict[Tuple[int, int], Fraction],
                  rhs: Dict[int, Fraction]) -> Dict[int, Fraction]:
    """Solve (I - Q) v = b by exact Gaussian elimination."""
    idx = {s: i for i, s in enumerate(states)}
    k = len(states)
    a = [[ZERO] * (k + 1) for _ in range(k)]
    for i, s in enumerate(states):
        a[i][i] = ONE
        a[i][k] = rhs.get(s, ZERO)
    for (s, t), p in coeff.items():
        a[idx[s]][idx[t]] -= p
    for col in range(k):
        piv = None
        for r in range(col, k):
            if a[r][col] != 0:
                piv = r
                break
        if piv is None:
            raise ModelError("singular transient system (model invariant broken)")
        a[col], a[piv] = a[piv], a[col]
        inv = ONE / a[col][col]
        if inv != 1:
            a[col] = [x * inv for x in a[col]]
        for r in range(k):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                arow, crow = a[r], a[col]
                for c in range(col, k + 1):
                    if crow[c] != 0:
                        arow[c] -= f * crow[c]
    return {s: a[i][k] for i, s in enumerate(states)}


def _topological_order(states: List[int], adj: Dict[int, List[int]]) -> Optional[List[int]]:
    indeg = {s: 0 for s in states}
    for s in states:
        for t in adj.get(s, ()):  # edges within the system only
            if t in indeg:
                indeg[t] += 1
    queue = [s for s in states if indeg[s] == 0]
    out: List[int] = []
    i = 0
    while i < len(queue):
        s = queue[i]
        i += 1
        out.append(s)
        for t in adj.get(s, ()):  # decrement
            if t in indeg:
                indeg[t] -= 1
                if indeg[t] == 0:
                    queue.append(t)
    return out if len(out) == len(states) else None


def chain_absorption_values(chain: Chain, fixed: Dict[int, Fraction]) -> List[Fraction]:
    """Expected fixed-value at absorption: v = fixed on fixed states, else
    v(s) = sum p v(t); states that cannot reach a fixed state get 0.

    Fixed states are treated as absorbing (their outgoing edges are cut).
    """
    n = len(chain)
    rev: List[List[int]] = [[] for _ in range(n)]
    for s in range(n):
        if s in fixed:
            continue
        for (t, p, _r) in chain[s]:
            if p > 0:
                rev[t].append(s)
    reach: Set[int] = set(fixed)
    stack = list(fixed)
    while stack:
        v = stack.pop()
        for u in rev[v]:
            if u not in reach:
                reach.add(u)
                stack.append(u)
    system = sorted(reach - set(fixed))
    values = [ZERO] * n
    for s, val in fixed.items():
        values[s] = val
    if not system:
        return values
    sys_set = set(system)
    adj_sys = {s: [t for (t, p, _r) in chain[s] if p > 0 and t in sys_set] for s in system}
    topo = _topological_order(system, adj_sys)
    if topo is not None:
        for s in reversed(topo):
            acc = ZERO
            for (t, p, _r) in chain[s]:
                if p > 0:
                    acc += p * values[t]
            values[s] = acc
        return values
    coeff: Dict[Tuple[int, int], Fraction] = {}
    rhs: Dict[int, Fraction] = {}
    for s in system:
        b = ZERO
        for (t, p, _r) in chain[s]:
            if p == 0:
                continue
            if t in sys_set:
                coeff[(s, t)] = coeff.get((s, t), ZERO) + p
            else:
                b += p * values[t]
        rhs[s] = b
    sol = _solve_linear(system, coeff, rhs)
    for s, val in sol.items():
        values[s] = val
    return values


def chain_reach_values(chain: Chain, targets: Set[int]) -> List[Fraction]:
    return chain_absorption_values(chain, {t: ONE for t in targets})


def chain_bounded_reach(chain: Chain, targets: Set[int], k: int) -> List[List[Fraction]]:
    """v_j(s) = P(visit targets within <= j steps), for j = 0..k."""
    n = len(chain)
    vs = [[ONE if s in targets else ZERO for s in range(n)]]
    for _ in range(k):
        prev = vs[-1]
        cur = []
        for s in range(n):
            if s in targets:
                cur.append(ONE)
            else:
                cur.append(sum((p * prev[t] for (t, p, _r) in chain[s]), ZERO))
        vs.append(cur)
    return vs


def chain_bounded_edge_hit(chain: Chain, hit: Callable[[int, int, Fraction], bool],
                           k: int) -> List[List[Fraction]]:
    """h_j(s) = P(take a transition with hit(src, dst, reward) within <= j steps)."""
    n = len(chain)
    hs = [[ZERO] * n]
    for _ in range(k):
        prev = hs[-1]
        cur = []
        for s in range(n):
            acc = ZERO
            for (t, p, r) in chain[s]:
                if p == 0:
                    continue
                acc += p * (ONE if hit(s, t, r) else prev[t])
            cur.append(acc)
        hs.append(cur)
    return hs


def chain_edge_hit_values(chain: Chain, hit: Callable[[int, int, Fraction], bool]) -> List[Fraction]:
    """P(ever take a transition satisfying hit), exact."""
    n = len(chain)
    win = n
    aug: Chain = []
    for s in range(n):
        row: ChainRow = []
        for (t, p, r) in chain[s]:
            row.append((win if hit(s, t, r) else t, p, r))
        aug.append(row)
    aug.append([(win, ONE, ZERO)])
    vals = chain_absorption_values(aug, {win: ONE})
    return vals[:n]


# ---------------------------------------------------------------------------
# Objective evaluation of a fixed (MD or MR) strategy
# ---------------------------------------------------------------------------

def _bscc_sat(fm: FiniteMdp, chain: Chain, bscc: Set[int], obj: Objective) -> bool:
    edges = [(s, t, r) for s in bscc for (t, p, r) in chain[s] if p > 0]
    refs = [TransRef(fm.ids[s], fm.ids[t], r) for (s, t, r) in edges]
    k = obj.kind
    if k is ObjKind.BUCHI:
        return any(obj.transitions.contains(t) for t in refs)
    if k is ObjKind.COBUCHI:
        return all(obj.transitions.contains(t) for t in refs)
    if k is ObjKind.GF_FAMILY:
        return any(obj.family.level(t) == INF for t in refs)
    if k is ObjKind.FG_FAMILY:
        return all(obj.family.level(t) == INF for t in refs)
    if k is ObjKind.LIMSUP_GEQ0:
        return max(t.reward for t in refs) >= 0
    if k is ObjKind.LIMINF_GEQ0:
        return min(t.reward for t in refs) >= 0
    raise ModelError(f"not a tail objective: {obj}")


_TAIL_KINDS = {ObjKind.BUCHI, ObjKind.COBUCHI, ObjKind.GF_FAMILY, ObjKind.FG_FAMILY,
               ObjKind.LIMSUP_GEQ0, ObjKind.LIMINF_GEQ0}


def evaluate_chain(fm: FiniteMdp, chain: Chain, obj: Objective) -> List[Fraction]:
    """Exact P(obj) per state for the Markov chain induced on fm's state space."""
    n = len(chain)
    k = obj.kind
    if k is ObjKind.TRANSIENCE:
        return [ZERO] * n  # every run of a finite chain revisits some state
    if k is ObjKind.REACH:
        targets = {s for s in range(n) if fm.ids[s] in obj.targets}
        return chain_reach_values(chain, targets)
    if k is ObjKind.REACH_WITHIN:
        targets = {s for s in range(n) if fm.ids[s] in obj.targets}
        return chain_bounded_reach(chain, targets, obj.within)[obj.within]
    parts = obj.parts if k is ObjKind.AND else (obj,)
    reach_parts: List[FrozenSet[object]] = []
    safety_parts: List[TransSet] = []
    tail_parts: List[Objective] = []
    for p in parts:
        if p.kind is ObjKind.REACH:
            reach_parts.append(p.targets)
        elif p.kind is ObjKind.SAFETY:
            safety_parts.append(p.transitions)
        elif p.kind is ObjKind.TRANSIENCE:
            return [ZERO] * n
        elif p.kind in _TAIL_KINDS:
            tail_parts.append(p)
        else:
            raise ModelError(f"unsupported conjunct {p} in chain evaluation")

    def allowed(s: int, t: int, r: Fraction) -> bool:
        ref = TransRef(fm.ids[s], fm.ids[t], r)
        return all(ts.contains(ref) for ts in safety_parts)

    nbits = len(reach_parts)
    if nbits == 0 and not safety_parts:
        # pure tail objective: absorption into satisfying BSCCs
        good: Set[int] = set()
        for bscc in chain_bsccs(chain):
            if all(_bscc_sat(fm, chain, bscc, tp) for tp in tail_parts):
                good |= bscc
        return chain_absorption_values(chain, {s: ONE for s in good})

    # product with a visited-targets bitmask; disallowed edges route to a sink
    def bit_of(s: int) -> int:
        b = 0
        for i, tg in enumerate(reach_parts):
            if fm.ids[s] in tg:
                b |= 1 << i
        return b

    full = (1 << nbits) - 1
    size = n * (1 << nbits)
    lose = size
    prod: Chain = [[] for _ in range(size + 1)]
    for s in range(n):
        for b in range(1 << nbits):
            row: ChainRow = []
            for (t, p, r) in chain[s]:
                if p == 0:
                    continue
                if not allowed(s, t, r):
                    row.append((lose, p, r))
                else:
                    row.append((t * (1 << nbits) + (b | bit_of(t)), p, r))
            prod[s * (1 << nbits) + b] = row
    prod[lose] = [(lose, ONE, ZERO)]
    good_prod: Set[int] = set()
    for bscc in chain_bsccs(prod):
        if lose in bscc:
            continue
        base = {v >> nbits for v in bscc}
        bits_ok = all((v & full) == full for v in bscc)
        if not bits_ok:
            continue
        if all(_bscc_sat(fm, chain, base, tp) for tp in tail_parts):
            good_prod |= bscc
    vals = chain_absorption_values(prod, {v: ONE for v in good_prod})
    out = []
    for s in range(n):
        out.append(vals[s * (1 << nbits) + bit_of(s)])
    return out


def evaluate_md(fm: FiniteMdp, policy: Policy, obj: Objective) -> List[Fraction]:
    return evaluate_chain(fm, induced_chain(fm, policy), obj)


def evaluate_mr(fm: FiniteMdp, policy: MrPolicy, obj: Objective) -> List[Fraction]:
    return evaluate_chain(fm, induced_chain_mr(fm, policy), obj)


def evaluate_chain_expected(fm: FiniteMdp, chain: Chain, which: str) -> List[Fraction]:
    """Exact E(limsup) / E(liminf) of the point payoffs per start state."""
    if which not in ("limsup", "liminf"):
        raise ModelError("which must be 'limsup' or 'liminf'")
    fixed: Dict[int, Fraction] = {}
    for bscc in chain_bsccs(chain):
        rewards = [r for s in bscc for (t, p, r) in chain[s] if p > 0]
        w = max(rewards) if which == "limsup" else min(rewards)
        for s in bscc:
            fixed[s] = w
    return chain_absorption_values(chain, fixed)


def evaluate_md_expected(fm: FiniteMdp, policy: Policy, which: str) -> List[Fraction]:
    return evaluate_chain_expected(fm, induced_chain(fm, policy), which)


def evaluate_mr_expected(fm: FiniteMdp, policy: MrPolicy, which: str) -> List[Fraction]:
    return evaluate_chain_expected(fm, induced_chain_mr(fm, policy), which)


# ---------------------------------------------------------------------------
# Reachability (policy iteration, exact)
# ---------------------------------------------------------------------------

def solve_reachability(fm: FiniteMdp, targets: Set[int]) -> Tuple[List[Fraction], Policy]:
    """Optimal reachability values plus a uniformly optimal MD strategy."""
    n = fm.n_states()
    targets = set(targets)
    # seed: BFS toward the targets so the first evaluation is already sensible
    rev: List[List[int]] = [[] for _ in range(n)]
    for s in range(n):
        for tr in fm.trans[s]:
            rev[tr.to].append(s)
    dist = {t: 0 for t in targets}
    queue = list(targets)
    i = 0
    while i < len(queue):
        v = queue[i]
        i += 1
        for u in rev[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    policy: List[Optional[int]] = []
    for s in range(n):
        if fm.kinds[s] is StateKind.RANDOM:
            policy.append(None)
            continue
        best = 0
        if s in dist and s not in targets:
            for i_e, tr in enumerate(fm.trans[s]):
                if dist.get(tr.to, n + 1) == dist[s] - 1:
                    best = i_e
                    break
        policy.append(best)

    guard = 0
    while True:
        guard += 1
        if guard > 10000:
            raise ModelError("policy iteration failed to converge")
        chain = induced_chain(fm, tuple(policy))
        values = chain_absorption_values(chain, {t: ONE for t in targets})
        improved = False
        for s in range(n):
            if fm.kinds[s] is not StateKind.CONTROLLED or s in targets:
                continue
            cur = values[fm.trans[s][policy[s]].to]
            best_edge, best_val = policy[s], cur
            for i_e, tr in enumerate(fm.trans[s]):
                if values[tr.to] > best_val:
                    best_val = values[tr.to]
                    best_edge = i_e
            if best_val > cur:
                policy[s] = best_edge
                improved = True
        if not improved:
            return values, tuple(policy)


def solve_reachability_edges(fm: FiniteMdp, target: TransSet) -> Tuple[List[Fraction], Policy]:
    """P(eventually take a transition in target); strategy in the original MDP."""
    n = fm.n_states()
    win = n
    kinds = list(fm.kinds) + [StateKind.CONTROLLED]
    trans: List[List[Transition]] = []
    for s in range(n):
        row = []
        for tr in fm.trans[s]:
            if target.contains(ref_of(fm, s, tr)):
                row.append(Transition(win, tr.prob, tr.reward))
            else:
                row.append(tr)
        trans.append(row)
    trans.append([Transition(win, None, ZERO)])
    aug = FiniteMdp(kinds=kinds, trans=trans, initial=fm.initial,
                    ids=list(fm.ids) + ["__hit__"])
    values, policy = solve_reachability(aug, {win})
    return values[:n], tuple(policy[:n])


def bellman_residual_reach(fm: FiniteMdp, values: List[Fraction], targets: Set[int]) -> Fraction:
    worst = ZERO
    for s in range(fm.n_states()):
        if s in targets:
            expect = ONE
        elif fm.kinds[s] is StateKind.CONTROLLED:
            expect = max(values[tr.to] for tr in fm.trans[s])
        else:
            expect = sum((tr.prob * values[tr.to] for tr in fm.trans[s]), ZERO)
        diff = abs(values[s] - expect)
        if diff > worst:
            worst = diff
    return worst


# ---------------------------------------------------------------------------
# Safety
# ---------------------------------------------------------------------------

def sure_safety_region(fm: FiniteMdp, allowed: TransSet) -> Tuple[Set[int], Dict[int, int]]:
    """Greatest fixed point of 'can stay allowed forever'; returns the region
    and a witness edge per controlled member."""
    n = fm.n_states()
    inside = set(range(n))
    changed = True
    while changed:
        changed = False
        for s in list(inside):
            if fm.kinds[s] is StateKind.CONTROLLED:
                ok = any(allowed.contains(ref_of(fm, s, tr)) and tr.to in inside
                         for tr in fm.trans[s])
            else:
                ok = all(allowed.contains(ref_of(fm, s, tr)) and tr.to in inside
                         for tr in fm.trans[s])
            if not ok:
                inside.discard(s)
                changed = True
    witness: Dict[int, int] = {}
    for s in inside:
        if fm.kinds[s] is StateKind.CONTROLLED:
            for i_e, tr in enumerate(fm.trans[s]):
                if allowed.contains(ref_of(fm, s, tr)) and tr.to in inside:
                    witness[s] = i_e
                    break
    return inside, witness


def solve_safety(fm: FiniteMdp, allowed: TransSet) -> Tuple[List[Fraction], Policy]:
    """Optimal values for 'only allowed transitions, forever' plus MD strategy."""
    n = fm.n_states()
    region, witness = sure_safety_region(fm, allowed)
    lose = n
    kinds = list(fm.kinds) + [StateKind.CONTROLLED]
    trans: List[List[Transition]] = []
    for s in range(n):
        row: List[Transition] = []
        if fm.kinds[s] is StateKind.CONTROLLED:
            for tr in fm.trans[s]:
                if allowed.contains(ref_of(fm, s, tr)):
                    row.append(tr)
            if not row:
                row = [Transition(lose, None, ZERO)]
        else:
            for tr in fm.trans[s]:
                if allowed.contains(ref_of(fm, s, tr)):
                    row.append(tr)
                else:
                    row.append(Transition(lose, tr.prob, tr.reward))
        trans.append(row)
    trans.append([Transition(lose, None, ZERO)])
    aug = FiniteMdp(kinds=kinds, trans=trans, initial=fm.initial,
                    ids=list(fm.ids) + ["__lose__"])
    values, pol = solve_reachability(aug, region)
    policy: List[Optional[int]] = []
    for s in range(n):
        if fm.kinds[s] is StateKind.RANDOM:
            policy.append(None)
        elif s in region:
            policy.append(witness[s])
        else:
            # map the edge index in the pruned row back to the original row
            pruned = [i_e for i_e, tr in enumerate(fm.trans[s])
                      if allowed.contains(ref_of(fm, s, tr))]
            policy.append(pruned[pol[s]] if pruned else 0)
    return values[:n], tuple(policy)


# ---------------------------------------------------------------------------
# Buchi / co-Buchi / threshold
# ---------------------------------------------------------------------------

def _sub_mdp(fm: FiniteMdp, states: FrozenSet[int],
             keep_edge: Callable[[int, Transition], bool]) -> Tuple[FiniteMdp, Dict[int, int]]:
    order = sorted(states)
    index = {s: i for i, s in enumerate(order)}
    kinds = [fm.kinds[s] for s in order]
    trans: List[List[Transition]] = []
    for s in order:
        row = []
        for tr in fm.trans[s]:
            if tr.to in index and keep_edge(s, tr):
                row.append(Transition(index[tr.to], tr.prob, tr.reward))
        if not row:
            raise ModelError("sub-MDP lost all successors of a state")
        trans.append(row)
    sub = FiniteMdp(kinds=kinds, trans=trans, initial=0, ids=[fm.ids[s] for s in order])
    return sub, index


def _in_mec_buchi_policy(fm: FiniteMdp, mec: Mec, target: TransSet,
                         policy: List[Optional[int]]) -> None:
    """Overwrite policy inside the MEC so the target set is visited forever."""
    internal = mec.transitions
    sub, index = _sub_mdp(fm, mec.states, lambda s, tr: (s, tr.to) in internal
                          or fm.kinds[s] is StateKind.RANDOM)
    pick: Optional[Tuple[int, int]] = None
    for (s, t) in sorted(internal):
        for tr in fm.trans[s]:
            if tr.to == t and target.contains(ref_of(fm, s, tr)):
                pick = (s, t)
                break
        if pick:
            break
    if pick is None:
        raise ModelError("MEC has no target transition")
    src, dst = pick
    _vals, sub_pol = solve_reachability(sub, {index[src]})
    rev = {i: s for s, i in index.items()}
    for i_sub, choice in enumerate(sub_pol):
        s = rev[i_sub]
        if fm.kinds[s] is not StateKind.CONTROLLED:
            continue
        if s == src:
            for i_e, tr in enumerate(fm.trans[s]):
                if tr.to == dst:
                    policy[s] = i_e
                    break
        else:
            to_sub = sub.trans[i_sub][choice].to
            to = rev[to_sub]
            for i_e, tr in enumerate(fm.trans[s]):
                if tr.to == to:
                    policy[s] = i_e
                    break


def solve_buchi(fm: FiniteMdp, target: TransSet) -> Tuple[List[Fraction], Policy]:
    """Max probability of seeing the target transitions infinitely often."""
    mecs = mec_decomposition(fm)
    accepting = []
    for mec in mecs:
        hit = False
        for (s, t) in mec.transitions:
            for tr in fm.trans[s]:
                if tr.to == t and target.contains(ref_of(fm, s, tr)):
                    hit = True
                    break
            if hit:
                break
        if hit:
            accepting.append(mec)
    win: Set[int] = set()
    for mec in accepting:
        win |= mec.states
    values, pol = solve_reachability(fm, win)
    policy = list(pol)
    for mec in accepting:
        _in_mec_buchi_policy(fm, mec, target, policy)
    return values, tuple(policy)


def solve_cobuchi(fm: FiniteMdp, inside: TransSet) -> Tuple[List[Fraction], Policy]:
    """Max probability of eventually using only transitions in `inside`."""
    n = fm.n_states()
    restricted: List[Optional[Set[int]]] = []
    for s in range(n):
        if fm.kinds[s] is StateKind.CONTROLLED:
            keep = {tr.to for tr in fm.trans[s] if inside.contains(ref_of(fm, s, tr))}
            restricted.append(keep)
        else:
            if all(inside.contains(ref_of(fm, s, tr)) for tr in fm.trans[s]):
                restricted.append({tr.to for tr in fm.trans[s]})
            else:
                restricted.append(set())
    safe_ecs = mec_decomposition(fm, controlled_edges=restricted)
    win: Set[int] = set()
    for mec in safe_ecs:
        win |= mec.states
    values, pol = solve_reachability(fm, win)
    policy = list(pol)
    for mec in safe_ecs:
        for s in mec.states:
            if fm.kinds[s] is not StateKind.CONTROLLED:
                continue
            for i_e, tr in enumerate(fm.trans[s]):
                if (s, tr.to) in mec.transitions and inside.contains(ref_of(fm, s, tr)):
                    policy[s] = i_e
                    break
    return values, tuple(policy)


def solve_threshold(fm: FiniteMdp, which: str) -> Tuple[List[Fraction], Policy]:
    """limsup: Buchi on rewards >= 0; liminf: co-Buchi on rewards >= 0."""
    nonneg = TransSet.reward_at_least(ZERO)
    if which == "limsup":
        return solve_buchi(fm, nonneg)
    if which == "liminf":
        return solve_cobuchi(fm, nonneg)
    raise ModelError("which must be 'limsup' or 'liminf'")


# ---------------------------------------------------------------------------
# Expected limsup / liminf
# ---------------------------------------------------------------------------

def mec_weight(fm: FiniteMdp, mec: Mec, which: str) -> Fraction:
    rewards = []
    for (s, t) in mec.transitions:
        for tr in fm.trans[s]:
            if tr.to == t:
                rewards.append(tr.reward)
    if which == "limsup":
        return max(rewards)
    # liminf: best min-reward over sub end components, by descending threshold
    best: Optional[Fraction] = None
    for x in sorted(set(rewards), reverse=True):
        restricted: List[Optional[Set[int]]] = []
        for s in range(fm.n_states()):
            if s not in mec.states:
                restricted.append(set())
                continue
            if fm.kinds[s] is StateKind.CONTROLLED:
                keep = {tr.to for tr in fm.trans[s]
                        if (s, tr.to) in mec.transitions and tr.reward >= x}
                restricted.append(keep)
            else:
                if all(tr.reward >= x for tr in fm.trans[s]):
                    restricted.append({tr.to for tr in fm.trans[s]})
                else:
                    restricted.append(set())
        if mec_decomposition(fm, controlled_edges=restricted):
            best = x
            break
    if best is None:
        raise ModelError("end component without a sub end component (impossible)")
    return best


def _liminf_witness_policy(fm: FiniteMdp, mec: Mec, weight: Fraction,
                           policy: List[Optional[int]]) -> None:
    """Stay inside a sub end component whose min reward is the MEC weight."""
    restricted: List[Optional[Set[int]]] = []
    for s in range(fm.n_states()):
        if s not in mec.states:
            restricted.append(set())
            continue
        if fm.kinds[s] is StateKind.CONTROLLED:
            restricted.append({tr.to for tr in fm.trans[s]
                               if (s, tr.to) in mec.transitions and tr.reward >= weight})
        else:
            if all(tr.reward >= weight for tr in fm.trans[s]):
                restricted.append({tr.to for tr in fm.trans[s]})
            else:
                restricted.append(set())
    subs = mec_decomposition(fm, controlled_edges=restricted)
    target = subs[0]
    sub, index = _sub_mdp(fm, mec.states,
                          lambda s, tr: (s, tr.to) in mec.transitions
                          or fm.kinds[s] is StateKind.RANDOM)
    _vals, sub_pol = solve_reachability(sub, {index[s] for s in target.states})
    rev = {i: s for s, i in index.items()}
    for i_sub, choice in enumerate(sub_pol):
        s = rev[i_sub]
        if fm.kinds[s] is not StateKind.CONTROLLED:
            continue
        if s in target.states:
            for i_e, tr in enumerate(fm.trans[s]):
                if (s, tr.to) in target.transitions:
                    policy[s] = i_e
                    break
        else:
            to = rev[sub.trans[i_sub][choice].to]
            for i_e, tr in enumerate(fm.trans[s]):
                if tr.to == to:
                    policy[s] = i_e
                    break


def solve_expected(fm: FiniteMdp, which: str) -> Tuple[List[Fraction], Policy]:
    """Exact optimal E(limsup)/E(liminf) of point payoffs plus MD strategy."""
    if which not in ("limsup", "liminf"):
        raise ModelError("which must be 'limsup' or 'liminf'")
    n = fm.n_states()
    mecs = mec_decomposition(fm)
    if not mecs:
        raise ModelError("finite MDP without end components (impossible)")
    weights = {mec: mec_weight(fm, mec, which) for mec in mecs}
    mec_of: Dict[int, Mec] = {}
    for mec in mecs:
        for s in mec.states:
            mec_of[s] = mec
    low = min(tr.reward for s in range(n) for tr in fm.trans[s])
    shifted = {mec: w - low for mec, w in weights.items()}
    span = max(shifted.values())

    values: List[Fraction]
    policy: List[Optional[int]] = list(default_policy(fm))
    if span == 0:
        # all end components are worth the same; any settling strategy is optimal
        values = [min(weights.values())] * n
        for mec in mecs:
            if mec.has_controlled:
                if which == "limsup":
                    best = max(tr.reward for (s, t) in mec.transitions
                               for tr in fm.trans[s] if tr.to == t)
                    _in_mec_buchi_policy(fm, mec, TransSet.reward_at_least(best), policy)
                else:
                    _liminf_witness_policy(fm, mec, weights[mec], policy)
        return values, tuple(policy)

    # weighted-commit reachability: each MEC can be cashed in for its weight
    win = "__win__"
    lose = "__lose__"
    ids = list(fm.ids)
    kinds = list(fm.kinds)
    trans: List[List[Transition]] = [list(row) for row in fm.trans]
    extra_index: Dict[object, int] = {}

    def add_state(tag: object, kind: StateKind) -> int:
        idx = len(kinds)
        kinds.append(kind)
        trans.append([])
        ids.append(str(tag))
        extra_index[tag] = idx
        return idx

    win_i = add_state(win, StateKind.CONTROLLED)
    trans[win_i] = [Transition(win_i, None, ZERO)]
    lose_i = add_state(lose, StateKind.CONTROLLED)
    trans[lose_i] = [Transition(lose_i, None, ZERO)]

    tau: Dict[Mec, int] = {}
    for k_m, mec in enumerate(mecs):
        t_i = add_state(f"__commit{k_m}__", StateKind.RANDOM)
        p = shifted[mec] / span
        row = []
        if p > 0:
            row.append(Transition(win_i, p, ZERO))
        if p < 1:
            row.append(Transition(lose_i, 1 - p, ZERO))
        trans[t_i] = row
        tau[mec] = t_i

    pure_random = {mec for mec in mecs if not mec.has_controlled}
    redirect: Dict[int, int] = {}
    for mec in pure_random:
        for s in mec.states:
            redirect[s] = tau[mec]
    for s in range(n):
        if s in redirect:
            continue
        trans[s] = [Transition(redirect.get(tr.to, tr.to), tr.prob, tr.reward)
                    for tr in trans[s]]
    for mec in pure_random:
        for s in mec.states:
            trans[s] = [Transition(tau[mec], None, ZERO)]
            kinds[s] = StateKind.CONTROLLED
    for mec in mecs:
        if mec in pure_random:
            continue
        for s in mec.states:
            if fm.kinds[s] is StateKind.CONTROLLED:
                trans[s] = trans[s] + [Transition(tau[mec], None, ZERO)]

    aug = FiniteMdp(kinds=kinds, trans=trans, initial=fm.initial, ids=ids)
    reach_vals, reach_pol = solve_reachability(aug, {win_i})
    values = [low + span * reach_vals[s] for s in range(n)]
    for mec in pure_random:
        for s in mec.states:
            values[s] = weights[mec]

    for s in range(n):
        if fm.kinds[s] is not StateKind.CONTROLLED:
            continue
        choice = reach_pol[s]
        if choice is not None and choice < len(fm.trans[s]):
            policy[s] = choice
    for mec in mecs:
        some = next(iter(mec.states))
        if any(values[s] != values[some] for s in mec.states):
            raise ModelError("end component with non-constant optimal value")
        if values[some] == weights[mec] and mec.has_controlled:
            if which == "limsup":
                best = max(tr.reward for (s, t) in mec.transitions
                           for tr in fm.trans[s] if tr.to == t)
                _in_mec_buchi_policy(fm, mec, TransSet.reward_at_least(best), policy)
            else:
                _liminf_witness_policy(fm, mec, weights[mec], policy)
    return values, tuple(policy)


# ---------------------------------------------------------------------------
# Exhaustive strategy enumeration
# ---------------------------------------------------------------------------

def _policy_space(fm: FiniteMdp) -> Tuple[List[int], int]:
    ctrl = [s for s in range(fm.n_states()) if fm.kinds[s] is StateKind.CONTROLLED]
    count = 1
    for s in ctrl:
        count *= len(fm.trans[s])
    return ctrl, count


def iter_md_policies(fm: FiniteMdp) -> Iterable[Policy]:
    ctrl, _count = _policy_space(fm)
    n = fm.n_states()
    for combo in itertools.product(*[range(len(fm.trans[s])) for s in ctrl]):
        policy: List[Optional[int]] = [None] * n
        for s, c in zip(ctrl, combo):
            policy[s] = c
        for s in range(n):
            if fm.kinds[s] is StateKind.CONTROLLED and policy[s] is None:
                policy[s] = 0
        yield tuple(policy)


def fd_product(fm: FiniteMdp, k: int,
               update: Optional[Callable[[int, int, int], int]] = None
               ) -> Tuple[FiniteMdp, Callable[[int], Tuple[int, int]]]:
    """Mode product for FD(k) enumeration over a fixed memory-update skeleton.

    The default skeleton advances the mode by one (mod k) on every step, the
    canonical deterministic update.  Product states are (state, mode).
    """
    if update is None:
        update = lambda m, _s, _t: (m + 1) % k
    n = fm.n_states()

    def pidx(s: int, m: int) -> int:
        return s * k + m

    kinds: List[StateKind] = []
    trans: List[List[Transition]] = []
    ids: List[str] = []
    for s in range(n):
        for m in range(k):
            kinds.append(fm.kinds[s])
            ids.append(f"{fm.ids[s]}@{m}")
            row = []
            for tr in fm.trans[s]:
                row.append(Transition(pidx(tr.to, update(m, s, tr.to)), tr.prob, tr.reward))
            trans.append(row)
    prod = FiniteMdp(kinds=kinds, trans=trans, initial=pidx(fm.initial, 0), ids=ids)
    return prod, lambda v: (v // k, v % k)


def lift_objective(fm: FiniteMdp, prod: FiniteMdp, obj: Objective) -> Objective:
    """Reinterpret an objective over product ids of the form 'id@mode'."""
    def base_id(pid: str) -> str:
        return pid.rsplit("@", 1)[0]

    k = obj.kind
    if k is ObjKind.AND:
        from .objectives import conj
        return conj(*[lift_objective(fm, prod, p) for p in obj.parts])
    if k in (ObjKind.REACH, ObjKind.REACH_WITHIN):
        lifted = frozenset(pid for pid in prod.ids if base_id(pid) in obj.targets)
        return Objective(k, targets=lifted, within=obj.within)
    if k in (ObjKind.SAFETY, ObjKind.BUCHI, ObjKind.COBUCHI):
        ts = obj.transitions

        def pred(t: TransRef, ts=ts) -> bool:
            return ts.contains(TransRef(base_id(t.src), base_id(t.dst), t.reward))

        return Objective(k, transitions=TransSet.where(pred, label=f"lift:{ts.label}"))
    if k in (ObjKind.GF_FAMILY, ObjKind.FG_FAMILY):
        fam = obj.family
        lifted_fam = MonotoneFamily(
            lambda t: fam.level(TransRef(base_id(t.src), base_id(t.dst), t.reward)),
            label=f"lift:{fam.label}")
        return Objective(k, family=lifted_fam)
    return obj  # reward / transience objectives are structure-free


@dataclass
class EnumerationResult:
    best: Fraction
    argmax: List[Policy]
    evaluated: int
    expected: bool = False


def enumerate_strategies(fm: FiniteMdp, klass: str, obj, budget: int = 200000
                         ) -> EnumerationResult:
    """Exhaustive MD or FD(k) evaluation; obj is an Objective or
    ('expected', 'limsup'|'liminf')."""
    if klass == "md":
        target = fm
        proj = None
    elif klass.startswith("fd:"):
        k = int(klass.split(":", 1)[1])
        target, _back = fd_product(fm, k)
        proj = True
    else:
        raise ModelError(f"unknown strategy class {klass!r}")
    _ctrl, count = _policy_space(target)
    if count > budget:
        raise BudgetExceeded(count, budget)
    expected = isinstance(obj, tuple) and obj[0] == "expected"
    if not expected and proj is not None:
        obj = lift_objective(fm, target, obj)
    best: Optional[Fraction] = None
    argmax: List[Policy] = []
    evaluated = 0
    for policy in iter_md_policies(target):
        evaluated += 1
        if expected:
            vals = evaluate_md_expected(target, policy, obj[1])
        else:
            vals = evaluate_md(target, policy, obj)
        v = vals[target.initial]
        if best is None or v > best:
            best = v
            argmax = [policy]
        elif v == best:
            argmax.append(policy)
    return EnumerationResult(best=best, argmax=argmax, evaluated=evaluated, expected=expected)


# ---------------------------------------------------------------------------
# Bounded avoidance (finitely branching): sure-avoidance horizon sets
# ---------------------------------------------------------------------------

def sure_avoid_sets(fm: FiniteMdp, bad: TransSet) -> List[Set[int]]:
    """W_k = states from which `bad` transitions can surely be avoided for k
    steps; the list stabilizes at the greatest fixed point within n steps."""
    n = fm.n_states()
    w = set(range(n))
    out = [set(w)]
    while True:
        nxt = set()
        for s in w:
            if fm.kinds[s] is StateKind.CONTROLLED:
                ok = any(not bad.contains(ref_of(fm, s, tr)) and tr.to in w
                         for tr in fm.trans[s])
            else:
                ok = all(not bad.contains(ref_of(fm, s, tr)) and tr.to in w
                         for tr in fm.trans[s])
            if ok:
                nxt.add(s)
        out.append(nxt)
        if nxt == w:
            return out
        w = nxt


def bounded_avoid_values(fm: FiniteMdp, bad: TransSet, k: int) -> List[List[Fraction]]:
    """v_j(s) = max probability of avoiding `bad` transitions for <= j steps."""
    n = fm.n_states()
    vs = [[ONE] * n]
    for _ in range(k):
        prev = vs[-1]
        cur = []
        for s in range(n):
            if fm.kinds[s] is StateKind.CONTROLLED:
                best = ZERO
                for tr in fm.trans[s]:
                    val = ZERO if bad.contains(ref_of(fm, s, tr)) else prev[tr.to]
                    if val > best:
                        best = val
                cur.append(best)
            else:
                acc = ZERO
                for tr in fm.trans[s]:
                    if not bad.contains(ref_of(fm, s, tr)):
                        acc += tr.prob * prev[tr.to]
                cur.append(acc)
        vs.append(cur)
    return vs
