"""Constructive strategy synthesis on finite truncations.

The stagewise bubble construction fixes deterministic choices shell by shell
and certifies, per stage, a bounded-horizon probability of hitting fresh
family transitions; the randomized variant mixes dedicated reach strategies
with geometric weights.  Good-set extraction turns an epsilon-optimal
reference strategy into finite transition sets whose Buchi/safety objective
is solvable exactly.  All certificates are exact solver outputs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .core import FiniteMdp, ModelError, StateKind, TailLabel, Transition, ONE, ZERO, validate
from .objectives import (INF, MonotoneFamily, ObjKind, Objective, TransRef, TransSet,
                         rewards_from_family)
from .solve import (Chain, MrPolicy, Policy, chain_bounded_edge_hit, chain_edge_hit_values,
                    default_policy, evaluate_md, induced_chain, induced_chain_mr,
                    mec_decomposition, ref_of, solve_reachability, solve_reachability_edges,
                    solve_safety, solve_threshold, sure_safety_region)
from .transforms import conditioned_finite, lift_policy_to_conditioned


class StageFailure(ModelError):
    def __init__(self, stage: int, message: str, gap=None):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
        self.gap = gap


class BudgetExhausted(ModelError):
    """Horizon extraction ran past the truncation depth."""


class NoOptimal(Exception):
    """Raised when optimality is demanded at states that admit none."""


def bfs_distances(fm: FiniteMdp) -> List[Optional[int]]:
    dist: List[Optional[int]] = [None] * fm.n_states()
    dist[fm.initial] = 0
    q = deque([fm.initial])
    while q:
        s = q.popleft()
        for tr in fm.trans[s]:
            if dist[tr.to] is None:
                dist[tr.to] = dist[s] + 1
                q.append(tr.to)
    return dist


def _freeze(fm: FiniteMdp, frozen: Dict[int, int]) -> FiniteMdp:
    """Copy of fm with controlled choices pinned where frozen[s] is set."""
    out = fm.copy()
    for s, edge in frozen.items():
        out.trans[s] = [fm.trans[s][edge]]
    return out


def _frozen_chain(fm: FiniteMdp, frozen: Dict[int, int], policy: Policy) -> Chain:
    merged = list(policy)
    for s, edge in frozen.items():
        merged[s] = edge
    return induced_chain(fm, tuple(merged))


@dataclass
class BubblePlan:
    radii: List[int]                      # n_0 < n_1 < ... < n_K
    horizons: List[int]                   # per-stage bounded horizons k_i
    stage_bounds: List[Fraction]          # certified min bounded-horizon values
    stage_targets: List[Set[Tuple[int, int]]]
    headline_value: Fraction              # exact P(hit at least one stage target)
    headline_bound: Fraction              # union-bound prediction it must meet
    kind: str = "deterministic"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "radii": self.radii,
            "horizons": self.horizons,
            "stage_bounds": [str(b) for b in self.stage_bounds],
            "stage_target_sizes": [len(t) for t in self.stage_targets],
            "headline_value": str(self.headline_value),
            "headline_bound": str(self.headline_bound),
        }


def _family_edges(fm: FiniteMdp, fam: MonotoneFamily, level: int) -> Set[Tuple[int, int]]:
    out = set()
    for s in range(fm.n_states()):
        for tr in fm.trans[s]:
            if fam.in_set(level, ref_of(fm, s, tr)):
                out.add((s, tr.to))
    return out


def restrict_to_family_winning_region(fm: FiniteMdp, fam: MonotoneFamily
                                      ) -> Tuple[FiniteMdp, Dict[int, int]]:
    """Restrict a finite base model to its almost-surely winning region for
    the family objective, pruning controlled edges that leave it.

    Mirrors the restriction to the footprint of an almost-surely winning
    strategy that precedes the stagewise constructions; apply this before
    step-counter encoding and truncation.  Raises StageFailure when the
    initial state is not almost-surely winning.
    """
    encoded = rewards_from_family(fm, fam)
    vals, _pol = solve_threshold(encoded, "limsup")
    if vals[fm.initial] != 1:
        raise StageFailure(0, "initial state is not almost-surely winning")
    region = [s for s in range(fm.n_states()) if vals[s] == 1]
    to_sub = {s: i for i, s in enumerate(region)}
    kinds = [fm.kinds[s] for s in region]
    sub_ids = [fm.ids[s] for s in region]
    trans: List[List[Transition]] = []
    for s in region:
        row: List[Transition] = []
        for tr in fm.trans[s]:
            if tr.to in to_sub:
                row.append(Transition(to_sub[tr.to], tr.prob, tr.reward))
            elif fm.kinds[s] is StateKind.RANDOM:
                raise ModelError("value-one region is not closed under randomness")
        if not row:
            raise ModelError("value-one region lost all successors of a state")
        trans.append(row)
    sub = FiniteMdp(kinds=kinds, trans=trans, initial=to_sub[fm.initial], ids=sub_ids)
    return sub, to_sub


def synth_positional_as_gf(fm: FiniteMdp, fam: MonotoneFamily, stages: int,
                           depth_budget: Optional[int] = None,
                           threshold: Fraction = Fraction(1, 2)
                           ) -> Tuple[Policy, BubblePlan]:
    """Stagewise deterministic positional synthesis on a truncation.

    The input should already be restricted to an almost-surely winning region
    (restrict_to_family_winning_region on the base model, then encode and
    truncate).  Stage i solves reachability to the fresh level-i family
    transitions (beyond the previous bubble), extracts a horizon where the
    bounded value is >= 1/2 from the whole previous bubble, and freezes the
    choices inside the grown bubble.  Certificates are exact.
    """
    n = fm.n_states()
    dist = bfs_distances(fm)
    if depth_budget is None:
        depth_budget = max(d for d in dist if d is not None) + 1
    frozen: Dict[int, int] = {}
    radii = [0]
    horizons: List[int] = []
    bounds: List[Fraction] = []
    targets: List[Set[Tuple[int, int]]] = []
    for stage in range(1, stages + 1):
        n_prev = radii[-1]
        shell_prev = {s for s in range(n) if dist[s] is not None and dist[s] <= n_prev}
        target = {(s, t) for (s, t) in _family_edges(fm, fam, stage)
                  if dist[t] is None or dist[t] > n_prev}
        if not target:
            raise StageFailure(stage, "no fresh family transitions beyond the bubble")
        targets.append(target)
        stage_fm = _freeze(fm, frozen)
        hit_set = TransSet.where(
            lambda r, tg=target, ids={v: i for i, v in enumerate(fm.ids)}:
            (ids[r.src], ids[r.dst]) in tg, label=f"stage{stage}")
        _vals, pol = solve_reachability_edges(stage_fm, hit_set)
        # map edge indices of stage_fm (frozen rows shrunk to one edge) back
        merged: List[Optional[int]] = list(pol)
        for s, edge in frozen.items():
            merged[s] = edge
        chain = induced_chain(fm, tuple(
            merged[s] if fm.kinds[s] is StateKind.CONTROLLED else None for s in range(n)))
        k = None
        prev = [ZERO] * n
        for j in range(1, depth_budget + 1):
            cur = []
            for s in range(n):
                acc = ZERO
                for (t, p, _r) in chain[s]:
                    if p == 0:
                        continue
                    acc += p * (ONE if (s, t) in target else prev[t])
                cur.append(acc)
            prev = cur
            if all(cur[s] >= threshold for s in shell_prev):
                k = j
                break
        if k is None:
            worst = min(prev[s] for s in shell_prev)
            raise StageFailure(stage, f"bounded value stuck at {worst} < {threshold}",
                               gap=threshold - worst)
        bound = min(prev[s] for s in shell_prev)
        bounds.append(bound)
        horizons.append(k)
        n_new = n_prev + k
        radii.append(n_new)
        for s in range(n):
            if (fm.kinds[s] is StateKind.CONTROLLED and s not in frozen
                    and dist[s] is not None and dist[s] <= n_new):
                frozen[s] = merged[s]
    policy: List[Optional[int]] = []
    for s in range(n):
        if fm.kinds[s] is not StateKind.CONTROLLED:
            policy.append(None)
        else:
            policy.append(frozen.get(s, 0))
    final_chain = induced_chain(fm, tuple(policy))
    union = set().union(*targets)
    headline = chain_edge_hit_values(final_chain, lambda s, t, _r: (s, t) in union)
    miss = ONE
    for b in bounds:
        miss *= (ONE - b)
    plan = BubblePlan(radii=radii, horizons=horizons, stage_bounds=bounds,
                      stage_targets=targets, headline_value=headline[fm.initial],
                      headline_bound=ONE - miss, kind="deterministic")
    return tuple(policy), plan


def synth_mr_as_gf(fm: FiniteMdp, fam: MonotoneFamily, stages: int,
                   reach_levels: Optional[int] = None,
                   depth_budget: Optional[int] = None,
                   resolution: Fraction = Fraction(1, 2 ** 20)
                   ) -> Tuple[MrPolicy, BubblePlan]:
    """Randomized positional synthesis: per fresh shell, mix the stage reach
    strategy (weight p) with every level's dedicated reach strategy (weights
    (1-p) * 2^-j, last level absorbing the geometric tail), with p minimized
    by binary search subject to the 1/4 stage certificate.

    As with the deterministic variant, the input should already be restricted
    to an almost-surely winning region of the base model.
    """
    n = fm.n_states()
    dist = bfs_distances(fm)
    if depth_budget is None:
        depth_budget = max(d for d in dist if d is not None) + 1
    J = reach_levels or stages
    level_edges = {j: _family_edges(fm, fam, j) for j in range(1, J + 1)}
    tau: Dict[int, Policy] = {}
    for j in range(1, J + 1):
        if not level_edges[j]:
            raise StageFailure(j, "family level has no transitions in the truncation")
        hit_set = TransSet.where(
            lambda r, tg=level_edges[j], ids={v: i for i, v in enumerate(fm.ids)}:
            (ids[r.src], ids[r.dst]) in tg, label=f"tau{j}")
        _v, pol = solve_reachability_edges(fm, hit_set)
        tau[j] = pol

    def mix_row(s: int, p: Fraction, stage_pol: Policy) -> Tuple[Tuple[Fraction, int], ...]:
        weights: Dict[int, Fraction] = {}

        def add(edge: int, w: Fraction):
            if w > 0:
                weights[edge] = weights.get(edge, ZERO) + w

        add(stage_pol[s], p)
        for j in range(1, J + 1):
            w = (ONE - p) * (Fraction(1, 2 ** j) if j < J else Fraction(1, 2 ** (J - 1)))
            add(tau[j][s], w)
        return tuple((w, e) for e, w in sorted(weights.items()))

    frozen_rows: Dict[int, Tuple[Tuple[Fraction, int], ...]] = {}
    radii = [0]
    horizons: List[int] = []
    bounds: List[Fraction] = []
    targets: List[Set[Tuple[int, int]]] = []

    def full_policy(p: Fraction, stage_pol: Policy) -> MrPolicy:
        rows: List[Optional[Tuple[Tuple[Fraction, int], ...]]] = []
        for s in range(n):
            if fm.kinds[s] is not StateKind.CONTROLLED:
                rows.append(None)
            elif s in frozen_rows:
                rows.append(frozen_rows[s])
            else:
                rows.append(mix_row(s, p, stage_pol))
        return tuple(rows)

    for stage in range(1, stages + 1):
        n_prev = radii[-1]
        shell_prev = {s for s in range(n) if dist[s] is not None and dist[s] <= n_prev}
        target = level_edges[min(stage, J)]
        targets.append(target)
        hit_set = TransSet.where(
            lambda r, tg=target, ids={v: i for i, v in enumerate(fm.ids)}:
            (ids[r.src], ids[r.dst]) in tg, label=f"mr-stage{stage}")
        _v, stage_pol = solve_reachability_edges(fm, hit_set)

        def stage_bound(p: Fraction) -> Tuple[Optional[int], Fraction]:
            chain = induced_chain_mr(fm, full_policy(p, stage_pol))
            prev = [ZERO] * n
            for j in range(1, depth_budget + 1):
                cur = []
                for s in range(n):
                    acc = ZERO
                    for (t, pr, _r) in chain[s]:
                        if pr == 0:
                            continue
                        acc += pr * (ONE if (s, t) in target else prev[t])
                    cur.append(acc)
                prev = cur
                if all(prev[s] >= Fraction(1, 4) for s in shell_prev):
                    return j, min(prev[s] for s in shell_prev)
            return None, min(prev[s] for s in shell_prev)

        # minimal dyadic p with the 1/4 certificate: binary search on the grid,
        # then verify that the bound holds at p and fails one notch below
        grid_max = int(ONE / resolution) - 1
        k_hi, b_hi = stage_bound(grid_max * resolution)
        if k_hi is None:
            raise StageFailure(stage, f"mixture bound stuck at {b_hi} < 1/4", gap=b_hi)
        lo_m, hi_m = 0, grid_max
        if stage_bound(ZERO)[0] is not None:
            hi_m = 0
        while lo_m < hi_m:
            mid = (lo_m + hi_m) // 2
            if stage_bound(mid * resolution)[0] is not None:
                hi_m = mid
            else:
                lo_m = mid + 1
        while hi_m > 0 and stage_bound((hi_m - 1) * resolution)[0] is not None:
            hi_m -= 1
        p_star = hi_m * resolution
        k, bound = stage_bound(p_star)
        horizons.append(k)
        bounds.append(bound)
        radii.append(n_prev + k)
        for s in range(n):
            if (fm.kinds[s] is StateKind.CONTROLLED and s not in frozen_rows
                    and dist[s] is not None and dist[s] <= radii[-1]):
                frozen_rows[s] = mix_row(s, p_star, stage_pol)

    # states beyond the last bubble get the pure geometric tau mixture (p = 0)
    last_stage_pol = tau[min(stages, J)]
    rows: List[Optional[Tuple[Tuple[Fraction, int], ...]]] = []
    for s in range(n):
        if fm.kinds[s] is not StateKind.CONTROLLED:
            rows.append(None)
        elif s in frozen_rows:
            rows.append(frozen_rows[s])
        else:
            rows.append(mix_row(s, ZERO, last_stage_pol))
    policy = tuple(rows)
    chain = induced_chain_mr(fm, policy)  # also validates weight sums exactly
    union = set().union(*targets)
    headline = chain_edge_hit_values(chain, lambda s, t, _r: (s, t) in union)
    miss = ONE
    for b in bounds:
        miss *= (ONE - b)
    plan = BubblePlan(radii=radii, horizons=horizons, stage_bounds=bounds,
                      stage_targets=targets, headline_value=headline[fm.initial],
                      headline_bound=ONE - miss, kind="randomized")
    return policy, plan


# ---------------------------------------------------------------------------
# Good-set extraction
# ---------------------------------------------------------------------------

@dataclass
class GoodSets:
    horizons: List[int]
    good_each: List[Set[Tuple[int, int]]]
    good: Set[Tuple[int, int]]
    stage_losses: List[Fraction]
    carried_mass: Fraction
    detail: dict = field(default_factory=dict)


def good_sets_limsup(fm: FiniteMdp, fam: MonotoneFamily, policy: Policy,
                     eps: Fraction, stages: int,
                     depth_budget: Optional[int] = None) -> GoodSets:
    """Horizon extraction for the limsup family under a reference strategy.

    Stage i finds the least horizon n_i by which the joint probability of
    having hit fresh level-j transitions (for all j <= i, each within its own
    horizon) has lost at most eps * 2^-i of the running mass.  Good_i is the
    level-i family set restricted to the bubble of radius n_i.
    """
    n = fm.n_states()
    dist = bfs_distances(fm)
    if depth_budget is None:
        depth_budget = max(d for d in dist if d is not None) + 1
    chain = induced_chain(fm, policy)
    horizons: List[int] = []
    losses: List[Fraction] = []
    # sequential stages: fresh level-i transitions only exist past the previous
    # horizon, so one pending bit suffices
    mass_dist: Dict[int, Fraction] = {fm.initial: ONE}  # runs that completed all stages
    carried = ONE
    t = 0
    for stage in range(1, stages + 1):
        n_prev = horizons[-1] if horizons else 0
        target = {(s, v) for (s, v) in _family_edges(fm, fam, stage)
                  if dist[v] is None or dist[v] > n_prev}
        budget = eps * Fraction(1, 2 ** stage)
        pending: Dict[int, Fraction] = dict(mass_dist)
        done: Dict[int, Fraction] = {}
        found = None
        while t < depth_budget:
            t += 1
            # completed runs keep moving; pending runs move and may cross a
            # fresh target transition, which completes the stage for them
            new_done: Dict[int, Fraction] = {}
            for s, mass in done.items():
                for (v, p, _r) in chain[s]:
                    if p:
                        new_done[v] = new_done.get(v, ZERO) + mass * p
            new_pending: Dict[int, Fraction] = {}
            for s, mass in pending.items():
                for (v, p, _r) in chain[s]:
                    if p == 0:
                        continue
                    share = mass * p
                    if (s, v) in target:
                        new_done[v] = new_done.get(v, ZERO) + share
                    else:
                        new_pending[v] = new_pending.get(v, ZERO) + share
            done = new_done
            pending = new_pending
            got = sum(done.values(), ZERO)
            if carried - got <= budget:
                found = t
                break
        if found is None:
            raise BudgetExhausted(
                f"stage {stage}: horizon extraction exceeded depth {depth_budget}")
        horizons.append(found)
        losses.append(carried - sum(done.values(), ZERO))
        carried = sum(done.values(), ZERO)
        mass_dist = done
    good_each: List[Set[Tuple[int, int]]] = []
    for stage, n_i in enumerate(horizons, start=1):
        good_each.append({(s, v) for (s, v) in _family_edges(fm, fam, stage)
                          if dist[v] is not None and dist[v] <= n_i})
    good = set().union(*good_each) if good_each else set()
    return GoodSets(horizons=horizons, good_each=good_each, good=good,
                    stage_losses=losses, carried_mass=carried)


def good_sets_liminf(fm: FiniteMdp, fam: MonotoneFamily, policy: Policy,
                     eps: Fraction, stages: int,
                     depth_budget: Optional[int] = None
                     ) -> Tuple[GoodSets, List[Fraction], Policy]:
    """Good-set extraction for the liminf family on a layered (step-encoded)
    truncation, plus the exact solution of the derived safety instance.

    Per stage: wait until the reference chain has left the previous support
    set for good (automatic on layered models), extend the horizon until the
    mass that violates level-i from there on is within the stage budget, and
    trim the occupied support to a finite shell.  Returns the good sets, the
    exact safety values of 'use only good transitions forever', and the MD
    safety strategy.
    """
    n = fm.n_states()
    dist = bfs_distances(fm)
    if depth_budget is None:
        depth_budget = max(d for d in dist if d is not None) + 1
    chain = induced_chain(fm, policy)
    horizons: List[int] = []
    supports: List[Set[int]] = [{fm.initial}]
    losses: List[Fraction] = []
    for stage in range(1, stages + 1):
        budget3 = eps * Fraction(1, 2 ** stage) / 3
        n_prev = horizons[-1] if horizons else 0
        leave = max((dist[s] for s in supports[-1] if dist[s] is not None), default=0) + 1
        # P(some level-i violation at or after step t0), exact on the layered chain
        best = None
        for t0 in range(max(leave, n_prev + 1), depth_budget + 1):
            viol = _violation_mass_from(fm, chain, fam, stage, t0, depth_budget)
            if viol <= budget3:
                best = t0
                break
        if best is None:
            raise BudgetExhausted(f"stage {stage}: no horizon within depth {depth_budget}")
        occupied = _occupied_support(chain, fm.initial, best, budget3)
        support = supports[-1] | occupied
        supports.append(support)
        horizons.append(best)
        losses.append(budget3 * 3)
    # the finite rendering closes the last shell over the whole truncation,
    # standing in for the infinitely many remaining stages
    supports.append(set(range(n)))
    # good_each[i] covers shell i: transitions of level >= i with both
    # endpoints inside S_{i+1} minus S_{i-1}; level 0 covers the start segment
    good_each: List[Set[Tuple[int, int]]] = []
    first = supports[1] if len(supports) > 1 else supports[0]
    good_each.append({(s, v) for (s, v) in _family_edges(fm, fam, 0)
                      if s in first and v in first})
    for stage in range(1, stages + 1):
        inside = supports[stage + 1] - supports[stage - 1]
        edges = {(s, v) for (s, v) in _family_edges(fm, fam, stage)
                 if s in inside and v in inside}
        good_each.append(edges)
    good = set().union(*good_each) if good_each else set()
    gs = GoodSets(horizons=horizons, good_each=good_each, good=good,
                  stage_losses=losses, carried_mass=ONE - sum(losses, ZERO))
    allowed = TransSet.where(
        lambda r, ids={v: i for i, v in enumerate(fm.ids)}: (ids[r.src], ids[r.dst]) in good,
        label="good")
    values, safety_pol = solve_safety(fm, allowed)
    return gs, values, safety_pol


def _violation_mass_from(fm: FiniteMdp, chain: Chain, fam: MonotoneFamily, level: int,
                         t0: int, depth: int) -> Fraction:
    """P(crossing a non-level transition at some step >= t0), exact forward DP."""
    bad = set()
    for s in range(fm.n_states()):
        for tr in fm.trans[s]:
            if not fam.in_set(level, ref_of(fm, s, tr)):
                bad.add((s, tr.to))
    dist_mass: Dict[int, Fraction] = {fm.initial: ONE}
    for _ in range(t0):
        nxt: Dict[int, Fraction] = {}
        for s, m in dist_mass.items():
            for (v, p, _r) in chain[s]:
                if p:
                    nxt[v] = nxt.get(v, ZERO) + m * p
        dist_mass = nxt
    viol = ZERO
    alive = dist_mass
    for _ in range(t0, depth + 1):
        nxt = {}
        for s, m in alive.items():
            for (v, p, _r) in chain[s]:
                if not p:
                    continue
                if (s, v) in bad:
                    viol += m * p
                else:
                    nxt[v] = nxt.get(v, ZERO) + m * p
        alive = nxt
        if not alive:
            break
    return viol


def _occupied_support(chain: Chain, initial: int, horizon: int,
                      budget: Fraction) -> Set[int]:
    """Finite support covering the first `horizon` steps up to `budget` mass,
    trimming per-layer tails (smallest masses first)."""
    dist_mass: Dict[int, Fraction] = {initial: ONE}
    keep: Set[int] = {initial}
    per_layer = budget / max(horizon, 1)
    for _ in range(horizon):
        nxt: Dict[int, Fraction] = {}
        for s, m in dist_mass.items():
            for (v, p, _r) in chain[s]:
                if p:
                    nxt[v] = nxt.get(v, ZERO) + m * p
        trimmed = ZERO
        for s in sorted(nxt, key=lambda x: (nxt[x], x)):
            if trimmed + nxt[s] <= per_layer:
                trimmed += nxt[s]
                nxt = {k: v for k, v in nxt.items() if k != s}
            else:
                break
        keep |= set(nxt)
        dist_mass = nxt
    return keep


# ---------------------------------------------------------------------------
# Safety gadget splice
# ---------------------------------------------------------------------------

def safe_gadget_transform(fm: FiniteMdp, fam: MonotoneFamily
                          ) -> Tuple[FiniteMdp, Set[int]]:
    """Replace the sure-safety region for the level-infinity transitions by a
    single winning sink; incoming edges are rerouted to it.  Preserves the
    liminf-family value exactly on finite instances."""
    core = TransSet.where(lambda r: fam.level(r) == INF, label="level-inf")
    region, _witness = sure_safety_region(fm, core)
    if not region:
        return fm.copy(), set()
    out = fm.copy()
    sink = out.n_states()
    out.kinds.append(StateKind.CONTROLLED)
    out.ids.append("__safe__")
    out.trans.append([Transition(sink, None, ZERO)])
    out.tail_labels[sink] = TailLabel(ZERO, ZERO)
    for s in range(fm.n_states()):
        if s in region:
            continue
        out.trans[s] = [Transition(sink if tr.to in region else tr.to, tr.prob, tr.reward)
                        for tr in out.trans[s]]
    if fm.initial in region:
        out.initial = sink
    problems = validate(out)
    if problems:
        raise ModelError("safety gadget broke the model: " + "; ".join(problems))
    return out, region


# ---------------------------------------------------------------------------
# Optimal strategies from almost-sure synthesis via conditioning
# ---------------------------------------------------------------------------

@dataclass
class OptimalFromAsResult:
    policy: Policy
    optimal_states: Set[int]
    no_optimal_states: Set[int]
    conditioned_values: List[Fraction]


def lift_objective_to_conditioned(fm: FiniteMdp, obj: Objective) -> Objective:
    """Reinterpret transition-set objectives over the conditioned model, where
    a controlled edge s->t appears as the gadget exit '(s>t)' -> t."""
    k = obj.kind
    if k is ObjKind.AND:
        from .objectives import conj
        return conj(*[lift_objective_to_conditioned(fm, p) for p in obj.parts])
    if k in (ObjKind.SAFETY, ObjKind.BUCHI, ObjKind.COBUCHI):
        ts = obj.transitions

        def pred(r: TransRef, ts=ts) -> bool:
            src = r.src
            if isinstance(src, str) and src.startswith("(") and ">" in src:
                inner = src[1:-1]
                a, _, b = inner.rpartition(">")
                if b == str(r.dst):
                    return ts.contains(TransRef(a, r.dst, r.reward))
                return False  # gadget stem edges do not count as the transition
            return ts.contains(r)

        return Objective(k, transitions=TransSet.where(pred, label=f"cond:{ts.label}"))
    return obj  # reach (ids preserved), reward-threshold and family objectives


def optimal_from_as(fm: FiniteMdp, obj: Objective, vals: Sequence[Fraction],
                    as_synthesizer: Callable[[FiniteMdp, Objective],
                                             Tuple[List[Fraction], Policy]]
                    ) -> OptimalFromAsResult:
    """Single positional strategy optimal from every state that has an optimal
    strategy: condition on the values, synthesize almost-surely there, carry
    the positional strategy back verbatim.

    States whose conditioned value is below one admit no optimal strategy and
    are reported, not fabricated.  Zero-value states are trivially optimal.
    """
    cond, index = conditioned_finite(fm, list(vals), obj)
    lifted = lift_objective_to_conditioned(fm, obj)
    cond_vals, cond_pol = as_synthesizer(cond, lifted)
    policy: List[Optional[int]] = []
    optimal: Set[int] = set()
    none: Set[int] = set()
    for s in range(fm.n_states()):
        if fm.kinds[s] is not StateKind.CONTROLLED:
            policy.append(None)
        elif s in index:
            policy.append(cond_pol[index[s]])
        else:
            policy.append(0)
        if vals[s] == 0:
            optimal.add(s)   # value zero: any strategy attains it
        elif cond_vals[index[s]] == 1:
            optimal.add(s)
        else:
            none.add(s)
    return OptimalFromAsResult(policy=tuple(policy), optimal_states=optimal,
                               no_optimal_states=none,
                               conditioned_values=[cond_vals[index[s]] if s in index else ZERO
                                                   for s in range(fm.n_states())])
