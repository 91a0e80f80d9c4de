"""Command line front end.

Subcommands: figures (generate/truncate built-in families), solve (exact
values on finite models), eval (exact value of a given table strategy),
transform (model-to-model constructions), synthesize (stagewise synthesis
with certificates), simulate (Monte Carlo brackets), report (verdict tables;
exit code 0 only if every asserted cell passes).
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import families
from .core import (FiniteMdp, FrontierPolicy, dump_finite_mdp, finite_mdp_to_json,
                   format_rational, load_finite_mdp, parse_rational, truncate, validate)
from .objectives import (Objective, ObjKind, objective_from_json, limsup_geq0, liminf_geq0)
from .sim import cycle_analysis, estimate_attainment, lasso_attainment, pass_process_estimate
from .solve import (enumerate_strategies, evaluate_md, evaluate_md_expected,
                    solve_buchi, solve_cobuchi, solve_expected, solve_reachability,
                    solve_safety, solve_threshold)
from .strategies import from_finite_policy
from .synth import synth_mr_as_gf, synth_positional_as_gf
from .transforms import (conditioned_finite, ladder_binarize, state_to_transition_rewards,
                         step_counter_encode, transition_to_state_rewards)
from .objectives import family_from_rewards
from .report import run_table_experiments


def _load_model(spec: str, depth: int, policy: str, branch_cap):
    """`file.json` or `gen:<family>` (truncated at --depth)."""
    if spec.startswith("gen:"):
        parts = spec.split(":")
        fam = families.generate(parts[1])
        fp = FrontierPolicy(policy)
        fm, _ = truncate(fam, depth, fp, branch_cap=branch_cap)
        return fm
    return load_finite_mdp(spec)


def _load_objective(spec: str) -> Objective:
    if spec in ("limsup_geq0", "limsup"):
        return limsup_geq0
    if spec in ("liminf_geq0", "liminf"):
        return liminf_geq0
    with open(spec) as fh:
        return objective_from_json(json.load(fh))


def _emit(doc, out):
    text = json.dumps(doc, indent=2, default=str)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_figures(args) -> int:
    if args.list:
        for f in families.FAMILIES:
            print(f)
        return 0
    fam = families.generate(args.family)
    fm, _ = truncate(fam, args.depth, FrontierPolicy(args.frontier),
                     branch_cap=args.branch_cap)
    _emit(finite_mdp_to_json(fm), args.out)
    return 0


def cmd_solve(args) -> int:
    fm = _load_model(args.model, args.depth, args.frontier, args.branch_cap)
    obj = _load_objective(args.objective)
    if args.method == "enumerate":
        res = enumerate_strategies(fm, args.cls, obj, budget=args.budget_strategies)
        _emit({"best": format_rational(res.best), "argmax_count": len(res.argmax),
               "evaluated": res.evaluated,
               "argmax_first": list(res.argmax[0]) if res.argmax else None}, args.out)
        return 0
    if obj.kind is ObjKind.LIMSUP_GEQ0:
        vals, pol = solve_threshold(fm, "limsup")
    elif obj.kind is ObjKind.LIMINF_GEQ0:
        vals, pol = solve_threshold(fm, "liminf")
    elif obj.kind is ObjKind.REACH:
        targets = {i for i in range(fm.n_states()) if fm.ids[i] in obj.targets}
        vals, pol = solve_reachability(fm, targets)
    elif obj.kind is ObjKind.SAFETY:
        vals, pol = solve_safety(fm, obj.transitions)
    elif obj.kind is ObjKind.BUCHI:
        vals, pol = solve_buchi(fm, obj.transitions)
    elif obj.kind is ObjKind.COBUCHI:
        vals, pol = solve_cobuchi(fm, obj.transitions)
    elif obj.kind is ObjKind.GF_FAMILY:
        from .objectives import rewards_from_family
        vals, pol = solve_threshold(rewards_from_family(fm, obj.family), "limsup")
    elif obj.kind is ObjKind.FG_FAMILY:
        from .objectives import rewards_from_family
        vals, pol = solve_threshold(rewards_from_family(fm, obj.family), "liminf")
    else:
        print(f"exact solver does not cover objective {obj.kind.value}", file=sys.stderr)
        return 2
    _emit({
        "values": {fm.ids[s]: format_rational(vals[s]) for s in range(fm.n_states())},
        "strategy": {fm.ids[s]: fm.ids[fm.trans[s][pol[s]].to]
                     for s in range(fm.n_states()) if pol[s] is not None},
    }, args.out)
    return 0


def cmd_eval(args) -> int:
    fm = _load_model(args.model, args.depth, args.frontier, args.branch_cap)
    with open(args.strategy) as fh:
        doc = json.load(fh)
    if doc.get("type") != "md":
        print("eval supports MD table strategies ({'type':'md','choices':{id:id}})",
              file=sys.stderr)
        return 2
    index = {sid: i for i, sid in enumerate(fm.ids)}
    policy = []
    for s in range(fm.n_states()):
        if fm.ids[s] in doc["choices"]:
            target = index[doc["choices"][fm.ids[s]]]
            edge = next(i for i, tr in enumerate(fm.trans[s]) if tr.to == target)
            policy.append(edge)
        else:
            policy.append(None if fm.kinds[s].value == "random" else 0)
    if args.expected:
        vals = evaluate_md_expected(fm, tuple(policy), args.expected)
    else:
        vals = evaluate_md(fm, tuple(policy), _load_objective(args.objective))
    _emit({fm.ids[s]: format_rational(vals[s]) for s in range(fm.n_states())}, args.out)
    return 0


def cmd_transform(args) -> int:
    if args.kind == "step-encode":
        fam = families.generate(args.model.split(":")[1]) if args.model.startswith("gen:") \
            else None
        if fam is None:
            from .core import as_countable
            fam = as_countable(load_finite_mdp(args.model))
        enc = step_counter_encode(fam)
        fm, _ = truncate(enc, args.depth, FrontierPolicy(args.frontier),
                         branch_cap=args.branch_cap)
    elif args.kind == "binarize":
        fam = families.generate(args.model.split(":")[1]) if args.model.startswith("gen:") \
            else None
        if fam is None:
            from .core import as_countable
            fam = as_countable(load_finite_mdp(args.model))
        fm, _ = truncate(ladder_binarize(fam, branch_bound=args.branch_cap or 64),
                         args.depth, FrontierPolicy(args.frontier))
    elif args.kind == "conditioned":
        base = load_finite_mdp(args.model)
        obj = _load_objective(args.objective)
        if obj.kind is ObjKind.LIMSUP_GEQ0:
            vals, _ = solve_threshold(base, "limsup")
        elif obj.kind is ObjKind.LIMINF_GEQ0:
            vals, _ = solve_threshold(base, "liminf")
        elif obj.kind is ObjKind.REACH:
            targets = {i for i in range(base.n_states()) if base.ids[i] in obj.targets}
            vals, _ = solve_reachability(base, targets)
        else:
            print("conditioning supports reach/limsup/liminf here", file=sys.stderr)
            return 2
        fm, _ = conditioned_finite(base, vals, obj)
    elif args.kind == "state-to-transition":
        base = load_finite_mdp(args.model)
        fm = state_to_transition_rewards(base, parse_rational(args.bound), args.mode)
    elif args.kind == "transition-to-state":
        base = load_finite_mdp(args.model)
        fm = transition_to_state_rewards(base, parse_rational(args.bound), args.mode)
    else:
        print(f"unknown transform {args.kind}", file=sys.stderr)
        return 2
    _emit(finite_mdp_to_json(fm), args.out)
    return 0


def cmd_synthesize(args) -> int:
    from .core import as_countable
    if args.model.startswith("gen:"):
        fam_m = families.generate(args.model.split(":")[1])
    else:
        fam_m = as_countable(load_finite_mdp(args.model))
    enc = step_counter_encode(fam_m) if args.step_encode else fam_m
    fm, _ = truncate(enc, args.depth, FrontierPolicy(args.frontier),
                     branch_cap=args.branch_cap)
    fam = family_from_rewards()
    if args.method == "bubble":
        pol, plan = synth_positional_as_gf(fm, fam, stages=args.stages)
        doc = {"plan": plan.to_json(),
               "strategy": {fm.ids[s]: fm.ids[fm.trans[s][pol[s]].to]
                            for s in range(fm.n_states()) if pol[s] is not None}}
    elif args.method == "mr":
        pol, plan = synth_mr_as_gf(fm, fam, stages=args.stages)
        doc = {"plan": plan.to_json(),
               "strategy": {fm.ids[s]: [[str(w), fm.ids[fm.trans[s][e].to]]
                                        for (w, e) in pol[s]]
                            for s in range(fm.n_states()) if pol[s] is not None}}
    else:
        print(f"unknown synthesis method {args.method}", file=sys.stderr)
        return 2
    _emit(doc, args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.strategy.startswith("builtin:"):
        parts = args.strategy.split(":")
        name = parts[1]
        if name == "randf-escalating":
            proc = families.randf_escalating_pass_process(int(parts[2]))
            est = pass_process_estimate(proc, args.horizon, args.samples, args.delta,
                                        args.seed, threads=args.threads)
            _emit(est.to_json(), args.out)
            return 0
        if name == "randf-mr":
            weights = {int(b): Fraction(1, len(parts) - 2) for b in parts[2:]}
            total = sum(weights.values())
            if total != 1:
                k = sorted(weights)[0]
                weights[k] += 1 - total
            proc = families.randf_mr_pass_process(weights)
            est = pass_process_estimate(proc, args.horizon, args.samples, args.delta,
                                        args.seed, threads=args.threads)
            _emit(est.to_json(), args.out)
            return 0
        if name == "cycle":
            rep = cycle_analysis(parts[2], {}, json.loads(parts[3]))
            _emit({"value_exact": str(rep.value_exact),
                   "value_bracket": [str(x) for x in rep.value_bracket]
                   if rep.value_bracket else None,
                   "detail": {k: str(v) for k, v in rep.detail.items()}}, args.out)
            return 0
        print(f"unknown builtin strategy {name}", file=sys.stderr)
        return 2
    fm = _load_model(args.model, args.depth, args.frontier, args.branch_cap)
    with open(args.strategy) as fh:
        doc = json.load(fh)
    index = {sid: i for i, sid in enumerate(fm.ids)}
    policy = []
    for s in range(fm.n_states()):
        if fm.ids[s] in doc.get("choices", {}):
            target = index[doc["choices"][fm.ids[s]]]
            policy.append(next(i for i, tr in enumerate(fm.trans[s]) if tr.to == target))
        else:
            policy.append(None if fm.kinds[s].value == "random" else 0)
    from .core import as_countable
    machine = from_finite_policy(fm, policy)
    est = estimate_attainment(as_countable(fm), machine, _load_objective(args.objective),
                              args.horizon, args.samples, args.delta, args.seed,
                              threads=args.threads)
    _emit(est.to_json(), args.out)
    return 0


def cmd_report(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    if args.quick:
        cfg.setdefault("samples", 4000)
        cfg.setdefault("horizon", 2000)
        cfg.setdefault("synth_depth", 20)
        cfg.setdefault("synth_stages", 3)
        cfg.setdefault("fd_modes", 1)
    if args.out_dir:
        cfg["out_dir"] = args.out_dir
    report = run_table_experiments(cfg)
    print(report.render_text())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_json(), fh, indent=2, default=str)
    return 0 if report.all_asserted_pass() else 1


def _add_model_args(p, with_objective=True):
    p.add_argument("--model", required=True,
                   help="model JSON file or gen:<family> (truncated at --depth)")
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--frontier", default="losing",
                   choices=[fp.value for fp in FrontierPolicy])
    p.add_argument("--branch-cap", type=int, default=None)
    if with_objective:
        p.add_argument("--objective", default="limsup_geq0",
                       help="limsup_geq0 | liminf_geq0 | objective JSON file")
    p.add_argument("--out", default="")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ppmdp",
                                 description="countable MDPs with limsup/liminf "
                                             "point-payoff objectives")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--budget-states", type=int, default=100000)
    ap.add_argument("--budget-strategies", type=int, default=200000)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("figures", help="generate a built-in family")
    p.add_argument("--list", action="store_true")
    p.add_argument("--family", default="ladder_limsup")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--frontier", default="losing",
                   choices=[fp.value for fp in FrontierPolicy])
    p.add_argument("--branch-cap", type=int, default=None)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("solve", help="exact values on a finite model")
    _add_model_args(p)
    p.add_argument("--method", default="exact", choices=["exact", "enumerate"])
    p.add_argument("--cls", default="md", help="md or fd:<k> (enumerate only)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="exact value of an MD table strategy")
    _add_model_args(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--expected", default="", choices=["", "limsup", "liminf"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transform", help="model-to-model constructions")
    _add_model_args(p)
    p.add_argument("--kind", required=True,
                   choices=["step-encode", "binarize", "conditioned",
                            "state-to-transition", "transition-to-state"])
    p.add_argument("--bound", default="1")
    p.add_argument("--mode", default="limsup", choices=["limsup", "liminf"])
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("synthesize", help="stagewise synthesis with certificates")
    _add_model_args(p, with_objective=False)
    p.add_argument("--method", default="bubble", choices=["bubble", "mr"])
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--step-encode", action="store_true")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="Monte Carlo attainment bracket")
    _add_model_args(p)
    p.add_argument("--strategy", required=True,
                   help="strategy JSON or builtin:<name>:<params>")
    p.add_argument("--horizon", type=int, default=10000)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--delta", type=float, default=0.01)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="run the verdict-table experiments")
    p.add_argument("--config", default="")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--out", default="")
    p.add_argument("--out-dir", default="")
    p.set_defaults(func=cmd_report)

    args = ap.parse_args(argv)
    if hasattr(args, "seed") and not getattr(args, "seed", 0):
        args.seed = ap.get_default("seed") or 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
