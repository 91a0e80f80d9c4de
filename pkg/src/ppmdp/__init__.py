"""Point-payoff MDP toolkit: countable MDP modeling, objective reductions,
exact finite solvers, strategy synthesis, and Monte Carlo attainment checks."""

from .core import (Arm, CountableMdp, EmptySuccessors, FiniteMdp, FiniteSupport,
                   FrontierPolicy, InfiniteBubble, InfiniteChoices, InfiniteSupport,
                   ModelError, OracleFailure, StateKind, TailLabel, Transition,
                   as_countable, distance_and_bubble, dump_finite_mdp, finite_mdp_from_json,
                   finite_mdp_to_json, load_finite_mdp, parse_rational, format_rational,
                   successors, truncate, validate)
from .objectives import (INF, Lasso, MonotoneFamily, Objective, ObjKind, RunPrefix,
                         TransRef, TransSet, Verdict, buchi, classify_prefix, cobuchi,
                         conj, family_from_rewards, family_table, fg_family, gf_family,
                         lasso_verdict, level_of_reward, liminf_geq0, limsup_geq0,
                         objective_from_json, objective_to_json, reach, reach_within,
                         reward_of_level, rewards_from_family, safety, transience)
from .solve import (BudgetExceeded, EnumerationResult, Mec, bellman_residual_reach,
                    bounded_avoid_values, enumerate_strategies, evaluate_md,
                    evaluate_md_expected, evaluate_mr, evaluate_mr_expected,
                    induced_chain, induced_chain_mr, mec_decomposition,
                    solve_buchi, solve_cobuchi, solve_expected, solve_reachability,
                    solve_reachability_edges, solve_safety, solve_threshold,
                    sure_avoid_sets, sure_safety_region)

__version__ = "0.1.0"
