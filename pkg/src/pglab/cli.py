"""Batch command-line surface: load a model file, run, emit tables.

Subcommands: exact, estimate, sweep, check-bound, appendix-a, hessian,
multi-agent. Every number in an output file comes from one library call; the
CLI only orchestrates. Output is deterministic byte-for-byte for a fixed
(model, flags, seeds) triple: records are sorted by (seed, k) before
emission, floats are printed with 17 significant digits, and wall-clock
columns stay 0.0 unless --timing is passed. PG_LAB_THREADS caps how many
seeds run in parallel (default 1); parallelism never changes output bytes.

Exit codes: 0 success, 1 model/validation error, 2 usage error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (
    appendix_a_scenario,
    bias_angle_deg,
    bias_variance_sweep,
    check_bound,
    spectral_report,
)
from .chain import (
    ParamChain,
    average_reward,
    exact_grad_eta,
    grad_beta_eta,
    stationary_distribution,
)
from .errors import (
    DegenerateGradient,
    DimensionMismatch,
    InvalidDiscount,
    NotDistinct,
    ParseError,
    PglabError,
    RewardKindMismatch,
    ValidationError,
    WindowTooLarge,
)
from .estimators import (
    gpomdp_run,
    hessian_run,
    mcg_run,
    multi_agent_run,
    truncated_trace_run,
)
from .modelfile import build_model, parse_model
from .numdiff import central_difference
from .pomdp import MultiAgentPomdp, SoftmaxPolicy, induced_chain, multi_agent_induced_chain

__all__ = ["main"]

RESULT_COLUMNS = (
    "algorithm", "beta", "window", "steps", "seed", "k",
    "estimate", "exact", "rel_err", "wall_s",
)
SWEEP_COLUMNS = (
    "beta", "bias_angle_deg", "estimator_variance_per_coordinate",
    "steps", "seeds_used", "degenerate",
)
SCENARIO_COLUMNS = ("alpha", "pi_1", "pi_2", "j_1", "j_2", "w_star", "greedy_suboptimal")

USAGE_ERRORS = (InvalidDiscount, WindowTooLarge)
INPUT_ERRORS = (ParseError, ValidationError, DimensionMismatch, RewardKindMismatch)


class UsageError(Exception):
    pass


@dataclass
class Record:
    """One output row; None fields print empty (csv) or null (jsonl)."""

    algorithm: str
    beta: float | None = None
    window: int | None = None
    steps: int | None = None
    seed: int | None = None
    k: int = 0
    estimate: float | None = None
    exact: float | None = None
    rel_err: float | None = None
    wall_s: float = 0.0


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in np.asarray(v).tolist())
    return str(v)


def _jsonable(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if np.isnan(v) else v
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in np.asarray(v).tolist()]
    return v


def _emit(rows: list[dict], columns, out: str, fmt: str):
    if fmt == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(row.get(c)) for c in columns))
        text = "\n".join(lines) + "\n"
    else:
        text = "".join(
            json.dumps({c: _jsonable(row.get(c)) for c in columns}) + "\n"
            for row in rows
        )
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as f:
            f.write(text)


def _rel_err(est: float, exact: float) -> float:
    return abs(est - exact) / max(abs(exact), 1e-12)


def _parse_float_list(text: str, flag: str) -> list[float]:
    items = [s for s in (part.strip() for part in text.split(",")) if s]
    if not items:
        raise UsageError(f"{flag} needs at least one value")
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _parse_int_list(text: str, flag: str) -> list[int]:
    items = [s for s in (part.strip() for part in text.split(",")) if s]
    if not items:
        raise UsageError(f"{flag} needs at least one value")
    try:
        return [int(s) for s in items]
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _threads() -> int:
    raw = os.environ.get("PG_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_seeds(fn, seeds):
    workers = min(_threads(), len(seeds))
    if workers <= 1:
        return [fn(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _load_chain_like(path):
    """(chain, model, policy): model/policy are None for chain kinds."""
    spec = parse_model(path)
    built = build_model(spec)
    if isinstance(built, ParamChain):
        return spec, built, None, None
    model, policy = built
    return spec, induced_chain(model, policy), model, policy


def _records_to_rows(records: list[Record]) -> list[dict]:
    rows = [{c: getattr(r, c) for c in RESULT_COLUMNS} for r in records]
    rows.sort(key=lambda row: (row["seed"] if row["seed"] is not None else -1, row["k"]))
    return rows


def _cmd_exact(args) -> int:
    beta = args.beta
    spec, chain, model, policy = _load_chain_like(args.model)
    P = chain.transition()
    eta = average_reward(P, chain.rewards)
    ge = exact_grad_eta(chain)
    gbe = grad_beta_eta(chain, beta)
    records = [Record("eta", beta=beta, estimate=eta)]
    for k in range(chain.num_params):
        records.append(
            Record("grad_eta", beta=beta, k=k, estimate=ge[k], exact=ge[k], rel_err=0.0)
        )
    for k in range(chain.num_params):
        records.append(
            Record(
                "grad_beta_eta", beta=beta, k=k, estimate=gbe[k], exact=ge[k],
                rel_err=_rel_err(gbe[k], ge[k]),
            )
        )
    if np.linalg.norm(ge) > 1e-9:
        records.append(
            Record("bias_angle_deg", beta=beta, estimate=bias_angle_deg(ge, gbe))
        )
    report = spectral_report(P, stationary_distribution(P))
    records.append(Record("lambda2_mag", beta=beta, estimate=report.lambda2_mag))
    try:
        bound = check_bound(chain, beta)
    except (NotDistinct, DegenerateGradient):
        bound = None
    if bound is not None:
        records.append(Record("bound_lhs", beta=beta, estimate=bound.lhs))
        records.append(Record("bound_rhs", beta=beta, estimate=bound.rhs))
    _emit(_records_to_rows(records), RESULT_COLUMNS, args.out, args.format)
    return 0


def _cmd_estimate(args) -> int:
    spec, chain, model, policy = _load_chain_like(args.model)
    seeds = _parse_int_list(args.seeds, "--seeds")
    algorithm = args.algorithm
    wants_window = algorithm == "truncated"
    if wants_window and args.window is None:
        raise UsageError("truncated needs --window")
    if not wants_window and args.window is not None:
        raise UsageError(f"{algorithm} does not take --window")
    if algorithm == "gpomdp" and model is None:
        raise UsageError("gpomdp needs a pomdp model file")
    if algorithm in ("mcg", "truncated") and model is not None:
        raise UsageError(f"{algorithm} needs a chain model file")

    if algorithm == "truncated":
        exact = exact_grad_eta(chain)

        def run(seed):
            t0 = time.perf_counter()
            est = truncated_trace_run(
                chain, args.window, args.steps, seed,
                initial_state=spec.initial_state,
            )
            return est, time.perf_counter() - t0
    elif algorithm == "mcg":
        exact = grad_beta_eta(chain, args.beta)

        def run(seed):
            t0 = time.perf_counter()
            est = mcg_run(
                chain, args.beta, args.steps, seed, baseline=args.baseline,
                initial_state=spec.initial_state,
            )
            return est, time.perf_counter() - t0
    else:
        exact = grad_beta_eta(chain, args.beta)

        def run(seed):
            t0 = time.perf_counter()
            est = gpomdp_run(
                model, policy, args.beta, args.steps, seed,
                baseline=args.baseline, initial_state=spec.initial_state,
            )
            return est, time.perf_counter() - t0

    results = _run_seeds(run, seeds)
    records = []
    for seed, (est, wall) in zip(seeds, results):
        for k in range(est.delta.shape[0]):
            records.append(
                Record(
                    algorithm, beta=est.beta, window=est.window, steps=est.steps,
                    seed=seed, k=k, estimate=est.delta[k], exact=exact[k],
                    rel_err=_rel_err(est.delta[k], exact[k]),
                    wall_s=wall if args.timing else 0.0,
                )
            )
    _emit(_records_to_rows(records), RESULT_COLUMNS, args.out, args.format)
    return 0


def _cmd_sweep(args) -> int:
    spec, chain, model, policy = _load_chain_like(args.model)
    betas = _parse_float_list(args.betas, "--betas")
    seeds = _parse_int_list(args.seeds, "--seeds")
    target = chain if model is None else (model, policy)
    records = bias_variance_sweep(target, betas, args.steps, seeds)
    rows = [
        {
            "beta": r.beta,
            "bias_angle_deg": r.bias_angle_deg,
            "estimator_variance_per_coordinate": r.estimator_variance_per_coordinate,
            "steps": r.steps,
            "seeds_used": r.seeds_used,
            "degenerate": r.degenerate,
        }
        for r in records
    ]
    _emit(rows, SWEEP_COLUMNS, args.out, args.format)
    return 0


def _cmd_check_bound(args) -> int:
    spec, chain, model, policy = _load_chain_like(args.model)
    bound = check_bound(chain, args.beta)
    pairs = [
        ("bound_lhs", bound.lhs),
        ("bound_rhs", bound.rhs),
        ("bound_kappa2", bound.kappa2),
        ("bound_grad_sqrt_pi_norm", bound.grad_sqrt_pi_norm),
        ("bound_rms_reward", bound.rms_reward),
        ("bound_mixing_ratio", bound.discount_mixing_ratio),
        ("lambda2_mag", bound.lambda2_mag),
        ("bound_holds", 1.0 if bound.holds else 0.0),
    ]
    records = [
        Record(name, beta=args.beta, estimate=value) for name, value in pairs
    ]
    _emit(_records_to_rows(records), RESULT_COLUMNS, args.out, args.format)
    return 0


def _cmd_appendix_a(args) -> int:
    alphas = _parse_float_list(args.alphas, "--alphas")
    rows = []
    for alpha in alphas:
        rep = appendix_a_scenario(alpha)
        rows.append(
            {
                "alpha": rep.alpha,
                "pi_1": rep.pi[0],
                "pi_2": rep.pi[1],
                "j_1": rep.j_alpha[0],
                "j_2": rep.j_alpha[1],
                "w_star": rep.w_star,
                "greedy_suboptimal": rep.greedy_suboptimal,
            }
        )
    _emit(rows, SCENARIO_COLUMNS, args.out, args.format)
    return 0


def _cmd_hessian(args) -> int:
    spec, chain, model, policy = _load_chain_like(args.model)
    if model is not None:
        raise UsageError("hessian needs a chain model file")
    seeds = _parse_int_list(args.seeds, "--seeds")
    K = chain.num_params

    def gbe_of(theta):
        return grad_beta_eta(chain.with_theta(theta), args.beta)

    exact = central_difference(gbe_of, chain.theta)

    def run(seed):
        t0 = time.perf_counter()
        est = hessian_run(
            chain, args.beta, args.steps, seed, initial_state=spec.initial_state
        )
        return est, time.perf_counter() - t0

    results = _run_seeds(run, seeds)
    records = []
    for seed, (est, wall) in zip(seeds, results):
        for k1 in range(K):
            for k2 in range(K):
                records.append(
                    Record(
                        "hessian", beta=args.beta, steps=args.steps, seed=seed,
                        k=k1 * K + k2, estimate=est.delta[k1, k2],
                        exact=exact[k1, k2],
                        rel_err=_rel_err(est.delta[k1, k2], exact[k1, k2]),
                        wall_s=wall if args.timing else 0.0,
                    )
                )
    _emit(_records_to_rows(records), RESULT_COLUMNS, args.out, args.format)
    return 0


def _cmd_multi_agent(args) -> int:
    spec = parse_model(args.model)
    if spec.kind != "pomdp":
        raise UsageError("multi-agent needs a pomdp model file")
    controls = _parse_int_list(args.agent_controls, "--agent-controls")
    if any(c < 1 for c in controls):
        raise UsageError("--agent-controls entries must be positive")
    joint = int(np.prod(controls))
    if joint != spec.k_controls:
        raise ValidationError(
            f"agent controls {controls} multiply to {joint}, "
            f"file declares k_controls={spec.k_controls}"
        )
    m = spec.m
    expected = m * sum(controls)
    if spec.theta.shape[0] != expected:
        raise ValidationError(
            f"multi-agent theta needs length m*sum(controls) = {expected}, "
            f"file has {spec.theta.shape[0]}"
        )
    if spec.rewards.ndim != 1:
        raise ValidationError("multi-agent runs need state rewards")
    policies = []
    offset = 0
    for N_a in controls:
        block = spec.theta[offset : offset + m * N_a]
        policies.append(SoftmaxPolicy(theta=block.reshape(m, N_a)))
        offset += m * N_a
    env = MultiAgentPomdp(
        trans=spec.trans,
        obs=tuple(spec.obs for _ in controls),
        agent_controls=tuple(controls),
        rewards=spec.rewards,
    )
    seeds = _parse_int_list(args.seeds, "--seeds")
    exact = grad_beta_eta(multi_agent_induced_chain(env, policies), args.beta)

    def run(seed):
        t0 = time.perf_counter()
        est = multi_agent_run(
            env, policies, args.beta, args.steps, seed,
            initial_state=spec.initial_state,
        )
        return est, time.perf_counter() - t0

    results = _run_seeds(run, seeds)
    records = []
    for seed, (est, wall) in zip(seeds, results):
        for k in range(est.delta.shape[0]):
            records.append(
                Record(
                    "multi_agent", beta=args.beta, steps=args.steps, seed=seed,
                    k=k, estimate=est.delta[k], exact=exact[k],
                    rel_err=_rel_err(est.delta[k], exact[k]),
                    wall_s=wall if args.timing else 0.0,
                )
            )
    _emit(_records_to_rows(records), RESULT_COLUMNS, args.out, args.format)
    return 0


def _add_common(p, *, model=True, beta=False, steps=False, seeds=False):
    if model:
        p.add_argument("--model", required=True, help="model file path")
    if beta:
        p.add_argument("--beta", type=float, default=0.95, help="trace discount in [0,1)")
    if steps:
        p.add_argument("--steps", type=int, required=True, help="transitions to simulate")
    if seeds:
        p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--timing", action="store_true",
                   help="fill wall_s with measured times (breaks byte determinism)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pglab",
        description="Exact and simulated performance gradients of parameterized chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="closed-form quantities for a model")
    _add_common(p, beta=True)
    p.set_defaults(fn=_cmd_exact)

    p = sub.add_parser("estimate", help="single-path gradient estimates")
    _add_common(p, beta=True, steps=True, seeds=True)
    p.add_argument("--algorithm", choices=("mcg", "gpomdp", "truncated"), required=True)
    p.add_argument("--window", type=int, default=None, help="trace window (truncated)")
    p.add_argument("--baseline", type=float, default=0.0)
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("sweep", help="bias/variance trade across discounts")
    _add_common(p, steps=True, seeds=True)
    p.add_argument("--betas", required=True, help="comma-separated discounts")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("check-bound", help="both sides of the discount-bias bound")
    _add_common(p, beta=True)
    p.set_defaults(fn=_cmd_check_bound)

    p = sub.add_parser("appendix-a", help="bundled two-state value-fitting scenario")
    _add_common(p, model=False)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,0.99")
    p.set_defaults(fn=_cmd_appendix_a)

    p = sub.add_parser("hessian", help="curvature estimates for a chain model")
    _add_common(p, beta=True, steps=True, seeds=True)
    p.set_defaults(fn=_cmd_hessian)

    p = sub.add_parser("multi-agent", help="distributed per-agent trace estimates")
    _add_common(p, beta=True, steps=True, seeds=True)
    p.add_argument("--agent-controls", required=True,
                   help="comma-separated control-space sizes, one per agent")
    p.set_defaults(fn=_cmd_multi_agent)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 1
    except PglabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
