"""Bias/variance trade-off study for discounted gradient estimators.

Sweeps the discount factor on a randomly drawn softmax chain and reports,
per beta: the angle between the discounted gradient direction and the true
average-reward gradient (bias), and the per-coordinate estimator variance
across independent sample paths (variance). Writes one CSV row per beta.

Run:
    python3 scripts/bias_variance_study.py --n 6 --k 4 --steps 200000 --seeds 20
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np

from pglab.analysis import bias_variance_sweep
from pglab.chain import make_softmax_table_chain


@dataclass(frozen=True)
class StudyConfig:
    n: int
    betas: tuple[float, ...]
    steps: int
    seeds: int
    chain_seed: int
    out: str


def parse_args(argv: list[str]) -> StudyConfig:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=6, help="number of states")
    p.add_argument(
        "--betas",
        type=str,
        default="0.5,0.8,0.9,0.95,0.99,0.999",
        help="comma-separated discount factors",
    )
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--chain-seed", type=int, default=7)
    p.add_argument("--out", type=str, default="bias_variance.csv")
    a = p.parse_args(argv)
    betas = tuple(float(tok) for tok in a.betas.split(",") if tok.strip())
    if not betas:
        p.error("--betas must name at least one value")
    return StudyConfig(a.n, betas, a.steps, a.seeds, a.chain_seed, a.out)


def random_chain(n: int, seed: int):
    # one free logit per (state, successor) pair, so n*n parameters
    rng = np.random.default_rng(seed)
    theta0 = rng.normal(scale=0.7, size=n * n)
    rewards = rng.uniform(-1.0, 1.0, size=n)
    return make_softmax_table_chain(theta0, rewards)


def main(argv: list[str]) -> int:
    cfg = parse_args(argv)
    chain = random_chain(cfg.n, cfg.chain_seed)
    records = bias_variance_sweep(
        chain, cfg.betas, steps=cfg.steps, seeds=range(cfg.seeds)
    )
    with open(cfg.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "bias_angle_deg", "mean_variance", "steps", "seeds"])
        for rec in records:
            w.writerow(
                [
                    f"{rec.beta:.6g}",
                    f"{rec.bias_angle_deg:.6g}",
                    f"{float(np.mean(rec.estimator_variance_per_coordinate)):.6g}",
                    rec.steps,
                    rec.seeds_used,
                ]
            )
    print(f"{'beta':>8} {'angle(deg)':>12} {'var/coord':>12}")
    for rec in records:
        print(
            f"{rec.beta:>8.4g} {rec.bias_angle_deg:>12.4f} "
            f"{float(np.mean(rec.estimator_variance_per_coordinate)):>12.4e}"
        )
    print(f"wrote {cfg.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
