"""Shared randomized and hand-built fixtures for the test modules."""

from __future__ import annotations

import numpy as np

from pglab.chain import ParamChain, make_softmax_table_chain
from pglab.pomdp import PomdpModel, SoftmaxPolicy


def random_table_chain(n: int, seed: int, *, logit_scale: float = 0.8,
                       reward_scale: float = 1.0) -> ParamChain:
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=logit_scale, size=n * n)
    rewards = rng.uniform(-reward_scale, reward_scale, size=n)
    return make_softmax_table_chain(theta, rewards)


def fast_mixing_chain(seed: int = 0, n: int = 3) -> ParamChain:
    # small logits keep rows near uniform, so the subdominant eigenvalue
    # stays well inside the unit circle
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=0.25, size=n * n)
    rewards = rng.uniform(-1.0, 1.0, size=n)
    return make_softmax_table_chain(theta, rewards)


def random_stochastic(n: int, rng: np.random.Generator, conc: float = 2.0) -> np.ndarray:
    return rng.dirichlet(np.full(n, conc), size=n)


def random_pomdp(n: int, m: int, k: int, seed: int, *,
                 control_rewards: bool = False) -> tuple[PomdpModel, SoftmaxPolicy]:
    rng = np.random.default_rng(seed)
    trans = np.stack([random_stochastic(n, rng) for _ in range(k)])
    obs = rng.dirichlet(np.full(m, 2.0), size=n)
    if control_rewards:
        rewards = rng.uniform(-1.0, 1.0, size=(n, k))
    else:
        rewards = rng.uniform(-1.0, 1.0, size=n)
    model = PomdpModel(trans=trans, obs=obs, rewards=rewards)
    policy = SoftmaxPolicy(theta=rng.normal(scale=0.5, size=(m, k)))
    return model, policy


def as_full_observation_pomdp(chain: ParamChain) -> tuple[PomdpModel, SoftmaxPolicy]:
    """Dress a table chain as a POMDP whose controls pick the successor.

    Controls coincide with states, each control u jumps to state u surely,
    observations reveal the state exactly, and the policy table reuses the
    chain's logit table. The induced chain is then the original chain and
    the policy ratios equal the chain ratios row for row.
    """
    n = chain.n
    trans = np.zeros((n, n, n))
    for u in range(n):
        trans[u, :, u] = 1.0
    obs = np.eye(n)
    model = PomdpModel(trans=trans, obs=obs, rewards=chain.rewards.copy())
    policy = SoftmaxPolicy(theta=chain.theta.reshape(n, n).copy())
    return model, policy


def drift_pomdp() -> tuple[PomdpModel, SoftmaxPolicy]:
    """Two-observation POMDP whose controls pull the state in opposite
    directions, so the policy parameters really move the long-run reward."""
    trans = np.array(
        [
            [[0.7, 0.2, 0.1], [0.6, 0.3, 0.1], [0.5, 0.3, 0.2]],
            [[0.1, 0.2, 0.7], [0.1, 0.3, 0.6], [0.2, 0.2, 0.6]],
        ]
    )
    obs = np.array([[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]])
    rewards = np.array([0.0, 0.5, 1.0])
    model = PomdpModel(trans=trans, obs=obs, rewards=rewards)
    policy = SoftmaxPolicy(theta=np.array([[0.3, -0.2], [-0.4, 0.5]]))
    return model, policy
