"""Single-path gradient estimators driven by eligibility traces.

Each runner simulates one trajectory under a fixed parameter, accumulates a
discounted (or windowed, or regenerative) trace of likelihood ratios, and
averages trace-weighted rewards online. The expensive loops live in
_kernels; the wrappers here gather per-step ratio rows with numpy indexing
and hand them over, so every algorithm pair that must agree exactly runs the
same compiled update.

Randomness contract (see rng.RunRng): the environment stream drives the
initial state, observations and state transitions; the policy stream drives
the parameterized draw (the control for POMDPs, the next state for chains).
Uniforms are consumed in a fixed documented order, so runs are reproducible
across machines and batched pre-draws match sequential draws.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import ParamChain, check_stochastic
from .errors import (
    CycleTimeout,
    DimensionMismatch,
    InvalidDiscount,
    MissingSecondDerivatives,
    RewardKindMismatch,
    UnboundedRewardGradient,
    ValidationError,
    WindowTooLarge,
)
from .pomdp import MultiAgentPomdp, PomdpModel, SoftmaxPolicy
from .rng import RunRng, draw_categorical

__all__ = [
    "GradientEstimate",
    "ParamReward",
    "vaps_reward",
    "mcg_run",
    "gpomdp_run",
    "reinforce_regenerative_run",
    "truncated_trace_run",
    "control_reward_run",
    "param_reward_run",
    "hessian_run",
    "multi_agent_run",
    "simulate_chain_states",
    "simulate_pomdp_path",
]

REGEN_REWARD_KINDS = ("cycle_sum", "neg_length", "discounted")


@dataclass(frozen=True)
class GradientEstimate:
    """Outcome of one estimator run.

    delta is the gradient estimate, shape (K,), or (K, K) for the curvature
    estimator. trace_mean and max_abs_trace expose the running trace mean and
    the largest |z| coordinate seen, used by the baseline-shift and
    trace-bound checks.
    """

    delta: np.ndarray
    algorithm: str
    steps: int
    seed: int
    beta: float | None = None
    window: int | None = None
    baseline: float = 0.0
    cycles: int | None = None
    trace_mean: np.ndarray | None = None
    max_abs_trace: float | None = None


@dataclass(frozen=True)
class ParamReward:
    """Reward that depends on the parameter vector itself.

    values: (n,) for r(theta, X_t) or (n, n) for r(theta, X_{t-1}, X_t),
    indexed [previous, current]. grads: the matching (K, n) or (K, n, n)
    gradient tensors at the current theta. grad_bound, when given, is the
    promised sup bound on |d r / d theta_k|.
    """

    values: np.ndarray
    grads: np.ndarray
    grad_bound: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        grads = np.asarray(self.grads, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grads", grads)
        if values.ndim not in (1, 2):
            raise ValidationError("reward values must have shape (n,) or (n, n)")
        if values.ndim == 2 and values.shape[0] != values.shape[1]:
            raise ValidationError("pairwise reward values must be square")
        if grads.shape[1:] != values.shape:
            raise DimensionMismatch(
                f"reward grads {grads.shape} do not extend values {values.shape}"
            )
        if self.grad_bound is not None:
            if not np.isfinite(grads).all() or np.abs(grads).max(initial=0.0) > self.grad_bound + 1e-9:
                raise UnboundedRewardGradient(
                    "reward gradient exceeds its declared bound"
                )

    @property
    def pairwise(self) -> bool:
        return self.values.ndim == 2

    @property
    def num_params(self) -> int:
        return self.grads.shape[0]


def vaps_reward(state_rewards, features, w: float, alpha: float) -> ParamReward:
    """Squared temporal-difference error as a parameterized reward.

    For a linear value estimate w * phi the per-transition reward is
    -0.5 * (r(X_t) + alpha w phi(X_t) - w phi(X_{t-1}))**2, a pairwise reward
    in the single parameter w. Minimizing its average drives w toward the
    best fixed point the sampled residual allows.
    """
    if not 0.0 <= alpha < 1.0:
        raise InvalidDiscount(f"alpha must lie in [0, 1), got {alpha}")
    r = np.asarray(state_rewards, dtype=float)
    phi = np.asarray(features, dtype=float)
    if r.shape != phi.shape or r.ndim != 1:
        raise DimensionMismatch("state_rewards and features must be equal-length vectors")
    resid = r[None, :] + alpha * w * phi[None, :] - w * phi[:, None]
    dresid = alpha * phi[None, :] - phi[:, None] + np.zeros_like(resid)
    values = -0.5 * resid**2
    grads = (-resid * dresid)[None, :, :]
    return ParamReward(values=values, grads=grads)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta < 1.0:
        raise InvalidDiscount(f"discount must lie in [0, 1), got {beta}")
    return beta


def _check_steps(steps: int) -> int:
    steps = int(steps)
    if steps < 1:
        raise ValidationError(f"steps must be positive, got {steps}")
    return steps


def _row_cdf(p):
    return np.cumsum(p, axis=-1)


def _gather_rows(tensor, *idx):
    """tensor[:, idx...] transposed to (T, K), contiguous for the kernels."""
    return np.ascontiguousarray(tensor[(slice(None), *idx)].T)


def simulate_chain_states(chain: ParamChain, steps: int, seed: int,
                          initial_state: int | None = None, burn_in: int = 0):
    """Sample X_0..X_{burn_in+steps} and return the post-burn-in slice.

    Draw budget: one environment uniform when the initial state is not
    pinned, then one policy uniform per transition.
    """
    steps = _check_steps(steps)
    P = chain.transition()
    check_stochastic(P)
    rng = RunRng.from_seed(seed)
    x0 = rng.initial_state(chain.n, initial_state)
    u = rng.policy.random(burn_in + steps)
    states, ok = _kernels.walk_chain(_row_cdf(P), x0, u)
    if not ok:
        raise _zero_prob()
    return states[burn_in:]


def simulate_pomdp_path(model: PomdpModel, policy: SoftmaxPolicy, steps: int,
                        seed: int, initial_state: int | None = None,
                        burn_in: int = 0):
    """Sample a POMDP path; returns (states, observations, controls).

    Draw budget: one environment uniform for the initial state when not
    pinned, then per step an environment pair (observation, next state) and
    one policy uniform (control). The environment pairs are pre-drawn as a
    (T, 2) block, which consumes the stream in the same order as sequential
    per-step draws.
    """
    steps = _check_steps(steps)
    _check_policy_dims(model, policy)
    mu = policy.prob()
    rng = RunRng.from_seed(seed)
    x0 = rng.initial_state(model.num_states, initial_state)
    total = burn_in + steps
    env_u = rng.env.random((total, 2))
    pol_u = rng.policy.random(total)
    states, ys, us, ok = _kernels.walk_pomdp(
        _row_cdf(model.obs), _row_cdf(mu), _row_cdf(model.trans), x0, env_u, pol_u
    )
    if not ok:
        raise _zero_prob()
    return states[burn_in:], ys[burn_in:], us[burn_in:]


def _zero_prob():
    from .errors import ZeroProbabilityTransition

    return ZeroProbabilityTransition(
        "a zero-probability category was sampled; model or rng state is corrupt"
    )


def _check_policy_dims(model: PomdpModel, policy: SoftmaxPolicy):
    if policy.num_observations != model.num_observations:
        raise DimensionMismatch(
            f"policy rows {policy.num_observations} != observations {model.num_observations}"
        )
    if policy.num_controls != model.num_controls:
        raise DimensionMismatch(
            f"policy columns {policy.num_controls} != controls {model.num_controls}"
        )


def mcg_run(chain: ParamChain, beta: float, steps: int, seed: int, *,
            baseline: float = 0.0, initial_state: int | None = None,
            burn_in: int = 0) -> GradientEstimate:
    """Discounted-trace estimate of the discount-weighted gradient.

    One trace coordinate per parameter: z <- beta z + grad p / p on each
    transition, estimate <- running mean of (r(X_{t+1}) - baseline) z. For
    long runs the estimate approaches beta * (d/d beta) of the discounted
    performance gradient; as beta -> 1 that approaches the average-reward
    gradient.
    """
    beta = _check_beta(beta)
    states = simulate_chain_states(chain, steps, seed, initial_state, burn_in)
    g = _gather_rows(chain.ratios(), states[:-1], states[1:])
    rew = chain.rewards[states[1:]]
    delta, z, zbar, max_abs = _kernels.update_discounted(g, rew, beta, float(baseline))
    return GradientEstimate(
        delta=delta, algorithm="mcg", steps=len(states) - 1, seed=seed,
        beta=beta, baseline=float(baseline), trace_mean=zbar, max_abs_trace=max_abs,
    )


def gpomdp_run(model: PomdpModel, policy: SoftmaxPolicy, beta: float,
               steps: int, seed: int, *, baseline: float = 0.0,
               initial_state: int | None = None,
               burn_in: int = 0) -> GradientEstimate:
    """Discounted-trace estimate for a POMDP under a softmax table policy.

    Identical update to mcg_run with control likelihood ratios
    grad mu / mu in place of transition ratios; rewards are paid on arrival
    states. Shares the compiled update loop with mcg_run.
    """
    beta = _check_beta(beta)
    rewards = model.state_rewards()
    states, ys, us = simulate_pomdp_path(model, policy, steps, seed,
                                         initial_state, burn_in)
    g = _gather_rows(policy.ratios(), ys, us)
    rew = rewards[states[1:]]
    delta, z, zbar, max_abs = _kernels.update_discounted(g, rew, beta, float(baseline))
    return GradientEstimate(
        delta=delta, algorithm="gpomdp", steps=len(us), seed=seed,
        beta=beta, baseline=float(baseline), trace_mean=zbar, max_abs_trace=max_abs,
    )


def truncated_trace_run(chain: ParamChain, window: int, steps: int, seed: int,
                        *, initial_state: int | None = None) -> GradientEstimate:
    """Sliding-window trace estimate of the average-reward gradient.

    z_t sums the ratio rows of the last `window` transitions; the estimate
    averages r(X_t) z_t over t = window..steps. Bias decays with the chain's
    mixing time as the window grows; variance grows linearly with it.
    """
    steps = _check_steps(steps)
    window = int(window)
    if not 1 <= window < steps:
        raise WindowTooLarge(
            f"window must satisfy 1 <= window < steps, got {window} vs {steps}"
        )
    states = simulate_chain_states(chain, steps, seed, initial_state)
    g = _gather_rows(chain.ratios(), states[:-1], states[1:])
    rew_states = chain.rewards[states]
    delta, z = _kernels.update_truncated(g, rew_states, window)
    return GradientEstimate(
        delta=delta, algorithm="truncated", steps=steps, seed=seed, window=window,
    )


def reinforce_regenerative_run(chain: ParamChain, recurrent_state: int,
                               cycles: int, seed: int, *,
                               reward_kind: str = "cycle_sum",
                               alpha: float | None = None,
                               tail_sum: bool = False,
                               max_cycle_len: int = 1_000_000) -> GradientEstimate:
    """Cycle-based estimate between visits to a recurrent state.

    Starts at the recurrent state and accumulates, per cycle, the full score
    vector z (one ratio row per transition, the cycle-closing one included)
    and a cycle reward f. On each return the product f * z is averaged in;
    the mean over cycles estimates the gradient of the expected cycle reward.

    reward_kind picks f: "cycle_sum" sums r over arrival states, so the
    estimate targets grad of (expected cycle reward sum); "neg_length" pays
    -1 per transition, targeting grad of (-expected recurrence time);
    "discounted" weights arrival s by alpha**s. tail_sum=True computes the
    same estimate in one pass by adding r(X_s) z_s at every arrival, which
    never stores per-step rewards.
    """
    cycles = int(cycles)
    if cycles < 1:
        raise ValidationError(f"cycles must be positive, got {cycles}")
    if reward_kind not in REGEN_REWARD_KINDS:
        raise ValidationError(
            f"reward_kind must be one of {REGEN_REWARD_KINDS}, got {reward_kind!r}"
        )
    if reward_kind == "discounted":
        if alpha is None:
            raise InvalidDiscount("reward_kind 'discounted' needs alpha")
        alpha = _check_beta(alpha)
    P = chain.transition()
    check_stochastic(P)
    cdf = _row_cdf(P)
    ratios = chain.ratios()
    r = chain.rewards
    n, K = chain.n, chain.num_params
    i_star = int(recurrent_state)
    if not 0 <= i_star < n:
        raise ValidationError(f"recurrent_state {i_star} outside 0..{n - 1}")

    rng = RunRng.from_seed(seed)
    total = np.zeros(K)
    done = 0
    transitions = 0
    x = i_star
    z = np.zeros(K)
    f = 0.0
    tail = np.zeros(K)
    s = 0
    while done < cycles:
        j = draw_categorical(P[x], cdf[x], rng.policy)
        z += ratios[:, x, j]
        s += 1
        transitions += 1
        if reward_kind == "cycle_sum":
            rew = r[j]
        elif reward_kind == "neg_length":
            rew = -1.0
        else:
            rew = alpha**s * r[j]
        f += rew
        if tail_sum:
            tail += rew * z
        x = j
        if x == i_star:
            contribution = tail if tail_sum else f * z
            done += 1
            total += contribution
            z = np.zeros(K)
            f = 0.0
            tail = np.zeros(K)
            s = 0
        elif s >= max_cycle_len:
            raise CycleTimeout(
                f"cycle exceeded {max_cycle_len} transitions without returning"
            )
    return GradientEstimate(
        delta=total / cycles, algorithm="reinforce", steps=transitions,
        seed=seed, cycles=cycles,
    )


def control_reward_run(model: PomdpModel, policy: SoftmaxPolicy, beta: float,
                       steps: int, seed: int, *,
                       initial_state: int | None = None) -> GradientEstimate:
    """Discounted-trace estimate when the reward depends on the chosen control.

    The reward paid at step t+1 is r(U_{t+1}, X_{t+1}), where U_{t+1} is the
    control chosen at the arrival state, so its own ratio row enters the
    product undiscounted: the update averages R_{t+1} (z_{t+1} + g_{t+1}).
    Simulates steps+1 transitions to supply the trailing ratio.
    """
    beta = _check_beta(beta)
    if not model.control_dependent_rewards:
        raise RewardKindMismatch("model rewards do not depend on the control")
    states, ys, us = simulate_pomdp_path(model, policy, steps + 1, seed,
                                         initial_state)
    g = _gather_rows(policy.ratios(), ys, us)
    rew_next = np.ascontiguousarray(
        model.rewards[states[1:-1], us[1:]]
    )
    delta, z = _kernels.update_fresh_ratio(g, rew_next, beta)
    return GradientEstimate(
        delta=delta, algorithm="control_reward", steps=steps, seed=seed, beta=beta,
    )


def param_reward_run(chain: ParamChain, reward: ParamReward, beta: float,
                     steps: int, seed: int, *,
                     initial_state: int | None = None) -> GradientEstimate:
    """Discounted-trace estimate when the reward carries its own gradient.

    Adds the reward's direct gradient to each trace-weighted term:
    delta averages r z_{t+1} + grad r. With grads identically zero this is
    exactly the plain discounted-trace update on the same path.
    """
    beta = _check_beta(beta)
    if reward.num_params != chain.num_params:
        raise DimensionMismatch(
            f"reward has {reward.num_params} params, chain has {chain.num_params}"
        )
    if reward.values.shape[-1] != chain.n:
        raise DimensionMismatch(
            f"reward over {reward.values.shape[-1]} states, chain has {chain.n}"
        )
    states = simulate_chain_states(chain, steps, seed, initial_state)
    g = _gather_rows(chain.ratios(), states[:-1], states[1:])
    if reward.pairwise:
        rew = np.ascontiguousarray(reward.values[states[:-1], states[1:]])
        grad_rew = _gather_rows(reward.grads, states[:-1], states[1:])
    else:
        rew = np.ascontiguousarray(reward.values[states[1:]])
        grad_rew = _gather_rows(reward.grads, states[1:])
    delta, z = _kernels.update_param_reward(g, rew, grad_rew, beta)
    return GradientEstimate(
        delta=delta, algorithm="param_reward", steps=int(steps), seed=seed, beta=beta,
    )


def hessian_run(chain: ParamChain, beta: float, steps: int, seed: int, *,
                initial_state: int | None = None) -> GradientEstimate:
    """Matrix-trace estimate of the curvature of the discounted-gradient map.

    Maintains Z <- beta Z + (hess p)/p - (grad p / p)^2 alongside the vector
    trace and averages r (Z + z z'). Requires second derivatives on the
    chain. The estimate is symmetric by construction for every path.
    """
    beta = _check_beta(beta)
    steps = _check_steps(steps)
    if chain.hess_fn is None:
        raise MissingSecondDerivatives(
            "chain provides no second derivatives; hess_fn is required"
        )
    hratios = chain.hess_ratios()
    states = simulate_chain_states(chain, steps, seed, initial_state)
    delta, z, Z = _kernels.update_hessian(
        chain.ratios(), hratios, states, chain.rewards, beta
    )
    return GradientEstimate(
        delta=delta, algorithm="hessian", steps=steps, seed=seed, beta=beta,
    )


def multi_agent_run(env: MultiAgentPomdp, policies, beta: float, steps: int,
                    seed: int, *,
                    initial_state: int | None = None) -> GradientEstimate:
    """Distributed discounted-trace estimate with per-agent traces.

    Each agent observes, draws its own control from its own table, and
    updates its own trace from its own ratios; the concatenated estimate
    equals running the single-agent update per agent on the same path, and
    the per-step draw order (per agent: observation then control, then one
    joint transition) makes the single-agent case coincide exactly with
    gpomdp_run.
    """
    beta = _check_beta(beta)
    steps = _check_steps(steps)
    policies = tuple(policies)
    if len(policies) != env.num_agents:
        raise DimensionMismatch(
            f"{len(policies)} policies for {env.num_agents} agents"
        )
    for a, pol in enumerate(policies):
        if pol.num_observations != env.obs[a].shape[1]:
            raise DimensionMismatch(f"agent {a}: observation table mismatch")
        if pol.num_controls != env.agent_controls[a]:
            raise DimensionMismatch(f"agent {a}: control count mismatch")
    mus = [pol.prob() for pol in policies]
    mu_cdfs = [_row_cdf(m) for m in mus]
    obs_cdfs = [_row_cdf(o) for o in env.obs]
    trans_cdf = _row_cdf(env.trans)
    rng = RunRng.from_seed(seed)
    x = rng.initial_state(env.num_states, initial_state)
    states = np.empty(steps + 1, dtype=np.int64)
    states[0] = x
    ys = np.empty((steps, env.num_agents), dtype=np.int64)
    us = np.empty((steps, env.num_agents), dtype=np.int64)
    for t in range(steps):
        for a in range(env.num_agents):
            y = draw_categorical(env.obs[a][x], obs_cdfs[a][x], rng.env)
            u = draw_categorical(mus[a][y], mu_cdfs[a][y], rng.policy)
            ys[t, a] = y
            us[t, a] = u
        joint = env.joint_index(us[t])
        x = draw_categorical(env.trans[joint, x], trans_cdf[joint, x], rng.env)
        states[t + 1] = x
    rew = env.rewards[states[1:]]
    blocks = [
        _gather_rows(policies[a].ratios(), ys[:, a], us[:, a])
        for a in range(env.num_agents)
    ]
    g = np.ascontiguousarray(np.concatenate(blocks, axis=1))
    delta, z, zbar, max_abs = _kernels.update_discounted(g, rew, beta, 0.0)
    return GradientEstimate(
        delta=delta, algorithm="multi_agent", steps=steps, seed=seed,
        beta=beta, trace_mean=zbar, max_abs_trace=max_abs,
    )
