"""Finite POMDPs under memoryless softmax policies.

The environment has n states, M observations emitted with probabilities
nu_y(i), and N controls, each with its own transition matrix p_ij(u). A
policy is a table of logits theta[y, u]; control probabilities are row
softmaxes mu_u(theta, y). Fixing the policy induces a plain parameterized
chain:

    p_ij(theta)      = sum_{y,u} nu_y(i) mu_u(theta, y) p_ij(u)
    grad p_ij(theta) = sum_{y,u} nu_y(i) p_ij(u) grad mu_u(theta, y)

with the policy-table entries, row-major, as the K = M*N chain parameters.
Rewards attach to states, or to (state, control) pairs for the
control-dependent variant; expected_reward_bar folds the latter back to a
state vector under the current policy.

Sampling follows the draw discipline in the rng module: observation (env
stream), control (policy stream), successor state (env stream), three
uniforms per step in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chain import ParamChain, _softmax_rows, check_stochastic, likelihood_ratios
from .errors import DimensionMismatch, RewardKindMismatch, ValidationError
from .rng import RunRng, draw_categorical

__all__ = [
    "PomdpModel",
    "SoftmaxPolicy",
    "PomdpStep",
    "MultiAgentPomdp",
    "induced_chain",
    "sample_step",
    "expected_reward_bar",
    "multi_agent_induced_chain",
]


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Memoryless stochastic policy: logit table theta of shape (M, N)."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=np.float64)
        if th.ndim != 2:
            raise DimensionMismatch(f"policy table must be 2-d, got shape {th.shape}")
        object.__setattr__(self, "theta", th)

    @property
    def num_observations(self) -> int:
        return self.theta.shape[0]

    @property
    def num_controls(self) -> int:
        return self.theta.shape[1]

    @property
    def num_params(self) -> int:
        return self.theta.size

    def prob(self) -> np.ndarray:
        """(M, N) control probabilities, rows summing to 1."""
        return _softmax_rows(self.theta)

    def grad_prob(self) -> np.ndarray:
        """(K, M, N) derivative of mu[y, u] w.r.t. flattened table entries.

        Only parameters in the same observation row are live:
        d mu[y, u] / d theta[y, v] = mu[y, u] (1[u = v] - mu[y, v]), so every
        likelihood ratio is bounded by 1 in magnitude.
        """
        M, N = self.theta.shape
        mu = self.prob()
        G = np.zeros((M * N, M, N))
        for y in range(M):
            m = mu[y]
            G[y * N : (y + 1) * N, y, :] = np.diag(m) - np.outer(m, m)
        return G

    def hess_prob(self) -> np.ndarray:
        """(K, K, M, N) second derivatives of the control probabilities."""
        M, N = self.theta.shape
        mu = self.prob()
        H = np.zeros((M * N, M * N, M, N))
        eye = np.eye(N)
        for y in range(M):
            m = mu[y]
            a = eye - m[None, :]
            blk = np.einsum("ul,um,u->lmu", a, a, m) - np.einsum(
                "l,lm,u->lmu", m, eye - m[None, :], m
            )
            H[y * N : (y + 1) * N, y * N : (y + 1) * N, y, :] = blk
        return H

    def ratios(self) -> np.ndarray:
        """(K, M, N) likelihood ratios grad mu / mu, 0/0 = 0."""
        return likelihood_ratios(self.grad_prob(), self.prob())

    def with_theta(self, theta: np.ndarray) -> "SoftmaxPolicy":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.theta.shape:
            theta = theta.reshape(self.theta.shape)
        return replace(self, theta=theta)


@dataclass(frozen=True)
class PomdpModel:
    """Environment side of a POMDP.

    trans:   (N, n, n) transition matrix per control
    obs:     (n, M) observation probabilities nu_y(i), rows summing to 1
    rewards: (n,) state rewards, or (n, N) indexed [state, control]
    """

    trans: np.ndarray
    obs: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        trans = np.asarray(self.trans, dtype=np.float64)
        obs = np.asarray(self.obs, dtype=np.float64)
        rewards = np.asarray(self.rewards, dtype=np.float64)
        if trans.ndim != 3 or trans.shape[1] != trans.shape[2]:
            raise DimensionMismatch(f"trans must be (N, n, n), got {trans.shape}")
        n = trans.shape[1]
        for u in range(trans.shape[0]):
            check_stochastic(trans[u])
        if obs.shape[0] != n:
            raise DimensionMismatch(f"obs must have {n} rows, got {obs.shape}")
        if np.abs(obs.sum(axis=1) - 1.0).max() > 1e-9 or np.any(obs < -1e-12):
            raise ValidationError("observation rows must be distributions")
        if rewards.ndim == 1:
            if rewards.shape[0] != n:
                raise DimensionMismatch("state rewards must have one entry per state")
        elif rewards.ndim == 2:
            if rewards.shape != (n, trans.shape[0]):
                raise DimensionMismatch(
                    f"control rewards must be (n, N) = ({n}, {trans.shape[0]}), got {rewards.shape}"
                )
        else:
            raise DimensionMismatch("rewards must be a vector or a (state, control) matrix")
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "rewards", rewards)

    @property
    def num_states(self) -> int:
        return self.trans.shape[1]

    @property
    def num_controls(self) -> int:
        return self.trans.shape[0]

    @property
    def num_observations(self) -> int:
        return self.obs.shape[1]

    @property
    def control_dependent_rewards(self) -> bool:
        return self.rewards.ndim == 2

    def state_rewards(self) -> np.ndarray:
        if self.control_dependent_rewards:
            raise RewardKindMismatch("model carries control-dependent rewards")
        return self.rewards


@dataclass(frozen=True)
class PomdpStep:
    """One sampled transition record."""

    state: int
    observation: int
    control: int
    next_state: int
    reward: float


def induced_chain(model: PomdpModel, policy: SoftmaxPolicy) -> ParamChain:
    """Chain over environment states obtained by integrating out y and u.

    The chain's parameter vector is the flattened policy table. For models
    with control-dependent rewards the chain carries the expected per-state
    reward under the construction-time policy as a fixed snapshot (it does
    not track theta); state-reward models pass their vector through.
    """
    if policy.num_observations != model.num_observations:
        raise DimensionMismatch(
            f"policy has {policy.num_observations} observation rows, model emits "
            f"{model.num_observations}"
        )
    if policy.num_controls != model.num_controls:
        raise DimensionMismatch(
            f"policy has {policy.num_controls} controls, model defines {model.num_controls}"
        )
    obs, trans = model.obs, model.trans
    M, N = policy.theta.shape

    def transition(flat: np.ndarray) -> np.ndarray:
        mu = _softmax_rows(flat.reshape(M, N))
        return np.einsum("iy,yu,uij->ij", obs, mu, trans)

    def grad(flat: np.ndarray) -> np.ndarray:
        gmu = SoftmaxPolicy(flat.reshape(M, N)).grad_prob()
        return np.einsum("iy,kyu,uij->kij", obs, gmu, trans)

    def hess(flat: np.ndarray) -> np.ndarray:
        hmu = SoftmaxPolicy(flat.reshape(M, N)).hess_prob()
        return np.einsum("iy,klyu,uij->klij", obs, hmu, trans)

    rewards = (
        expected_reward_bar(model, policy)
        if model.control_dependent_rewards
        else model.rewards
    )
    return ParamChain(
        theta=policy.theta.ravel(),
        rewards=rewards,
        transition_fn=transition,
        grad_fn=grad,
        hess_fn=hess,
        reward_bound=float(np.abs(rewards).max()),
        ratio_bound=1.0,
    )


def expected_reward_bar(model: PomdpModel, policy: SoftmaxPolicy) -> np.ndarray:
    """Per-state expectation of r(u, i) over the policy's control choice."""
    if not model.control_dependent_rewards:
        raise RewardKindMismatch("model carries state rewards; nothing to average")
    mu = policy.prob()
    return np.einsum("iy,yu,iu->i", model.obs, mu, model.rewards)


def sample_step(
    model: PomdpModel, policy: SoftmaxPolicy, state: int, rng: RunRng
) -> PomdpStep:
    """Draw one (y, u, next) triple; consumes exactly 3 uniforms in that order.

    The recorded reward is r(next) for state-reward models and r(u, state)
    for control-dependent ones: the control is paid where it was chosen.
    """
    obs_row = model.obs[state]
    y = draw_categorical(obs_row, np.cumsum(obs_row), rng.env)
    mu = policy.prob()[y]
    u = draw_categorical(mu, np.cumsum(mu), rng.policy)
    row = model.trans[u, state]
    nxt = draw_categorical(row, np.cumsum(row), rng.env)
    if model.control_dependent_rewards:
        reward = float(model.rewards[state, u])
    else:
        reward = float(model.rewards[nxt])
    return PomdpStep(state=state, observation=y, control=u, next_state=nxt, reward=reward)


@dataclass(frozen=True)
class MultiAgentPomdp:
    """Shared environment driven by the concatenation of per-agent controls.

    trans is indexed by the joint control (row-major over agent_controls, so
    joint = u1 * N2 * ... * Na + ... + ua). Each agent receives its own
    observation draw from its own (n, M_i) matrix; everyone sees the shared
    state reward.
    """

    trans: np.ndarray
    obs: tuple[np.ndarray, ...]
    agent_controls: tuple[int, ...]
    rewards: np.ndarray

    def __post_init__(self):
        trans = np.asarray(self.trans, dtype=np.float64)
        rewards = np.asarray(self.rewards, dtype=np.float64).ravel()
        obs = tuple(np.asarray(o, dtype=np.float64) for o in self.obs)
        joint = int(np.prod(self.agent_controls))
        if trans.shape[0] != joint:
            raise DimensionMismatch(
                f"trans has {trans.shape[0]} joint controls, agents imply {joint}"
            )
        n = trans.shape[1]
        for o in obs:
            if o.shape[0] != n or np.abs(o.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValidationError("per-agent observation rows must be distributions")
        if rewards.shape[0] != n:
            raise DimensionMismatch("rewards must have one entry per state")
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "agent_controls", tuple(int(c) for c in self.agent_controls))

    @property
    def num_states(self) -> int:
        return self.trans.shape[1]

    @property
    def num_agents(self) -> int:
        return len(self.agent_controls)

    def joint_index(self, controls) -> int:
        return int(np.ravel_multi_index(tuple(controls), self.agent_controls))


def multi_agent_induced_chain(
    env: MultiAgentPomdp, policies: tuple[SoftmaxPolicy, ...]
) -> ParamChain:
    """Induced chain over states with the concatenated policy tables as parameters.

    Enumerates the joint observation/control product spaces, so it is meant
    for the small models used in validation, not large systems.
    """
    if len(policies) != env.num_agents:
        raise DimensionMismatch(
            f"{len(policies)} policies supplied for {env.num_agents} agents"
        )
    for o, p in zip(env.obs, policies):
        if p.num_observations != o.shape[1]:
            raise DimensionMismatch("policy rows must match the agent's observations")
    sizes = [p.num_params for p in policies]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    K = int(offsets[-1])
    n = env.num_states
    shapes = [p.theta.shape for p in policies]

    def split(flat: np.ndarray):
        return [
            flat[offsets[a] : offsets[a + 1]].reshape(shapes[a])
            for a in range(len(policies))
        ]

    def transition(flat: np.ndarray) -> np.ndarray:
        mus = [_softmax_rows(t) for t in split(flat)]
        P = np.zeros((n, n))
        for i in range(n):
            # joint control distribution from state i, agents independent
            dist = np.ones(1)
            for a, mu in enumerate(mus):
                agent_u = env.obs[a][i] @ mu  # marginal over this agent's controls
                dist = np.outer(dist, agent_u).ravel()
            P[i] = dist @ env.trans[:, i, :]
        return P

    def grad(flat: np.ndarray) -> np.ndarray:
        tables = split(flat)
        mus = [_softmax_rows(t) for t in tables]
        grads = [SoftmaxPolicy(t).grad_prob() for t in tables]
        G = np.zeros((K, n, n))
        for i in range(n):
            for a in range(len(policies)):
                # gradient of agent a's marginal, other agents integrated out
                gm = np.einsum("y,kyu->ku", env.obs[a][i], grads[a])
                dist = np.ones((sizes[a], 1))
                for b, mu in enumerate(mus):
                    if b == a:
                        block = gm
                    else:
                        block = np.tile(env.obs[b][i] @ mu, (sizes[a], 1))
                    dist = np.einsum("kx,ky->kxy", dist, block).reshape(sizes[a], -1)
                G[offsets[a] : offsets[a + 1], i, :] = dist @ env.trans[:, i, :]
        return G

    flat0 = np.concatenate([p.theta.ravel() for p in policies])
    return ParamChain(
        theta=flat0,
        rewards=env.rewards,
        transition_fn=transition,
        grad_fn=grad,
        hess_fn=None,
        reward_bound=float(np.abs(env.rewards).max()),
        ratio_bound=1.0,
    )
