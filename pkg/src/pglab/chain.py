"""Parameterized finite Markov chains and exact performance gradients.

A chain is a family of row-stochastic matrices P(theta) on n states together
with a state reward vector r. The quantities computed here:

    pi' P = pi',  sum(pi) = 1          stationary distribution
    eta = pi' r                        average reward
    (I - beta P) J = r                 discounted value vector, 0 <= beta < 1
    grad pi' = pi' grad P [I - P + e pi']^{-1}
    grad eta = pi' grad P [I - P + e pi']^{-1} r
    grad_beta eta = pi' grad P J_beta  (the discounted approximation)
    grad J_beta = beta (I - beta P)^{-1} grad P J_beta

`grad P` collects the K partial-derivative matrices of the entries of P with
respect to the parameter vector. All solves are dense float64: one LU
factorization of I - P + e pi' serves the K right-hand sides of grad pi plus
the single solve behind grad eta; no inverse is ever formed explicitly.

Likelihood ratios grad p_ij / p_ij use the convention 0/0 = 0, and a zero
transition probability with a nonzero derivative is rejected at validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    InvalidDiscount,
    MissingSecondDerivatives,
    NonUniqueStationary,
    SingularSystem,
    ValidationError,
)

__all__ = [
    "ParamChain",
    "check_stochastic",
    "likelihood_ratios",
    "stationary_distribution",
    "average_reward",
    "discounted_value",
    "grad_pi",
    "exact_grad_eta",
    "grad_beta_eta",
    "grad_j_beta",
    "make_softmax_table_chain",
    "make_constant_chain",
]

# Numerical gates, shared with the test suite.
ROW_SUM_TOL = 1e-9
STATIONARY_RANK_TOL = 1e-9
STATIONARY_RESIDUAL_TOL = 1e-10
GRAD_ROW_SUM_TOL = 1e-10


def check_stochastic(P: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a row-stochastic matrix: square, entries in [0, 1], rows sum to 1."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"transition matrix must be square, got {P.shape}")
    if np.any(P < -tol) or np.any(P > 1 + tol):
        raise ValidationError("transition entries outside [0, 1]")
    rs = P.sum(axis=1)
    bad = np.abs(rs - 1.0).max()
    if bad > tol:
        raise ValidationError(f"row sums deviate from 1 by {bad:.3e} (tol {tol:.1e})")
    return P


def likelihood_ratios(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with 0/0 = 0; den broadcasts along leading axes of num."""
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape), dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class ParamChain:
    """Differentiable family of transition matrices plus a fixed reward vector.

    transition_fn(theta) returns the (n, n) row-stochastic matrix, grad_fn the
    (K, n, n) stack of entrywise parameter derivatives, and hess_fn (optional)
    the (K, K, n, n) second derivatives. reward_bound and ratio_bound are the
    declared constants R and B: |r(i)| <= R and |grad p / p| <= B.
    """

    theta: np.ndarray
    rewards: np.ndarray
    transition_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    hess_fn: Callable[[np.ndarray], np.ndarray] | None = None
    reward_bound: float | None = None
    ratio_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).ravel())
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64).ravel())

    @property
    def n(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_params(self) -> int:
        return self.theta.shape[0]

    def transition(self) -> np.ndarray:
        return self.transition_fn(self.theta)

    def grad_transition(self) -> np.ndarray:
        return self.grad_fn(self.theta)

    def hess_transition(self) -> np.ndarray:
        if self.hess_fn is None:
            raise MissingSecondDerivatives(
                "chain does not provide analytic second derivatives"
            )
        return self.hess_fn(self.theta)

    def ratios(self) -> np.ndarray:
        """(K, n, n) likelihood-ratio tensor grad p / p with 0/0 = 0."""
        return likelihood_ratios(self.grad_transition(), self.transition())

    def hess_ratios(self) -> np.ndarray:
        """(K, K, n, n) tensor of second derivatives over probabilities."""
        return likelihood_ratios(self.hess_transition(), self.transition())

    def with_theta(self, theta: np.ndarray) -> "ParamChain":
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.shape != self.theta.shape:
            raise DimensionMismatch(
                f"theta has {theta.shape[0]} entries, chain expects {self.theta.shape[0]}"
            )
        return replace(self, theta=theta)

    def validate(self) -> None:
        """Check the structural invariants at the current parameter point."""
        P = check_stochastic(self.transition())
        if P.shape[0] != self.n:
            raise DimensionMismatch(
                f"transition is {P.shape[0]}x{P.shape[0]} but rewards has {self.n} entries"
            )
        G = np.asarray(self.grad_transition(), dtype=np.float64)
        if G.shape != (self.num_params, self.n, self.n):
            raise DimensionMismatch(
                f"grad stack has shape {G.shape}, expected {(self.num_params, self.n, self.n)}"
            )
        rowsums = np.abs(G.sum(axis=2)).max() if G.size else 0.0
        if rowsums > GRAD_ROW_SUM_TOL:
            raise ValidationError(
                f"derivative rows must sum to 0, worst deviation {rowsums:.3e}"
            )
        if np.any((P == 0.0) & (G != 0.0)):
            raise ValidationError("nonzero derivative on a zero-probability transition")
        if self.reward_bound is not None and np.abs(self.rewards).max() > self.reward_bound + 1e-12:
            raise ValidationError("reward exceeds declared bound R")
        if self.ratio_bound is not None and G.size:
            worst = np.abs(likelihood_ratios(G, P)).max()
            if worst > self.ratio_bound + 1e-9:
                raise ValidationError(
                    f"likelihood ratio {worst:.6f} exceeds declared bound {self.ratio_bound}"
                )


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix.

    Solves the augmented least-squares system {pi'(I - P) = 0, sum(pi) = 1}
    by QR/SVD. A smallest singular value below 1e-9 means the balance
    equations do not pin down pi (more than one recurrent class) and raises
    NonUniqueStationary. The result is validated: entries positive, sum 1,
    residual ||pi'P - pi'||_inf below 1e-10.
    """
    P = check_stochastic(P)
    n = P.shape[0]
    A = np.vstack([(np.eye(n) - P).T, np.ones((1, n))])
    sigma = np.linalg.svd(A, compute_uv=False)
    if sigma[-1] < STATIONARY_RANK_TOL:
        raise NonUniqueStationary(
            f"smallest singular value {sigma[-1]:.3e} of the balance system"
        )
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = pi / pi.sum()
    if np.any(pi <= 0.0):
        raise ValidationError("stationary distribution has nonpositive entries")
    resid = np.abs(pi @ P - pi).max()
    if resid > STATIONARY_RESIDUAL_TOL:
        raise SingularSystem(f"stationary residual {resid:.3e}")
    return pi


def average_reward(P: np.ndarray, rewards: np.ndarray) -> float:
    """eta = pi' r under the unique stationary distribution of P."""
    rewards = np.asarray(rewards, dtype=np.float64)
    return float(stationary_distribution(P) @ rewards)


def discounted_value(P: np.ndarray, rewards: np.ndarray, beta: float) -> np.ndarray:
    """Value vector J solving (I - beta P) J = r for 0 <= beta < 1."""
    if not (0.0 <= beta < 1.0):
        raise InvalidDiscount(f"discount {beta!r} outside [0, 1)")
    P = check_stochastic(P)
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (P.shape[0],):
        raise DimensionMismatch(
            f"rewards shape {rewards.shape} does not match {P.shape[0]} states"
        )
    J = np.linalg.solve(np.eye(P.shape[0]) - beta * P, rewards)
    if not np.all(np.isfinite(J)):
        raise SingularSystem("discounted value solve produced non-finite entries")
    resid = np.abs(rewards + beta * (P @ J) - J).max()
    if resid > 1e-9 * max(1.0, np.abs(J).max()):
        raise SingularSystem(f"discounted value residual {resid:.3e}")
    return J


def _fundamental_factor(P: np.ndarray, pi: np.ndarray):
    """LU factorization of I - P + e pi' (shared by the gradient solves)."""
    n = P.shape[0]
    A = np.eye(n) - P + np.outer(np.ones(n), pi)
    try:
        lu = scipy.linalg.lu_factor(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy rarely raises here
        raise SingularSystem(str(exc)) from exc
    return lu


def _weighted_grad_rows(pi: np.ndarray, G: np.ndarray) -> np.ndarray:
    """(K, n) matrix with row k equal to pi' (dP/dtheta_k)."""
    return np.einsum("i,kij->kj", pi, G)


def grad_pi(chain: ParamChain) -> np.ndarray:
    """Exact (K, n) parameter gradient of the stationary distribution.

    Row k solves y' (I - P + e pi') = pi' dP_k, all K systems sharing one LU
    factorization (transposed solves). Rows sum to zero since sum(pi) = 1.
    """
    P = check_stochastic(chain.transition())
    pi = stationary_distribution(P)
    G = chain.grad_transition()
    if G.shape[0] == 0:
        return np.zeros((0, P.shape[0]))
    lu = _fundamental_factor(P, pi)
    W = _weighted_grad_rows(pi, G)
    out = scipy.linalg.lu_solve(lu, W.T, trans=1).T
    if not np.all(np.isfinite(out)):
        raise SingularSystem("gradient solve produced non-finite entries")
    return out


def exact_grad_eta(chain: ParamChain) -> np.ndarray:
    """Exact parameter gradient of the average reward, as a K-vector."""
    P = check_stochastic(chain.transition())
    pi = stationary_distribution(P)
    G = chain.grad_transition()
    if G.shape[0] == 0:
        return np.zeros(0)
    lu = _fundamental_factor(P, pi)
    v = scipy.linalg.lu_solve(lu, chain.rewards)
    if not np.all(np.isfinite(v)):
        raise SingularSystem("gradient solve produced non-finite entries")
    return _weighted_grad_rows(pi, G) @ v


def grad_beta_eta(chain: ParamChain, beta: float) -> np.ndarray:
    """Discounted approximation pi' grad P J_beta of the average-reward gradient."""
    P = check_stochastic(chain.transition())
    pi = stationary_distribution(P)
    J = discounted_value(P, chain.rewards, beta)
    return _weighted_grad_rows(pi, chain.grad_transition()) @ J


def grad_j_beta(chain: ParamChain, beta: float) -> np.ndarray:
    """Exact (K, n) parameter gradient of the discounted value vector."""
    P = check_stochastic(chain.transition())
    J = discounted_value(P, chain.rewards, beta)
    G = chain.grad_transition()
    if G.shape[0] == 0:
        return np.zeros((0, P.shape[0]))
    A = np.eye(P.shape[0]) - beta * P
    rhs = beta * np.einsum("kij,j->ki", G, J)
    out = np.linalg.solve(A, rhs.T).T
    if not np.all(np.isfinite(out)):
        raise SingularSystem("value-gradient solve produced non-finite entries")
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    Z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return Z / Z.sum(axis=1, keepdims=True)


def make_softmax_table_chain(theta: np.ndarray, rewards: np.ndarray) -> ParamChain:
    """Chain with one free logit per transition: p_ij = exp(t_ij) / sum_l exp(t_il).

    theta is the flattened (n, n) logit table, row-major, so parameter
    k = i*n + l belongs to row i. Within a row,

        d p_ij / d t_il = p_ij (1[j = l] - p_il),

    giving likelihood ratios 1 - p_ij on the diagonal parameter and -p_il on
    the others: the declared ratio bound is B = 1. Second derivatives are
    analytic, so the family supports curvature estimation.
    """
    rewards = np.asarray(rewards, dtype=np.float64).ravel()
    n = rewards.shape[0]
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != n * n:
        raise DimensionMismatch(
            f"need {n * n} logits for {n} states, got {theta.shape[0]}"
        )

    def transition(th: np.ndarray) -> np.ndarray:
        return _softmax_rows(th.reshape(n, n))

    def grad(th: np.ndarray) -> np.ndarray:
        P = transition(th)
        G = np.zeros((n * n, n, n))
        for i in range(n):
            p = P[i]
            # block[l, j] = dp_ij / dt_il
            G[i * n : (i + 1) * n, i, :] = np.diag(p) - np.outer(p, p)
        return G

    def hess(th: np.ndarray) -> np.ndarray:
        P = transition(th)
        H = np.zeros((n * n, n * n, n, n))
        eye = np.eye(n)
        for i in range(n):
            p = P[i]
            # d2 p_ij / dt_il dt_im = p_j [(d_jl - p_l)(d_jm - p_m) - p_l (d_lm - p_m)]
            a = eye - p[None, :]  # a[j, l] = d_jl - p_l
            blk = np.einsum("jl,jm,j->lmj", a, a, p) - np.einsum(
                "l,lm,j->lmj", p, eye - p[None, :], p
            )
            H[i * n : (i + 1) * n, i * n : (i + 1) * n, i, :] = blk
        return H

    return ParamChain(
        theta=theta,
        rewards=rewards,
        transition_fn=transition,
        grad_fn=grad,
        hess_fn=hess,
        reward_bound=float(np.abs(rewards).max()) if n else 0.0,
        ratio_bound=1.0,
    )


def make_constant_chain(P, rewards, theta=None) -> ParamChain:
    """Chain whose transition matrix ignores the parameter: grad P is zero.

    theta, when given, supplies parameter coordinates that other pieces (a
    parameterized reward, say) may differentiate against; the chain itself
    contributes zero likelihood ratios for them.
    """
    P = check_stochastic(np.asarray(P, dtype=float))
    n = P.shape[0]
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    K = theta.shape[0]

    def transition(th: np.ndarray) -> np.ndarray:
        return P

    def grad(th: np.ndarray) -> np.ndarray:
        return np.zeros((K, n, n))

    def hess(th: np.ndarray) -> np.ndarray:
        return np.zeros((K, K, n, n))

    rewards = np.asarray(rewards, dtype=float)
    return ParamChain(
        theta=theta,
        rewards=rewards,
        transition_fn=transition,
        grad_fn=grad,
        hess_fn=hess,
        reward_bound=float(np.abs(rewards).max()) if rewards.size else 0.0,
        ratio_bound=0.0,
    )
