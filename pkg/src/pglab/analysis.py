"""Spectral diagnostics, the discount-bias bound, and study helpers.

The central object is the bias of the discount-weighted gradient
grad_beta_eta as an approximation to the true average-reward gradient: the
angle between them shrinks as the discount approaches 1, at a rate governed
by the chain's subdominant eigenvalue. check_bound certifies a computable
upper bound on the normalized misalignment; bias_variance_sweep measures the
other side of the trade, the estimator variance growth, empirically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import (
    ParamChain,
    check_stochastic,
    discounted_value,
    exact_grad_eta,
    grad_beta_eta,
    grad_pi,
    stationary_distribution,
)
from .errors import (
    DecompositionFailure,
    DegenerateFeatures,
    DegenerateGradient,
    InvalidDiscount,
    NotDistinct,
)

__all__ = [
    "SpectralReport",
    "BoundReport",
    "SweepRecord",
    "AppendixAReport",
    "spectral_report",
    "grad_sqrt_pi",
    "check_bound",
    "bias_angle_deg",
    "bias_variance_sweep",
    "td1_fixed_point",
    "appendix_a_scenario",
]

DISTINCT_GAP_TOL = 1e-8
RECONSTRUCTION_TOL = 1e-8
DEGENERATE_GRAD_TOL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    """Eigenstructure of a transition matrix, mixing-rate quantities included.

    eigenvalues are sorted by decreasing magnitude (the leading one is 1).
    Columns of S are right eigenvectors with the first rescaled to the
    all-ones vector and the rest to unit Euclidean norm; rows of S_inv are
    then the biorthogonal left eigenvectors, the first being the stationary
    distribution. kappa2 is the spectral condition number of
    diag(sqrt(pi)) @ S, the quantity the bias bound depends on.
    """

    eigenvalues: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray
    pi: np.ndarray
    lambda2_mag: float
    kappa2: float
    distinct: bool
    min_gap: float


@dataclass(frozen=True)
class BoundReport:
    """Both sides of the discount-bias inequality, with every term exposed.

    lhs is the normalized misalignment 1 - <g, beta * g_beta> / |g|^2 between
    the true gradient g and the discount-weighted gradient g_beta. rhs is

        kappa2 * (2 * grad_sqrt_pi_norm / grad_eta_norm)
               * rms_reward * discount_mixing_ratio,

    where grad_sqrt_pi_norm is the Frobenius norm of the derivative of the
    elementwise square root of the stationary distribution (the factor 2
    restores d pi = 2 sqrt(pi) d sqrt(pi) in the weighted factorization of
    grad pi), rms_reward = sqrt(sum_i pi_i r_i^2), and
    discount_mixing_ratio = (1 - beta) / (1 - beta * |lambda2|).
    """

    beta: float
    lhs: float
    rhs: float
    kappa2: float
    grad_sqrt_pi_norm: float
    grad_eta_norm: float
    rms_reward: float
    discount_mixing_ratio: float
    lambda2_mag: float
    holds: bool


@dataclass(frozen=True)
class SweepRecord:
    """One discount setting of a bias/variance sweep.

    bias_angle_deg is exact (linear algebra); estimator_variance_per_coordinate
    is the across-seed sample variance of the named estimator's coordinates.
    degenerate marks parameter-free models whose angle is undefined.
    """

    beta: float
    bias_angle_deg: float
    estimator_variance_per_coordinate: np.ndarray
    steps: int
    seeds_used: int
    degenerate: bool


@dataclass(frozen=True)
class AppendixAReport:
    """Outcome of the bundled two-state value-fitting counterexample."""

    alpha: float
    pi: np.ndarray
    j_alpha: np.ndarray
    features: np.ndarray
    w_star: float
    greedy_suboptimal: bool


def spectral_report(P, pi=None) -> SpectralReport:
    """Full eigendecomposition of P in the normalization the bias bound uses.

    Raises DecompositionFailure when the leading eigenvalue is not 1 within
    1e-9, the eigenvector matrix is numerically singular, or the
    reconstruction S diag(w) S^-1 misses P by more than 1e-8 in max norm.
    """
    P = check_stochastic(np.asarray(P, dtype=float))
    if pi is None:
        pi = stationary_distribution(P)
    else:
        pi = np.asarray(pi, dtype=float)
    w, V = np.linalg.eig(P)
    order = np.argsort(-np.abs(w), kind="stable")
    w = w[order]
    S = V[:, order].astype(complex)
    n = P.shape[0]
    if abs(w[0] - 1.0) > 1e-9:
        raise DecompositionFailure(
            f"leading eigenvalue {w[0]} is not 1; chain may not be stochastic"
        )
    S[:, 0] = 1.0
    for j in range(1, n):
        S[:, j] = S[:, j] / np.linalg.norm(S[:, j])
    try:
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(f"eigenvector matrix not invertible: {exc}") from None
    resid = np.abs(S @ np.diag(w) @ S_inv - P).max()
    if resid > RECONSTRUCTION_TOL:
        raise DecompositionFailure(
            f"eigendecomposition reconstruction residual {resid:.3e} exceeds "
            f"{RECONSTRUCTION_TOL}"
        )
    gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(n, k=1)]
    min_gap = float(gaps.min()) if gaps.size else np.inf
    sv = np.linalg.svd(np.sqrt(pi)[:, None] * S, compute_uv=False)
    kappa2 = float(sv[0] / sv[-1])
    lambda2_mag = float(abs(w[1])) if n > 1 else 0.0
    return SpectralReport(
        eigenvalues=w, S=S, S_inv=S_inv, pi=pi, lambda2_mag=lambda2_mag,
        kappa2=kappa2, distinct=bool(min_gap > DISTINCT_GAP_TOL),
        min_gap=min_gap,
    )


def grad_sqrt_pi(chain: ParamChain):
    """(K, n) derivative of sqrt(pi): d sqrt(pi_i) = d pi_i / (2 sqrt(pi_i))."""
    P = chain.transition()
    pi = stationary_distribution(P)
    return grad_pi(chain) / (2.0 * np.sqrt(pi))[None, :]


def check_bound(chain: ParamChain, beta: float) -> BoundReport:
    """Evaluate the misalignment bound between the true and discounted gradients.

    Preconditions: the transition matrix has numerically distinct eigenvalues
    (NotDistinct otherwise) and the true gradient is nonzero
    (DegenerateGradient otherwise). holds reports lhs <= rhs + 1e-9, which is
    guaranteed analytically under the report's normalization; the field
    exists so sweeps can assert it en masse.
    """
    if not 0.0 <= beta < 1.0:
        raise InvalidDiscount(f"discount must lie in [0, 1), got {beta}")
    P = chain.transition()
    pi = stationary_distribution(P)
    ge = exact_grad_eta(chain)
    grad_eta_norm = float(np.linalg.norm(ge))
    if grad_eta_norm <= DEGENERATE_GRAD_TOL:
        raise DegenerateGradient(
            f"|grad eta| = {grad_eta_norm:.3e} is below {DEGENERATE_GRAD_TOL}; "
            "the normalized misalignment is undefined"
        )
    report = spectral_report(P, pi)
    if not report.distinct:
        raise NotDistinct(
            f"minimum eigenvalue gap {report.min_gap:.3e} is below {DISTINCT_GAP_TOL}"
        )
    gbe = grad_beta_eta(chain, beta)
    lhs = float(1.0 - ge @ (beta * gbe) / grad_eta_norm**2)
    gsp_norm = float(np.linalg.norm(grad_sqrt_pi(chain)))
    rms_reward = float(np.sqrt(chain.rewards @ (pi * chain.rewards)))
    ratio = (1.0 - beta) / (1.0 - beta * report.lambda2_mag)
    rhs = report.kappa2 * (2.0 * gsp_norm / grad_eta_norm) * rms_reward * ratio
    return BoundReport(
        beta=float(beta), lhs=lhs, rhs=float(rhs), kappa2=report.kappa2,
        grad_sqrt_pi_norm=gsp_norm, grad_eta_norm=grad_eta_norm,
        rms_reward=rms_reward, discount_mixing_ratio=float(ratio),
        lambda2_mag=report.lambda2_mag, holds=bool(lhs <= rhs + 1e-9),
    )


def bias_angle_deg(a, b) -> float:
    """Angle in degrees between two gradient vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= 0.0 or nb <= 0.0:
        return float("nan")
    c = np.clip(a @ b / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def bias_variance_sweep(target, betas, steps: int, seeds) -> list[SweepRecord]:
    """Exact bias angle and empirical estimator variance per discount value.

    target is either a ParamChain (estimated with mcg_run) or a
    (PomdpModel, SoftmaxPolicy) pair (estimated with gpomdp_run; bias is
    computed on the induced chain). Parameter-free targets yield degenerate
    records: angle nan, variance zero.
    """
    from .estimators import gpomdp_run, mcg_run
    from .pomdp import PomdpModel, induced_chain

    seeds = [int(s) for s in seeds]
    if isinstance(target, ParamChain):
        chain = target

        def estimate(beta, seed):
            return mcg_run(chain, beta, steps, seed).delta
    elif isinstance(target, tuple) and len(target) == 2 and isinstance(target[0], PomdpModel):
        model, policy = target
        chain = induced_chain(model, policy)

        def estimate(beta, seed):
            return gpomdp_run(model, policy, beta, steps, seed).delta
    else:
        raise TypeError("target must be a ParamChain or a (PomdpModel, SoftmaxPolicy) pair")

    ge = exact_grad_eta(chain)
    degenerate = bool(np.linalg.norm(ge) <= DEGENERATE_GRAD_TOL)
    records = []
    for beta in betas:
        if not 0.0 <= beta < 1.0:
            raise InvalidDiscount(f"discount must lie in [0, 1), got {beta}")
        angle = float("nan") if degenerate else bias_angle_deg(ge, grad_beta_eta(chain, beta))
        deltas = np.stack([estimate(beta, seed) for seed in seeds])
        var = (
            deltas.var(axis=0, ddof=1)
            if len(seeds) > 1
            else np.zeros(chain.num_params)
        )
        records.append(
            SweepRecord(
                beta=float(beta), bias_angle_deg=angle,
                estimator_variance_per_coordinate=var, steps=int(steps),
                seeds_used=len(seeds), degenerate=degenerate,
            )
        )
    return records


def td1_fixed_point(alpha: float, features, pi, values) -> float:
    """Least-squares weight for a one-feature linear value fit.

    Minimizes sum_i pi_i (w phi_i - v_i)^2; the closed form is
    w* = (sum_i pi_i phi_i v_i) / (sum_i pi_i phi_i^2). alpha is carried for
    the caller's bookkeeping (values are typically a discounted value vector
    at that alpha); it does not enter the solve.
    """
    phi = np.asarray(features, dtype=float)
    pi = np.asarray(pi, dtype=float)
    v = np.asarray(values, dtype=float)
    denom = float(pi @ phi**2)
    if denom <= 1e-12:
        raise DegenerateFeatures(
            f"sum pi phi^2 = {denom:.3e} leaves the fit underdetermined"
        )
    return float(pi @ (phi * v) / denom)


_SCENARIO_P1 = np.array([[1.0 / 3.0, 2.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]])
_SCENARIO_P2 = np.array([[2.0 / 3.0, 1.0 / 3.0], [2.0 / 3.0, 1.0 / 3.0]])
_SCENARIO_REWARDS = np.array([0.0, 1.0])
_SCENARIO_FEATURES = np.array([2.0, 1.0])


def appendix_a_scenario(alpha: float) -> AppendixAReport:
    """The bundled two-state counterexample to greedy value-fitting.

    Under the better of two controls the chain favors the rewarding state,
    yet the least-squares one-feature fit of its discounted values always
    gets a positive weight, which ranks the unrewarding state higher
    (features are [2, 1]). A greedy policy read off that fit therefore
    switches to the worse control: improving the fit degrades the policy.
    Returns the stationary distribution, value vector, fitted weight, and
    the suboptimality verdict for the requested discount.
    """
    if not 0.0 <= alpha < 1.0:
        raise InvalidDiscount(f"alpha must lie in [0, 1), got {alpha}")
    pi = stationary_distribution(_SCENARIO_P1)
    j_alpha = discounted_value(_SCENARIO_P1, _SCENARIO_REWARDS, alpha)
    w_star = td1_fixed_point(alpha, _SCENARIO_FEATURES, pi, j_alpha)
    return AppendixAReport(
        alpha=float(alpha), pi=pi, j_alpha=j_alpha,
        features=_SCENARIO_FEATURES.copy(), w_star=w_star,
        greedy_suboptimal=bool(w_star > 0.0),
    )
