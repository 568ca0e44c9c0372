"""Jitted inner loops for trajectory sampling and trace updates.

Every estimator's update rule lives here exactly as defined, one loop per
rule; the wrappers in estimators.py only gather inputs. Algorithm pairs with
bit-for-bit agreement contracts (chain vs POMDP on the deterministic-control
construction, concatenated vs per-agent multi-agent blocks) share these
functions, so agreement follows from shared code instead of parallel
implementations that merely look alike.

Categorical draws are linear scans for the first cumulative entry >= v,
clipped to the last category: identical semantics to rng.categorical_index.
Each kernel that samples also reports whether a (near-)zero-probability
category was ever selected so callers can raise ZeroProbabilityTransition.
"""

import numpy as np
from numba import njit

__all__ = [
    "walk_chain",
    "walk_pomdp",
    "update_discounted",
    "update_fresh_ratio",
    "update_param_reward",
    "update_truncated",
    "update_hessian",
]


@njit(cache=True)
def _pick(cdf_row, v):
    m = cdf_row.shape[0]
    j = 0
    while j < m - 1 and cdf_row[j] < v:
        j += 1
    return j


@njit(cache=True)
def _gap(cdf_row, j):
    if j == 0:
        return cdf_row[0]
    return cdf_row[j] - cdf_row[j - 1]


@njit(cache=True)
def walk_chain(cdf, x0, u):
    """States X_0..X_T from one uniform per transition. Returns (states, ok)."""
    T = u.shape[0]
    states = np.empty(T + 1, dtype=np.int64)
    states[0] = x0
    x = x0
    ok = True
    for t in range(T):
        j = _pick(cdf[x], u[t])
        if _gap(cdf[x], j) < 1e-300:
            ok = False
        x = j
        states[t + 1] = x
    return states, ok


@njit(cache=True)
def walk_pomdp(obs_cdf, pol_cdf, trans_cdf, x0, env_u, pol_u):
    """POMDP path: per step y (env), u (policy), next (env).

    env_u has shape (T, 2) holding the y and next uniforms; pol_u has shape
    (T,). Returns (states, observations, controls, ok).
    """
    T = pol_u.shape[0]
    states = np.empty(T + 1, dtype=np.int64)
    ys = np.empty(T, dtype=np.int64)
    us = np.empty(T, dtype=np.int64)
    states[0] = x0
    x = x0
    ok = True
    for t in range(T):
        y = _pick(obs_cdf[x], env_u[t, 0])
        if _gap(obs_cdf[x], y) < 1e-300:
            ok = False
        u = _pick(pol_cdf[y], pol_u[t])
        if _gap(pol_cdf[y], u) < 1e-300:
            ok = False
        nxt = _pick(trans_cdf[u, x], env_u[t, 1])
        if _gap(trans_cdf[u, x], nxt) < 1e-300:
            ok = False
        ys[t] = y
        us[t] = u
        x = nxt
        states[t + 1] = x
    return states, ys, us, ok


@njit(cache=True)
def update_discounted(g, rew, beta, baseline):
    """z_{t+1} = beta z_t + g_t;  delta += ((r_{t+1} - b) z_{t+1} - delta) / (t+1).

    g[t] is the likelihood-ratio row of transition t, rew[t] the reward paid
    for it. Also maintains the running mean of z and the running max |z| for
    the trace-bound checks. Returns (delta, z, z_mean, max_abs_z).
    """
    T, K = g.shape
    z = np.zeros(K)
    delta = np.zeros(K)
    zbar = np.zeros(K)
    max_abs = 0.0
    for t in range(T):
        for k in range(K):
            z[k] = beta * z[k] + g[t, k]
            a = abs(z[k])
            if a > max_abs:
                max_abs = a
        c = rew[t] - baseline
        inv = 1.0 / (t + 1)
        for k in range(K):
            delta[k] += (c * z[k] - delta[k]) * inv
            zbar[k] += (z[k] - zbar[k]) * inv
    return delta, z, zbar, max_abs


@njit(cache=True)
def update_fresh_ratio(g, rew_next, beta):
    """Control-paid-reward rule: delta += (R_{t+1} (z_{t+1} + g_{t+1}) - delta)/(t+1).

    g has T+1 rows; row t+1 is the ratio of the control chosen at the arrival
    state, paired with its own reward rew_next[t] = r(U_{t+1}, X_{t+1}).
    """
    T = rew_next.shape[0]
    K = g.shape[1]
    z = np.zeros(K)
    delta = np.zeros(K)
    for t in range(T):
        for k in range(K):
            z[k] = beta * z[k] + g[t, k]
        inv = 1.0 / (t + 1)
        for k in range(K):
            delta[k] += (rew_next[t] * (z[k] + g[t + 1, k]) - delta[k]) * inv
    return delta, z


@njit(cache=True)
def update_param_reward(g, rew, grad_rew, beta):
    """delta += (r z_{t+1} + grad r - delta) / (t+1), rewards carrying gradients."""
    T, K = g.shape
    z = np.zeros(K)
    delta = np.zeros(K)
    for t in range(T):
        for k in range(K):
            z[k] = beta * z[k] + g[t, k]
        inv = 1.0 / (t + 1)
        for k in range(K):
            delta[k] += (rew[t] * z[k] + grad_rew[t, k] - delta[k]) * inv
    return delta, z


@njit(cache=True)
def update_truncated(g, rew_states, window):
    """Sliding-window trace: z_t sums the last `window` ratio rows.

    Averages z_t * r(X_t) for t = window..T; the early z_t with fewer than
    `window` entries only warm the buffer. Returns (delta, z).
    """
    T, K = g.shape
    z = np.zeros(K)
    delta = np.zeros(K)
    count = 0
    for t in range(1, T + 1):
        for k in range(K):
            z[k] = z[k] + g[t - 1, k]
        if t > window:
            for k in range(K):
                z[k] = z[k] - g[t - 1 - window, k]
        if t >= window:
            count += 1
            inv = 1.0 / count
            rw = rew_states[t]
            for k in range(K):
                delta[k] += (rw * z[k] - delta[k]) * inv
    return delta, z


@njit(cache=True)
def update_hessian(ratios, hratios, states, rewards, beta):
    """Matrix-trace rule: Z_{t+1} = beta Z_t + H_t - g_t g_t'; average r (Z + z z').

    ratios is the (K, n, n) first-derivative tensor, hratios the (K, K, n, n)
    second-derivative tensor, both over probabilities; indexing happens here
    to avoid materializing (T, K, K) arrays.
    """
    T = states.shape[0] - 1
    K = ratios.shape[0]
    z = np.zeros(K)
    Z = np.zeros((K, K))
    delta = np.zeros((K, K))
    for t in range(T):
        i = states[t]
        j = states[t + 1]
        for k in range(K):
            z[k] = beta * z[k] + ratios[k, i, j]
        for k1 in range(K):
            for k2 in range(K):
                Z[k1, k2] = (
                    beta * Z[k1, k2]
                    + hratios[k1, k2, i, j]
                    - ratios[k1, i, j] * ratios[k2, i, j]
                )
        rw = rewards[j]
        inv = 1.0 / (t + 1)
        for k1 in range(K):
            for k2 in range(K):
                delta[k1, k2] += (rw * (Z[k1, k2] + z[k1] * z[k2]) - delta[k1, k2]) * inv
    return delta, z, Z
