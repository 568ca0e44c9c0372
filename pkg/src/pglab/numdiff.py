"""Central finite differences and the relative-error metric used everywhere.

The step h = 1e-5 balances truncation against float64 round-off for the
smooth softmax families exercised here; tests pin it so analytic derivatives
are always compared against the same oracle.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["central_difference", "relative_error", "DEFAULT_STEP"]

DEFAULT_STEP = 1e-5


def central_difference(
    f: Callable[[np.ndarray], np.ndarray | float],
    theta: np.ndarray,
    h: float = DEFAULT_STEP,
) -> np.ndarray:
    """Stack of (f(theta + h e_k) - f(theta - h e_k)) / 2h over all coordinates.

    f may return a scalar or an array; the result has shape (K, *f-shape).
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    cols = []
    for k in range(theta.shape[0]):
        up = theta.copy()
        up[k] += h
        dn = theta.copy()
        dn[k] -= h
        cols.append((np.asarray(f(up), dtype=np.float64) - np.asarray(f(dn), dtype=np.float64)) / (2.0 * h))
    if not cols:
        return np.zeros(0)
    return np.stack(cols)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||, 1e-12), flattening matrices."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
