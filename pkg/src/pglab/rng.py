"""Random-number plumbing with a fixed, documented draw discipline.

All simulation in this package draws from a RunRng: a pair of named PCG64
streams spawned from one integer seed.

  * ``env``     -- initial state, observations, and control-conditioned state
                   transitions; everything whose distribution does not depend
                   on the parameter vector.
  * ``policy``  -- the single draw per step from the parameterized
                   distribution: the control in a POMDP, the next state in a
                   directly parameterized chain.

Keeping the parameterized draw on its own stream means trajectories of a
chain and of a POMDP whose induced chain coincides with it consume identical
uniforms for the decision that matters, and estimates on common random
numbers stay comparable across parameter perturbations.

Draw budget per step, in order: chains consume 1 policy uniform; POMDPs
consume exactly 3 uniforms (observation from env, control from policy, next
state from env). An unpinned initial state costs 1 env uniform. Categorical
draws invert the cumulative sum in declared index order; an exact tie lands
on the lower index.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence

from .errors import ZeroProbabilityTransition

__all__ = ["RunRng", "categorical_index", "draw_categorical"]


def categorical_index(cdf_row: np.ndarray, v: float) -> int:
    """Index of the first cdf entry >= v, clipped to the last category.

    Linear scan, identical to the jitted kernels' inner loop; both must stay
    in lockstep for replay tests to be meaningful.
    """
    m = cdf_row.shape[0]
    j = 0
    while j < m - 1 and cdf_row[j] < v:
        j += 1
    return j


def draw_categorical(probs: np.ndarray, cdf_row: np.ndarray, gen: Generator) -> int:
    """One inverse-cdf draw; rejects events of (near-)zero probability."""
    j = categorical_index(cdf_row, gen.random())
    if probs[j] < 1e-300:
        raise ZeroProbabilityTransition(
            f"sampled category {j} with probability {probs[j]!r}"
        )
    return j


class RunRng:
    """Named pair of generators backing one simulation run."""

    __slots__ = ("env", "policy")

    def __init__(self, env: Generator, policy: Generator):
        self.env = env
        self.policy = policy

    @classmethod
    def from_seed(cls, seed: int) -> "RunRng":
        kids = SeedSequence(seed).spawn(2)
        return cls(Generator(PCG64(kids[0])), Generator(PCG64(kids[1])))

    def initial_state(self, n: int, pinned: int | None = None) -> int:
        """Uniform initial state (1 env uniform), or the pinned one (0 draws)."""
        if pinned is not None:
            return int(pinned)
        cdf = np.cumsum(np.full(n, 1.0 / n))
        return categorical_index(cdf, self.env.random())
