import numpy as np
import pytest

from pglab.chain import make_constant_chain
from pglab.estimators import (
    ParamReward,
    control_reward_run,
    gpomdp_run,
    hessian_run,
    mcg_run,
    param_reward_run,
    truncated_trace_run,
)

from factories import random_pomdp, random_table_chain


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Touch every jitted code path once so timed tests measure work, not JIT."""
    chain = random_table_chain(2, seed=0)
    mcg_run(chain, 0.5, 8, 0)
    truncated_trace_run(chain, 2, 8, 0)
    hessian_run(chain, 0.5, 8, 0)
    zero = ParamReward(values=np.zeros(2), grads=np.zeros((4, 2)))
    param_reward_run(chain, zero, 0.5, 8, 0)
    model, policy = random_pomdp(2, 2, 2, seed=0)
    gpomdp_run(model, policy, 0.5, 8, 0)
    cmodel, cpolicy = random_pomdp(2, 2, 2, seed=1, control_rewards=True)
    control_reward_run(cmodel, cpolicy, 0.5, 8, 0)
    make_constant_chain(np.full((2, 2), 0.5), np.zeros(2))
    return True
