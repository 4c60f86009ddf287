# How regularization selects a branch: compare the deterministic Peano
# branches with the eps-to-0 behavior of the stochastic system, and
# measure the gap between solutions driven by the same noise at two
# regularization levels.

import numpy as np

from kinetic_rbn.drift_library import PeanoPower
from kinetic_rbn.kinetic_sim import (SystemSpec, peano_branching,
                                     uniqueness_gap)
from kinetic_rbn.stable_noise import StableNoiseSpec

spec = SystemSpec(drift=PeanoPower(beta=0.5), noise=StableNoiseSpec(alpha=2.0))

branch = peano_branching(beta=0.5, horizon=1.0)
print("deterministic branches of x' = |x|^beta, x(0) = 0:")
print(f"  stays-at-zero residual: {branch.residual_zero:.2e}")
print(f"  extremal branch terminal: {branch.branch_terminal:.4f} "
      f"(closed form {(0.5 * 1.0) ** 2:.4f} for beta = 1/2)")

grid = np.linspace(0.0, 1.0, 513)
print("pathwise gap |X^eps - X^eps'| under shared noise:")
for eps_pair in ((0.1, 0.05), (0.05, 0.025), (0.025, 0.0125)):
    rep = uniqueness_gap(spec, [0.0, 0.0], eps_pair, 2000, 3, grid)
    print(f"  eps = {eps_pair}: mean gap = {rep.mean_gap:.4f}, "
          f"max gap = {rep.max_gap:.4f}")
print("the gap shrinking with eps is the visible face of selection by")
print("noise: all regularizations converge to the same solution.")
