# Simulate a few kinetic paths under the square-root drift and compare
# Brownian velocity noise with heavy-tailed alpha = 1.5 noise.

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from kinetic_rbn.drift_library import PeanoPower
from kinetic_rbn.kinetic_sim import SystemSpec, make_stream, simulate
from kinetic_rbn.stable_noise import StableNoiseSpec

HORIZON = 2.0
N_STEPS = 1024
N_PATHS = 6
EPS = 0.05

grid = np.linspace(0.0, HORIZON, N_STEPS + 1)
fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)

for col, alpha in enumerate((2.0, 1.5)):
    spec = SystemSpec(drift=PeanoPower(beta=0.5),
                      noise=StableNoiseSpec(alpha=alpha))
    for k in range(N_PATHS):
        path = simulate(spec, [0.0, 0.0],
                        make_stream(spec, grid, seed=42, index=k), eps=EPS)
        axes[0, col].plot(grid, path.V[:, 0], lw=0.8)
        axes[1, col].plot(grid, path.X[:, 0], lw=0.8)
    axes[0, col].set_title(f"alpha = {alpha}")
    axes[1, col].set_xlabel("t")
    print(f"alpha={alpha}: terminal X of path 0 = {path.X[-1, 0]:+.4f}")

axes[0, 0].set_ylabel("V_t")
axes[1, 0].set_ylabel("X_t")
fig.suptitle("Kinetic paths, dV = sigma dL^alpha, dX = (V + F_eps(X)) dt")
fig.tight_layout()
fig.savefig("kinetic_paths.png", dpi=150)
print("wrote kinetic_paths.png")
