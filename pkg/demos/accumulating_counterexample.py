"""Divergence at the accumulation point of the gap-law drift.

The anchors obey a_{n+1} - a_n = n^(-1/beta), so sum gap^beta is the
harmonic series.  Probing the smoothed-gradient integral ever closer in
eps to the accumulation point shows the matching unbounded growth: each
halving of eps resolves a fresh shell of singularities.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from kinetic_rbn.pea_verifier import counterexample_divergence

rep = counterexample_divergence(beta=0.5, N=10_000, eps0=0.05, n_halvings=6)

print(f"theta = {rep.theta:.6f} (limit point offset -1.5 Gaussian widths)")
print(f"partial sum of gap^beta at N=10^4: {rep.partial_sums[-1]:.4f} "
      f"(harmonic number H_N = {np.log(10_000) + 0.5772156649:.4f})")
for e, val, in zip(rep.eps_values, rep.integrals):
    print(f"  eps = {e:.6f}: integral = {val:.4f}")
print("growth ratios per halving:", np.round(rep.ratios, 3))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.semilogx(np.arange(1, len(rep.partial_sums) + 1), rep.partial_sums,
             lw=1)
ax1.set_xlabel("N")
ax1.set_ylabel("sum of gap^beta")
ax2.loglog(rep.eps_values, rep.integrals, "o-")
ax2.invert_xaxis()
ax2.set_xlabel("eps (shrinking)")
ax2.set_ylabel("integral at theta")
fig.tight_layout()
fig.savefig("accumulating_divergence.png", dpi=150)
print("wrote accumulating_divergence.png")
