# Sweep the drift exponent beta and fit the decay rate of the
# worst-case smoothed-gradient integral; the prediction is 3(beta-1)/2.

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from kinetic_rbn.drift_library import PeanoPower
from kinetic_rbn.pea_verifier import PeaProbe, fit_decay_exponent

betas = np.linspace(0.3, 0.9, 7)
slopes, bands = [], []
for beta in betas:
    probe = PeaProbe(model=PeanoPower(beta=float(beta)))
    fit = fit_decay_exponent(probe)
    slopes.append(fit.slope)
    bands.append(fit.stderr)
    print(f"beta={beta:.2f}: slope={fit.slope:+.4f}  "
          f"predicted={1.5 * (beta - 1):+.4f}  (se {fit.stderr:.1e})")

fig, ax = plt.subplots(figsize=(7, 4.5))
ax.errorbar(betas, slopes, yerr=2 * np.asarray(bands), fmt="o",
            label="fitted slope")
line = np.linspace(betas[0], betas[-1], 100)
ax.plot(line, 1.5 * (line - 1), "k--", lw=1, label="3(beta-1)/2")
ax.set_xlabel("beta")
ax.set_ylabel("decay exponent of I(tau)")
ax.legend()
fig.tight_layout()
fig.savefig("decay_exponents.png", dpi=150)
print("wrote decay_exponents.png")
