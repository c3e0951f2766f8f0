"""
Deferred collapse of a growing economy
======================================

With ``s = 0.285`` the economy grows for about a century while its
oscillation widens, then debt runs away. We integrate the model, compare the
loan-to-deposit ratio with the leading-order prediction, and fit the
terminal-collapse forms.
"""

import matplotlib.pyplot as plt
import numpy as np

from _common import output_dir
from keenmodel import STANDARD_IC, IntegrationConfig, ModelParams, conserved_constant, integrate
from keenmodel.collapse import collapse_predict, fit_collapse, transition_detect
from keenmodel.experiments import ratio_diagnostic
from keenmodel.leading import classify

p = ModelParams(s=0.285)
cst = conserved_constant(STANDARD_IC)
traj = integrate(p, STANDARD_IC, cst, IntegrationConfig())
mode = classify(p)
print(f"status {traj.status}; events: " + ", ".join(f"{e.name}@{e.t:.2f}" for e in traj.events))

# %%
# Leading-order lock-in
# ---------------------
# Shifting F_D by the phase difference between the two amplitudes makes the
# ratio F_L/F_D almost constant across the middle of the cycle.
ratio = ratio_diagnostic(traj, mode.amplitudes)
dev, raw = ratio.max_deviation((60, 115))
print(f"lag {ratio.lag:.4f} yr, lagged deviation {dev:.2e}, raw deviation {raw:.2e}")

# %%
# Collapse
# --------
# After lending saturates, wages and prices decay on closed-form paths.
fit = fit_collapse(traj, p, window=(142.0, 148.0))
onset, bridge = transition_detect(traj, mode)
print(f"c1={fit.c1:.3f} c2={fit.c2:.4f} onset={onset:.1f} bridge slope={bridge:.3f}")

m = traj.times >= 142
pred = collapse_predict(traj.times[m], fit, p)

fig, ax = plt.subplots(3, 1, figsize=(7, 9))
for name in ("B_C", "F_L", "F_D"):
    y = traj[name]
    ax[0].semilogy(traj.times, np.where(y > 0, y, np.nan), label=name)
ax[0].axvline(onset, color="k", lw=0.6, ls="--")
ax[0].legend()
ax[1].plot(ratio.times, ratio.raw, label="F_L / F_D (raw)")
ax[1].plot(ratio.times, ratio.ratio, label="lagged, normalized")
ax[1].set_ylim(0.97, 1.03)
ax[1].legend()
ax[2].semilogy(traj.times[m], traj["P_C"][m], "k", label="P_C simulated")
ax[2].semilogy(traj.times[m], pred[:, 5], "r--", label="closed form")
ax[2].set_xlabel("t (years)")
ax[2].legend()
fig.tight_layout()
fig.savefig(output_dir() / "deferred_collapse.png", dpi=120)
