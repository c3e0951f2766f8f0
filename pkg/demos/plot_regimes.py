"""
Growth regimes of the standard economy
======================================

The leading-order analysis reduces the long-run behaviour to the roots of a
quintic in the growth exponent. This script shows how the dominant root moves
as the savings share ``s`` changes, then maps the three regimes over the
``(s, v)`` plane and overlays the stability border.
"""

import matplotlib.pyplot as plt
import numpy as np

from _common import output_dir
from keenmodel import ModelParams
from keenmodel.leading import char_quintic, classify
from keenmodel.scans import find_bifurcation, fit_power_law, regime_grid, stability_border

std = ModelParams()

# %%
# Dominant root across the savings share
# --------------------------------------
# Below the critical share the dominant pair is complex: the economy grows
# while oscillating and eventually collapses. Above it the root is real.
for s in (0.25, 0.27, 0.285, 0.3, 0.32):
    m = classify(std.with_(s=s))
    print(f"s={s:5.3f}  mu0={m.mu0:.8f}  regime={m.regime.value:17s} T={m.T:.2f}")

s_crit = find_bifurcation(std, "s", (0.27, 0.30))
print(f"critical savings share: {s_crit:.7f}")

s_vals = np.linspace(0.24, 0.34, 101)
roots = np.array([np.sort_complex(char_quintic(std.with_(s=s)).roots()) for s in s_vals])

fig, ax = plt.subplots(1, 2, figsize=(10, 4))
ax[0].plot(s_vals, roots.real, "k.", ms=2)
ax[0].set_ylim(-1.5, 0.3)
ax[0].axvline(s_crit, color="r", lw=0.8)
ax[0].set_xlabel("s")
ax[0].set_ylabel("Re mu")
ax[1].plot(s_vals, np.abs(roots.imag).max(axis=1), "k")
ax[1].axvline(s_crit, color="r", lw=0.8)
ax[1].set_xlabel("s")
ax[1].set_ylabel("|Im mu0|")
fig.tight_layout()
fig.savefig(output_dir() / "roots_vs_s.png", dpi=120)

# %%
# The (s, v) regime diagram
# -------------------------
# Each cell is classified independently. The border follows a power law
# over the standard range of capital ratios.
grid = regime_grid(std, ns=41, nv=41)
codes = {"StableGrowth": 2.0, "DeferredCollapse": 1.0, "ImmediateCollapse": 0.0,
         "Degenerate": 1.5, "failed": np.nan}
Z = np.vectorize(codes.get)(grid.regimes()).astype(float)

v_line = np.linspace(2.5, 4.0, 16)
border = stability_border(std, v_line)
c, k = fit_power_law(v_line, border)
print(f"stability border: s_crit = {c:.4f} * v^{k:.3f}")

fig, ax = plt.subplots(figsize=(6, 5))
ax.pcolormesh(grid.s_values, grid.v_values, Z, cmap="Greys", shading="nearest")
ax.plot(border, v_line, "r", lw=1.5, label="stability border")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("s")
ax.set_ylabel("v")
ax.legend(loc="lower right")
fig.savefig(output_dir() / "regime_diagram.png", dpi=120)
