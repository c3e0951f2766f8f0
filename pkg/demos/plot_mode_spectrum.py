"""
Corrections around stable growth
================================

For ``s = 0.3`` the economy settles on exponential growth. The second-order
mode spectrum describes how quickly deviations die out. A complex pair gives
the short damped cycle visible in the profit rate.
"""

import matplotlib.pyplot as plt
import numpy as np

from _common import output_dir
from keenmodel import STANDARD_IC, IntegrationConfig, ModelParams, conserved_constant, integrate
from keenmodel.leading import leading_equilibrium
from keenmodel.modal import fit_transients, mode_spectrum

p = ModelParams(s=0.3)
sp = mode_spectrum(p)
print(f"mu0 = {sp.mu0:.8f}")
print("nu  =", ", ".join(f"{z:.6f}" for z in sp.nu))
print(f"moderation period {sp.moderation_period:.4f} yr, zero modes {sp.zero_modes}")

traj = integrate(p, STANDARD_IC, conserved_constant(STANDARD_IC),
                 IntegrationConfig(t_span=(0.0, 80.0)))
tf = fit_transients(traj, sp.mu0, sp)

# the fitted correction model, evaluated over the fit window
t = traj.times
m = (t >= tf.window[0]) & (t <= tf.window[1])
model = (tf.pi_r1 * np.exp((sp.nu1 - sp.mu0) * t)
         + tf.pi_r2_mod * np.exp((sp.spontaneous_pair.real - sp.mu0) * t)
         * np.sin(sp.spontaneous_pair.imag * t + tf.pi_r2_phase))

fig, ax = plt.subplots(1, 2, figsize=(10, 4))
nu = np.asarray(sp.nu)
ax[0].plot(nu.real, nu.imag, "o")
ax[0].axvline(sp.mu0, color="r", lw=0.8, label="mu0")
ax[0].set_xlabel("Re nu")
ax[0].set_ylabel("Im nu")
ax[0].legend()
ax[1].plot(t[m], traj["pi_r"][m] - leading_equilibrium(p).pi_r0, "k", label="simulated")
ax[1].plot(t[m], model[m], "r--", label="mode fit")
ax[1].set_xlabel("t (years)")
ax[1].set_ylabel("pi_r - pi_r0")
ax[1].legend()
fig.tight_layout()
fig.savefig(output_dir() / "mode_spectrum.png", dpi=120)
