"""
Spin readout: leakage and a shifted measurement rate
====================================================

A transverse spin-charge coupling drives |dd> out of the computational
subspace while the sensor watches; a longitudinal one changes how fast the
two readout states separate.
"""

import numpy as np

from qmq import analytics, engine, metrics, models
from qmq.linalg import projector

base = dict(epsilon=1040.0, t=0.0, U=1000.0, z_l=11.0, z_r=9.0, gamma=5.0, delta_gamma=0.5)
rho_dd = projector(models.basis_state(models.DD))
n_values = engine.log_checkpoints(10, 1500, 12)

# %%
# Leakage of the unconditional operation against 1/2 (1 - exp(-G tau)).
for dx in (0.0125, 0.05, 0.25):
    model = models.spin_readout_model(models.SpinQubitParams(**base, delta=(dx, 0.0, 0.0)))
    rate = analytics.leakage_rate(dx, base["z_r"], model.delta_tau).value
    leak = metrics.leakage_series(model, rho_dd, n_values)
    law = 0.5 * (1 - np.exp(-rate * np.asarray(n_values) * model.delta_tau))
    print(f"dx = {dx:<7} G_leak = {rate:.2e} /ns   max rel. deviation {np.max(np.abs(leak / law - 1)):.1e}")

# %%
# The measurement rate grows linearly with the longitudinal coupling.
print("\n  dz      fitted G_m   predicted")
for dz in (-0.125, 0.0, 0.125):
    model = models.spin_readout_model(models.SpinQubitParams(**base, delta=(0.0, 0.0, dz)))
    fit = metrics.fit_measurement_rate_series(metrics.conditional_series(model, n_values))
    pred = analytics.measurement_rate(base["delta_gamma"], model.delta_tau, dz, gamma=base["gamma"])
    print(f"  {dz:+.3f}   {fit.rate:.5f}      {pred.value:.5f}")
