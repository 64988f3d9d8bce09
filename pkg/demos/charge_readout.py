"""
Charge-qubit readout with a weakly coupled sensor
=================================================

Infidelity versus integration time for a few residual tunnel couplings,
compared with the closed-form estimate, and the integration time that
minimizes the error.
"""

import numpy as np

from qmq import analytics, engine, metrics, models

# Sensor and qubit parameters in ueV. The meter step is calibrated so that
# the sensor transmits half the time for a balanced qubit mixture.
epsilon, gamma, delta_gamma = 10.0, 5.0, 0.5
dt = models.calibrate_timestep(gamma, delta_gamma)
mean_current, contrast = models.model_currents(dt, gamma, delta_gamma)
print(f"step {dt:.4f} ns, mean current {mean_current * 1e9:.2f} nA, contrast {contrast * 1e12:.0f} pA")

gm = analytics.measurement_rate(delta_gamma, dt, gamma=gamma).value
print(f"measurement rate {gm:.4f} /ns")

# %%
# Count-resolved propagation: only the two basis states are carried along,
# so the cost is linear in the number of checkpoints.
n_values = engine.log_checkpoints(10, 4000, 25)

for t in (0.0, 0.5, 2.0):
    model = models.charge_readout_model(models.ChargeQubitParams(epsilon, t, gamma, delta_gamma))
    series = metrics.conditional_series(model, n_values)
    grel = analytics.relaxation_rate_charge(t, delta_gamma, epsilon, dt).value if t else 0.0
    estimate = analytics.infidelity_estimate(gm, grel, series.integration_times)

    print(f"\nt = {t} ueV")
    print("  tau [ns]   1-F numeric   1-F estimate   k_c")
    for tau, f, e, k in zip(series.integration_times[::4], series.infidelity[::4],
                            estimate[::4], series.k_critical[::4]):
        print(f"  {tau:8.2f}   {f:11.3e}   {e:12.3e}   {k:.3f}")

    if t:
        fit = metrics.fit_relaxation(model, grel)
        ideal = analytics.ideal_integration_time(gm, grel)
        best = metrics.interior_minimum(series.integration_times, series.infidelity)
        print(f"  relaxation: closed form {grel:.3e} /ns, fitted {fit.rate:.3e} /ns")
        print(f"  best time: estimate {ideal.refined:.0f} ns, numeric {best[0]:.0f} ns")

# %%
# Conditional states are not pure: the mixedness of the post-measurement
# state tells how much coherence the sensor destroyed.
model = models.charge_readout_model(models.ChargeQubitParams(epsilon, 2.0, gamma, delta_gamma))
series = metrics.conditional_series(model, [100, 1000], rho_pre=np.eye(2) / 2)
print("\nmixedness after outcome e:", np.round(series.mixedness_by_outcome["e"], 4))
