"""
Step model versus a jump-unraveled master equation
==================================================

The same sensor described as a continuous jump process gives rates that
differ from the discrete step model by fixed factors.
"""

from qmq import models, sme

dt = models.calibrate_timestep(5.0, 0.5)
cmp = sme.compare_rates(5.0, 0.5, 10.0, 2.0, dt)
for key in ("gamma_m", "gamma_d", "gamma_rel"):
    print(f"{key:10s} step {cmp.qmq[key]:.4e}  jump {cmp.sme[key]:.4e}  ratio {cmp.ratios[key]:.3f}")

# A small ensemble at t = 0: the coherence should decay at chi^2 / 2.
p = sme.match_parameters(5.0, 0.5, dt, models.ChargeQubitParams(10.0, 0.0, 5.0, 0.5))
est = sme.ensemble_dephasing_rate(p, n_traj=200, seed=1)
print(f"\nensemble dephasing {est.rate:.4f} +- {est.sigma:.4f} /ns, expected {p.dephasing_rate:.4f}")
