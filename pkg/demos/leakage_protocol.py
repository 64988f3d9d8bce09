"""
Detecting leakage with two readout rounds
=========================================

Simulate the two-round experiment on the full measurement model, then
estimate the error budget from the observed frequencies.
"""

from qmq import models, protocols

p = models.SpinQubitParams(epsilon=1040.0, t=0.0, U=1000.0, z_l=11.0, z_r=9.0,
                           gamma=5.0, delta_gamma=0.5, delta=(0.05, 0.0, 0.0))
res = protocols.simulate_leakage_experiment(p, n_steps_per_round=600, shots=10_000, seed=7)

f = res.frequencies
print(f"p00 {f.p00:.4f}  p01 {f.p01:.4f}  p10 {f.p10:.4f}  p11 {f.p11:.4f}")
b = res.estimated_budget
print(f"estimated L = {b.leakage_L:.4f} +- {res.leakage_sigma:.4f}, engine value {res.true_leakage:.4f}")
print(f"eps_up {b.eps_up:.4f}, eps_down {b.eps_down:.4f}, q1 {b.q1:.4f}, q2 {b.q2:.4f}")

# The forward model is exactly invertible.
budget = protocols.ErrorBudget(leakage_L=0.02, eps_up=0.01, q1=0.005)
print(protocols.experiment_probabilities(budget))
