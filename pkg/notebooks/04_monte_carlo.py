"""
Monte-Carlo check with an Ornstein-Uhlenbeck environment
========================================================

A centered Lorentzian is the spectrum of an OU process. Sampling phase
trajectories and averaging exp(i phi) should reproduce exp(-chi).
"""

# %%
import numpy as np

from noisespec import LorentzianTerm, SpectrumModel, chi_quadrature, ou_oracle

term = LorentzianTerm(1.0, 0.0, 1.0)
model = SpectrumModel((term,))
times = np.linspace(0.25, 3.0, 6)

# %%
for n in (0, 1, 4):
    mean, se = ou_oracle(term, n, times, n_traj=10_000, seed=n)
    exact = np.exp([-chi_quadrature(model, n, t) for t in times])
    z = (mean - exact) / se
    print(f"N={n}  max |z| = {np.max(np.abs(z)):.2f}")
    for t, m, e, s in zip(times, mean, exact, se):
        print(f"   t={t:4.2f}  MC={m:.4f} +- {s:.4f}  exact={e:.4f}")
