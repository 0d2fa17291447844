"""
Where can a measurement set see?
================================

Time-integrated sensitivity of FID and spin echo, the frequency gap they
leave, and which extra CPMG sequence fills it best.
"""

# %%
import numpy as np

from noisespec import canonical_spectrum, coverage_report, simulate_measurements

spec = canonical_spectrum()
omega = np.linspace(0, 20, 401)
t_f = {c.seq.n_pulses: c.times[-1] for c in simulate_measurements(spec, [0, 1, 2, 8, 32], points=11)}
print("horizons:", {n: round(t, 2) for n, t in t_f.items()})

# %%
report = coverage_report(spec.model, [0, 1], omega, candidates=[2, 8, 32], t_f=t_f)
print("flagged regions:", report.regions)
print("scores:", {n: round(s, 3) for n, s in report.scores.items()})
print("ranking:", report.ranking)

# %% [markdown]
# Adding the two best candidates closes the gap: the summed sensitivity no
# longer drops below 5% of its peak anywhere on the grid.

# %%
closed = coverage_report(spec.model, [0, 1] + report.ranking[:2], omega, t_f=t_f)
print("flagged after adding", report.ranking[:2], ":", closed.regions)
