"""
How fast the time constant moves with p
=======================================

Common random numbers across the grid: each trial reuses one field for all p,
so every sample is ordered and the finite differences are not swamped by noise.
"""

# %%
from percolab import experiments as ex

cfg = ex.ExperimentConfig(seed=0)
grid = [0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
rep = ex.lipschitz_scan(cfg, grid, n=100, trials=20)

for p, r in zip(rep.grid, rep.records):
    print(f"p={p:.2f}  mu-hat={r.mean:.4f} +/- {r.half_width:.4f}")
print("slopes:", [round(s, 3) for s in rep.slopes])
print(f"kappa-hat={rep.kappa:.3f}  monotone={rep.monotone}  per-sample violations={rep.sample_violations}")

# %% [markdown]
# A second batch of trials gives an idea of how stable the slope estimate is.

# %%
other = ex.lipschitz_scan(cfg, grid, n=100, trials=20, trial_offset=20)
print(f"second batch kappa-hat={other.kappa:.3f}")
