"""
Chemical distance on supercritical bond percolation
===================================================

Samples one monotone field, opens it at a few levels and follows how the
graph distance between two far points shrinks as more edges open.
Run with ``python3 notebooks/01_chemical_distance.py``.
"""

# %%
from percolab import experiments as ex
from percolab.chemdist import chemical_distance, regularize
from percolab.percolation import Window, giant_cluster, monotone_config, sample_uniform_field

# %% [markdown]
# One uniform variable per edge. Opening at level p keeps the edges with U <= p,
# so the open sets grow with p on the same sample.

# %%
n = 80
window = Window(2 * n)
fld = sample_uniform_field(window, seed=3)

for p in (0.6, 0.7, 0.8, 0.9, 1.0):
    grid = monotone_config(fld, p, p).level("p")
    lab, cid = giant_cluster(grid)
    a = regularize((0, 0), lab, cid)
    b = regularize((n, 0), lab, cid)
    res = chemical_distance(grid, a, b)
    print(f"p={p:.2f}  D={res.distance}  D/n={res.distance / n:.3f}")

# %% [markdown]
# Averaging over trials gives the time constant estimate. The ratio at p = 1 is exactly 1.

# %%
cfg = ex.ExperimentConfig(seed=0)
for p in (0.7, 0.85, 1.0):
    rec = ex.estimate_mu(cfg, p, n=100, trials=20)
    print(f"p={p:.2f}  mu-hat={rec.mean:.4f} +/- {rec.half_width:.4f}  discarded={rec.discarded}")
