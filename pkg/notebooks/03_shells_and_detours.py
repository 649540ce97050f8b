"""
Shells and detours on a planted configuration
=============================================

Every q-edge is open and a few edges of the straight path are closed at level p.
The renormalized boxes around the path are good, so each closed edge gets a
shell of good boxes and the detour runs through the crossing clusters.
"""

# %%
import numpy as np

from percolab.bypass import build_detour, constructive_distance_bound
from percolab.experiments import planted_coupler
from percolab.lattice import Edge, edge_set
from percolab.percolation import Window
from percolab.renorm import BoxStateCache, build_hierarchy
from percolab.shells import shells_for_path

h = build_hierarchy(3, [3, 19, 3], beta=1.0, allow_decreasing=True)
window = Window(900)
path = np.array([(x, 0) for x in range(401)])
couple = planted_coupler(window, [((200, 0), 0)])
view = couple(path).masked()

# %%
fam = shells_for_path(path, BoxStateCache(view, h), h)
e = Edge((200, 0), (201, 0))
shell = fam.shells[e]
print(f"{len(fam.shells)} shells, {len(fam.dropped)} dropped near the ends")
print(f"shell of {e}: {len(shell.boxes)} boxes, k(e)={shell.k_of_e}, distance to e={shell.dist_to_edge}")

# %%
res = build_detour(path, [e], fam, view, h)
print(f"detour length {len(res.path) - 1}, added edges {len(res.added)}, avoids e: {e not in edge_set(res.path)}")

# %% [markdown]
# The full chain on two closures: D_p is bounded by D_q plus the added edges plus the stitched ends.

# %%
rep = constructive_distance_bound(planted_coupler(window, [((150, 0), 0), ((260, 0), 0)]), (400, 0), h)
print(f"D_q={rep.D_q} D_p={rep.D_p} added={rep.added} stitch={rep.stitch} holds={rep.holds}")
