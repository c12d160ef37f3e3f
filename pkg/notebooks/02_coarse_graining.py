# %% [markdown]
# # Coarse-graining molecule-like graphs
#
# Rings from a minimum cycle basis, fused rings merged, leftover bonds as
# two-node cliques, and a maximum-weight spanning tree over shared atoms.

# %%
import numpy as np

from spectoken.coarse import decompose
from spectoken.data import generate_synthetic
from spectoken.graph import Graph

# %% [markdown]
# Naphthalene skeleton: two fused hexagons become one clique with code 2 + 2.

# %%
naph = Graph(n=10, edges=((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0),
                          (5, 6), (6, 7), (7, 8), (8, 9), (9, 0)))
cg = decompose(naph)
print(cg.m, cg.clique_attrs, cg.cliques)

# %% [markdown]
# Biphenyl-like: two rings joined by a bond give a three-node path tree.

# %%
ring = lambda off: tuple((off + i, off + (i + 1) % 6) for i in range(6))  # noqa: E731
biphenyl = Graph(n=12, edges=ring(0) + ring(6) + ((0, 6),))
cg = decompose(biphenyl)
print(cg.cliques)
print(cg.tree_edges)
print(cg.S)

# %% [markdown]
# Statistics over synthetic data.

# %%
graphs = generate_synthetic(200, (8, 24), 0)
ms = np.array([decompose(g).m for g in graphs])
ns = np.array([g.n for g in graphs])
print("mean nodes", ns.mean(), "mean cliques", ms.mean())
codes = np.concatenate([decompose(g).clique_attrs for g in graphs])
values, counts = np.unique(codes, return_counts=True)
print("clique codes", dict(zip(values.tolist(), counts.tolist())))
