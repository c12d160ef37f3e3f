# %% [markdown]
# # Eigenvalues to a token
#
# Walk from a small graph to its spectral token: normalized Laplacian,
# Jacobi eigendecomposition, kernel features, attention weights, pooled vector.

# %%
import numpy as np

from spectoken.coarse import decompose
from spectoken.graph import Graph, normalized_laplacian
from spectoken.spectral import (SpectralTokenParams, build_spectrum_vector, kernel_features,
                                spectral_attention, init_spectral_token, spectral_kernel,
                                sym_eigh)

# %% [markdown]
# A six-ring with a two-atom tail.

# %%
g = Graph(n=8, edges=((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 6), (6, 7)))
L = normalized_laplacian(g)
spec_G = sym_eigh(L)
print(np.round(spec_G.eigenvalues, 4))
print("matches LAPACK:", np.allclose(spec_G.eigenvalues, np.linalg.eigvalsh(L)))

# %% [markdown]
# The coarse tree has three nodes (ring, two bonds) in a path, so its spectrum is {0, 1, 2}.

# %%
cg = decompose(g)
print(cg.cliques, cg.tree_edges)
spec_T = sym_eigh(normalized_laplacian(cg.as_graph()))
print(np.round(spec_T.eigenvalues, 12))

# %%
sv = build_spectrum_vector(spec_T, spec_G, k_T=4, k_G=8)
print(sv.values)

# %% [markdown]
# Kernel shape for a few time constants.

# %%
lam = np.linspace(0, 2, 9)
for theta in (0.5, 1.0, 4.0):
    print(theta, np.round([spectral_kernel(x, theta) for x in lam], 3))

# %%
params = SpectralTokenParams.init(t=8, d=6, rng=np.random.default_rng(0))
G = kernel_features(sv, params)
s = spectral_attention(G, params.W1)
print("attention:", np.round(s.data, 3), "sum", s.data.sum())
z0 = init_spectral_token(sv, params)
print("z0:", np.round(z0.data, 4))

# %% [markdown]
# Relabelling the nodes leaves z0 unchanged.

# %%
perm = np.random.default_rng(1).permutation(g.n)
gp = g.permute(perm)
sv_p = build_spectrum_vector(sym_eigh(normalized_laplacian(decompose(gp).as_graph())),
                             sym_eigh(normalized_laplacian(gp)), 4, 8)
print(np.abs(init_spectral_token(sv_p, params).data - z0.data).max())
