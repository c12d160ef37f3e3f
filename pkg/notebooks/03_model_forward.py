# %% [markdown]
# # Forward pass and gradient check

# %%
import numpy as np

from spectoken.data import generate_synthetic
from spectoken.model import ModelConfig, collate, forward_batch, gradcheck_model, init_params, prepare

cfg = ModelConfig(d_model=32, n_heads=4, mp_hidden=32, ffn_hidden=32, readout_hidden=32)
params = init_params(cfg, seed=0)
print(sum(t.size for t in params.store.values()), "parameters")

# %%
graphs = generate_synthetic(4, (8, 16), 1)
samples = [prepare(g, cfg) for g in graphs]
batch = collate(samples, cfg)
print("token mask\n", batch.token_mask.astype(int))
print("predictions", forward_batch(batch, cfg, params).data.ravel())

# %% [markdown]
# The node-token variant skips coarse-graining, so there is one token per atom.

# %%
gt = ModelConfig(variant="graphtrans_spec", d_model=32, n_heads=4, mp_hidden=32,
                 ffn_hidden=32, readout_hidden=32)
gt_batch = collate([prepare(g, gt) for g in graphs], gt)
print(gt_batch.token_mask.sum(axis=1), [g.n + 1 for g in graphs])

# %% [markdown]
# Finite differences against the tape, a few coordinates per tensor.

# %%
errors = gradcheck_model(generate_synthetic(1, (6, 6), 0)[0], cfg, params, coords_per_tensor=4)
worst = sorted(errors.items(), key=lambda kv: -kv[1])[:5]
for name, err in worst:
    print(f"{name:20s} {err:.2e}")
