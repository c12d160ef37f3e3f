# %% [markdown]
# # Fitting the synthetic spectral target
#
# Sixty-four graphs, a small model, and a frozen-token run for comparison.
# Takes a couple of minutes on one core.

# %%
import numpy as np

from spectoken.autodiff import Tensor
from spectoken.data import generate_synthetic
from spectoken.model import ModelConfig, init_params, prepare
from spectoken.training import TrainConfig, train_loop

cfg = ModelConfig(d_model=64, mp_layers=2, mp_hidden=64, n_layers=2, n_heads=4, ffn_hidden=64,
                  readout_hidden=64, dropout=0.0, use_epe=False)
tc = TrainConfig(epochs=150, warmup_epochs=10, lr=1e-3, batch_size=16)
samples = [prepare(g, cfg) for g in generate_synthetic(64, (8, 24), 0)]
print("target range", min(s.graph.targets[0] for s in samples),
      max(s.graph.targets[0] for s in samples))

# %%
full = train_loop(cfg, init_params(cfg, 0), samples, [], tc)
print("final train MAE", full.epochs[-1].valid_metric)

# %%
frozen = Tensor(np.random.default_rng(12345).uniform(-1, 1, cfg.d_model))
ablation = train_loop(cfg, init_params(cfg, 0), samples, [], tc, spectral_override=frozen)
print("final train MAE", ablation.epochs[-1].valid_metric)

# %% [markdown]
# Both curves fall at a similar rate: with 64 graphs the message-passing path
# can memorise the targets without the spectral token.

# %%
for a, b in zip(full.epochs[::25], ablation.epochs[::25]):
    print(a.epoch, f"{a.valid_metric:.4f}", f"{b.valid_metric:.4f}")
