"""Graph transformers over coarse-tree tokens (``subformer_spec``) or node tokens
(``graphtrans_spec``), each led by a spectral token.

Graphs are featurised once into :class:`GraphSample` objects (spectra,
coarse-graining, index arrays) and collated into a :class:`Batch`.
The forward pass runs on a batch; every graph is its own sequence of
``[spectral token] + tokens``, padded to the longest sequence in the batch
with padded keys masked out of attention.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coarse import CoarseGraph, decompose
from .graph import Graph, degrees, normalized_laplacian
from .spectral import (Spectrum, SpectralTokenParams, build_spectrum_vector,
                       init_spectral_token, sym_eigh)

VARIANTS = ("subformer_spec", "graphtrans_spec")


class VocabularyError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Architecture hyperparameters. Defaults are sized for small-molecule
    regression (graphs of ~25 atoms)."""

    variant: str = "subformer_spec"
    mp_layers: int = 2
    mp_hidden: int = 64
    mp_type: str = "gine"
    mp_dropout: float = 0.0
    d_model: int = 128
    ffn_hidden: int = 128
    n_layers: int = 3
    n_heads: int = 8
    dropout: float = 0.1
    activation: str = "relu"
    use_epe: bool = True
    epe_mode: str = "linear"
    pe_dim: int = 10
    signnet_hidden: int = 8
    k_T: int = 16
    k_G: int = 16
    t: int = 16
    kernel: str = "mexican_hat"
    readout_hidden: int = 192
    n_tasks: int = 1
    task_kind: str = "regression"
    node_vocab: int = 32
    edge_vocab: int = 8
    clique_vocab: int = 16
    max_degree: int = 16

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.variant in VARIANTS, f"variant must be one of {VARIANTS}"),
            (self.mp_type == "gine", "mp_type must be 'gine'"),
            (self.epe_mode in ("linear", "signnet"), "epe_mode must be 'linear' or 'signnet'"),
            (self.activation in ("relu", "gelu"), "activation must be 'relu' or 'gelu'"),
            (self.task_kind in ("regression", "multilabel"),
             "task_kind must be 'regression' or 'multilabel'"),
            (self.kernel in ("mexican_hat", "heat", "gaussian"), "unknown kernel"),
            (self.d_model % self.n_heads == 0, "d_model must be divisible by n_heads"),
            (min(self.mp_hidden, self.d_model, self.ffn_hidden, self.n_heads, self.pe_dim,
                 self.t, self.readout_hidden, self.n_tasks, self.k_G) >= 1,
             "sizes must be positive"),
            (self.k_T >= 0 and self.mp_layers >= 0 and self.n_layers >= 0,
             "layer and spectrum counts must be non-negative"),
            (0.0 <= self.dropout < 1.0 and 0.0 <= self.mp_dropout < 1.0,
             "dropout must lie in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def tree_eigs(self) -> int:
        return self.k_T if self.variant == "subformer_spec" else 0

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# ----------------------------------------------------------------------------
# parameters

@dataclass
class ModelParams:
    """Flat, ordered store of named parameter tensors."""

    store: dict[str, Tensor] = field(default_factory=dict)
    kernel: str = "mexican_hat"

    def __getitem__(self, name: str) -> Tensor:
        return self.store[name]

    def __contains__(self, name: str) -> bool:
        return name in self.store

    def sub(self, prefix: str) -> dict[str, Tensor]:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.store.items() if k.startswith(p)}

    @property
    def spectral(self) -> SpectralTokenParams:
        return SpectralTokenParams(self.store["spec.thetas"], self.store["spec.W1"],
                                   self.store["spec.W2"], self.kernel)

    def tensors(self) -> list[Tensor]:
        return list(self.store.values())

    def zero_grad(self) -> None:
        for t in self.store.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.store.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.store.items():
            if state[k].shape != v.shape:
                raise ad.ShapeError(f"{k}: stored {state[k].shape}, expected {v.shape}")
            v.data = np.array(state[k], dtype=np.float64)


class _Init:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.store: dict[str, Tensor] = {}

    def put(self, name: str, value: np.ndarray) -> None:
        self.store[name] = Tensor(value, requires_grad=True, name=name)

    def linear(self, name: str, fan_in: int, fan_out: int, bias: bool = True) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        self.put(name + ".W", self.rng.uniform(-bound, bound, (fan_in, fan_out)))
        if bias:
            self.put(name + ".b", self.rng.uniform(-bound, bound, fan_out))

    def embedding(self, name: str, rows: int, dim: int) -> None:
        self.put(name, self.rng.normal(0.0, 1.0, (rows, dim)))

    def layer_norm(self, name: str, dim: int) -> None:
        self.put(name + ".g", np.ones(dim))
        self.put(name + ".b", np.zeros(dim))


def _init_signnet(init: _Init, name: str, cfg: ModelConfig) -> None:
    h = cfg.signnet_hidden
    init.linear(name + ".phi1", 1, h)
    init.linear(name + ".phi2", h, h)
    init.linear(name + ".rho1", cfg.pe_dim * h, cfg.pe_dim)
    init.linear(name + ".rho2", cfg.pe_dim, cfg.pe_dim)


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    init = _Init(np.random.default_rng(seed))
    h, d = cfg.mp_hidden, cfg.d_model
    subformer = cfg.variant == "subformer_spec"

    init.embedding("node_emb", cfg.node_vocab, h)
    init.embedding("edge_emb", cfg.edge_vocab, h)
    if subformer:
        init.embedding("clique_emb", cfg.clique_vocab, h)
    for layer in range(cfg.mp_layers):
        init.put(f"gine{layer}.eps", np.zeros(1))
        init.linear(f"gine{layer}.lin1", h, h)
        init.linear(f"gine{layer}.lin2", h, h)
        if subformer:
            init.linear(f"expand{layer}.proj", h, h, bias=False)
            init.linear(f"expand{layer}.ffl", h, h)
            init.linear(f"compress{layer}.proj", h, h, bias=False)
            init.linear(f"compress{layer}.ffl", h, h)

    init.embedding("dpe", cfg.max_degree + 1, cfg.pe_dim)
    init.linear("tok1", h + cfg.pe_dim, d)
    if cfg.use_epe:
        branches = ("tree", "graph") if subformer else ("graph",)
        for br in branches:
            if cfg.epe_mode == "linear":
                init.linear(f"epe.{br}", cfg.pe_dim, cfg.pe_dim)
            else:
                _init_signnet(init, f"epe.{br}", cfg)
        init.linear("tok2", d + len(branches) * cfg.pe_dim, d)

    spec = SpectralTokenParams.init(cfg.t, d, init.rng, cfg.kernel)
    for k, v in spec.tensors().items():
        init.store["spec." + k] = v

    for layer in range(cfg.n_layers):
        p = f"enc{layer}"
        init.layer_norm(p + ".ln1", d)
        for proj in ("q", "k", "v", "o"):
            init.linear(f"{p}.attn.{proj}", d, d)
        init.layer_norm(p + ".ln2", d)
        init.linear(p + ".ffn1", d, cfg.ffn_hidden)
        init.linear(p + ".ffn2", cfg.ffn_hidden, d)

    init.linear("ro1", d, cfg.readout_hidden)
    init.linear("ro2", cfg.readout_hidden, cfg.readout_hidden)
    init.linear("ro3", cfg.readout_hidden, cfg.n_tasks)
    return ModelParams(init.store, cfg.kernel)


# ----------------------------------------------------------------------------
# featurisation

@dataclass
class GraphSample:
    """Everything the forward pass needs from one graph, computed once."""

    graph: Graph
    coarse: Optional[CoarseGraph]
    spec_G: Spectrum
    spec_T: Optional[Spectrum]
    lam: np.ndarray  # (k_T + k_G,)
    U_G: np.ndarray  # (n, pe_dim)
    U_T: Optional[np.ndarray]  # (m, pe_dim)

    @property
    def n_tokens(self) -> int:
        return self.coarse.m if self.coarse is not None else self.graph.n


def truncate_eigenvectors(spec: Spectrum, k: int) -> np.ndarray:
    """First ``k`` eigenvector columns (smallest eigenvalues), zero-padded."""
    vecs = spec.eigenvectors[:, :k]
    out = np.zeros((vecs.shape[0], k))
    out[:, : vecs.shape[1]] = vecs
    return out


def prepare(g: Graph, cfg: ModelConfig, cg: Optional[CoarseGraph] = None) -> GraphSample:
    spec_G = sym_eigh(normalized_laplacian(g))
    if cfg.variant == "subformer_spec":
        cg = cg if cg is not None else decompose(g)
        spec_T = sym_eigh(normalized_laplacian(cg.as_graph()))
        U_T = truncate_eigenvectors(spec_T, cfg.pe_dim)
    else:
        cg, spec_T, U_T = None, None, None
    sv = build_spectrum_vector(spec_T, spec_G, cfg.tree_eigs, cfg.k_G)
    return GraphSample(g, cg, spec_G, spec_T, sv.values,
                       truncate_eigenvectors(spec_G, cfg.pe_dim), U_T)


@dataclass
class Assignment:
    """Sparse 0/1 matrix ``S`` of shape ``(m, n)`` as (row, col) index pairs."""

    rows: np.ndarray
    cols: np.ndarray
    m: int
    n: int

    @classmethod
    def from_dense(cls, S) -> "Assignment":
        S = np.asarray(S)
        rows, cols = np.nonzero(S)
        return cls(rows.astype(np.int64), cols.astype(np.int64), S.shape[0], S.shape[1])

    def lift(self, Z) -> Tensor:
        """``S^T @ Z``: each graph node sums the rows of its cliques."""
        return ad.index_add(ad.take(Z, self.rows), self.cols, self.n)

    def pool(self, X) -> Tensor:
        """``S @ X``: each clique sums the rows of its nodes."""
        return ad.index_add(ad.take(X, self.cols), self.rows, self.m)

    def pool_array(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros((self.m,) + X.shape[1:])
        np.add.at(out, self.rows, X[self.cols])
        return out


@dataclass
class Batch:
    size: int
    node_codes: np.ndarray
    edge_src: np.ndarray  # directed, both orientations
    edge_dst: np.ndarray
    edge_codes: np.ndarray
    n_nodes: int
    assign: Optional[Assignment]
    clique_codes: Optional[np.ndarray]
    token_degrees: np.ndarray  # tree degrees, or node degrees for graphtrans
    U_T: Optional[np.ndarray]
    U_G: np.ndarray  # already pooled by S for subformer
    lam: np.ndarray  # (B, k)
    token_index: np.ndarray  # (B, T) rows of the token matrix; padding -> n_rows
    token_mask: np.ndarray  # (B, T + 1) including the spectral token
    targets: np.ndarray  # (B, n_tasks)


def _check_codes(codes: np.ndarray, vocab: int, what: str) -> None:
    if codes.size and (codes.min() < 0 or codes.max() >= vocab):
        raise VocabularyError(f"{what} code outside [0, {vocab}): {codes.min()}..{codes.max()}")


def collate(samples: Sequence[GraphSample], cfg: ModelConfig) -> Batch:
    subformer = cfg.variant == "subformer_spec"
    node_codes, src, dst, ecodes = [], [], [], []
    rows, cols, ccodes, tdeg, UT, UG, targets = [], [], [], [], [], [], []
    token_counts = []
    n_off = m_off = 0
    for s in samples:
        g = s.graph
        node_codes.append(np.asarray(g.node_attrs, dtype=np.int64))
        e = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(g.edge_attrs, dtype=np.int64)
        src += [e[:, 0] + n_off, e[:, 1] + n_off]
        dst += [e[:, 1] + n_off, e[:, 0] + n_off]
        ecodes += [c, c]
        if subformer:
            cg = s.coarse
            assign = Assignment.from_dense(cg.S)
            rows.append(assign.rows + m_off)
            cols.append(assign.cols + n_off)
            ccodes.append(np.minimum(np.asarray(cg.clique_attrs, dtype=np.int64),
                                     cfg.clique_vocab - 1))
            tdeg.append(cg.tree_degrees())
            UT.append(s.U_T)
            UG.append(assign.pool_array(s.U_G))
            token_counts.append(cg.m)
            m_off += cg.m
        else:
            tdeg.append(degrees(g))
            UG.append(s.U_G)
            token_counts.append(g.n)
        t = np.full(cfg.n_tasks, np.nan)
        t[: min(cfg.n_tasks, g.targets.shape[0])] = g.targets[: cfg.n_tasks]
        targets.append(t)
        n_off += g.n

    cat = lambda xs, dtype=np.int64: (np.concatenate(xs).astype(dtype) if xs  # noqa: E731
                                      else np.zeros(0, dtype=dtype))
    node_codes = cat(node_codes)
    edge_codes = cat(ecodes)
    _check_codes(node_codes, cfg.node_vocab, "node")
    _check_codes(edge_codes, cfg.edge_vocab, "edge")

    n_rows = m_off if subformer else n_off
    T = max(token_counts) if token_counts else 0
    token_index = np.full((len(samples), T), n_rows, dtype=np.int64)
    token_mask = np.zeros((len(samples), T + 1), dtype=bool)
    token_mask[:, 0] = True
    off = 0
    for b, cnt in enumerate(token_counts):
        token_index[b, :cnt] = np.arange(off, off + cnt)
        token_mask[b, 1: cnt + 1] = True
        off += cnt

    return Batch(
        size=len(samples),
        node_codes=node_codes,
        edge_src=cat(src), edge_dst=cat(dst), edge_codes=edge_codes,
        n_nodes=n_off,
        assign=Assignment(cat(rows), cat(cols), m_off, n_off) if subformer else None,
        clique_codes=cat(ccodes) if subformer else None,
        token_degrees=cat(tdeg),
        U_T=np.concatenate(UT) if subformer else None,
        U_G=np.concatenate(UG) if UG else np.zeros((0, cfg.pe_dim)),
        lam=np.stack([s.lam for s in samples]) if samples else np.zeros((0, 0)),
        token_index=token_index,
        token_mask=token_mask,
        targets=np.stack(targets) if targets else np.zeros((0, cfg.n_tasks)),
    )


# ----------------------------------------------------------------------------
# building blocks

def linear(x, p: dict, name: str) -> Tensor:
    out = ad.matmul(x, p[name + ".W"])
    b = p.get(name + ".b")
    return out + b if b is not None else out


def embed_inputs(node_codes, clique_codes, params: ModelParams,
                 cfg: Optional[ModelConfig] = None):
    """Embedding-table lookups for node codes and (optionally) clique codes."""
    tables = (("node_emb", node_codes), ("clique_emb", clique_codes))
    out = []
    for name, codes in tables:
        if codes is None:
            out.append(None)
            continue
        codes = np.asarray(codes, dtype=np.int64)
        _check_codes(codes, params[name].shape[0], name.split("_")[0])
        out.append(ad.take(params[name], codes))
    return out[0], out[1]


def gine_layer(X, src, dst, edge_emb, p: dict) -> Tensor:
    """``MLP((1 + eps) * x_i + sum_j relu(x_j + e_ij))`` over directed edges j -> i."""
    msg = ad.relu(ad.take(X, src) + edge_emb)
    agg = ad.index_add(msg, dst, X.shape[0])
    h = X * (p["eps"] + 1.0) + agg
    return linear(ad.relu(linear(h, p, "lin1")), p, "lin2")


def _ffl(x, p: dict, name: str) -> Tensor:
    return ad.leaky_relu(linear(x, p, name))


def expand_tree_to_graph(X, Z, S, p: dict) -> Tensor:
    """``X + FFL(S^T Z W)``."""
    S = S if isinstance(S, Assignment) else Assignment.from_dense(S)
    return X + _ffl(linear(S.lift(Z), p, "proj"), p, "ffl")


def compress_graph_to_tree(Z, X, S, p: dict) -> Tensor:
    """``Z + FFL(S X W)``."""
    S = S if isinstance(S, Assignment) else Assignment.from_dense(S)
    return Z + _ffl(linear(S.pool(X), p, "proj"), p, "ffl")


def build_dpe(token_degrees, table: Tensor, max_degree: int) -> Tensor:
    deg = np.minimum(np.asarray(token_degrees, dtype=np.int64), max_degree)
    return ad.take(table, deg)


def _signnet(U: np.ndarray, p: dict) -> Tensor:
    """``rho(concat_i [phi(u_i) + phi(-u_i)])`` with ``phi`` applied entrywise
    to each eigenvector column, so flipping any column's sign is exact."""
    rows, k = U.shape
    x = U.reshape(rows, k, 1)

    def phi(v):
        return linear(ad.relu(linear(v, p, "phi1")), p, "phi2")

    h = phi(x) + phi(-x)
    h = h.reshape(rows, -1)
    return linear(ad.relu(linear(h, p, "rho1")), p, "rho2")


def build_epe(U_T, SU_G, mode: str, params: ModelParams) -> Tensor:
    """``[Phi_tree(U_T), Phi_graph(S U_G)]``; ``U_T`` is None for the node-token variant."""
    parts = []
    for br, U in (("tree", U_T), ("graph", SU_G)):
        if U is None:
            continue
        p = params.sub(f"epe.{br}")
        if mode == "linear":
            parts.append(ad.matmul(U, p["W"]) + p["b"])
        else:
            parts.append(_signnet(np.asarray(U, dtype=np.float64), p))
    return ad.concat(parts, axis=-1)


def assemble_tokens(Z, dpe, epe, z0, token_index, params: ModelParams) -> Tensor:
    """Project ``[Z, DPE]`` (then ``[., EPE]``) to width ``d`` and prepend ``z0``.

    Returns ``(B, T + 1, d)``; rows of ``token_index`` equal to ``len(Z)`` are padding.
    """
    tok = linear(ad.concat([Z, dpe], axis=-1), params.store, "tok1")
    if epe is not None:
        tok = linear(ad.concat([tok, epe], axis=-1), params.store, "tok2")
    d = tok.shape[-1]
    padded = ad.take(ad.concat([tok, np.zeros((1, d))], axis=0), token_index)
    B = padded.shape[0]
    return ad.concat([ad.reshape(z0, (B, 1, d)), padded], axis=1)


def multi_head_attention(x, p: dict, n_heads: int, mask: Optional[np.ndarray],
                         drop: float = 0.0, train: bool = False,
                         rng: Optional[np.random.Generator] = None) -> Tensor:
    B, T, d = x.shape
    dh = d // n_heads

    def heads(t):
        return ad.transpose(ad.reshape(t, (B, T, n_heads, dh)), (0, 2, 1, 3))

    q = heads(linear(x, p, "q"))
    k = heads(linear(x, p, "k"))
    v = heads(linear(x, p, "v"))
    scores = ad.matmul(q, ad.swap_last(k)) * (1.0 / np.sqrt(dh))
    key_mask = None if mask is None else np.broadcast_to(mask[:, None, None, :], scores.shape)
    attn = ad.dropout(ad.softmax(scores, axis=-1, mask=key_mask), drop, train, rng)
    out = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (B, T, d))
    return linear(out, p, "o")


def transformer_encoder(tokens, params: ModelParams, cfg: ModelConfig,
                        mask: Optional[np.ndarray] = None, train: bool = False,
                        rng: Optional[np.random.Generator] = None) -> Tensor:
    """Pre-norm encoder: ``x += MHA(LN(x)); x += FFN(LN(x))`` per layer, no final norm."""
    act = ad.activation(cfg.activation)
    x = tokens
    for layer in range(cfg.n_layers):
        p = params.sub(f"enc{layer}")
        h = ad.layer_norm(x, p["ln1.g"], p["ln1.b"])
        h = multi_head_attention(h, params.sub(f"enc{layer}.attn"), cfg.n_heads, mask,
                                 cfg.dropout, train, rng)
        x = x + ad.dropout(h, cfg.dropout, train, rng)
        h = ad.layer_norm(x, p["ln2.g"], p["ln2.b"])
        h = ad.dropout(act(linear(h, p, "ffn1")), cfg.dropout, train, rng)
        x = x + ad.dropout(linear(h, p, "ffn2"), cfg.dropout, train, rng)
    return x


def readout(tokens, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Three-layer MLP on token 0 of each sequence: ``(B, T, d) -> (B, n_tasks)``."""
    B, T, d = tokens.shape
    first = ad.take(ad.reshape(tokens, (B * T, d)), np.arange(B) * T)
    act = ad.activation(cfg.activation)
    p = params.store
    h = act(linear(first, p, "ro1"))
    h = act(linear(h, p, "ro2"))
    return linear(h, p, "ro3")


# ----------------------------------------------------------------------------
# forward

def forward_batch(batch: Batch, cfg: ModelConfig, params: ModelParams, train: bool = False,
                  rng: Optional[np.random.Generator] = None,
                  spectral_override: Optional[Tensor] = None) -> Tensor:
    """Predictions ``(B, n_tasks)`` (regression values or logits).

    ``spectral_override`` replaces the spectral token with a given ``(d,)``
    vector, used for ablations.
    """
    subformer = cfg.variant == "subformer_spec"
    X, Z = embed_inputs(batch.node_codes, batch.clique_codes if subformer else None, params)
    e = ad.take(params["edge_emb"], batch.edge_codes)
    for layer in range(cfg.mp_layers):
        X1 = gine_layer(X, batch.edge_src, batch.edge_dst, e, params.sub(f"gine{layer}"))
        X1 = ad.dropout(X1, cfg.mp_dropout, train, rng)
        if subformer:
            X = expand_tree_to_graph(X1, Z, batch.assign, params.sub(f"expand{layer}"))
            Z = compress_graph_to_tree(Z, X, batch.assign, params.sub(f"compress{layer}"))
        else:
            X = X1
    source = Z if subformer else X

    dpe = build_dpe(batch.token_degrees, params["dpe"], cfg.max_degree)
    epe = build_epe(batch.U_T, batch.U_G, cfg.epe_mode, params) if cfg.use_epe else None
    if spectral_override is None:
        z0 = init_spectral_token(batch.lam, params.spectral)
    else:
        z0 = ad.mul(np.ones((batch.size, 1)), spectral_override)
    tokens = assemble_tokens(source, dpe, epe, z0, batch.token_index, params)
    tokens = transformer_encoder(tokens, params, cfg, batch.token_mask, train, rng)
    return readout(tokens, params, cfg)


def forward(g: Graph, cg: Optional[CoarseGraph], cfg: ModelConfig, params: ModelParams,
            train_flag: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Prediction ``(n_tasks,)`` for a single graph."""
    batch = collate([prepare(g, cfg, cg)], cfg)
    out = forward_batch(batch, cfg, params, train_flag, rng)
    return ad.reshape(out, (cfg.n_tasks,))


def predict(samples: Sequence[GraphSample], cfg: ModelConfig, params: ModelParams,
            batch_size: int = 256) -> np.ndarray:
    preds = [forward_batch(collate(samples[i:i + batch_size], cfg), cfg, params).data
             for i in range(0, len(samples), batch_size)]
    return np.concatenate(preds) if preds else np.zeros((0, cfg.n_tasks))


def gradcheck_model(g: Graph, cfg: ModelConfig, params: ModelParams, h: float = 1e-5,
                    coords_per_tensor: Optional[int] = 6,
                    seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error per parameter tensor, inference mode.

    ``coords_per_tensor`` samples that many flat coordinates per tensor
    (None checks every coordinate).
    """
    batch = collate([prepare(g, cfg)], cfg)
    rng = np.random.default_rng(seed)

    def f(_):
        return forward_batch(batch, cfg, params).sum()

    errors = {}
    for name, x in params.store.items():
        if coords_per_tensor is None or x.size <= coords_per_tensor:
            coords = None
        else:
            coords = rng.choice(x.size, coords_per_tensor, replace=False)
        errors[name] = ad.grad_check(f, x, h, coords, rng)
    params.zero_grad()
    return errors
