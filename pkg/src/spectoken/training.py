"""Optimisation, losses, metrics and the epoch loop."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .model import (GraphSample, ModelConfig, ModelParams, collate, forward_batch,
                    init_params)
from .spectral import NumericError


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given labels (e.g. only one class present)."""


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Optimisation settings; defaults suit small-molecule regression."""

    epochs: int = 950
    warmup_epochs: int = 50
    lr: float = 1e-3
    optimizer: str = "adamw"
    weight_decay: float = 0.0
    scheduler: str = "cosine"
    batch_size: int = 32
    seed: int = 0
    rop_factor: float = 0.5
    rop_patience: int = 10
    grad_clip: float = 5.0
    metric: str = "auto"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.warmup_epochs <= max(self.epochs, 0) or self.epochs < 0:
            raise ValueError("need 0 <= warmup_epochs <= epochs")
        if self.optimizer != "adamw":
            raise ValueError("optimizer must be 'adamw'")
        if self.scheduler not in ("cosine", "reduce_on_plateau", "none"):
            raise ValueError("scheduler must be 'cosine', 'reduce_on_plateau' or 'none'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.metric not in ("auto", "mae", "roc_auc", "avg_precision"):
            raise ValueError("metric must be auto, mae, roc_auc or avg_precision")

    def resolved_metric(self, task_kind: str) -> str:
        if self.metric != "auto":
            return self.metric
        return "mae" if task_kind == "regression" else "roc_auc"


# ----------------------------------------------------------------------------
# optimiser

@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState,
               lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """In-place AdamW update with decoupled weight decay and bias correction."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


# ----------------------------------------------------------------------------
# learning rate

def lr_schedule(epoch: int, cfg: TrainConfig, rop_scale: float = 1.0) -> float:
    """Learning rate for training epoch ``epoch`` (0-based).

    Linear warmup from 0, then cosine decay reaching 0 at ``cfg.epochs``.
    ``rop_scale`` is the accumulated reduce-on-plateau factor.
    """
    w, total = cfg.warmup_epochs, cfg.epochs
    if epoch < w:
        return cfg.lr * epoch / w
    if cfg.scheduler == "cosine":
        span = total - w
        if span <= 0:
            return cfg.lr
        frac = min(max((epoch - w) / span, 0.0), 1.0)
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * frac))
    if cfg.scheduler == "reduce_on_plateau":
        return cfg.lr * rop_scale
    return cfg.lr


class ReduceOnPlateau:
    """Multiply the rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, factor: float = 0.5, patience: int = 10):
        self.factor = factor
        self.patience = patience
        self.scale = 1.0
        self.best = math.inf
        self.bad = 0

    def observe(self, value: float) -> None:
        if value < self.best:
            self.best = value
            self.bad = 0
            return
        self.bad += 1
        if self.bad >= self.patience:
            self.scale *= self.factor
            self.bad = 0


# ----------------------------------------------------------------------------
# losses and metrics

def loss(pred, target, task_kind: str) -> Tensor:
    """Mean absolute error or mean sigmoid cross-entropy over non-NaN targets."""
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ad.ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    present = ~np.isnan(target)
    count = int(present.sum())
    if count == 0:
        raise ContractError("every target is missing")
    y = np.where(present, target, 0.0)
    mask = present.astype(np.float64)
    if task_kind == "regression":
        per = ad.abs_(pred - y)
    elif task_kind == "multilabel":
        per = ad.softplus(pred) - pred * y
    else:
        raise ValueError(f"unknown task kind {task_kind!r}")
    return (per * mask).sum() * (1.0 / count)


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    return s, y > 0.5


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties counting half."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(s.size)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def avg_precision(scores, labels) -> float:
    """Sum of precision times recall increment over descending score thresholds."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs a positive label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def task_metric(pred: np.ndarray, target: np.ndarray, metric: str) -> float:
    """Dataset-level metric; multi-task scores average over tasks where defined."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    present = ~np.isnan(target)
    if metric == "mae":
        if not present.any():
            return float("nan")
        return float(np.abs(pred - target)[present].mean())
    fn = {"roc_auc": roc_auc, "avg_precision": avg_precision}[metric]
    values = []
    for k in range(target.shape[1]):
        col = present[:, k]
        try:
            values.append(fn(pred[col, k], target[col, k]))
        except UndefinedMetricError:
            continue
    return float(np.mean(values)) if values else float("nan")


def higher_is_better(metric: str) -> bool:
    return metric != "mae"


# ----------------------------------------------------------------------------
# evaluation and training

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_metric: float
    lr: float

    def log_line(self) -> str:
        return "\t".join([str(self.epoch)] + [repr(float(v)) for v in
                                              (self.train_loss, self.valid_loss,
                                               self.valid_metric, self.lr)])


@dataclass
class MetricReport:
    metric: str
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_metric: float = float("nan")
    best_state: Optional[dict] = None

    def log_text(self) -> str:
        return "".join(r.log_line() + "\n" for r in self.epochs)

    def summary(self) -> dict:
        return {"metric": self.metric, "best_epoch": self.best_epoch,
                "best_valid_metric": self.best_valid_metric,
                "epochs": [asdict(r) for r in self.epochs]}


def evaluate(samples: Sequence[GraphSample], cfg: ModelConfig, params: ModelParams,
             metric: str, batch_size: int = 256,
             spectral_override: Optional[Tensor] = None) -> tuple[float, float]:
    """``(loss, metric)`` over ``samples`` in inference mode."""
    if not samples:
        return float("nan"), float("nan")
    preds, targets = [], []
    for i in range(0, len(samples), batch_size):
        batch = collate(samples[i:i + batch_size], cfg)
        preds.append(forward_batch(batch, cfg, params,
                                   spectral_override=spectral_override).data)
        targets.append(batch.targets)
    pred, target = np.concatenate(preds), np.concatenate(targets)
    try:
        lval = loss(pred, target, cfg.task_kind).item()
    except ContractError:
        lval = float("nan")
    return lval, task_metric(pred, target, metric)


def train_loop(model_cfg: ModelConfig, params: ModelParams, train: Sequence[GraphSample],
               valid: Sequence[GraphSample], cfg: TrainConfig,
               log: Optional[TextIO] = None,
               spectral_override: Optional[Tensor] = None,
               on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> MetricReport:
    """Mini-batch AdamW training with per-epoch validation.

    Epoch 0 is the evaluation of the initial parameters. The best-validation
    parameters are kept in ``report.best_state`` (training loss decides when
    there is no validation set). ``params`` holds the final weights on return.
    """
    if not train:
        raise ContractError("empty training set")
    metric = cfg.resolved_metric(model_cfg.task_kind)
    better = (lambda a, b: a > b) if higher_is_better(metric) else (lambda a, b: a < b)
    report = MetricReport(metric)
    rng = np.random.default_rng(cfg.seed)
    state = AdamWState()
    plateau = ReduceOnPlateau(cfg.rop_factor, cfg.rop_patience)
    train = list(train)

    def record(epoch: int, train_loss: float, lr: float) -> None:
        if valid:
            vloss, vmetric = evaluate(valid, model_cfg, params, metric,
                                      spectral_override=spectral_override)
        else:
            vloss, vmetric = evaluate(train, model_cfg, params, metric,
                                      spectral_override=spectral_override)
        rec = EpochRecord(epoch, train_loss, vloss, vmetric, lr)
        report.epochs.append(rec)
        if log is not None:
            log.write(rec.log_line() + "\n")
            log.flush()
        if report.best_state is None or better(vmetric, report.best_valid_metric):
            report.best_epoch = epoch
            report.best_valid_metric = vmetric
            report.best_state = params.state()
        if cfg.scheduler == "reduce_on_plateau" and epoch > 0:
            plateau.observe(vloss)
        if on_epoch is not None:
            on_epoch(rec)

    init_loss, _ = evaluate(train, model_cfg, params, metric, spectral_override=spectral_override)
    record(0, init_loss, lr_schedule(0, cfg, plateau.scale))

    names = list(params.store)
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg, plateau.scale)
        order = rng.permutation(len(train))
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, len(train), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = collate([train[i] for i in idx], model_cfg)
            present = int((~np.isnan(batch.targets)).sum())
            if present == 0:
                continue
            drop_rng = np.random.default_rng([cfg.seed, epoch, b])
            params.zero_grad()
            with ad.Tape() as tape:
                pred = forward_batch(batch, model_cfg, params, train=True, rng=drop_rng,
                                     spectral_override=spectral_override)
                lval = loss(pred, batch.targets, model_cfg.task_kind)
            tape.backward(lval)
            grads = {k: params[k].grad for k in names if params[k].grad is not None}
            clip_grad_norm(grads, cfg.grad_clip)
            adamw_step({k: params[k].data for k in names}, grads, state, lr,
                       weight_decay=cfg.weight_decay)
            total += lval.item() * present
            seen += present
        record(epoch + 1, total / max(seen, 1), lr)
    params.zero_grad()
    return report


# ----------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, cfg: ModelConfig, state: dict[str, np.ndarray],
                    extra: Optional[dict] = None) -> None:
    meta = {"config": cfg.to_dict(), "config_hash": cfg.digest(),
            "shapes": {k: list(v.shape) for k, v in state.items()},
            "extra": extra or {}}
    arrays = {f"p:{k}": v for k, v in state.items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path, expected: Optional[ModelConfig] = None
                    ) -> tuple[ModelConfig, ModelParams, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        state = {k[2:]: data[k] for k in data.files if k.startswith("p:")}
    cfg = ModelConfig(**meta["config"])
    if cfg.digest() != meta["config_hash"]:
        raise CheckpointError("checkpoint config does not match its stored hash")
    if expected is not None and expected.digest() != meta["config_hash"]:
        raise CheckpointError("checkpoint was written for a different model config")
    params = init_params(cfg, 0)
    for k, shape in meta["shapes"].items():
        if list(state[k].shape) != shape:
            raise CheckpointError(f"{k}: stored shape {state[k].shape} != recorded {shape}")
    params.load_state(state)
    return cfg, params, meta
