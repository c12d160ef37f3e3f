import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectoken import autodiff as ad
from spectoken.autodiff import ContractError, Tape, Tensor
from spectoken.data import generate_synthetic
from spectoken.model import ModelConfig, init_params, prepare
from spectoken.spectral import NumericError
from spectoken.training import (AdamWState, CheckpointError, ReduceOnPlateau, TrainConfig,
                                UndefinedMetricError, adamw_step, avg_precision,
                                clip_grad_norm, evaluate, load_checkpoint, loss, lr_schedule,
                                roc_auc, save_checkpoint, task_metric, train_loop)

TINY = ModelConfig(mp_layers=1, mp_hidden=8, d_model=8, ffn_hidden=8, n_layers=1, n_heads=2,
                   pe_dim=3, k_T=4, k_G=4, t=4, readout_hidden=8, dropout=0.1)


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_ap(s, y):
    # mean over positives of the precision at that positive's score threshold
    out = 0.0
    for i in np.flatnonzero(y == 1):
        above = s >= s[i]
        out += (y[above] == 1).sum() / above.sum()
    return out / (y == 1).sum()


# ----------------------------------------------------------------------------
# AdamW

def test_adamw_zero_grad_no_decay():
    p = {"w": np.array([1.0, -2.0])}
    adamw_step(p, {"w": np.zeros(2)}, AdamWState(), 0.1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adamw_pure_decay():
    p = {"w": np.array([1.0, -2.0])}
    adamw_step(p, {"w": np.zeros(2)}, AdamWState(), 0.01, weight_decay=0.1)
    np.testing.assert_allclose(p["w"], [0.999, -1.998], rtol=0, atol=1e-15)


def test_adamw_first_step():
    p = {"w": np.array([0.0])}
    adamw_step(p, {"w": np.array([1.0])}, AdamWState(), 1e-3)
    assert abs(p["w"][0] + 1e-3 / (1 + 1e-8)) < 1e-18


def test_adamw_rejects_non_finite():
    with pytest.raises(NumericError):
        adamw_step({"w": np.zeros(1)}, {"w": np.array([np.inf])}, AdamWState(), 1e-3)


def test_adamw_without_decay_is_adam(rng):
    w0 = rng.normal(size=(3, 4))
    p = {"w": w0.copy()}
    state = AdamWState()
    ref, m, v = w0.copy(), np.zeros_like(w0), np.zeros_like(w0)
    lr, b1, b2, eps = 3e-3, 0.9, 0.999, 1e-8
    for t in range(1, 30):
        g = rng.normal(size=w0.shape)
        adamw_step(p, {"w": g.copy()}, state, lr)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref = ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    np.testing.assert_allclose(p["w"], ref, rtol=0, atol=1e-15)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == 5.0
    np.testing.assert_allclose(np.hypot(grads["a"], grads["b"]), [1.0])
    small = {"a": np.array([0.1])}
    clip_grad_norm(small, 1.0)
    assert small["a"][0] == 0.1


# ----------------------------------------------------------------------------
# schedules

def test_warmup_and_cosine():
    cfg = TrainConfig(epochs=150, warmup_epochs=50, lr=1e-3)
    assert lr_schedule(0, cfg) == 0.0
    assert lr_schedule(25, cfg) == pytest.approx(5e-4, abs=1e-18)
    assert lr_schedule(50, cfg) == 1e-3
    assert abs(lr_schedule(100, cfg) - 5e-4) < 1e-12
    assert abs(lr_schedule(150, cfg)) < 1e-18


def test_constant_and_rop_schedule():
    assert lr_schedule(7, TrainConfig(epochs=10, warmup_epochs=0, scheduler="none")) == 1e-3
    cfg = TrainConfig(epochs=10, warmup_epochs=0, scheduler="reduce_on_plateau")
    assert lr_schedule(7, cfg, rop_scale=0.25) == 2.5e-4


def test_reduce_on_plateau():
    rop = ReduceOnPlateau(0.5, 3)
    rop.observe(1.0)
    for _ in range(2):
        rop.observe(1.0)
    assert rop.scale == 1.0
    rop.observe(1.5)
    assert rop.scale == 0.5
    rop.observe(0.5)
    assert rop.scale == 0.5 and rop.bad == 0


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=5, warmup_epochs=10)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)


# ----------------------------------------------------------------------------
# losses

def test_loss_examples():
    assert loss(np.array([[1.5]]), np.array([[1.5]]), "regression").item() == 0.0
    assert loss(np.array([[0.0]]), np.array([[2.0]]), "regression").item() == 2.0
    assert abs(loss(np.array([[0.0]]), np.array([[1.0]]), "multilabel").item()
               - math.log(2)) < 1e-15


def test_loss_all_missing():
    with pytest.raises(ContractError):
        loss(np.zeros((2, 1)), np.full((2, 1), np.nan), "regression")


@pytest.mark.parametrize("kind", ["regression", "multilabel"])
def test_nan_column_does_not_change_loss(kind, rng):
    pred = rng.normal(size=(5, 2))
    target = (rng.random((5, 2)) < 0.5).astype(float)
    target[1, 0] = np.nan
    base = loss(pred, target, kind).item()
    wider = loss(np.hstack([pred, rng.normal(size=(5, 1))]),
                 np.hstack([target, np.full((5, 1), np.nan)]), kind).item()
    assert abs(base - wider) < 1e-15


@pytest.mark.parametrize("kind", ["regression", "multilabel"])
def test_loss_gradient(kind, rng):
    target = (rng.random((4, 3)) < 0.5).astype(float)
    target[0, 1] = np.nan
    x = Tensor(rng.uniform(-2, 2, (4, 3)) + 0.01, requires_grad=True)
    assert ad.grad_check(lambda t: loss(t, target, kind), x) < 1e-6


def test_multilabel_loss_is_stable():
    val = loss(np.array([[800.0, -800.0]]), np.array([[0.0, 1.0]]), "multilabel").item()
    assert val == 800.0


# ----------------------------------------------------------------------------
# metrics

def test_metric_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert avg_precision([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.3] * 4, [0, 1, 0, 1]) == 0.5
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        avg_precision([0.1, 0.2], [0, 0])


def test_task_metric_skips_undefined_tasks():
    pred = np.array([[0.1, 0.5], [0.9, 0.4]])
    target = np.array([[0.0, 1.0], [1.0, 1.0]])
    assert task_metric(pred, target, "roc_auc") == 1.0
    assert task_metric(np.array([[0.1], [0.9]]), np.array([[1.0], [np.nan]]), "mae") \
        == pytest.approx(0.9)


label_sets = st.integers(2, 50).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]) | st.floats(-3, 3),
             min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=300, deadline=None)
@given(label_sets)
def test_metrics_match_brute_force(data):
    s, y = np.array(data[0]), np.array(data[1])
    if 0 < y.sum() < y.size:
        assert abs(roc_auc(s, y) - brute_auc(s, y)) < 1e-12
    if y.sum() > 0:
        ap = avg_precision(s, y)
        assert abs(ap - brute_ap(s, y)) < 1e-12
        assert 0.0 <= ap <= 1.0


@settings(max_examples=50, deadline=None)
@given(label_sets)
def test_auc_invariant_to_monotone_transform(data):
    # a coarse grid keeps the transform strictly monotone in floating point
    s, y = np.round(np.array(data[0]) * 64) / 64, np.array(data[1])
    if 0 < y.sum() < y.size:
        assert roc_auc(np.exp(2 * s) - 7.0, y) == roc_auc(s, y)


# ----------------------------------------------------------------------------
# loop

@pytest.fixture(scope="module")
def tiny_data():
    samples = [prepare(g, TINY) for g in generate_synthetic(12, (5, 10), 4)]
    return samples[:9], samples[9:]


def test_epochs_zero_reports_initial_eval(tiny_data):
    train, valid = tiny_data
    params = init_params(TINY, 0)
    report = train_loop(TINY, params, train, valid, TrainConfig(epochs=0, warmup_epochs=0))
    assert [r.epoch for r in report.epochs] == [0]
    assert report.best_epoch == 0
    vloss, vmetric = evaluate(valid, TINY, params, "mae")
    assert report.epochs[0].valid_metric == vmetric


def test_loop_is_deterministic(tiny_data):
    train, valid = tiny_data
    cfg = TrainConfig(epochs=4, warmup_epochs=1, batch_size=4, seed=3)
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        report = train_loop(TINY, init_params(TINY, 1), train, valid, cfg, log=buf)
        logs.append((buf.getvalue(), report.summary()))
    assert logs[0][0] == logs[1][0]
    assert logs[0][1] == logs[1][1]
    lines = logs[0][0].splitlines()
    assert len(lines) == 5 and all(len(line.split("\t")) == 5 for line in lines)


def test_best_state_reproduces_best_metric(tiny_data):
    train, valid = tiny_data
    params = init_params(TINY, 2)
    report = train_loop(TINY, params, train, valid,
                        TrainConfig(epochs=5, warmup_epochs=0, batch_size=3, lr=3e-3))
    params.load_state(report.best_state)
    _, metric = evaluate(valid, TINY, params, "mae")
    assert abs(metric - report.best_valid_metric) < 1e-12
    assert report.best_valid_metric == min(r.valid_metric for r in report.epochs)


def test_loss_non_increasing_small_lr():
    cfg = ModelConfig(mp_layers=2, mp_hidden=64, d_model=64, ffn_hidden=64, n_layers=2,
                      n_heads=4, readout_hidden=64, dropout=0.0, use_epe=False)
    samples = [prepare(g, cfg) for g in generate_synthetic(64, (8, 24), 0)]
    tc = TrainConfig(epochs=10, warmup_epochs=0, lr=1e-4, scheduler="none", batch_size=64)
    report = train_loop(cfg, init_params(cfg, 0), samples, [], tc)
    losses = [r.train_loss for r in report.epochs[1:]]
    assert all(b <= a for a, b in zip(losses, losses[1:])), losses


# ----------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip(tmp_path):
    params = init_params(TINY, 7)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, TINY, params.state(), {"best_epoch": 3})
    cfg, loaded, meta = load_checkpoint(path, TINY)
    assert cfg == TINY and meta["extra"]["best_epoch"] == 3
    for k, v in params.store.items():
        assert np.array_equal(loaded[k].data, v.data)


def test_checkpoint_hash_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, TINY, init_params(TINY).state())
    other = ModelConfig(**{**TINY.to_dict(), "d_model": 16})
    with pytest.raises(CheckpointError):
        load_checkpoint(path, other)
