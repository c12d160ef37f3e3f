"""Command-line entry point: ``spectoken {generate,spectrum,train,eval,gradcheck}``.

Exit codes: 0 success, 2 configuration or argument error, 3 data error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import data as dio
from .config import ConfigError, RunConfig, dump_run_config, load_run_config
from .graph import GraphValidationError, normalized_laplacian
from .model import ModelConfig, gradcheck_model, init_params, prepare
from .spectral import SpectralTokenParams, build_spectrum_vector, init_spectral_token, sym_eigh
from .training import (CheckpointError, evaluate, load_checkpoint, save_checkpoint,
                       train_loop)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4
GRADCHECK_TOL = 1e-4


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _threads(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _load_data(path) -> list:
    try:
        return dio.parse_dataset(path)
    except (OSError, dio.DatasetParseError, GraphValidationError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from None


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return load_run_config(path)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None


def _clean(values) -> list[float]:
    # rounding keeps records identical under node relabelling
    return [round(float(v), 10) + 0.0 for v in values]


# ----------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    if args.min_size > args.max_size or args.max_size > 64:
        raise CliError(EXIT_CONFIG, "need 1 <= --min-size <= --max-size <= 64")
    graphs = dio.generate_synthetic(args.n, (args.min_size, args.max_size), args.seed)
    try:
        dio.write_dataset(args.out, graphs)
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot write {args.out}: {exc}") from None
    print(f"wrote {len(graphs)} graphs to {args.out}")
    return EXIT_OK


def spectrum_record(g, k_graph: int, k_tree: int, token: SpectralTokenParams) -> dict:
    from .coarse import decompose

    spec_G = sym_eigh(normalized_laplacian(g))
    spec_T = sym_eigh(normalized_laplacian(decompose(g).as_graph()))
    sv = build_spectrum_vector(spec_T, spec_G, k_tree, k_graph)
    z0 = init_spectral_token(sv, token).data
    return {
        "graph_eigenvalues": _clean(spec_G.eigenvalues[:k_graph]),
        "tree_eigenvalues": _clean(spec_T.eigenvalues[:k_tree]),
        "z0": _clean(z0),
    }


def cmd_spectrum(args) -> int:
    graphs = _load_data(args.data)
    token = SpectralTokenParams.init(args.t, args.d_model, np.random.default_rng(args.seed),
                                     args.kernel)
    lines = [json.dumps(spectrum_record(g, args.k_graph, args.k_tree, token)) for g in graphs]
    text = "".join(line + "\n" for line in lines)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _load_config(args.config)
    graphs = _load_data(args.data)
    spec = dio.SplitSpec(tuple(run.data.split), run.data.split_seed,
                         require_valid=run.data.split[1] > 0)
    try:
        train, valid, test = dio.split(graphs, spec)
    except Exception as exc:  # ContractError from tiny datasets
        raise CliError(EXIT_DATA, str(exc)) from None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_run_config(run), encoding="utf-8")
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        dio.write_dataset(out / f"{name}.jsonl", part)

    cfg = run.model
    with _threads(args.threads):
        try:
            tr = [prepare(g, cfg) for g in train]
            va = [prepare(g, cfg) for g in valid]
            te = [prepare(g, cfg) for g in test]
        except ValueError as exc:
            raise CliError(EXIT_DATA, str(exc)) from None
        params = init_params(cfg, run.seed)
        with open(out / "metrics.tsv", "w", encoding="utf-8") as log:
            report = train_loop(cfg, params, tr, va, run.train, log=log)
        params.load_state(report.best_state)
        save_checkpoint(out / "best.ckpt", cfg, report.best_state,
                        {"best_epoch": report.best_epoch, "metric": report.metric})
        test_loss, test_metric = evaluate(te, cfg, params, report.metric)
        train_loss, train_metric = evaluate(tr, cfg, params, report.metric)

    final = {
        "metric": report.metric,
        "best_epoch": report.best_epoch,
        "best_valid_metric": report.best_valid_metric,
        "train_loss": train_loss, "train_metric": train_metric,
        "test_loss": test_loss, "test_metric": test_metric,
        "sizes": {"train": len(tr), "valid": len(va), "test": len(te)},
        "config_hash": cfg.digest(),
    }
    (out / "report.json").write_text(json.dumps(final, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(final))
    return EXIT_OK


def cmd_eval(args) -> int:
    expected = _load_config(args.config).model if args.config else None
    try:
        cfg, params, meta = load_checkpoint(args.checkpoint, expected)
    except CheckpointError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"cannot read checkpoint: {exc}") from None
    graphs = _load_data(args.data)
    metric = meta["extra"].get("metric") or ("mae" if cfg.task_kind == "regression" else "roc_auc")
    with _threads(args.threads):
        samples = [prepare(g, cfg) for g in graphs]
        lval, mval = evaluate(samples, cfg, params, metric)
    print(json.dumps({"n": len(samples), "loss": lval, "metric": metric, "value": mval}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.dropout_on:
        raise CliError(EXIT_CONFIG, "refusing to gradcheck with dropout on: "
                                    "sampled masks are not differentiable")
    run = _load_config(args.config)
    cfg = run.model
    if args.variant:
        cfg = ModelConfig(**{**cfg.to_dict(), "variant": args.variant})
    g = dio.generate_synthetic(1, (6, 6), args.seed)[0]
    params = init_params(cfg, args.seed)
    errors = gradcheck_model(g, cfg, params, coords_per_tensor=args.coords, seed=args.seed)
    groups: dict[str, float] = {}
    for name, err in errors.items():
        key = name.split(".")[0]
        groups[key] = max(groups.get(key, 0.0), err)
    for key, err in groups.items():
        status = "ok" if err < GRADCHECK_TOL else "FAIL"
        print(f"{key:<12s} {err:.3e} {status}")
    worst = max(groups.values())
    print(f"max relative error {worst:.3e} ({cfg.variant})")
    return EXIT_OK if worst < GRADCHECK_TOL else EXIT_VERIFY


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectoken",
                                     description="Graph spectral token models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_positive, default=64)
    p.add_argument("--min-size", type=_positive, default=8)
    p.add_argument("--max-size", type=_positive, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spectrum", help="dump eigenvalues and the spectral token per graph")
    p.add_argument("--data", required=True)
    p.add_argument("--k-graph", type=_positive, default=16)
    p.add_argument("--k-tree", type=_positive, default=16)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=_positive, default=128)
    p.add_argument("--t", type=_positive, default=16)
    p.add_argument("--kernel", choices=("mexican_hat", "heat", "gaussian"),
                   default="mexican_hat")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=_positive, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--threads", type=_positive, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=("subformer_spec", "graphtrans_spec"), default=None)
    p.add_argument("--coords", type=_positive, default=6,
                   help="coordinates sampled per parameter tensor")
    p.add_argument("--dropout-on", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
