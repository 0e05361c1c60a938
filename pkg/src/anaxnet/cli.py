"""Command line entry point: ``anaxnet {synth,adjacency,train,eval,gradcheck}``.

Exit codes: 0 success, 1 failed check or numeric failure, 2 usage or config
error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .adjacency import adjacency_from_labels
from .errors import ConfigError, DataError, FormatError, NumericError, ShapeError
from .metrics import evaluate
from .model import ModelConfig, predict_proba, toy_gradcheck
from .train import VARIANTS, TrainConfig, train

GRADCHECK_TOL = 1e-4


def _log(msg: str) -> None:
    print(msg, flush=True)


def _echo_config(args: argparse.Namespace) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    _log("config " + json.dumps(cfg, sort_keys=True))
    return cfg


def cmd_synth(args) -> int:
    _echo_config(args)
    if args.train is None and args.val is None and args.test is None:
        counts = dio.split_counts(args.images)
    elif None in (args.train, args.val, args.test):
        raise ConfigError("--train, --val and --test must be given together")
    else:
        counts = (args.train, args.val, args.test)
    n_ctx = args.labels // 2 if args.context is None else args.context
    if not 0 <= n_ctx <= args.labels:
        raise ConfigError(f"--context must lie in [0, {args.labels}]")
    spec = dio.SynthSpec(
        k=args.k,
        d=args.d,
        n_labels=args.labels,
        context_labels=tuple(range(args.labels - n_ctx, args.labels)),
        seed=args.seed,
        noise_std=args.noise,
        n_train=counts[0],
        n_val=counts[1],
        n_test=counts[2],
        propagation=args.propagation,
    )
    manifest, records = dio.generate_synthetic(spec)
    dio.write_dataset(manifest, records, args.out)
    _log(f"wrote {manifest.n_images} images to {args.out} (train/val/test = {counts})")
    return 0


def _split_arrays(data_dir, split):
    manifest, records = dio.load_dataset(data_dir, split)
    return manifest, dio.stack_records(records, manifest.k, manifest.d, manifest.n_labels)


def cmd_adjacency(args) -> int:
    _echo_config(args)
    manifest, (_, _, labels) = _split_arrays(args.data, "train")
    adj = adjacency_from_labels(labels, args.tau, k=manifest.k, n_labels=manifest.n_labels)
    out = args.out or Path(args.data) / "adjacency.bin"
    dio.save_adjacency(adj, out)
    edges = adj.edges()
    _log(f"tau={adj.tau} edges={len(edges)} written to {out}")
    _log("edge_set " + " ".join(f"{i}-{j}" for i, j in edges))
    truth = manifest.extra.get("synth", {}).get("graph")
    if truth is not None:
        g = np.triu(np.asarray(truth), 1)
        planted = list(zip(*map(lambda a: a.tolist(), np.nonzero(g))))
        _log(f"planted_graph_recovered={set(planted) == set(edges)}")
    return 0


def _adjacency_path(args) -> Path:
    return Path(args.adjacency) if args.adjacency else Path(args.data) / "adjacency.bin"


def cmd_train(args) -> int:
    _echo_config(args)
    manifest, tr = _split_arrays(args.data, "train")
    _, va = _split_arrays(args.data, "val")
    adj = None
    if args.model == "anaxnet":
        adj = dio.load_adjacency(_adjacency_path(args))
        if adj.k != manifest.k:
            raise ShapeError(f"adjacency has k={adj.k}, dataset has k={manifest.k}")
    config = ModelConfig(k=manifest.k, d=manifest.d, n_labels=manifest.n_labels, seed=args.seed)
    tcfg = TrainConfig(epochs=args.epochs, lr=args.lr, batch=args.batch, seed=args.seed, model=args.model)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []

    def log(msg):
        lines.append(msg)
        _log(msg)

    result = train(config, tcfg, tr, None if adj is None else adj.normalized, va, log=log)
    dio.save_checkpoint(result.params, config, out / "model_final.bin")
    dio.save_checkpoint(result.best_params, config, out / "model_best.bin")
    log(f"best_epoch={result.best_epoch}")
    (out / "train.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log(f"checkpoints written to {out}")
    return 0


def cmd_eval(args) -> int:
    _echo_config(args)
    manifest, (feats, mask, labels) = _split_arrays(args.data, args.split)
    if feats.shape[0] == 0:
        raise DataError(f"split {args.split!r} is empty")
    if args.oracle:
        probs = labels.astype(np.float64)
        name = "oracle"
    else:
        if args.checkpoint is None:
            raise ConfigError("--checkpoint is required unless --oracle is given")
        params, config = dio.load_checkpoint(args.checkpoint)
        ours = (config.d, config.n_labels)
        theirs = (manifest.d, manifest.n_labels)
        if ours != theirs:
            raise ShapeError(f"checkpoint (d, M) = {ours} but dataset (d, M) = {theirs}")
        A = None
        name = "baseline-fc" if "W" in params.params else "anaxnet"
        if name == "anaxnet":
            if config.k != manifest.k:
                raise ShapeError(f"checkpoint k={config.k} but dataset k={manifest.k}")
            A = dio.load_adjacency(_adjacency_path(args)).normalized
        probs = predict_proba(feats, mask, A, params)
    report = evaluate(probs, labels, manifest.region_names, manifest.label_names, name)
    out = Path(args.out)
    report.write(out)
    _log(f"macro_auc={report.macro():.6f} reports written to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    _echo_config(args)
    err = toy_gradcheck(args.seed, args.h, corrupt=args.corrupt)
    ok = err < GRADCHECK_TOL
    _log(f"max_relative_error={err:.3e} tolerance={GRADCHECK_TOL:.0e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anaxnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic region-feature dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--images", type=int, default=2000)
    p.add_argument("--train", type=int)
    p.add_argument("--val", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--labels", type=int, default=4)
    p.add_argument("--context", type=int, help="number of context-coded labels (default M//2)")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--propagation", type=float, default=0.8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("adjacency", help="build the region adjacency from the train split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=cmd_adjacency)

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--adjacency", type=Path)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=VARIANTS, default="anaxnet")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write per-region AUC reports")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--adjacency", type=Path)
    p.add_argument("--split", choices=dio.SPLITS, default="test")
    p.add_argument("--oracle", action="store_true", help="score with the labels themselves")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help="perturb the analytic gradient")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, FormatError, DataError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
