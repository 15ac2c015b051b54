"""Command line entry point; every subcommand prints one JSON document."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import COMPARED_ARCHITECTURES, bench_epoch_time, bench_workload
from .data import gen_linear_dataset, gen_parity_dataset, load_dataset, save_dataset
from .diagnostics import GRAD_TOL, model_gradcheck, primitive_gradchecks
from .errors import LmfMultError
from .models import ARCHITECTURES, ModelConfig, build_model, load_model, param_count, save_model
from .training import TrainConfig, evaluate, train


def _read_json(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _model_config(args, manifest=None) -> ModelConfig:
    raw = _read_json(args.config)
    if manifest is not None:
        raw.setdefault("input_dims", list(manifest.dims))
        raw.setdefault("output", "regression" if manifest.label_kind == "sentiment" else "emotions")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return ModelConfig.from_dict(raw)


def _train_config(args) -> TrainConfig:
    raw = _read_json(args.train_config)
    for key in ("epochs", "batch_size", "lr", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return TrainConfig.from_dict(raw)


def cmd_gen_data(args) -> dict:
    n = tuple(args.splits) if args.splits else args.n
    common = dict(dims=tuple(args.dims), len_range=(args.len_min, args.len_max), noise=args.noise,
                  aligned=args.aligned, seed=args.seed)
    if args.kind == "parity":
        ds = gen_parity_dataset(n, label_kind=args.label_kind, **common)
    else:
        ds = gen_linear_dataset(n, **common)
    path = save_dataset(ds, args.out)
    return {"path": str(path), "manifest": ds.manifest.to_json()}


def cmd_train(args) -> dict:
    ds = load_dataset(args.data)
    m = build_model(args.arch, _model_config(args, ds.manifest))
    result = train(m, ds, _train_config(args))
    report = evaluate(m, ds.test)
    seconds = np.array([e["seconds"] for e in result.log])
    report.epoch_seconds_mean = float(seconds.mean())
    report.epoch_seconds_std = float(seconds.std())
    out = {
        "architecture": args.arch,
        "param_count": param_count(m),
        "best_epoch": result.best_epoch,
        "log": result.log,
        "test": report.to_dict(),
    }
    if args.out:
        out["model_path"] = str(save_model(m, args.out))
    return out


def cmd_eval(args) -> dict:
    m = load_model(args.model)
    ds = load_dataset(args.data)
    report = evaluate(m, ds.split(args.split))
    return {"architecture": m.architecture, "split": args.split, **report.to_dict()}


def cmd_bench(args) -> dict:
    if args.data:
        ds = load_dataset(args.data)
        cfg = _model_config(args, ds.manifest)
        tc = _train_config(args)
    else:
        ds, cfg, tc = bench_workload(args.seed or 0)
    table = bench_epoch_time(args.archs, ds, tc, args.repeats, cfg)
    return {"repeats": args.repeats, "batch_size": tc.batch_size, "results": table}


def cmd_param_count(args) -> dict:
    m = build_model(args.arch, _model_config(args))
    return {"architecture": args.arch, "param_count": param_count(m), "stacks": m.stack_counts()}


def cmd_gradcheck(args) -> dict:
    if args.arch == "primitives":
        errors = primitive_gradchecks(args.seed)
    else:
        errors = model_gradcheck(args.arch, args.seed, args.output, max_entries=args.max_entries)
    worst = max(errors.values())
    return {
        "target": args.arch,
        "seed": args.seed,
        "max_rel_err": worst,
        "tolerance": GRAD_TOL,
        "pass": worst < GRAD_TOL,
        "per_tensor": errors,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmfmult", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--kind", choices=["parity", "linear"], default="parity")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--splits", type=int, nargs=3, metavar=("TRAIN", "VALID", "TEST"))
    p.add_argument("--dims", type=int, nargs=3, default=[8, 6, 4])
    p.add_argument("--len-min", type=int, default=4)
    p.add_argument("--len-max", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--aligned", action="store_true")
    p.add_argument("--label-kind", choices=["sentiment", "emotions"], default="sentiment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    def add_train_opts(p):
        p.add_argument("--config", help="JSON file with ModelConfig fields")
        p.add_argument("--train-config", help="JSON file with TrainConfig fields")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--arch", choices=ARCHITECTURES, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="where to write the trained model")
    add_train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time training epochs per architecture")
    p.add_argument("--archs", nargs="+", choices=ARCHITECTURES, default=list(COMPARED_ARCHITECTURES))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--data", help="dataset directory; defaults to the standard synthetic workload")
    add_train_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("param-count", help="count trainable parameters")
    p.add_argument("--arch", choices=ARCHITECTURES, required=True)
    p.add_argument("--config", help="JSON file with ModelConfig fields")
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--arch", choices=ARCHITECTURES + ("primitives",), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", choices=["regression", "emotions"], default="regression")
    p.add_argument("--max-entries", type=int, default=None, help="cap perturbed entries per tensor")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        result = args.func(args)
    except (LmfMultError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"lmfmult {args.command}: error: {exc}", file=sys.stderr)
        return 1
    json.dump(result, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
