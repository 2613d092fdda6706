"""Command line entry point: ``marktpp {simulate,train,evaluate,sample,sweep-c}``.

Every command prints one JSON document on stdout. Exit codes: 0 success,
1 usage error, 2 invalid input (data, config or checkpoint), 3 numerical
failure. Log verbosity comes from ``MARKTPP_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .autograd import read_checkpoint
from .decoders import MODEL_KINDS
from .events import DatasetParseError, ValidationError, load_dataset, save_dataset, save_split, split_indices
from .hawkes import PRESET_NAMES, PRESET_NUM_SEQ, HawkesParams, NonStationaryError, RunawayCascadeError, preset, simulate_many
from .likelihood import NumericalError
from .metrics import evaluate
from .model import CheckpointMismatch, TPPModel
from .sampling import SamplingCapError, sample_sequences, sampling_report
from .training import DATASET_DEFAULTS, TrainConfig, train

log = logging.getLogger("marktpp")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3
CHECKPOINT = "checkpoint.json"
CONFIG = "config.json"
SPLIT = "split.json"
TRAIN_LOG = "train_log.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> dict:
    if (args.preset is None) == (args.params is None):
        raise UsageError("give exactly one of --preset or --params")
    num_seq = args.num_seq
    if num_seq is None:
        if args.preset is None:
            raise UsageError("--num-seq is required with --params")
        num_seq = PRESET_NUM_SEQ[args.preset]
    params = preset(args.preset) if args.preset else HawkesParams.from_json(json.loads(Path(args.params).read_text()))
    seqs = simulate_many(params, num_seq, args.t_end, args.seed)
    save_dataset(seqs, args.out)
    lengths = np.array([len(s) for s in seqs])
    return {
        "out": str(args.out),
        "num_sequences": len(seqs),
        "num_events": int(lengths.sum()),
        "mean_length": float(lengths.mean()),
        "seed": args.seed,
        "t_end": args.t_end,
        "params": params.to_json(),
    }


# -- train --------------------------------------------------------------------

# flag name -> TrainConfig field
_TRAIN_FLAGS = {
    "lr": "learning_rate",
    "weight_decay": "weight_decay",
    "batch_size": "batch_size",
    "patience": "patience",
    "max_epochs": "max_epochs",
    "seed": "seed",
    "num_components": "num_components",
    "hidden_size": "hidden_size",
    "emb_size": "emb_size",
    "time_scale": "time_scale",
    "input_time_transform": "input_time_transform",
    "compensator": "compensator",
    "mc_samples": "mc_samples",
    "grad_clip": "grad_clip",
}


def effective_config(args, kind: str | None = None) -> TrainConfig:
    """Defaults < dataset preset < ``--config`` file < explicit flags."""
    merged: dict = {}
    if args.dataset is not None:
        if args.dataset not in DATASET_DEFAULTS:
            raise UsageError(f"unknown dataset {args.dataset!r}; known: {sorted(DATASET_DEFAULTS)}")
        merged.update(DATASET_DEFAULTS[args.dataset])
    if args.config is not None:
        merged.update(json.loads(Path(args.config).read_text()))
    for flag, name in _TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            merged[name] = value
    if getattr(args, "raw_mu", False):
        merged["raw_mu"] = True
    if getattr(args, "no_grad_clip", False):
        merged["grad_clip"] = None
    if kind is not None:
        merged["kind"] = kind
    return TrainConfig.from_dict(merged)


def _load_splits(args, config: TrainConfig):
    data = load_dataset(args.data, time_scale=config.time_scale)
    idx = split_indices(len(data), seed=args.split_seed)
    return data, idx


def _fit(data, idx, config: TrainConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    save_split(idx, out_dir / SPLIT)
    with open(out_dir / TRAIN_LOG, "w", encoding="utf-8") as fh:

        def on_epoch(entry):
            fh.write(json.dumps(entry) + "\n")
            fh.flush()

        result = train(data.subset(idx["train"]), data.subset(idx["val"]), config, data.num_marks, on_epoch)
    result.model.save(
        out_dir / CHECKPOINT,
        {"time_scale": config.time_scale, "config_hash": config.config_hash(), "train_config": config.to_dict()},
    )
    summary = {
        "out_dir": str(out_dir),
        "model": config.kind,
        "config_hash": config.config_hash(),
        "epochs": len(result.log),
        "best_epoch": result.best_epoch,
        "best_val_nll": result.best_val_nll,
        "skipped_steps": result.skipped_steps,
        "diverged": result.diverged,
    }
    return summary, result


def cmd_train(args) -> dict:
    config = effective_config(args, args.model)
    data, idx = _load_splits(args, config)
    summary, result = _fit(data, idx, config, Path(args.out_dir))
    if result.diverged:
        _emit(summary)
        raise NumericalError(f"training diverged; best checkpoint (epoch {result.best_epoch}) kept in {args.out_dir}")
    return summary


# -- evaluate / sample --------------------------------------------------------


def _load_checkpoint(path):
    model = TPPModel.load(path)
    meta, _ = read_checkpoint(path)
    return model, meta


def cmd_evaluate(args) -> dict:
    model, meta = _load_checkpoint(args.checkpoint)
    if args.model is not None and meta.get("model_kind") != args.model:
        raise CheckpointMismatch(f"checkpoint holds a {meta.get('model_kind')!r} model, expected {args.model!r}")
    scale = float(meta.get("time_scale", 1.0))
    data = load_dataset(args.data, time_scale=scale, num_marks=model.num_marks)
    if args.split == "all":
        seqs = data.sequences
    else:
        split_file = Path(args.split_file) if args.split_file else Path(args.checkpoint).parent / SPLIT
        with open(split_file, encoding="utf-8") as fh:
            idx = json.load(fh)[args.split]
        seqs = data.subset(idx).sequences
    mc_seed = args.seed if model.intensity_based and model.config.compensator == "mc" else None
    report = evaluate(
        model, seqs, split=args.split, config_hash=meta.get("config_hash", ""),
        mc_seed=mc_seed, mc_samples=args.mc_samples, predict_at=args.predict_mark_at,
    )
    return report.to_dict()


def cmd_sample(args) -> dict:
    model, meta = _load_checkpoint(args.checkpoint)
    scale = float(meta.get("time_scale", 1.0))
    seqs = sample_sequences(model, args.num_seq, args.t_end * scale, seed=args.seed)
    save_dataset(seqs, args.out, time_scale=scale)
    payload = {"out": str(args.out), "num_sequences": len(seqs), "num_events": int(sum(len(s) for s in seqs))}
    if args.data is not None:
        real = load_dataset(args.data, time_scale=scale, num_marks=model.num_marks)
        payload["report"] = sampling_report(real.sequences, seqs, model.num_marks, bins=args.bins)
    return payload


# -- sweep over mixture components ---------------------------------------------


def cmd_sweep_c(args) -> dict:
    values = [int(v) for v in args.values.split(",") if v.strip()]
    if not values or min(values) < 1:
        raise UsageError("--values must be a comma-separated list of positive integers")
    base = effective_config(args, "lnm_dep")
    data, idx = _load_splits(args, base)
    test = data.subset(idx["test"]).sequences
    rows = []
    for c in values:
        config = TrainConfig.from_dict({**base.to_dict(), "num_components": c})
        _, result = _fit(data, idx, config, Path(args.out_dir) / f"C{c}")
        rep = evaluate(result.model, test, split="test", config_hash=config.config_hash())
        rows.append({"C": c, "time_nll": rep.time_nll, "mark_nll": rep.mark_nll, "total_nll": rep.total_nll,
                     "mean_time_nll": rep.mean_time_nll, "mean_mark_nll": rep.mean_mark_nll})
    return {"model": "lnm_dep", "split": "test", "grid": rows}


# -- parser -------------------------------------------------------------------


def _train_options(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="JSON-lines dataset")
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    p.add_argument("--dataset", help=f"hyperparameter preset: {', '.join(DATASET_DEFAULTS)}")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--lr", type=_positive_float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--num-components", type=_positive_int)
    p.add_argument("--hidden-size", type=_positive_int)
    p.add_argument("--emb-size", type=_positive_int)
    p.add_argument("--time-scale", type=_positive_float)
    p.add_argument("--input-time-transform", choices=("log", "raw"))
    p.add_argument("--compensator", choices=("closed", "mc"))
    p.add_argument("--mc-samples", type=_positive_int)
    p.add_argument("--grad-clip", type=_positive_float)
    p.add_argument("--no-grad-clip", action="store_true")
    p.add_argument("--raw-mu", action="store_true", help="use the mixture location without the exp map")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marktpp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a multivariate Hawkes dataset")
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--params", help="JSON file with mu, alpha, beta (and optional kernel)")
    p.add_argument("--num-seq", type=_positive_int, help="defaults to the published count for --preset")
    p.add_argument("--t-end", type=_positive_float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model and keep the best validation checkpoint")
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    _train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="NLL and mark F1 of a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-file", help="defaults to split.json beside the checkpoint")
    p.add_argument("--model", choices=MODEL_KINDS, help="expected model kind")
    p.add_argument("--mc-samples", type=_positive_int, default=1000)
    p.add_argument("--predict-mark-at", choices=("observed", "sampled-mean"), default="observed")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample", help="generate sequences from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--num-seq", type=_positive_int, required=True)
    p.add_argument("--t-end", type=_positive_float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="real dataset to compare against")
    p.add_argument("--bins", type=_positive_int, default=20)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep-c", help="train the dependent LNM for several mixture sizes")
    p.add_argument("--values", default="1,2,4,8,16,32,64")
    _train_options(p)
    p.set_defaults(func=cmd_sweep_c)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MARKTPP_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        _emit(args.func(args))
    except UsageError as exc:
        print(f"marktpp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, RunawayCascadeError, SamplingCapError, FloatingPointError) as exc:
        print(f"marktpp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, DatasetParseError, CheckpointMismatch, NonStationaryError,
            FileNotFoundError, IsADirectoryError, KeyError, json.JSONDecodeError, ValueError) as exc:
        print(f"marktpp: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
