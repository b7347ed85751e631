"""Command-line entry point orchestrating data generation, training,
attacks, benign evaluation, the geometry check, and report rendering.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure,
4 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data, evaluation, geometry, svgplot, trainer
from .adversary import PerturbationConfig
from .errors import (
    CatrideError,
    ConfigError,
    NumericError,
    ParseError,
    SamplingError,
    ValidationError,
)
from .manifest import read_manifest, write_manifest
from .model import EmbeddingModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SEED_ENV_VAR = "TRIDE_SEED"


def _resolve_seed(flag_seed, file_seed, default=0):
    """Flag wins over the environment, environment over the config file."""
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    if file_seed is not None:
        return file_seed
    return default


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config_file(path):
    text = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib

        try:
            return tomllib.loads(text.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# -- gen-data ---------------------------------------------------------------

def run_gen_data(config, out):
    spec = data.SynthSpec(**config)
    dataset = data.generate_clusters(spec)
    out = _out_dir(out)
    data.save_csv(dataset, out / "dataset.csv")
    write_manifest(
        out,
        "gen-data",
        config,
        spec.seed,
        inputs={},
        outputs={"dataset": out / "dataset.csv"},
    )
    return EXIT_OK


def cmd_gen_data(args):
    base = {}
    if args.preset:
        base = dict(data.PRESETS[args.preset]) if args.preset in data.PRESETS else None
        if base is None:
            raise ConfigError(f"unknown preset {args.preset!r}")
    config = {
        "class_count": args.k,
        "per_class": args.per_class,
        "dim": args.dim,
        "seed": _resolve_seed(args.seed, None),
        **base,
    }
    if args.spread is not None:
        config["cluster_spread"] = args.spread
    if args.separation is not None:
        config["center_separation"] = args.separation
    return run_gen_data(config, args.out)


# -- train ------------------------------------------------------------------

def run_train(config, out):
    cfg = trainer.config_from_dict({k: v for k, v in config.items() if k != "data"})
    dataset = data.load_csv(config["data"])
    result = trainer.run_training(dataset, cfg)
    out = _out_dir(out)
    with open(out / "checkpoint_last.json", "w") as fh:
        json.dump(result.checkpoints["last"], fh)
        fh.write("\n")
    with open(out / "checkpoint_best.json", "w") as fh:
        json.dump(result.checkpoints["best"], fh)
        fh.write("\n")
    trainer.write_collapse_log(result.log, out / "collapse_log.jsonl")
    resolved = trainer.config_to_dict(cfg)
    resolved["data"] = config["data"]
    write_manifest(
        out,
        "train",
        resolved,
        cfg.seed,
        inputs={"data": config["data"]},
        outputs={
            "checkpoint_last": out / "checkpoint_last.json",
            "checkpoint_best": out / "checkpoint_best.json",
            "collapse_log": out / "collapse_log.jsonl",
        },
    )
    return EXIT_OK


def cmd_train(args):
    file_cfg = _load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - set(trainer.TrainConfig.__dataclass_fields__) - {"data"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = dict(file_cfg)
    for field, flag in [
        ("mode", args.mode),
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("learning_rate", args.lr),
        ("eta0", args.eta0),
        ("attention", getattr(args, "lambda")),
        ("epsilon", args.eps),
        ("alpha", args.alpha),
        ("max_steps", args.steps),
        ("embedding_dim", args.embedding_dim),
    ]:
        if flag is not None:
            config[field] = flag
    if args.no_progressive_alpha:
        config["progressive_alpha"] = False
    config["seed"] = _resolve_seed(args.seed, file_cfg.get("seed"))
    if args.data is not None:
        config["data"] = args.data
    if "data" not in config:
        raise ConfigError("a dataset is required: pass --data or put it in the config")
    return run_train(config, args.out)


# -- attack / eval ----------------------------------------------------------

def run_attack(config, out):
    model = EmbeddingModel.load(config["checkpoint"])
    dataset = data.load_csv(config["data"])
    cfg = PerturbationConfig(
        epsilon=config["epsilon"], alpha=config["alpha"], max_steps=config["max_steps"]
    )
    report = evaluation.run_attack_suite(
        model,
        dataset.inputs,
        dataset.labels,
        config["attacks"],
        config["trials"],
        cfg,
        config["seed"],
    )
    out = _out_dir(out)
    evaluation.save_attack_report(
        report, out / "attack_report.json", out / "attack_report.csv"
    )
    write_manifest(
        out,
        "attack",
        config,
        config["seed"],
        inputs={"checkpoint": config["checkpoint"], "data": config["data"]},
        outputs={
            "report_json": out / "attack_report.json",
            "report_csv": out / "attack_report.csv",
        },
    )
    return EXIT_OK


def cmd_attack(args):
    kinds = [k.strip() for k in args.attacks.split(",") if k.strip()]
    config = {
        "checkpoint": args.checkpoint,
        "data": args.data,
        "attacks": kinds,
        "trials": args.trials,
        "epsilon": args.eps,
        "alpha": args.alpha,
        "max_steps": args.steps,
        "seed": _resolve_seed(args.seed, None),
    }
    return run_attack(config, args.out)


def run_eval(config, out):
    model = EmbeddingModel.load(config["checkpoint"])
    dataset = data.load_csv(config["data"])
    payload = {
        "format_version": 1,
        "recall_at_1": evaluation.recall_at_k(model, dataset.inputs, dataset.labels, k=1),
        "recall_at_2": evaluation.recall_at_k(model, dataset.inputs, dataset.labels, k=2),
        "mean_average_precision": evaluation.mean_average_precision(
            model, dataset.inputs, dataset.labels
        ),
    }
    out = _out_dir(out)
    with open(out / "benign_metrics.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(
        out,
        "eval",
        config,
        config.get("seed", 0),
        inputs={"checkpoint": config["checkpoint"], "data": config["data"]},
        outputs={"metrics": out / "benign_metrics.json"},
    )
    return EXIT_OK


def cmd_eval(args):
    config = {"checkpoint": args.checkpoint, "data": args.data}
    return run_eval(config, args.out)


# -- geometry-check ---------------------------------------------------------

def run_geometry_check(config, out):
    thetas = np.linspace(config["theta_min"], np.pi, config["grid_points"])
    rows = geometry.shift_grid(thetas, hardness_change=config["hardness_change"])
    out = _out_dir(out)
    grid_path = out / "geometry_grid.csv"
    with open(grid_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "method", "closed_form", "measured", "rel_error"])
        for row in rows:
            writer.writerow(
                [
                    f"{row['theta']:.9f}",
                    row["method"],
                    repr(row["closed_form"]),
                    repr(row["measured"]),
                    repr(row["rel_error"]),
                ]
            )
    write_manifest(
        out, "geometry-check", config, 0, inputs={}, outputs={"grid": grid_path}
    )
    return EXIT_OK


def cmd_geometry_check(args):
    config = {
        "theta_min": args.theta_min,
        "grid_points": args.grid_points,
        "hardness_change": args.delta_h,
    }
    return run_geometry_check(config, args.out)


# -- report -----------------------------------------------------------------

def run_report(config, out):
    records = trainer.read_collapse_log(config["log"])
    if not records:
        raise ValidationError(f"{config['log']}: empty collapse log")
    out = _out_dir(out)
    xs = [float(r["global_batch"]) for r in records]
    sep_series = [("separability", xs, [r["separability"] for r in records])]
    svgplot.save_chart(
        sep_series, "Separability per mini-batch", "batch", "separability",
        out / "separability.svg",
    )
    shift_series = [("mean shift", xs, [r["mean_shift"] for r in records])]
    if any("mean_shift_sip" in r for r in records):
        shift_series.append(
            (
                "sip shift",
                [x for x, r in zip(xs, records) if "mean_shift_sip" in r],
                [r["mean_shift_sip"] for r in records if "mean_shift_sip" in r],
            )
        )
    svgplot.save_chart(
        shift_series, "Normalized embedding shift per mini-batch", "batch", "shift",
        out / "shift.svg",
    )
    dbar_series = [("d_bar", xs, [r["d_bar"] for r in records])]
    svgplot.save_chart(
        dbar_series, "Mean batch distance per mini-batch", "batch", "d_bar",
        out / "d_bar.svg",
    )
    csv_path = out / "diagnostics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["global_batch", "separability", "d_bar", "mean_shift"])
        for r in records:
            writer.writerow(
                [r["global_batch"], repr(r["separability"]), repr(r["d_bar"]),
                 repr(r["mean_shift"])]
            )
    write_manifest(
        out,
        "report",
        config,
        0,
        inputs={"log": config["log"]},
        outputs={
            "separability_svg": out / "separability.svg",
            "shift_svg": out / "shift.svg",
            "d_bar_svg": out / "d_bar.svg",
            "diagnostics_csv": csv_path,
        },
    )
    return EXIT_OK


def cmd_report(args):
    return run_report({"log": args.log}, args.out)


# -- rerun ------------------------------------------------------------------

RUNNERS = {
    "gen-data": run_gen_data,
    "train": run_train,
    "attack": run_attack,
    "eval": run_eval,
    "geometry-check": run_geometry_check,
    "report": run_report,
}


def cmd_rerun(args):
    payload = read_manifest(args.manifest)
    command = payload["command"]
    if command not in RUNNERS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    return RUNNERS[command](payload["config"], args.out)


# -- parser -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="catride",
        description="Collapse-aware triplet-decoupled adversarial training lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--preset", choices=sorted(data.PRESETS), default=None)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--spread", type=float, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an embedding model")
    p.add_argument("--data", default=None)
    p.add_argument("--config", default=None, help="JSON or TOML training config")
    p.add_argument("--mode", choices=trainer.MODES, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eta0", type=float, default=None)
    p.add_argument("--lambda", type=float, default=None, dest="lambda")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--no-progressive-alpha", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run the attack suite against a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--attacks", default="ca+,ca-,qa+,qa-,recall")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--eps", type=float, default=8.0 / 255.0)
    p.add_argument("--alpha", type=float, default=1.0 / 255.0)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="benign retrieval metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("geometry-check", help="closed forms vs the numeric oracle")
    p.add_argument("--theta-min", type=float, default=0.3)
    p.add_argument("--grid-points", type=int, default=25)
    p.add_argument("--delta-h", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geometry_check)

    p = sub.add_parser("report", help="render diagnostics plots from a collapse log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="replay a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ParseError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CatrideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
