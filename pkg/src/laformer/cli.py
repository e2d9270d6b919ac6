"""Command-line interface.

Subcommands: generate, train, eval, predict, sweep, plot. Configuration
files are JSON key-value documents mirroring the GenConfig / TrainConfig
fields (see README). The output root defaults to $LAFORMER_OUT when a
command's --out is omitted. Exit codes: 0 success, 2 configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, GenerationError, LaformerError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _out_dir(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    root = os.environ.get("LAFORMER_OUT")
    if root:
        return Path(root) / default_name
    return Path(default_name)


def _gen_config(args) -> "GenConfig":
    from .scenario import GenConfig

    data = _load_json(args.config) if args.config else {}
    known = set(GenConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown generation config keys: {sorted(unknown)}")
    for key in ("n_neighbors", "lane_count_choices", "lane_width_range",
                "speed_range", "noise_std_range"):
        if key in data:
            data[key] = tuple(data[key])
    return GenConfig(**data)


def cmd_generate(args) -> int:
    from .scenario import generate_dataset

    config = _gen_config(args)
    out = _out_dir(args.out, "dataset")
    summary = generate_dataset(config, out)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def _train_config(args) -> "TrainConfig":
    from .train import TrainConfig

    data = _load_json(args.config) if args.config else {}
    cfg = TrainConfig.from_dict(data)
    if getattr(args, "stage", None):
        cfg = replace(cfg, stage=args.stage)
    if getattr(args, "variant", None):
        cfg = replace(cfg, variant=args.variant)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _dataset_paths(data_dir: str) -> tuple[Path, Path]:
    root = Path(data_dir)
    scene_path = root / "scenes.ndjson"
    manifest = root / "split.json"
    if not scene_path.exists():
        raise DataError(f"no scene file at {scene_path}")
    if not manifest.exists():
        raise DataError(f"no split manifest at {manifest}")
    return scene_path, manifest


def cmd_train(args) -> int:
    from .sceneio import read_split
    from .train import run_training

    cfg = _train_config(args)
    scene_path, manifest = _dataset_paths(args.data)
    train_scenes, val_scenes = read_split(scene_path, manifest)
    out = _out_dir(args.out, "runs")
    ckpt_name = f"{cfg.variant}_stage{cfg.stage}_seed{cfg.seed}.npz"
    result = run_training(
        cfg,
        train_scenes,
        val_scenes,
        init_checkpoint=args.init,
        out_path=out / ckpt_name,
    )
    payload = {
        "checkpoint": str(result.checkpoint_path),
        "final_train_loss": result.history[-1]["train_loss"] if result.history else None,
    }
    if result.metrics:
        payload["val_metrics"] = result.metrics.to_dict()
    print(json.dumps(payload, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .sceneio import read_split
    from .train import evaluate_checkpoint

    scene_path, manifest = _dataset_paths(args.data)
    train_scenes, val_scenes = read_split(scene_path, manifest)
    scenes = val_scenes if args.split == "val" else train_scenes
    report = evaluate_checkpoint(args.ckpt, scenes, K=args.k)
    text = json.dumps(report.to_dict(), indent=1, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .checkpoint import load_model
    from .sceneio import read_scenes
    from .train import predict_scene

    model, cfg, meta = load_model(args.ckpt)
    scenes = read_scenes(args.scenes)
    if args.index is not None:
        scenes = [scenes[args.index]]
    out_path = Path(args.out) if args.out else _out_dir(None, "predictions.ndjson")
    try:
        with Path(out_path).open("w", encoding="utf-8") as fh:
            for scene in scenes:
                record = predict_scene(model, cfg, scene, K=args.k)
                fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
                fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write predictions to {out_path}: {exc}") from exc
    print(json.dumps({"predictions": str(out_path), "n_scenes": len(scenes)}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import format_table, run_ablation, run_sweep

    cfg = _train_config(args)
    scene_path, manifest = _dataset_paths(args.data)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    if args.axis == "variant":
        variants = tuple(args.values.split(","))
        rows = run_ablation(
            cfg, scene_path, manifest, variants=variants, seeds=seeds,
            max_workers=args.workers,
        )
        label = "variant"
    else:
        values = [float(v) if "." in v else int(v) for v in args.values.split(",")]
        rows = run_sweep(
            args.axis, values, cfg, scene_path, manifest, seeds=seeds,
            max_workers=args.workers,
        )
        label = "value"
    print(format_table(rows, label))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_scene
    from .sceneio import read_scenes

    scenes = read_scenes(args.scenes)
    scene = scenes[args.index]
    record = None
    if args.pred:
        lines = Path(args.pred).read_text().splitlines()
        record = json.loads(lines[args.index])
    out = Path(args.out) if args.out else _out_dir(None, f"scene_{args.index}.png")
    path = plot_scene(scene, record, out)
    print(json.dumps({"figure": str(path)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laformer",
        description="Lane-aware trajectory prediction on synthetic driving scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON generation config")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one stage of one variant")
    p.add_argument("--config", help="JSON train config")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--stage", type=int, choices=(1, 2))
    p.add_argument(
        "--variant",
        choices=("baseline", "baseline_s2", "spatial", "temporal", "full"),
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--init", help="stage-1 checkpoint (required for --stage 2)")
    p.add_argument("--out", help="output directory for checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--k", type=int, default=None, help="number of modes K")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export prediction records")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scenes", required=True, help="scene NDJSON file")
    p.add_argument("--index", type=int, help="predict a single scene")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", help="output NDJSON path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="sensitivity sweep or variant ablation")
    p.add_argument("--axis", required=True,
                   choices=("k", "lambda1", "lambda2", "lambda3", "variant"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", help="JSON train config")
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write rows JSON here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render a scene with its prediction")
    p.add_argument("--scenes", required=True)
    p.add_argument("--pred", help="prediction NDJSON from `predict`")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", help="figure path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GenerationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LaformerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
