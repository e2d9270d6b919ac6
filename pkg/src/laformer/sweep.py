"""Ablation and hyperparameter-sensitivity runners.

Each run trains one configuration on a shared dataset and reports
validation metrics; sweep tables aggregate mean and standard deviation
over the configured seeds. Runs are independent and can execute in
parallel worker processes without affecting results (each run seeds its
own RNG state). The shared dataset is tensorized once and passed to
workers through an on-disk cache.
"""

from __future__ import annotations

import math
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from multiprocessing import get_context
from pathlib import Path

from .data import SceneDataset
from .errors import ConfigError
from .model import variant_has_stage2
from .train import TrainConfig, run_training

SWEEP_AXES = {
    "k": "k_stage1",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "lambda3": "lambda3",
}

# axes touching the second stage need a variant that has one
_AXIS_DEFAULT_VARIANT = {"lambda2": "full", "lambda3": "full"}


def train_variant(
    config: TrainConfig,
    train_data,
    val_data,
    out_path: str | Path | None = None,
) -> dict:
    """Train a variant through its stages; returns final val metrics."""
    stage1_cfg = replace(config, stage=1)
    two_stage = variant_has_stage2(config.variant)
    with tempfile.TemporaryDirectory() as tmp:
        s1_path = Path(tmp) / "stage1.npz" if two_stage else out_path
        result = run_training(
            stage1_cfg, train_data, val_data, out_path=s1_path
        )
        if two_stage:
            stage2_cfg = replace(config, stage=2)
            result = run_training(
                stage2_cfg,
                train_data,
                val_data,
                init_checkpoint=result.checkpoint_path,
                out_path=out_path,
            )
    report = result.metrics
    return {
        "variant": config.variant,
        "seed": config.seed,
        "k_stage1": config.k_stage1,
        "lambda1": config.lambda1,
        "lambda2": config.lambda2,
        "lambda3": config.lambda3,
        "min_ade": report.min_ade,
        "min_fde": report.min_fde,
        "miss_rate": report.miss_rate,
        "checkpoint": str(result.checkpoint_path) if result.checkpoint_path else None,
    }


def _run_task(args) -> dict:
    config_dict, train_cache, val_cache, ckpt_path = args
    train_data = SceneDataset.load(train_cache)
    val_data = SceneDataset.load(val_cache)
    return train_variant(
        TrainConfig.from_dict(config_dict), train_data, val_data, ckpt_path
    )


def run_jobs(
    configs: list[TrainConfig],
    scene_path,
    manifest_path,
    max_workers: int = 1,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Run training jobs, optionally across processes; order-stable output."""
    pipelines = {repr(c.pipeline_config()) for c in configs}
    if len(pipelines) != 1:
        raise ConfigError("all jobs in one sweep must share the pipeline config")

    from .sceneio import read_split

    train_scenes, val_scenes = read_split(scene_path, manifest_path)
    pcfg = configs[0].pipeline_config()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def ckpt_path(c: TrainConfig):
        if out_dir is None:
            return None
        return str(out_dir / f"{c.variant}_k{c.k_stage1}_seed{c.seed}.npz")

    with tempfile.TemporaryDirectory() as tmp:
        train_cache = str(Path(tmp) / "train.npz")
        val_cache = str(Path(tmp) / "val.npz")
        SceneDataset(train_scenes, pcfg).save(train_cache)
        SceneDataset(val_scenes, pcfg).save(val_cache)
        del train_scenes, val_scenes

        tasks = [
            (c.to_dict(), train_cache, val_cache, ckpt_path(c)) for c in configs
        ]
        if max_workers <= 1:
            return [_run_task(t) for t in tasks]
        ctx = get_context("spawn")
        with ProcessPoolExecutor(max_workers=max_workers, mp_context=ctx) as pool:
            return list(pool.map(_run_task, tasks))


def _aggregate(rows: list[dict], key: str) -> dict:
    values = [r[key] for r in rows]
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return {"mean": mean, "std": math.sqrt(var)}


def run_ablation(
    base_config: TrainConfig,
    scene_path,
    manifest_path,
    variants: tuple[str, ...] = ("baseline", "baseline_s2", "spatial", "temporal", "full"),
    seeds: tuple[int, ...] = (0, 1, 2),
    max_workers: int = 1,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Train every variant under every seed; one aggregated row per variant."""
    configs = [
        replace(base_config, variant=v, seed=s) for v in variants for s in seeds
    ]
    rows = run_jobs(configs, scene_path, manifest_path, max_workers, out_dir)
    table = []
    for v in variants:
        runs = [r for r in rows if r["variant"] == v]
        table.append(
            {
                "variant": v,
                "seeds": list(seeds),
                "min_ade": _aggregate(runs, "min_ade"),
                "min_fde": _aggregate(runs, "min_fde"),
                "miss_rate": _aggregate(runs, "miss_rate"),
                "runs": runs,
            }
        )
    return table


def run_sweep(
    axis: str,
    values: list,
    base_config: TrainConfig,
    scene_path,
    manifest_path,
    seeds: tuple[int, ...] = (0, 1, 2),
    max_workers: int = 1,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Sensitivity sweep along one axis; one aggregated row per value."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    field = SWEEP_AXES[axis]
    variant = base_config.variant
    if axis in _AXIS_DEFAULT_VARIANT and not variant_has_stage2(variant):
        variant = _AXIS_DEFAULT_VARIANT[axis]

    configs = []
    for value in values:
        for seed in seeds:
            cfg = replace(base_config, variant=variant, seed=seed, **{field: value})
            configs.append(cfg)
    rows = run_jobs(configs, scene_path, manifest_path, max_workers, out_dir)

    table = []
    for i, value in enumerate(values):
        runs = rows[i * len(seeds) : (i + 1) * len(seeds)]
        table.append(
            {
                "axis": axis,
                "value": value,
                "seeds": list(seeds),
                "min_ade": _aggregate(runs, "min_ade"),
                "min_fde": _aggregate(runs, "min_fde"),
                "miss_rate": _aggregate(runs, "miss_rate"),
                "runs": runs,
            }
        )
    return table


def format_table(rows: list[dict], label_key: str) -> str:
    """Plain-text sweep/ablation table with mean +/- std columns."""
    header = f"{'case':<14} {'minADE':>16} {'minFDE':>16} {'MR':>16}"
    lines = [header, "-" * len(header)]
    for row in rows:
        cells = [f"{row[label_key]!s:<14}"]
        for key in ("min_ade", "min_fde", "miss_rate"):
            agg = row[key]
            cells.append(f"{agg['mean']:>8.3f} ± {agg['std']:<5.3f}")
        lines.append(" ".join(cells))
    return "\n".join(lines)
