"""Two-stage training loop, evaluation, and prediction export.

Stage 1 optimizes the stage-1 objective (lane + regression + mode
classification) over the encoder, lane-aware module, and decoder. Stage 2
resumes from a stage-1 checkpoint and optimizes the stage-2 objective over
all modules, including the refiner.

Deterministic mode pins every random source (init, shuffling, latent
samples) to the configured seed and runs single-threaded, so two runs with
the same config produce bit-identical metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import PipelineConfig, SceneDataset
from .decoder import classification_loss, stage1_loss, wta_regression_loss
from .errors import ConfigError
from .lane_aware import lane_loss
from .metrics import MetricsReport, compute_metrics, top_k_modes
from .model import LAformer, ModelConfig, variant_has_stage2, variant_uses_lanes
from .refine import angle_loss, offset_loss, stage2_loss, wta_mode
from .scene import Scene

PREDICTION_SCHEMA = "laformer-prediction/1"


@dataclass
class TrainConfig:
    stage: int = 1
    variant: str = "full"
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    d_model: int = 32
    n_modes: int = 6
    k_stage1: int = 2
    k_stage2: int = 2
    lambda1: float = 10.0
    lambda2: float = 5.0
    lambda3: float = 2.0
    t_h: int = 4
    t_f: int = 12
    sampling_period: float = 0.5
    radius_m: float = 50.0
    n_heads: int = 1
    z_dim: int = 2
    tau: float = 1.0
    wta_source: str = "refined"  # or "anchor": which trajectory picks m*
    K_eval: int = 6
    deterministic: bool = True
    align_heading: bool = False

    def validate(self) -> None:
        if self.stage not in (1, 2):
            raise ConfigError("stage must be 1 or 2")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.wta_source not in ("refined", "anchor"):
            raise ConfigError("wta_source must be 'refined' or 'anchor'")
        if self.K_eval > self.n_modes:
            raise ConfigError("K_eval cannot exceed n_modes")
        self.model_config().validate()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d_model=self.d_model,
            n_modes=self.n_modes,
            t_h=self.t_h,
            t_f=self.t_f,
            top_k=self.k_stage1 if self.stage == 1 else self.k_stage2,
            n_heads=self.n_heads,
            z_dim=self.z_dim,
            sampling_period=self.sampling_period,
            variant=self.variant,
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            t_h=self.t_h,
            t_f=self.t_f,
            radius_m=self.radius_m,
            align_heading=self.align_heading,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


def setup_determinism(seed: int, deterministic: bool = True) -> torch.Generator:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen


def compute_losses(out: dict, batch: dict, cfg: TrainConfig, stage: int) -> dict:
    """All loss terms plus the stage objective for one forward pass."""
    future = batch["future"]
    losses: dict = {}

    if out["score_logits"] is not None:
        labels = batch["labels"]
        if out["score_logits"].shape[1] == 1:  # goal-only (spatial) scoring
            labels = labels[:, -1:]
        l_lane = lane_loss(out["score_logits"], labels, from_logits=True)
    else:
        l_lane = future.new_zeros(())
    l_reg = wta_regression_loss(out["mu"], out["b"], future)
    l_cls = classification_loss(
        out["mu"], out["pi_logits"], future, cfg.tau, from_logits=True
    )
    l_s1 = stage1_loss(l_lane, l_reg, l_cls, cfg.lambda1)
    losses.update(lane=l_lane, reg=l_reg, cls=l_cls, stage1=l_s1)

    if stage == 2:
        anchors = out["anchors"]
        refined = out["refined"]
        wta_traj = refined if cfg.wta_source == "refined" else anchors
        m_star = wta_mode(wta_traj, future)
        l_off = offset_loss(out["delta"], anchors, future, m_star)
        l_ang = angle_loss(refined, future, m_star=m_star)
        l_s2 = stage2_loss(l_s1, l_off, l_ang, cfg.lambda2, cfg.lambda3)
        losses.update(offset=l_off, angle=l_ang, stage2=l_s2, total=l_s2)
    else:
        losses["total"] = l_s1
    return losses


@dataclass
class TrainResult:
    config: TrainConfig
    state_dict: dict
    metrics: MetricsReport | None
    history: list
    checkpoint_path: Path | None = None


def run_training(
    config: TrainConfig,
    train_scenes: list[Scene] | SceneDataset,
    val_scenes: list[Scene] | SceneDataset | None = None,
    *,
    init_checkpoint: str | Path | None = None,
    out_path: str | Path | None = None,
) -> TrainResult:
    """Train one stage; returns the result (and writes a checkpoint if asked)."""
    config.validate()
    gen = setup_determinism(config.seed, config.deterministic)

    model = LAformer(config.model_config())
    provenance = {"stages": [config.stage], "seed": config.seed}
    if config.stage == 2:
        if init_checkpoint is None:
            raise ConfigError("stage 2 requires a stage-1 checkpoint (init_checkpoint)")
        meta, state = load_checkpoint(init_checkpoint)
        if meta.get("stage") != 1:
            raise ConfigError(
                f"stage 2 must resume from a stage-1 checkpoint, got stage {meta.get('stage')}"
            )
        init_variant = meta.get("config", {}).get("variant")
        if init_variant != config.variant:
            raise ConfigError(
                f"checkpoint variant {init_variant!r} != configured {config.variant!r}"
            )
        if not variant_has_stage2(config.variant):
            raise ConfigError(f"variant {config.variant!r} has no stage 2")
        model.load_state_dict(state)
        provenance = {
            "stages": meta.get("provenance", {}).get("stages", [1]) + [2],
            "seed": config.seed,
            "stage1_checkpoint": str(init_checkpoint),
        }
    elif variant_uses_lanes(config.variant) is False and config.stage == 1:
        pass  # lane-free variants simply skip the lane pathway

    pcfg = config.pipeline_config()
    train_ds = (
        train_scenes
        if isinstance(train_scenes, SceneDataset)
        else SceneDataset(train_scenes, pcfg)
    )
    val_ds = None
    if val_scenes is not None:
        val_ds = (
            val_scenes
            if isinstance(val_scenes, SceneDataset)
            else SceneDataset(val_scenes, pcfg)
        )

    if config.stage == 1:
        trained = [
            p
            for name, p in model.named_parameters()
            if not name.startswith("refiner.")
        ]
    else:
        trained = list(model.parameters())
    optimizer = torch.optim.Adam(trained, lr=config.learning_rate)
    n_batches = math.ceil(len(train_ds) / config.batch_size)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(1, config.epochs * n_batches)
    )

    k = config.k_stage1 if config.stage == 1 else config.k_stage2
    history = []
    model.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(train_ds), generator=gen).numpy()
        epoch_loss = 0.0
        for batch in train_ds.iter_batches(config.batch_size, order):
            z = torch.randn(
                batch["future"].shape[0],
                config.z_dim,
                generator=gen,
                dtype=batch["future"].dtype,
            )
            out = model(batch, z=z, k=k, stage=config.stage)
            losses = compute_losses(out, batch, config, config.stage)
            optimizer.zero_grad()
            losses["total"].backward()
            optimizer.step()
            scheduler.step()
            epoch_loss += float(losses["total"].detach()) * batch["future"].shape[0]
        history.append({"epoch": epoch, "train_loss": epoch_loss / len(train_ds)})

    model.eval()
    metrics = None
    if val_ds is not None:
        metrics = evaluate_model(model, val_ds, config.K_eval, stage=config.stage, k=k)

    result = TrainResult(
        config=config, state_dict=model.state_dict(), metrics=metrics, history=history
    )
    if out_path is not None:
        result.checkpoint_path = save_checkpoint(
            out_path, model, config.to_dict(), config.stage, provenance
        )
    return result


@torch.no_grad()
def evaluate_model(
    model: LAformer,
    dataset: SceneDataset,
    K: int,
    stage: int | None = None,
    k: int | None = None,
    batch_size: int = 256,
    threshold: float = 2.0,
) -> MetricsReport:
    """minADE/minFDE/MR over a dataset; z is fixed at 0 for reproducibility."""
    if K > model.cfg.n_modes:
        raise ConfigError(f"K={K} exceeds the model's {model.cfg.n_modes} modes")
    if stage is None:
        stage = 2 if model.has_stage2 else 1
    model.eval()
    ades, fdes = [], []
    from .metrics import min_ade, min_fde

    for batch in dataset.iter_batches(batch_size):
        out = model(batch, z=None, k=k, stage=stage)
        traj = model.trajectories(out)
        top = top_k_modes(traj, out["pi"], K)
        ades.append(min_ade(top, batch["future"]))
        fdes.append(min_fde(top, batch["future"]))
    ade = torch.cat(ades)
    fde = torch.cat(fdes)
    return MetricsReport(
        min_ade=float(ade.mean()),
        min_fde=float(fde.mean()),
        miss_rate=float((fde > threshold).to(torch.float64).mean()),
        K=K,
        n_scenes=len(dataset),
    )


def evaluate_checkpoint(
    ckpt_path: str | Path, scenes: list[Scene] | SceneDataset, K: int | None = None
) -> MetricsReport:
    from .checkpoint import load_model

    model, cfg, meta = load_model(ckpt_path)
    if isinstance(scenes, SceneDataset):
        dataset = scenes
    else:
        for scene in scenes[:1]:
            target = scene.target_track()
            if (
                target.t_h != cfg.t_h
                or target.positions.shape[0] < cfg.t_h + cfg.t_f
            ):
                raise ConfigError("model and dataset horizons do not match")
        dataset = SceneDataset(scenes, cfg.pipeline_config())
    if cfg.t_f != dataset.cfg.t_f or cfg.t_h != dataset.cfg.t_h:
        raise ConfigError("model and dataset horizons do not match")
    K = cfg.K_eval if K is None else K
    stage = meta.get("stage", 1)
    k = cfg.k_stage1 if stage == 1 else cfg.k_stage2
    return evaluate_model(model, dataset, K, stage=stage, k=k)


@torch.no_grad()
def predict_scene(
    model: LAformer,
    cfg: TrainConfig,
    scene: Scene,
    K: int | None = None,
    stage: int | None = None,
) -> dict:
    """Prediction record for one scene, trajectories in the raw frame."""
    K = cfg.K_eval if K is None else K
    if K > model.cfg.n_modes:
        raise ConfigError(f"K={K} exceeds the model's {model.cfg.n_modes} modes")
    if stage is None:
        stage = 2 if model.has_stage2 else 1
    dataset = SceneDataset([scene], cfg.pipeline_config(), require_future=False)
    sample = dataset.samples[0]
    batch = dataset.full_batch()
    k = cfg.k_stage1 if stage == 1 else cfg.k_stage2
    out = model(batch, z=None, k=k, stage=stage)

    traj = model.trajectories(out)
    order = torch.argsort(out["pi"][0], descending=True, stable=True)[:K]
    chosen = traj[0, order].to(torch.float64).numpy()
    probs = out["pi"][0, order].to(torch.float64).numpy()

    origin = sample.origin
    rotation = sample.rotation
    if rotation != 0.0:
        c, s = math.cos(-rotation), math.sin(-rotation)
        rot = np.array([[c, -s], [s, c]])
        raw = chosen @ rot.T + origin
    else:
        raw = chosen + origin

    record = {
        "schema": PREDICTION_SCHEMA,
        "K": K,
        "t_f": cfg.t_f,
        "origin": origin.tolist(),
        "rotation": rotation,
        "probabilities": probs.tolist(),
        "trajectories": raw.tolist(),
        "metadata": dict(scene.metadata),
    }
    if out["candidates"] is not None:
        cand = out["candidates"]
        record["candidates"] = {
            "k": int(cand["k"]),
            "indices": cand["indices"][0].tolist(),
            "scores": cand["scores"][0].to(torch.float64).numpy().tolist(),
            "lane_segment_ids": list(sample.lane_segment_ids),
        }
    return record
