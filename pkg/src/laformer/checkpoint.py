"""Checkpoint archive format ``laformer-ckpt/1``.

A checkpoint is a single ``.npz`` archive holding every parameter array
under ``param/<module path>`` plus a ``__meta__`` JSON blob with the
schema version, the full training configuration, the stage, and
provenance. Arrays round-trip bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError

CKPT_SCHEMA = "laformer-ckpt/1"
_PARAM_PREFIX = "param/"


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    config: dict,
    stage: int,
    provenance: dict | None = None,
) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    meta = {
        "schema": CKPT_SCHEMA,
        "config": config,
        "stage": stage,
        "provenance": provenance or {},
    }
    arrays = {
        _PARAM_PREFIX + k: v.detach().cpu().numpy()
        for k, v in model.state_dict().items()
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise DataError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Returns (meta, state_dict of torch tensors)."""
    path = Path(path)
    try:
        with np.load(path) as archive:
            if "__meta__" not in archive:
                raise DataError(f"{path}: not a checkpoint archive (no __meta__)")
            meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
            if meta.get("schema") != CKPT_SCHEMA:
                raise ConfigError(
                    f"{path}: unsupported checkpoint schema {meta.get('schema')!r}"
                )
            state = {
                key[len(_PARAM_PREFIX) :]: torch.from_numpy(archive[key].copy())
                for key in archive.files
                if key.startswith(_PARAM_PREFIX)
            }
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return meta, state


def load_model(path: str | Path):
    """Rebuild the model (and its training config) from a checkpoint."""
    from .model import LAformer, ModelConfig
    from .train import TrainConfig

    meta, state = load_checkpoint(path)
    train_cfg = TrainConfig(**meta["config"])
    model = LAformer(train_cfg.model_config())
    model = model.to(torch.float32)
    model.load_state_dict(state)
    model.eval()
    return model, train_cfg, meta
