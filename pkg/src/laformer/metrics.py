"""Evaluation metrics: minADE_K, minFDE_K, and miss rate.

The K modes with the highest predicted probabilities are scored; the
minimum over modes of the average / final-step Euclidean error gives
minADE / minFDE, and a scene is a miss when its best final-step error is
strictly larger than the threshold (2.0 m).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
from torch import Tensor

from .errors import ConfigError

MISS_THRESHOLD_M = 2.0


@dataclass
class MetricsReport:
    min_ade: float
    min_fde: float
    miss_rate: float
    K: int
    n_scenes: int

    def to_dict(self) -> dict:
        return asdict(self)


def top_k_modes(trajectories: Tensor, probabilities: Tensor, K: int) -> Tensor:
    """Keep the K most probable modes, ordered by descending probability."""
    M = trajectories.shape[1]
    if K > M:
        raise ConfigError(f"K={K} exceeds the number of predicted modes M={M}")
    order = torch.argsort(probabilities, dim=-1, descending=True, stable=True)
    idx = order[:, :K]
    gather = idx.view(*idx.shape, 1, 1).expand(-1, -1, *trajectories.shape[2:])
    return trajectories.gather(1, gather)


def displacement_errors(trajectories: Tensor, future: Tensor) -> Tensor:
    """Per-mode per-step L2 errors [B, K, T]."""
    return torch.linalg.vector_norm(trajectories - future.unsqueeze(1), dim=-1)


def min_ade(trajectories: Tensor, future: Tensor) -> Tensor:
    return displacement_errors(trajectories, future).mean(dim=-1).min(dim=-1).values


def min_fde(trajectories: Tensor, future: Tensor) -> Tensor:
    return displacement_errors(trajectories, future)[..., -1].min(dim=-1).values


def misses(trajectories: Tensor, future: Tensor, threshold: float = MISS_THRESHOLD_M) -> Tensor:
    return min_fde(trajectories, future) > threshold


def compute_metrics(
    trajectories: Tensor,
    probabilities: Tensor,
    future: Tensor,
    K: int,
    threshold: float = MISS_THRESHOLD_M,
) -> MetricsReport:
    """Metrics over a batch of scenes. ``trajectories`` is [B, M, T, 2]."""
    top = top_k_modes(trajectories, probabilities, K)
    ade = min_ade(top, future)
    fde = min_fde(top, future)
    return MetricsReport(
        min_ade=float(ade.mean()),
        min_fde=float(fde.mean()),
        miss_rate=float((fde > threshold).to(torch.float64).mean()),
        K=K,
        n_scenes=trajectories.shape[0],
    )
