"""Second-stage motion refinement.

Each stage-1 mode is treated as an anchor: the observed trajectory is
concatenated with the predicted one, re-encoded by a separate temporal
encoder, and a two-layer head maps [h, h_att, h_dot] to a per-mode offset.
The refined trajectory is anchor + offset.

Offset and angle losses use the same winner-takes-all mode, chosen on the
refined trajectories by default.
"""

from __future__ import annotations

import warnings

import torch
from torch import Tensor, nn

from .data import COORD_SCALE
from .decoder import wta_mode, _select_mode
from .encoder import VectorSequenceEncoder

ANGLE_EPS = 1e-6


class MotionRefiner(nn.Module):
    def __init__(self, d_model: int, t_h: int, t_f: int, sampling_period: float):
        super().__init__()
        self.t_h = t_h
        self.t_f = t_f
        self.sampling_period = sampling_period
        # same 8-feature vectorization as observed trajectories
        self.encoder = VectorSequenceEncoder(8, d_model)
        self.offset_head = nn.Sequential(
            nn.Linear(3 * d_model, d_model),
            nn.ReLU(),
            nn.Linear(d_model, t_f * 2),
        )

    def re_encode(self, observed: Tensor, predicted: Tensor) -> Tensor:
        """Encode the full observed+predicted trajectory per mode -> [B, M, D]."""
        B, M, T, _ = predicted.shape
        full = torch.cat(
            [observed.unsqueeze(1).expand(B, M, self.t_h, 2), predicted], dim=2
        )
        L = self.t_h + T - 1
        d_s = full[:, :, :-1, :] * COORD_SCALE
        d_e = full[:, :, 1:, :] * COORD_SCALE
        # end step of vector i is -t_h + 2 + i on the scene's step grid
        steps = torch.arange(L, device=full.device, dtype=full.dtype) - (self.t_h - 2)
        ts = (steps * self.sampling_period).view(1, 1, L, 1).expand(B, M, L, 1)
        cls = full.new_zeros(B, M, L, 3)
        cls[..., 0] = 1.0  # target agent
        feats = torch.cat([d_s, d_e, ts, cls], dim=-1).reshape(B * M, L, 8)
        mask = torch.ones(B * M, L, dtype=torch.bool, device=full.device)
        return self.encoder(feats, mask).view(B, M, -1)

    def predict_offset(self, h: Tensor, h_att: Tensor, h_dot: Tensor) -> Tensor:
        """Per-mode offsets [B, M, t_f, 2] from the three motion encodings."""
        B, M, D = h_dot.shape
        x = torch.cat(
            [
                h.unsqueeze(1).expand(B, M, -1),
                h_att.unsqueeze(1).expand(B, M, -1),
                h_dot,
            ],
            dim=-1,
        )
        return self.offset_head(x).view(B, M, self.t_f, 2)

    def forward(self, h: Tensor, h_att: Tensor, observed: Tensor, anchors: Tensor):
        h_dot = self.re_encode(observed, anchors)
        delta = self.predict_offset(h, h_att, h_dot)
        return delta, anchors + delta


def offset_loss(
    delta_hat: Tensor,
    anchors: Tensor,
    future: Tensor,
    m_star: Tensor | None = None,
    reduce: str = "mean",
) -> Tensor:
    """Mean per-step L2 norm between predicted and true offsets.

    The true offset is future - anchor for the winning mode; by default the
    winner is chosen on the refined trajectories (anchor + offset).
    """
    if m_star is None:
        m_star = wta_mode(anchors + delta_hat, future)
    d_hat = _select_mode(delta_hat, m_star)
    d_true = future - _select_mode(anchors, m_star)
    per_scene = torch.linalg.vector_norm(d_hat - d_true, dim=-1).mean(dim=-1)
    if reduce == "none":
        return per_scene
    return per_scene.mean()


def angle_loss(
    refined: Tensor,
    future: Tensor,
    x0: Tensor | None = None,
    m_star: Tensor | None = None,
    eps: float = ANGLE_EPS,
    reduce: str = "mean",
) -> Tensor:
    """Negative cosine of the heading error from the last observed position.

    Headings are arctan2 of the displacement from ``x0`` (the origin in the
    normalized frame). Steps where either displacement is shorter than
    ``eps`` are masked; the mean runs over valid steps, and a scene with no
    valid step contributes 0 with a warning.
    """
    if m_star is None:
        m_star = wta_mode(refined, future)
    pred = _select_mode(refined, m_star)
    if x0 is None:
        x0 = torch.zeros_like(future[:, 0, :])
    dp = pred - x0.unsqueeze(1)
    dg = future - x0.unsqueeze(1)
    valid = (torch.linalg.vector_norm(dp, dim=-1) >= eps) & (
        torch.linalg.vector_norm(dg, dim=-1) >= eps
    )
    theta_hat = torch.atan2(dp[..., 1], dp[..., 0])
    theta = torch.atan2(dg[..., 1], dg[..., 0])
    per_step = -torch.cos(theta_hat - theta)

    n_valid = valid.sum(dim=-1)
    if bool((n_valid == 0).any()):
        warnings.warn("angle loss: scene with no valid step, contributing 0")
    per_scene = (per_step * valid.to(per_step.dtype)).sum(dim=-1) / n_valid.clamp(
        min=1
    ).to(per_step.dtype)
    if reduce == "none":
        return per_scene
    return per_scene.mean()


def stage2_loss(
    l_s1: Tensor,
    l_off: Tensor,
    l_angle: Tensor,
    lambda2: float = 5.0,
    lambda3: float = 2.0,
) -> Tensor:
    return l_s1 + lambda2 * l_off + lambda3 * l_angle
