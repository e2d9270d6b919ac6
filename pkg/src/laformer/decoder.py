"""Laplace mixture-density decoder and stage-1 losses.

The decoder conditions on the target motion encoding, the lane-fused
encoding, and a small latent sample. A perceptron head predicts mode
probabilities; a GRU unrolls the time dimension per mode; two parallel
heads map each hidden state to the Laplace location and scale. Scales are
floored at ``B_MIN`` through a softplus.

Training uses winner-takes-all regression (Laplace NLL of the mode with
the smallest L2 error) plus soft-target mode classification.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn
import torch.nn.functional as F

B_MIN = 1e-3

# per-step displacements are a few meters at desk scale; the location head
# predicts them and the trajectory accumulates along the horizon
STEP_SCALE = 10.0


class LaplaceMDNDecoder(nn.Module):
    def __init__(self, d_model: int, n_modes: int, t_f: int, z_dim: int = 2):
        super().__init__()
        self.n_modes = n_modes
        self.t_f = t_f
        self.z_dim = z_dim
        self.context = nn.Sequential(
            nn.Linear(2 * d_model + z_dim, d_model),
            nn.ReLU(),
            nn.Linear(d_model, d_model),
            nn.ReLU(),
        )
        self.pi_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.ReLU(), nn.Linear(d_model, n_modes)
        )
        self.mode_embedding = nn.Embedding(n_modes, d_model)
        self.init_proj = nn.Linear(2 * d_model, d_model)
        self.step_in_proj = nn.Linear(2 * d_model, d_model)
        self.gru = nn.GRU(d_model, d_model, batch_first=True)
        self.mu_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.ReLU(), nn.Linear(d_model, 2)
        )
        self.b_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.ReLU(), nn.Linear(d_model, 2)
        )
        # start scales around softplus(1) ~ 1.3 m instead of ~0.7
        nn.init.constant_(self.b_head[-1].bias, 1.0)

    def forward(self, h: Tensor, h_att: Tensor, z: Tensor):
        """Decode M modes: (mu [B,M,T,2], b [B,M,T,2], pi_logits [B,M])."""
        B = h.shape[0]
        M, T = self.n_modes, self.t_f
        ctx = self.context(torch.cat([h, h_att, z], dim=-1))
        pi_logits = self.pi_head(ctx)

        modes = self.mode_embedding.weight.unsqueeze(0).expand(B, M, -1)
        per_mode = torch.cat([ctx.unsqueeze(1).expand(B, M, -1), modes], dim=-1)
        h0 = torch.tanh(self.init_proj(per_mode)).reshape(1, B * M, -1)
        step_in = self.step_in_proj(per_mode).reshape(B * M, 1, -1).expand(-1, T, -1)
        states, _ = self.gru(step_in.contiguous(), h0.contiguous())

        steps = STEP_SCALE * self.mu_head(states).view(B, M, T, 2)
        mu = steps.cumsum(dim=2)
        b = F.softplus(self.b_head(states)).view(B, M, T, 2) + B_MIN
        return mu, b, pi_logits


def wta_mode(trajectories: Tensor, future: Tensor) -> Tensor:
    """Mode with the minimum summed L2 error; ties go to the lowest index."""
    err = torch.linalg.vector_norm(
        trajectories - future.unsqueeze(1), dim=-1
    ).sum(dim=-1)
    return err.argmin(dim=-1)


def _select_mode(tensor: Tensor, mode: Tensor) -> Tensor:
    batch = torch.arange(tensor.shape[0], device=tensor.device)
    return tensor[batch, mode]


def wta_regression_loss(
    mu: Tensor, b: Tensor, future: Tensor, reduce: str = "mean"
) -> Tensor:
    """Laplace NLL of the winning mode, averaged over time.

    Per step the NLL factorizes over x/y: sum_d [log(2 b_d) + |y_d - mu_d| / b_d].
    Only the winning mode receives gradient.
    """
    m_star = wta_mode(mu, future)
    mu_s = _select_mode(mu, m_star)
    b_s = _select_mode(b, m_star)
    nll = (torch.log(2.0 * b_s) + (future - mu_s).abs() / b_s).sum(dim=-1)
    per_scene = nll.mean(dim=-1)
    if reduce == "none":
        return per_scene
    return per_scene.mean()


def classification_loss(
    mu: Tensor,
    pi: Tensor,
    future: Tensor,
    tau: float = 1.0,
    *,
    from_logits: bool = False,
    reduce: str = "mean",
) -> Tensor:
    """Cross-entropy against soft targets from final displacement errors.

    Targets are softmax(-FDE_m / tau) over modes, treated as constants.
    """
    with torch.no_grad():
        fde = torch.linalg.vector_norm(
            mu[..., -1, :] - future[:, None, -1, :], dim=-1
        )
        target = torch.softmax(-fde / tau, dim=-1)
    if from_logits:
        log_pi = torch.log_softmax(pi, dim=-1)
    else:
        log_pi = torch.log(pi.clamp_min(torch.finfo(pi.dtype).tiny))
    per_scene = -(target * log_pi).sum(dim=-1)
    if reduce == "none":
        return per_scene
    return per_scene.mean()


def stage1_loss(
    l_lane: Tensor | float, l_reg: Tensor, l_cls: Tensor, lambda1: float = 10.0
) -> Tensor:
    return lambda1 * l_lane + l_reg + l_cls
