"""Agent/lane sequence encoders and the global interaction graph.

Agents and lane segments are encoded the same way (separate parameters):
a two-layer perceptron lifts each vector, a GRU runs along the sequence,
and the final hidden state is the encoding. Fusion then applies symmetric
cross-attention (agents over lanes, then lanes over the updated agents),
concatenates each agent with an attention-pooled lane summary, and runs
residual self-attention over agents.

Masked keys receive exactly zero attention weight; a fully masked key set
yields a zero attention update so residual paths pass through unchanged.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn


class VectorSequenceEncoder(nn.Module):
    """Per-vector MLP followed by a GRU; returns the last valid hidden state.

    Sequences must be left-compacted: the validity mask is a prefix. Rows
    with no valid vectors encode to zero.
    """

    def __init__(self, in_dim: int, d_model: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, d_model),
            nn.ReLU(),
            nn.Linear(d_model, d_model),
            nn.ReLU(),
        )
        self.gru = nn.GRU(d_model, d_model, batch_first=True)

    def forward(self, vecs: Tensor, vec_mask: Tensor) -> Tensor:
        # vecs: [R, L, F], vec_mask: [R, L] (prefix mask)
        lengths = vec_mask.sum(dim=-1)
        feats = self.mlp(vecs) * vec_mask.unsqueeze(-1).to(vecs.dtype)
        out, _ = self.gru(feats)
        idx = (lengths - 1).clamp(min=0).view(-1, 1, 1).expand(-1, 1, out.size(-1))
        h = out.gather(1, idx).squeeze(1)
        return h * (lengths > 0).unsqueeze(-1).to(h.dtype)


class CrossAttention(nn.Module):
    """Scaled dot-product attention with exact key masking.

    Masked keys get -inf logits, so their softmax weight is exactly zero;
    if every key of a query is masked the update is defined as zero.
    """

    def __init__(self, d_model: int, n_heads: int = 1):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(
        self,
        query: Tensor,
        keys: Tensor,
        key_mask: Tensor | None = None,
        need_weights: bool = False,
    ):
        # query: [B, Q, D], keys: [B, K, D], key_mask: [B, K] (True = valid)
        B, Q, D = query.shape
        K = keys.shape[1]
        q = self.q_proj(query).view(B, Q, self.n_heads, self.d_head).transpose(1, 2)
        k = self.k_proj(keys).view(B, K, self.n_heads, self.d_head).transpose(1, 2)
        v = self.v_proj(keys).view(B, K, self.n_heads, self.d_head).transpose(1, 2)

        logits = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        if key_mask is not None:
            fill = key_mask[:, None, None, :] == 0
            logits = logits.masked_fill(fill, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        weights = torch.nan_to_num(weights, nan=0.0)  # all-masked rows -> 0
        out = weights @ v
        out = out.transpose(1, 2).reshape(B, Q, D)
        out = self.out_proj(out)
        if key_mask is not None:
            # an empty key set contributes exactly zero (no bias leakage)
            out = out * key_mask.any(dim=-1).view(B, 1, 1).to(out.dtype)
        if need_weights:
            return out, weights.mean(dim=1)
        return out


class GlobalInteractionGraph(nn.Module):
    """Encode agents and lanes, then fuse them with attention.

    Update order: agents attend over lanes first, lanes attend over the
    updated agents second, both with residuals. Each agent is then
    concatenated with its attention-pooled lane summary, projected back to
    the model width, and refined by residual self-attention over agents.
    """

    def __init__(
        self, traj_dim: int, lane_dim: int, d_model: int, n_heads: int = 1
    ):
        super().__init__()
        self.d_model = d_model
        self.agent_encoder = VectorSequenceEncoder(traj_dim, d_model)
        self.lane_encoder = VectorSequenceEncoder(lane_dim, d_model)
        self.agent_from_lane = CrossAttention(d_model, n_heads)
        self.lane_from_agent = CrossAttention(d_model, n_heads)
        self.lane_pool = CrossAttention(d_model, n_heads)
        self.concat_proj = nn.Linear(2 * d_model, d_model)
        self.self_attention = CrossAttention(d_model, n_heads)

    def encode_agents(self, traj_feats: Tensor, traj_vec_mask: Tensor) -> Tensor:
        B, A, L, F = traj_feats.shape
        h = self.agent_encoder(traj_feats.reshape(B * A, L, F), traj_vec_mask.reshape(B * A, L))
        return h.view(B, A, self.d_model)

    def encode_lanes(self, lane_feats: Tensor, lane_vec_mask: Tensor) -> Tensor:
        B, N, L, F = lane_feats.shape
        c = self.lane_encoder(lane_feats.reshape(B * N, L, F), lane_vec_mask.reshape(B * N, L))
        return c.view(B, N, self.d_model)

    def forward(
        self,
        traj_feats: Tensor,
        traj_vec_mask: Tensor,
        agent_mask: Tensor,
        lane_feats: Tensor | None,
        lane_vec_mask: Tensor | None,
        lane_mask: Tensor | None,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (H, C, lane_mask): agent and lane encodings after fusion.

        With ``lane_feats=None`` the lane pathway is skipped entirely: lane
        encodings are zeros with an all-false mask, and the agent encodings
        cannot depend on any lane input.
        """
        H = self.encode_agents(traj_feats, traj_vec_mask)
        B, A, _ = H.shape
        if lane_feats is None:
            C = H.new_zeros(B, 1, self.d_model)
            lane_mask = torch.zeros(B, 1, dtype=torch.bool, device=H.device)
        else:
            C = self.encode_lanes(lane_feats, lane_vec_mask)

        H = H + self.agent_from_lane(H, C, lane_mask)
        C = C + self.lane_from_agent(C, H, agent_mask)

        pooled = self.lane_pool(H, C, lane_mask)
        H = self.concat_proj(torch.cat([H, pooled], dim=-1))
        H = H + self.self_attention(H, H, agent_mask)

        H = H * agent_mask.unsqueeze(-1).to(H.dtype)
        C = C * lane_mask.unsqueeze(-1).to(C.dtype)
        return H, C, lane_mask
