"""Temporally dense lane scoring, top-k selection, and candidate fusion.

For each future step the target agent's motion encoding is matched against
every lane segment encoding: keys/values are linear projections of the
motion encoding, queries are linear projections of the lane encodings plus
a learned per-step embedding, and a two-layer scoring head turns each
(motion, query, attention output) triple into a logit. A softmax over lane
segments gives one score distribution per step.

With a single motion encoding as the only key, the scaled dot-product
softmax is identically one, so the attention output reduces to the value
projection of the motion encoding; the step dependence enters through the
query fed to the scoring head.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .errors import InvalidLabelError, NoLanesError
from .encoder import CrossAttention


class DenseLaneScorer(nn.Module):
    """Per-step lane segment scoring head."""

    def __init__(self, d_model: int, t_f: int):
        super().__init__()
        self.t_f = t_f
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.step_embedding = nn.Embedding(t_f, d_model)
        self.score_head = nn.Sequential(
            nn.Linear(3 * d_model, d_model),
            nn.ReLU(),
            nn.Linear(d_model, 1),
        )

    def forward(
        self,
        h_target: Tensor,
        lane_encodings: Tensor,
        lane_mask: Tensor,
        steps: Tensor | None = None,
    ) -> Tensor:
        """Score logits [B, T, N]; masked lanes are -inf.

        ``steps`` selects which future step indices are scored (all by
        default); spatial-only scoring passes just the final step.
        """
        B, N, D = lane_encodings.shape
        if steps is None:
            steps = torch.arange(self.t_f, device=h_target.device)
        T = steps.shape[0]

        q = self.q_proj(lane_encodings).unsqueeze(1) + self.step_embedding(
            steps
        ).view(1, T, 1, D)
        k = self.k_proj(h_target).view(B, 1, 1, D)
        v = self.v_proj(h_target).view(B, 1, 1, D)
        # softmax over the single key is identically 1
        att_weight = torch.softmax(
            (q * k).sum(-1, keepdim=True) / D**0.5, dim=-1
        )
        att = att_weight * v

        h_exp = h_target.view(B, 1, 1, D).expand(B, T, N, D)
        logits = self.score_head(torch.cat([h_exp, q, att.expand(B, T, N, D)], dim=-1))
        logits = logits.squeeze(-1)
        return logits.masked_fill(~lane_mask.view(B, 1, N), float("-inf"))


def score_lanes(
    scorer: DenseLaneScorer,
    h_target: Tensor,
    lane_encodings: Tensor,
    lane_mask: Tensor,
    steps: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """Score probabilities and logits per step; rows sum to 1 over valid lanes."""
    if not bool(lane_mask.any()):
        raise NoLanesError("lane scoring requires at least one valid lane")
    logits = scorer(h_target, lane_encodings, lane_mask, steps)
    return torch.softmax(logits, dim=-1), logits


def select_top_k(
    scores: Tensor,
    lane_encodings: Tensor,
    k: int,
    lane_mask: Tensor,
) -> dict:
    """Top-k lane candidates per step, ties broken by lowest lane index.

    If fewer than k lanes are valid, all valid lanes are taken and the
    remaining slots are masked. Gradients flow through the gathered scores,
    not through the discrete selection.
    """
    B, T, N = scores.shape
    k_eff = min(k, N)
    # push masked lanes below any probability, keep index order stable on ties
    sortable = scores.masked_fill(~lane_mask.view(B, 1, N), -1.0)
    _, order = torch.sort(sortable, dim=-1, descending=True, stable=True)
    top_idx = order[..., :k_eff]

    top_scores = scores.gather(-1, top_idx)
    cand_mask = lane_mask.view(B, 1, N).expand(B, T, N).gather(-1, top_idx)
    gather_idx = top_idx.reshape(B, T * k_eff, 1).expand(-1, -1, lane_encodings.size(-1))
    cand_enc = lane_encodings.gather(1, gather_idx).view(B, T, k_eff, -1)
    return {
        "indices": top_idx,
        "scores": top_scores,
        "encodings": cand_enc,
        "mask": cand_mask,
        "k": k_eff,
    }


def candidate_entries(candidates: dict) -> tuple[Tensor, Tensor]:
    """Concatenate per-step candidates into fusion entries [B, T*k, D+1]."""
    enc = candidates["encodings"]
    B, T, k, D = enc.shape
    entries = torch.cat([enc, candidates["scores"].unsqueeze(-1)], dim=-1)
    return entries.view(B, T * k, D + 1), candidates["mask"].view(B, T * k)


class CandidateFusion(nn.Module):
    """Cross-attend the motion encoding over the selected candidates."""

    def __init__(self, d_model: int, n_heads: int = 1):
        super().__init__()
        self.entry_proj = nn.Linear(d_model + 1, d_model)
        self.attention = CrossAttention(d_model, n_heads)

    def forward(self, h_target: Tensor, entries: Tensor, entry_mask: Tensor) -> Tensor:
        kv = self.entry_proj(entries)
        out = self.attention(h_target.unsqueeze(1), kv, entry_mask)
        return out.squeeze(1)


def lane_loss(
    scores: Tensor,
    labels: Tensor,
    lane_mask: Tensor | None = None,
    *,
    from_logits: bool = False,
    reduce: str = "mean",
) -> Tensor:
    """Cross-entropy of one-hot step labels, summed over future steps.

    ``scores`` is [B, T, N] (probabilities, or logits with
    ``from_logits=True``); ``labels`` is [B, T] of lane indices.
    """
    B, T, N = scores.shape
    if labels.min() < 0 or labels.max() >= N:
        raise InvalidLabelError("label index out of range")
    if lane_mask is not None and not bool(lane_mask.gather(1, labels).all()):
        raise InvalidLabelError("label points at a masked-out lane")
    if from_logits:
        logp = torch.log_softmax(scores, dim=-1)
    else:
        logp = torch.log(scores.clamp_min(torch.finfo(scores.dtype).tiny))
    per_step = -logp.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    per_scene = per_step.sum(dim=-1)
    if reduce == "none":
        return per_scene
    return per_scene.mean()
