"""The assembled two-stage prediction network and its ablation variants.

Variants gate which pathways run:

    baseline     no lane information, stage 1 only
    baseline_s2  no lane information, with second-stage refinement
    spatial      lane scoring at the final step only, stage 1 only
    temporal     per-step lane scoring, stage 1 only
    full         per-step lane scoring plus second-stage refinement

Lane-free variants never touch lane inputs, so their outputs are invariant
to arbitrary lane geometry by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import torch
from torch import Tensor, nn

from .data import LANE_FEATURE_DIM, TRAJ_FEATURE_DIM
from .decoder import LaplaceMDNDecoder
from .encoder import GlobalInteractionGraph
from .errors import ConfigError
from .lane_aware import (
    CandidateFusion,
    DenseLaneScorer,
    candidate_entries,
    score_lanes,
    select_top_k,
)
from .refine import MotionRefiner

VARIANTS = ("baseline", "baseline_s2", "spatial", "temporal", "full")


def variant_uses_lanes(variant: str) -> bool:
    return variant in ("spatial", "temporal", "full")


def variant_has_stage2(variant: str) -> bool:
    return variant in ("baseline_s2", "full")


@dataclass
class ModelConfig:
    d_model: int = 32
    n_modes: int = 6
    t_h: int = 4
    t_f: int = 12
    top_k: int = 2
    n_heads: int = 1
    z_dim: int = 2
    sampling_period: float = 0.5
    variant: str = "full"

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.n_modes < 1 or self.t_f < 1 or self.t_h < 2:
            raise ConfigError("invalid model dimensions")

    def to_dict(self) -> dict:
        return asdict(self)


class LAformer(nn.Module):
    """Scene encoder, lane-aware candidate selection, MDN decoder, refiner."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        D = cfg.d_model
        self.gig = GlobalInteractionGraph(
            TRAJ_FEATURE_DIM, LANE_FEATURE_DIM, D, cfg.n_heads
        )
        self.scorer = DenseLaneScorer(D, cfg.t_f)
        self.fusion = CandidateFusion(D, cfg.n_heads)
        self.decoder = LaplaceMDNDecoder(D, cfg.n_modes, cfg.t_f, cfg.z_dim)
        self.refiner = MotionRefiner(D, cfg.t_h, cfg.t_f, cfg.sampling_period)

    @property
    def uses_lanes(self) -> bool:
        return variant_uses_lanes(self.cfg.variant)

    @property
    def has_stage2(self) -> bool:
        return variant_has_stage2(self.cfg.variant)

    def score_steps(self) -> torch.Tensor | None:
        if self.cfg.variant == "spatial":
            return torch.tensor([self.cfg.t_f - 1], dtype=torch.long)
        return None

    def forward(
        self,
        batch: dict,
        z: Tensor | None = None,
        k: int | None = None,
        stage: int = 1,
    ) -> dict:
        """Run the pipeline; ``stage=2`` adds refinement for S2 variants.

        ``z`` defaults to zeros (the deterministic evaluation setting);
        training passes fresh normal samples. ``k`` overrides the number of
        candidates per step.
        """
        cfg = self.cfg
        k = cfg.top_k if k is None else k
        lane_inputs = (
            (batch["lane_feats"], batch["lane_vec_mask"], batch["lane_mask"])
            if self.uses_lanes
            else (None, None, None)
        )
        H, C, lane_mask = self.gig(
            batch["traj_feats"],
            batch["traj_vec_mask"],
            batch["agent_mask"],
            *lane_inputs,
        )
        h = H[:, 0, :]  # target agent is tensorized first

        out: dict = {"H": H, "C": C, "h": h}
        if self.uses_lanes:
            steps = self.score_steps()
            if steps is not None:
                steps = steps.to(h.device)
            scores, logits = score_lanes(self.scorer, h, C, lane_mask, steps)
            candidates = select_top_k(scores, C, k, lane_mask)
            entries, entry_mask = candidate_entries(candidates)
            h_att = self.fusion(h, entries, entry_mask)
            out.update(
                scores=scores,
                score_logits=logits,
                candidates=candidates,
                h_att=h_att,
            )
        else:
            h_att = torch.zeros_like(h)
            out.update(scores=None, score_logits=None, candidates=None, h_att=h_att)

        if z is None:
            z = h.new_zeros(h.shape[0], cfg.z_dim)
        mu, b, pi_logits = self.decoder(h, h_att, z)
        out.update(mu=mu, b=b, pi_logits=pi_logits, pi=torch.softmax(pi_logits, -1))

        if stage == 2:
            if not self.has_stage2:
                raise ConfigError(
                    f"variant {cfg.variant!r} has no second-stage refinement"
                )
            # anchors are detached: refinement learns a residual correction
            # while stage-1 heads keep training through the stage-1 loss
            anchors = mu.detach()
            delta, refined = self.refiner(h, h_att, batch["observed"], anchors)
            out.update(anchors=anchors, delta=delta, refined=refined)
        return out

    def trajectories(self, out: dict) -> Tensor:
        """Final trajectories: refined when present, else stage-1 locations."""
        return out["refined"] if "refined" in out else out["mu"]
