"""Turning scenes into padded model batches.

Every scene is normalized to the target frame, lanes are filtered to the
Manhattan radius, and trajectories/lanes are featurized:

    trajectory vector (8): d_s.x, d_s.y, d_e.x, d_e.y, timestamp,
                           one-hot(target, autonomous_vehicle, other)
    lane vector (10):      d_s.x, d_s.y, d_e.x, d_e.y, d_pre.x, d_pre.y,
                           has_traffic_control, one-hot(none, left, right)

Vector sequences are left-compacted (gaps removed), so validity masks are
prefixes and masking an element is equivalent to deleting it. The whole
dataset is tensorized once up front; batches are index slices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, DataError, NoLanesError
from .scene import (
    AGENT_CLASSES,
    NormalizedScene,
    Scene,
    TURN_TAGS,
    filter_lanes_by_radius,
    nearest_lane_labels,
    normalize_scene,
    track_to_vectors,
)
from .errors import EmptyTrackError

TRAJ_FEATURE_DIM = 8
LANE_FEATURE_DIM = 10

# fixed preconditioner on coordinate features; keeps encoder inputs O(1)
# for desk-scale maps (losses and outputs stay in meters)
COORD_SCALE = 0.1


@dataclass
class PipelineConfig:
    """Geometry/featurization settings shared by training and inference."""

    t_h: int = 4
    t_f: int = 12
    radius_m: float = 50.0
    align_heading: bool = False


def _traj_features(vectors, sampling_period: float) -> np.ndarray:
    feats = np.zeros((len(vectors), TRAJ_FEATURE_DIM))
    for i, v in enumerate(vectors):
        feats[i, 0:2] = v.d_s * COORD_SCALE
        feats[i, 2:4] = v.d_e * COORD_SCALE
        feats[i, 4] = v.timestamp
        feats[i, 5 + AGENT_CLASSES.index(v.agent_class)] = 1.0
    return feats


def _lane_features(segment) -> np.ndarray:
    feats = np.zeros((len(segment.vectors), LANE_FEATURE_DIM))
    for i, v in enumerate(segment.vectors):
        feats[i, 0:2] = v.d_s * COORD_SCALE
        feats[i, 2:4] = v.d_e * COORD_SCALE
        feats[i, 4:6] = v.d_pre * COORD_SCALE
        feats[i, 6] = 1.0 if v.has_traffic_control else 0.0
        feats[i, 7 + TURN_TAGS.index(v.turn)] = 1.0
    return feats


@dataclass
class SceneSample:
    """One tensorized scene (numpy, unpadded)."""

    traj_feats: list[np.ndarray]
    lane_feats: list[np.ndarray]
    labels: np.ndarray | None
    future: np.ndarray | None
    observed: np.ndarray
    origin: np.ndarray
    rotation: float
    lane_segment_ids: list[int]
    normalized: NormalizedScene


def prepare_scene(scene: Scene, cfg: PipelineConfig) -> SceneSample:
    """Normalize, filter, featurize one scene (target agent first)."""
    norm = normalize_scene(scene, align_heading=cfg.align_heading)
    norm = filter_lanes_by_radius(norm, cfg.radius_m)
    if not norm.lanes:
        raise NoLanesError("no lane segments within radius of the target")

    target = norm.target_track()
    if target.t_h != cfg.t_h:
        raise ConfigError(
            f"scene horizon t_h={target.t_h} does not match configured {cfg.t_h}"
        )
    ordered = [target] + [t for t in norm.tracks if t is not target]

    traj_feats = []
    for track in ordered:
        try:
            vectors = track_to_vectors(track, norm.sampling_period)
        except EmptyTrackError:
            if track is target:
                raise
            vectors = []
        traj_feats.append(_traj_features(vectors, norm.sampling_period))

    future = None
    labels = None
    if target.positions.shape[0] >= cfg.t_h + cfg.t_f:
        future = target.future[: cfg.t_f].astype(np.float64)
        labels = nearest_lane_labels(future, norm.lanes)

    return SceneSample(
        traj_feats=traj_feats,
        lane_feats=[_lane_features(seg) for seg in norm.lanes],
        labels=labels,
        future=future,
        observed=target.observed.astype(np.float64),
        origin=norm.origin,
        rotation=norm.rotation,
        lane_segment_ids=[seg.segment_id for seg in norm.lanes],
        normalized=norm,
    )


class SceneDataset:
    """Padded tensors for a list of scenes.

    Agents and lanes are padded to the dataset-wide maxima; boolean masks
    mark real entries. ``batch(indices)`` returns a dict of torch tensors
    sliced to those scenes.
    """

    def __init__(
        self,
        scenes: list[Scene],
        cfg: PipelineConfig,
        dtype: torch.dtype = torch.float32,
        require_future: bool = True,
    ):
        if not scenes:
            raise DataError("empty scene list")
        self.cfg = cfg
        self.dtype = dtype
        samples = [prepare_scene(s, cfg) for s in scenes]
        self.samples = samples
        if require_future and any(s.future is None for s in samples):
            raise DataError("dataset requires future ground truth for every scene")

        B = len(samples)
        A = max(len(s.traj_feats) for s in samples)
        L_t = max(
            (f.shape[0] for s in samples for f in s.traj_feats), default=1
        )
        L_t = max(L_t, 1)
        N = max(len(s.lane_feats) for s in samples)
        L_v = max(f.shape[0] for s in samples for f in s.lane_feats)

        traj = np.zeros((B, A, L_t, TRAJ_FEATURE_DIM), dtype=np.float64)
        traj_vec_mask = np.zeros((B, A, L_t), dtype=bool)
        agent_mask = np.zeros((B, A), dtype=bool)
        lanes = np.zeros((B, N, L_v, LANE_FEATURE_DIM), dtype=np.float64)
        lane_vec_mask = np.zeros((B, N, L_v), dtype=bool)
        lane_mask = np.zeros((B, N), dtype=bool)
        labels = np.zeros((B, cfg.t_f), dtype=np.int64)
        future = np.zeros((B, cfg.t_f, 2), dtype=np.float64)
        has_future = np.zeros(B, dtype=bool)
        observed = np.zeros((B, cfg.t_h, 2), dtype=np.float64)
        origins = np.zeros((B, 2), dtype=np.float64)
        rotations = np.zeros(B, dtype=np.float64)

        for b, s in enumerate(samples):
            for a, f in enumerate(s.traj_feats):
                n = f.shape[0]
                if n > 0:
                    traj[b, a, :n] = f
                    traj_vec_mask[b, a, :n] = True
                    agent_mask[b, a] = True
            for j, f in enumerate(s.lane_feats):
                n = f.shape[0]
                lanes[b, j, :n] = f
                lane_vec_mask[b, j, :n] = True
                lane_mask[b, j] = True
            if s.future is not None:
                future[b] = s.future
                labels[b] = s.labels
                has_future[b] = True
            observed[b] = s.observed
            origins[b] = s.origin
            rotations[b] = s.rotation

        self._tensors = {
            "traj_feats": torch.from_numpy(traj),
            "traj_vec_mask": torch.from_numpy(traj_vec_mask),
            "agent_mask": torch.from_numpy(agent_mask),
            "lane_feats": torch.from_numpy(lanes),
            "lane_vec_mask": torch.from_numpy(lane_vec_mask),
            "lane_mask": torch.from_numpy(lane_mask),
            "labels": torch.from_numpy(labels),
            "future": torch.from_numpy(future),
            "has_future": torch.from_numpy(has_future),
            "observed": torch.from_numpy(observed),
            "origin": torch.from_numpy(origins),
            "rotation": torch.from_numpy(rotations),
        }
        for key in ("traj_feats", "lane_feats", "future", "observed"):
            self._tensors[key] = self._tensors[key].to(dtype)

    def __len__(self) -> int:
        return self._tensors["agent_mask"].shape[0]

    def save(self, path) -> None:
        """Cache the padded tensors so workers can skip re-tensorizing."""
        import json
        from dataclasses import asdict
        from pathlib import Path

        arrays = {k: v.numpy() for k, v in self._tensors.items()}
        arrays["__pipeline__"] = np.frombuffer(
            json.dumps(asdict(self.cfg)).encode(), dtype=np.uint8
        )
        with Path(path).open("wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, dtype: torch.dtype = torch.float32) -> "SceneDataset":
        """Rebuild from a tensor cache (per-scene samples are unavailable)."""
        import json

        ds = cls.__new__(cls)
        with np.load(path) as archive:
            ds.cfg = PipelineConfig(
                **json.loads(archive["__pipeline__"].tobytes().decode())
            )
            ds._tensors = {
                k: torch.from_numpy(archive[k].copy())
                for k in archive.files
                if k != "__pipeline__"
            }
        ds.dtype = dtype
        ds.samples = None
        for key in ("traj_feats", "lane_feats", "future", "observed"):
            ds._tensors[key] = ds._tensors[key].to(dtype)
        return ds

    def batch(self, indices) -> dict:
        idx = torch.as_tensor(np.asarray(indices), dtype=torch.long)
        return {k: v[idx] for k, v in self._tensors.items()}

    def full_batch(self) -> dict:
        return self.batch(np.arange(len(self)))

    def iter_batches(self, batch_size: int, order: np.ndarray | None = None):
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start : start + batch_size])
