"""Scene data model: vectorized trajectories and lane segments.

Agent tracks and lane centerlines share one vector representation: a vector
runs from a start point ``d_s`` to an end point ``d_e`` plus attributes.
Lane vectors additionally carry ``d_pre``, the start point of the preceding
vector in the segment. All geometry is 2D, in meters, float64.

Scenes come in two frames: raw (as generated or recorded) and normalized
(translated so the target agent's last observed position is the origin).
Every operation here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateLaneError,
    EmptyTrackError,
    InvalidSceneError,
    NoLanesError,
)

AGENT_CLASSES = ("target", "autonomous_vehicle", "other")
TURN_TAGS = ("none", "left", "right")


@dataclass
class TrajectoryVector:
    """One motion step of an agent: start point, end point, attributes."""

    d_s: np.ndarray
    d_e: np.ndarray
    timestamp: float
    agent_class: str


@dataclass
class LaneVector:
    """One slice of a lane centerline with its predecessor start point."""

    d_s: np.ndarray
    d_e: np.ndarray
    d_pre: np.ndarray
    has_traffic_control: bool = False
    turn: str = "none"


@dataclass
class LaneSegment:
    """A chain-connected run of lane vectors with graph connectivity."""

    segment_id: int
    vectors: list[LaneVector]
    predecessor_ids: list[int] = field(default_factory=list)
    successor_ids: list[int] = field(default_factory=list)

    def points(self) -> np.ndarray:
        """Return the (n_vectors + 1, 2) polyline spanned by the vectors."""
        pts = [self.vectors[0].d_s] + [v.d_e for v in self.vectors]
        return np.asarray(pts, dtype=np.float64)


@dataclass
class AgentTrack:
    """Positions of one agent over the scene's step grid.

    ``positions[:t_h]`` are the observed steps ``-t_h+1 .. 0``; any rows
    beyond ``t_h`` are future steps ``1 .. t_f`` when available. ``valid``
    marks which rows hold real observations.
    """

    agent_id: int
    agent_class: str
    positions: np.ndarray
    valid: np.ndarray
    t_h: int

    @property
    def observed(self) -> np.ndarray:
        return self.positions[: self.t_h]

    @property
    def observed_valid(self) -> np.ndarray:
        return self.valid[: self.t_h]

    @property
    def future(self) -> np.ndarray:
        return self.positions[self.t_h :]

    @property
    def last_observed(self) -> np.ndarray:
        return self.positions[self.t_h - 1]


@dataclass
class Scene:
    """One prediction scenario: tracks plus the lane graph of the map."""

    target_id: int
    tracks: list[AgentTrack]
    lanes: list[LaneSegment]
    sampling_period: float
    metadata: dict = field(default_factory=dict)

    def target_track(self) -> AgentTrack:
        for track in self.tracks:
            if track.agent_id == self.target_id:
                return track
        raise InvalidSceneError(f"no track with target_id={self.target_id}")


@dataclass
class NormalizedScene(Scene):
    """A scene translated so the target's last observed position is (0, 0).

    ``origin`` is that position in the raw frame; adding it back inverts the
    normalization. ``rotation`` is the angle (rad) the scene was rotated by
    after translation (0 unless heading alignment was requested).
    """

    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rotation: float = 0.0


def _rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


def normalize_scene(scene: Scene, align_heading: bool = False) -> NormalizedScene:
    """Translate all coordinates so the target's step-0 position is the origin.

    Idempotent: normalizing an already normalized scene leaves coordinates
    unchanged and keeps the original origin. With ``align_heading`` the scene
    is additionally rotated so the target's last observed heading points
    along +x (off by default).
    """
    target = scene.target_track()
    if not target.valid[target.t_h - 1]:
        raise InvalidSceneError("target has no valid position at step 0")
    shift = target.last_observed.astype(np.float64).copy()

    prev_origin = np.zeros(2)
    prev_rotation = 0.0
    if isinstance(scene, NormalizedScene):
        prev_origin = scene.origin
        prev_rotation = scene.rotation
    if prev_rotation != 0.0:
        # map the shift back through the earlier rotation before composing
        origin = prev_origin + _rotation_matrix(-prev_rotation) @ shift
    else:
        origin = prev_origin + shift

    rot = None
    rotation = prev_rotation
    if align_heading:
        heading = _last_heading(target)
        rot = _rotation_matrix(-heading)
        rotation = prev_rotation - heading

    def _map(points: np.ndarray) -> np.ndarray:
        out = np.asarray(points, dtype=np.float64) - shift
        if rot is not None:
            out = out @ rot.T
        return out

    tracks = [
        replace(t, positions=_map(t.positions), valid=t.valid.copy())
        for t in scene.tracks
    ]
    lanes = []
    for seg in scene.lanes:
        coords = np.stack(
            [[v.d_s, v.d_e, v.d_pre] for v in seg.vectors]
        )
        coords = _map(coords.reshape(-1, 2)).reshape(-1, 3, 2)
        vectors = [
            replace(v, d_s=coords[i, 0], d_e=coords[i, 1], d_pre=coords[i, 2])
            for i, v in enumerate(seg.vectors)
        ]
        lanes.append(
            replace(
                seg,
                vectors=vectors,
                predecessor_ids=list(seg.predecessor_ids),
                successor_ids=list(seg.successor_ids),
            )
        )
    return NormalizedScene(
        target_id=scene.target_id,
        tracks=tracks,
        lanes=lanes,
        sampling_period=scene.sampling_period,
        metadata=dict(scene.metadata),
        origin=origin,
        rotation=rotation,
    )


def _last_heading(track: AgentTrack) -> float:
    obs, ok = track.observed, track.observed_valid
    for i in range(track.t_h - 1, 0, -1):
        if ok[i] and ok[i - 1]:
            delta = obs[i] - obs[i - 1]
            if np.any(delta != 0.0):
                return math.atan2(delta[1], delta[0])
    return 0.0


def track_to_vectors(track: AgentTrack, sampling_period: float) -> list[TrajectoryVector]:
    """Turn a track's observed positions into consecutive motion vectors.

    A vector is emitted for every pair of consecutive valid observed steps,
    so a fully observed track of ``t_h`` steps yields ``t_h - 1`` vectors.
    The timestamp is the end step's index scaled by the sampling period
    (step 0 is the last observed step).
    """
    obs, ok = track.observed, track.observed_valid
    vectors = []
    for i in range(1, track.t_h):
        if ok[i - 1] and ok[i]:
            end_step = i - (track.t_h - 1)
            vectors.append(
                TrajectoryVector(
                    d_s=obs[i - 1].astype(np.float64).copy(),
                    d_e=obs[i].astype(np.float64).copy(),
                    timestamp=end_step * sampling_period,
                    agent_class=track.agent_class,
                )
            )
    if not vectors:
        raise EmptyTrackError(
            f"agent {track.agent_id}: no consecutive pair of valid observed positions"
        )
    return vectors


def slice_centerline(
    polyline: np.ndarray,
    vectors_per_segment: int,
    *,
    start_id: int = 0,
    has_traffic_control: bool = False,
    turn: str = "none",
) -> list[LaneSegment]:
    """Slice a centerline polyline into chained fixed-length lane segments.

    Consecutive point pairs become lane vectors; groups of
    ``vectors_per_segment`` become segments (the terminal slice may be
    shorter). Segments get sequential ids starting at ``start_id`` and are
    linked through predecessor/successor ids.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateLaneError("centerline needs at least 2 points")
    if vectors_per_segment < 1:
        raise DegenerateLaneError("vectors_per_segment must be >= 1")

    n_vec = pts.shape[0] - 1
    segments: list[LaneSegment] = []
    for first in range(0, n_vec, vectors_per_segment):
        last = min(first + vectors_per_segment, n_vec)
        vectors = []
        for i in range(first, last):
            d_s = pts[i].copy()
            # first vector of a segment points d_pre at its own start
            d_pre = pts[i - 1].copy() if i > first else pts[i].copy()
            vectors.append(
                LaneVector(
                    d_s=d_s,
                    d_e=pts[i + 1].copy(),
                    d_pre=d_pre,
                    has_traffic_control=has_traffic_control,
                    turn=turn,
                )
            )
        segments.append(
            LaneSegment(segment_id=start_id + len(segments), vectors=vectors)
        )

    for j, seg in enumerate(segments):
        if j > 0:
            seg.predecessor_ids.append(segments[j - 1].segment_id)
        if j < len(segments) - 1:
            seg.successor_ids.append(segments[j + 1].segment_id)
    return segments


def filter_lanes_by_radius(
    scene: NormalizedScene, radius_m: float = 50.0
) -> NormalizedScene:
    """Keep lane segments with a vector endpoint within a Manhattan radius.

    The distance is measured from the normalized origin; the boundary is
    inclusive. An empty result is legal.
    """
    kept = []
    for seg in scene.lanes:
        pts = seg.points()
        if np.abs(pts).sum(axis=1).min() <= radius_m:
            kept.append(seg)
    return replace(scene, lanes=kept)


def _point_chain(segment: LaneSegment) -> tuple[np.ndarray, np.ndarray]:
    pts = segment.points()
    return pts[:-1], pts[1:]


def point_to_polyline_distance(point: np.ndarray, segment: LaneSegment) -> float:
    """Minimum Euclidean distance from a point to a segment's vector chain.

    Projects the point onto each vector (clamped to the endpoints), i.e.
    true point-to-polyline distance rather than endpoint-only.
    """
    a, b = _point_chain(segment)
    return float(np.sqrt(_point_chain_sqdist(np.asarray(point, dtype=np.float64), a, b)))


def _point_chain_sqdist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    len2 = (ab * ab).sum(axis=1)
    t = ((p - a) * ab).sum(axis=1)
    t = np.divide(t, len2, out=np.zeros_like(t), where=len2 > 0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    d2 = ((p - closest) ** 2).sum(axis=1)
    return float(d2.min())


def nearest_lane_labels(
    future_positions: np.ndarray, lanes: list[LaneSegment]
) -> np.ndarray:
    """Index of the closest lane segment for each future step.

    Distance is point-to-polyline; ties go to the segment with the lowest
    ``segment_id``. Returns indices into ``lanes``.
    """
    if not lanes:
        raise NoLanesError("cannot label future steps without lane segments")
    future = np.asarray(future_positions, dtype=np.float64)
    seg_ids = np.array([seg.segment_id for seg in lanes])

    # flatten all vectors; vectors stay grouped by segment
    chains = [_point_chain(seg) for seg in lanes]
    a = np.concatenate([c[0] for c in chains], axis=0)
    b = np.concatenate([c[1] for c in chains], axis=0)
    counts = np.array([c[0].shape[0] for c in chains])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    ab = b - a
    len2 = (ab * ab).sum(axis=1)
    pa = future[:, None, :] - a[None, :, :]  # [T, V, 2]
    t = (pa * ab[None, :, :]).sum(axis=2)
    t = np.divide(t, len2[None, :], out=np.zeros_like(t), where=len2[None, :] > 0)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    d2 = ((future[:, None, :] - closest) ** 2).sum(axis=2)  # [T, V]
    per_segment = np.minimum.reduceat(d2, starts, axis=1)  # [T, S]

    best = per_segment.min(axis=1, keepdims=True)
    tie_ids = np.where(per_segment == best, seg_ids[None, :], np.iinfo(np.int64).max)
    return np.argmin(tie_ids, axis=1).astype(np.int64)
