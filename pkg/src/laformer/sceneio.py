"""Scene file I/O.

Scenes are stored as newline-delimited JSON, one scene per line, schema
``laformer-scene/1``:

    {"schema": "laformer-scene/1", "target_id": 0, "sampling_period": 0.5,
     "tracks": [{"agent_id": 0, "agent_class": "target", "t_h": 4,
                 "positions": [[x, y], ...], "valid": [true, ...]}, ...],
     "lanes": [{"segment_id": 7, "predecessors": [6], "successors": [8],
                "has_traffic_control": false, "turn": "none",
                "points": [[x, y], ...]}, ...],
     "metadata": {...}}

Coordinates are meters as 64-bit JSON decimals. Lane geometry is stored as
the segment's point chain; vectors (including ``d_pre``) are reconstructed
from it on load. Normalized scenes additionally carry ``origin`` and
``rotation``. Serialization is canonical (sorted keys, compact separators),
so identical scenes produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError
from .scene import AgentTrack, LaneSegment, LaneVector, NormalizedScene, Scene

SCENE_SCHEMA = "laformer-scene/1"
SPLIT_SCHEMA = "laformer-split/1"


def scene_to_record(scene: Scene) -> dict:
    record = {
        "schema": SCENE_SCHEMA,
        "target_id": scene.target_id,
        "sampling_period": scene.sampling_period,
        "tracks": [
            {
                "agent_id": t.agent_id,
                "agent_class": t.agent_class,
                "t_h": t.t_h,
                "positions": np.asarray(t.positions, dtype=np.float64).tolist(),
                "valid": np.asarray(t.valid, dtype=bool).tolist(),
            }
            for t in scene.tracks
        ],
        "lanes": [
            {
                "segment_id": seg.segment_id,
                "predecessors": list(seg.predecessor_ids),
                "successors": list(seg.successor_ids),
                "has_traffic_control": seg.vectors[0].has_traffic_control,
                "turn": seg.vectors[0].turn,
                "points": seg.points().tolist(),
            }
            for seg in scene.lanes
        ],
        "metadata": scene.metadata,
    }
    if isinstance(scene, NormalizedScene):
        record["origin"] = np.asarray(scene.origin, dtype=np.float64).tolist()
        record["rotation"] = scene.rotation
    return record


def record_to_scene(record: dict) -> Scene:
    if record.get("schema") != SCENE_SCHEMA:
        raise DataError(f"unsupported scene schema: {record.get('schema')!r}")
    tracks = [
        AgentTrack(
            agent_id=t["agent_id"],
            agent_class=t["agent_class"],
            positions=np.asarray(t["positions"], dtype=np.float64),
            valid=np.asarray(t["valid"], dtype=bool),
            t_h=t["t_h"],
        )
        for t in record["tracks"]
    ]
    lanes = [_record_to_segment(entry) for entry in record["lanes"]]
    common = dict(
        target_id=record["target_id"],
        tracks=tracks,
        lanes=lanes,
        sampling_period=record["sampling_period"],
        metadata=record.get("metadata", {}),
    )
    if "origin" in record:
        return NormalizedScene(
            origin=np.asarray(record["origin"], dtype=np.float64),
            rotation=record.get("rotation", 0.0),
            **common,
        )
    return Scene(**common)


def _record_to_segment(entry: dict) -> LaneSegment:
    pts = np.asarray(entry["points"], dtype=np.float64)
    if pts.shape[0] < 2:
        raise DataError(f"segment {entry.get('segment_id')}: fewer than 2 points")
    vectors = []
    for i in range(pts.shape[0] - 1):
        vectors.append(
            LaneVector(
                d_s=pts[i].copy(),
                d_e=pts[i + 1].copy(),
                d_pre=pts[i - 1].copy() if i > 0 else pts[i].copy(),
                has_traffic_control=entry.get("has_traffic_control", False),
                turn=entry.get("turn", "none"),
            )
        )
    return LaneSegment(
        segment_id=entry["segment_id"],
        vectors=vectors,
        predecessor_ids=list(entry.get("predecessors", [])),
        successor_ids=list(entry.get("successors", [])),
    )


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_scenes(path: str | Path, scenes: Iterable[Scene]) -> int:
    """Write scenes as NDJSON; returns the number of lines written."""
    path = Path(path)
    n = 0
    try:
        with path.open("w", encoding="utf-8") as fh:
            for scene in scenes:
                fh.write(dumps_record(scene_to_record(scene)))
                fh.write("\n")
                n += 1
    except OSError as exc:
        raise DataError(f"cannot write scene file {path}: {exc}") from exc
    return n


def iter_scenes(path: str | Path) -> Iterator[Scene]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                yield record_to_scene(record)
    except OSError as exc:
        raise DataError(f"cannot read scene file {path}: {exc}") from exc


def read_scenes(path: str | Path) -> list[Scene]:
    return list(iter_scenes(path))


def write_split_manifest(
    path: str | Path,
    train_indices: list[int],
    val_indices: list[int],
    extra: dict | None = None,
) -> None:
    manifest = {
        "schema": SPLIT_SCHEMA,
        "train": train_indices,
        "val": val_indices,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def read_split(scene_path: str | Path, manifest_path: str | Path) -> tuple[list[Scene], list[Scene]]:
    """Load scenes and partition them according to a split manifest."""
    scenes = read_scenes(scene_path)
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read split manifest {manifest_path}: {exc}") from exc
    if manifest.get("schema") != SPLIT_SCHEMA:
        raise DataError(f"unsupported split schema: {manifest.get('schema')!r}")
    train = [scenes[i] for i in manifest["train"]]
    val = [scenes[i] for i in manifest["val"]]
    return train, val
