"""Scene and prediction figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .scene import Scene


def plot_scene(scene: Scene, record: dict | None, out_path: str | Path) -> Path:
    """Render lanes, observed track, ground truth, predicted modes.

    When the prediction record carries per-step lane candidates, the
    candidate segments are overdrawn color-graded by their scores.
    """
    fig, ax = plt.subplots(figsize=(7, 7))

    for seg in scene.lanes:
        pts = seg.points()
        ax.plot(pts[:, 0], pts[:, 1], color="0.8", lw=1.0, zorder=1)

    if record is not None and "candidates" in record:
        cand = record["candidates"]
        by_id = {seg.segment_id: seg for seg in scene.lanes}
        cmap = plt.get_cmap("viridis")
        for step_idx, step_scores in zip(cand["indices"], cand["scores"]):
            for lane_idx, score in zip(step_idx, step_scores):
                seg_id = cand["lane_segment_ids"][lane_idx]
                seg = by_id.get(seg_id)
                if seg is None:
                    continue
                pts = seg.points()
                ax.plot(
                    pts[:, 0], pts[:, 1],
                    color=cmap(float(score)), lw=2.0, alpha=0.6, zorder=2,
                )

    target = scene.target_track()
    obs = target.observed[target.observed_valid]
    ax.plot(obs[:, 0], obs[:, 1], "o-", color="tab:blue", label="observed", zorder=4)
    future = target.future
    if future.shape[0] > 0:
        ax.plot(
            future[:, 0], future[:, 1], "s-", color="tab:green",
            label="ground truth", zorder=4,
        )

    for track in scene.tracks:
        if track.agent_id == scene.target_id:
            continue
        pts = track.observed[track.observed_valid]
        if pts.shape[0]:
            ax.plot(pts[:, 0], pts[:, 1], "-", color="0.5", lw=1.0, zorder=3)

    if record is not None:
        trajs = np.asarray(record["trajectories"])
        probs = record["probabilities"]
        reds = plt.get_cmap("autumn")
        for m, (traj, p) in enumerate(zip(trajs, probs)):
            ax.plot(
                traj[:, 0], traj[:, 1], "--",
                color=reds(m / max(1, len(trajs) - 1)),
                lw=1.5, zorder=5, label=f"mode {m} (p={p:.2f})",
            )

    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(scene.metadata.get("maneuver", ""))

    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, dpi=130, bbox_inches="tight")
    except OSError as exc:
        raise DataError(f"cannot write figure {out_path}: {exc}") from exc
    finally:
        plt.close(fig)
    return out_path
