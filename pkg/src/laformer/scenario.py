"""Deterministic synthetic driving scenarios.

Builds small lane graphs (straight roads, curves, four-way crossings) and
populates them with kinematic lane-following agents. Scene ``i`` of a run is
a pure function of ``(seed, i)``: every stochastic choice draws from a
stream keyed by ``(seed, scene_index, role)``, so generation order and
parallelism cannot change the output.

Crossing geometry. Roads meet at the origin of the map frame; each approach
ends at a boundary distance ``b`` from the center. Turn branches are quarter
circles centered on the intersection corners, which makes every branch meet
its entry and exit chains exactly. The whole map is then rotated and shifted
per scene so normalization cannot memorize a fixed layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, GenerationError
from .scene import AgentTrack, LaneSegment, Scene, slice_centerline
from .sceneio import write_scenes, write_split_manifest

TOPOLOGIES = ("straight", "curve", "crossing")
MANEUVERS = ("keep_lane", "lane_change", "turn_left", "turn_right")
ACCEL_PROFILES = ("constant", "accelerate", "decelerate")

# role codes for per-scene RNG streams
_ROLE_MAP = 0
_ROLE_TARGET = 1
_ROLE_NEIGHBORS = 2
_ROLE_POSE = 3


@dataclass
class MapSpec:
    """Parameters of one synthetic lane graph."""

    topology: str = "crossing"
    lane_count_per_approach: int = 1
    lane_width: float = 3.5
    arc_radius: float = 20.0
    branch_turn_options: tuple[str, ...] = ("left", "straight", "right")
    length_m: float = 100.0
    approach_length_m: float = 60.0
    exit_length_m: float = 60.0
    point_spacing_m: float = 2.0
    vectors_per_segment: int = 10

    def validate(self) -> None:
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.lane_count_per_approach < 1:
            raise ConfigError("lane_count_per_approach must be >= 1")
        if self.topology == "curve" and self.arc_radius <= self.lane_width:
            raise ConfigError("arc_radius must exceed lane_width")
        if self.point_spacing_m <= 0 or self.vectors_per_segment < 1:
            raise ConfigError("invalid sampling parameters")
        if self.topology == "crossing" and not self.branch_turn_options:
            raise ConfigError("crossing needs at least one branch turn option")
        for opt in self.branch_turn_options:
            if opt not in ("left", "straight", "right"):
                raise ConfigError(f"unknown turn option {opt!r}")


@dataclass
class BehaviorScript:
    """How one agent drives: speed profile plus a maneuver."""

    nominal_speed: float = 8.0
    accel_profile: str = "constant"
    accel: float = 0.0
    maneuver: str = "keep_lane"
    noise_std: float = 0.0

    def validate(self) -> None:
        if self.nominal_speed <= 0:
            raise ConfigError("nominal_speed must be > 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.maneuver not in MANEUVERS:
            raise ConfigError(f"unknown maneuver {self.maneuver!r}")
        if self.accel_profile not in ACCEL_PROFILES:
            raise ConfigError(f"unknown accel profile {self.accel_profile!r}")


@dataclass
class GenConfig:
    """Dataset-level generation parameters."""

    seed: int = 0
    n_scenes: int = 100
    t_h: int = 4
    t_f: int = 12
    sampling_period: float = 0.5
    n_neighbors: tuple[int, int] = (1, 4)
    topology: str = "crossing"
    lane_count_choices: tuple[int, ...] = (1, 2)
    lane_width_range: tuple[float, float] = (3.2, 3.8)
    speed_range: tuple[float, float] = (5.0, 11.0)
    noise_std_range: tuple[float, float] = (0.03, 0.12)
    maneuver_weights: dict = field(
        default_factory=lambda: {
            "keep_lane": 0.40,
            "turn_left": 0.25,
            "turn_right": 0.25,
            "lane_change": 0.10,
        }
    )
    val_fraction: float = 0.2

    def validate(self) -> None:
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")
        if self.t_h < 2 or self.t_f < 1:
            raise ConfigError("need t_h >= 2 and t_f >= 1")
        if self.sampling_period <= 0:
            raise ConfigError("sampling_period must be > 0")
        lo, hi = self.n_neighbors
        if lo < 0 or hi < lo:
            raise ConfigError("invalid n_neighbors range")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")


def default_benchmark_config(seed: int = 7) -> GenConfig:
    """Crossing benchmark: 2,500 scenes split 2,000 train / 500 val."""
    return GenConfig(seed=seed, n_scenes=2500, val_fraction=0.2)


# ---------------------------------------------------------------------------
# map construction


def _line_points(p0: np.ndarray, p1: np.ndarray, spacing: float) -> np.ndarray:
    length = float(np.linalg.norm(p1 - p0))
    n = max(1, int(round(length / spacing)))
    ts = np.linspace(0.0, 1.0, n + 1)
    return p0[None, :] + ts[:, None] * (p1 - p0)[None, :]


def _arc_points(
    center: np.ndarray, radius: float, a0: float, a1: float, spacing: float,
    endpoint0: np.ndarray, endpoint1: np.ndarray,
) -> np.ndarray:
    span = abs(a1 - a0)
    n = max(2, int(round(radius * span / spacing)))
    angles = np.linspace(a0, a1, n + 1)
    pts = center[None, :] + radius * np.stack(
        [np.cos(angles), np.sin(angles)], axis=1
    )
    # pin endpoints so chains meet their neighbors exactly
    pts[0] = endpoint0
    pts[-1] = endpoint1
    return pts


def _rot90(points: np.ndarray, quarter_turns: int) -> np.ndarray:
    k = quarter_turns % 4
    x, y = points[..., 0], points[..., 1]
    if k == 0:
        return points.copy()
    if k == 1:
        return np.stack([-y, x], axis=-1)
    if k == 2:
        return np.stack([-x, -y], axis=-1)
    return np.stack([y, -x], axis=-1)


def build_map(spec: MapSpec) -> list[LaneSegment]:
    """Build the lane graph for a map spec as linked lane segments."""
    spec.validate()
    if spec.topology == "straight":
        return _build_straight(spec)
    if spec.topology == "curve":
        return _build_curve(spec)
    return _build_crossing(spec)


def _lane_offset(lane: int, width: float) -> float:
    # right-hand traffic: lanes sit right of the road centerline
    return -(lane + 0.5) * width


def _build_straight(spec: MapSpec) -> list[LaneSegment]:
    segments: list[LaneSegment] = []
    for lane in range(spec.lane_count_per_approach):
        y = _lane_offset(lane, spec.lane_width)
        pts = _line_points(
            np.array([0.0, y]), np.array([spec.length_m, y]), spec.point_spacing_m
        )
        segments.extend(
            slice_centerline(pts, spec.vectors_per_segment, start_id=len(segments))
        )
    return segments


def _build_curve(spec: MapSpec) -> list[LaneSegment]:
    segments: list[LaneSegment] = []
    spacing = spec.point_spacing_m
    for lane in range(spec.lane_count_per_approach):
        y = _lane_offset(lane, spec.lane_width)
        radius = spec.arc_radius - y  # left turn: center above the road
        lead_in = _line_points(
            np.array([-spec.approach_length_m, y]), np.array([0.0, y]), spacing
        )
        center = np.array([0.0, spec.arc_radius])
        arc_end = center + radius * np.array([math.cos(0.0), math.sin(0.0)])
        arc = _arc_points(
            center, radius, -math.pi / 2, 0.0, spacing,
            endpoint0=np.array([0.0, y]), endpoint1=arc_end,
        )
        lead_out = _line_points(
            arc_end, arc_end + np.array([0.0, spec.exit_length_m]), spacing
        )
        pts = np.concatenate([lead_in, arc[1:], lead_out[1:]], axis=0)
        segments.extend(
            slice_centerline(pts, spec.vectors_per_segment, start_id=len(segments))
        )
    return segments


def _crossing_boundary(spec: MapSpec) -> float:
    return spec.lane_count_per_approach * spec.lane_width + 2.0


def _build_crossing(spec: MapSpec) -> list[LaneSegment]:
    """Four approaches, each branching into the configured turn options.

    Chains are built in the canonical eastbound frame and rotated into the
    other three approaches. Exits are shared: a right turn from approach k
    ends on the outgoing chain of direction (k - 1) mod 4, a left turn on
    (k + 1) mod 4, straight on k itself.
    """
    w = spec.lane_width
    b = _crossing_boundary(spec)
    spacing = spec.point_spacing_m
    nvs = spec.vectors_per_segment

    segments: list[LaneSegment] = []
    out_first: dict[tuple[int, int], LaneSegment] = {}

    def add_chain(pts: np.ndarray, *, control: bool = False, turn: str = "none"):
        chain = slice_centerline(
            pts, nvs, start_id=len(segments), has_traffic_control=control, turn=turn
        )
        segments.extend(chain)
        return chain

    # shared outgoing chains, one per (direction, lane)
    for direction in range(4):
        for lane in range(spec.lane_count_per_approach):
            y = _lane_offset(lane, w)
            pts = _line_points(
                np.array([b, y]), np.array([b + spec.exit_length_m, y]), spacing
            )
            chain = add_chain(_rot90(pts, direction))
            out_first[(direction, lane)] = chain[0]

    for direction in range(4):
        for lane in range(spec.lane_count_per_approach):
            y = _lane_offset(lane, w)
            entry = np.array([-b - spec.approach_length_m, y])
            boundary = np.array([-b, y])
            in_chain = add_chain(_rot90(_line_points(entry, boundary, spacing), direction))
            in_last = in_chain[-1]

            for option in spec.branch_turn_options:
                if option == "straight":
                    pts = _line_points(boundary, np.array([b, y]), spacing)
                    out_dir, turn = direction, "none"
                elif option == "right":
                    radius = b - (lane + 0.5) * w
                    center = np.array([-b, -b])
                    end = np.array([-(lane + 0.5) * w, -b])
                    pts = _arc_points(
                        center, radius, math.pi / 2, 0.0, spacing,
                        endpoint0=boundary, endpoint1=end,
                    )
                    out_dir, turn = (direction + 3) % 4, "right"
                else:  # left
                    radius = b + (lane + 0.5) * w
                    center = np.array([-b, b])
                    end = np.array([(lane + 0.5) * w, b])
                    pts = _arc_points(
                        center, radius, -math.pi / 2, 0.0, spacing,
                        endpoint0=boundary, endpoint1=end,
                    )
                    out_dir, turn = (direction + 1) % 4, "left"

                branch = add_chain(_rot90(pts, direction), control=True, turn=turn)
                in_last.successor_ids.append(branch[0].segment_id)
                branch[0].predecessor_ids.append(in_last.segment_id)
                exit_seg = out_first[(out_dir, lane)]
                branch[-1].successor_ids.append(exit_seg.segment_id)
                exit_seg.predecessor_ids.append(branch[-1].segment_id)
    return segments


# ---------------------------------------------------------------------------
# routes and kinematics


class _Route:
    """Arc-length parameterization of a chain of lane segments."""

    def __init__(self, points: np.ndarray):
        deltas = np.diff(points, axis=0)
        seg_len = np.linalg.norm(deltas, axis=1)
        keep = seg_len > 1e-12
        self.points = np.concatenate([points[:1], points[1:][keep]], axis=0)
        deltas = np.diff(self.points, axis=0)
        seg_len = np.linalg.norm(deltas, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])
        self._dirs = deltas / seg_len[:, None]

    def position(self, s: float) -> np.ndarray:
        if s <= 0.0:
            return self.points[0] + s * self._dirs[0]
        if s >= self.length:
            return self.points[-1] + (s - self.length) * self._dirs[-1]
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self._dirs) - 1)
        return self.points[i] + (s - self.cum[i]) * self._dirs[i]

    def heading(self, s: float) -> np.ndarray:
        if s <= 0.0:
            return self._dirs[0]
        if s >= self.length:
            return self._dirs[-1]
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        return self._dirs[min(i, len(self._dirs) - 1)]


def _segment_index(segments: list[LaneSegment]) -> dict[int, LaneSegment]:
    return {seg.segment_id: seg for seg in segments}


def _entry_chain_heads(segments: list[LaneSegment]) -> list[LaneSegment]:
    return [seg for seg in segments if not seg.predecessor_ids]


def _follow_route(
    segments: list[LaneSegment], head: LaneSegment, maneuver: str
) -> tuple[list[LaneSegment], float]:
    """Walk successors from an entry head, branching per the maneuver.

    Returns the segment chain and the arc length at which the (first)
    branch point occurs (the route length up to the branching segment's
    end); for branchless routes the branch distance is +inf.
    """
    by_id = _segment_index(segments)
    want = {"turn_left": "left", "turn_right": "right"}.get(maneuver, "none")
    chain = [head]
    branch_s = math.inf
    walked = _chain_arclength(head)
    seen = {head.segment_id}
    current = head
    while current.successor_ids:
        successors = [by_id[i] for i in current.successor_ids if i in by_id]
        successors = [s for s in successors if s.segment_id not in seen]
        if not successors:
            break
        if len(successors) == 1:
            nxt = successors[0]
        else:
            matches = [s for s in successors if s.vectors[0].turn == want]
            if not matches:
                raise GenerationError(
                    f"maneuver {maneuver!r} not realizable: no {want!r} branch"
                )
            nxt = matches[0]
            if math.isinf(branch_s):
                branch_s = walked
        chain.append(nxt)
        seen.add(nxt.segment_id)
        walked += _chain_arclength(nxt)
        current = nxt
    return chain, branch_s


def _chain_arclength(segment: LaneSegment) -> float:
    pts = segment.points()
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def _route_from_chain(chain: list[LaneSegment]) -> _Route:
    pts = [chain[0].points()]
    for seg in chain[1:]:
        pts.append(seg.points()[1:])
    return _Route(np.concatenate(pts, axis=0))


def _speed_profile(script: BehaviorScript, n_steps: int, dt: float) -> np.ndarray:
    accel = {
        "constant": 0.0,
        "accelerate": abs(script.accel) if script.accel else 0.7,
        "decelerate": -abs(script.accel) if script.accel else -0.7,
    }[script.accel_profile]
    v = script.nominal_speed + accel * dt * np.arange(n_steps)
    return np.clip(v, 0.5, None)


def simulate_agent(
    segments: list[LaneSegment],
    script: BehaviorScript,
    rng: np.random.Generator,
    *,
    t_h: int,
    t_f: int,
    sampling_period: float,
    agent_id: int = 0,
    agent_class: str = "target",
    n_future: int | None = None,
    entry_index: int | None = None,
    lane_entry_pairs: list[tuple[int, int]] | None = None,
    branch_time_frac: float | None = None,
) -> AgentTrack:
    """Drive one agent along the lane graph, returning its track.

    Positions follow the route centerline by arc-length integration of the
    speed profile, with independent lateral Gaussian noise per step. Turn
    maneuvers pick the matching branch at the crossing; ``lane_change``
    blends laterally onto the adjacent entry lane over a fixed window.
    ``n_future`` limits how many future steps are emitted (default ``t_f``).
    """
    script.validate()
    heads = _entry_chain_heads(segments)
    if not heads:
        raise GenerationError("map has no entry chains")

    maneuver = script.maneuver
    if maneuver == "lane_change":
        pairs = lane_entry_pairs or _adjacent_entry_pairs(segments, heads)
        if not pairs:
            raise GenerationError("lane_change not realizable: no adjacent lane")
        own_idx, other_idx = pairs[rng.integers(len(pairs))]
        chain, branch_s = _follow_route(segments, heads[own_idx], "keep_lane")
        other_chain, _ = _follow_route(segments, heads[other_idx], "keep_lane")
        route = _route_from_chain(chain)
        other_route = _route_from_chain(other_chain)
    else:
        idx = entry_index if entry_index is not None else int(rng.integers(len(heads)))
        chain, branch_s = _follow_route(segments, heads[idx], maneuver)
        if maneuver in ("turn_left", "turn_right") and math.isinf(branch_s):
            raise GenerationError(f"maneuver {maneuver!r} needs a branching map")
        route = _route_from_chain(chain)
        other_route = None

    n_future = t_f if n_future is None else n_future
    n_steps = t_h + n_future
    dt = sampling_period
    v = _speed_profile(script, n_steps, dt)

    # arc length at each step; step t_h-1 is the last observed step
    ds = 0.5 * (v[:-1] + v[1:]) * dt
    s_rel = np.concatenate([[0.0], np.cumsum(ds)])

    if math.isfinite(branch_s):
        frac = branch_time_frac if branch_time_frac is not None else rng.uniform(0.15, 0.6)
        s0 = branch_s - script.nominal_speed * frac * t_f * dt
        s0 = max(s0, script.nominal_speed * (t_h - 1) * dt + 1.0)
    else:
        lo = script.nominal_speed * (t_h - 1) * dt + 1.0
        hi = max(lo + 1.0, route.length - script.nominal_speed * n_future * dt - 1.0)
        s0 = rng.uniform(lo, hi)
    s = s0 - s_rel[t_h - 1] + s_rel

    blend = np.zeros(n_steps)
    if other_route is not None:
        # lateral blend onto the adjacent lane across a fixed 6-step window
        start = t_h + max(0, int(rng.integers(0, max(1, n_future // 3))))
        window = 6
        ramp = np.clip((np.arange(n_steps) - start) / window, 0.0, 1.0)
        blend = 3 * ramp**2 - 2 * ramp**3

    positions = np.empty((n_steps, 2))
    for k in range(n_steps):
        p = route.position(s[k])
        if other_route is not None and blend[k] > 0.0:
            p = (1.0 - blend[k]) * p + blend[k] * other_route.position(s[k])
        if script.noise_std > 0.0:
            h = route.heading(s[k])
            normal = np.array([-h[1], h[0]])
            p = p + normal * rng.normal(0.0, script.noise_std)
        positions[k] = p

    return AgentTrack(
        agent_id=agent_id,
        agent_class=agent_class,
        positions=positions,
        valid=np.ones(n_steps, dtype=bool),
        t_h=t_h,
    )


def _adjacent_entry_pairs(
    segments: list[LaneSegment], heads: list[LaneSegment]
) -> list[tuple[int, int]]:
    """Entry-head index pairs whose start points are one lane width apart."""
    starts = [seg.vectors[0].d_s for seg in heads]
    dirs = [seg.vectors[0].d_e - seg.vectors[0].d_s for seg in heads]
    pairs = []
    for i in range(len(heads)):
        for j in range(len(heads)):
            if i == j:
                continue
            di = dirs[i] / (np.linalg.norm(dirs[i]) + 1e-12)
            dj = dirs[j] / (np.linalg.norm(dirs[j]) + 1e-12)
            if float(di @ dj) < 0.99:
                continue
            gap = np.linalg.norm(starts[i] - starts[j])
            if 1.0 < gap < 6.0:
                pairs.append((i, j))
    return pairs


# ---------------------------------------------------------------------------
# scene generation


def _scene_rng(seed: int, index: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, role]))


def _weighted_choice(rng: np.random.Generator, weights: dict) -> str:
    names = sorted(weights)
    probs = np.array([weights[n] for n in names], dtype=np.float64)
    probs = probs / probs.sum()
    return names[int(rng.choice(len(names), p=probs))]


def _sample_script(
    rng: np.random.Generator, config: GenConfig, maneuver: str
) -> BehaviorScript:
    profile = ACCEL_PROFILES[int(rng.choice(3, p=[0.6, 0.2, 0.2]))]
    return BehaviorScript(
        nominal_speed=float(rng.uniform(*config.speed_range)),
        accel_profile=profile,
        accel=float(rng.uniform(0.4, 1.0)) if profile != "constant" else 0.0,
        maneuver=maneuver,
        noise_std=float(rng.uniform(*config.noise_std_range)),
    )


def _transform_segments(
    segments: list[LaneSegment], angle: float, shift: np.ndarray
) -> list[LaneSegment]:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])

    def tf(p: np.ndarray) -> np.ndarray:
        return rot @ p + shift

    for seg in segments:
        for v in seg.vectors:
            v.d_s = tf(v.d_s)
            v.d_e = tf(v.d_e)
            v.d_pre = tf(v.d_pre)
    return segments


def _pick_maneuver(rng: np.random.Generator, config: GenConfig, spec: MapSpec) -> str:
    maneuver = _weighted_choice(rng, config.maneuver_weights)
    if spec.topology != "crossing" and maneuver in ("turn_left", "turn_right"):
        maneuver = "keep_lane"
    if maneuver == "lane_change" and spec.lane_count_per_approach < 2:
        maneuver = "keep_lane"
    if maneuver == "turn_left" and "left" not in spec.branch_turn_options:
        maneuver = "keep_lane"
    if maneuver == "turn_right" and "right" not in spec.branch_turn_options:
        maneuver = "keep_lane"
    return maneuver


def generate_scene(config: GenConfig, index: int) -> Scene:
    """Generate scene ``index``; a pure function of (config.seed, index)."""
    config.validate()
    rng_map = _scene_rng(config.seed, index, _ROLE_MAP)
    rng_target = _scene_rng(config.seed, index, _ROLE_TARGET)
    rng_nb = _scene_rng(config.seed, index, _ROLE_NEIGHBORS)
    rng_pose = _scene_rng(config.seed, index, _ROLE_POSE)

    spec = MapSpec(
        topology=config.topology,
        lane_count_per_approach=int(rng_map.choice(list(config.lane_count_choices))),
        lane_width=float(rng_map.uniform(*config.lane_width_range)),
        arc_radius=float(rng_map.uniform(15.0, 30.0)),
    )
    segments = build_map(spec)
    angle = float(rng_pose.uniform(0.0, 2.0 * math.pi))
    shift = rng_pose.uniform(-25.0, 25.0, size=2)
    segments = _transform_segments(segments, angle, shift)

    maneuver = _pick_maneuver(rng_target, config, spec)
    target = simulate_agent(
        segments,
        _sample_script(rng_target, config, maneuver),
        rng_target,
        t_h=config.t_h,
        t_f=config.t_f,
        sampling_period=config.sampling_period,
        agent_id=0,
        agent_class="target",
    )

    tracks = [target]
    lo, hi = config.n_neighbors
    n_nb = int(rng_nb.integers(lo, hi + 1))
    for j in range(n_nb):
        nb_maneuver = _pick_maneuver(rng_nb, config, spec)
        cls = "autonomous_vehicle" if j == 0 and rng_nb.random() < 0.5 else "other"
        track = simulate_agent(
            segments,
            _sample_script(rng_nb, config, nb_maneuver),
            rng_nb,
            t_h=config.t_h,
            t_f=config.t_f,
            sampling_period=config.sampling_period,
            agent_id=j + 1,
            agent_class=cls,
            n_future=0,
        )
        if rng_nb.random() < 0.3:
            gap = int(rng_nb.integers(1, max(2, config.t_h - 1)))
            track.valid[:gap] = False
        tracks.append(track)

    return Scene(
        target_id=0,
        tracks=tracks,
        lanes=segments,
        sampling_period=config.sampling_period,
        metadata={
            "scene_index": index,
            "seed": config.seed,
            "topology": spec.topology,
            "maneuver": maneuver,
            "lane_count": spec.lane_count_per_approach,
        },
    )


def generate_dataset(config: GenConfig, out_dir: str | Path) -> dict:
    """Write the scene file and split manifest; returns summary stats."""
    config.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output dir {out_dir}: {exc}") from exc

    scenes = (generate_scene(config, i) for i in range(config.n_scenes))
    maneuver_counts: dict[str, int] = {}

    def counted():
        for scene in scenes:
            m = scene.metadata["maneuver"]
            maneuver_counts[m] = maneuver_counts.get(m, 0) + 1
            yield scene

    scene_path = out_dir / "scenes.ndjson"
    n = write_scenes(scene_path, counted())

    n_val = int(round(config.n_scenes * config.val_fraction))
    n_train = config.n_scenes - n_val
    train_idx = list(range(n_train))
    val_idx = list(range(n_train, config.n_scenes))
    write_split_manifest(
        out_dir / "split.json",
        train_idx,
        val_idx,
        extra={"maneuver_counts": dict(sorted(maneuver_counts.items()))},
    )
    return {
        "scene_file": str(scene_path),
        "manifest": str(out_dir / "split.json"),
        "n_scenes": n,
        "n_train": n_train,
        "n_val": n_val,
        "maneuver_counts": maneuver_counts,
    }
