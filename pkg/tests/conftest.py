import numpy as np
import pytest
import torch

from laformer.scene import AgentTrack, LaneSegment, LaneVector, Scene


def make_track(agent_id, positions, t_h, agent_class="other", valid=None):
    positions = np.asarray(positions, dtype=np.float64)
    if valid is None:
        valid = np.ones(positions.shape[0], dtype=bool)
    return AgentTrack(
        agent_id=agent_id,
        agent_class=agent_class,
        positions=positions,
        valid=np.asarray(valid, dtype=bool),
        t_h=t_h,
    )


def straight_segment(segment_id, y, x0=0.0, x1=10.0, n_vectors=5, turn="none"):
    xs = np.linspace(x0, x1, n_vectors + 1)
    vectors = []
    for i in range(n_vectors):
        d_s = np.array([xs[i], y])
        d_e = np.array([xs[i + 1], y])
        d_pre = np.array([xs[i - 1], y]) if i > 0 else d_s.copy()
        vectors.append(LaneVector(d_s=d_s, d_e=d_e, d_pre=d_pre, turn=turn))
    return LaneSegment(segment_id=segment_id, vectors=vectors)


def toy_scene(t_h=4, t_f=12, speed=2.0, n_lanes=2, lane_gap=5.0):
    """Target driving along +x on lane y=0, with one neighbor."""
    n = t_h + t_f
    xs = (np.arange(n) - (t_h - 1)) * speed * 0.5
    target = make_track(0, np.stack([xs, np.zeros(n)], 1), t_h, "target")
    nb = make_track(
        1,
        np.stack([xs[:t_h] - 3.0, np.full(t_h, lane_gap)], 1),
        t_h,
        "other",
    )
    lanes = [
        straight_segment(j, j * lane_gap, x0=-10.0, x1=40.0, n_vectors=10)
        for j in range(n_lanes)
    ]
    return Scene(
        target_id=0,
        tracks=[target, nb],
        lanes=lanes,
        sampling_period=0.5,
        metadata={"maneuver": "keep_lane"},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scene_set():
    from laformer.scenario import GenConfig, generate_scene

    cfg = GenConfig(seed=11, n_scenes=24)
    return [generate_scene(cfg, i) for i in range(cfg.n_scenes)]


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def rel_err(a, b, floor=1e-9):
    denom = max(abs(a), abs(b))
    if denom < floor:
        return 0.0
    return abs(a - b) / denom


def fd_gradient(fn, tensor, eps=1e-6):
    """Central finite differences of scalar fn() w.r.t. tensor (in place)."""
    grad = torch.zeros_like(tensor)
    flat = tensor.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        up = float(fn())
        flat[i] = orig - eps
        down = float(fn())
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def check_gradients(fn, tensors, eps=1e-6, tol=1e-3, max_coords=None, rng=None):
    """Compare autograd gradients of scalar fn() against central differences.

    ``tensors`` are leaf float64 tensors with requires_grad; ``max_coords``
    limits how many coordinates per tensor get the expensive FD treatment.
    Returns the worst relative error seen.
    """
    for t in tensors:
        if t.grad is not None:
            t.grad = None
    loss = fn()
    loss.backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.detach().clone()
        with torch.no_grad():
            flat = t.reshape(-1)
            n = flat.numel()
            if max_coords is not None and n > max_coords:
                idx = (rng or np.random.default_rng(0)).choice(
                    n, size=max_coords, replace=False
                )
            else:
                idx = range(n)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = float(fn())
                flat[i] = orig - eps
                down = float(fn())
                flat[i] = orig
                fd = (up - down) / (2.0 * eps)
                an = float(analytic.reshape(-1)[i])
                if max(abs(fd), abs(an)) > 1e-7:
                    worst = max(worst, rel_err(fd, an))
    assert worst < tol, f"gradient mismatch: worst relative error {worst:.2e}"
    return worst
