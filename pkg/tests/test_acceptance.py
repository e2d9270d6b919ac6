"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Criteria 6-8 train models on the default crossing benchmark (2,000 train /
500 val scenes, 3 seeds) and take the bulk of the runtime; run with
``pytest tests/test_acceptance.py -v -s`` to watch progress.
"""

import json
import math
import os
import warnings

import numpy as np
import pytest
import torch

from laformer.data import PipelineConfig, SceneDataset
from laformer.decoder import classification_loss, stage1_loss, wta_regression_loss
from laformer.encoder import CrossAttention
from laformer.lane_aware import lane_loss, select_top_k
from laformer.metrics import compute_metrics, misses
from laformer.model import LAformer, ModelConfig
from laformer.refine import angle_loss, offset_loss
from laformer.scenario import GenConfig, generate_dataset, generate_scene
from laformer.sceneio import read_split
from laformer.sweep import format_table, run_ablation, run_sweep
from laformer.train import TrainConfig, compute_losses, evaluate_checkpoint, run_training

from conftest import toy_scene

WORKERS = min(2, os.cpu_count() or 1)


def report(criterion: int, name: str, ok: bool, detail: str = ""):
    line = f"[ACCEPTANCE {criterion}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def benchmark_train_config(**kw) -> TrainConfig:
    # desk-scale benchmark settings; lr 2e-3 is needed for the lane pathway
    # to converge within 30 epochs (everything recorded in checkpoints)
    defaults = dict(
        epochs=30, learning_rate=2e-3, batch_size=32, seed=0,
        d_model=32, n_modes=6, K_eval=6, align_heading=True,
        deterministic=True,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture(scope="session")
def benchmark_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("benchmark")
    generate_dataset(GenConfig(seed=7, n_scenes=2500, val_fraction=0.2), out)
    return out


@pytest.fixture(scope="session")
def ablation(benchmark_dir, tmp_path_factory):
    ckpt_dir = tmp_path_factory.mktemp("ablation_ckpts")
    rows = run_ablation(
        benchmark_train_config(),
        benchmark_dir / "scenes.ndjson",
        benchmark_dir / "split.json",
        variants=("baseline", "spatial", "temporal", "full"),
        seeds=(0, 1, 2),
        max_workers=WORKERS,
        out_dir=ckpt_dir,
    )
    return rows, ckpt_dir


# ---------------------------------------------------------------------------
# independent scalar-loop oracles (pure python, no tensor ops)


def oracle_lane_loss(probs, labels):
    total = 0.0
    for t in range(len(labels)):
        total += -math.log(probs[t][labels[t]])
    return total


def oracle_wta(mu, b, y):
    M, T = len(mu), len(y)
    errs = [sum(math.dist(mu[m][t], y[t]) for t in range(T)) for m in range(M)]
    m = errs.index(min(errs))
    total = 0.0
    for t in range(T):
        for d in range(2):
            e = abs(y[t][d] - mu[m][t][d])
            total += math.log(2.0 * b[m][t][d]) + e / b[m][t][d]
    return total / T


def oracle_cls(mu, pi, y, tau=1.0):
    M, T = len(mu), len(y)
    fde = [math.dist(mu[m][T - 1], y[T - 1]) for m in range(M)]
    exps = [math.exp(-f / tau) for f in fde]
    targets = [v / sum(exps) for v in exps]
    return -sum(t * math.log(p) for t, p in zip(targets, pi))


def oracle_offset(delta, anchors, y):
    M, T = len(delta), len(y)
    refined = [
        [[anchors[m][t][d] + delta[m][t][d] for d in range(2)] for t in range(T)]
        for m in range(M)
    ]
    errs = [sum(math.dist(refined[m][t], y[t]) for t in range(T)) for m in range(M)]
    m = errs.index(min(errs))
    total = 0.0
    for t in range(T):
        true = [y[t][d] - anchors[m][t][d] for d in range(2)]
        total += math.dist(delta[m][t], true)
    return total / T


def oracle_angle(pred, y, eps=1e-6):
    vals = []
    for t in range(len(y)):
        np_ = math.hypot(*pred[t])
        ng = math.hypot(*y[t])
        if np_ < eps or ng < eps:
            continue
        theta = math.atan2(y[t][1], y[t][0])
        theta_hat = math.atan2(pred[t][1], pred[t][0])
        vals.append(-math.cos(theta_hat - theta))
    return sum(vals) / len(vals) if vals else 0.0


def test_criterion_1_loss_oracle_equivalence():
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        T, N, M = 12, int(rng.integers(2, 9)), int(rng.integers(1, 7))
        raw = rng.random((T, N)) + 0.05
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, N, size=T)
        got = float(lane_loss(torch.tensor(probs).unsqueeze(0),
                              torch.tensor(labels).unsqueeze(0)))
        worst = max(worst, abs(got - oracle_lane_loss(probs.tolist(), labels.tolist())))

        mu = rng.normal(size=(M, T, 2))
        b = rng.uniform(0.05, 3.0, size=(M, T, 2))
        y = rng.normal(size=(T, 2))
        got = float(wta_regression_loss(
            torch.tensor(mu).unsqueeze(0), torch.tensor(b).unsqueeze(0),
            torch.tensor(y).unsqueeze(0)))
        worst = max(worst, abs(got - oracle_wta(mu.tolist(), b.tolist(), y.tolist())))

        pi_raw = rng.random(M) + 0.05
        pi = pi_raw / pi_raw.sum()
        got = float(classification_loss(
            torch.tensor(mu).unsqueeze(0), torch.tensor(pi).unsqueeze(0),
            torch.tensor(y).unsqueeze(0)))
        worst = max(worst, abs(got - oracle_cls(mu.tolist(), pi.tolist(), y.tolist())))

        delta = rng.normal(size=(M, T, 2))
        got = float(offset_loss(
            torch.tensor(delta).unsqueeze(0), torch.tensor(mu).unsqueeze(0),
            torch.tensor(y).unsqueeze(0)))
        worst = max(worst, abs(got - oracle_offset(delta.tolist(), mu.tolist(), y.tolist())))

        pred = rng.normal(size=(T, 2)) * 4 + 8
        y_off = rng.normal(size=(T, 2)) * 4 + 8
        got = float(angle_loss(
            torch.tensor(pred).reshape(1, 1, T, 2), torch.tensor(y_off).unsqueeze(0)))
        worst = max(worst, abs(got - oracle_angle(pred.tolist(), y_off.tolist())))
    report(1, "loss oracle equivalence (5 losses x 100 instances)",
           worst <= 1e-9, f"worst abs diff {worst:.2e}")


def _wta_margins(trajectories, future):
    err = torch.linalg.vector_norm(
        trajectories - future.unsqueeze(1), dim=-1
    ).sum(-1)
    ordered, _ = torch.sort(err, dim=-1)
    margin = float((ordered[:, 1] - ordered[:, 0]).min())
    winner = err.argmin(-1)
    batch_idx = torch.arange(future.shape[0])
    coord_err = (future - trajectories[batch_idx, winner]).abs()
    return margin, float(coord_err.min()), winner


@torch.no_grad()
def _smooth_point(model, batch, z, stage, k) -> bool:
    """True when no discrete boundary sits within finite-difference reach."""
    out = model(batch, z=z, stage=stage)
    y = batch["future"]
    margin, min_coord, _ = _wta_margins(out["mu"], y)
    if margin < 1e-3 or min_coord < 1e-4:
        return False
    if out["scores"] is not None:
        ordered, _ = torch.sort(out["scores"], dim=-1, descending=True)
        if ordered.shape[-1] > k and float((ordered[..., k - 1] - ordered[..., k]).min()) < 1e-4:
            return False
    if stage == 2:
        margin2, _, winner2 = _wta_margins(out["refined"], y)
        if margin2 < 1e-3:
            return False
        batch_idx = torch.arange(y.shape[0])
        d_true = y - out["anchors"][batch_idx, winner2]
        gap = torch.linalg.vector_norm(
            out["delta"][batch_idx, winner2] - d_true, dim=-1
        )
        if float(gap.min()) < 1e-5:  # L2-norm kink at zero residual
            return False
    return True


def _fd_check(fn, tensors, rng, n_coords=4, eps=1e-6):
    """Worst relative error between autograd and central differences."""
    for t in tensors:
        t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.detach().clone()
        with torch.no_grad():
            flat = t.reshape(-1)
            coords = rng.choice(flat.numel(), size=min(n_coords, flat.numel()),
                                replace=False)
            for i in coords:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = float(fn())
                flat[i] = orig - eps
                down = float(fn())
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                an = float(analytic.reshape(-1)[i])
                if max(abs(fd), abs(an)) > 1e-7:
                    worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    return worst


def test_criterion_2_gradient_verification():
    rng = np.random.default_rng(200)
    worst = 0.0

    for point in range(20):
        T, N, M = 6, 5, 4
        logits = torch.tensor(rng.normal(size=(1, T, N)), requires_grad=True)
        labels = torch.tensor(rng.integers(0, N, size=(1, T)))
        worst = max(worst, _fd_check(
            lambda: lane_loss(logits, labels, from_logits=True), [logits], rng))

        mu = torch.tensor(rng.normal(size=(1, M, T, 2)), requires_grad=True)
        b = torch.tensor(rng.uniform(0.3, 2.0, size=(1, M, T, 2)), requires_grad=True)
        y = torch.tensor(rng.normal(size=(1, T, 2)))
        worst = max(worst, _fd_check(
            lambda: wta_regression_loss(mu, b, y), [mu, b], rng))

        pi_logits = torch.tensor(rng.normal(size=(1, M)), requires_grad=True)
        worst = max(worst, _fd_check(
            lambda: classification_loss(mu.detach(), pi_logits, y, from_logits=True),
            [pi_logits], rng))

        delta = torch.tensor(rng.normal(size=(1, M, T, 2)), requires_grad=True)
        anchors = torch.tensor(rng.normal(size=(1, M, T, 2)))
        worst = max(worst, _fd_check(
            lambda: offset_loss(delta, anchors, y), [delta], rng))

        pred = torch.tensor(rng.normal(size=(1, M, T, 2)) + 6.0, requires_grad=True)
        y_off = torch.tensor(rng.normal(size=(1, T, 2)) + 6.0)
        worst = max(worst, _fd_check(
            lambda: angle_loss(pred, y_off), [pred], rng))

    # full stage-1 and stage-2 objectives w.r.t. model parameters; points
    # sitting near a discrete boundary (WTA tie, top-k tie, |err| kink)
    # are resampled, per the criterion's "away from ties" scope
    scenes = [toy_scene(speed=0.8 + 0.3 * i, n_lanes=3, lane_gap=4.0 + 0.5 * (i % 4))
              for i in range(8)]
    dataset = SceneDataset(scenes, PipelineConfig(), dtype=torch.float64)
    tc = TrainConfig(d_model=16, n_modes=4, K_eval=4)
    checked = 0
    for point in range(20):
        stage = 1 if point % 2 == 0 else 2
        for attempt in range(50):
            torch.manual_seed(1000 * point + attempt)
            model = LAformer(tc.model_config()).double()
            idx = rng.choice(len(scenes), size=4, replace=False)
            batch = dataset.batch(idx)
            z = torch.tensor(rng.normal(size=(4, 2)))
            if _smooth_point(model, batch, z, stage, tc.k_stage1):
                break
        else:
            continue

        def objective():
            out = model(batch, z=z, stage=stage)
            return compute_losses(out, batch, tc, stage)["total"]

        names = [n for n, _ in model.named_parameters()
                 if stage == 2 or not n.startswith("refiner.")]
        chosen = rng.choice(len(names), size=3, replace=False)
        params = [dict(model.named_parameters())[names[i]] for i in chosen]
        worst = max(worst, _fd_check(objective, params, rng, n_coords=2))
        checked += 1

    report(2, "gradient verification (losses + stage objectives, 20+ points)",
           worst < 1e-3 and checked >= 18,
           f"worst rel err {worst:.2e} over {checked} objective points")


def test_criterion_3_closed_form_spot_checks():
    scores = torch.full((1, 12, 4), 0.25, dtype=torch.float64)
    labels = torch.zeros(1, 12, dtype=torch.long)
    lane = float(lane_loss(scores, labels))
    ok_lane = abs(lane - 12 * math.log(4)) <= 1e-9

    y = torch.randn(1, 12, 2, dtype=torch.float64)
    nll = float(wta_regression_loss(y.unsqueeze(1), torch.full((1, 1, 12, 2), 0.5,
                                                               dtype=torch.float64), y))
    ok_nll = abs(nll) <= 1e-12

    future = torch.randn(1, 12, 2, dtype=torch.float64) + 5.0
    ang = float(angle_loss(future.unsqueeze(1), future))
    ok_angle = ang == -1.0

    report(3, "closed-form spot checks",
           ok_lane and ok_nll and ok_angle,
           f"lane {lane:.12f}, nll {nll:.2e}, angle {ang}")


def test_criterion_4_metric_correctness():
    rng = np.random.default_rng(400)
    worst = 0.0
    for _ in range(50):
        B, M, T = int(rng.integers(1, 6)), int(rng.integers(1, 7)), int(rng.integers(1, 13))
        K = int(rng.integers(1, M + 1))
        trajs = rng.normal(size=(B, M, T, 2)) * 3
        probs = rng.random((B, M))
        probs = probs / probs.sum(axis=1, keepdims=True)
        fut = rng.normal(size=(B, T, 2)) * 3
        got = compute_metrics(torch.tensor(trajs), torch.tensor(probs),
                              torch.tensor(fut), K)
        # brute force enumeration
        ades, fdes = [], []
        for s in range(B):
            order = sorted(range(M), key=lambda m: (-probs[s][m], m))[:K]
            best_a = min(
                sum(math.dist(trajs[s][m][t], fut[s][t]) for t in range(T)) / T
                for m in order
            )
            best_f = min(math.dist(trajs[s][m][T - 1], fut[s][T - 1]) for m in order)
            ades.append(best_a)
            fdes.append(best_f)
        worst = max(worst, abs(got.min_ade - sum(ades) / B),
                    abs(got.min_fde - sum(fdes) / B),
                    abs(got.miss_rate - sum(1 for f in fdes if f > 2.0) / B))

    fut = torch.zeros(1, 4, 2, dtype=torch.float64)
    boundary_ok = True
    for dist, is_miss in ((2.01, True), (1.99, False), (2.0, False)):
        traj = torch.zeros(1, 1, 4, 2, dtype=torch.float64)
        traj[0, 0, -1, 0] = dist
        boundary_ok &= bool(misses(traj, fut)[0]) is is_miss
    report(4, "metric correctness vs brute force + 2.0 m boundary",
           worst <= 1e-9 and boundary_ok, f"worst abs diff {worst:.2e}")


def test_criterion_5_structural_invariants():
    torch.manual_seed(500)
    # attention rows sum to 1 over valid keys
    att = CrossAttention(16)
    q, kv = torch.randn(3, 5, 16), torch.randn(3, 9, 16)
    mask = torch.rand(3, 9) > 0.4
    mask[:, 0] = True
    _, w = att(q, kv, mask, need_weights=True)
    rows_ok = bool(torch.allclose(w.sum(-1), torch.ones(3, 5), atol=1e-6))

    # mask-equivalence: padded masked lane and agent change nothing
    model = LAformer(ModelConfig(d_model=16, n_modes=4, variant="full")).double()
    batch = SceneDataset([toy_scene(speed=s) for s in (1.0, 2.5)],
                         PipelineConfig(), dtype=torch.float64).full_batch()
    out1 = model(batch, stage=2)
    padded = dict(batch)
    B, N, LV, F = batch["lane_feats"].shape
    padded["lane_feats"] = torch.cat(
        [batch["lane_feats"], torch.randn(B, 1, LV, F, dtype=torch.float64)], 1)
    padded["lane_vec_mask"] = torch.cat(
        [batch["lane_vec_mask"], torch.ones(B, 1, LV, dtype=torch.bool)], 1)
    padded["lane_mask"] = torch.cat(
        [batch["lane_mask"], torch.zeros(B, 1, dtype=torch.bool)], 1)
    out2 = model(padded, stage=2)
    mask_ok = all(
        bool(torch.allclose(out1[k], out2[k], atol=1e-6))
        for k in ("mu", "b", "pi_logits", "refined")
    )

    # translation equivariance, bit exact on a dyadic grid
    base, shifted = toy_scene(), toy_scene()
    delta = np.array([1536.0, -729.0]) / 64.0
    for track in shifted.tracks:
        track.positions = track.positions + delta
    for seg in shifted.lanes:
        for v in seg.vectors:
            v.d_s, v.d_e, v.d_pre = v.d_s + delta, v.d_e + delta, v.d_pre + delta
    b1 = SceneDataset([base], PipelineConfig(), dtype=torch.float64).full_batch()
    b2 = SceneDataset([shifted], PipelineConfig(), dtype=torch.float64).full_batch()
    o1, o2 = model(b1, stage=2), model(b2, stage=2)
    translate_ok = all(
        bool(torch.equal(o1[k], o2[k])) for k in ("mu", "b", "pi_logits", "refined")
    )

    # byte-deterministic generation
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        generate_dataset(GenConfig(seed=13, n_scenes=10), Path(tmp) / "a")
        generate_dataset(GenConfig(seed=13, n_scenes=10), Path(tmp) / "b")
        bytes_ok = (Path(tmp) / "a" / "scenes.ndjson").read_bytes() == (
            Path(tmp) / "b" / "scenes.ndjson").read_bytes()

    report(5, "structural invariants (attention sums, masking, translation, determinism)",
           rows_ok and mask_ok and translate_ok and bytes_ok,
           f"rows {rows_ok}, mask {mask_ok}, translation {translate_ok}, bytes {bytes_ok}")


def test_criterion_6_directional_ablation(ablation):
    rows, _ = ablation
    fde = {r["variant"]: r["min_fde"]["mean"] for r in rows}
    print(format_table(rows, "variant"), flush=True)
    ordered = (
        fde["full"] <= fde["temporal"] <= fde["spatial"] <= fde["baseline"]
    )
    improvement = 1.0 - fde["full"] / fde["baseline"]
    report(
        6, "directional ablation Full <= Temporal <= Spatial <= Baseline",
        ordered and improvement >= 0.05,
        "minFDE_6 " + ", ".join(f"{v} {fde[v]:.3f}" for v in
                                ("baseline", "spatial", "temporal", "full"))
        + f"; full vs baseline improvement {improvement:.1%}",
    )


def _candidate_recall(model, dataset, k=2, batch_size=256):
    hits, total = 0, 0
    with torch.no_grad():
        for batch in dataset.iter_batches(batch_size):
            out = model(batch, k=k, stage=1)
            idx = out["candidates"]["indices"]
            labels = batch["labels"].unsqueeze(-1)
            hits += int((idx == labels).any(-1).sum())
            total += labels.shape[0] * labels.shape[1]
    return hits / total


def test_criterion_7_candidate_usefulness(benchmark_dir, ablation):
    _, ckpt_dir = ablation
    from laformer.checkpoint import load_model

    model, cfg, _ = load_model(ckpt_dir / "full_k2_seed0.npz")
    _, val_scenes = read_split(benchmark_dir / "scenes.ndjson",
                               benchmark_dir / "split.json")
    dataset = SceneDataset(val_scenes, cfg.pipeline_config())

    trained = _candidate_recall(model, dataset)
    torch.manual_seed(12345)
    untrained = LAformer(cfg.model_config())
    untrained_recall = _candidate_recall(untrained, dataset)
    report(
        7, "ground-truth lane in top-2 candidates at >= 2x untrained rate",
        trained >= 2.0 * untrained_recall,
        f"trained {trained:.3f} vs untrained {untrained_recall:.3f}",
    )


def test_criterion_8_topk_sensitivity(benchmark_dir):
    rows = run_sweep(
        "k", [1, 2, 3, 4],
        benchmark_train_config(variant="temporal", epochs=15),
        benchmark_dir / "scenes.ndjson", benchmark_dir / "split.json",
        seeds=(0, 1), max_workers=WORKERS,
    )
    print(format_table(rows, "value"), flush=True)
    means = [r["min_fde"]["mean"] for r in rows]
    best_k = rows[means.index(min(means))]["value"]
    if best_k == 1:
        warnings.warn(
            "k-sweep best mean minFDE_6 landed at k=1; soft criterion, "
            "seeds disagree with the expected k>=2 pattern"
        )
    detail = ", ".join(
        f"k={r['value']}: {r['min_fde']['mean']:.3f}±{r['min_fde']['std']:.3f}"
        for r in rows
    )
    report(8, f"top-k sweep pattern (best at k={best_k}; soft criterion)",
           True, detail)


def test_criterion_9_reproducibility(tmp_path):
    scenes = [generate_scene(GenConfig(seed=91, n_scenes=60), i) for i in range(60)]
    cfg = TrainConfig(variant="temporal", epochs=2, seed=3, d_model=16,
                      n_modes=4, K_eval=4, align_heading=True)
    r1 = run_training(cfg, scenes[:48], scenes[48:], out_path=tmp_path / "a.npz")
    r2 = run_training(cfg, scenes[:48], scenes[48:], out_path=tmp_path / "b.npz")
    runs_identical = r1.metrics == r2.metrics

    reload_report = evaluate_checkpoint(r1.checkpoint_path, scenes[48:])
    roundtrip_ok = (
        reload_report.min_ade == r1.metrics.min_ade
        and reload_report.min_fde == r1.metrics.min_fde
        and reload_report.miss_rate == r1.metrics.miss_rate
    )
    report(9, "deterministic reruns and checkpoint round trip bit-exact",
           runs_identical and roundtrip_ok,
           f"reruns {runs_identical}, roundtrip {roundtrip_ok}")
