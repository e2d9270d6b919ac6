import math

import numpy as np
import pytest
import torch

from laformer.checkpoint import load_model, save_checkpoint
from laformer.data import PipelineConfig, SceneDataset
from laformer.errors import ConfigError
from laformer.model import LAformer
from laformer.scenario import GenConfig, generate_scene
from laformer.train import (
    TrainConfig,
    evaluate_checkpoint,
    evaluate_model,
    predict_scene,
    run_training,
)
from laformer.lane_aware import select_top_k


def tiny_config(**kw):
    defaults = dict(
        variant="full", epochs=1, seed=0, d_model=16, n_modes=4, K_eval=4,
        batch_size=16, align_heading=True,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def scenes():
    cfg = GenConfig(seed=21, n_scenes=50)
    return [generate_scene(cfg, i) for i in range(50)]


class TestRunTraining:
    def test_one_epoch_smoke(self, scenes):
        result = run_training(tiny_config(), scenes[:40], scenes[40:])
        assert math.isfinite(result.history[0]["train_loss"])
        assert result.metrics is not None
        assert result.metrics.n_scenes == 10

    def test_stage2_without_checkpoint_rejected(self, scenes):
        with pytest.raises(ConfigError):
            run_training(tiny_config(stage=2), scenes[:20])

    def test_stage2_from_wrong_variant_rejected(self, scenes, tmp_path):
        r1 = run_training(tiny_config(variant="baseline_s2"), scenes[:20],
                          out_path=tmp_path / "s1.npz")
        with pytest.raises(ConfigError):
            run_training(
                tiny_config(variant="full", stage=2), scenes[:20],
                init_checkpoint=r1.checkpoint_path,
            )

    def test_stage2_resumes_and_records_provenance(self, scenes, tmp_path):
        r1 = run_training(tiny_config(), scenes[:30], out_path=tmp_path / "s1.npz")
        r2 = run_training(
            tiny_config(stage=2), scenes[:30], scenes[30:40],
            init_checkpoint=r1.checkpoint_path, out_path=tmp_path / "s2.npz",
        )
        _, _, meta = load_model(r2.checkpoint_path)
        assert meta["stage"] == 2
        assert meta["provenance"]["stages"] == [1, 2]

    def test_deterministic_reproducibility(self, scenes):
        cfg = tiny_config(epochs=2)
        r1 = run_training(cfg, scenes[:30], scenes[30:40])
        r2 = run_training(cfg, scenes[:30], scenes[30:40])
        assert r1.metrics == r2.metrics
        for key in r1.state_dict:
            assert torch.equal(r1.state_dict[key], r2.state_dict[key]), key

    def test_stage1_leaves_refiner_untrained(self, scenes):
        cfg = tiny_config()
        torch.manual_seed(cfg.seed)
        fresh = LAformer(cfg.model_config())
        result = run_training(cfg, scenes[:30])
        for key in result.state_dict:
            if key.startswith("refiner."):
                assert torch.equal(result.state_dict[key], fresh.state_dict()[key])


class TestEvaluate:
    def test_checkpoint_round_trip_preserves_metrics(self, scenes, tmp_path):
        cfg = tiny_config(epochs=2)
        result = run_training(cfg, scenes[:30], scenes[30:40],
                              out_path=tmp_path / "m.npz")
        report = evaluate_checkpoint(result.checkpoint_path, scenes[30:40])
        assert report.min_ade == result.metrics.min_ade
        assert report.min_fde == result.metrics.min_fde
        assert report.miss_rate == result.metrics.miss_rate

    def test_k_exceeding_modes_rejected(self, scenes):
        cfg = tiny_config()
        result = run_training(cfg, scenes[:20])
        model = LAformer(cfg.model_config())
        model.load_state_dict(result.state_dict)
        ds = SceneDataset(scenes[:5], cfg.pipeline_config())
        with pytest.raises(ConfigError):
            evaluate_model(model, ds, K=5, stage=1)

    def test_horizon_mismatch_rejected(self, scenes, tmp_path):
        cfg = tiny_config()
        result = run_training(cfg, scenes[:20], out_path=tmp_path / "m.npz")
        other = [generate_scene(GenConfig(seed=3, n_scenes=2, t_f=6), i) for i in range(2)]
        with pytest.raises(ConfigError):
            evaluate_checkpoint(result.checkpoint_path, other)


class TestPredict:
    @pytest.fixture(scope="class")
    def trained(self, scenes, tmp_path_factory):
        cfg = tiny_config(epochs=2)
        path = tmp_path_factory.mktemp("ckpt") / "m.npz"
        r1 = run_training(cfg, scenes[:30], out_path=path)
        r2 = run_training(
            tiny_config(epochs=1, stage=2), scenes[:30],
            init_checkpoint=r1.checkpoint_path,
            out_path=tmp_path_factory.mktemp("ckpt2") / "m2.npz",
        )
        model, train_cfg, _ = load_model(r2.checkpoint_path)
        return model, train_cfg

    def test_record_shape(self, trained, scenes):
        model, cfg = trained
        record = predict_scene(model, cfg, scenes[45], K=4)
        assert record["schema"] == "laformer-prediction/1"
        assert len(record["trajectories"]) == 4
        assert all(len(t) == cfg.t_f for t in record["trajectories"])
        assert len(record["probabilities"]) == 4
        assert record["candidates"]["k"] == cfg.k_stage2

    def test_denormalization_is_recorded_origin_shift(self, trained, scenes):
        model, cfg = trained
        scene = scenes[45]
        record = predict_scene(model, cfg, scene, K=2)
        ds = SceneDataset([scene], cfg.pipeline_config())
        batch = ds.full_batch()
        with torch.no_grad():
            out = model(batch, k=cfg.k_stage2, stage=2)
        traj = model.trajectories(out)
        order = torch.argsort(out["pi"][0], descending=True, stable=True)[:2]
        normalized = traj[0, order].to(torch.float64).numpy()
        rotation = record["rotation"]
        c, s = math.cos(-rotation), math.sin(-rotation)
        rot = np.array([[c, -s], [s, c]])
        expected = normalized @ rot.T + np.asarray(record["origin"])
        assert np.array_equal(np.asarray(record["trajectories"]), expected)

    def test_candidates_match_recomputation(self, trained, scenes):
        model, cfg = trained
        scene = scenes[46]
        record = predict_scene(model, cfg, scene)
        ds = SceneDataset([scene], cfg.pipeline_config())
        batch = ds.full_batch()
        with torch.no_grad():
            out = model(batch, k=cfg.k_stage2, stage=2)
        cand = select_top_k(
            out["scores"], out["C"], cfg.k_stage2, batch["lane_mask"]
        )
        assert record["candidates"]["indices"] == cand["indices"][0].tolist()

    def test_missing_future_accepted(self, trained, scenes):
        model, cfg = trained
        scene = scenes[47]
        scene.target_track().positions = scene.target_track().positions[: cfg.t_h]
        scene.target_track().valid = scene.target_track().valid[: cfg.t_h]
        record = predict_scene(model, cfg, scene, K=1)
        assert len(record["trajectories"]) == 1
