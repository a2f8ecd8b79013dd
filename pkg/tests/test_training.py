import json
from pathlib import Path

import numpy as np
import pytest

from clip_vqa.checkpoint import load_checkpoint, load_metadata
from clip_vqa.exceptions import ConfigurationError, TrainingError, UsageError
from clip_vqa.frames import VideoSample, read_frames, read_manifest
from clip_vqa.models import preset_config
from clip_vqa.network import ClipVQA
from clip_vqa.nn import Parameter
from clip_vqa.quality import PredictionDistribution, ReferenceRatings
from clip_vqa.rng import RngState
from clip_vqa.tensor import set_debug
from clip_vqa.training import (
    SGD,
    clip_gradients,
    lr_at,
    predict_video,
    resolve_mos_range,
    sample_loss,
    scale_samples,
    split_samples,
    train,
    train_step,
)


def fake_samples(count):
    return [VideoSample(f"v{i}", Path(f"v{i}.ftb"), 1.0 + i) for i in range(count)]


class TestSchedule:
    def test_step_decay(self, toy_config):
        lrs = [lr_at(toy_config, epoch) for epoch in [1, 10, 11, 20, 21]]
        np.testing.assert_allclose(lrs, [0.005, 0.005, 0.0005, 0.0005, 0.00005])


class TestSplit:
    """Deterministic 8:2 split."""

    def test_disjoint_exhaustive_deterministic(self):
        samples = fake_samples(200)
        train_set, test_set = split_samples(samples, 0.8, seed=3)
        assert (len(train_set), len(test_set)) == (160, 40)
        ids = {s.id for s in train_set}
        assert ids.isdisjoint(s.id for s in test_set)
        assert ids | {s.id for s in test_set} == {s.id for s in samples}
        again, _ = split_samples(samples, 0.8, seed=3)
        assert again == train_set

    def test_manifest_order_kept(self):
        train_set, test_set = split_samples(fake_samples(20), 0.8, seed=0)
        for part in (train_set, test_set):
            assert [s.raw_mos for s in part] == sorted(s.raw_mos for s in part)

    def test_seed_changes_split(self):
        a, _ = split_samples(fake_samples(50), 0.8, seed=0)
        b, _ = split_samples(fake_samples(50), 0.8, seed=1)
        assert a != b

    def test_both_sides_non_empty(self):
        train_set, test_set = split_samples(fake_samples(2), 0.8, seed=0)
        assert len(train_set) == len(test_set) == 1
        with pytest.raises(UsageError):
            split_samples(fake_samples(1), 0.8, seed=0)


class TestMosRange:
    def test_resolution_order(self):
        samples = fake_samples(4)
        assert resolve_mos_range(preset_config("toy"), samples) == (1.0, 4.0)
        named = preset_config("toy", dataset="KoNViD-1k")
        assert resolve_mos_range(named, samples) == (1.22, 4.64)
        fixed = preset_config("toy", dataset="KoNViD-1k", mos_range=(0.0, 10.0))
        assert resolve_mos_range(fixed, samples) == (0.0, 10.0)

    def test_scaling(self):
        scaled = scale_samples(fake_samples(5), (1.0, 5.0), ReferenceRatings())
        assert [s.scaled_mos for s in scaled] == [1.0, 2.0, 3.0, 4.0, 5.0]


class TestOptimizer:
    def test_momentum_update(self):
        p = Parameter([1.0])
        optimizer = SGD([p], momentum=0.9)
        p.grad = np.array([1.0])
        optimizer.step(0.1)
        np.testing.assert_allclose(p.data, [0.9])
        p.grad = np.array([1.0])
        optimizer.step(0.1)
        np.testing.assert_allclose(p.data, [0.9 - 0.1 * 1.9])

    def test_frozen_parameters_untouched(self):
        frozen = Parameter([1.0], frozen=True)
        live = Parameter([1.0])
        optimizer = SGD([frozen, live])
        frozen.grad = live.grad = np.array([1.0])
        optimizer.step(0.5)
        assert frozen.data[0] == 1.0
        assert live.data[0] == 0.5

    def test_clip_gradients(self):
        p = Parameter([0.0, 0.0])
        p.grad = np.array([3.0, 4.0])
        assert clip_gradients([p], 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8])


class TestTrainStep:
    """Single optimizer updates on the toy model."""

    def test_small_step_decreases_loss(self, toy_model, toy_patches):
        before = sample_loss(toy_model, toy_patches, 4.2).item()
        optimizer = SGD(toy_model.parameters(), momentum=0.0)
        train_step(toy_model, optimizer, [(toy_patches, 4.2)], lr=1e-3, step=1)
        assert sample_loss(toy_model, toy_patches, 4.2).item() < before

    def test_cross_entropy_step(self, toy_model, toy_patches):
        optimizer = SGD(toy_model.parameters())
        value = train_step(
            toy_model, optimizer, [(toy_patches, 2.0)], 1e-3, 1, loss="cross_entropy"
        )
        assert np.isfinite(value) and value > 0

    def test_text_encoder_unchanged(self, toy_model, toy_patches):
        before = toy_model.mos2language.state_dict()
        optimizer = SGD(toy_model.parameters())
        batch = [(toy_patches, 1.5), (toy_patches[::-1].copy(), 4.5)]
        for step in range(1, 51):
            train_step(toy_model, optimizer, batch, 0.005, step)
        after = toy_model.mos2language.state_dict()
        for name, value in before.items():
            np.testing.assert_array_equal(after[name], value)

    @pytest.mark.parametrize("debug", [True, False])
    def test_non_finite_input_aborts(self, toy_model, toy_patches, debug):
        set_debug(debug)
        bad = toy_patches.copy()
        bad[0, 0, 0] = np.nan
        optimizer = SGD(toy_model.parameters())
        with pytest.raises(TrainingError) as exc:
            train_step(toy_model, optimizer, [(bad, 3.0)], 0.005, step=7)
        assert exc.value.step == 7

    def test_unknown_loss(self, toy_model, toy_patches):
        with pytest.raises(UsageError):
            sample_loss(toy_model, toy_patches, 3.0, loss="mse")


class TestTrain:
    """Short end-to-end runs on a tiny synthetic dataset."""

    def test_outputs(self, tiny_run):
        out_dir, summary = tiny_run
        lines = (out_dir / "epochs.jsonl").read_text().splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == [1, 2]
        assert json.loads(lines[0])["steps"] == 4
        assert [e.epoch for e in summary.history] == [1, 2]
        assert 1 <= summary.best_epoch <= 2
        for name in ("last.ckpt", "best.ckpt"):
            assert (out_dir / name).exists()
            assert (out_dir / f"{name}.json").exists()

    def test_metadata(self, tiny_run, tiny_dataset):
        out_dir, summary = tiny_run
        meta = load_metadata(out_dir / "best.ckpt")
        assert meta["config"]["N"] == 4
        assert meta["epoch"] == summary.best_epoch
        raw = [s.raw_mos for s in read_manifest(tiny_dataset)]
        assert meta["mos_range"] == [min(raw), max(raw)]
        assert meta["svr"] == {"C": 10.0, "epsilon": 0.01, "gamma": 1.0}

    def test_text_encoder_frozen_through_training(self, tiny_run):
        out_dir, _ = tiny_run
        state = load_checkpoint(out_dir / "last.ckpt")
        init = RngState(0, "train").child("init")
        initial = ClipVQA(preset_config("toy"), init).state_dict()
        text = [name for name in state if name.startswith("mos2language.")]
        assert text
        for name in text:
            np.testing.assert_array_equal(state[name], initial[name])
        assert not np.array_equal(state["fpt.embed.theta"], initial["fpt.embed.theta"])

    def test_too_small_validation_split(self, tiny_dataset, tmp_path):
        config = preset_config("toy", epochs=1, split_ratio=0.9)
        with pytest.raises(ConfigurationError, match="at least 3"):
            train(config, tiny_dataset, tmp_path)
        assert not (tmp_path / "epochs.jsonl").exists()

    def test_predict_video_distribution(self, toy_model, tiny_dataset):
        video = read_frames(read_manifest(tiny_dataset)[0].frames_path)
        prediction = predict_video(toy_model, video, views=2)
        assert isinstance(prediction, PredictionDistribution)
        assert prediction.probs.shape == (5,)
        assert prediction.probs.sum() == pytest.approx(1.0, abs=1e-12)
        expected = prediction.probs @ toy_model.ratings.values
        assert prediction.score == pytest.approx(expected, abs=1e-12)

    def test_reproducible(self, tiny_run, tiny_dataset, tmp_path):
        out_dir, _ = tiny_run
        train(preset_config("toy", epochs=2), tiny_dataset, tmp_path)
        for name in ("epochs.jsonl", "last.ckpt", "last.ckpt.json"):
            assert (tmp_path / name).read_bytes() == (out_dir / name).read_bytes()
