import numpy as np
import pytest

from clip_vqa.frames import read_manifest
from clip_vqa.models import SyntheticSpec
from clip_vqa.rng import RngState
from clip_vqa.synthetic import (
    Distortion,
    generate_synthetic,
    render_video,
    sample_distortion,
    synthetic_mos,
)

SMALL = SyntheticSpec(count=6, frames=5, H=20, W=20)


def horizontal_detail(frames):
    return np.abs(np.diff(frames, axis=2)).mean()


class TestSyntheticMos:
    def test_clean_video(self):
        assert synthetic_mos(Distortion()) == 5.0

    def test_worst_distortion(self):
        worst = Distortion(blur=4.0, noise=0.3, contrast=0.3)
        assert synthetic_mos(worst) == pytest.approx(1.0)

    def test_clamped(self):
        assert synthetic_mos(Distortion(blur=40.0)) == 1.0

    def test_monotone_in_each_knob(self):
        base = Distortion(1.0, 0.1, 0.8)
        worse = [
            Distortion(2.0, 0.1, 0.8),
            Distortion(1.0, 0.2, 0.8),
            Distortion(1.0, 0.1, 0.5),
        ]
        for d in worse:
            assert synthetic_mos(d) < synthetic_mos(base)

    def test_sampled_knobs_in_range(self):
        for i in range(50):
            d = sample_distortion(SyntheticSpec(), RngState(0).child(i))
            assert 0.0 <= d.blur <= 4.0
            assert 0.0 <= d.noise <= 0.3
            assert 0.3 <= d.contrast <= 1.0
            assert 1.0 <= synthetic_mos(d) <= 5.0


class TestRendering:
    """Procedural videos."""

    def test_shape_and_dtype(self):
        frames = render_video(SMALL, Distortion(), RngState(1))
        assert frames.shape == (5, 20, 20, 3)
        assert frames.dtype == np.uint8

    def test_blur_removes_detail(self):
        rng = RngState(3)
        sharp = render_video(SMALL, Distortion(), rng).astype(float)
        blurred = render_video(SMALL, Distortion(blur=3.0), rng).astype(float)
        assert horizontal_detail(blurred) < horizontal_detail(sharp)


class TestGenerate:
    def test_manifest_and_files(self, tmp_path):
        manifest = generate_synthetic(SMALL, tmp_path)
        samples = read_manifest(manifest)
        assert [s.id for s in samples] == [f"vid{i:04d}" for i in range(6)]
        for sample in samples:
            assert 1.0 <= sample.raw_mos <= 5.0
            assert sample.load().frames.shape == (5, 20, 20, 3)

    def test_byte_identical_reruns(self, tmp_path):
        a = generate_synthetic(SMALL, tmp_path / "a").parent
        b = generate_synthetic(SMALL, tmp_path / "b").parent
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        for name in files:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_changes_content(self, tmp_path):
        a = generate_synthetic(SMALL, tmp_path / "a")
        b = generate_synthetic(SMALL.model_copy(update={"seed": 8}), tmp_path / "b")
        assert a.read_text() != b.read_text()
