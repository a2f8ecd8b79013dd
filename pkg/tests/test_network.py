import numpy as np
import pytest

from clip_vqa.exceptions import ShapeError
from clip_vqa.gradcheck import grad_check
from clip_vqa.models import preset_config
from clip_vqa.network import ClipVQA
from clip_vqa.quality import encode_mos, vr_loss
from clip_vqa.rng import RngState


class TestForward:
    """Shapes and the output distribution of the assembled model."""

    def test_shapes(self, toy_model, toy_patches):
        out = toy_model(toy_patches)
        assert out.bundle.frame_tokens.shape == (4, 16, 48)
        assert out.bundle.fusion_tokens.shape == (4, 2, 48)
        assert out.video.shape == (16,)
        assert toy_model.quality_text().shape == (5, 16)
        assert out.video_language.shape == (5, 16)
        assert out.logits.shape == out.probs.shape == (5,)
        assert out.probs.data.sum() == pytest.approx(1.0, abs=1e-9)

    def test_parameter_prefixes(self, toy_model):
        prefixes = {p.name.split(".")[0] for p in toy_model.parameters()}
        assert prefixes == {"fpt", "sat", "mos2language", "vat"}
        assert toy_model.fpt.block1.frame_layer.attn.q_proj.weight.name == (
            "fpt.block1.frame_layer.attn.q_proj.weight"
        )

    def test_only_text_encoder_frozen(self, toy_model):
        frozen = {p.name.split(".")[0] for p in toy_model.parameters() if p.frozen}
        assert frozen == {"mos2language"}

    def test_quality_text_cached_until_reload(self, toy_model):
        first = toy_model.quality_text()
        assert toy_model.quality_text() is first
        toy_model.load_state_dict(toy_model.state_dict())
        reloaded = toy_model.quality_text()
        assert reloaded is not first
        np.testing.assert_array_equal(reloaded.data, first.data)

    def test_initial_distribution_is_not_saturated(self, toy_model, toy_patches):
        norms = np.linalg.norm(toy_model.quality_text().data, axis=1)
        assert np.all((norms > 0.4) & (norms < 2.0))
        probs = toy_model(toy_patches).probs.data
        assert probs.max() < 0.99

    def test_wrong_patch_shape(self, toy_model):
        with pytest.raises(ShapeError):
            toy_model(np.zeros((4, 9, 48)))

    def test_deterministic_construction(self, toy_config, toy_patches):
        a = ClipVQA(toy_config, RngState(4)).forward(toy_patches).probs.data
        b = ClipVQA(toy_config, RngState(4)).forward(toy_patches).probs.data
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize(
        "ablation",
        [
            {"use_fusion_tokens": False},
            {"use_sat": False},
            {"use_vat": False},
            {"quality_language": "long"},
            {"fusion_attention": False},
        ],
    )
    def test_ablations_run(self, toy_patches, ablation):
        model = ClipVQA(preset_config("toy", **ablation), RngState(0, "test"))
        probs = model(toy_patches).probs.data
        assert probs.shape == (5,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)


class TestGradients:
    """End-to-end VR-loss gradients."""

    def test_every_trainable_parameter_receives_gradient(self, toy_model, toy_patches):
        target = encode_mos(3.3, toy_model.ratings)
        vr_loss(target, toy_model(toy_patches).probs).backward()
        silent = [
            p.name
            for p in toy_model.trainable_parameters()
            if p.grad is None or not np.any(np.abs(p.grad) > 1e-14)
        ]
        # key-side biases shift every score of a query equally; the last MLP bias
        # adds one vector to every row of the video-language matrix, which moves
        # all logits together
        last = toy_model.config.candla_blocks
        invariant = ("k_proj.bias", "ln_k.bias", f"vat.block{last}.mlp.fc_out.bias")
        assert all(name.endswith(invariant) for name in silent)

    def test_text_encoder_gets_no_gradient(self, toy_model, toy_patches):
        target = encode_mos(2.0, toy_model.ratings)
        vr_loss(target, toy_model(toy_patches).probs).backward()
        assert all(p.grad is None for p in toy_model.mos2language.parameters())

    def test_matches_central_differences(self, toy_model, toy_patches):
        target = encode_mos(3.7, toy_model.ratings)
        report = grad_check(
            lambda: vr_loss(target, toy_model(toy_patches).probs),
            toy_model.parameters(),
            max_entries=2,
            rng=RngState(0, "probe"),
        )
        assert report.passed(1e-4), report.by_module(depth=2)
        assert not any(name.startswith("mos2language") for name in report.errors)
