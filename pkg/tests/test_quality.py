import numpy as np
import pytest

from clip_vqa.exceptions import NumericalError, ShapeError, UsageError
from clip_vqa.gradcheck import grad_check
from clip_vqa.nn import Parameter
from clip_vqa.quality import (
    ReferenceRatings,
    ScoreRegressor,
    cross_entropy_loss,
    dataset_range,
    decode_score,
    encode_mos,
    fuse,
    scale_mos,
    vr_loss,
)
from clip_vqa.rng import RngState

RATINGS = ReferenceRatings()


class TestReferenceRatings:
    def test_default_anchors(self):
        np.testing.assert_array_equal(RATINGS.values, [1.0, 2.0, 3.0, 4.0, 5.0])

    @pytest.mark.parametrize("low, high, count", [(1, 5, 1), (5, 1, 5), (2, 2, 5)])
    def test_invalid(self, low, high, count):
        with pytest.raises(UsageError):
            ReferenceRatings(low, high, count)


class TestEncodeMos:
    """Score vectorization y = softmax(−(c − b)²)."""

    def test_midpoint(self):
        np.testing.assert_allclose(
            encode_mos(3.0, RATINGS),
            [0.01033, 0.20756, 0.56421, 0.20756, 0.01033],
            atol=1e-5,
        )

    def test_sums_to_one_and_symmetric(self):
        for c in np.linspace(1.0, 5.0, 41):
            y = encode_mos(c, RATINGS)
            assert y.sum() == pytest.approx(1.0, abs=1e-12)
            mirrored = encode_mos(6.0 - c, RATINGS)[::-1]
            np.testing.assert_allclose(y, mirrored, atol=1e-12)

    def test_argmax_is_nearest_rating(self):
        gen = RngState(0, "scores").generator()
        for c in gen.uniform(1.0, 5.0, size=1000):
            nearest = np.argmin(np.abs(RATINGS.values - c))
            if abs(abs(RATINGS.values[nearest] - c) - 0.5) < 1e-9:
                continue
            assert np.argmax(encode_mos(c, RATINGS)) == nearest

    def test_expected_value(self):
        b = RATINGS.values
        assert encode_mos(3.0, RATINGS) @ b == pytest.approx(3.0, abs=1e-12)
        assert encode_mos(2.0, RATINGS) @ b == pytest.approx(2.0209, abs=1e-3)

    def test_outside_range(self):
        with pytest.raises(UsageError, match="scale it first"):
            encode_mos(5.5, RATINGS)


class TestScaleMos:
    def test_dataset_endpoints(self):
        low, high = dataset_range("KoNViD-1k")
        assert scale_mos(1.22, low, high) == pytest.approx(1.0)
        assert scale_mos(4.64, low, high) == pytest.approx(5.0)
        assert scale_mos((low + high) / 2, low, high) == pytest.approx(3.0)

    def test_negative_raw_range(self):
        low, high = dataset_range("CVD2014")
        assert scale_mos(low, low, high) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(UsageError):
            scale_mos(3.0, 2.0, 2.0)
        with pytest.raises(UsageError):
            scale_mos(6.0, 1.0, 5.0)
        with pytest.raises(UsageError, match="unknown dataset"):
            dataset_range("Nope")


class TestVrLoss:
    """1 − cosine similarity."""

    def test_identical_vectors(self):
        y = encode_mos(2.7, RATINGS)
        assert vr_loss(y, y).item() == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_vectors(self):
        loss = vr_loss(np.array([1.0, 0.0, 0.0]), np.array([0.0, 2.0, 0.0]))
        assert loss.item() == pytest.approx(1.0)

    def test_bounded_and_symmetric(self):
        gen = RngState(1, "vr").generator()
        for _ in range(1000):
            a = gen.dirichlet(np.ones(5))
            b = gen.dirichlet(np.ones(5))
            loss = vr_loss(a, b).item()
            assert -1e-12 <= loss < 1.0
            assert loss == pytest.approx(vr_loss(b, a).item(), abs=1e-12)

    def test_near_orthogonal(self):
        eps = 1e-6
        y = np.array([0.5, 0.5, 0.0, 0.0, 0.0]) + eps
        y_hat = np.array([0.0, 0.0, 0.0, 0.5, 0.5]) + eps
        assert vr_loss(y, y_hat).item() == pytest.approx(1.0 - 4e-6, abs=1e-4)

    def test_same_permutation_of_both_vectors(self):
        gen = RngState(7, "perm").generator()
        for _ in range(100):
            a, b = gen.dirichlet(np.ones(5)), gen.dirichlet(np.ones(5))
            order = gen.permutation(5)
            assert vr_loss(a[order], b[order]).item() == pytest.approx(
                vr_loss(a, b).item(), abs=1e-12
            )

    def test_zero_norm(self):
        with pytest.raises(NumericalError):
            vr_loss(np.zeros(5), encode_mos(3.0, RATINGS))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            vr_loss(np.ones(5), np.ones(4))

    def test_gradient_through_fusion(self):
        gen = RngState(2, "fuse").generator()
        language = Parameter(gen.normal(size=(5, 16)), name="language")
        video = Parameter(gen.normal(size=16), name="video")
        target = encode_mos(3.6, RATINGS)
        report = grad_check(
            lambda: vr_loss(target, fuse(language, video)[1]), [language, video]
        )
        assert report.passed()

    def test_cross_entropy_gradient(self):
        logits = Parameter(RngState(3).generator().normal(size=5), name="logits")
        target = encode_mos(1.4, RATINGS)
        assert grad_check(lambda: cross_entropy_loss(target, logits), [logits]).passed()


class TestFuse:
    def test_zero_language_gives_uniform(self):
        _, probs = fuse(np.zeros((5, 16)), np.ones(16))
        np.testing.assert_allclose(probs.data, 0.2, atol=1e-15)

    def test_identical_rows_give_uniform(self):
        language = np.tile(RngState(4).generator().normal(size=16), (5, 1))
        _, probs = fuse(language, RngState(5).generator().normal(size=16))
        np.testing.assert_allclose(probs.data, 0.2, atol=1e-12)

    def test_logits_are_row_products(self):
        gen = RngState(6).generator()
        language, video = gen.normal(size=(5, 16)), gen.normal(size=16)
        logits, probs = fuse(language, video)
        np.testing.assert_allclose(logits.data, language @ video, atol=1e-12)
        assert probs.data.sum() == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fuse(np.zeros((5, 16)), np.ones(8))


class TestDecodeScore:
    def test_expected_value_of_one_hot(self):
        assert decode_score(np.eye(5)[3], RATINGS) == 4.0

    def test_expected_value_is_monotone(self):
        grid = np.linspace(1.0, 5.0, 81)
        decoded = [decode_score(encode_mos(c, RATINGS), RATINGS) for c in grid]
        assert np.all(np.diff(decoded) > 0)

    def test_svr_recovers_scores(self):
        regressor = ScoreRegressor().fit_ratings(RATINGS)
        for c in np.arange(1.2, 4.85, 0.1):
            decoded = decode_score(encode_mos(c, RATINGS), RATINGS, "svr", regressor)
            assert abs(decoded - c) < 0.05

    def test_unfitted_svr(self):
        with pytest.raises(UsageError):
            ScoreRegressor().predict(encode_mos(3.0, RATINGS))
        with pytest.raises(UsageError):
            decode_score(encode_mos(3.0, RATINGS), RATINGS, "svr")

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            decode_score(np.ones(4) / 4, RATINGS)
