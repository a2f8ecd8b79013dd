import numpy as np
import pytest

from clip_vqa.exceptions import UsageError
from clip_vqa.rng import RngState


class TestRngState:
    """Named streams are reproducible and independent."""

    def test_same_stream_same_draws(self):
        a = RngState(42, "crop").generator().random(8)
        b = RngState(42, "crop").generator().random(8)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngState(42, "crop").generator().random(8)
        b = RngState(42, "time").generator().random(8)
        assert not np.array_equal(a, b)

    def test_seeds_differ(self):
        a = RngState(1).generator().random(8)
        b = RngState(2).generator().random(8)
        assert not np.array_equal(a, b)

    def test_child_names_compose(self):
        child = RngState(3, "train").child("epoch1").child(7)
        assert child == RngState(3, "train/epoch1/7")

    def test_high_bits_of_seed_matter(self):
        a = RngState(5).generator().random(4)
        b = RngState(5 + 2**40).generator().random(4)
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_out_of_range(self, seed):
        with pytest.raises(UsageError):
            RngState(seed)
