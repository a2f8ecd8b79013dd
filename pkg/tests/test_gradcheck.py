import json

import numpy as np
import pytest

from clip_vqa.exceptions import UsageError
from clip_vqa.gradcheck import GradCheckReport, grad_check
from clip_vqa.nn import Parameter
from clip_vqa.rng import RngState
from clip_vqa.tensor import Tensor


class TestGradCheck:
    """The finite-difference checker itself."""

    def test_correct_gradient_passes(self):
        w = Parameter([1.0, -2.0, 0.5], name="w")
        report = grad_check(lambda: (w * w * w).sum(), [w])
        assert report.passed()
        assert set(report.errors) == {"w"}

    def test_broken_gradient_is_caught(self):
        """A primitive whose backward is off by a factor of two fails."""
        w = Parameter([1.0, 2.0], name="w")

        def wrong():
            out = Tensor(w.data * 3.0)
            out.requires_grad = True
            out._parents = (w,)
            out._backward = lambda g: (g * 6.0,)
            return out.sum()

        report = grad_check(wrong, [w])
        assert not report.passed()
        assert report.max_error == pytest.approx(1.0, rel=1e-6)

    def test_non_scalar_function_rejected(self):
        w = Parameter([1.0, 2.0], name="w")
        with pytest.raises(UsageError):
            grad_check(lambda: w * 2.0, [w])

    def test_frozen_parameters_skipped(self):
        live = Parameter([1.0], name="live")
        frozen = Parameter([2.0], name="frozen", frozen=True)
        report = grad_check(lambda: (live * frozen).sum(), [live, frozen])
        assert set(report.errors) == {"live"}

    def test_parameters_restored(self):
        w = Parameter(RngState(1).generator().normal(size=(3, 4)), name="w")
        before = w.data.copy()
        grad_check(lambda: (w**2.0).sum(), [w])
        np.testing.assert_array_equal(w.data, before)

    def test_subsampled_entries(self):
        w = Parameter(RngState(2).generator().normal(size=(50,)), name="w")
        calls = []

        def f():
            calls.append(1)
            return (w**2.0).sum()

        report = grad_check(f, [w], max_entries=5)
        assert report.passed()
        assert len(calls) == 1 + 2 * 5

    def test_group_by_module(self):
        report = GradCheckReport(
            {"fpt.block1.a": 1e-8, "fpt.block1.b": 3e-7, "sat.msa.q": 2e-9}
        )
        assert report.by_module(depth=2) == {"fpt.block1": 3e-7, "sat.msa": 2e-9}
        assert report.max_error == 3e-7

    def test_square_at_three(self):
        x = Parameter([3.0], name="x")
        report = grad_check(lambda: (x * x).sum(), [x])
        np.testing.assert_allclose(x.grad, [6.0], atol=1e-12)
        assert report.errors["x"] < 1e-4
        assert report.passed()

    def test_report_serializes_to_json(self):
        w = Parameter(RngState(3).generator().normal(size=(2, 2)), name="w")
        report = grad_check(lambda: (w**2.0).sum(), [w])
        assert type(report.passed()) is bool
        assert all(type(err) is float for err in report.errors.values())
        payload = json.loads(json.dumps({"passed": report.passed(), **report.errors}))
        assert payload["passed"] is True
