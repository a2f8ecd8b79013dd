"""Feature fusion, MOS vectorization, the VR loss and score decoding."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from sklearn.svm import SVR

from .exceptions import NumericalError, ShapeError, UsageError
from .tensor import Tensor, as_tensor, log_softmax, matmul, softmax

logger = logging.getLogger(__name__)

DecodeMode = Literal["expected_value", "svr"]

# Raw MOS ranges of public VQA datasets
DATASET_MOS_RANGES: dict[str, tuple[float, float]] = {
    "CVD2014": (-6.50, 93.38),
    "KoNViD-1k": (1.22, 4.64),
    "LIVE-Qualcomm": (16.5621, 73.6428),
    "LIVE-VQC": (6.2237, 94.2865),
    "YouTube-UGC": (1.242, 4.698),
    "LSVQ": (2.4483, 91.4194),
    "LSVQ-1080p": (17.7222, 91.4194),
    "KonViD-150k": (1.0, 5.0),
}

SVR_GRID_STEP = 0.01


@dataclass(frozen=True)
class ReferenceRatings:
    """g equally spaced anchors b_i = T + i·(U−T)/(g−1), i = 0..g−1."""

    low: float = 1.0
    high: float = 5.0
    count: int = 5

    def __post_init__(self) -> None:
        if self.count < 2 or not self.low < self.high:
            raise UsageError(
                f"need g >= 2 and T < U, got g={self.count} [{self.low}, {self.high}]"
            )

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.count)


@dataclass(frozen=True)
class PredictionDistribution:
    probs: np.ndarray
    score: float


def fuse(video_language: Tensor, video: Tensor) -> tuple[Tensor, Tensor]:
    """Logits Ỹ_v·y_v and ŷ = softmax(logits)."""
    video_language, video = as_tensor(video_language), as_tensor(video)
    if video.ndim != 1 or video_language.shape[-1] != video.shape[0]:
        raise ShapeError("fuse", video_language.shape, video.shape)
    logits = matmul(video_language, video)
    return logits, softmax(logits)


def scale_mos(raw: float, raw_min: float, raw_max: float, low=1.0, high=5.0) -> float:
    """Map a raw MOS linearly from [raw_min, raw_max] onto [T, U]."""
    if not raw_min < raw_max:
        raise UsageError(f"degenerate MOS range [{raw_min}, {raw_max}]")
    if not raw_min <= raw <= raw_max:
        raise UsageError(f"raw MOS {raw} outside [{raw_min}, {raw_max}]")
    return low + (high - low) * (raw - raw_min) / (raw_max - raw_min)


def dataset_range(name: str) -> tuple[float, float]:
    try:
        return DATASET_MOS_RANGES[name]
    except KeyError:
        known = ", ".join(sorted(DATASET_MOS_RANGES))
        raise UsageError(f"unknown dataset {name!r}; known: {known}") from None


def encode_mos(score: float, ratings: ReferenceRatings) -> np.ndarray:
    """y = softmax(−(c − b_i)²)."""
    if not ratings.low <= score <= ratings.high:
        raise UsageError(
            f"scaled MOS {score} outside [{ratings.low}, {ratings.high}]; "
            "scale it first"
        )
    z = -((score - ratings.values) ** 2)
    e = np.exp(z - z.max())
    return e / e.sum()


def vr_loss(target: Union[Tensor, np.ndarray], predicted: Tensor) -> Tensor:
    """1 − cos(y, ŷ)."""
    target, predicted = as_tensor(target), as_tensor(predicted)
    if target.shape != predicted.shape:
        raise ShapeError("vr_loss", target.shape, predicted.shape)
    if not np.linalg.norm(target.data) or not np.linalg.norm(predicted.data):
        raise NumericalError("vr_loss is undefined for a zero-norm vector")
    dot = (target * predicted).sum()
    norms = ((target * target).sum() * (predicted * predicted).sum()) ** 0.5
    return 1.0 - dot * (norms**-1.0)


def cross_entropy_loss(target: Union[Tensor, np.ndarray], logits: Tensor) -> Tensor:
    """−Σ y_i log softmax(z)_i with a soft target."""
    target = as_tensor(target)
    if target.shape != logits.shape:
        raise ShapeError("cross_entropy", target.shape, logits.shape)
    return -(target * log_softmax(logits)).sum()


class ScoreRegressor:
    """RBF support-vector regression from ŷ back to a scalar score.

    Fitted on (encode_mos(c), c) pairs for c on a grid over [T, U].
    """

    def __init__(self, C: float = 10.0, epsilon: float = 0.01, gamma: float = 1.0):
        self.params = {"C": C, "epsilon": epsilon, "gamma": gamma}
        self.model = SVR(kernel="rbf", C=C, epsilon=epsilon, gamma=gamma)
        self.fitted = False

    def fit(self, inputs: np.ndarray, targets: np.ndarray) -> ScoreRegressor:
        self.model.fit(inputs, np.asarray(targets).ravel())
        self.fitted = True
        return self

    def fit_ratings(
        self, ratings: ReferenceRatings, step: float = SVR_GRID_STEP
    ) -> ScoreRegressor:
        count = int(round((ratings.high - ratings.low) / step)) + 1
        scores = np.linspace(ratings.low, ratings.high, count)
        inputs = np.stack([encode_mos(c, ratings) for c in scores])
        logger.debug("fitting SVR decoder on %d grid points", count)
        return self.fit(inputs, scores)

    def predict(self, probs: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise UsageError("the SVR decoder has not been fitted")
        return self.model.predict(np.atleast_2d(probs))


def decode_score(
    probs: np.ndarray,
    ratings: ReferenceRatings,
    mode: DecodeMode = "expected_value",
    regressor: Optional[ScoreRegressor] = None,
) -> float:
    """ĉ from ŷ: Σ ŷ_i·b_i, or the fitted SVR's prediction."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (ratings.count,):
        raise ShapeError("decode_score", probs.shape, (ratings.count,))
    if mode == "expected_value":
        return float(probs @ ratings.values)
    if mode == "svr":
        if regressor is None:
            raise UsageError("svr decoding needs a fitted ScoreRegressor")
        return float(regressor.predict(probs)[0])
    raise UsageError(f"unknown decode mode {mode!r}")
