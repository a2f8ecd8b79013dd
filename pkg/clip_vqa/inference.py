"""Loading trained checkpoints for prediction and evaluation."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import ValidationError

from .checkpoint import load_checkpoint, load_metadata
from .exceptions import FormatError, UsageError
from .frames import FrameTensorFile, read_manifest
from .models import EvalReport, PredictionRecord, TrainConfig
from .network import ClipVQA
from .quality import ScoreRegressor
from .rng import RngState
from .training import (
    FrameCache,
    build_regressor,
    evaluate_model,
    predict_video,
    resolve_mos_range,
    scale_samples,
    split_samples,
)

logger = logging.getLogger(__name__)

Split = Literal["test", "all"]


class Predictor:
    """A model restored from a checkpoint plus its metadata sidecar."""

    def __init__(
        self,
        model: ClipVQA,
        config: TrainConfig,
        mos_range: tuple[float, float],
        source: str = "",
    ):
        self.model = model
        self.config = config
        self.mos_range = mos_range
        self.source = source
        self._regressor: Optional[ScoreRegressor] = None

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path]) -> Predictor:
        path = Path(path)
        state = load_checkpoint(path)
        metadata = load_metadata(path)
        try:
            config = TrainConfig.model_validate(metadata["config"])
            lo, hi = metadata["mos_range"]
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise FormatError(path, f"invalid checkpoint metadata: {e}") from e
        model = ClipVQA(config, RngState(config.seed, "train").child("init"))
        model.load_state_dict(state)
        logger.info("loaded %d tensors from %s", len(state), path)
        return cls(model, config, (float(lo), float(hi)), str(path))

    def regressor(self, decode: str) -> Optional[ScoreRegressor]:
        if decode != "svr":
            return None
        if self._regressor is None:
            self._regressor = build_regressor(self.config, self.model.ratings)
        return self._regressor

    def predict(
        self,
        video: FrameTensorFile,
        video_id: str,
        views: Optional[int] = None,
        decode: Optional[str] = None,
    ) -> PredictionRecord:
        views = views or self.config.views
        decode = decode or self.config.decode
        prediction = predict_video(
            self.model, video, views, decode, self.regressor(decode)
        )
        return PredictionRecord(
            id=video_id, probs=prediction.probs.tolist(), score=prediction.score
        )


def evaluate_checkpoint(
    checkpoint: Union[str, Path],
    manifest: Union[str, Path],
    split: Split = "test",
    views: Optional[int] = None,
    decode: Optional[str] = None,
) -> EvalReport:
    """SROCC/PLCC on the checkpoint's held-out split, or on every manifest entry.

    ``test`` recomputes the training split from the stored seed and ratio and
    scales labels with the stored MOS range; ``all`` is the cross-dataset
    protocol and scales with the manifest's own range unless one is configured.
    """
    predictor = Predictor.from_checkpoint(checkpoint)
    config = predictor.config
    samples = read_manifest(manifest)
    if split == "test":
        samples = scale_samples(samples, predictor.mos_range, predictor.model.ratings)
        _, samples = split_samples(samples, config.split_ratio, config.seed)
    elif split == "all":
        mos_range = resolve_mos_range(config, samples)
        samples = scale_samples(samples, mos_range, predictor.model.ratings)
    else:
        raise UsageError(f"split must be test or all, got {split!r}")
    decode = decode or config.decode
    return evaluate_model(
        predictor.model,
        samples,
        FrameCache(),
        views or config.views,
        decode,
        predictor.regressor(decode),
    )
