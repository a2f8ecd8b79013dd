"""Dataset split, SGD with momentum, the epoch loop and held-out evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .checkpoint import save_checkpoint
from .exceptions import (
    ConfigurationError,
    FormatError,
    NumericalError,
    TrainingError,
    UsageError,
)
from .frames import (
    FrameTensorFile,
    VideoSample,
    clip_patches,
    read_manifest,
    view_origins,
)
from .metrics import MIN_SAMPLES, correlation_report
from .models import EpochLog, EvalReport, TrainConfig, TrainSummary, dump_config
from .network import ClipVQA
from .nn import Parameter
from .quality import (
    PredictionDistribution,
    ReferenceRatings,
    ScoreRegressor,
    cross_entropy_loss,
    dataset_range,
    decode_score,
    encode_mos,
    scale_mos,
    vr_loss,
)
from .rng import RngState
from .tensor import Tensor

logger = logging.getLogger(__name__)

LOG_NAME = "epochs.jsonl"
LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"


# -----------------------------------------------------------------------------
# Data
# -----------------------------------------------------------------------------


def split_samples(
    samples: Sequence[VideoSample], ratio: float, seed: int
) -> tuple[list[VideoSample], list[VideoSample]]:
    """Deterministic, disjoint and exhaustive train/test split."""
    if len(samples) < 2:
        raise UsageError(f"cannot split {len(samples)} sample(s)")
    order = RngState(seed, "split").generator().permutation(len(samples))
    n_train = min(max(int(round(ratio * len(samples))), 1), len(samples) - 1)
    train = [samples[i] for i in sorted(order[:n_train])]
    test = [samples[i] for i in sorted(order[n_train:])]
    return train, test


def resolve_mos_range(
    config: TrainConfig, samples: Sequence[VideoSample]
) -> tuple[float, float]:
    """Configured range, else the named dataset's, else the manifest's own."""
    if config.mos_range is not None:
        return tuple(config.mos_range)
    if config.dataset is not None:
        return dataset_range(config.dataset)
    raw = [s.raw_mos for s in samples]
    return min(raw), max(raw)


def scale_samples(
    samples: Sequence[VideoSample],
    mos_range: tuple[float, float],
    ratings: ReferenceRatings,
) -> list[VideoSample]:
    lo, hi = mos_range
    return [
        replace(s, scaled_mos=scale_mos(s.raw_mos, lo, hi, ratings.low, ratings.high))
        for s in samples
    ]


class FrameCache:
    """Decoded videos keyed by sample id, read on first access."""

    def __init__(self):
        self._videos: dict[str, FrameTensorFile] = {}

    def get(self, sample: VideoSample) -> FrameTensorFile:
        if sample.id not in self._videos:
            self._videos[sample.id] = sample.load()
        return self._videos[sample.id]


# -----------------------------------------------------------------------------
# Optimization
# -----------------------------------------------------------------------------


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Step decay: lr · lr_decay^((epoch − 1) // decay_epochs), epochs 1-based."""
    return config.lr * config.lr_decay ** ((epoch - 1) // config.decay_epochs)


class SGD:
    """v = μ·v + g; θ = θ − lr·v. Frozen parameters are never touched."""

    def __init__(self, params: Sequence[Parameter], momentum: float = 0.9):
        self.params = [p for p in params if not p.frozen]
        self.momentum = momentum
        self.velocity: dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            v = self.velocity.get(id(p))
            v = p.grad.copy() if v is None else self.momentum * v + p.grad
            self.velocity[id(p)] = v
            p.data = p.data - lr * v


def clip_gradients(params: Sequence[Parameter], max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


def sample_loss(
    model: ClipVQA, patches: np.ndarray, score: float, loss: str = "vr"
) -> Tensor:
    target = encode_mos(score, model.ratings)
    out = model(patches)
    if loss == "vr":
        return vr_loss(target, out.probs)
    if loss == "cross_entropy":
        return cross_entropy_loss(target, out.logits)
    raise UsageError(f"unknown loss {loss!r}")


def train_step(
    model: ClipVQA,
    optimizer: SGD,
    batch: Sequence[tuple[np.ndarray, float]],
    lr: float,
    step: int,
    loss: str = "vr",
    clip_grad_norm: Optional[float] = None,
) -> float:
    """One optimizer update on the batch-averaged loss; returns that loss."""
    optimizer.zero_grad()
    try:
        total = sample_loss(model, *batch[0], loss=loss)
        for patches, score in batch[1:]:
            total = total + sample_loss(model, patches, score, loss=loss)
        total = total * (1.0 / len(batch))
        value = total.item()
        if not math.isfinite(value):
            raise TrainingError(step, "loss is not finite", value)
        total.backward()
    except NumericalError as e:
        raise TrainingError(step, str(e)) from e
    if clip_grad_norm is not None:
        clip_gradients(optimizer.params, clip_grad_norm)
    optimizer.step(lr)
    logger.debug("step %d loss %.6f lr %.2e", step, value, lr)
    return value


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------


def build_regressor(config: TrainConfig, ratings: ReferenceRatings) -> ScoreRegressor:
    regressor = ScoreRegressor(config.svr_c, config.svr_epsilon, config.svr_gamma)
    return regressor.fit_ratings(ratings)


def predict_video(
    model: ClipVQA,
    video: FrameTensorFile,
    views: int = 1,
    decode: str = "expected_value",
    regressor: Optional[ScoreRegressor] = None,
) -> PredictionDistribution:
    """Centered temporal sampling; probabilities and scores averaged over views."""
    cfg = model.config
    h, w = cfg.crop_height, cfg.crop_width
    probs, scores = [], []
    for origin in view_origins(video.height, video.width, h, w, views):
        patches = clip_patches(
            video, cfg.num_frames, cfg.stride, h, w, cfg.patch_size, origin=origin
        )
        p = model(patches).probs.numpy()
        probs.append(p)
        scores.append(decode_score(p, model.ratings, decode, regressor))
    return PredictionDistribution(np.mean(probs, axis=0), float(np.mean(scores)))


def evaluate_model(
    model: ClipVQA,
    samples: Sequence[VideoSample],
    cache: Optional[FrameCache] = None,
    views: int = 1,
    decode: str = "expected_value",
    regressor: Optional[ScoreRegressor] = None,
) -> EvalReport:
    cache = cache or FrameCache()
    preds = [
        predict_video(model, cache.get(s), views, decode, regressor).score
        for s in samples
    ]
    labels = [s.scaled_mos for s in samples]
    return correlation_report(preds, labels, ids=[s.id for s in samples])


# -----------------------------------------------------------------------------
# Training loop
# -----------------------------------------------------------------------------


def checkpoint_metadata(
    config: TrainConfig, mos_range: tuple[float, float], epoch: int, report: EvalReport
) -> dict:
    return {
        "config": dump_config(config),
        "mos_range": list(mos_range),
        "svr": {
            "C": config.svr_c,
            "epsilon": config.svr_epsilon,
            "gamma": config.svr_gamma,
        },
        "epoch": epoch,
        "val_srocc": report.srocc,
        "val_plcc": report.plcc,
    }


def train(
    config: TrainConfig, manifest: Union[str, Path], out_dir: Union[str, Path]
) -> TrainSummary:
    """Fit a model on the manifest's training split, validating every epoch."""
    out_dir = Path(out_dir)
    samples = read_manifest(manifest)
    ratings = ReferenceRatings(config.min_score, config.max_score, config.grades)
    mos_range = resolve_mos_range(config, samples)
    samples = scale_samples(samples, mos_range, ratings)
    train_set, test_set = split_samples(samples, config.split_ratio, config.seed)
    if len(test_set) < MIN_SAMPLES:
        raise ConfigurationError(
            f"split_ratio {config.split_ratio} leaves {len(test_set)} of "
            f"{len(samples)} videos for validation; need at least {MIN_SAMPLES}"
        )
    logger.info(
        "training on %d videos, validating on %d, MOS range %s",
        len(train_set),
        len(test_set),
        mos_range,
    )

    rng = RngState(config.seed, "train")
    model = ClipVQA(config, rng.child("init"))
    optimizer = SGD(model.parameters(), config.momentum)
    regressor = build_regressor(config, ratings) if config.decode == "svr" else None
    cache = FrameCache()

    log_path = out_dir / LOG_NAME
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path.write_text("", encoding="utf-8")
    except OSError as e:
        raise FormatError(log_path, f"cannot write epoch log: {e}") from e

    history: list[EpochLog] = []
    best_epoch, best_srocc = 0, -math.inf
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = lr_at(config, epoch)
        epoch_rng = rng.child(f"epoch{epoch}")
        order = epoch_rng.child("shuffle").generator().permutation(len(train_set))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = []
            for i in order[start : start + config.batch_size]:
                sample = train_set[i]
                patches = clip_patches(
                    cache.get(sample),
                    config.num_frames,
                    config.stride,
                    config.crop_height,
                    config.crop_width,
                    config.patch_size,
                    rng=epoch_rng.child(sample.id),
                )
                batch.append((patches, sample.scaled_mos))
            step += 1
            losses.append(
                train_step(
                    model,
                    optimizer,
                    batch,
                    lr,
                    step,
                    loss=config.loss,
                    clip_grad_norm=config.clip_grad_norm,
                )
            )

        report = evaluate_model(
            model, test_set, cache, config.views, config.decode, regressor
        )
        entry = EpochLog(
            epoch=epoch,
            lr=lr,
            train_loss=float(np.mean(losses)),
            val_srocc=report.srocc,
            val_plcc=report.plcc,
            steps=len(losses),
        )
        history.append(entry)
        with log_path.open("a", encoding="utf-8") as fh:
            fh.write(entry.model_dump_json() + "\n")

        metadata = checkpoint_metadata(config, mos_range, epoch, report)
        state = model.state_dict()
        save_checkpoint(out_dir / LAST_CHECKPOINT, state, metadata)
        if report.srocc > best_srocc:
            best_epoch, best_srocc = epoch, report.srocc
            save_checkpoint(out_dir / BEST_CHECKPOINT, state, metadata)
        logger.info(
            "epoch %d/%d lr %.1e loss %.4f val SROCC %.4f PLCC %.4f",
            epoch,
            config.epochs,
            lr,
            entry.train_loss,
            report.srocc,
            report.plcc,
        )

    return TrainSummary(
        best_epoch=best_epoch,
        best_srocc=best_srocc,
        last_checkpoint=str(out_dir / LAST_CHECKPOINT),
        best_checkpoint=str(out_dir / BEST_CHECKPOINT),
        log_path=str(log_path),
        history=history,
    )
