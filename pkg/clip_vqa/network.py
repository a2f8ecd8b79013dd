"""The full video quality model: FPT, SAT, MOS2Language, VAT and the head."""

from __future__ import annotations

import logging
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import ShapeError
from .fpt import FramePerceptionTransformer, TokenBundle
from .language import QualityScale, TextEncoder, TextTokenizer
from .models import ModelConfig
from .nn import Module
from .quality import ReferenceRatings, fuse
from .rng import RngState
from .sat import SpatiotemporalAggregator
from .tensor import Tensor
from .vat import VideoLanguageAggregator

logger = logging.getLogger(__name__)


class ForwardOutput(NamedTuple):
    logits: Tensor
    probs: Tensor
    bundle: TokenBundle
    video: Tensor  # y_v (r,)
    video_language: Tensor  # Ỹ_v (g, r)


class ClipVQA(Module):
    """Maps (N, P, d) patch tokens of one clip to the g-way quality distribution.

    Parameter names are prefixed with fpt., sat., mos2language. and vat.;
    the text encoder is frozen and its output Y_t is computed once.
    """

    def __init__(self, config: ModelConfig, rng: RngState):
        self._config = config
        self._scale = QualityScale.for_mode(config.quality_language)
        self._ratings = ReferenceRatings(
            config.min_score, config.max_score, config.grades
        )
        d, r = config.width, config.embed_dim
        self.fpt = FramePerceptionTransformer(
            d,
            config.num_patches,
            config.fpt_blocks,
            config.heads,
            rng.child("fpt"),
            use_fusion_tokens=config.use_fusion_tokens,
            fusion_attention=config.fusion_attention,
        )
        self.sat = SpatiotemporalAggregator(
            d,
            config.num_frames,
            r,
            config.heads,
            rng.child("sat"),
            enabled=config.use_sat,
        )
        self.mos2language = TextEncoder(
            d,
            r,
            config.text_layers,
            config.heads,
            rng.child("mos2language"),
            TextTokenizer(config.context_length),
        )
        self.vat = VideoLanguageAggregator(
            d,
            r,
            config.grid,
            config.num_frames,
            config.grades,
            config.candla_blocks,
            config.heads,
            rng.child("vat"),
        )
        self.bind_names()
        self._quality_text: Optional[Tensor] = None

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def scale(self) -> QualityScale:
        return self._scale

    @property
    def ratings(self) -> ReferenceRatings:
        return self._ratings

    def quality_text(self) -> Tensor:
        """Y_t (g, r), encoded on first use and reused afterwards."""
        if self._quality_text is None:
            self._quality_text = self.mos2language(self._scale.texts).detach()
            logger.debug("encoded %d quality descriptions", len(self._scale))
        return self._quality_text

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        super().load_state_dict(state, strict)
        self._quality_text = None

    def forward(self, patches: np.ndarray) -> ForwardOutput:
        cfg = self._config
        expected = (cfg.num_frames, cfg.num_patches, cfg.width)
        if tuple(np.shape(patches)) != expected:
            raise ShapeError("clipvqa", np.shape(patches), expected)
        bundle = self.fpt(patches)
        video = self.sat(bundle)
        language = self.quality_text()
        if cfg.use_vat:
            video_language = self.vat(bundle.frame_tokens, language)
        else:
            video_language = language
        logits, probs = fuse(video_language, video)
        return ForwardOutput(logits, probs, bundle, video, video_language)
