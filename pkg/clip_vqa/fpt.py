"""Frame perception transformer: CAT blocks with aggressive fusion tokens."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, ShapeError
from .frames import embed_frame_tokens, sinusoid_positions
from .nn import LayerNorm, Module, MultiHeadAttention, Parameter, TransformerLayer
from .rng import RngState
from .tensor import Tensor, concat, reshape, stack

MOS_TOKEN_STD = 0.02

# patch pixels are centered and scaled before the Θ projection
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


@dataclass
class TokenBundle:
    """FPT outputs for one clip.

    frame_tokens (N, P, d), mos_tokens (N, d) and fusion_tokens (N, L, d);
    fusion_tokens[:, l] is the snapshot emitted by block l+1.
    """

    frame_tokens: Tensor
    mos_tokens: Tensor
    fusion_tokens: Optional[Tensor]

    @property
    def num_frames(self) -> int:
        return self.mos_tokens.shape[0]


class FrameEmbedding(Module):
    """Θ (d×d) patch projection plus the shared learnable pseudo-MOS token."""

    def __init__(self, width: int, num_patches: int, rng: RngState):
        gen = rng.generator()
        self.theta = Parameter(gen.normal(0.0, width**-0.5, size=(width, width)))
        self.mos_token = Parameter(gen.normal(0.0, MOS_TOKEN_STD, size=width))
        self._positions = sinusoid_positions(num_patches, width)

    def forward(self, patches: np.ndarray, positional: bool = True) -> Tensor:
        positions = self._positions if positional else np.zeros_like(self._positions)
        pixels = (patches - PIXEL_MEAN) / PIXEL_STD
        return embed_frame_tokens(pixels, self.theta, self.mos_token, positions)


class CatBlock(Module):
    """Per-frame encoder layer, then cross-frame fusion over pseudo-MOS tokens."""

    def __init__(
        self,
        index: int,
        width: int,
        heads: Optional[int],
        rng: RngState,
        fusion_attention: bool = True,
        append_fusion: bool = True,
    ):
        self._index = index
        self._fusion_attention = fusion_attention
        self._append_fusion = append_fusion
        self.frame_layer = TransformerLayer(width, heads, rng.child("frame_layer"))
        self.fusion_ln = LayerNorm(width)
        self.fusion_attn = MultiHeadAttention(width, heads, rng.child("fusion"))

    def expected_tokens(self, num_patches: int) -> int:
        if not self._append_fusion:
            return num_patches + 1
        return num_patches + 1 + self._index - 1

    def forward(self, tokens: Tensor, num_patches: int) -> tuple[Tensor, Tensor]:
        """(N, T, d) -> (N, T+1, d) and the new fusion tokens (N, d)."""
        n, count, width = tokens.shape
        expected = self.expected_tokens(num_patches)
        if count != expected:
            raise ShapeError(
                f"cat_block[{self._index}]",
                tokens.shape,
                (n, expected, width),
                detail=f"expected P+1+l-1 = {expected} tokens per frame",
            )
        encoded = self.frame_layer(tokens)
        mos = encoded[:, 0, :]
        if self._fusion_attention:
            fused = self.fusion_attn(self.fusion_ln(mos)) + mos
        else:
            fused = mos
        if self._append_fusion:
            out = concat([encoded, reshape(fused, (n, 1, width))], axis=1)
        else:
            out = concat([reshape(fused, (n, 1, width)), encoded[:, 1:, :]], axis=1)
        return out, fused


class FramePerceptionTransformer(Module):
    """Patch embedding followed by L CAT blocks (block{l}, 1-based)."""

    def __init__(
        self,
        width: int,
        num_patches: int,
        blocks: int,
        heads: Optional[int],
        rng: RngState,
        use_fusion_tokens: bool = True,
        fusion_attention: bool = True,
    ):
        if blocks < 1:
            raise ConfigurationError(
                f"FPT needs at least one CAT block, got L={blocks}"
            )
        self._num_patches = num_patches
        self._blocks = blocks
        self._use_fusion_tokens = use_fusion_tokens
        self.embed = FrameEmbedding(width, num_patches, rng.child("embed"))
        for l in range(1, blocks + 1):
            block = CatBlock(
                l,
                width,
                heads,
                rng.child(f"block{l}"),
                fusion_attention=fusion_attention,
                append_fusion=use_fusion_tokens,
            )
            setattr(self, f"block{l}", block)

    @property
    def blocks(self) -> list[CatBlock]:
        return [getattr(self, f"block{l}") for l in range(1, self._blocks + 1)]

    def forward(self, patches: np.ndarray, positional: bool = True) -> TokenBundle:
        return self.run(self.embed(patches, positional=positional))

    def run(self, tokens: Tensor) -> TokenBundle:
        """Run the CAT blocks over initial (N, P+1, d) frame matrices."""
        p = self._num_patches
        snapshots = []
        for block in self.blocks:
            tokens, fused = block(tokens, p)
            snapshots.append(fused)
        fusion = stack(snapshots, axis=1) if self._use_fusion_tokens else None
        return TokenBundle(
            frame_tokens=tokens[:, 1 : p + 1, :],
            mos_tokens=tokens[:, 0, :],
            fusion_tokens=fusion,
        )
