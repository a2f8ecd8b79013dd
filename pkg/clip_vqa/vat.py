"""Video content and language aggregation (content reducer + CandLA blocks)."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .exceptions import ShapeError
from .nn import LayerNorm, MLP, Module, MultiHeadAttention, Parameter
from .rng import RngState
from .tensor import Tensor, concat, reshape, take, transpose

KERNEL = 3

# residual output projections start small so Ỹ_v begins close to Y_t
RESIDUAL_INIT_SCALE = 0.1


def same_padding_indices(rows: int, cols: int, kernel: int = KERNEL) -> np.ndarray:
    """(rows*cols, kernel²) neighbour indices into a grid extended by one zero row.

    Out-of-grid neighbours point at index rows*cols, the appended zero token.
    """
    pad = rows * cols
    half = kernel // 2
    span = range(-half, half + 1)
    offsets = [(dy, dx) for dy in span for dx in span]
    index = np.full((rows * cols, kernel * kernel), pad, dtype=np.int64)
    for y in range(rows):
        for x in range(cols):
            for k, (dy, dx) in enumerate(offsets):
                yy, xx = y + dy, x + dx
                if 0 <= yy < rows and 0 <= xx < cols:
                    index[y * cols + x, k] = yy * cols + xx
    return index


class ContentReducer(Module):
    """Y_c (g, r) from frame tokens (N, P, d).

    Stage 1 is a 3×3 same-padded convolution over each frame's patch grid
    from d to r channels followed by a global average; stage 2 is a linear
    map over the frame axis from N to g rows.
    """

    def __init__(
        self,
        width: int,
        embed_dim: int,
        grid: tuple[int, int],
        num_frames: int,
        grades: int,
        rng: RngState,
    ):
        gen = rng.generator()
        fan_in = KERNEL * KERNEL * width
        self._grid = grid
        self._neighbours = same_padding_indices(*grid)
        self.conv_weight = Parameter(
            gen.normal(0.0, fan_in**-0.5, size=(fan_in, embed_dim))
        )
        self.conv_bias = Parameter(np.zeros(embed_dim))
        self.frame_weight = Parameter(
            gen.normal(0.0, num_frames**-0.5, size=(grades, num_frames))
        )

    def forward(self, frame_tokens: Tensor) -> Tensor:
        n, p, d = frame_tokens.shape
        rows, cols = self._grid
        if p != rows * cols:
            raise ShapeError("reduce_content", frame_tokens.shape, (n, rows * cols, d))
        padded = concat([frame_tokens, np.zeros((n, 1, d))], axis=1)
        # gather along the patch axis: (P+1, N, d) -> (P, k², N, d)
        windows = take(transpose(padded, (1, 0, 2)), self._neighbours)
        windows = reshape(transpose(windows, (2, 0, 1, 3)), (n, p, KERNEL * KERNEL * d))
        per_frame = (windows @ self.conv_weight + self.conv_bias).mean(axis=1)
        return self.frame_weight @ per_frame


class CandlaBlock(Module):
    """Ŷ = Y + MCA(LN_q(Y), LN_k(Y_c), LN_v(Y_c)); Ỹ = Ŷ + MLP(LN(Ŷ))."""

    def __init__(self, embed_dim: int, heads: Optional[int], rng: RngState):
        self.ln_q = LayerNorm(embed_dim)
        self.ln_k = LayerNorm(embed_dim)
        self.ln_v = LayerNorm(embed_dim)
        self.mca = MultiHeadAttention(embed_dim, heads, rng.child("mca"))
        self.ln_mlp = LayerNorm(embed_dim)
        self.mlp = MLP(embed_dim, rng.child("mlp"))
        for linear in (self.mca.out_proj, self.mlp.fc_out):
            linear.weight.data *= RESIDUAL_INIT_SCALE

    def forward(self, language: Tensor, content: Tensor) -> Tensor:
        if language.shape[-1] != content.shape[-1]:
            raise ShapeError("candla_block", language.shape, content.shape)
        attended = language + self.mca(
            self.ln_q(language), self.ln_k(content), self.ln_v(content)
        )
        return attended + self.mlp(self.ln_mlp(attended))


class VideoLanguageAggregator(Module):
    """Content reducer plus B chained CandLA blocks (block{b}, 1-based)."""

    def __init__(
        self,
        width: int,
        embed_dim: int,
        grid: tuple[int, int],
        num_frames: int,
        grades: int,
        blocks: int,
        heads: Optional[int],
        rng: RngState,
    ):
        self._blocks = blocks
        self.reducer = ContentReducer(
            width, embed_dim, grid, num_frames, grades, rng.child("reducer")
        )
        for b in range(1, blocks + 1):
            block = CandlaBlock(embed_dim, heads, rng.child(f"block{b}"))
            setattr(self, f"block{b}", block)

    @property
    def blocks(self) -> list[CandlaBlock]:
        return [getattr(self, f"block{b}") for b in range(1, self._blocks + 1)]

    def forward(self, frame_tokens: Tensor, quality_text: Tensor) -> Tensor:
        """Ỹ_v (g, r); Y_c is shared by every block, the query stream chains."""
        content = self.reducer(frame_tokens)
        out = quality_text
        for block in self.blocks:
            out = block(out, content)
        return out
