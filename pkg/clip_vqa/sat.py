"""Spatiotemporal aggregation of pseudo-MOS and fusion tokens into y_v."""

from typing import Optional

import numpy as np

from .exceptions import UsageError
from .fpt import TokenBundle
from .frames import sinusoid_positions
from .nn import LayerNorm, Linear, Module, MultiHeadAttention, Parameter
from .rng import RngState
from .tensor import Tensor


class SpatiotemporalAggregator(Module):
    """y_v = out_proj(mean_N(δ ⊙ mean_L(M_fusion) + LN(M + MSA(LN(M)))))

    where M = M_mos + V_pos and V_pos is a fixed sinusoid over frame index.
    """

    def __init__(
        self,
        width: int,
        num_frames: int,
        embed_dim: int,
        heads: Optional[int],
        rng: RngState,
        enabled: bool = True,
    ):
        self._enabled = enabled
        self._positions = sinusoid_positions(num_frames, width)
        self.ln_in = LayerNorm(width)
        self.msa = MultiHeadAttention(width, heads, rng.child("msa"))
        self.ln_out = LayerNorm(width)
        self.delta = Parameter(np.ones(width))
        self.out_proj = Linear(width, embed_dim, rng.child("out_proj"))

    def temporal_tokens(self, mos_tokens: Tensor) -> Tensor:
        """Steps (1)-(2): add frame positions, then the residual MSA + LN."""
        m = mos_tokens + self._positions[: mos_tokens.shape[0]]
        return self.ln_out(m + self.msa(self.ln_in(m)))

    def forward(self, bundle: TokenBundle) -> Tensor:
        if bundle is None or bundle.num_frames == 0:
            raise UsageError("SAT needs a non-empty token bundle")
        mos = bundle.mos_tokens
        if bundle.fusion_tokens is not None and 0 in bundle.fusion_tokens.shape:
            raise UsageError("SAT needs every fusion token populated")
        if not self._enabled:
            pooled = mos
            if bundle.fusion_tokens is not None:
                pooled = pooled + bundle.fusion_tokens.mean(axis=1)
            return self.out_proj(pooled.mean(axis=0))

        aggregated = self.temporal_tokens(mos)
        if bundle.fusion_tokens is not None:
            aggregated = aggregated + bundle.fusion_tokens.mean(axis=1) * self.delta
        return self.out_proj(aggregated.mean(axis=0))
