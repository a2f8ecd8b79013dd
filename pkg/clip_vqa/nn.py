"""Parameters, the module tree, and the transformer building blocks."""

from __future__ import annotations

import math
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .exceptions import ConfigurationError, ShapeError, UsageError
from .rng import RngState
from .tensor import (
    LAYER_NORM_EPS,
    ArrayLike,
    Tensor,
    as_tensor,
    layer_norm,
    reshape,
    softmax,
    transpose,
)

MLP_RATIO = 4
MASK_VALUE = -1e9


class Parameter(Tensor):
    """A named leaf tensor that always tracks gradients.

    A frozen parameter still participates in forward passes but receives no
    gradient and is skipped by the optimizer.
    """

    def __init__(self, data: ArrayLike, name: str = "", frozen: bool = False):
        super().__init__(np.array(data, dtype=np.float64, copy=True), True)
        self.name = name
        self.frozen = frozen

    def __repr__(self) -> str:
        flag = ", frozen" if self.frozen else ""
        return f"Parameter({self.name or '?'}, shape={self.shape}{flag})"


def normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> Parameter:
    return Parameter(rng.normal(0.0, std, size=shape))


def resolve_heads(width: int, heads: Optional[int]) -> int:
    """Head count for a width: the configured value, else width/64, else 1."""
    if heads is None:
        heads = width // 64 if width % 64 == 0 else 1
    if heads <= 0 or width % heads:
        raise ConfigurationError(f"heads={heads} does not divide width {width}")
    return heads


class Module:
    """Base class; parameters and sub-modules are discovered from attributes.

    Attributes whose name starts with an underscore are never traversed, so
    caches and derived views can live on a module without being checkpointed.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            name = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if not p.frozen]

    def bind_names(self, prefix: str = "") -> None:
        for name, param in self.named_parameters(prefix):
            param.name = name

    def freeze(self) -> None:
        for param in self.parameters():
            param.frozen = True
            param.grad = None

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise UsageError(
                    f"state mismatch: missing={missing} unexpected={unexpected}"
                )
        for name, value in state.items():
            if name not in own:
                continue
            param = own[name]
            if param.shape != tuple(value.shape):
                raise ShapeError(f"load_state_dict[{name}]", param.shape, value.shape)
            param.data = np.array(value, dtype=np.float64, copy=True)
            param.grad = None


class Linear(Module):
    """y = x @ weight + bias, weight stored (in, out)."""

    def __init__(self, d_in: int, d_out: int, rng: RngState, bias: bool = True):
        gen = rng.generator()
        self.weight = normal(gen, (d_in, d_out), d_in**-0.5)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = as_tensor(x) @ self.weight
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = LAYER_NORM_EPS):
        self.gain = Parameter(np.ones(width))
        self.bias = Parameter(np.zeros(width))
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(as_tensor(x), self.gain, self.bias, self._eps)


class MLP(Module):
    def __init__(self, width: int, rng: RngState, ratio: int = MLP_RATIO):
        self.fc_in = Linear(width, width * ratio, rng.child("fc_in"))
        self.fc_out = Linear(width * ratio, width, rng.child("fc_out"))

    def forward(self, x: Tensor) -> Tensor:
        return self.fc_out(self.fc_in(x).gelu())


class AttentionOutput(NamedTuple):
    output: Tensor
    weights: Tensor
    context: Tensor


class MultiHeadAttention(Module):
    """Scaled dot-product attention with learnable Q/K/V and output projections.

    Inputs are (n, width) or (batch, n, width). Each head scores with
    1/sqrt(width/heads).
    """

    def __init__(self, width: int, heads: Optional[int], rng: RngState):
        self._heads = resolve_heads(width, heads)
        self._width = width
        self.q_proj = Linear(width, width, rng.child("q"))
        self.k_proj = Linear(width, width, rng.child("k"))
        self.v_proj = Linear(width, width, rng.child("v"))
        self.out_proj = Linear(width, width, rng.child("o"))

    @property
    def heads(self) -> int:
        return self._heads

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        head_dim = self._width // self._heads
        return transpose(reshape(x, (b, n, self._heads, head_dim)), (0, 2, 1, 3))

    def attend(
        self,
        query: Tensor,
        key: Optional[Tensor] = None,
        value: Optional[Tensor] = None,
        mask: Optional[np.ndarray] = None,
    ) -> AttentionOutput:
        query = as_tensor(query)
        key = query if key is None else as_tensor(key)
        value = key if value is None else as_tensor(value)
        unbatched = query.ndim == 2
        if unbatched:
            query, key, value = (
                reshape(t, (1,) + t.shape) for t in (query, key, value)
            )
        for t in (query, key, value):
            if t.ndim != 3 or t.shape[-1] != self._width:
                raise ShapeError("attention", t.shape, (self._width,))
        if key.shape[:2] != value.shape[:2]:
            raise ShapeError("attention", key.shape, value.shape)

        b, n_q, _ = query.shape
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        scores = (q @ k.T) * (1.0 / math.sqrt(self._width // self._heads))
        if mask is not None:
            scores = scores + np.where(mask, 0.0, MASK_VALUE)
        weights = softmax(scores, axis=-1)
        context = reshape(
            transpose(weights @ v, (0, 2, 1, 3)), (b, n_q, self._width)
        )
        output = self.out_proj(context)
        if unbatched:
            output = reshape(output, output.shape[1:])
            weights = reshape(weights, weights.shape[1:])
            context = reshape(context, context.shape[1:])
        return AttentionOutput(output, weights, context)

    def forward(self, query, key=None, value=None, mask=None) -> Tensor:
        return self.attend(query, key, value, mask).output


def causal_mask(length: int) -> np.ndarray:
    """Boolean (length, length) mask; True where attention is allowed."""
    return np.tril(np.ones((length, length), dtype=bool))


class TransformerLayer(Module):
    """Pre-LN layer: x + MSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(
        self, width: int, heads: Optional[int], rng: RngState, causal: bool = False
    ):
        self.ln_1 = LayerNorm(width)
        self.attn = MultiHeadAttention(width, heads, rng.child("attn"))
        self.ln_2 = LayerNorm(width)
        self.mlp = MLP(width, rng.child("mlp"))
        self._causal = causal

    def forward(self, x: Tensor) -> Tensor:
        mask = causal_mask(x.shape[-2]) if self._causal else None
        x = x + self.attn(self.ln_1(x), mask=mask)
        return x + self.mlp(self.ln_2(x))
