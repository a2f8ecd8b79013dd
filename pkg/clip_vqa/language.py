"""Quality-language tables, a closed-vocabulary tokenizer and the text encoder.

The text encoder is a small CLIP-style causal transformer. Its parameters are
frozen: the encoded quality scale Y_t is computed once and reused.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, UsageError
from .nn import LayerNorm, Module, Parameter, TransformerLayer
from .rng import RngState
from .tensor import Tensor, embedding, reshape, take

QualityMode = Literal["long", "short"]

# score, grade, impairment
FIVE_GRADE_SCALE: tuple[tuple[int, str, str], ...] = (
    (5, "Excellent", "Imperceptible"),
    (4, "Good", "Perceptible, but not annoying"),
    (3, "Fair", "Slightly annoying"),
    (2, "Poor", "Annoying"),
    (1, "Bad", "Very annoying"),
)

LONG_DESCRIPTIONS: tuple[tuple[int, str], ...] = (
    (5, "Excellent and Imperceptible"),
    (4, "Good and perceptible, but not annoying"),
    (3, "Fair and slightly annoying"),
    (2, "Poor and annoying"),
    (1, "Bad and very annoying"),
)

SHORT_DESCRIPTIONS: tuple[tuple[int, str], ...] = tuple(
    (score, grade) for score, grade, _ in FIVE_GRADE_SCALE
)

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
DEFAULT_CONTEXT_LENGTH = 16
_WORD = re.compile(r"\w+|[^\w\s]")
_EMBED_STD = 0.02


@dataclass(frozen=True)
class QualityScale:
    mode: QualityMode
    entries: tuple[tuple[int, str], ...]

    @classmethod
    def for_mode(cls, mode: str) -> QualityScale:
        if mode == "long":
            return cls("long", LONG_DESCRIPTIONS)
        if mode == "short":
            return cls("short", SHORT_DESCRIPTIONS)
        raise ConfigurationError(
            f"quality language must be long or short, got {mode!r}"
        )

    @property
    def texts(self) -> list[str]:
        return [text for _, text in self.entries]

    @property
    def scores(self) -> list[int]:
        return [score for score, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def build_quality_texts(mode: str) -> list[str]:
    """Descriptions in score order 5 → 1."""
    return QualityScale.for_mode(mode).texts


def normalize(text: str) -> str:
    return detokenize_words(_WORD.findall(text.lower()))


def detokenize_words(words: Sequence[str]) -> str:
    out = ""
    for word in words:
        if out and re.match(r"\w", word):
            out += " "
        out += word
    return out


class TextTokenizer:
    """Word-level tokenizer over the closed vocabulary of the quality tables."""

    def __init__(self, context_length: int = DEFAULT_CONTEXT_LENGTH):
        words = set()
        for _, text in LONG_DESCRIPTIONS + SHORT_DESCRIPTIONS:
            words.update(_WORD.findall(text.lower()))
        self.vocab: dict[str, int] = {PAD: 0, BOS: 1, EOS: 2}
        for word in sorted(words):
            self.vocab[word] = len(self.vocab)
        self._inverse = {i: w for w, i in self.vocab.items()}
        self.context_length = context_length

    def __len__(self) -> int:
        return len(self.vocab)

    def tokenize(self, text: str) -> list[int]:
        """BOS + word ids + EOS, unpadded."""
        words = _WORD.findall(text.lower())
        unknown = [w for w in words if w not in self.vocab]
        if unknown:
            raise UsageError(f"words outside the quality vocabulary: {unknown}")
        ids = [self.vocab[BOS]] + [self.vocab[w] for w in words] + [self.vocab[EOS]]
        if len(ids) > self.context_length:
            raise UsageError(
                f"text needs {len(ids)} tokens, context length is {self.context_length}"
            )
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        specials = {self.vocab[PAD], self.vocab[BOS], self.vocab[EOS]}
        return detokenize_words([self._inverse[i] for i in ids if i not in specials])

    def batch(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Padded (g, context) id matrix and the EOS position of every row."""
        shape = (len(texts), self.context_length)
        ids = np.full(shape, self.vocab[PAD], dtype=np.int64)
        eos = np.zeros(len(texts), dtype=np.int64)
        for row, text in enumerate(texts):
            tokens = self.tokenize(text)
            ids[row, : len(tokens)] = tokens
            eos[row] = len(tokens) - 1
        return ids, eos


class TextEncoder(Module):
    """Token + learned positional embeddings, causal layers, final LN, projection."""

    def __init__(
        self,
        width: int,
        embed_dim: int,
        layers: int,
        heads: Optional[int],
        rng: RngState,
        tokenizer: Optional[TextTokenizer] = None,
    ):
        self._tokenizer = tokenizer or TextTokenizer()
        self._layers = layers
        gen = rng.generator()
        context = self._tokenizer.context_length
        self.token_embedding = Parameter(
            gen.normal(0.0, _EMBED_STD, size=(len(self._tokenizer), width))
        )
        self.positional_embedding = Parameter(
            gen.normal(0.0, _EMBED_STD, size=(context, width))
        )
        for i in range(1, layers + 1):
            layer = TransformerLayer(width, heads, rng.child(f"layer{i}"), causal=True)
            setattr(self, f"layer{i}", layer)
        self.ln_final = LayerNorm(width)
        # rows of Y_t start near unit norm
        self.projection = Parameter(
            gen.normal(0.0, (width * embed_dim) ** -0.5, size=(width, embed_dim))
        )
        self.freeze()

    @property
    def tokenizer(self) -> TextTokenizer:
        return self._tokenizer

    def hidden_states(self, ids: np.ndarray) -> Tensor:
        """(g, length, width) states after the causal layers."""
        ids = np.asarray(ids, dtype=np.int64)
        length = ids.shape[1]
        x = embedding(self.token_embedding, ids) + self.positional_embedding[:length]
        for i in range(1, self._layers + 1):
            x = getattr(self, f"layer{i}")(x)
        return x

    def forward(self, texts: Sequence[str]) -> Tensor:
        """Y_t: (g, embed_dim), row i encodes texts[i]."""
        ids, eos = self._tokenizer.batch(texts)
        states = self.hidden_states(ids)
        g, length, width = states.shape
        flat = reshape(states, (g * length, width))
        picked = take(flat, np.arange(g) * length + eos)
        return self.ln_final(picked) @ self.projection
