"""Frame files, manifests, temporal sampling, cropping and patch tokens."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from pydantic import ValidationError

from .exceptions import FormatError, ShapeError, UsageError
from .models import ManifestEntry
from .rng import RngState
from .tensor import Tensor, concat, reshape, transpose

logger = logging.getLogger(__name__)

FRAME_MAGIC = b"FTB1"
_HEADER = struct.Struct("<4sIIII")
CHANNELS = 3


@dataclass(frozen=True)
class FrameTensorFile:
    """Decoded video: uint8 array shaped (frame_count, H, W, 3)."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        if self.frames.ndim != 4 or self.frames.shape[-1] != CHANNELS:
            raise ShapeError("FrameTensorFile", self.frames.shape, (-1, -1, -1, 3))
        if self.frames.shape[0] < 1:
            raise UsageError("a frame file needs at least one frame")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def to_bytes(self) -> bytes:
        f, h, w, c = self.frames.shape
        header = _HEADER.pack(FRAME_MAGIC, f, h, w, c)
        return header + np.ascontiguousarray(self.frames, dtype=np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes, source: object = "<bytes>") -> FrameTensorFile:
        if len(payload) < _HEADER.size:
            raise FormatError(source, "truncated FTB1 header")
        magic, f, h, w, c = _HEADER.unpack_from(payload)
        if magic != FRAME_MAGIC:
            raise FormatError(source, "bad magic, expected FTB1")
        if c != CHANNELS:
            raise FormatError(source, f"expected 3 channels, got {c}")
        expected = f * h * w * c
        body = payload[_HEADER.size :]
        if len(body) != expected:
            raise FormatError(
                source, f"payload holds {len(body)} bytes, header implies {expected}"
            )
        frames = np.frombuffer(body, dtype=np.uint8).reshape(f, h, w, c)
        return cls(frames.copy())


def write_frames(path: Union[str, Path], frames: np.ndarray) -> Path:
    path = Path(path)
    payload = FrameTensorFile(np.asarray(frames, dtype=np.uint8)).to_bytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise FormatError(path, f"cannot write frames: {e}") from e
    return path


def read_frames(path: Union[str, Path]) -> FrameTensorFile:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise FormatError(path, f"cannot read frames: {e}") from e
    return FrameTensorFile.from_bytes(payload, path)


# -----------------------------------------------------------------------------
# Manifests
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class VideoSample:
    """One manifest entry with its frame path resolved.

    ``scaled_mos`` is filled in once the dataset's MOS range is known.
    """

    id: str
    frames_path: Path
    raw_mos: float
    scaled_mos: Optional[float] = None

    def load(self) -> FrameTensorFile:
        return read_frames(self.frames_path)


def read_manifest(path: Union[str, Path]) -> list[VideoSample]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise FormatError(path, f"cannot read manifest: {e}") from e
    samples = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = ManifestEntry.model_validate_json(line)
        except ValidationError as e:
            raise FormatError(path, f"line {number}: {e.errors()[0]['msg']}") from e
        frames_path = Path(entry.frames)
        if not frames_path.is_absolute():
            frames_path = path.parent / frames_path
        samples.append(VideoSample(entry.id, frames_path, entry.mos))
    if not samples:
        raise FormatError(path, "manifest is empty")
    logger.debug("read %d samples from %s", len(samples), path)
    return samples


def write_manifest(path: Union[str, Path], entries: Iterable[ManifestEntry]) -> Path:
    path = Path(path)
    text = "".join(json.dumps(e.model_dump()) + "\n" for e in entries)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise FormatError(path, f"cannot write manifest: {e}") from e
    return path


# -----------------------------------------------------------------------------
# Sampling and cropping
# -----------------------------------------------------------------------------


def max_temporal_offset(frame_count: int, num_frames: int, stride: int) -> int:
    return max(0, frame_count - (num_frames - 1) * stride - 1)


def sample_frame_indices(
    frame_count: int,
    num_frames: int,
    stride: int,
    rng: Optional[RngState] = None,
    offset: Optional[int] = None,
) -> list[int]:
    """Equal-interval frame indices, wrapping modulo ``frame_count``.

    The start offset is ``offset`` when given, a uniform draw from ``rng``
    when the span fits, else the centered offset.
    """
    if num_frames <= 0 or stride <= 0:
        raise UsageError(f"N and stride must be positive, got {num_frames}, {stride}")
    if frame_count < 1:
        raise UsageError("a video needs at least one frame")
    highest = max_temporal_offset(frame_count, num_frames, stride)
    if offset is None:
        if rng is not None:
            offset = int(rng.generator().integers(0, highest + 1))
        else:
            offset = highest // 2
    return [(offset + i * stride) % frame_count for i in range(num_frames)]


def view_origins(
    height: int, width: int, crop_h: int, crop_w: int, views: int = 1
) -> list[tuple[int, int]]:
    """Crop origins spaced uniformly along the frame diagonal; 1 view = center."""
    if views < 1:
        raise UsageError(f"views must be positive, got {views}")
    if views == 1:
        return [((height - crop_h) // 2, (width - crop_w) // 2)]
    ys = np.linspace(0, height - crop_h, views).round().astype(int)
    xs = np.linspace(0, width - crop_w, views).round().astype(int)
    return [(int(y), int(x)) for y, x in zip(ys, xs)]


def crop_and_patchify(
    frame: np.ndarray,
    h: int,
    w: int,
    s: int,
    rng: Optional[RngState] = None,
    origin: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """Crop an (H, W, 3) uint8 frame and flatten it into (P, s*s*3) in [0, 1].

    Patches are ordered row-major over the patch grid; each row is the
    row-major flattening of one s×s×3 patch.
    """
    height, width = frame.shape[:2]
    if height < h or width < w:
        raise ShapeError(
            "crop", (height, width), (h, w), detail="frame smaller than crop"
        )
    if origin is None:
        if rng is not None:
            gen = rng.generator()
            origin = (
                int(gen.integers(0, height - h + 1)),
                int(gen.integers(0, width - w + 1)),
            )
        else:
            origin = view_origins(height, width, h, w)[0]
    y0, x0 = origin
    rows, cols = h // s, w // s
    crop = frame[y0 : y0 + rows * s, x0 : x0 + cols * s].astype(np.float64) / 255.0
    patches = crop.reshape(rows, s, cols, s, CHANNELS).transpose(0, 2, 1, 3, 4)
    return patches.reshape(rows * cols, s * s * CHANNELS)


def unpatchify(patches: np.ndarray, rows: int, cols: int, s: int) -> np.ndarray:
    """Inverse of ``crop_and_patchify`` up to the /255 scaling."""
    grid = patches.reshape(rows, cols, s, s, CHANNELS).transpose(0, 2, 1, 3, 4)
    return grid.reshape(rows * s, cols * s, CHANNELS)


def clip_patches(
    video: FrameTensorFile,
    num_frames: int,
    stride: int,
    h: int,
    w: int,
    s: int,
    rng: Optional[RngState] = None,
    origin: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """(N, P, d) patch tokens for one clip.

    With ``rng`` the temporal offset and one crop per video are random (the
    same crop for every frame); without it sampling is centered and the crop
    is ``origin`` or the center.
    """
    indices = sample_frame_indices(
        video.frame_count, num_frames, stride, rng.child("time") if rng else None
    )
    if rng is not None and origin is None:
        gen = rng.child("crop").generator()
        origin = (
            int(gen.integers(0, video.height - h + 1)),
            int(gen.integers(0, video.width - w + 1)),
        )
    if origin is None:
        origin = view_origins(video.height, video.width, h, w)[0]
    return np.stack(
        [crop_and_patchify(video.frames[i], h, w, s, origin=origin) for i in indices]
    )


# -----------------------------------------------------------------------------
# Token embedding
# -----------------------------------------------------------------------------


def sinusoid_positions(count: int, width: int) -> np.ndarray:
    """(count, width): v[2j] = sin(p / 10000^(2j/width)), v[2j+1] = cos(...)."""
    positions = np.arange(count, dtype=np.float64)[:, None]
    pairs = np.arange(0, width, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, pairs / width)
    table = np.zeros((count, width))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : width // 2])
    return table


def embed_frame_tokens(
    patches: Union[Tensor, np.ndarray],
    theta: Tensor,
    mos_token: Tensor,
    positions: Optional[np.ndarray] = None,
) -> Tensor:
    """Prepend the pseudo-MOS token to Θ·x + v for every patch.

    ``patches`` is (P, d) for one frame or (N, P, d) for a clip; the result is
    (P+1, d) or (N, P+1, d) with row 0 the pseudo-MOS token. The positional
    vectors depend only on the patch index, so every frame gets the same
    ones; pass an all-zero ``positions`` to disable them.
    """
    x = patches if isinstance(patches, Tensor) else Tensor(patches)
    unbatched = x.ndim == 2
    if unbatched:
        x = reshape(x, (1,) + x.shape)
    n, p, d = x.shape
    if theta.shape != (d, d) or mos_token.shape != (d,):
        raise ShapeError("embed_frame_tokens", x.shape, theta.shape, mos_token.shape)
    if positions is None:
        positions = sinusoid_positions(p, d)
    tokens = x @ transpose(theta, (1, 0)) + positions
    mos_rows = reshape(mos_token, (1, 1, d)) + np.zeros((n, 1, d))
    out = concat([mos_rows, tokens], axis=1)
    return reshape(out, out.shape[1:]) if unbatched else out
