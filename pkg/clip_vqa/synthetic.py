"""Procedural videos with known distortion and a MOS that tracks it."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .frames import write_frames, write_manifest
from .models import ManifestEntry, SyntheticSpec
from .rng import RngState

logger = logging.getLogger(__name__)

BLUR_SCALE = 4.0
NOISE_SCALE = 0.3
CONTRAST_SCALE = 0.7
WEIGHTS = (0.5, 0.35, 0.15)
MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class Distortion:
    blur: float = 0.0
    noise: float = 0.0
    contrast: float = 1.0

    @property
    def magnitude(self) -> float:
        w_blur, w_noise, w_contrast = WEIGHTS
        return (
            w_blur * self.blur / BLUR_SCALE
            + w_noise * self.noise / NOISE_SCALE
            + w_contrast * (1.0 - self.contrast) / CONTRAST_SCALE
        )


def synthetic_mos(distortion: Distortion) -> float:
    """raw MOS = 5 − 4·clamp(magnitude, 0, 1)."""
    return 5.0 - 4.0 * float(np.clip(distortion.magnitude, 0.0, 1.0))


def sample_distortion(spec: SyntheticSpec, rng: RngState) -> Distortion:
    gen = rng.generator()
    return Distortion(
        blur=float(gen.uniform(0.0, spec.blur_max)),
        noise=float(gen.uniform(0.0, spec.noise_max)),
        contrast=float(gen.uniform(spec.contrast_min, 1.0)),
    )


def render_video(
    spec: SyntheticSpec, distortion: Distortion, rng: RngState
) -> np.ndarray:
    """(frames, H, W, 3) uint8: a band-limited texture drifting by small shifts."""
    gen = rng.child("texture").generator()
    m = spec.max_shift
    canvas = gen.normal(size=(spec.height + 2 * m, spec.width + 2 * m, 3))
    canvas = gaussian_filter(canvas, sigma=(spec.texture_sigma, spec.texture_sigma, 0))
    canvas = (canvas - canvas.min()) / max(np.ptp(canvas), 1e-12)
    canvas = 0.1 + 0.8 * canvas

    motion = rng.child("motion").generator()
    noise = rng.child("noise").generator()
    dy = dx = 0
    frames = np.empty((spec.frames, spec.height, spec.width, 3), dtype=np.uint8)
    for t in range(spec.frames):
        if t:
            dy = int(np.clip(dy + motion.integers(-1, 2), -m, m))
            dx = int(np.clip(dx + motion.integers(-1, 2), -m, m))
        frame = canvas[m + dy : m + dy + spec.height, m + dx : m + dx + spec.width]
        if distortion.blur > 0:
            frame = gaussian_filter(frame, sigma=(distortion.blur, distortion.blur, 0))
        frame = 0.5 + distortion.contrast * (frame - 0.5)
        frame = frame + noise.normal(0.0, distortion.noise, size=frame.shape)
        frames[t] = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    return frames


def generate_synthetic(spec: SyntheticSpec, out_dir: Union[str, Path]) -> Path:
    """Write ``spec.count`` FTB1 videos plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    root = RngState(spec.seed, "synthetic")
    entries = []
    for index in range(spec.count):
        video_id = f"vid{index:04d}"
        rng = root.child(index)
        distortion = sample_distortion(spec, rng.child("knobs"))
        frames = render_video(spec, distortion, rng)
        relative = Path("videos") / f"{video_id}.ftb"
        write_frames(out_dir / relative, frames)
        entries.append(
            ManifestEntry(
                id=video_id,
                frames=relative.as_posix(),
                mos=synthetic_mos(distortion),
            )
        )
    manifest = write_manifest(out_dir / MANIFEST_NAME, entries)
    logger.info("wrote %d synthetic videos to %s", spec.count, out_dir)
    return manifest
