import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigurationError, FormatError

QUALITY_GRADES = 5


# Architecture dims; JSON keys are the short symbols (N, h, w, s, ...)
class ModelConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid", frozen=True)

    num_frames: int = Field(32, ge=1, alias="N")
    stride: int = Field(4, ge=1)
    crop_height: int = Field(224, ge=1, alias="h")
    crop_width: int = Field(224, ge=1, alias="w")
    patch_size: int = Field(16, ge=1, alias="s")
    token_dim: Optional[int] = Field(None, alias="d")  # must equal s*s*3
    embed_dim: int = Field(512, ge=1, alias="r")
    grades: int = Field(QUALITY_GRADES, alias="g")
    fpt_blocks: int = Field(12, ge=1, alias="L")
    candla_blocks: int = Field(2, ge=1, alias="B")
    text_layers: int = Field(12, ge=1, alias="L_t")
    heads: Optional[int] = Field(None, ge=1)
    context_length: int = Field(16, ge=4)
    quality_language: Literal["long", "short"] = "short"
    min_score: float = Field(1.0, alias="T")
    max_score: float = Field(5.0, alias="U")

    # Ablation switches
    use_fusion_tokens: bool = True
    use_sat: bool = True
    use_vat: bool = True
    fusion_attention: bool = True

    @model_validator(mode="after")
    def check_dims(self):
        s = self.patch_size
        if self.crop_height < s or self.crop_width < s:
            raise ValueError(
                f"crop {self.crop_height}x{self.crop_width} holds no {s}x{s} patch"
            )
        if self.token_dim is not None and self.token_dim != s * s * 3:
            raise ValueError(f"d must equal s*s*3 = {s * s * 3}, got {self.token_dim}")
        if self.grades != QUALITY_GRADES:
            raise ValueError(f"g must be {QUALITY_GRADES} for the five-grade scale")
        if not self.min_score < self.max_score:
            raise ValueError("T must be smaller than U")
        return self

    @property
    def width(self) -> int:
        return self.patch_size * self.patch_size * 3

    @property
    def grid(self) -> Tuple[int, int]:
        return self.crop_height // self.patch_size, self.crop_width // self.patch_size

    @property
    def num_patches(self) -> int:
        rows, cols = self.grid
        return rows * cols


class TrainConfig(ModelConfig):
    lr: float = Field(0.005, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    lr_decay: float = Field(0.1, gt=0, le=1)
    decay_epochs: int = Field(10, ge=1)
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(4, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    split_ratio: float = Field(0.8, gt=0, lt=1)
    loss: Literal["vr", "cross_entropy"] = "vr"
    clip_grad_norm: Optional[float] = Field(None, gt=0)
    views: int = Field(1, ge=1)
    decode: Literal["expected_value", "svr"] = "expected_value"
    dataset: Optional[str] = None  # key into quality.DATASET_MOS_RANGES
    mos_range: Optional[Tuple[float, float]] = None
    svr_c: float = Field(10.0, gt=0)
    svr_epsilon: float = Field(0.01, ge=0)
    svr_gamma: float = Field(1.0, gt=0)


def _variant(frames: int, stride: int, patch: int, embed: int) -> dict:
    return {"N": frames, "stride": stride, "s": patch, "r": embed}


# Parameter settings of the published variants, plus the desk-scale toy model
PRESETS: dict[str, dict] = {
    "toy": {
        "N": 4,
        "stride": 4,
        "h": 16,
        "w": 16,
        "s": 4,
        "r": 16,
        "L": 2,
        "B": 1,
        "L_t": 2,
        "heads": 4,
    },
    "clipvqa-16-8": _variant(8, 4, 16, 512),
    "clipvqa-16-16": _variant(16, 4, 16, 512),
    "clipvqa-16-32": _variant(32, 4, 16, 512),
    "clipvqa-16-64": _variant(64, 2, 16, 512),
    "clipvqa-14-8": _variant(8, 4, 14, 768),
    "clipvqa-14-16": _variant(16, 4, 14, 768),
}


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err["loc"]) or "config"
    return f"{where}: {err['msg']}"


def validate_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigurationError(_first_error(e)) from e


def preset_config(name: str, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"
        )
    return validate_config({**PRESETS[name], **overrides})


def load_config(path: Path) -> TrainConfig:
    """Parse a JSON run configuration."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(path, f"cannot read config: {e}") from e
    try:
        return TrainConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigurationError(f"{path}: {_first_error(e)}") from e


def dump_config(config: ModelConfig) -> dict:
    return json.loads(config.model_dump_json(by_alias=True, exclude_none=True))


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    count: int = Field(200, ge=1)
    seed: int = Field(7, ge=0)
    frames: int = Field(16, ge=1)
    height: int = Field(24, ge=1, alias="H")
    width: int = Field(24, ge=1, alias="W")
    texture_sigma: float = Field(2.0, gt=0)
    max_shift: int = Field(1, ge=0)
    blur_max: float = Field(4.0, ge=0)
    noise_max: float = Field(0.3, ge=0)
    contrast_min: float = Field(0.3, gt=0, le=1)


# Manifest line
class ManifestEntry(BaseModel):
    id: str = Field(..., min_length=1)
    frames: str = Field(..., min_length=1)
    mos: float


class EpochLog(BaseModel):
    epoch: int
    lr: float
    train_loss: float
    val_srocc: float
    val_plcc: float
    steps: int


class ScorePair(BaseModel):
    id: str
    pred: float
    label: float


class EvalReport(BaseModel):
    srocc: float = Field(..., ge=-1, le=1)
    plcc: float = Field(..., ge=-1, le=1)
    count: int
    degenerate: bool = False
    warnings: List[str] = Field(default_factory=list)
    pairs: List[ScorePair] = Field(default_factory=list)


class PredictionRecord(BaseModel):
    id: str
    probs: List[float]
    score: float


class TrainSummary(BaseModel):
    best_epoch: int
    best_srocc: float
    last_checkpoint: str
    best_checkpoint: str
    log_path: str
    history: List[EpochLog]


# HTTP request/response models
class EncodeMosRequest(BaseModel):
    score: float


class EncodeMosResponse(BaseModel):
    score: float
    probs: List[float]


class QualityScaleResponse(BaseModel):
    mode: str
    texts: List[str]
    ratings: List[float]


class ErrorResponse(BaseModel):
    """Standard error response model."""

    detail: str
    error_type: str = "error"
    message: str = ""


def override_config(config: TrainConfig, **updates) -> TrainConfig:
    """Copy of ``config`` with every non-None update applied and re-validated."""
    changes = {k: v for k, v in updates.items() if v is not None}
    if not changes:
        return config
    return validate_config({**dump_config(config), **changes})
