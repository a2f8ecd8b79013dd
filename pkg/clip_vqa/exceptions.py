"""Exception hierarchy shared by every clip_vqa module."""

from typing import Optional, Sequence


class ClipVQAError(Exception):
    """Base class for all errors raised by clip_vqa."""

    error_type = "error"


class ShapeError(ClipVQAError):
    """A primitive received operands whose shapes do not conform."""

    error_type = "shape_error"

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " vs ".join(str(s) for s in self.shapes)
        message = f"{op}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ConfigurationError(ClipVQAError):
    """Model or run configuration is inconsistent."""

    error_type = "configuration_error"


class UsageError(ClipVQAError):
    """A caller violated an operation's contract."""

    error_type = "usage_error"


class FormatError(ClipVQAError):
    """A frame, checkpoint or manifest file is malformed or unreadable."""

    error_type = "format_error"

    def __init__(self, path: object, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class NumericalError(ClipVQAError):
    """A non-finite value or a zero-norm vector reached a computation."""

    error_type = "numerical_error"


class TrainingError(ClipVQAError):
    """Training diverged."""

    error_type = "training_error"

    def __init__(self, step: int, reason: str, loss: Optional[float] = None):
        self.step = step
        self.loss = loss
        super().__init__(f"step {step}: {reason}")
