"""Central-difference verification of analytic gradients."""

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .exceptions import UsageError
from .nn import Parameter
from .rng import RngState
from .tensor import Tensor

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    """Max relative error per parameter name."""

    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return bool(self.max_error < tolerance)

    def by_module(self, depth: int = 1) -> dict[str, float]:
        grouped: dict[str, float] = {}
        for name, err in self.errors.items():
            key = ".".join(name.split(".")[:depth])
            grouped[key] = max(grouped.get(key, 0.0), err)
        return grouped


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Parameter],
    eps: float = DEFAULT_EPS,
    max_entries: Optional[int] = None,
    rng: Optional[RngState] = None,
) -> GradCheckReport:
    """Compare backward() against (f(θ+eps) − f(θ−eps)) / (2·eps).

    The error of an entry is |analytic − numeric| / max(1, |numeric|).
    Frozen parameters are left out of the report. With ``max_entries`` only
    that many entries per parameter are probed, chosen by ``rng``.
    """
    params = [p for p in params if not p.frozen]
    for p in params:
        p.grad = None
    out = f()
    if out.size != 1:
        raise UsageError(f"grad_check needs a scalar function, got shape {out.shape}")
    out.backward()

    gen = (rng or RngState(0, "gradcheck")).generator()
    report = GradCheckReport()
    for index, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        entries = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            entries = np.sort(gen.choice(p.size, size=max_entries, replace=False))
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in entries:
            original = flat[i]
            flat[i] = original + eps
            upper = f().item()
            flat[i] = original - eps
            lower = f().item()
            flat[i] = original
            numeric = (upper - lower) / (2.0 * eps)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, float(err))
        report.errors[p.name or f"param{index}"] = worst
    return report
