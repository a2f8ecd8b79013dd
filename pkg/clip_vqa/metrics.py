"""SROCC and PLCC between predicted and ground-truth scores."""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.stats import pearsonr, rankdata

from .exceptions import UsageError
from .models import EvalReport, ScorePair

logger = logging.getLogger(__name__)

MIN_SAMPLES = 3


def _validate(
    pred: Sequence[float], label: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    label = np.asarray(label, dtype=np.float64).ravel()
    if pred.shape != label.shape:
        raise UsageError(f"{pred.size} predictions for {label.size} labels")
    if pred.size < MIN_SAMPLES:
        raise UsageError(
            f"correlation needs at least {MIN_SAMPLES} samples, got {pred.size}"
        )
    return pred, label


def _pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Pearson r clipped to [-1, 1], or None when either side is constant."""
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    r = pearsonr(x, y).statistic
    return float(np.clip(r, -1.0, 1.0))


def plcc(pred: Sequence[float], label: Sequence[float]) -> float:
    pred, label = _validate(pred, label)
    return _pearson(pred, label) or 0.0


def _spearman(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Rank correlation; exact 1 − 6Σd²/(n(n²−1)) when neither side has ties."""
    rx, ry = rankdata(x), rankdata(y)
    n = rx.size
    if np.unique(rx).size < n or np.unique(ry).size < n:
        return _pearson(rx, ry)
    # integer ranks keep numerator and denominator exact
    span = n * (n * n - 1)
    return float((span - 6 * int(np.sum((rx - ry) ** 2))) / span)


def srocc(pred: Sequence[float], label: Sequence[float]) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    pred, label = _validate(pred, label)
    return _spearman(pred, label) or 0.0


def correlation_report(
    pred: Sequence[float],
    label: Sequence[float],
    ids: Optional[Sequence[str]] = None,
) -> EvalReport:
    pred, label = _validate(pred, label)
    ids = list(ids) if ids is not None else [str(i) for i in range(pred.size)]
    warnings = []
    rho = _spearman(pred, label)
    r = _pearson(pred, label)
    if rho is None or r is None:
        warnings.append(
            "zero-variance predictions or labels; correlations reported as 0"
        )
        logger.warning(warnings[-1])
    return EvalReport(
        srocc=rho or 0.0,
        plcc=r or 0.0,
        count=int(pred.size),
        degenerate=bool(warnings),
        warnings=warnings,
        pairs=[
            ScorePair(id=i, pred=float(p), label=float(c))
            for i, p, c in zip(ids, pred, label)
        ],
    )
