"""Seasonal extreme studentized deviate (S-ESD) anomaly detection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

MAD_SCALE = 1.4826
RESIDUAL_RTOL = 1e-9


class SeriesTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class SesdConfig:
    period: int = 7
    alpha: float = 0.05
    max_anoms_fraction: float = 0.10
    robust: bool = True
    trend_window: int = 2

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError("period must be a positive integer")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.max_anoms_fraction < 0.5:
            raise ValueError("max_anoms_fraction must lie in (0, 0.5)")
        if self.trend_window < 1:
            raise ValueError("trend_window must be a positive integer")

    def max_anoms(self, n: int) -> int:
        return max(1, math.ceil(self.max_anoms_fraction * n))


@dataclass
class Decomposition:
    seasonal: np.ndarray
    trend: np.ndarray
    residual: np.ndarray


@dataclass
class AnomalySet:
    indices: list[int]
    scores: dict[int, float] = field(default_factory=dict)
    decomposition: Decomposition | None = None

    def __contains__(self, i: int) -> bool:
        return i in self.indices

    def __len__(self) -> int:
        return len(self.indices)


def t_quantile(p: float, df: float) -> float:
    """Student-t quantile."""
    return float(stats.t.ppf(p, df))


def esd_critical_value(n: int, i: int, alpha: float) -> float:
    """Critical value for the i-th removal (1-based) from ``n`` observations."""
    p = 1 - alpha / (2 * (n - i + 1))
    t = t_quantile(p, n - i - 1)
    return (n - i) * t / math.sqrt((n - i - 1 + t * t) * (n - i + 1))


def _running_median(x: np.ndarray, width: int) -> np.ndarray:
    # windows keep their full width near the ends (shifted inward)
    n = len(x)
    out = np.empty(n)
    for i in range(n):
        lo = min(max(0, i - width // 2), n - width)
        out[i] = np.median(x[lo:lo + width])
    return out


def decompose(series: Sequence[float], config: SesdConfig | None = None) -> Decomposition:
    """Median-based split into seasonal, trend and residual parts.

    The seasonal value of a phase is the median of the phase's observations
    after removing a rough running-median trend, recentered to median zero.
    The trend is a running median of the deseasonalized series over
    ``trend_window`` periods. Detrending first keeps level shifts out of the
    seasonal estimate.
    """
    config = config or SesdConfig()
    x = np.asarray(series, dtype=float)
    n, period = len(x), config.period
    if n < 2 * period:
        raise SeriesTooShortError(f"series of length {n} is shorter than two periods ({2 * period})")
    width = min(n, config.trend_window * period)
    rough = _running_median(x, width)
    phase = np.array([np.median((x - rough)[i::period]) for i in range(period)])
    phase -= np.median(phase)
    seasonal = phase[np.arange(n) % period]
    trend = _running_median(x - seasonal, width)
    residual = x - seasonal - trend
    return Decomposition(seasonal, trend, residual)


def esd_test(residual: Sequence[float], config: SesdConfig | None = None) -> AnomalySet:
    """Generalized ESD test with median/MAD statistics.

    Falls back to mean and standard deviation (with a warning) when the MAD of
    the remaining values vanishes while they are not all equal.
    """
    config = config or SesdConfig()
    x = np.asarray(residual, dtype=float)
    n = len(x)
    if n < 3:
        raise SeriesTooShortError("need at least 3 residuals")
    remaining = list(range(n))
    removed: list[int] = []
    scores: dict[int, float] = {}
    last_significant = 0
    for i in range(1, config.max_anoms(n) + 1):
        if n - i - 1 < 1:
            break
        vals = x[remaining]
        if np.all(vals == vals[0]):
            break
        if config.robust:
            center = np.median(vals)
            scale = MAD_SCALE * np.median(np.abs(vals - center))
            if scale == 0:
                warnings.warn("MAD is zero; using mean and standard deviation", RuntimeWarning, stacklevel=2)
                center, scale = vals.mean(), vals.std(ddof=1)
        else:
            center, scale = vals.mean(), vals.std(ddof=1)
        dev = np.abs(vals - center) / scale
        j = int(np.argmax(dev))
        idx = remaining.pop(j)
        removed.append(idx)
        scores[idx] = float(dev[j])
        if dev[j] > esd_critical_value(n, i, config.alpha):
            last_significant = i
    flagged = sorted(removed[:last_significant])
    return AnomalySet(flagged, {i: scores[i] for i in flagged})


Decomposer = Callable[[Sequence[float], SesdConfig], Decomposition]


def detect(
    series: Sequence[float], config: SesdConfig | None = None, decomposer: Decomposer = decompose
) -> AnomalySet:
    """Decompose ``series`` and run the ESD test on the residual.

    Residuals within ``RESIDUAL_RTOL`` of the series magnitude are rounding
    noise from the decomposition and are tested as exact zeros.
    """
    config = config or SesdConfig()
    parts = decomposer(series, config)
    residual = np.array(parts.residual, dtype=float)
    scale = float(np.max(np.abs(np.asarray(series, dtype=float)), initial=0.0))
    residual[np.abs(residual) <= RESIDUAL_RTOL * scale] = 0.0
    found = esd_test(residual, config)
    found.decomposition = parts
    return found
