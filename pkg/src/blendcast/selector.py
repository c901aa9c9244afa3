"""Static/dynamic feature classification by per-chunk variance threshold.

A feature whose population variance over the chunk reaches the threshold
is dynamic and gets per-frame transmission; everything else is static and
is sent once as the chunk mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace import ChunkView


@dataclass(frozen=True)
class SelectorConfig:
    """Variance threshold for the dynamic/static split."""

    delta: float = 0.01

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta < 0:
            raise ValueError("delta must be finite and >= 0")


@dataclass(frozen=True)
class SelectionReport:
    """Partition of feature indices plus the chunk statistics behind it."""

    dynamic_set: tuple[int, ...]
    static_set: tuple[int, ...]
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        m = len(self.means)
        if sorted(self.dynamic_set + self.static_set) != list(range(m)):
            raise ValueError("dynamic_set and static_set must partition 0..M-1")
        if len(self.variances) != m:
            raise ValueError("means and variances must have equal length")
        if np.any(np.asarray(self.variances) < 0):
            raise ValueError("variances must be >= 0")

    @property
    def n_features(self) -> int:
        return len(self.means)

    @property
    def m_dyn(self) -> int:
        return len(self.dynamic_set)


def mean_and_variance(series) -> tuple[float, float]:
    """Population mean and variance (divisor N) of a 1-D series.

    An exactly-constant series reports variance 0.0 rather than the
    rounding residue of the two-pass formula.
    """
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("series must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    if np.all(arr == arr[0]):
        return float(arr[0]), 0.0
    mean = float(np.mean(arr))
    var = float(np.mean((arr - mean) ** 2))
    return mean, var


def chunk_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature population means and variances of an N x M block."""
    means = np.mean(values, axis=0)
    variances = np.mean((values - means[None, :]) ** 2, axis=0)
    constant = np.all(values == values[0:1], axis=0)
    means = np.where(constant, values[0], means)
    variances = np.where(constant, 0.0, variances)
    return means, variances


def classify(chunk: ChunkView, config: SelectorConfig) -> SelectionReport:
    """Split the chunk's features into dynamic (variance >= delta) and static."""
    means, variances = chunk_stats(chunk.values)
    dynamic = tuple(int(m) for m in range(len(means)) if variances[m] >= config.delta)
    static = tuple(int(m) for m in range(len(means)) if variances[m] < config.delta)
    return SelectionReport(dynamic_set=dynamic, static_set=static, means=means, variances=variances)


def all_dynamic_report(chunk: ChunkView) -> SelectionReport:
    """Report treating every feature as dynamic (selection disabled)."""
    means, variances = chunk_stats(chunk.values)
    return SelectionReport(
        dynamic_set=tuple(range(len(means))),
        static_set=(),
        means=means,
        variances=variances,
    )


def report_to_csv(report: SelectionReport, path: str | Path) -> None:
    """Diagnostic CSV: one row per feature with its statistics and class."""
    lines = ["feature,mean,variance,class"]
    dynamic = set(report.dynamic_set)
    for m in range(report.n_features):
        cls = "dynamic" if m in dynamic else "static"
        lines.append(f"{m},{float(report.means[m])!r},{float(report.variances[m])!r},{cls}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
