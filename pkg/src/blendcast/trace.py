"""Coefficient traces: CSV ingestion, synthetic generation, and chunking.

A trace is a T x M matrix of expression coefficients (one row per frame,
one column per feature), nominally in [0, 1]. Real extraction from video
is an external boundary; this module only loads files produced by such a
pipeline or synthesizes desk-scale stand-ins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTraceError,
    MalformedHeaderError,
    NonFiniteValueError,
    RaggedRowError,
    TraceError,
)

DEFAULT_FRAME_RATE = 25.0


@dataclass(frozen=True)
class CoefficientTrace:
    """Immutable T x M matrix of expression coefficients."""

    values: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise TraceError(f"trace must be a T x M matrix with T,M >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("trace contains non-finite values")
        if self.feature_names is not None and len(self.feature_names) != arr.shape[1]:
            raise TraceError("feature_names length does not match feature count")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for deterministic synthetic traces.

    The first round(static_fraction * features) channels are exactly
    constant; the rest are clamped noisy sinusoids whose amplitude and
    period are drawn per channel from the configured ranges.
    """

    features: int = 47
    frames: int = 100
    static_fraction: float = 0.3
    amp_range: tuple[float, float] = (0.15, 0.3)
    period_range: tuple[float, float] = (20.0, 80.0)
    noise_std: float = 0.01
    seed: int = 0
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        if self.features < 1 or self.frames < 1:
            raise ValueError("features and frames must be >= 1")
        if not 0.0 <= self.static_fraction <= 1.0:
            raise ValueError("static_fraction must lie in [0, 1]")
        if self.amp_range[0] > self.amp_range[1] or self.amp_range[0] < 0:
            raise ValueError("amp_range must be ordered and non-negative")
        if self.period_range[0] > self.period_range[1] or self.period_range[0] <= 0:
            raise ValueError("period_range must be ordered and positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def n_static(self) -> int:
        return int(round(self.static_fraction * self.features))


@dataclass(frozen=True)
class ChunkView:
    """A window of N consecutive frames inside a parent trace."""

    trace: CoefficientTrace = field(repr=False)
    chunk_id: int
    start: int
    n_frames: int

    def __post_init__(self):
        if self.start < 0 or self.start + self.n_frames > self.trace.n_frames:
            raise ValueError("chunk range exceeds parent trace")

    @property
    def stop(self) -> int:
        return self.start + self.n_frames

    @property
    def n_features(self) -> int:
        return self.trace.n_features

    @property
    def values(self) -> np.ndarray:
        """Read-only N x M view into the parent trace."""
        return self.trace.values[self.start : self.stop]


def _expected_header(m: int) -> str:
    return ",".join(["frame"] + [f"e_{i}" for i in range(m)])


def load_trace(path: str | Path, frame_rate: float = DEFAULT_FRAME_RATE) -> CoefficientTrace:
    """Parse a coefficient CSV (`frame,e_0,...,e_{M-1}` header, one row per frame).

    Raises a distinct TraceError subclass for each rejection reason:
    empty file, malformed header, ragged rows, and non-finite values.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip() != ""]
    if not lines:
        raise EmptyTraceError(f"{path}: file is empty")

    header_cells = lines[0].strip().split(",")
    if len(header_cells) < 2 or header_cells[0] != "frame":
        raise MalformedHeaderError(f"{path}: header must start with 'frame,e_0,...'")
    m = len(header_cells) - 1
    if header_cells != _expected_header(m).split(","):
        raise MalformedHeaderError(f"{path}: header columns must be frame,e_0,...,e_{{{m - 1}}}")

    if len(lines) == 1:
        raise EmptyTraceError(f"{path}: no data rows")

    rows = []
    prev_frame = None
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.strip().split(",")
        if len(cells) != m + 1:
            raise RaggedRowError(f"{path}:{lineno}: expected {m + 1} cells, got {len(cells)}")
        try:
            frame_idx = int(cells[0])
            vals = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise RaggedRowError(f"{path}:{lineno}: unparsable cell ({exc})") from exc
        if prev_frame is not None and frame_idx <= prev_frame:
            raise TraceError(f"{path}:{lineno}: frame index must be ascending")
        prev_frame = frame_idx
        if not all(np.isfinite(v) for v in vals):
            raise NonFiniteValueError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)

    return CoefficientTrace(values=np.array(rows, dtype=np.float64), frame_rate=frame_rate)


def save_trace(trace: CoefficientTrace, path: str | Path) -> None:
    """Write a trace as CSV with full round-trip precision (repr of each float)."""
    out = [_expected_header(trace.n_features)]
    for t in range(trace.n_frames):
        cells = [str(t)] + [repr(float(v)) for v in trace.values[t]]
        out.append(",".join(cells))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def synth_trace(spec: SynthSpec) -> CoefficientTrace:
    """Deterministic synthetic trace: constant channels first, sinusoids after.

    All values are clamped to [0, 1]; dynamic channel centers and amplitudes
    are drawn so that clamping is rarely active and chunk variance stays
    above typical selection thresholds.
    """
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.frames, dtype=np.float64)
    values = np.empty((spec.frames, spec.features), dtype=np.float64)

    n_static = spec.n_static
    static_levels = rng.uniform(0.1, 0.9, size=n_static)
    values[:, :n_static] = static_levels[None, :]

    n_dyn = spec.features - n_static
    amp = rng.uniform(spec.amp_range[0], spec.amp_range[1], size=n_dyn)
    period = rng.uniform(spec.period_range[0], spec.period_range[1], size=n_dyn)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_dyn)
    # keep center +/- amp inside [0,1] so the sinusoid itself never clamps
    center = np.array([rng.uniform(a, 1.0 - a) if a <= 0.5 else 0.5 for a in amp])
    for j in range(n_dyn):
        wave = center[j] + amp[j] * np.sin(2.0 * np.pi * t / period[j] + phase[j])
        wave += rng.normal(0.0, spec.noise_std, size=spec.frames)
        values[:, n_static + j] = wave

    np.clip(values, 0.0, 1.0, out=values)
    return CoefficientTrace(values=values, frame_rate=spec.frame_rate)


def chunk_iter(trace: CoefficientTrace, n: int) -> list[ChunkView]:
    """Tile the trace into consecutive N-frame chunks; a trailing partial chunk is dropped."""
    if n < 1:
        raise ValueError("chunk size must be >= 1")
    n_chunks = trace.n_frames // n
    return [ChunkView(trace=trace, chunk_id=i, start=i * n, n_frames=n) for i in range(n_chunks)]
