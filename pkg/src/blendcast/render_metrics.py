"""Deterministic linear blendshape renderer and reconstruction metrics.

The renderer composes a smooth neutral image with one localized signed
Gaussian blob per feature, weighted by the coefficient vector and clamped
to [0, 1]. It is a desk-scale stand-in for a learned face renderer: image
error then reflects coefficient error, so PSNR trends are meaningful even
though absolute dB values are synthetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

PSNR_CAP_DB = 99.0  # stand-in for the +inf sentinel when averaging


@dataclass(frozen=True)
class BlendBasis:
    """Neutral image plus M signed delta images."""

    neutral: np.ndarray = field(repr=False)  # (H, W, 3) in [0, 1]
    deltas: np.ndarray = field(repr=False)  # (M, H, W, 3) signed
    seed: int = 0

    def __post_init__(self):
        if self.neutral.ndim != 3 or self.neutral.shape[2] != 3:
            raise ValueError("neutral must be H x W x 3")
        if self.deltas.ndim != 4 or self.deltas.shape[1:] != self.neutral.shape:
            raise ValueError("deltas must be M x H x W x 3 matching neutral")
        if not (np.all(np.isfinite(self.neutral)) and np.all(np.isfinite(self.deltas))):
            raise ValueError("basis images must be finite")

    @property
    def height(self) -> int:
        return self.neutral.shape[0]

    @property
    def width(self) -> int:
        return self.neutral.shape[1]

    @property
    def n_features(self) -> int:
        return self.deltas.shape[0]


def make_basis(height: int, width: int, m: int, seed: int = 0) -> BlendBasis:
    """Deterministic basis: gradient neutral, one Gaussian blob per feature.

    Blob centers are drawn without replacement over the pixel grid, so all
    M centers are distinct whenever M <= H * W.
    """
    if height < 8 or width < 8:
        raise ValueError("basis dimensions must be at least 8 x 8")
    if m < 1:
        raise ValueError("feature count must be >= 1")
    if m > height * width:
        raise ValueError("more features than pixels; centers cannot stay distinct")

    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)

    angle = rng.uniform(0.0, 2.0 * np.pi)
    ramp = (np.cos(angle) * xs / max(width - 1, 1)) + (np.sin(angle) * ys / max(height - 1, 1))
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    channel_offsets = rng.uniform(-0.05, 0.05, size=3)
    neutral = np.clip(0.3 + 0.4 * ramp[:, :, None] + channel_offsets[None, None, :], 0.0, 1.0)

    cells = rng.choice(height * width, size=m, replace=False)
    centers_y = cells // width
    centers_x = cells % width
    sigma = rng.uniform(min(height, width) / 20.0, min(height, width) / 8.0, size=m)
    colors = rng.uniform(-1.0, 1.0, size=(m, 3))
    amps = rng.uniform(0.3, 0.8, size=m)

    deltas = np.empty((m, height, width, 3), dtype=np.float64)
    for k in range(m):
        blob = np.exp(-((ys - centers_y[k]) ** 2 + (xs - centers_x[k]) ** 2) / (2.0 * sigma[k] ** 2))
        deltas[k] = amps[k] * blob[:, :, None] * colors[k][None, None, :]
    return BlendBasis(neutral=neutral, deltas=deltas, seed=seed)


def render(coeffs, basis: BlendBasis) -> np.ndarray:
    """Single frame: clamp(neutral + sum_m e_m * delta_m, 0, 1)."""
    vec = np.asarray(coeffs, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != basis.n_features:
        raise ValueError(f"expected {basis.n_features} coefficients, got shape {vec.shape}")
    return render_sequence(vec[None, :], basis)[0]


def render_sequence(coeffs: np.ndarray, basis: BlendBasis) -> np.ndarray:
    """Render N frames at once; coeffs is N x M, result N x H x W x 3."""
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != basis.n_features:
        raise ValueError(f"expected N x {basis.n_features} coefficients, got shape {arr.shape}")
    flat = basis.deltas.reshape(basis.n_features, -1)
    frames = basis.neutral.reshape(1, -1) + arr @ flat
    np.clip(frames, 0.0, 1.0, out=frames)
    return frames.reshape(arr.shape[0], basis.height, basis.width, 3)


def psnr(truth: np.ndarray, recon: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with MAX = 1.0; +inf for identical frames."""
    if truth.shape != recon.shape:
        raise ValueError(f"frame shapes differ: {truth.shape} vs {recon.shape}")
    mse = float(np.mean((truth - recon) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def psnr_sequence(truth: np.ndarray, recon: np.ndarray) -> np.ndarray:
    """Per-frame PSNR for two N x H x W x 3 stacks (+inf where identical)."""
    if truth.shape != recon.shape:
        raise ValueError(f"sequence shapes differ: {truth.shape} vs {recon.shape}")
    diff = (truth - recon).reshape(truth.shape[0], -1)
    mse = np.mean(diff**2, axis=1)
    out = np.full(truth.shape[0], math.inf)
    nonzero = mse > 0.0
    out[nonzero] = 10.0 * np.log10(1.0 / mse[nonzero])
    return out


def mean_psnr(per_frame: np.ndarray, cap_db: float = PSNR_CAP_DB) -> float:
    """Arithmetic chunk average with the +inf sentinel capped to keep means finite."""
    return float(np.mean(np.minimum(per_frame, cap_db)))


def coeff_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference over all entries of two equal-shape matrices."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shapes differ: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def save_png(frame: np.ndarray, path: str | Path) -> None:
    """Export a [0,1] float frame as an 8-bit PNG."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError("frame must be H x W x 3")
    img = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.floor(img * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path, format="PNG")
