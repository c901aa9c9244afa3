"""Matplotlib figure emission with byte-reproducible SVG output.

All figures are written as SVG with a fixed hash salt and no creation
date, so identical inputs yield identical files across runs and
processes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "blendcast"
plt.rcParams["svg.fonttype"] = "path"

_SCHEME_STYLE = {
    "proposed": dict(color="tab:blue", marker="o"),
    "upper-bound": dict(color="tab:green", marker="s", linestyle="--"),
    "no-selection": dict(color="tab:orange", marker="^"),
    "no-selection-no-prediction": dict(color="tab:red", marker="v"),
}


def save_deterministic_svg(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_rate_sweep(series: dict[str, list[tuple[float, float]]], path: str | Path) -> None:
    """PSNR-vs-rate line plot, one series per scheme.

    series maps scheme name to (rate_bits, mean_psnr_db) points; points
    with non-finite PSNR (failed cells) are dropped from the curve.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name in sorted(series):
        pts = [(r, p) for r, p in sorted(series[name]) if p == p]  # drop NaN cells
        if not pts:
            continue
        xs = [r for r, _ in pts]
        ys = [p for _, p in pts]
        ax.plot(xs, ys, label=name, **_SCHEME_STYLE.get(name, {}))
    ax.set_xlabel("rate (bits per chunk interval)")
    ax.set_ylabel("mean PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    save_deterministic_svg(fig, path)


def plot_frame_psnr(frames, psnr_db, path: str | Path, n_f: int | None = None) -> None:
    """Per-frame PSNR profile for one chunk, with the handover frame marked."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    capped = [min(p, 99.0) for p in psnr_db]
    ax.plot(frames, capped, color="tab:blue")
    if n_f is not None:
        ax.axvline(n_f, color="tab:gray", linestyle=":", label=f"last transmitted frame ({n_f})")
        ax.legend()
    ax.set_xlabel("frame")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    save_deterministic_svg(fig, path)
