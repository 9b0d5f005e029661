"""Static SVG renderings of curve bands.

Point estimates are dashed, band edges dotted, one color per model; the
difference plot adds a solid zero line. Files are written through the Agg
backend so no display is needed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .curves import CurveBand


def _plot_bands(ax, bands: list[CurveBand], scale_by_k: bool) -> None:
    for band in bands:
        denom = band.ks if scale_by_k else 1.0
        x = band.ks
        (line,) = ax.plot(
            x, band.median / denom, linestyle="--", marker="o", markersize=3,
            label=f"model {band.label}" if "-" not in band.label else band.label,
        )
        color = line.get_color()
        ax.plot(x, band.lower / denom, linestyle=":", color=color, linewidth=1)
        ax.plot(x, band.upper / denom, linestyle=":", color=color, linewidth=1)


def save_band_svg(
    path: str | Path,
    bands: list[CurveBand],
    *,
    title: str = "",
    mean_uplift_scale: bool = False,
    difference: bool = False,
    metadata: dict[str, object] | None = None,
) -> None:
    fig, ax = plt.subplots(figsize=(9, 5.5))
    try:
        _plot_bands(ax, bands, mean_uplift_scale)
        if difference:
            ax.axhline(0.0, color="black", linewidth=1)
        ax.set_xlabel("selection size (top k)")
        ax.set_ylabel("mean uplift" if mean_uplift_scale else "cumulative gain")
        if title:
            ax.set_title(title)
        if bands:
            alpha = bands[0].alpha
            ax.legend(title=f"dashed: estimate, dotted: {100 * (1 - alpha):g}% band")
        description = "; ".join(f"{k}={v}" for k, v in (metadata or {}).items())
        fig.savefig(path, format="svg", metadata={"Description": description} if description else None)
    finally:
        plt.close(fig)
