"""Static SVG rendering of bands, sample paths and a reference path."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pathset import ConfidenceBand, SamplePathSet  # noqa: E402

__all__ = ["violated_steps", "reference_label", "render_band_svg"]


def violated_steps(band: ConfidenceBand, path) -> list[int]:
    """1-based steps where ``path`` leaves the band."""
    x = np.asarray(path, dtype=float)
    if x.shape != (band.H,):
        raise ValueError(f"reference has {x.size} steps, band has {band.H}")
    bad = (x < band.lower) | (x > band.upper)
    return [int(t) + 1 for t in np.flatnonzero(bad)]


def reference_label(band: ConfidenceBand, path) -> str:
    bad = violated_steps(band, path)
    if not bad:
        return "reference: covered"
    return "reference: not covered (steps " + ", ".join(map(str, bad)) + ")"


def render_band_svg(band: ConfidenceBand, paths: SamplePathSet | None = None, reference=None,
                    max_paths: int = 100, title: str | None = None, ylabel: str = "value") -> str:
    """SVG text for the band, with optional overlays.

    Output is byte-stable: no creation date is embedded and element ids
    come from a fixed hash salt.
    """
    t = np.arange(1, band.H + 1)
    with plt.rc_context({"svg.hashsalt": "robust-bands", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        if paths is not None:
            if paths.H != band.H:
                raise ValueError(f"paths have {paths.H} steps, band has {band.H}")
            for row in paths.paths[:max_paths]:
                ax.plot(t, row, color="0.75", lw=0.6, zorder=1)
        ax.fill_between(t, band.lower, band.upper, color="tab:blue", alpha=0.18, lw=0, zorder=2)
        ax.plot(t, band.upper, color="tab:blue", lw=1.5, label="upper", zorder=3)
        ax.plot(t, band.lower, color="tab:blue", lw=1.5, ls="--", label="lower", zorder=3)
        if reference is not None:
            ax.plot(t, np.asarray(reference, float), color="tab:red", lw=1.8, marker="o", ms=3,
                    label=reference_label(band, reference), zorder=4)
        ax.set_xlabel("time step")
        ax.set_ylabel(ylabel)
        if title is None:
            kind = "nominal" if band.gamma is None else f"robust, gamma={band.gamma:.4g}"
            title = f"confidence band (alpha={band.alpha:g}, {kind})"
        ax.set_title(title)
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
