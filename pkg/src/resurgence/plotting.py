"""Deterministic SVG figures: singular points, paths, node tracks, profiles.

Output is byte-identical for identical input: the SVG hash salt is fixed
and no date metadata is written.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dfs import DFS  # noqa: E402

STYLE = {
    "svg.hashsalt": "resurgence",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 8,
    "axes.labelsize": 9,
    "lines.linewidth": 1.2,
    "figure.figsize": (5.0, 5.0),
}
PATH_COLORS = ["#08589e", "#e34a33", "#31a354", "#756bb1", "#636363"]


@dataclass
class Scene:
    """Objects to draw in the complex plane."""

    omega: DFS | None = None
    paths: list = field(default_factory=list)          # arrays of complex vertices
    tracks: list = field(default_factory=list)         # arrays (T, k) of complex node tracks
    title: str = ""

    def points(self) -> np.ndarray:
        pts = [np.zeros(1, dtype=complex)]
        if self.omega is not None:
            pts.append(np.asarray(self.omega.rays[0], dtype=complex))
        pts += [np.asarray(p, dtype=complex).ravel() for p in self.paths]
        pts += [np.asarray(t, dtype=complex).ravel() for t in self.tracks]
        return np.concatenate(pts)


def _view(points: np.ndarray) -> tuple:
    """Square bounding box with a 10% margin."""
    x0, x1 = points.real.min(), points.real.max()
    y0, y1 = points.imag.min(), points.imag.max()
    side = max(x1 - x0, y1 - y0, 1.0)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half = 0.5 * side * 1.1
    return cx - half, cx + half, cy - half, cy + half


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def render_svg(scene: Scene) -> str:
    """Singular points annotated with onsets, paths as polylines and node
    tracks as thin curves; an empty scene gives an empty pair of axes."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for tr in scene.tracks:
            tr = np.asarray(tr, dtype=complex)
            tr = tr.reshape(len(tr), -1)
            ax.plot(tr.real, tr.imag, color="#9ecae1", lw=0.4, zorder=1)
        for k, p in enumerate(scene.paths):
            p = np.asarray(p, dtype=complex)
            ax.plot(p.real, p.imag, color=PATH_COLORS[k % len(PATH_COLORS)], zorder=2, marker=".",
                    ms=2)
        if scene.omega is not None:
            anchors, onsets = scene.omega.rays
            ax.plot(anchors.real, anchors.imag, "x", color="k", ms=6, mew=1.5, zorder=3)
            for w, L in zip(anchors, onsets):
                ax.annotate(f"{L:g}", (w.real, w.imag), textcoords="offset points", xytext=(4, 4))
        ax.plot([0], [0], "o", color="k", ms=3, zorder=3)
        x0, x1, y0, y1 = _view(scene.points())
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_aspect("equal")
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        if scene.title:
            ax.set_title(scene.title)
        return _svg(fig)


def render_profiles(grid: Sequence[float], profiles: Sequence[Sequence[float]], labels: Sequence[str],
                    title: str = "") -> str:
    """Sampled sup profiles ``l -> sup |f_i|`` on a log scale."""
    with plt.rc_context(STYLE | {"figure.figsize": (5.0, 3.5)}):
        fig, ax = plt.subplots()
        for k, (prof, lab) in enumerate(zip(profiles, labels)):
            ax.semilogy(grid, prof, marker="o", ms=3, color=PATH_COLORS[k % len(PATH_COLORS)],
                        label=lab)
        ax.set_xlabel("length l")
        ax.set_ylabel("sampled sup |f|")
        if labels:
            ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _svg(fig)


def render_terms(values: Sequence[complex], envelope: Sequence[float], title: str = "") -> str:
    """Degree-group magnitudes of a substitution against the majorant envelope."""
    with plt.rc_context(STYLE | {"figure.figsize": (5.0, 3.5)}):
        fig, ax = plt.subplots()
        n = np.arange(1, len(values) + 1)
        ax.semilogy(n, np.abs(values) + 1e-300, "o-", color=PATH_COLORS[0], label="|group value|")
        env = np.asarray(envelope, dtype=float)
        if np.isfinite(env).all() and len(env):
            ax.semilogy(n, env, "s--", color=PATH_COLORS[1], label="majorant term")
        ax.set_xlabel("degree n")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _svg(fig)
