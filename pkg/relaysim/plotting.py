#!/usr/bin/env python3
"""
SVG figures of a run
1D runs are drawn on the x-t plane, 2D runs as a row of time slices
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from relaysim.errors import DimensionUnsupported  # noqa: E402
from relaysim.free_boundary import (  # noqa: E402
    GAMMA_ALPHA,
    GAMMA_BETA,
    GAMMA_V,
    TIME_LIKE,
    UNCLASSIFIED,
    FreeBoundaryDecomposition,
    InterfaceFacet,
)
from relaysim.grid import SpaceTimeField  # noqa: E402
from relaysim.relay import RelayParams  # noqa: E402

logger = logging.getLogger('Plotting')

HASH_SALT = "relaysim"
PHASE_COLORS = ListedColormap(["#c6dbef", "#fdd0a2"])

FACET_STYLES: Dict[str, Dict] = {
    GAMMA_ALPHA: {'colors': "#08519c", 'linewidths': 1.6, 'linestyles': "solid", 'label': "gamma_alpha"},
    GAMMA_BETA: {'colors': "#a50f15", 'linewidths': 1.6, 'linestyles': "solid", 'label': "gamma_beta"},
    GAMMA_V: {'colors': "#000000", 'linewidths': 2.2, 'linestyles': "solid", 'label': "gamma_v"},
    UNCLASSIFIED: {'colors': "#737373", 'linewidths': 1.0, 'linestyles': "dashed", 'label': "unclassified"},
}


def _edges(centers: np.ndarray) -> np.ndarray:
    """Cell edges halfway between sample points, extended by half a step at both ends"""
    if centers.size == 1:
        return np.array([centers[0] - 0.5, centers[0] + 0.5])
    mid = 0.5 * (centers[1:] + centers[:-1])
    return np.concatenate([[2 * centers[0] - mid[0]], mid, [2 * centers[-1] - mid[-1]]])


def _time_bands(h_rows: np.ndarray) -> List[int]:
    """First snapshot of every run of identical h rows"""
    starts = [0]
    for k in range(1, h_rows.shape[0]):
        if not np.array_equal(h_rows[k], h_rows[k - 1]):
            starts.append(k)
    return starts


def _facet_segments_1d(facets: Sequence[InterfaceFacet], x_edges: np.ndarray, t_edges: np.ndarray,
                       h: float) -> np.ndarray:
    segments = []
    for f in facets:
        t, x = f.center
        if f.orientation == TIME_LIKE:
            segments.append([(x - 0.5 * h, t), (x + 0.5 * h, t)])
        else:
            k = f.cell_a[0]
            segments.append([(x, t_edges[k]), (x, t_edges[k + 1])])
    return np.array(segments, dtype=float).reshape(-1, 2, 2)


def _threshold_levels(values: np.ndarray, p: Optional[RelayParams]) -> List[float]:
    if p is None or values.size == 0:
        return []
    lo, hi = float(np.min(values)), float(np.max(values))
    return [level for level in (p.alpha, p.beta) if math.isfinite(level) and lo < level < hi]


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={'Date': None})
    plt.close(fig)
    return path


def _spacetime_1d(u_hist: SpaceTimeField, h_hist: SpaceTimeField, decomp: Optional[FreeBoundaryDecomposition],
                  p: Optional[RelayParams], title: str):
    grid = u_hist.grid
    x = grid.axes[0]
    x_edges = _edges(x)
    t_edges = _edges(u_hist.times) if len(u_hist) > 1 else np.array([u_hist.times[0], u_hist.times[0] + 1.0])

    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    starts = _time_bands(h_hist.values)
    band_edges = [t_edges[k] for k in starts] + [t_edges[-1]]
    shading = np.array([h_hist.values[k] for k in starts])
    ax.pcolormesh(x_edges, band_edges, shading, cmap=PHASE_COLORS, vmin=-1.0, vmax=1.0, shading="flat")

    levels = _threshold_levels(u_hist.values, p)
    if levels and len(u_hist) > 1:
        ax.contour(x, u_hist.times, u_hist.values, levels=levels, colors="#525252", linewidths=0.6,
                   linestyles="dotted")

    if decomp is not None:
        for facet_class, style in FACET_STYLES.items():
            facets = decomp.by_class(facet_class)
            if not facets:
                continue
            style = dict(style)
            label = f"{style.pop('label')} ({len(facets)})"
            ax.add_collection(LineCollection(_facet_segments_1d(facets, x_edges, t_edges, grid.h),
                                             label=label, **style))
        if len(decomp):
            ax.legend(loc="upper right", fontsize="small")

    ax.set_xlim(x_edges[0], x_edges[-1])
    ax.set_ylim(t_edges[0], t_edges[-1])
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    return fig


def _slices_2d(u_hist: SpaceTimeField, h_hist: SpaceTimeField, decomp: Optional[FreeBoundaryDecomposition],
               p: Optional[RelayParams], title: str, time_slices: Sequence[int]):
    grid = u_hist.grid
    x, y = grid.axes
    x_edges, y_edges = _edges(x), _edges(y)
    fig, axes = plt.subplots(1, len(time_slices), figsize=(4.0 * len(time_slices), 4.0), squeeze=False)

    for ax, k in zip(axes[0], time_slices):
        snap = u_hist.snapshot(k)
        ax.pcolormesh(x_edges, y_edges, h_hist.values[k].T, cmap=PHASE_COLORS, vmin=-1.0, vmax=1.0, shading="flat")
        levels = _threshold_levels(snap.values, p)
        if levels:
            ax.contour(x, y, snap.values.T, levels=levels, colors="#525252", linewidths=0.6, linestyles="dotted")
        if decomp is not None:
            for facet_class, style in FACET_STYLES.items():
                segments = []
                for f in decomp.by_class(facet_class):
                    if f.orientation == TIME_LIKE or f.cell_a[0] != k:
                        continue
                    _, fx, fy = f.center
                    if f.axis == 1:
                        segments.append([(fx, fy - 0.5 * grid.spacing[1]), (fx, fy + 0.5 * grid.spacing[1])])
                    else:
                        segments.append([(fx - 0.5 * grid.spacing[0], fy), (fx + 0.5 * grid.spacing[0], fy)])
                if segments:
                    style = {key: v for key, v in style.items() if key != 'label'}
                    ax.add_collection(LineCollection(np.array(segments), **style))
        ax.set_xlim(x_edges[0], x_edges[-1])
        ax.set_ylim(y_edges[0], y_edges[-1])
        ax.set_aspect("equal")
        ax.set_title(f"t = {snap.time:.4g}")
    fig.suptitle(title)
    return fig


def emit_spacetime_svg(
    u_hist: SpaceTimeField,
    h_hist: SpaceTimeField,
    decomp: Optional[FreeBoundaryDecomposition],
    path: Union[str, Path],
    p: Optional[RelayParams] = None,
    time_slices: Optional[Sequence[int]] = None,
    title: str = "",
) -> Path:
    """
    Phase shading of h, free-boundary facets stroked by class and the
    threshold level sets of u as dotted contours.

    2D histories need explicit time_slices; byte output is fixed for fixed input.
    """
    if len(u_hist) == 0:
        raise ValueError("cannot plot an empty history")
    if p is None and decomp is not None:
        p = decomp.params

    with plt.rc_context({'svg.hashsalt': HASH_SALT, 'svg.fonttype': 'path', 'path.simplify': False}):
        if u_hist.grid.dim == 1:
            fig = _spacetime_1d(u_hist, h_hist, decomp, p, title)
        else:
            if not time_slices:
                raise DimensionUnsupported("2D space-time volumes are drawn as time slices; pass time_slices")
            for k in time_slices:
                u_hist.snapshot(k)
            fig = _slices_2d(u_hist, h_hist, decomp, p, title, list(time_slices))
        path = _save(fig, path)
    logger.info(f"Wrote {path}")
    return path


def default_time_slices(n_snapshots: int, count: int = 3) -> List[int]:
    """Evenly spread snapshot indices including the first and last"""
    if n_snapshots <= 0:
        return []
    return sorted(set(int(round(v)) for v in np.linspace(0, n_snapshots - 1, min(count, n_snapshots))))
