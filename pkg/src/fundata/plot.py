"""Static SVG rendering of curves and images.

Coordinates are printed with two decimals and the element order follows
the observation order, so identical inputs give byte-identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .core import DenseFD, IrregularFD

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=16, top=36, bottom=48)


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _label(x: float) -> str:
    return f"{x:.3g}"


def _observations(fd):
    if isinstance(fd, DenseFD):
        grid = fd.grids[0]
        for row in fd.values:
            keep = ~np.isnan(row)
            yield grid[keep], row[keep]
    else:
        for n in range(fd.n_obs):
            grids, vals = fd.obs(n)
            yield grids[0], vals


def _frame(title, xlabel, ylabel, xr, yr, sx, sy) -> list:
    w, h, m = WIDTH, HEIGHT, MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
        f'<rect x="{m["left"]}" y="{m["top"]}" width="{w - m["left"] - m["right"]}" '
        f'height="{h - m["top"] - m["bottom"]}" fill="none" stroke="#000000" stroke-width="1"/>',
    ]
    for t in _ticks(*xr):
        x = _fmt(sx(t))
        y0 = h - m["bottom"]
        out.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y0 + 5}" stroke="#000000"/>')
        out.append(f'<text x="{x}" y="{y0 + 18}" font-size="11" text-anchor="middle">'
                   f'{_label(t)}</text>')
    for t in _ticks(*yr):
        y = _fmt(sy(t))
        x0 = m["left"]
        out.append(f'<line x1="{x0 - 5}" y1="{y}" x2="{x0}" y2="{y}" stroke="#000000"/>')
        out.append(f'<text x="{x0 - 8}" y="{y}" font-size="11" text-anchor="end" '
                   f'dominant-baseline="middle">{_label(t)}</text>')
    if title:
        out.append(f'<text x="{w / 2:.2f}" y="22" font-size="14" text-anchor="middle">'
                   f'{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{(m["left"] + w - m["right"]) / 2:.2f}" y="{h - 8}" '
                   f'font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cy = (m["top"] + h - m["bottom"]) / 2
        out.append(f'<text x="14" y="{cy:.2f}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {cy:.2f})">{escape(ylabel)}</text>')
    return out


def _scale(lo, hi, a, b):
    span = hi - lo
    if span == 0:
        return lambda v: (a + b) / 2
    return lambda v: a + (v - lo) / span * (b - a)


def plot_curves(
    fd,
    labels: Optional[Sequence] = None,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> str:
    """One polyline per observation, coloured by label (or by index)."""
    if not isinstance(fd, (DenseFD, IrregularFD)):
        raise TypeError("plot_curves expects DenseFD or IrregularFD")
    if fd.n_dim != 1:
        raise ValueError("curves need a one-dimensional domain; use plot_image")
    if labels is not None and len(labels) != fd.n_obs:
        raise ValueError(f"{len(labels)} labels for {fd.n_obs} observations")
    obs = list(_observations(fd))
    xs = np.concatenate([t for t, _ in obs])
    ys = np.concatenate([y for _, y in obs])
    xr, yr = (float(xs.min()), float(xs.max())), (float(ys.min()), float(ys.max()))
    m = MARGIN
    sx = _scale(*xr, m["left"], WIDTH - m["right"])
    sy = _scale(*yr, HEIGHT - m["bottom"], m["top"])
    out = _frame(title, xlabel, ylabel, xr, yr, sx, sy)
    if labels is not None:
        levels = {v: i for i, v in enumerate(sorted(set(labels), key=str))}
        colours = [PALETTE[levels[v] % len(PALETTE)] for v in labels]
    else:
        colours = [PALETTE[n % len(PALETTE)] for n in range(fd.n_obs)]
    for (t, y), colour in zip(obs, colours):
        points = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(t, y))
        out.append(f'<polyline points="{points}" fill="none" stroke="{colour}" '
                   f'stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_image(fd: DenseFD, obs: int = 0, title: str = "", xlabel: str = "",
               ylabel: str = "") -> str:
    """Grey-scale heat map of one observation of two-dimensional data."""
    if not isinstance(fd, DenseFD) or fd.n_dim != 2:
        raise ValueError("plot_image expects dense two-dimensional data")
    if not 0 <= obs < fd.n_obs:
        raise IndexError(f"observation {obs} out of range")
    s, t = fd.grids
    z = fd.values[obs]
    xr, yr = (float(s[0]), float(s[-1])), (float(t[0]), float(t[-1]))
    m = MARGIN
    sx = _scale(*xr, m["left"], WIDTH - m["right"])
    sy = _scale(*yr, HEIGHT - m["bottom"], m["top"])
    out = _frame(title, xlabel, ylabel, xr, yr, sx, sy)
    lo, hi = np.nanmin(z), np.nanmax(z)
    cw = (WIDTH - m["left"] - m["right"]) / s.size
    ch = (HEIGHT - m["top"] - m["bottom"]) / t.size
    for i in range(s.size):
        for j in range(t.size):
            if np.isnan(z[i, j]):
                continue
            level = 0.5 if hi == lo else (z[i, j] - lo) / (hi - lo)
            g = int(round(255 * level))
            x = m["left"] + i * cw
            y = HEIGHT - m["bottom"] - (j + 1) * ch
            out.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw)}" '
                       f'height="{_fmt(ch)}" fill="#{g:02x}{g:02x}{g:02x}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
