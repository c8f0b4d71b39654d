"""Self-contained SVG figures: line charts (linear or log axes) and
phase-space heatmaps.  No graphics dependency; files diff cleanly.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .diagnostics import DiagnosticsSeries, energy_ledger
from .grid import PhaseGrid

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 55
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


class _Axes:
    def __init__(self, xs, ys, logx, logy):
        self.logx, self.logy = logx, logy
        tx = np.log10(xs) if logx else np.asarray(xs, dtype=float)
        ty = np.log10(ys) if logy else np.asarray(ys, dtype=float)
        self.x0, self.x1 = float(tx.min()), float(tx.max())
        self.y0, self.y1 = float(ty.min()), float(ty.max())
        if self.x1 == self.x0:
            self.x1 += 1.0
        if self.y1 == self.y0:
            pad = abs(self.y0) * 0.1 + 1e-12
            self.y0 -= pad
            self.y1 += pad
        else:
            pad = 0.05 * (self.y1 - self.y0)
            self.y0 -= pad
            self.y1 += pad

    def px(self, x):
        t = math.log10(x) if self.logx else x
        return _ML + (t - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y):
        t = math.log10(y) if self.logy else y
        return _H - _MB - (t - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def x_ticks(self):
        ticks = _nice_ticks(self.x0, self.x1)
        return [(10.0**t if self.logx else t) for t in ticks]

    def y_ticks(self):
        ticks = _nice_ticks(self.y0, self.y1)
        return [(10.0**t if self.logy else t) for t in ticks]


def line_chart(series, path, title="", xlabel="", ylabel="",
               logx=False, logy=False, annotation=""):
    """series: list of (label, xs, ys).  Nonpositive data is dropped on log
    axes; a series with nothing left is skipped."""
    clean = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            keep &= xs > 0
        if logy:
            keep &= ys > 0
        if keep.any():
            clean.append((label, xs[keep], ys[keep]))
    if not clean:
        return None
    ax = _Axes(np.concatenate([c[1] for c in clean]),
               np.concatenate([c[2] for c in clean]), logx, logy)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
    ]
    for t in ax.x_ticks():
        x = ax.px(t)
        parts.append(f'<line x1="{x:.1f}" y1="{_MT}" x2="{x:.1f}" y2="{_H - _MB}" '
                     'stroke="#dddddd"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 16}" text-anchor="middle">'
                     f'{_fmt(t)}</text>')
    for t in ax.y_ticks():
        y = ax.py(t)
        parts.append(f'<line x1="{_ML}" y1="{y:.1f}" x2="{_W - _MR}" y2="{y:.1f}" '
                     'stroke="#dddddd"/>')
        parts.append(f'<text x="{_ML - 6}" y="{y + 4:.1f}" text-anchor="end">'
                     f'{_fmt(t)}</text>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                 f'height="{_H - _MT - _MB}" fill="none" stroke="#333333"/>')
    for idx, (label, xs, ys) in enumerate(clean):
        color = _COLORS[idx % len(_COLORS)]
        pts = " ".join(f"{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.6"/>')
        ly = _MT + 16 + 16 * idx
        parts.append(f'<line x1="{_W - _MR - 150}" y1="{ly}" x2="{_W - _MR - 126}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _MR - 120}" y="{ly + 4}">{label}</text>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_H / 2})">{ylabel}</text>')
    if annotation:
        parts.append(f'<text x="{_ML + 10}" y="{_MT + 16}" fill="#555555">'
                     f'{annotation}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
    return path


def _color_map(t: float) -> str:
    # compact viridis-like ramp
    stops = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
             (253, 231, 37)]
    t = min(max(t, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    f = t - i
    c = [round(a + (b - a) * f) for a, b in zip(stops[i], stops[i + 1])]
    return f"rgb({c[0]},{c[1]},{c[2]})"


def heatmap(grid: PhaseGrid, path, title="", max_cells: int = 128):
    """Phase-space density as colored cells (block-averaged for display when
    the grid is finer than max_cells per axis)."""
    vals = grid.values
    bx = max(1, grid.nx // max_cells)
    bv = max(1, grid.nv // max_cells)
    if bx > 1 or bv > 1:
        nx = (grid.nx // bx) * bx
        nv = (grid.nv // bv) * bv
        vals = vals[:nx, :nv].reshape(nx // bx, bx, nv // bv, bv).mean(axis=(1, 3))
    peak = vals.max()
    scale = peak if peak > 0 else 1.0
    n_x, n_v = vals.shape
    cw = (_W - _ML - _MR) / n_x
    ch = (_H - _MT - _MB) / n_v
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
    ]
    for i in range(n_x):
        for k in range(n_v):
            x = _ML + i * cw
            y = _H - _MB - (k + 1) * ch
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" '
                f'height="{ch + 0.5:.2f}" fill="{_color_map(vals[i, k] / scale)}"/>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                 f'height="{_H - _MT - _MB}" fill="none" stroke="#333333"/>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">x '
                 f'in [{-grid.lx:.3g}, {grid.lx:.3g}]</text>')
    parts.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_H / 2})">v in '
                 f'[{-grid.lv:.3g}, {grid.lv:.3g}]</text>')
    parts.append(f'<text x="{_ML + 10}" y="{_MT + 16}" fill="#ffffff">t = '
                 f'{grid.t:.4g}, peak = {peak:.4g}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
    return path


def emit_plots(prefix, series: DiagnosticsSeries | None = None, *,
               sigma: float = 0.0, d: int = 1, mass: float = 1.0,
               r0: float | None = None, sweep=None,
               snapshots: list[PhaseGrid] | None = None) -> list[str]:
    """Standard figure set for a completed run; returns the files written.

    Emits only what the inputs support: ledger/norm/support charts need a
    series, the log-log error chart needs a sweep result, heatmaps need grid
    snapshots.  Empty inputs produce no files.
    """
    out: list[str] = []
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    if series is not None and len(series) > 0:
        t = series.times
        residual = energy_ledger(series, sigma, d, mass)
        p = line_chart(
            [("E(t)", t, series.column("energy")),
             ("cumulative dissipation", t, series.column("dissipation")),
             ("ledger residual", t, residual)],
            f"{prefix}_energy_ledger.svg",
            title="Energy ledger", xlabel="t", ylabel="energy")
        if p:
            out.append(p)
        if r0 is not None:
            bound = r0 + mass * r0 * t
            p = line_chart(
                [("measured R(t)", t, series.column("support_radius")),
                 ("bound R0 (1 + M t)", t, bound)],
                f"{prefix}_support.svg",
                title="Velocity support radius", xlabel="t", ylabel="R")
            if p:
                out.append(p)
        p = line_chart(
            [("||(1+v^2)^1/2 f||_L1", t, series.column("l1_weighted")),
             ("||f||_L2(omega)", t, series.column("l2_omega")),
             ("||f||_X", t, series.column("x_norm"))],
            f"{prefix}_norms.svg",
            title="Norm growth", xlabel="t", ylabel="norm", logy=True)
        if p:
            out.append(p)
    if sweep is not None:
        p = line_chart(
            [("L2(omega) error", sweep.sigmas, sweep.err_l2_omega),
             ("L1 error", sweep.sigmas, sweep.err_l1),
             ("observable error", sweep.sigmas, sweep.err_observable)],
            f"{prefix}_sweep.svg",
            title="Vanishing-noise convergence", xlabel="sigma",
            ylabel="error at T", logx=True, logy=True,
            annotation=f"fitted order p = {sweep.fitted_order:.3f}")
        if p:
            out.append(p)
    for snap in snapshots or []:
        p = heatmap(snap, f"{prefix}_phase_t{snap.t:08.3f}.svg",
                    title="Phase-space density")
        out.append(p)
    return out
