"""Self-contained SVG line plots of cost or overhead traces.

Output depends only on the input rows: coordinates are printed with a fixed
precision and nothing time- or host-dependent is embedded.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import PlotError
from .metrics import read_csv

KINDS = {
    "cost": ("mean_cost", "mean defense cost (cost units)", (2.0, 5.0)),
    "overhead": ("hardening_overhead", "hardening overhead (units)", (10.0, 30.0)),
}
PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]
W, H = 760, 440
ML, MR, MT, MB = 70, 150, 30, 50


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks, v = [], start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:g}"


def series_from_files(paths, kind: str) -> "OrderedDict[str, tuple[np.ndarray, np.ndarray]]":
    """Average the chosen metric per policy across files; time axes must match."""
    if kind not in KINDS:
        raise PlotError(f"unknown plot kind {kind!r}")
    col = KINDS[kind][0]
    grouped: "OrderedDict[str, list]" = OrderedDict()
    axis, axis_src, bad = None, None, []
    for p in paths:
        rows = read_csv(p)
        if not rows:
            bad.append(str(p))
            continue
        t = np.array([r.t for r in rows])
        if axis is None:
            axis, axis_src = t, str(p)
        elif len(t) != len(axis) or not np.array_equal(t, axis):
            bad.append(str(p))
            continue
        grouped.setdefault(rows[0].policy, []).append(np.array([getattr(r, col) for r in rows], dtype=float))
    if bad:
        raise PlotError(f"time axis differs from {axis_src}: {', '.join(bad)}")
    if axis is None:
        raise PlotError("no input files")
    return OrderedDict((k, (axis, np.mean(v, axis=0))) for k, v in grouped.items())


def render_svg(series, kind: str, *, band=None, log_y: bool = False, title: str | None = None) -> str:
    col, ylabel, default_band = KINDS[kind]
    band = default_band if band is None else band
    t_all = np.concatenate([t for t, _ in series.values()])
    y_all = np.concatenate([y for _, y in series.values()])
    x0, x1 = float(t_all.min()), float(t_all.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if log_y:
        pos = y_all[y_all > 0]
        floor = float(pos.min()) if len(pos) else 1e-6
        tf = lambda y: np.log10(np.maximum(y, floor))  # noqa: E731
    else:
        tf = lambda y: np.asarray(y, dtype=float)  # noqa: E731
    ty = tf(y_all)
    y0, y1 = float(ty.min()), float(ty.max())
    if not log_y:
        y0 = min(y0, 0.0)
    if y1 <= y0:
        y1 = y0 + 1.0
    pw, ph = W - ML - MR, H - MT - MB
    sx = lambda x: ML + (x - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda y: MT + ph - (y - y0) / (y1 - y0) * ph  # noqa: E731

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    if title:
        out.append(f'<text x="{W / 2:.2f}" y="18" text-anchor="middle">{escape(title)}</text>')
    b0, b1 = max(band[0], x0), min(band[1], x1)
    if b1 > b0:
        out.append(f'<rect class="attack-window" x="{_fmt(sx(b0))}" y="{MT}" width="{_fmt(sx(b1) - sx(b0))}" '
                   f'height="{ph}" fill="#cccccc" fill-opacity="0.35"/>')
    out.append(f'<line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}" stroke="black"/>')
    out.append(f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}" stroke="black"/>')
    for xt in _nice_ticks(x0, x1):
        X = sx(xt)
        out.append(f'<line x1="{_fmt(X)}" y1="{MT + ph}" x2="{_fmt(X)}" y2="{MT + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(X)}" y="{MT + ph + 17}" text-anchor="middle">{_label(xt)}</text>')
    for yt in _nice_ticks(y0, y1):
        Y = sy(yt)
        lab = _label(10**yt) if log_y else _label(yt)
        out.append(f'<line x1="{ML - 4}" y1="{_fmt(Y)}" x2="{ML}" y2="{_fmt(Y)}" stroke="black"/>')
        out.append(f'<text x="{ML - 7}" y="{_fmt(Y + 4)}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ML + pw / 2:.2f}" y="{H - 12}" text-anchor="middle">time (s)</text>')
    out.append(f'<text x="16" y="{MT + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MT + ph / 2:.2f})">{escape(ylabel + (" [log]" if log_y else ""))}</text>')
    for n, (name, (t, y)) in enumerate(series.items()):
        colour = PALETTE[n % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(t, tf(y)))
        out.append(f'<polyline class="series" data-policy="{escape(name)}" fill="none" stroke="{colour}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        ly = MT + 14 + 18 * n
        out.append(f'<line x1="{ML + pw + 12}" y1="{ly}" x2="{ML + pw + 36}" y2="{ly}" stroke="{colour}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ML + pw + 42}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot(csv_paths, kind: str, out_path, *, band=None, log_y: bool = False) -> Path:
    series = series_from_files(csv_paths, kind)
    svg = render_svg(series, kind, band=band, log_y=log_y)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(svg)
    return out_path
