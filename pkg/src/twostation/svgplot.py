"""Tiny static SVG writer: axes, bars and polylines. Output is deterministic."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 20, 36, 48
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#000000")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    _bars: list = field(default_factory=list)
    _lines: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def bars(self, left, right, height, color=PALETTE[0]):
        self._bars.append((np.asarray(left, float), np.asarray(right, float), np.asarray(height, float), color))

    def line(self, x, y, color=PALETTE[3], label=""):
        self._lines.append((np.asarray(x, float), np.asarray(y, float), color, label))

    def _limits(self):
        xs, ys = [], [0.0]
        for left, right, h, _ in self._bars:
            xs += [left.min(), right.max()]
            ys.append(h.max())
        for x, y, _, _ in self._lines:
            xs += [x.min(), x.max()]
            ys += [y.min(), y.max()]
        xlo, xhi = (min(xs), max(xs)) if xs else (0.0, 1.0)
        ylo, yhi = min(ys), max(ys)
        if xhi <= xlo:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi <= ylo:
            yhi = ylo + 1.0
        pad = 0.05 * (yhi - ylo)
        return xlo, xhi, (ylo - pad if ylo < 0 else ylo), yhi + pad

    def render(self) -> str:
        xlo, xhi, ylo, yhi = self._limits()
        pw = WIDTH - MARGIN_L - MARGIN_R
        ph = HEIGHT - MARGIN_T - MARGIN_B

        def sx(x):
            return MARGIN_L + (x - xlo) / (xhi - xlo) * pw

        def sy(y):
            return MARGIN_T + ph - (y - ylo) / (yhi - ylo) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        ]
        for left, right, h, color in self._bars:
            for a, b, v in zip(left, right, h):
                out.append(
                    f'<rect x="{_fmt(sx(a))}" y="{_fmt(sy(v))}" width="{_fmt(max(sx(b) - sx(a), 0.5))}" '
                    f'height="{_fmt(sy(0) - sy(v))}" fill="{color}" fill-opacity="0.6" stroke="white" stroke-width="0.5"/>'
                )
        for x, y, color, _ in self._lines:
            pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        # axes
        x0, y0 = MARGIN_L, MARGIN_T + ph
        out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
        for t in _ticks(xlo, xhi):
            out.append(f'<line x1="{_fmt(sx(t))}" y1="{y0}" x2="{_fmt(sx(t))}" y2="{y0 + 4}" stroke="black"/>')
            out.append(f'<text x="{_fmt(sx(t))}" y="{y0 + 16}" text-anchor="middle">{t:.4g}</text>')
        for t in _ticks(ylo, yhi):
            out.append(f'<line x1="{x0 - 4}" y1="{_fmt(sy(t))}" x2="{x0}" y2="{_fmt(sy(t))}" stroke="black"/>')
            out.append(f'<text x="{x0 - 6}" y="{_fmt(sy(t) + 4)}" text-anchor="end">{t:.4g}</text>')
        out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="14" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.1f})">{escape(self.ylabel)}</text>'
        )
        legend_y = MARGIN_T + 12
        for _, _, color, label in self._lines:
            if label:
                out.append(f'<line x1="{x0 + pw - 150}" y1="{legend_y - 4}" x2="{x0 + pw - 130}" y2="{legend_y - 4}" stroke="{color}" stroke-width="2"/>')
                out.append(f'<text x="{x0 + pw - 125}" y="{legend_y}">{escape(label)}</text>')
                legend_y += 14
        for note in self.notes:
            out.append(f'<text x="{x0 + 8}" y="{legend_y}">{escape(note)}</text>')
            legend_y += 14
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.render())
