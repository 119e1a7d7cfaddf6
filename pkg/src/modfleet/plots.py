"""Self-contained SVG figures written from the experiment CSVs.

Plain string assembly with fixed number formatting, so the same CSV always
produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .experiments import read_modes, read_sweep

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _n(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo, hi, n=5):
    step = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(step)) if step > 0 else 1.0
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= step:
            step = m * mag
            break
    start = np.ceil(lo / step) * step
    return [round(float(v), 10) for v in np.arange(start, hi + step * 1e-9, step)]


class _Canvas:
    def __init__(self, xlim, ylim, xlabel, ylabel, title):
        self.xlim, self.ylim = xlim, ylim
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            f'font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{_n(LEFT + (W - LEFT - RIGHT) / 2)}" y="18" text-anchor="middle" font-size="14">{title}</text>',
            f'<text x="{_n(LEFT + (W - LEFT - RIGHT) / 2)}" y="{H - 15}" text-anchor="middle">{xlabel}</text>',
            f'<text x="18" y="{_n(TOP + (H - TOP - BOTTOM) / 2)}" text-anchor="middle" '
            f'transform="rotate(-90 18 {_n(TOP + (H - TOP - BOTTOM) / 2)})">{ylabel}</text>',
        ]

    def x(self, v):
        a, b = self.xlim
        return LEFT + (v - a) / (b - a) * (W - LEFT - RIGHT)

    def y(self, v):
        a, b = self.ylim
        return H - BOTTOM - (v - a) / (b - a) * (H - TOP - BOTTOM)

    def axes(self, xticks=None, xlabels=None):
        x0, x1 = self.x(self.xlim[0]), self.x(self.xlim[1])
        y0, y1 = self.y(self.ylim[0]), self.y(self.ylim[1])
        p = self.parts
        p.append(f'<rect x="{_n(x0)}" y="{_n(y1)}" width="{_n(x1 - x0)}" height="{_n(y0 - y1)}" fill="none" stroke="black"/>')
        for t in _ticks(*self.ylim):
            yy = self.y(t)
            p.append(f'<line x1="{_n(x0 - 4)}" y1="{_n(yy)}" x2="{_n(x0)}" y2="{_n(yy)}" stroke="black"/>')
            p.append(f'<text x="{_n(x0 - 7)}" y="{_n(yy + 4)}" text-anchor="end">{t:g}</text>')
        xticks = _ticks(*self.xlim) if xticks is None else xticks
        for i, t in enumerate(xticks):
            xx = self.x(t)
            label = xlabels[i] if xlabels is not None else f"{t:g}"
            p.append(f'<line x1="{_n(xx)}" y1="{_n(y0)}" x2="{_n(xx)}" y2="{_n(y0 + 4)}" stroke="black"/>')
            p.append(f'<text x="{_n(xx)}" y="{_n(y0 + 17)}" text-anchor="middle">{label}</text>')

    def legend(self, labels):
        x = W - RIGHT + 15
        for i, lab in enumerate(labels):
            y = TOP + 10 + 20 * i
            c = COLORS[i % len(COLORS)]
            self.parts.append(f'<rect x="{x}" y="{y - 9}" width="14" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{x + 20}" y="{y}" class="legend">{lab}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def sweep_svg(rows) -> str:
    """Mean normalized service time against arrival rate, one curve and std band per strategy."""
    strategies = list(dict.fromkeys(r[0] for r in rows))
    rates = np.array([r[1] for r in rows])
    lo = np.array([r[2] - r[3] for r in rows])
    hi = np.array([r[2] + r[3] for r in rows])
    pad = 0.05 * (hi.max() - lo.min() or 1.0)
    cv = _Canvas((0.0, float(rates.max()) + 0.05), (max(0.0, float(lo.min()) - pad), float(hi.max()) + pad),
                 "arrival rate (ped/min/vehicle)", "normalized service time", "Service time vs arrival rate")
    cv.axes()
    for i, s in enumerate(strategies):
        pts = [r for r in rows if r[0] == s]
        c = COLORS[i % len(COLORS)]
        upper = " ".join(f"{_n(cv.x(r[1]))},{_n(cv.y(r[2] + r[3]))}" for r in pts)
        lower = " ".join(f"{_n(cv.x(r[1]))},{_n(cv.y(r[2] - r[3]))}" for r in reversed(pts))
        cv.parts.append(f'<polygon points="{upper} {lower}" fill="{c}" fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{_n(cv.x(r[1]))},{_n(cv.y(r[2]))}" for r in pts)
        cv.parts.append(f'<polyline points="{line}" fill="none" stroke="{c}" stroke-width="2" data-label="{s}"/>')
    cv.legend(strategies)
    return cv.render()


def modes_svg(modes, rows) -> str:
    """Grouped bars of mean rating per preference mode, one bar per strategy."""
    groups = list(modes)
    n_s = len(rows)
    cv = _Canvas((-0.5, len(groups) - 0.5), (1.0, 5.0), "preference mode", "mean rating (stars)", "Ratings by preference mode")
    cv.axes(xticks=list(range(len(groups))), xlabels=groups)
    width = 0.8 / max(n_s, 1)
    for i, (s, vals) in enumerate(rows):
        c = COLORS[i % len(COLORS)]
        for g, v in enumerate(vals):
            x0 = cv.x(g - 0.4 + i * width)
            x1 = cv.x(g - 0.4 + (i + 1) * width)
            y = cv.y(max(1.0, v))
            cv.parts.append(f'<rect x="{_n(x0)}" y="{_n(y)}" width="{_n(x1 - x0)}" height="{_n(cv.y(1.0) - y)}" '
                            f'fill="{c}" data-label="{s}"/>')
    cv.legend([s for s, _ in rows])
    return cv.render()


def plot_sweep(csv_path, svg_path) -> Path:
    Path(svg_path).write_text(sweep_svg(read_sweep(csv_path)))
    return Path(svg_path)


def plot_modes(csv_path, svg_path) -> Path:
    header, rows = read_modes(csv_path)
    Path(svg_path).write_text(modes_svg(header, rows))
    return Path(svg_path)
