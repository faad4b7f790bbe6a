"""Dependency-free SVG line plots for sweep output.

Just enough plotting to render the indicator and angle-trajectory figures:
stacked panels of polylines with axes, ticks, labels and a small legend.
"""

from __future__ import annotations

import math

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f"]

_W, _PANEL_H, _ML, _MR, _MT, _MB = 640, 220, 64, 16, 28, 40


def _ticks(lo, hi, n=5):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    t0 = math.ceil(lo / step) * step
    out = []
    t = t0
    while t <= hi + 1e-12 * max(abs(hi), 1.0):
        out.append(round(t, 12))
        t += step
    return out or [lo]


def _fmt(x):
    return format(x, ".6g")


class Panel:
    def __init__(self, ylabel, series):
        """series: list of (label, [(x, y), ...])."""
        self.ylabel = ylabel
        self.series = series


def render(panels, xlabel, title=""):
    """Render stacked panels into an SVG 1.1 document string."""
    height = _MT + len(panels) * _PANEL_H + _MB
    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
               f'width="{_W}" height="{height}" font-family="monospace" font-size="11">')
    out.append(f'<rect width="{_W}" height="{height}" fill="white"/>')
    if title:
        out.append(f'<text x="{_W/2:.1f}" y="16" text-anchor="middle">{title}</text>')
    for ip, panel in enumerate(panels):
        top = _MT + ip * _PANEL_H
        bottom = top + _PANEL_H - 34
        left, right = _ML, _W - _MR
        xs = [p[0] for _, pts in panel.series for p in pts if math.isfinite(p[1])]
        ys = [p[1] for _, pts in panel.series for p in pts if math.isfinite(p[1])]
        if not xs:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            y1 = y0 + 1.0
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

        def X(x):
            return left + (x - x0) / (x1 - x0) * (right - left)

        def Y(y):
            return bottom - (y - y0) / (y1 - y0) * (bottom - top - 8)

        out.append(f'<rect x="{left}" y="{top}" width="{right-left}" '
                   f'height="{bottom-top}" fill="none" stroke="black"/>')
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{X(t):.1f}" y1="{bottom}" x2="{X(t):.1f}" '
                       f'y2="{bottom+4}" stroke="black"/>')
            out.append(f'<text x="{X(t):.1f}" y="{bottom+16}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<line x1="{left-4}" y1="{Y(t):.1f}" x2="{left}" '
                       f'y2="{Y(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{left-6}" y="{Y(t)+4:.1f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="14" y="{(top+bottom)/2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {(top+bottom)/2:.1f})">{panel.ylabel}</text>')
        for k, (label, pts) in enumerate(panel.series):
            color = _COLORS[k % len(_COLORS)]
            runs, cur = [], []
            for x, y in pts:
                if math.isfinite(y):
                    cur.append(f"{X(x):.2f},{Y(y):.2f}")
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            for run in runs:
                out.append(f'<polyline points="{" ".join(run)}" fill="none" '
                           f'stroke="{color}" stroke-width="1.3"/>')
            lx = left + 8 + 110 * k
            out.append(f'<line x1="{lx}" y1="{top+10}" x2="{lx+16}" y2="{top+10}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx+20}" y="{top+14}">{label}</text>')
    out.append(f'<text x="{_W/2:.1f}" y="{height-8}" text-anchor="middle">{xlabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def indicator_figure(records):
    hx = [r.h for r in records]
    return render([
        Panel("per-site eigenvalues", [
            ("lambda1", list(zip(hx, [r.lambda1 for r in records]))),
            ("lambda2", list(zip(hx, [r.lambda2 for r in records]))),
        ]),
        Panel("d lambda1 / dh", [
            ("susceptibility", list(zip(hx, [r.dlambda_dh for r in records]))),
        ]),
        Panel("nonlocal gap", [
            ("gap", list(zip(hx, [r.gap for r in records]))),
        ]),
    ], xlabel="h", title="Bell transfer spectrum vs field")


def angle_figure(records):
    series_t, series_p = [], []
    u = max((r.settings.u for r in records if r.settings is not None), default=0)
    names = []
    for k in range(1, u + 1):
        names += [(f"a{k}", 4 * (k - 1)), (f"a'{k}", 4 * (k - 1) + 2)]
    for label, off in names:
        ts, ps = [], []
        for r in records:
            rows = r.angle_rows()
            if not rows:
                continue
            flat = [v for row in rows for v in row]
            ts.append((r.h, flat[off] / math.pi))
            ps.append((r.h, flat[off + 1] / math.pi))
        series_t.append((f"theta {label}", ts))
        series_p.append((f"phi {label}", ps))
    return render([
        Panel("theta / pi", series_t),
        Panel("phi / pi", series_p),
    ], xlabel="h", title="Optimal measurement angles vs field")
