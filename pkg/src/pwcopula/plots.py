"""Deterministic SVG figures: direction/speed arrow maps, scalar surfaces, DIC scatter."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# a short perceptually ordered ramp (dark blue -> teal -> yellow)
_RAMP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def _f(v) -> str:
    return f"{float(v):.3f}"


def _svg(width, height, body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _write(path, text) -> Path:
    path = Path(path)
    path.write_text(text)
    return path


def color_bins(values, bins: int = 10, lo=None, hi=None):
    """Bin index and hex colour per value. A constant field maps to a single bin."""
    v = np.asarray(values, dtype=float)
    lo = float(np.min(v)) if lo is None else lo
    hi = float(np.max(v)) if hi is None else hi
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        idx = np.zeros(v.shape, dtype=int)
    else:
        idx = np.clip(((v - lo) / (hi - lo) * bins).astype(int), 0, bins - 1)
    t = (idx + 0.5) / bins * (len(_RAMP) - 1)
    j = np.minimum(t.astype(int), len(_RAMP) - 2)
    rgb = _RAMP[j] + (t - j)[..., None] * (_RAMP[j + 1] - _RAMP[j])
    hexes = ["#%02x%02x%02x" % tuple(int(round(c)) for c in px) for px in rgb.reshape(-1, 3)]
    return idx, np.array(hexes).reshape(v.shape)


def _frame(size, pad):
    return [f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="#444"/>']


def quiver_svg(path, sites, phi, speed, speed_lo=None, speed_hi=None, size: int = 600, title: str = "") -> Path:
    """Arrow map on the unit square. ``phi`` is measured counter-clockwise from the x axis;
    arrow length is proportional to ``speed``. Optional quantile speeds are drawn as
    thin lighter arrows."""
    sites = np.asarray(sites, dtype=float).reshape(-1, 2)
    phi, speed = np.asarray(phi, float), np.asarray(speed, float)
    pad = 30
    allv = [speed] + [np.asarray(s, float) for s in (speed_lo, speed_hi) if s is not None]
    vmax = max(float(np.max(np.concatenate(allv))), 1e-12)
    scale = 0.06 * size / vmax
    body = _frame(size, pad)
    if title:
        body.append(f'<text x="{pad}" y="{pad - 10}" font-size="14">{title}</text>')

    def arrow(x, y, a, s, stroke, width):
        x0, y0 = pad + x * size, pad + (1 - y) * size
        x1, y1 = x0 + s * scale * np.cos(a), y0 - s * scale * np.sin(a)
        hx = [x1 - 4 * np.cos(a - 0.4), x1 - 4 * np.cos(a + 0.4)]
        hy = [y1 + 4 * np.sin(a - 0.4), y1 + 4 * np.sin(a + 0.4)]
        return (f'<path d="M{_f(x0)},{_f(y0)} L{_f(x1)},{_f(y1)} M{_f(hx[0])},{_f(hy[0])} L{_f(x1)},{_f(y1)} '
                f'L{_f(hx[1])},{_f(hy[1])}" stroke="{stroke}" stroke-width="{width}" fill="none"/>')

    for i in range(sites.shape[0]):
        x, y = sites[i]
        for q in (speed_hi, speed_lo):
            if q is not None:
                body.append(arrow(x, y, phi[i], q[i], "#9ecae1", 0.8))
        body.append(arrow(x, y, phi[i], speed[i], "#08519c", 1.4))
    return _write(path, _svg(size + 2 * pad, size + 2 * pad, body))


def heatmap_svg(path, grid_x, grid_y, values, bins: int = 10, size: int = 500, title: str = "") -> Path:
    """Cell plot of ``values[j, i]`` at ``(grid_x[i], grid_y[j])`` on the unit square."""
    values = np.asarray(values, dtype=float)
    gx, gy = np.asarray(grid_x, float), np.asarray(grid_y, float)
    if values.shape != (gy.size, gx.size):
        raise ValueError("values must have shape (len(grid_y), len(grid_x))")
    pad = 30
    _, cols = color_bins(values, bins)
    cw, ch = size / gx.size, size / gy.size
    body = []
    if title:
        body.append(f'<text x="{pad}" y="{pad - 10}" font-size="14">{title}</text>')
    for j in range(gy.size):
        for i in range(gx.size):
            x = pad + i * cw
            y = pad + (gy.size - 1 - j) * ch
            body.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" fill="{cols[j, i]}"/>')
    lo, hi = float(values.min()), float(values.max())
    body += _frame(size, pad)
    body.append(f'<text x="{pad}" y="{size + 2 * pad - 8}" font-size="12">range {lo:.4g} to {hi:.4g}</text>')
    return _write(path, _svg(size + 2 * pad, size + 2 * pad, body))


def percent_above(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 100.0 * float(np.mean(y > x)) if x.size else float("nan")


def dic_scatter_svg(path, dic_true, dic_competitor, size: int = 400, title: str = "") -> Path:
    """DIC of the true model (x) against a competitor (y) with the share above the diagonal."""
    x, y = np.asarray(dic_true, float), np.asarray(dic_competitor, float)
    if x.size == 0 or x.shape != y.shape:
        raise ValueError("need matching, nonempty DIC vectors")
    pad = 40
    lo, hi = float(min(x.min(), y.min())), float(max(x.max(), y.max()))
    span = hi - lo if hi > lo else 1.0
    lo, hi = lo - 0.05 * span, hi + 0.05 * span

    def px(v):
        return pad + (v - lo) / (hi - lo) * size

    def py(v):
        return pad + size - (v - lo) / (hi - lo) * size

    body = _frame(size, pad)
    body.append(f'<line x1="{_f(px(lo))}" y1="{_f(py(lo))}" x2="{_f(px(hi))}" y2="{_f(py(hi))}" '
                f'stroke="#888" stroke-dasharray="4,3"/>')
    for a, b in zip(x, y):
        body.append(f'<circle cx="{_f(px(a))}" cy="{_f(py(b))}" r="3" fill="#08519c"/>')
    pct = percent_above(x, y)
    body.append(f'<text x="{pad + 8}" y="{pad + 18}" font-size="14">{pct:.0f}%</text>')
    if title:
        body.append(f'<text x="{pad}" y="{pad - 12}" font-size="14">{title}</text>')
    body.append(f'<text x="{pad + size / 2 - 30}" y="{size + 2 * pad - 8}" font-size="12">DIC true</text>')
    return _write(path, _svg(size + 2 * pad, size + 2 * pad, body))
