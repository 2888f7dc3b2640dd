"""CSV time series and self-contained SVG plots."""
from __future__ import annotations

import csv
import html
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

UNITS = {
    "time": "1/omega_a1",
    "time_periods": "2pi/omega_a1",
    "energy": "hbar*omega_a1",
    "norm": "1",
    "discarded": "1",
    "top_fock": "1",
    "max_bond": "count",
    "S1": "nats",
    "S12": "nats",
}


def column_unit(name: str) -> str:
    if name in UNITS:
        return UNITS[name]
    if name.startswith("x="):
        return "arb"
    return "1"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def emit_csv(records: Sequence[Mapping[str, float]], path: str | Path, columns: Sequence[str] | None = None) -> Path:
    """Write records as CSV with a ``name [unit]`` header row.

    Floats use 17 significant digits so a parse reproduces them exactly. An
    empty trajectory with explicit ``columns`` gives a header-only file.
    """
    path = Path(path)
    if columns is None:
        if not records:
            raise ValueError("columns required for an empty trajectory")
        columns = list(records[0].keys())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"{c} [{column_unit(c)}]" for c in columns])
            for rec in records:
                writer.writerow([_fmt(rec[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`emit_csv` into ``{column: values}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = [h.rsplit(" [", 1)[0] for h in rows[0]]
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


def emit_map_csv(times: Sequence[float], x: Sequence[float], values: Sequence[Sequence[float]], path: str | Path) -> Path:
    """Rows = time (in atomic periods), columns = positions."""
    cols = ["time_periods"] + [f"x={xx:.6g}" for xx in x]
    recs = []
    for t, row in zip(times, values):
        rec = {"time_periods": t / (2 * math.pi)}
        rec.update({c: v for c, v in zip(cols[1:], row)})
        recs.append(rec)
    return emit_csv(recs, path, cols)


# -- SVG --------------------------------------------------------------------

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]

# viridis anchors; luminance increases monotonically along the map
_CMAP = np.array([
    [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
    [31, 158, 137], [53, 183, 121], [110, 206, 88], [181, 222, 43], [253, 231, 37],
], dtype=float)


def colormap(v: float) -> str:
    v = min(max(v, 0.0), 1.0) * (len(_CMAP) - 1)
    i = min(int(v), len(_CMAP) - 2)
    c = _CMAP[i] + (v - i) * (_CMAP[i + 1] - _CMAP[i])
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def _check_finite(name: str, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        raise ValueError(f"non-finite value in {name} at index {tuple(int(i) for i in bad[0])}")
    return arr


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


class _Frame:
    def __init__(self, xlim, ylim, width=640, height=400, margin=(70, 20, 30, 55)):
        self.w, self.h = width, height
        self.ml, self.mr, self.mt, self.mb = margin
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        return self.ml + (v - lo) / ((hi - lo) or 1.0) * (self.w - self.ml - self.mr)

    def y(self, v):
        lo, hi = self.ylim
        return self.h - self.mb - (v - lo) / ((hi - lo) or 1.0) * (self.h - self.mt - self.mb)

    def axes(self, xlabel, ylabel, title):
        parts = []
        x0, x1 = self.ml, self.w - self.mr
        y0, y1 = self.h - self.mb, self.mt
        parts.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
        for t in _ticks(*self.xlim):
            px = self.x(t)
            parts.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="black"/>')
            parts.append(f'<text x="{px:.2f}" y="{y0 + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
        for t in _ticks(*self.ylim):
            py = self.y(t)
            parts.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
            parts.append(f'<text x="{x0 - 8}" y="{py + 4:.2f}" font-size="11" text-anchor="end">{t:g}</text>')
        parts.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{self.h - 12}" font-size="13" text-anchor="middle">{html.escape(xlabel)}</text>')
        parts.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" font-size="13" text-anchor="middle" '
                     f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{html.escape(ylabel)}</text>')
        if title:
            parts.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{self.mt - 8}" font-size="13" text-anchor="middle">{html.escape(title)}</text>')
        return parts


def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def line_plot(series: Mapping[str, tuple], path: str | Path, xlabel: str = "t/(2pi/omega_a1)",
              ylabel: str = "", title: str = "", markers: bool = False, dashed: Sequence[str] = ()) -> Path:
    """Overlay ``{label: (x, y)}`` curves (or scatter with ``markers``) in one SVG."""
    arrays = {}
    for label, (xs, ys) in series.items():
        arrays[label] = (_check_finite(f"{label} x", xs), _check_finite(f"{label} y", ys))
    allx = np.concatenate([a[0] for a in arrays.values()]) if arrays else np.zeros(1)
    ally = np.concatenate([a[1] for a in arrays.values()]) if arrays else np.zeros(1)
    ylo, yhi = float(ally.min()), float(ally.max())
    pad = 0.05 * (yhi - ylo or 1.0)
    fr = _Frame((float(allx.min()), float(allx.max())), (ylo - pad, yhi + pad), margin=(70, 150, 30, 55))
    body = fr.axes(xlabel, ylabel, title)
    for i, (label, (xs, ys)) in enumerate(arrays.items()):
        color = PALETTE[i % len(PALETTE)]
        if markers:
            for xv, yv in zip(xs, ys):
                body.append(f'<circle cx="{fr.x(xv):.2f}" cy="{fr.y(yv):.2f}" r="2.5" fill="none" stroke="{color}"/>')
        else:
            pts = " ".join(f"{fr.x(xv):.2f},{fr.y(yv):.2f}" for xv, yv in zip(xs, ys))
            dash = ' stroke-dasharray="6,4"' if label in dashed else ""
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = fr.mt + 16 * (i + 1)
        lx = fr.w - fr.mr + 10
        body.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{lx + 25}" y="{ly}" font-size="11">{html.escape(label)}</text>')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg(fr.w, fr.h, body))
    return path


def heatmap(x: Sequence[float], y: Sequence[float], values, path: str | Path, xlabel: str = "x/L",
            ylabel: str = "t/(2pi/omega_a1)", title: str = "", colorbar_label: str = "arb. units") -> Path:
    """Heatmap of ``values[i, j]`` at ``(x[j], y[i])`` with a monotone-luminance colormap."""
    z = _check_finite("heatmap values", values)
    x = _check_finite("heatmap x", x)
    y = _check_finite("heatmap y", y)
    if z.shape != (y.size, x.size):
        raise ValueError(f"heatmap values shape {z.shape} does not match ({y.size}, {x.size})")
    zlo, zhi = float(z.min()), float(z.max())
    span = (zhi - zlo) or 1.0
    fr = _Frame((float(x.min()), float(x.max())), (float(y.min()), float(y.max())), width=560, height=480,
                margin=(70, 90, 30, 55))
    body = []
    dx = (fr.x(x[-1]) - fr.x(x[0])) / max(x.size - 1, 1)
    dy = (fr.y(y[0]) - fr.y(y[-1])) / max(y.size - 1, 1)
    for i in range(y.size):
        for j in range(x.size):
            body.append(f'<rect x="{fr.x(x[j]) - dx / 2:.2f}" y="{fr.y(y[i]) - dy / 2:.2f}" '
                        f'width="{dx + 0.3:.2f}" height="{dy + 0.3:.2f}" fill="{colormap((z[i, j] - zlo) / span)}"/>')
    body += fr.axes(xlabel, ylabel, title)
    cx = fr.w - fr.mr + 20
    for k in range(50):
        yy = fr.mt + (fr.h - fr.mt - fr.mb) * k / 50
        body.append(f'<rect x="{cx}" y="{yy:.2f}" width="15" height="{(fr.h - fr.mt - fr.mb) / 50 + 0.5:.2f}" '
                    f'fill="{colormap(1 - k / 49)}"/>')
    body.append(f'<text x="{cx + 20}" y="{fr.mt + 10}" font-size="10">{zhi:.3g}</text>')
    body.append(f'<text x="{cx + 20}" y="{fr.h - fr.mb}" font-size="10">{zlo:.3g}</text>')
    body.append(f'<text x="{cx}" y="{fr.h - fr.mb + 18}" font-size="10">{html.escape(colorbar_label)}</text>')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg(fr.w, fr.h, body))
    return path
