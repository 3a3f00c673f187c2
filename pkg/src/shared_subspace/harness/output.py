"""CSV results and standalone SVG line charts."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from html import escape
from pathlib import Path

import numpy as np

from .sweep import ROW_FIELDS, ResultRow

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def emit_csv(rows, path) -> Path:
    """Write rows with the ResultRow header, 17-significant-digit floats, LF endings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ROW_FIELDS)
            for row in rows:
                writer.writerow([_cell(getattr(row, name)) for name in ROW_FIELDS])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


_INT_FIELDS = {"seed", "E", "n1", "n2", "d", "k"}
_STR_FIELDS = {"method", "dk_holds"}


def read_csv(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, strict=True)
        if reader.fieldnames != ROW_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for rec in reader:
            vals = {}
            for name in ROW_FIELDS:
                raw = rec[name]
                if name in _STR_FIELDS:
                    vals[name] = raw
                elif name in _INT_FIELDS:
                    vals[name] = int(raw)
                else:
                    vals[name] = float(raw)
            rows.append(ResultRow(**vals))
    return rows


def summarise(rows, x_field, y_field, group_field):
    """``{group: [(x, q25, median, q75), ...]}`` with x ascending; NaNs dropped."""
    if not rows:
        raise ValueError("no rows to summarise")
    for name in (x_field, y_field, group_field):
        if name not in ROW_FIELDS:
            raise ValueError(f"unknown field {name!r}")
    buckets = defaultdict(lambda: defaultdict(list))
    for row in rows:
        y = float(getattr(row, y_field))
        if math.isnan(y):
            continue
        buckets[getattr(row, group_field)][float(getattr(row, x_field))].append(y)
    out = {}
    for group in sorted(buckets, key=str):
        series = []
        for x in sorted(buckets[group]):
            q25, med, q75 = np.percentile(buckets[group][x], [25, 50, 75])
            series.append((x, float(q25), float(med), float(q75)))
        out[group] = series
    return out


def emit_plot(rows, x_field, y_field, group_field, path, log_x=False, log_y=False, title=None) -> Path:
    """Median line per group with a shaded interquartile band, as standalone SVG."""
    series = summarise(rows, x_field, y_field, group_field)
    width, height = 640, 420
    left, right, top, bottom = 80, 160, 40, 60
    pw, ph = width - left - right, height - top - bottom

    xs = [p[0] for s in series.values() for p in s]
    ys = [v for s in series.values() for p in s for v in p[1:]]
    if log_x and min(xs) <= 0 or log_y and min(ys) <= 0:
        raise ValueError("log scale needs positive values")
    fx = math.log10 if log_x else (lambda v: v)
    fy = math.log10 if log_y else (lambda v: v)
    x0, x1 = fx(min(xs)), fx(max(xs))
    y0, y1 = fy(min(ys)), fy(max(ys))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = abs(y0) * 0.1 or 1.0
        y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (fx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (fy(v) - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="{top - 15}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i in range(5):
        tx = x0 + (x1 - x0) * i / 4
        ty = y0 + (y1 - y0) * i / 4
        xv = 10**tx if log_x else tx
        yv = 10**ty if log_y else ty
        gx = left + pw * i / 4
        gy = top + ph - ph * i / 4
        parts.append(f'<line x1="{gx:.2f}" y1="{top + ph}" x2="{gx:.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        parts.append(f'<text x="{gx:.2f}" y="{top + ph + 18}" text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<line x1="{left - 5}" y1="{gy:.2f}" x2="{left}" y2="{gy:.2f}" stroke="#444"/>')
        parts.append(f'<text x="{left - 8}" y="{gy + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 15}" text-anchor="middle">{escape(x_field)}</text>')
    parts.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2})">{escape(y_field)} (median, IQR)</text>'
    )
    for i, (group, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{px(x):.2f},{py(q75):.2f}" for x, _, _, q75 in pts]
        lower = [f"{px(x):.2f},{py(q25):.2f}" for x, q25, _, _ in reversed(pts)]
        parts.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{px(x):.2f},{py(m):.2f}" for x, _, m, _ in pts)
        parts.append(f'<polyline class="series" data-group="{escape(str(group))}" points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 10 + 18 * i
        parts.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text class="legend" x="{left + pw + 40}" y="{ly + 4}">{escape(str(group))}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
