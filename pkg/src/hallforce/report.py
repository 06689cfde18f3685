"""Deterministic SVG plots with companion CSVs of the plotted points."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import DomainError

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=150, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    log: bool = False

    def map(self, v, a, b):
        v = np.asarray(v, dtype=float)
        if self.log:
            v, lo, hi = np.log10(v), math.log10(self.lo), math.log10(self.hi)
        else:
            lo, hi = self.lo, self.hi
        return a + (v - lo) / (hi - lo) * (b - a)

    def ticks(self) -> list[float]:
        if self.log:
            return [10.0**k for k in range(math.floor(math.log10(self.lo)), math.ceil(math.log10(self.hi)) + 1)
                    if self.lo <= 10.0**k <= self.hi]
        return [float(v) for v in np.linspace(self.lo, self.hi, 6)]


def _span(values, log: bool) -> Axis:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if log:
        v = v[v > 0]
    if v.size == 0:
        return Axis(1.0, 10.0, log) if log else Axis(0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    if log:
        lo, hi = 10 ** math.floor(math.log10(lo)), 10 ** math.ceil(math.log10(hi))
        if lo == hi:
            hi = lo * 10
    else:
        pad = 0.05 * (hi - lo) if hi > lo else max(abs(lo), 1.0) * 0.5
        lo, hi = lo - pad, hi + pad
    return Axis(lo, hi, log)


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


class Canvas:
    def __init__(self, title: str, xaxis: Axis, yaxis: Axis, xlabel: str, ylabel: str):
        self.x, self.y = xaxis, yaxis
        self.parts = []
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        p = self.parts
        p.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
        p.append(f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
        p.append(
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{self.y0 - self.y1}" '
            'fill="none" stroke="black"/>'
        )
        for t in xaxis.ticks():
            px = _num(float(xaxis.map(t, self.x0, self.x1)))
            p.append(f'<line x1="{px}" y1="{self.y0}" x2="{px}" y2="{self.y0 + 4}" stroke="black"/>')
            p.append(f'<text x="{px}" y="{self.y0 + 16}" text-anchor="middle" font-size="10">{_tick_label(t)}</text>')
        for t in yaxis.ticks():
            py = _num(float(yaxis.map(t, self.y0, self.y1)))
            p.append(f'<line x1="{self.x0 - 4}" y1="{py}" x2="{self.x0}" y2="{py}" stroke="black"/>')
            p.append(f'<text x="{self.x0 - 6}" y="{py}" text-anchor="end" font-size="10" dy="3">{_tick_label(t)}</text>')
        p.append(f'<text x="{(self.x0 + self.x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
        p.append(
            f'<text x="16" y="{(self.y0 + self.y1) / 2:.0f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {(self.y0 + self.y1) / 2:.0f})">{escape(ylabel)}</text>'
        )
        self.legend = []

    def points(self, xs, ys, color, label):
        px = self.x.map(xs, self.x0, self.x1)
        py = self.y.map(ys, self.y0, self.y1)
        for a, b in zip(px, py):
            self.parts.append(f'<circle cx="{_num(a)}" cy="{_num(b)}" r="2" fill="{color}" fill-opacity="0.6"/>')
        self.legend.append((label, color))

    def line(self, xs, ys, color, label, dashed=False):
        px = self.x.map(xs, self.x0, self.x1)
        py = self.y.map(ys, self.y0, self.y1)
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(px, py))
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1"{dash}/>')
        self.legend.append((label, color))

    def band(self, xs, lo, hi, color, label):
        px = self.x.map(xs, self.x0, self.x1)
        top = self.y.map(hi, self.y0, self.y1)
        bot = self.y.map(lo, self.y0, self.y1)
        pts = [f"{_num(a)},{_num(b)}" for a, b in zip(px, top)] + [
            f"{_num(a)},{_num(b)}" for a, b in zip(px[::-1], bot[::-1])
        ]
        self.parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        self.legend.append((label, color))

    def svg(self, comment: str = "") -> str:
        for i, (label, color) in enumerate(self.legend):
            y = self.y1 + 12 + 16 * i
            self.parts.append(f'<rect x="{self.x1 + 10}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{self.x1 + 26}" y="{y + 1}" font-size="11">{escape(label)}</text>')
        head = '<?xml version="1.0" encoding="UTF-8"?>\n'
        if comment:
            # "--" may not appear inside an XML comment
            head += f"<!-- {escape(comment).replace('--', '- -')} -->\n"
        body = "\n".join(self.parts)
        return (
            head
            + f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            + f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n{body}\n</svg>\n'
        )


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


SWEEP_PLOT_COLUMNS = ("index", "material", "range_x_n", "sensitivity_x_g_per_n")


def sweep_report(rows: list[dict], log_axes: bool = True, comment: str = "") -> tuple[str, str]:
    """Force sensitivity against force range for feasible sweep rows, one
    color per material. Returns ``(svg, csv)``; the CSV holds the plotted
    values exactly as they appear in the input."""
    pts = [r for r in rows if r.get("feasible") == "1"]
    if not pts:
        raise DomainError("sweep report needs at least one feasible row")
    xs = np.array([float(r["range_x_n"]) for r in pts])
    ys = np.array([float(r["sensitivity_x_g_per_n"]) for r in pts])
    log = log_axes and bool(np.all(xs > 0) and np.all(ys > 0))
    canvas = Canvas("Design sweep", _span(xs, log), _span(ys, log), "force range [N]", "force sensitivity [G/N]")
    materials = sorted({r["material"] for r in pts})
    for k, mat in enumerate(materials):
        sel = np.array([r["material"] == mat for r in pts])
        canvas.points(xs[sel], ys[sel], PALETTE[k % len(PALETTE)], mat)
    table = _csv(SWEEP_PLOT_COLUMNS, [[r[c] for c in SWEEP_PLOT_COLUMNS] for r in pts])
    return canvas.svg(comment), table


def timeseries_report(time, truth, series: dict, sigma=None, axis_label="F_z", comment: str = "") -> tuple[str, str]:
    """Ground truth and model estimates over time, with an optional
    +/- 1 sigma band around the first series that has one."""
    t = np.asarray(time, dtype=float)
    if t.size == 0:
        raise DomainError("time series report needs samples")
    allv = [np.asarray(truth, dtype=float)] + [np.asarray(v, dtype=float) for v in series.values()]
    band = None
    if sigma is not None:
        name, s = sigma
        mu = np.asarray(series[name], dtype=float)
        band = (mu - s, mu + s)
        allv += list(band)
    canvas = Canvas("Force estimates", _span(t, False), _span(np.concatenate(allv), False), "time [s]", f"{axis_label} [N]")
    if band is not None:
        canvas.band(t, band[0], band[1], PALETTE[2], f"{sigma[0]} +/- sigma")
    canvas.line(t, truth, "#000000", "ground truth")
    for k, (name, v) in enumerate(series.items()):
        canvas.line(t, v, PALETTE[k % len(PALETTE)], name, dashed=k > 0)
    header = ["time_s", "truth_n"] + [f"{n}_n" for n in series]
    cols = [t, np.asarray(truth, dtype=float)] + [np.asarray(v, dtype=float) for v in series.values()]
    if band is not None:
        header.append(f"{sigma[0]}_sigma_n")
        cols.append(np.asarray(sigma[1], dtype=float))
    rows = [[repr(float(c[i])) for c in cols] for i in range(len(t))]
    return canvas.svg(comment), _csv(header, rows)
