"""Deterministic SVG charts: log-survival with CI band and bound curves, and
log-log scaling plots with a fitted slope."""

from __future__ import annotations

import math
import warnings
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 30, 40
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class _Axes:
    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        self.x0, self.x1 = _span(x)
        self.y0, self.y1 = _span(y)

    def px(self, x: float) -> float:
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)

    def py(self, y: float) -> float:
        return HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)


def _span(v: np.ndarray) -> tuple[float, float]:
    if len(v) == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12 * max(1.0, abs(lo)):
        pad = max(abs(lo) * 0.1, 1.0)
        return lo - pad, hi + pad
    return lo, hi


def _polyline(ax: _Axes, x, y, color: str, dash: bool = False) -> str:
    pts = [f"{_num(ax.px(a))},{_num(ax.py(b))}" for a, b in zip(x, y)
           if math.isfinite(a) and math.isfinite(b)]
    if not pts:
        return ""
    style = ' stroke-dasharray="4 3"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{style} '
            f'points="{" ".join(pts)}"/>')


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    x_end, y_end = WIDTH - RIGHT, HEIGHT - BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{LEFT}" y1="{y_end}" x2="{x_end}" y2="{y_end}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{y_end}" stroke="black"/>']
    for k in range(5):
        xv = ax.x0 + (ax.x1 - ax.x0) * k / 4
        yv = ax.y0 + (ax.y1 - ax.y0) * k / 4
        out.append(f'<text x="{_num(ax.px(xv))}" y="{y_end + 14}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{LEFT - 4}" y="{_num(ax.py(yv) + 4)}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{(LEFT + x_end) // 2}" y="{HEIGHT - 6}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(TOP + y_end) // 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(TOP + y_end) // 2})">{escape(ylabel)}</text>')
    return out


def _legend(names: Sequence[str], colors: Sequence[str]) -> list[str]:
    out = []
    for k, (name, color) in enumerate(zip(names, colors)):
        y = TOP + 12 + 14 * k
        out.append(f'<line x1="{WIDTH - RIGHT - 120}" y1="{y - 4}" x2="{WIDTH - RIGHT - 104}" '
                   f'y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT - 100}" y="{y}">{escape(name)}</text>')
    return out


def _log10(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), -np.inf)


def tail_chart(t, survival, ci_low, ci_high, curves: dict[str, Sequence[float]] | None = None,
               title: str = "tail") -> str:
    """``log10`` survival against ``t`` with the CI band and optional bound curves."""
    t = np.asarray(t, dtype=float)
    ls, lo, hi = _log10(survival), _log10(ci_low), _log10(ci_high)
    curves = {k: _log10(v) for k, v in (curves or {}).items()}
    finite = np.concatenate([ls, hi] + list(curves.values()))
    floor = np.min(np.concatenate([hi[np.isfinite(hi)], [0.0]])) - 1.0
    ax = _Axes(t, np.clip(finite[np.isfinite(finite)], floor, None))
    out = _frame(ax, title, "t", "log10 P(Z - EZ >= t)")
    band_lo = np.where(np.isfinite(lo), lo, ax.y0)
    upper = [f"{_num(ax.px(a))},{_num(ax.py(b))}" for a, b in zip(t, hi) if math.isfinite(b)]
    lower = [f"{_num(ax.px(a))},{_num(ax.py(max(b, ax.y0)))}"
             for a, b, c in zip(t[::-1], band_lo[::-1], hi[::-1]) if math.isfinite(c)]
    if upper:
        out.append(f'<polygon fill="{PALETTE[0]}" fill-opacity="0.2" stroke="none" '
                   f'points="{" ".join(upper + lower)}"/>')
    out.append(_polyline(ax, t, ls, PALETTE[0]))
    names, colors = ["empirical"], [PALETTE[0]]
    for k, (name, v) in enumerate(sorted(curves.items())):
        color = PALETTE[1 + k % (len(PALETTE) - 1)]
        out.append(_polyline(ax, t, np.maximum(v, ax.y0), color, dash=True))
        names.append(name)
        colors.append(color)
    out += _legend(names, colors)
    out.append("</svg>")
    return "\n".join(s for s in out if s) + "\n"


def scaling_chart(x, y, title: str = "scaling", xlabel: str = "x", ylabel: str = "y",
                  slope: float | None = None) -> str:
    """Log-log scatter with a least-squares line and its slope in the title."""
    lx, ly = np.log10(np.asarray(x, dtype=float)), np.log10(np.asarray(y, dtype=float))
    ok = np.isfinite(lx) & np.isfinite(ly)
    lx, ly = lx[ok], ly[ok]
    fit = None
    if len(lx) >= 2 and np.ptp(lx) > 0:
        fit = np.polyfit(lx, ly, 1)
        slope = float(fit[0]) if slope is None else slope
    label = title if slope is None else f"{title} (slope {slope:.3f})"
    ax = _Axes(lx, ly)
    out = _frame(ax, label, f"log10 {xlabel}", f"log10 {ylabel}")
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{_num(ax.px(a))}" cy="{_num(ax.py(b))}" r="3" fill="{PALETTE[0]}"/>')
    if fit is not None:
        ends = np.array([lx.min(), lx.max()])
        out.append(_polyline(ax, ends, np.polyval(fit, ends), PALETTE[1], dash=True))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(report, output_dir) -> list[str]:
    """Write the charts that fit the report's records; returns the file names."""
    recs = report.records
    if not recs:
        warnings.warn("no records to plot", RuntimeWarning, stacklevel=2)
        return []
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    keys = set(recs[0])
    tkey = "t" if "t" in keys else "u" if "u" in keys else None
    if tkey and {"survival", "ci_low", "ci_high"} <= keys:
        col = lambda k: [r[k] for r in recs]
        curves = {k[4:] if k.startswith("rhs_") else k: col(k)
                  for k in sorted(keys) if k == "rhs" or k.startswith("rhs_")}
        svg = tail_chart(col(tkey), col("survival"), col("ci_low"), col("ci_high"), curves,
                         title=report.name)
        (out / "tail.svg").write_text(svg)
        files.append("tail.svg")
    if {"N", "delta", "median"} <= keys:
        for d in sorted({r["delta"] for r in recs}):
            rows = [r for r in recs if r["delta"] == d]
            name = f"scaling_delta_{d:g}.svg"
            (out / name).write_text(scaling_chart([r["N"] for r in rows], [r["median"] for r in rows],
                                                  f"delta={d:g}", "N", "median error"))
            files.append(name)
    return files
