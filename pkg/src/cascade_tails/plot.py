"""Minimal deterministic SVG writer for log-log tail plots.

The SVG is assembled as text with fixed number formatting, so identical
inputs always give identical bytes.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

WIDTH, HEIGHT, PAD = 480, 360, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def tail_plot_svg(x, log_prob, *, gamma_ref: float | None = None, title: str = "") -> str:
    """SVG text: points (log x, log(-log p)), least-squares line and an optional reference slope."""
    from .stats_fit import fit_gamma

    x = np.asarray(x, dtype=float)
    lp = np.asarray(log_prob, dtype=float)
    if x.size < 2:
        raise ConfigError("a tail plot needs at least 2 points")
    if np.any(x <= 0) or np.any(~(lp < 0)):
        raise ConfigError("plot points need x > 0 and finite log_prob < 0")
    u, v = np.log(x), np.log(-lp)
    if x.size >= 3:
        fit = fit_gamma(x, lp)
        slope, intercept = fit.gamma_hat, fit.intercept
    else:
        slope = float((v[1] - v[0]) / (u[1] - u[0]))
        intercept = float(v[0] - slope * u[0])

    u0, u1 = float(u.min()), float(u.max())
    lines = [(slope, intercept, "#1f4e9c", "")]
    if gamma_ref is not None and math.isfinite(gamma_ref):
        # reference line through the centroid of the points
        lines.append((gamma_ref, float(v.mean() - gamma_ref * u.mean()), "#aa3322", "4 3"))
    ys = [v.min(), v.max()] + [s * t + c for s, c, _, _ in lines for t in (u0, u1)]
    v0, v1 = float(min(ys)), float(max(ys))
    if u1 == u0:
        u1 = u0 + 1.0
    if v1 == v0:
        v1 = v0 + 1.0

    def px(t):
        return PAD + (t - u0) / (u1 - u0) * (WIDTH - 2 * PAD)

    def py(t):
        return HEIGHT - PAD - (t - v0) / (v1 - v0) * (HEIGHT - 2 * PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" fill="none" stroke="black"/>',
    ]
    for s, c, colour, dash in lines:
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(
            f'<line x1="{_fmt(px(u0))}" y1="{_fmt(py(s * u0 + c))}" x2="{_fmt(px(u1))}" y2="{_fmt(py(s * u1 + c))}" stroke="{colour}"{extra}/>'
        )
    for a, b in zip(u, v):
        out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="3" fill="black"/>')
    out.append(f'<text x="{PAD}" y="{PAD - 30}" font-size="12">{title}</text>')
    out.append(f'<text x="{PAD}" y="{PAD - 12}" font-size="12" fill="#1f4e9c">fitted slope {slope:.3f}</text>')
    if gamma_ref is not None and math.isfinite(gamma_ref):
        out.append(f'<text x="{WIDTH // 2}" y="{PAD - 12}" font-size="12" fill="#aa3322">reference slope {gamma_ref:.3f}</text>')
    out.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" font-size="12" text-anchor="middle">log x</text>')
    out.append(f'<text x="15" y="{HEIGHT // 2}" font-size="12" transform="rotate(-90 15 {HEIGHT // 2})" text-anchor="middle">log(-log P)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, path, *, gamma_ref: float | None = None, title: str = "") -> Path:
    """Write a tail plot; ``series`` is ``(x, log_prob)``."""
    x, lp = series
    path = Path(path)
    path.write_text(tail_plot_svg(x, lp, gamma_ref=gamma_ref, title=title), encoding="utf-8")
    return path
