"""Minimal deterministic SVG plots.

Reports need reproducible artifacts, so plots are written as plain SVG
text with fixed coordinate formatting; rendering the same data twice
yields byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_W, _H = 720, 520
_MARGIN = 70


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo
    if span == 0:
        span = 1.0
    return out_lo + (values - lo) / span * (out_hi - out_lo)


def svg_scatter(
    groups: dict[str, tuple[np.ndarray, np.ndarray]],
    path: str | Path,
    title: str,
    xlabel: str,
    ylabel: str,
) -> None:
    """Scatter plot with one color per group and a simple legend."""
    if not groups:
        raise ValidationError("nothing to plot")
    xs = np.concatenate([np.asarray(g[0], dtype=float) for g in groups.values()])
    ys = np.concatenate([np.asarray(g[1], dtype=float) for g in groups.values()])
    if xs.size == 0:
        raise ValidationError("nothing to plot")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="28" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#333"/>',
        f'<text x="{_W / 2:.0f}" y="{_H - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>',
        f'<text x="20" y="{_H / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 20 {_H / 2:.0f})">{ylabel}</text>',
    ]
    for gi, (label, (gx, gy)) in enumerate(groups.items()):
        color = _PALETTE[gi % len(_PALETTE)]
        px = _scale(np.asarray(gx, dtype=float), x_lo, x_hi, _MARGIN, _W - _MARGIN)
        py = _scale(np.asarray(gy, dtype=float), y_lo, y_hi, _H - _MARGIN, _MARGIN)
        for x, y in zip(px, py):
            parts.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}" '
                f'fill-opacity="0.7"/>'
            )
        ly = _MARGIN + 16 + 18 * gi
        parts.append(
            f'<circle cx="{_W - _MARGIN - 120}" cy="{ly - 4}" r="4" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_W - _MARGIN - 110}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    for lo, hi, axis in ((x_lo, x_hi, "x"), (y_lo, y_hi, "y")):
        for frac in (0.0, 0.5, 1.0):
            value = lo + frac * (hi - lo)
            if axis == "x":
                px = _MARGIN + frac * (_W - 2 * _MARGIN)
                parts.append(
                    f'<text x="{_fmt(px)}" y="{_H - _MARGIN + 18}" '
                    f'text-anchor="middle" font-family="sans-serif" '
                    f'font-size="11">{value:.3g}</text>'
                )
            else:
                py = (_H - _MARGIN) - frac * (_H - 2 * _MARGIN)
                parts.append(
                    f'<text x="{_MARGIN - 8}" y="{_fmt(py)}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="11">{value:.3g}</text>'
                )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
