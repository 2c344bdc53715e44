"""Standalone SVG line charts, written as text so the bytes are reproducible."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]


@dataclass
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]


@dataclass(frozen=True)
class Panel:
    left: float
    top: float
    width: float
    height: float
    xlim: tuple[float, float] = (0.0, 1.0)
    ylim: tuple[float, float] = (0.0, 1.0)

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        px = self.left + (x - x0) / (x1 - x0) * self.width
        py = self.top + (1.0 - (y - y0) / (y1 - y0)) * self.height
        return px, py


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _panel_svg(panel: Panel, series: Sequence[Series], title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [f'<g class="panel">',
           f'<rect x="{_fmt(panel.left)}" y="{_fmt(panel.top)}" width="{_fmt(panel.width)}" '
           f'height="{_fmt(panel.height)}" fill="none" stroke="#000"/>']
    for frac in (0.0, 0.5, 1.0):
        xv = panel.xlim[0] + frac * (panel.xlim[1] - panel.xlim[0])
        yv = panel.ylim[0] + frac * (panel.ylim[1] - panel.ylim[0])
        px, _ = panel.to_px(xv, panel.ylim[0])
        _, py = panel.to_px(panel.xlim[0], yv)
        out.append(f'<text x="{_fmt(px)}" y="{_fmt(panel.top + panel.height + 14)}" '
                   f'text-anchor="middle" font-size="10">{xv:g}</text>')
        out.append(f'<text x="{_fmt(panel.left - 4)}" y="{_fmt(py + 3)}" '
                   f'text-anchor="end" font-size="10">{yv:g}</text>')
    out.append(f'<text x="{_fmt(panel.left + panel.width / 2)}" y="{_fmt(panel.top - 6)}" '
               f'text-anchor="middle" font-size="12">{escape(title)}</text>')
    out.append(f'<text x="{_fmt(panel.left + panel.width / 2)}" y="{_fmt(panel.top + panel.height + 28)}" '
               f'text-anchor="middle" font-size="11">{escape(xlabel)}</text>')
    ly = panel.top + panel.height / 2
    out.append(f'<text x="{_fmt(panel.left - 30)}" y="{_fmt(ly)}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 {_fmt(panel.left - 30)} {_fmt(ly)})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (panel.to_px(x, y) for x, y in zip(s.xs, s.ys)))
        out.append(f'<polyline data-label="{escape(s.label)}" points="{pts}" fill="none" '
                   f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5"/>')
    out.append("</g>")
    return out


def _legend(series: Sequence[Series], x: float, y: float) -> list[str]:
    out = []
    for i, s in enumerate(series):
        yy = y + 14 * i
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(yy)}" x2="{_fmt(x + 18)}" y2="{_fmt(yy)}" '
                   f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(x + 22)}" y="{_fmt(yy + 4)}" font-size="10">{escape(s.label)}</text>')
    return out


def _document(width: float, height: float, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
            f'viewBox="0 0 {width:g} {height:g}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{width:g}" height="{height:g}" fill="#fff"/>', *body, "</svg>"]) + "\n"


def line_chart(series: Sequence[Series], title: str, xlabel: str, ylabel: str,
               xlim: tuple[float, float], ylim: tuple[float, float] = (0.0, 1.0)) -> str:
    if not series or not any(len(s.xs) for s in series):
        raise ValueError("nothing to plot")
    if xlim[0] == xlim[1]:
        xlim = (xlim[0] - 0.5, xlim[1] + 0.5)
    panel = Panel(left=60, top=30, width=400, height=300, xlim=xlim, ylim=ylim)
    body = _panel_svg(panel, series, title, xlabel, ylabel) + _legend(series, 480, 40)
    return _document(640, 380, body)


def panel_grid(panels: Sequence[tuple[str, Sequence[Series]]], xlabel: str, ylabel: str, columns: int = 4) -> str:
    """Several unit-square panels (domain and range [0, 1]) sharing one legend."""
    if not panels:
        raise ValueError("nothing to plot")
    size, gap = 160, 60
    rows = (len(panels) + columns - 1) // columns
    body: list[str] = []
    for i, (title, series) in enumerate(panels):
        r, c = divmod(i, columns)
        panel = Panel(left=50 + c * (size + gap), top=30 + r * (size + gap), width=size, height=size)
        body += _panel_svg(panel, series, title, xlabel, ylabel)
    width = 50 + columns * (size + gap) + 120
    body += _legend(panels[0][1], width - 130, 40)
    return _document(width, 30 + rows * (size + gap) + 10, body)
