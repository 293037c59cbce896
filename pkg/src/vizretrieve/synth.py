"""Synthetic chart corpus: paired SVG + PNG with known ground truth.

Generates bar charts (plain and grouped), box plots, line charts and
scatter plots with randomized data, a Plotly-like nested ``<g>`` structure,
and the usual chart furniture (grid lines, tick labels, legend, defs) that
the reference-element filter is expected to strip.  Every file is written
with fixed two-decimal coordinate formatting so a given seed reproduces the
corpus byte for byte.

The ground-truth sidecar records, per chart, the number of elements that
survive filtering: data marks plus title texts.  The round-trip test in the
acceptance suite re-derives that number through the parsing pipeline.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from PIL import Image, ImageDraw

CHART_TYPES = ("bar", "box", "line", "scatter")

PALETTE = ("#636efa", "#ef553b", "#00cc96", "#ab63fa", "#ffa15a", "#19d3f3")

_WORDS = (
    "revenue", "sales", "growth", "count", "load", "price",
    "score", "yield", "index", "rate", "volume", "users",
)

_GRID = "#e5ecf6"
_INK = "#444444"
_TICK_INK = "#666666"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _rgb(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


class _Frame:
    """Canvas size plus the inner plot rectangle."""

    def __init__(self, rng: np.random.Generator):
        self.width = int(rng.integers(340, 481))
        self.height = int(rng.integers(260, 401))
        self.left = 58.0
        self.right = self.width - 24.0
        self.top = 52.0
        self.bottom = self.height - 42.0

    @property
    def plot_w(self) -> float:
        return self.right - self.left

    @property
    def plot_h(self) -> float:
        return self.bottom - self.top

    def y(self, v: float) -> float:
        """Map a unit-interval data value to a canvas y (0 at the bottom)."""
        return self.bottom - v * self.plot_h


class _Painter:
    """Mirrors mark geometry into a PIL image."""

    def __init__(self, frame: _Frame):
        self.image = Image.new("RGB", (frame.width, frame.height), (255, 255, 255))
        self.draw = ImageDraw.Draw(self.image)

    def rect(self, x0, y0, x1, y1, fill=None, outline=None, width=1):
        box = (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
        self.draw.rectangle(
            box,
            fill=_rgb(fill) if fill else None,
            outline=_rgb(outline) if outline else None,
            width=width,
        )

    def line(self, points, color, width=2):
        self.draw.line([(float(x), float(y)) for x, y in points], fill=_rgb(color), width=width)

    def circle(self, cx, cy, r, color):
        self.draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=_rgb(color))

    def text(self, x, y, s, color, center=False):
        # The default bitmap font has no anchor support; nudge by hand.
        dx = 3.0 * len(s) if center else 0.0
        self.draw.text((float(x - dx), float(y - 10)), s, fill=_rgb(color))


# ---------------------------------------------------------------------------
# Shared furniture (all of it sits behind deny-listed classes or ids)


def _defs_svg(rng: np.random.Generator, frame: _Frame) -> str:
    token = "".join(f"{d:x}" for d in rng.integers(0, 16, size=6))
    return (
        f'<defs id="defs-{token}">'
        f'<clipPath id="clip{token}xy">'
        f'<rect x="{_fmt(frame.left)}" y="{_fmt(frame.top)}" '
        f'width="{_fmt(frame.plot_w)}" height="{_fmt(frame.plot_h)}"/>'
        f"</clipPath></defs>"
    )


def _grid_svg(frame: _Frame, xticks, yvals, painter: _Painter) -> str:
    parts = ['<g class="gridlayer">']
    for x in xticks:
        parts.append(
            f'<path class="xgrid crisp" d="M{_fmt(x)},{_fmt(frame.top)}'
            f'V{_fmt(frame.bottom)}" stroke="{_GRID}" stroke-width="1" fill="none"/>'
        )
        painter.line([(x, frame.top), (x, frame.bottom)], _GRID, width=1)
    for v in yvals:
        y = frame.y(v)
        parts.append(
            f'<path class="ygrid crisp" d="M{_fmt(frame.left)},{_fmt(y)}'
            f'H{_fmt(frame.right)}" stroke="{_GRID}" stroke-width="1" fill="none"/>'
        )
        painter.line([(frame.left, y), (frame.right, y)], _GRID, width=1)
    parts.append("</g>")
    parts.append(
        f'<path class="zeroline" d="M{_fmt(frame.left)},{_fmt(frame.bottom)}'
        f'H{_fmt(frame.right)}" stroke="#b0b0b0" stroke-width="1" fill="none"/>'
    )
    painter.line([(frame.left, frame.bottom), (frame.right, frame.bottom)], "#b0b0b0", width=1)
    return "".join(parts)


def _axis_svg(frame: _Frame, xlabels, yvals, painter: _Painter) -> str:
    parts = ['<g class="xaxislayer-above">']
    for x, label in xlabels:
        parts.append(
            f'<text class="xtick" x="{_fmt(x)}" y="{_fmt(frame.bottom + 16)}" '
            f'text-anchor="middle" font-size="12" fill="{_TICK_INK}">{label}</text>'
        )
        painter.text(x, frame.bottom + 16, label, _TICK_INK, center=True)
    parts.append('</g><g class="yaxislayer-above">')
    for v in yvals:
        y = frame.y(v)
        label = _fmt(v)
        parts.append(
            f'<text class="ytick" x="{_fmt(frame.left - 8)}" y="{_fmt(y + 4)}" '
            f'text-anchor="end" font-size="12" fill="{_TICK_INK}">{label}</text>'
        )
        painter.text(frame.left - 8 - 6 * len(label), y + 4, label, _TICK_INK)
    parts.append("</g>")
    return "".join(parts)


def _legend_svg(frame: _Frame, names, colors, painter: _Painter) -> str:
    x0 = frame.right - 96.0
    y0 = frame.top + 8.0
    h = 18.0 * len(names) + 8.0
    parts = [
        '<g class="legend">',
        f'<rect class="legendbg" x="{_fmt(x0)}" y="{_fmt(y0)}" width="90" '
        f'height="{_fmt(h)}" fill="#ffffff" stroke="#d0d0d0"/>',
    ]
    painter.rect(x0, y0, x0 + 90, y0 + h, fill="#ffffff", outline="#d0d0d0")
    for k, (name, color) in enumerate(zip(names, colors)):
        ly = y0 + 8.0 + 18.0 * k
        parts.append(
            f'<rect class="legendswatch" x="{_fmt(x0 + 6)}" y="{_fmt(ly)}" '
            f'width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text class="legendtext" x="{_fmt(x0 + 24)}" y="{_fmt(ly + 10)}" '
            f'font-size="12" fill="{_INK}">{name}</text>'
        )
        painter.rect(x0 + 6, ly, x0 + 18, ly + 12, fill=color)
        painter.text(x0 + 24, ly + 10, name, _INK)
    parts.append("</g>")
    return "".join(parts)


def _titles_svg(rng: np.random.Generator, frame: _Frame, painter: _Painter) -> tuple[str, int]:
    """Emit the infolayer with 1 to 3 title texts; returns (svg, text count)."""
    words = rng.choice(len(_WORDS), size=3, replace=False)
    gtitle = f"{_WORDS[words[0]]} by {_WORDS[words[1]]}"
    parts = ['<g class="infolayer">']
    count = 1
    tx = frame.width / 2.0
    parts.append(
        f'<g class="g-gtitle"><text class="gtitle" x="{_fmt(tx)}" y="26" '
        f'text-anchor="middle" font-size="17" fill="{_INK}">{gtitle}</text></g>'
    )
    painter.text(tx, 26, gtitle, _INK, center=True)
    if rng.random() < 0.5:
        label = _WORDS[words[1]]
        x = frame.left + frame.plot_w / 2.0
        y = frame.height - 8.0
        parts.append(
            f'<g class="g-xtitle"><text class="xtitle" x="{_fmt(x)}" y="{_fmt(y)}" '
            f'text-anchor="middle" font-size="14" fill="{_INK}">{label}</text></g>'
        )
        painter.text(x, y, label, _INK, center=True)
        count += 1
    if rng.random() < 0.5:
        label = _WORDS[words[2]]
        y = frame.top + frame.plot_h / 2.0
        parts.append(
            f'<g class="g-ytitle"><text class="ytitle" x="14" y="{_fmt(y)}" '
            f'font-size="14" fill="{_INK}">{label}</text></g>'
        )
        painter.text(14, y, label, _INK)
        count += 1
    parts.append("</g>")
    return "".join(parts), count


def _wrap_svg(frame: _Frame, body: str) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" '
        f'height="{frame.height}" viewBox="0 0 {frame.width} {frame.height}">'
        f"{body}</svg>"
    )


def _yticks(rng: np.random.Generator) -> list[float]:
    n = int(rng.integers(4, 7))
    return [k / (n - 1) for k in range(n)]


# ---------------------------------------------------------------------------
# Chart generators.  Each returns (svg_text, image, visible_element_count).


def _bar_chart(rng: np.random.Generator) -> tuple[str, Image.Image, int]:
    frame = _Frame(rng)
    painter = _Painter(frame)
    grouped = rng.random() < 0.4
    n_series = int(rng.integers(2, 4)) if grouped else 1
    n_cats = int(rng.integers(3, 7)) if grouped else int(rng.integers(3, 9))
    values = rng.uniform(0.12, 0.95, size=(n_series, n_cats))
    colors = [PALETTE[(int(rng.integers(0, 6)) + s) % len(PALETTE)] for s in range(n_series)]
    band = frame.plot_w / n_cats
    group_w = band * 0.7
    bar_w = group_w / n_series

    centers = [frame.left + band * (c + 0.5) for c in range(n_cats)]
    traces = []
    for s in range(n_series):
        bars = []
        for c in range(n_cats):
            x0 = centers[c] - group_w / 2.0 + s * bar_w
            x1 = x0 + bar_w * 0.92
            yt = frame.y(values[s, c])
            bars.append(
                f'<path class="point" d="M{_fmt(x0)},{_fmt(frame.bottom)}'
                f'V{_fmt(yt)}H{_fmt(x1)}V{_fmt(frame.bottom)}Z" fill="{colors[s]}"/>'
            )
            painter.rect(x0, yt, x1, frame.bottom, fill=colors[s])
        traces.append(
            '<g class="trace bars"><g class="points">' + "".join(bars) + "</g></g>"
        )
    marks = n_series * n_cats

    yvals = _yticks(rng)
    xlabels = [(x, chr(ord("A") + c)) for c, x in enumerate(centers)]
    body = [_defs_svg(rng, frame), _grid_svg(frame, [], yvals, painter)]
    body.append('<g class="barlayer mlayer">' + "".join(traces) + "</g>")
    body.append(_axis_svg(frame, xlabels, yvals, painter))
    if grouped:
        names = [f"series {s + 1}" for s in range(n_series)]
        body.append(_legend_svg(frame, names, colors, painter))
    titles_svg, n_titles = _titles_svg(rng, frame, painter)
    body.append(titles_svg)
    return _wrap_svg(frame, "".join(body)), painter.image, marks + n_titles


def _box_chart(rng: np.random.Generator) -> tuple[str, Image.Image, int]:
    frame = _Frame(rng)
    painter = _Painter(frame)
    n_boxes = int(rng.integers(2, 7))
    color = PALETTE[int(rng.integers(0, 6))]
    band = frame.plot_w / n_boxes
    half = band * 0.28

    boxes = []
    centers = []
    for b in range(n_boxes):
        cx = frame.left + band * (b + 0.5)
        centers.append(cx)
        lo, q1, med, q3, hi = (frame.y(v) for v in np.sort(rng.uniform(0.08, 0.92, size=5)))
        x0, x1 = cx - half, cx + half
        whiskers = f"M{_fmt(cx)},{_fmt(q1)}V{_fmt(lo)}M{_fmt(cx)},{_fmt(q3)}V{_fmt(hi)}"
        body_d = f"M{_fmt(x0)},{_fmt(q1)}V{_fmt(q3)}H{_fmt(x1)}V{_fmt(q1)}Z"
        median = f"M{_fmt(x0)},{_fmt(med)}H{_fmt(x1)}"
        boxes.append(
            '<g class="box">'
            f'<path class="whiskers" d="{whiskers}" stroke="{color}" fill="none"/>'
            f'<path class="boxbody" d="{body_d}" fill="{color}" fill-opacity="0.55" '
            f'stroke="{color}"/>'
            f'<path class="median" d="{median}" stroke="{color}" stroke-width="2" fill="none"/>'
            "</g>"
        )
        painter.line([(cx, q1), (cx, lo)], color)
        painter.line([(cx, q3), (cx, hi)], color)
        painter.rect(x0, q3, x1, q1, fill="#aeb8f5", outline=color)
        painter.line([(x0, med), (x1, med)], color, width=2)
    marks = 3 * n_boxes

    yvals = _yticks(rng)
    xlabels = [(x, f"g{b + 1}") for b, x in enumerate(centers)]
    body = [_defs_svg(rng, frame), _grid_svg(frame, [], yvals, painter)]
    body.append('<g class="boxlayer mlayer"><g class="trace boxes">' + "".join(boxes) + "</g></g>")
    body.append(_axis_svg(frame, xlabels, yvals, painter))
    titles_svg, n_titles = _titles_svg(rng, frame, painter)
    body.append(titles_svg)
    return _wrap_svg(frame, "".join(body)), painter.image, marks + n_titles


def _series_path(xs, ys) -> str:
    head = f"M{_fmt(xs[0])},{_fmt(ys[0])}"
    return head + "".join(f"L{_fmt(x)},{_fmt(y)}" for x, y in zip(xs[1:], ys[1:]))


def _line_chart(rng: np.random.Generator) -> tuple[str, Image.Image, int]:
    frame = _Frame(rng)
    painter = _Painter(frame)
    n_series = int(rng.integers(1, 5))
    n_pts = int(rng.integers(10, 41))
    with_markers = rng.random() < 0.35
    colors = [PALETTE[(int(rng.integers(0, 6)) + s) % len(PALETTE)] for s in range(n_series)]

    xs = np.linspace(frame.left + 4.0, frame.right - 4.0, n_pts)
    traces = []
    marks = 0
    for s in range(n_series):
        walk = np.cumsum(rng.normal(0.0, 1.0, size=n_pts))
        span = walk.max() - walk.min()
        if span < 1e-9:
            span = 1.0
        unit = 0.08 + 0.84 * (walk - walk.min()) / span
        ys = np.array([frame.y(v) for v in unit])
        parts = [
            f'<path class="js-line" d="{_series_path(xs, ys)}" stroke="{colors[s]}" '
            f'stroke-width="2" fill="none"/>'
        ]
        painter.line(list(zip(xs, ys)), colors[s], width=2)
        marks += 1
        if with_markers:
            dots = [
                f'<circle class="point" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" '
                f'fill="{colors[s]}"/>'
                for x, y in zip(xs, ys)
            ]
            parts.append('<g class="points">' + "".join(dots) + "</g>")
            for x, y in zip(xs, ys):
                painter.circle(x, y, 3, colors[s])
            marks += n_pts
        traces.append('<g class="trace scatter">' + "".join(parts) + "</g>")

    yvals = _yticks(rng)
    xtick_pos = np.linspace(frame.left, frame.right, 5)
    xlabels = [(x, _fmt(k / 4.0)) for k, x in enumerate(xtick_pos)]
    body = [_defs_svg(rng, frame), _grid_svg(frame, xtick_pos, yvals, painter)]
    body.append('<g class="scatterlayer mlayer">' + "".join(traces) + "</g>")
    body.append(_axis_svg(frame, xlabels, yvals, painter))
    if n_series > 1:
        names = [f"series {s + 1}" for s in range(n_series)]
        body.append(_legend_svg(frame, names, colors, painter))
    titles_svg, n_titles = _titles_svg(rng, frame, painter)
    body.append(titles_svg)
    return _wrap_svg(frame, "".join(body)), painter.image, marks + n_titles


def _scatter_chart(rng: np.random.Generator) -> tuple[str, Image.Image, int]:
    frame = _Frame(rng)
    painter = _Painter(frame)
    n_traces = int(rng.integers(1, 3))
    colors = [PALETTE[(int(rng.integers(0, 6)) + s) % len(PALETTE)] for s in range(n_traces)]

    traces = []
    marks = 0
    for s in range(n_traces):
        n_pts = int(rng.integers(15, 51))
        px = frame.left + rng.uniform(0.02, 0.98, size=n_pts) * frame.plot_w
        py = np.array([frame.y(v) for v in rng.uniform(0.04, 0.96, size=n_pts)])
        dots = [
            f'<circle class="point" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.5" '
            f'fill="{colors[s]}" fill-opacity="0.85"/>'
            for x, y in zip(px, py)
        ]
        traces.append(
            '<g class="trace scatter"><g class="points">' + "".join(dots) + "</g></g>"
        )
        for x, y in zip(px, py):
            painter.circle(x, y, 3.5, colors[s])
        marks += n_pts

    yvals = _yticks(rng)
    xtick_pos = np.linspace(frame.left, frame.right, 5)
    xlabels = [(x, _fmt(k / 4.0)) for k, x in enumerate(xtick_pos)]
    body = [_defs_svg(rng, frame), _grid_svg(frame, xtick_pos, yvals, painter)]
    body.append('<g class="scatterlayer mlayer">' + "".join(traces) + "</g>")
    body.append(_axis_svg(frame, xlabels, yvals, painter))
    titles_svg, n_titles = _titles_svg(rng, frame, painter)
    body.append(titles_svg)
    return _wrap_svg(frame, "".join(body)), painter.image, marks + n_titles


_GENERATORS: dict[str, Callable] = {
    "bar": _bar_chart,
    "box": _box_chart,
    "line": _line_chart,
    "scatter": _scatter_chart,
}


def generate_corpus(
    out_dir: str | Path, counts: Mapping[str, int], seed: int
) -> list[dict]:
    """Write ``<id>.svg`` + ``<id>.png`` pairs and a ground-truth sidecar.

    ``counts`` maps chart type to how many charts of that type to produce.
    Items are seeded from independent child sequences of ``seed``, so any
    one chart can be regenerated without the rest.  Returns the sidecar
    records in generation order.
    """
    unknown = set(counts) - set(CHART_TYPES)
    if unknown:
        raise ValueError(f"unknown chart types: {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    order = [t for t in CHART_TYPES if counts.get(t, 0) > 0]
    total = sum(int(counts[t]) for t in order)
    children = np.random.SeedSequence(seed).spawn(total)

    records = []
    idx = 0
    for label in order:
        for i in range(int(counts[label])):
            rng = np.random.default_rng(children[idx])
            idx += 1
            item_id = f"{label}_{i:04d}"
            svg_text, image, n_elements = _GENERATORS[label](rng)
            (out / f"{item_id}.svg").write_text(svg_text, encoding="utf-8")
            image.save(out / f"{item_id}.png")
            records.append({"id": item_id, "label": label, "n_elements": n_elements})

    with open(out / "ground_truth.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records
