"""Per-element feature vectors.

Every element maps to the same fixed-length float vector; fields that do
not apply to an element's kind are exactly zero.  All geometric fields are
scaled by the canvas size, which makes the vector invariant under uniform
scaling of the whole chart.  Line-like elements additionally carry a trend:
locally weighted linear regression sampled at five evenly spaced x
positions across the element's extent.
"""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np

from .errors import BadColor, BadPathData, DegenerateInput
from .svgmodel import (
    _NUM_RE,
    TAG_VOCAB,
    PathGeometry,
    Rgba,
    SvgElement,
    parse_color,
    parse_path_geometry,
    parse_style,
)

log = logging.getLogger(__name__)

FEATURE_LAYOUT_VERSION = 1
TREND_SAMPLES = 5

# (field, width) pairs in vector order.  The flat width is what the graph
# encoder consumes, and the layout version is recorded in index headers so
# embeddings built against a different layout cannot be mixed up silently.
FEATURE_FIELDS = (
    ("type_onehot", len(TAG_VOCAB)),
    ("color", 3),
    ("stroke_width", 1),
    ("opacity", 1),
    ("bbox_area", 1),
    ("bbox_center", 2),
    ("bbox_width", 1),
    ("bbox_height", 1),
    ("vertex_count", 1),
    ("trend", TREND_SAMPLES),
    ("text_len", 1),
    ("pos_diff", 4),
)
FEATURE_DIM = sum(width for _, width in FEATURE_FIELDS)

_RENDERABLE = {"path", "rect", "circle", "ellipse", "line", "polyline", "polygon", "text"}
_VERTEX_TAGS = {"path", "polyline", "polygon", "line"}
# Trend is meant for open line-like marks; closed outlines (polygons, bar
# paths ending in Z still qualify as paths) simply get their outline trend.
_TREND_TAGS = {"path", "polyline", "line"}


@dataclasses.dataclass
class FeatureOptions:
    loess_bandwidth: float = 0.5
    text_cap: int = 100


@dataclasses.dataclass
class LoessFit:
    sample_xs: np.ndarray
    predictions: np.ndarray
    bandwidth_fraction: float


@dataclasses.dataclass
class SiblingOrdering:
    """Neighbor centers of one element in its sibling orderings.

    ``horizontal`` holds the center x of the previous/next sibling when the
    group is sorted left to right, ``vertical`` the center y for the
    top-to-bottom sort.  None marks a boundary.
    """

    horizontal: tuple[float | None, float | None] = (None, None)
    vertical: tuple[float | None, float | None] = (None, None)


@dataclasses.dataclass
class ElementFeatures:
    type_onehot: np.ndarray
    color: np.ndarray
    stroke_width: float
    opacity: float
    bbox_area: float
    bbox_center: np.ndarray
    bbox_width: float
    bbox_height: float
    vertex_count: float
    trend: np.ndarray
    text_len: float
    pos_diff: np.ndarray

    def vector(self) -> np.ndarray:
        out = np.concatenate(
            [
                self.type_onehot,
                self.color,
                [self.stroke_width, self.opacity, self.bbox_area],
                self.bbox_center,
                [self.bbox_width, self.bbox_height, self.vertex_count],
                self.trend,
                [self.text_len],
                self.pos_diff,
            ]
        ).astype(np.float64)
        assert out.shape == (FEATURE_DIM,)
        return out


def loess_predict(
    points: np.ndarray, sample_xs: np.ndarray, bandwidth_fraction: float = 0.5
) -> np.ndarray:
    """Degree-1 locally weighted regression with tricube weights.

    For each sample x the ceil(bandwidth_fraction * n) nearest points by
    |xi - x| form the local window; weights are tricube in the distance
    ratio to the window's farthest member.  A singular local system falls
    back to the weighted mean.  Raises DegenerateInput when fewer than two
    distinct x values are available.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DegenerateInput("loess needs at least two (x, y) points")
    xs, ys = pts[:, 0], pts[:, 1]
    if np.unique(xs).size < 2:
        raise DegenerateInput("loess needs at least two distinct x values")
    if not 0.0 < bandwidth_fraction <= 1.0:
        raise DegenerateInput(f"bandwidth_fraction {bandwidth_fraction} outside (0, 1]")

    n = xs.size
    q = int(math.ceil(bandwidth_fraction * n))
    samples = np.asarray(sample_xs, dtype=np.float64)
    out = np.empty(samples.size)
    for k, x0 in enumerate(samples.ravel()):
        dist = np.abs(xs - x0)
        nearest = np.argsort(dist, kind="stable")[:q]
        dsel = dist[nearest]
        dmax = dsel[-1] if q > 0 else 0.0
        if dmax <= 0.0:
            w = np.ones(q)
        else:
            w = np.clip(1.0 - (dsel / dmax) ** 3, 0.0, None) ** 3
        ysel = ys[nearest]
        sw = w.sum()
        if sw <= 0.0:
            out[k] = ysel.mean()
            continue
        u = xs[nearest] - x0
        swu = (w * u).sum()
        swuu = (w * u * u).sum()
        swy = (w * ysel).sum()
        swuy = (w * u * ysel).sum()
        denom = sw * swuu - swu * swu
        scale = sw * swuu + swu * swu
        if abs(denom) <= 1e-12 * scale or scale == 0.0:
            out[k] = swy / sw
        else:
            out[k] = (swuu * swy - swu * swuy) / denom
    return out.reshape(samples.shape)


def line_trend(
    vertices: list[tuple[float, float]], bandwidth_fraction: float = 0.5
) -> LoessFit:
    """Fit a trend over a vertex list at five evenly spaced sample xs."""
    pts = np.asarray(vertices, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateInput("trend needs at least two vertices")
    x_lo, x_hi = pts[:, 0].min(), pts[:, 0].max()
    if not x_hi > x_lo:
        raise DegenerateInput("trend needs a nonzero x extent")
    sample_xs = np.linspace(x_lo, x_hi, TREND_SAMPLES)
    preds = loess_predict(pts, sample_xs, bandwidth_fraction)
    return LoessFit(sample_xs=sample_xs, predictions=preds, bandwidth_fraction=bandwidth_fraction)


def _attr_float(element: SvgElement, name: str, default: float = 0.0) -> float:
    raw = element.attributes.get(name)
    if raw is None:
        return default
    m = _NUM_RE.search(raw)
    return float(m.group(0)) if m else default


def _parse_points(raw: str) -> list[tuple[float, float]]:
    nums = [float(m.group(0)) for m in _NUM_RE.finditer(raw)]
    return [(nums[i], nums[i + 1]) for i in range(0, len(nums) - 1, 2)]


def element_vertices(
    element: SvgElement, geometry: PathGeometry | None = None
) -> list[tuple[float, float]]:
    if element.tag == "path":
        if geometry is None:
            try:
                geometry = parse_path_geometry(element.attributes.get("d", ""))
            except BadPathData as exc:
                log.warning("unparseable path data: %s", exc)
                return []
        return list(geometry.vertices)
    if element.tag in ("polyline", "polygon"):
        return _parse_points(element.attributes.get("points", ""))
    if element.tag == "line":
        return [
            (_attr_float(element, "x1"), _attr_float(element, "y1")),
            (_attr_float(element, "x2"), _attr_float(element, "y2")),
        ]
    return []


def element_bbox(
    element: SvgElement, geometry: PathGeometry | None = None
) -> tuple[float, float, float, float] | None:
    """Tight bbox (x, y, w, h) in user units, None when the kind has none."""
    tag = element.tag
    if tag == "rect":
        return (
            _attr_float(element, "x"),
            _attr_float(element, "y"),
            _attr_float(element, "width"),
            _attr_float(element, "height"),
        )
    if tag == "circle":
        cx, cy, r = (_attr_float(element, a) for a in ("cx", "cy", "r"))
        return (cx - r, cy - r, 2 * r, 2 * r)
    if tag == "ellipse":
        cx, cy = _attr_float(element, "cx"), _attr_float(element, "cy")
        rx, ry = _attr_float(element, "rx"), _attr_float(element, "ry")
        return (cx - rx, cy - ry, 2 * rx, 2 * ry)
    if tag == "text":
        return (_attr_float(element, "x"), _attr_float(element, "y"), 0.0, 0.0)
    if tag in ("path", "polyline", "polygon", "line"):
        verts = element_vertices(element, geometry)
        if not verts:
            return None
        xs = [v[0] for v in verts]
        ys = [v[1] for v in verts]
        return (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))
    return None


def _safe_color(raw: str | None) -> Rgba | None:
    if raw is None or raw == "":
        return None
    try:
        return parse_color(raw)
    except BadColor as exc:
        log.warning("unparseable color, treating as transparent: %s", exc)
        return Rgba(0.0, 0.0, 0.0, 0.0)


def resolve_paint(element: SvgElement) -> tuple[Rgba | None, float | None, float]:
    """Pick the element's paint, opacity attribute, and stroke width.

    Inline style wins over presentation attributes.  The paint is the fill
    unless the fill is absent or fully transparent, in which case the
    stroke is used.
    """
    style = parse_style(element.attributes.get("style", ""))
    fill = _safe_color(style.get("fill", element.attributes.get("fill")))
    stroke = _safe_color(style.get("stroke", element.attributes.get("stroke")))
    paint = None
    if fill is not None and fill.a > 0:
        paint = fill
    elif stroke is not None and stroke.a > 0:
        paint = stroke

    opacity_raw = style.get("opacity", element.attributes.get("opacity"))
    opacity = None
    if opacity_raw is not None:
        try:
            opacity = min(1.0, max(0.0, float(opacity_raw)))
        except ValueError:
            opacity = None

    width_raw = style.get("stroke-width", element.attributes.get("stroke-width"))
    stroke_width = 0.0
    if width_raw is not None:
        m = _NUM_RE.search(width_raw)
        if m:
            stroke_width = max(0.0, float(m.group(0)))
    return paint, opacity, stroke_width


def extract_features(
    element: SvgElement,
    canvas_size: tuple[float, float],
    geometry: PathGeometry | None = None,
    ordering: SiblingOrdering | None = None,
    options: FeatureOptions | None = None,
) -> ElementFeatures:
    """Build the feature record for one element.

    ``geometry`` short-circuits path parsing when the caller already has it;
    ``ordering`` supplies the neighbor centers used for position differences
    and comes from the element's sibling group.
    """
    opts = options or FeatureOptions()
    width, height = canvas_size
    if not (width > 0 and height > 0):
        raise DegenerateInput(f"invalid canvas size {canvas_size}")
    tag = element.tag

    onehot = np.zeros(len(TAG_VOCAB))
    onehot[TAG_VOCAB.index(tag)] = 1.0

    paint, opacity_attr, stroke_width = resolve_paint(element)
    color = np.zeros(3)
    if tag in _RENDERABLE:
        if paint is not None:
            color[:] = (paint.r, paint.g, paint.b)
        opacity = (1.0 if opacity_attr is None else opacity_attr) * (
            paint.a if paint is not None else 1.0
        )
    else:
        # Containers are placeholders throughout: no color, width, opacity.
        opacity = 0.0
        stroke_width = 0.0

    bbox = element_bbox(element, geometry)
    bbox_area = 0.0
    bbox_center = np.zeros(2)
    bbox_w = bbox_h = 0.0
    center = None
    if bbox is not None:
        bx, by, bw, bh = bbox
        center = (bx + bw / 2.0, by + bh / 2.0)
        bbox_area = (bw * bh) / (width * height)
        bbox_center[:] = (center[0] / width, center[1] / height)
        bbox_w, bbox_h = bw / width, bh / height

    vertex_count = 0.0
    trend = np.zeros(TREND_SAMPLES)
    if tag in _VERTEX_TAGS:
        verts = element_vertices(element, geometry)
        if verts:
            vertex_count = math.log1p(len(verts))
        if tag in _TREND_TAGS and len(verts) >= 2:
            try:
                trend = line_trend(verts, opts.loess_bandwidth).predictions / height
            except DegenerateInput:
                pass

    text_len = 0.0
    if tag == "text":
        text_len = min(len(element.text_content or ""), opts.text_cap) / 100.0

    pos_diff = np.zeros(4)
    if ordering is not None and center is not None:
        h_prev, h_next = ordering.horizontal
        v_prev, v_next = ordering.vertical
        if h_prev is not None:
            pos_diff[0] = (center[0] - h_prev) / width
        if h_next is not None:
            pos_diff[1] = (h_next - center[0]) / width
        if v_prev is not None:
            pos_diff[2] = (center[1] - v_prev) / height
        if v_next is not None:
            pos_diff[3] = (v_next - center[1]) / height

    return ElementFeatures(
        type_onehot=onehot,
        color=color,
        stroke_width=stroke_width / max(width, height),
        opacity=opacity,
        bbox_area=bbox_area,
        bbox_center=bbox_center,
        bbox_width=bbox_w,
        bbox_height=bbox_h,
        vertex_count=vertex_count,
        trend=trend,
        text_len=text_len,
        pos_diff=pos_diff,
    )


def build_orderings(
    entries: list[tuple[int, tuple[float, float]]]
) -> dict[int, SiblingOrdering]:
    """Compute both sibling orderings for one group.

    ``entries`` pairs an opaque key with the element's bbox center.  Sorting
    is by the primary axis, then the secondary axis, then input order, so
    ties cannot reshuffle between runs.
    """
    horiz = sorted(range(len(entries)), key=lambda i: (entries[i][1][0], entries[i][1][1], i))
    vert = sorted(range(len(entries)), key=lambda i: (entries[i][1][1], entries[i][1][0], i))
    result = {
        key: SiblingOrdering(horizontal=(None, None), vertical=(None, None))
        for key, _ in entries
    }
    for rank, idx in enumerate(horiz):
        key = entries[idx][0]
        prev_c = entries[horiz[rank - 1]][1][0] if rank > 0 else None
        next_c = entries[horiz[rank + 1]][1][0] if rank + 1 < len(horiz) else None
        result[key].horizontal = (prev_c, next_c)
    for rank, idx in enumerate(vert):
        key = entries[idx][0]
        prev_c = entries[vert[rank - 1]][1][1] if rank > 0 else None
        next_c = entries[vert[rank + 1]][1][1] if rank + 1 < len(vert) else None
        result[key].vertical = (prev_c, next_c)
    return result
