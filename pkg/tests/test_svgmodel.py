import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vizretrieve.errors import (
    BadColor,
    BadPathData,
    MalformedXml,
    MissingRoot,
    UnresolvableSize,
)
from vizretrieve.svgmodel import (
    DEFAULT_DENY_LIST,
    TAG_VOCAB,
    filter_reference_elements,
    parse_color,
    parse_path_geometry,
    parse_style,
    parse_svg,
    serialize_svg,
)


# ---------------------------------------------------------------------------
# An independent path evaluator: absolute-izes commands one at a time with no
# shared code with the package implementation.


def reference_path_vertices(d: str):
    import re

    tokens = re.findall(r"[A-DF-Za-df-z]|[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", d)
    pos = 0
    cur = (0.0, 0.0)
    start = (0.0, 0.0)
    verts = []
    arity = {"M": 2, "L": 2, "H": 1, "V": 1, "C": 6, "S": 4, "Q": 4, "T": 2, "A": 7, "Z": 0}

    def take(n):
        nonlocal pos
        vals = [float(tokens[pos + i]) for i in range(n)]
        pos += n
        return vals

    cmd = None
    while pos < len(tokens):
        tok = tokens[pos]
        if tok.isalpha():
            cmd = tok
            pos += 1
        elif cmd is None:
            raise ValueError("numbers before any command")
        upper = cmd.upper()
        rel = cmd.islower()
        if upper == "Z":
            cur = start
            continue
        vals = take(arity[upper])
        if upper == "M":
            x, y = vals
            cur = (cur[0] + x, cur[1] + y) if rel else (x, y)
            start = cur
            verts.append(cur)
            cmd = "l" if rel else "L"
        elif upper == "L":
            x, y = vals
            cur = (cur[0] + x, cur[1] + y) if rel else (x, y)
            verts.append(cur)
        elif upper == "H":
            cur = (cur[0] + vals[0] if rel else vals[0], cur[1])
            verts.append(cur)
        elif upper == "V":
            cur = (cur[0], cur[1] + vals[0] if rel else vals[0])
            verts.append(cur)
        else:
            end = vals[-2:]
            cur = (cur[0] + end[0], cur[1] + end[1]) if rel else (end[0], end[1])
            verts.append(cur)
    return verts


# ---------------------------------------------------------------------------
# Parsing and size resolution


def test_parse_simple_tree():
    doc = parse_svg('<svg width="10" height="10"><rect x="1" y="1" width="2" height="3"/></svg>')
    assert doc.root.tag == "svg"
    assert [c.tag for c in doc.root.children] == ["rect"]
    assert (doc.width, doc.height) == (10.0, 10.0)


def test_parse_bar_group_shape(bar_svg):
    doc = parse_svg(bar_svg)
    plot = [c for c in doc.root.children if "plot" in c.class_names]
    assert len(plot) == 1
    points = plot[0].children[0]
    assert [c.tag for c in points.children] == ["path", "path", "path"]


def test_parse_malformed():
    with pytest.raises(MalformedXml):
        parse_svg("<svg>")


def test_parse_missing_root():
    with pytest.raises(MissingRoot):
        parse_svg("<div><p>nope</p></div>")


def test_size_from_viewbox():
    doc = parse_svg('<svg viewBox="0 0 640 480"><rect/></svg>')
    assert (doc.width, doc.height) == (640.0, 480.0)


def test_size_px_units():
    doc = parse_svg('<svg width="300px" height="150px"/>')
    assert (doc.width, doc.height) == (300.0, 150.0)


def test_size_unresolvable():
    with pytest.raises(UnresolvableSize):
        parse_svg("<svg><rect/></svg>")
    with pytest.raises(UnresolvableSize):
        parse_svg('<svg width="10cm" height="5cm"/>')


def test_unknown_tags_collapse_to_other():
    doc = parse_svg('<svg width="1" height="1"><foreignObject/><marker/></svg>')
    assert [c.tag for c in doc.root.children] == ["other", "other"]
    assert [c.source_tag for c in doc.root.children] == ["foreignObject", "marker"]
    assert all(t in TAG_VOCAB for c in doc.root.children for t in [c.tag])


def test_namespaced_input_parses():
    doc = parse_svg(
        '<svg xmlns="http://www.w3.org/2000/svg" width="4" height="4">'
        "<g><circle cx='1' cy='1' r='1'/></g></svg>"
    )
    assert doc.root.children[0].children[0].tag == "circle"


def test_parse_serialize_parse_fixed_point(bar_svg):
    doc1 = parse_svg(bar_svg)
    text1 = serialize_svg(doc1)
    doc2 = parse_svg(text1)
    text2 = serialize_svg(doc2)
    assert text1 == text2


# ---------------------------------------------------------------------------
# Path data


def test_path_triangle():
    geom = parse_path_geometry("M0,0 L4,0 L4,3 Z")
    assert geom.vertices == [(0.0, 0.0), (4.0, 0.0), (4.0, 3.0)]
    assert geom.bbox == (0.0, 0.0, 4.0, 3.0)


def test_path_relative_hand_example():
    geom = parse_path_geometry("M0,10 l5,-5 l5,5")
    assert geom.vertices == [(0.0, 10.0), (5.0, 5.0), (10.0, 10.0)]
    assert geom.bbox == (0.0, 5.0, 10.0, 5.0)
    assert geom.vertices == reference_path_vertices("M0,10 l5,-5 l5,5")


def test_path_unknown_command():
    with pytest.raises(BadPathData):
        parse_path_geometry("M0,0 X9")


def test_path_arity_mismatch():
    with pytest.raises(BadPathData):
        parse_path_geometry("M0,0 L1")


def test_path_before_moveto():
    with pytest.raises(BadPathData):
        parse_path_geometry("L1,1")


def test_path_implicit_lineto():
    # Coordinates after a moveto's first pair continue as implicit linetos.
    geom = parse_path_geometry("M1,1 2,2 3,3")
    assert geom.vertices == [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]
    rel = parse_path_geometry("m1,1 1,1 1,1")
    assert rel.vertices == [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]


def test_path_curves_keep_endpoints_only():
    geom = parse_path_geometry("M0,0 C1,9 2,9 3,0 Q4,-9 5,0 T7,0 S9,9 10,0")
    assert geom.vertices == [(0.0, 0.0), (3.0, 0.0), (5.0, 0.0), (7.0, 0.0), (10.0, 0.0)]


def test_path_arc_flag_lexing():
    # Plotly writes arcs with the two flags run together against the next
    # coordinate; the scanner must split "11" into two flags, not one number.
    geom = parse_path_geometry("M0,0 A5,5 0 0110,0")
    assert geom.vertices == [(0.0, 0.0), (10.0, 0.0)]
    rel = parse_path_geometry("M0,0 a5,5 0 01-10,0")
    assert rel.vertices == [(0.0, 0.0), (-10.0, 0.0)]


def test_path_z_returns_to_subpath_start():
    geom = parse_path_geometry("M0,0 L4,0 Z L1,2")
    # After Z the pen is back at (0,0), so L1,2 lands where it says.
    assert geom.vertices == [(0.0, 0.0), (4.0, 0.0), (1.0, 2.0)]


def test_path_empty_is_empty():
    geom = parse_path_geometry("")
    assert geom.vertices == []


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from("MLHVCQTSAmlhvcqtsa"),
            st.floats(-100, 100, allow_nan=False, width=32),
        ),
        min_size=1,
        max_size=12,
    )
)
def test_path_matches_reference_evaluator(cmds):
    arity = {"M": 2, "L": 2, "H": 1, "V": 1, "C": 6, "S": 4, "Q": 4, "T": 2, "A": 7}
    parts = []
    first = True
    for cmd, base in cmds:
        if first:
            cmd = "M"
            first = False
        n = arity[cmd.upper()]
        nums = [f"{base + i:.3f}" for i in range(n)]
        if cmd.upper() == "A":
            nums[3], nums[4] = "1", "0"  # flags must be 0/1
            nums[0] = nums[1] = "5"
        parts.append(cmd + " " + " ".join(nums))
    d = " ".join(parts)
    ours = parse_path_geometry(d).vertices
    ref = reference_path_vertices(d)
    assert len(ours) == len(ref)
    for (ax, ay), (bx, by) in zip(ours, ref):
        assert math.isclose(ax, bx, abs_tol=1e-9)
        assert math.isclose(ay, by, abs_tol=1e-9)


@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=20))
def test_path_vertices_inside_bbox(points):
    d = "M" + " L".join(f"{x:.4f},{y:.4f}" for x, y in points)
    geom = parse_path_geometry(d)
    x0, y0, w, h = geom.bbox
    for x, y in geom.vertices:
        assert x0 - 1e-9 <= x <= x0 + w + 1e-9
        assert y0 - 1e-9 <= y <= y0 + h + 1e-9


# ---------------------------------------------------------------------------
# Colors


def test_color_hex_red():
    assert tuple(parse_color("#ff0000")) == pytest.approx((1.0, 0.0, 0.0, 1.0))


def test_color_rgba():
    r, g, b, a = parse_color("rgba(0,128,255,0.5)")
    assert (r, g, b, a) == pytest.approx((0.0, 128 / 255, 1.0, 0.5))


def test_color_garbage():
    with pytest.raises(BadColor):
        parse_color("bleurgh")


def test_color_none_and_named():
    assert tuple(parse_color("none")) == (0.0, 0.0, 0.0, 0.0)
    assert tuple(parse_color("red")) == pytest.approx((1.0, 0.0, 0.0, 1.0))
    assert tuple(parse_color("SteelBlue")) == pytest.approx((70 / 255, 130 / 255, 180 / 255, 1.0))


def test_color_short_hex_and_alpha_hex():
    assert tuple(parse_color("#f00")) == pytest.approx((1.0, 0.0, 0.0, 1.0))
    assert tuple(parse_color("#f008")) == pytest.approx((1.0, 0.0, 0.0, 0x88 / 255))
    assert tuple(parse_color("#11223344")) == pytest.approx(
        (0x11 / 255, 0x22 / 255, 0x33 / 255, 0x44 / 255)
    )


def test_color_percent_and_clamping():
    assert tuple(parse_color("rgb(100%, 0%, 50%)")) == pytest.approx((1.0, 0.0, 0.5, 1.0))
    assert tuple(parse_color("rgb(300, -20, 128)")) == pytest.approx((1.0, 0.0, 128 / 255, 1.0))
    assert tuple(parse_color("rgba(10, 10, 10, 7)")) == pytest.approx(
        (10 / 255, 10 / 255, 10 / 255, 1.0)
    )


@given(
    st.one_of(
        st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)).map(
            lambda t: f"rgb({t[0]},{t[1]},{t[2]})"
        ),
        st.tuples(
            st.integers(0, 255), st.integers(0, 255), st.integers(0, 255),
            st.floats(0, 1, allow_nan=False),
        ).map(lambda t: f"rgba({t[0]},{t[1]},{t[2]},{t[3]:.4f})"),
        st.integers(0, 0xFFFFFF).map(lambda v: f"#{v:06x}"),
        st.integers(0, 0xFFF).map(lambda v: f"#{v:03x}"),
    )
)
def test_color_channels_in_unit_interval(value):
    rgba = parse_color(value)
    assert all(0.0 <= ch <= 1.0 for ch in rgba)


def test_parse_style_precedence_input():
    style = parse_style("fill: #ff0000; stroke-width: 2.5 ;opacity:0.25")
    assert style == {"fill": "#ff0000", "stroke-width": "2.5", "opacity": "0.25"}


# ---------------------------------------------------------------------------
# Reference-element filtering


def _count(elem):
    return 1 + sum(_count(c) for c in elem.children)


def test_filter_removes_legend_subtree():
    doc = parse_svg(
        '<svg width="10" height="10">'
        '<g class="legend"><rect/><text>a</text></g>'
        '<rect class="point"/></svg>'
    )
    out = filter_reference_elements(doc, DEFAULT_DENY_LIST)
    assert [c.tag for c in out.root.children] == ["rect"]


def test_filter_all_default_entries():
    body = "".join(
        f'<g class="{cls}"><rect/></g>'
        for cls in ("legend", "grid", "gridlayer", "xaxislayer", "tick", "zeroline")
    )
    doc = parse_svg(f'<svg width="10" height="10">{body}<circle class="point"/></svg>')
    out = filter_reference_elements(doc)
    assert [c.tag for c in out.root.children] == ["circle"]


def test_filter_matches_id_attribute():
    doc = parse_svg('<svg width="10" height="10"><defs id="defs-ab12"><rect/></defs></svg>')
    out = filter_reference_elements(doc)
    assert out.root.children == []


def test_filter_empty_deny_list_is_noop(bar_svg):
    doc = parse_svg(bar_svg)
    out = filter_reference_elements(doc, [])
    assert serialize_svg(out) == serialize_svg(doc)


def test_filter_nothing_matches(bar_svg):
    doc = parse_svg('<svg width="10" height="10"><rect/><circle/></svg>')
    out = filter_reference_elements(doc)
    assert _count(out.root) == _count(doc.root)


def test_filter_never_removes_root_and_shrinks():
    doc = parse_svg('<svg width="10" height="10" class="legend"><rect class="tick"/></svg>')
    out = filter_reference_elements(doc)
    assert out.root.tag == "svg"
    assert _count(out.root) <= _count(doc.root)


def test_filter_case_insensitive():
    doc = parse_svg('<svg width="10" height="10"><g class="LegendWrap"><rect/></g></svg>')
    assert filter_reference_elements(doc).root.children == []
