"""Normalized in-memory model of an SVG chart.

Parsing reduces an SVG file to the small vocabulary of tags the rest of the
pipeline cares about (containers, basic shapes, paths, text); anything else
is kept but tagged "other".  Path data is reduced to command endpoints: no
curve flattening, a cubic contributes exactly one vertex.  Rendering and
coordinate transforms are out of scope here, bitmaps arrive pre-rendered.
"""

from __future__ import annotations

import dataclasses
import re
import xml.etree.ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .errors import (
    BadColor,
    BadPathData,
    MalformedXml,
    MissingRoot,
    UnresolvableSize,
)

# Tags kept as-is; everything else collapses to "other".  The tuple order is
# load-bearing: it doubles as the one-hot layout downstream.
KNOWN_TAGS = (
    "svg",
    "g",
    "path",
    "rect",
    "circle",
    "ellipse",
    "line",
    "polyline",
    "polygon",
    "text",
)
TAG_VOCAB = KNOWN_TAGS + ("other",)

# Substrings of class/id that mark reference elements (axes, grids, legends)
# rather than data marks.  Matched case-insensitively against the raw class
# and id attribute values.
DEFAULT_DENY_LIST = (
    "legend",
    "grid",
    "gridlayer",
    "axis",
    "tick",
    "zeroline",
    "defs",
)


@dataclasses.dataclass
class SvgElement:
    tag: str
    attributes: dict[str, str]
    class_names: list[str]
    children: list["SvgElement"]
    text_content: str | None = None
    source_tag: str = ""

    def __post_init__(self) -> None:
        if not self.source_tag:
            self.source_tag = self.tag

    def iter_subtree(self):
        yield self
        for child in self.children:
            yield from child.iter_subtree()


@dataclasses.dataclass
class SvgDocument:
    root: SvgElement
    width: float
    height: float


def _local_name(tag: str) -> str:
    # ElementTree spells namespaced tags as "{uri}name".
    if tag.startswith("{"):
        return tag.split("}", 1)[1]
    return tag


def _convert(node: ET.Element) -> SvgElement:
    source = _local_name(node.tag)
    tag = source if source in KNOWN_TAGS else "other"
    attrs = {_local_name(k): v for k, v in node.attrib.items()}
    classes = attrs.get("class", "").split()
    text = node.text.strip() if node.text and node.text.strip() else None
    children = [_convert(c) for c in node]
    return SvgElement(tag, attrs, classes, children, text, source)


_LENGTH_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(px)?\s*$")


def _parse_length(value: str | None) -> float | None:
    """Plain number or px length; anything else (%, cm, em) is unusable."""
    if value is None:
        return None
    m = _LENGTH_RE.match(value)
    if m is None:
        return None
    return float(m.group(1))


def _resolve_size(root: SvgElement) -> tuple[float, float]:
    w = _parse_length(root.attributes.get("width"))
    h = _parse_length(root.attributes.get("height"))
    if w is not None and h is not None and w > 0 and h > 0:
        return w, h
    viewbox = root.attributes.get("viewBox") or root.attributes.get("viewbox")
    if viewbox:
        try:
            parts = [float(p) for p in viewbox.replace(",", " ").split()]
        except ValueError:
            parts = []
        if len(parts) == 4 and parts[2] > 0 and parts[3] > 0:
            return parts[2], parts[3]
    raise UnresolvableSize("cannot determine canvas size from width/height or viewBox")


def parse_svg(source: str) -> SvgDocument:
    """Parse SVG text into a normalized document.

    Raises MalformedXml for broken XML, MissingRoot when the root element is
    not <svg>, UnresolvableSize when neither width/height nor viewBox give a
    usable canvas size.
    """
    try:
        node = ET.fromstring(source)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if _local_name(node.tag) != "svg":
        raise MissingRoot(f"root element is <{_local_name(node.tag)}>, expected <svg>")
    root = _convert(node)
    width, height = _resolve_size(root)
    return SvgDocument(root=root, width=width, height=height)


def _write_element(elem: SvgElement, out: list[str], indent: int) -> None:
    pad = "  " * indent
    attrs = "".join(
        f" {k}={quoteattr(v)}" for k, v in sorted(elem.attributes.items())
    )
    if not elem.children and elem.text_content is None:
        out.append(f"{pad}<{elem.source_tag}{attrs}/>")
        return
    out.append(f"{pad}<{elem.source_tag}{attrs}>")
    if elem.text_content is not None:
        out.append(f"{pad}  {escape(elem.text_content)}")
    for child in elem.children:
        _write_element(child, out, indent + 1)
    out.append(f"{pad}</{elem.source_tag}>")


def serialize_svg(doc: SvgDocument) -> str:
    """Write the normalized tree back out as SVG text.

    Attribute order is canonicalized (sorted), so parse -> serialize ->
    parse reproduces the same tree.
    """
    lines: list[str] = []
    _write_element(doc.root, lines, 0)
    return "\n".join(lines) + "\n"


def _matches_deny(elem: SvgElement, deny: tuple[str, ...]) -> bool:
    haystacks = []
    cls = elem.attributes.get("class")
    if cls:
        haystacks.append(cls.lower())
    ident = elem.attributes.get("id")
    if ident:
        haystacks.append(ident.lower())
    if not haystacks:
        return False
    return any(entry in hay for hay in haystacks for entry in deny)


def filter_reference_elements(
    doc: SvgDocument, deny_list: tuple[str, ...] | list[str] = DEFAULT_DENY_LIST
) -> SvgDocument:
    """Drop subtrees whose class or id marks them as chart furniture.

    Matching is case-insensitive substring match against the raw class and id
    attribute values.  The root is never removed.
    """
    deny = tuple(entry.lower() for entry in deny_list)

    def keep(elem: SvgElement) -> SvgElement:
        children = [keep(c) for c in elem.children if not _matches_deny(c, deny)]
        return SvgElement(
            elem.tag,
            dict(elem.attributes),
            list(elem.class_names),
            children,
            elem.text_content,
            elem.source_tag,
        )

    return SvgDocument(root=keep(doc.root), width=doc.width, height=doc.height)


# ---------------------------------------------------------------------------
# Path data


@dataclasses.dataclass
class PathGeometry:
    vertices: list[tuple[float, float]]
    bbox: tuple[float, float, float, float]  # x, y, w, h


_CMD_ARITY = {
    "M": 2, "L": 2, "H": 1, "V": 1, "Z": 0,
    "C": 6, "Q": 4, "T": 2, "S": 4, "A": 7,
}
_NUM_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class _PathScanner:
    """Tokenizer over path data.

    Arc flags get their own read method because SVG lets them run together
    with the following number ("A1,1 0 011,0"), which breaks plain numeric
    lexing.
    """

    def __init__(self, data: str):
        self.data = data
        self.pos = 0

    def _skip_separators(self) -> None:
        while self.pos < len(self.data) and self.data[self.pos] in " \t\r\n,":
            self.pos += 1

    def peek_command(self) -> str | None:
        self._skip_separators()
        if self.pos >= len(self.data):
            return None
        ch = self.data[self.pos]
        if ch.upper() in _CMD_ARITY:
            return ch
        return None

    def take_command(self) -> str:
        cmd = self.peek_command()
        assert cmd is not None
        self.pos += 1
        return cmd

    def at_end(self) -> bool:
        self._skip_separators()
        return self.pos >= len(self.data)

    def has_number(self) -> bool:
        self._skip_separators()
        if self.pos >= len(self.data):
            return False
        return _NUM_RE.match(self.data, self.pos) is not None

    def read_number(self) -> float:
        self._skip_separators()
        m = _NUM_RE.match(self.data, self.pos)
        if m is None:
            raise BadPathData(
                f"expected number at offset {self.pos} in {self.data[:60]!r}"
            )
        self.pos = m.end()
        return float(m.group(0))

    def read_flag(self) -> float:
        self._skip_separators()
        if self.pos >= len(self.data) or self.data[self.pos] not in "01":
            raise BadPathData(f"expected arc flag at offset {self.pos}")
        ch = self.data[self.pos]
        self.pos += 1
        return float(ch)


def parse_path_geometry(d: str) -> PathGeometry:
    """Extract command endpoints and the tight bbox from a path d string.

    Curves contribute only their endpoints; Z closes the subpath without
    adding a vertex.  Empty input yields an empty geometry with a zero bbox.
    Raises BadPathData for unknown commands, wrong argument counts, or a
    drawing command before the first moveto.
    """
    scanner = _PathScanner(d)
    vertices: list[tuple[float, float]] = []
    cx = cy = 0.0
    sx = sy = 0.0
    seen_move = False

    while not scanner.at_end():
        cmd_char = scanner.peek_command()
        if cmd_char is None:
            raise BadPathData(
                f"expected command at offset {scanner.pos} in {d[:60]!r}"
            )
        scanner.take_command()
        cmd = cmd_char.upper()
        relative = cmd_char.islower()
        if not seen_move and cmd != "M":
            raise BadPathData(f"path must start with a moveto, got {cmd_char!r}")

        first_group = True
        while True:
            if cmd == "Z":
                cx, cy = sx, sy
                break
            if not first_group and not scanner.has_number():
                break
            if first_group and not scanner.has_number():
                raise BadPathData(f"command {cmd_char!r} is missing arguments")

            if cmd == "A":
                scanner.read_number()  # rx
                scanner.read_number()  # ry
                scanner.read_number()  # x-axis rotation
                scanner.read_flag()
                scanner.read_flag()
                x = scanner.read_number()
                y = scanner.read_number()
                if relative:
                    x, y = cx + x, cy + y
                cx, cy = x, y
                vertices.append((cx, cy))
            elif cmd == "H":
                x = scanner.read_number()
                cx = cx + x if relative else x
                vertices.append((cx, cy))
            elif cmd == "V":
                y = scanner.read_number()
                cy = cy + y if relative else y
                vertices.append((cx, cy))
            else:
                arity = _CMD_ARITY[cmd]
                args = [scanner.read_number() for _ in range(arity)]
                x, y = args[-2], args[-1]
                if relative:
                    x, y = cx + x, cy + y
                cx, cy = x, y
                vertices.append((cx, cy))
                if cmd == "M":
                    sx, sy = cx, cy
                    seen_move = True
                    # Extra coordinate pairs after a moveto are implicit
                    # linetos in the same (absolute/relative) frame.
                    cmd = "L"
            first_group = False

    if not vertices:
        return PathGeometry(vertices=[], bbox=(0.0, 0.0, 0.0, 0.0))
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    x0, y0 = min(xs), min(ys)
    return PathGeometry(
        vertices=vertices, bbox=(x0, y0, max(xs) - x0, max(ys) - y0)
    )


# ---------------------------------------------------------------------------
# Colors


@dataclasses.dataclass(frozen=True)
class Rgba:
    r: float
    g: float
    b: float
    a: float

    def __iter__(self):
        yield from (self.r, self.g, self.b, self.a)


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


# CSS3 extended color keywords.
_NAMED_COLORS = {
    "aliceblue": "f0f8ff", "antiquewhite": "faebd7", "aqua": "00ffff",
    "aquamarine": "7fffd4", "azure": "f0ffff", "beige": "f5f5dc",
    "bisque": "ffe4c4", "black": "000000", "blanchedalmond": "ffebcd",
    "blue": "0000ff", "blueviolet": "8a2be2", "brown": "a52a2a",
    "burlywood": "deb887", "cadetblue": "5f9ea0", "chartreuse": "7fff00",
    "chocolate": "d2691e", "coral": "ff7f50", "cornflowerblue": "6495ed",
    "cornsilk": "fff8dc", "crimson": "dc143c", "cyan": "00ffff",
    "darkblue": "00008b", "darkcyan": "008b8b", "darkgoldenrod": "b8860b",
    "darkgray": "a9a9a9", "darkgreen": "006400", "darkgrey": "a9a9a9",
    "darkkhaki": "bdb76b", "darkmagenta": "8b008b", "darkolivegreen": "556b2f",
    "darkorange": "ff8c00", "darkorchid": "9932cc", "darkred": "8b0000",
    "darksalmon": "e9967a", "darkseagreen": "8fbc8f", "darkslateblue": "483d8b",
    "darkslategray": "2f4f4f", "darkslategrey": "2f4f4f",
    "darkturquoise": "00ced1", "darkviolet": "9400d3", "deeppink": "ff1493",
    "deepskyblue": "00bfff", "dimgray": "696969", "dimgrey": "696969",
    "dodgerblue": "1e90ff", "firebrick": "b22222", "floralwhite": "fffaf0",
    "forestgreen": "228b22", "fuchsia": "ff00ff", "gainsboro": "dcdcdc",
    "ghostwhite": "f8f8ff", "gold": "ffd700", "goldenrod": "daa520",
    "gray": "808080", "green": "008000", "greenyellow": "adff2f",
    "grey": "808080", "honeydew": "f0fff0", "hotpink": "ff69b4",
    "indianred": "cd5c5c", "indigo": "4b0082", "ivory": "fffff0",
    "khaki": "f0e68c", "lavender": "e6e6fa", "lavenderblush": "fff0f5",
    "lawngreen": "7cfc00", "lemonchiffon": "fffacd", "lightblue": "add8e6",
    "lightcoral": "f08080", "lightcyan": "e0ffff",
    "lightgoldenrodyellow": "fafad2", "lightgray": "d3d3d3",
    "lightgreen": "90ee90", "lightgrey": "d3d3d3", "lightpink": "ffb6c1",
    "lightsalmon": "ffa07a", "lightseagreen": "20b2aa",
    "lightskyblue": "87cefa", "lightslategray": "778899",
    "lightslategrey": "778899", "lightsteelblue": "b0c4de",
    "lightyellow": "ffffe0", "lime": "00ff00", "limegreen": "32cd32",
    "linen": "faf0e6", "magenta": "ff00ff", "maroon": "800000",
    "mediumaquamarine": "66cdaa", "mediumblue": "0000cd",
    "mediumorchid": "ba55d3", "mediumpurple": "9370db",
    "mediumseagreen": "3cb371", "mediumslateblue": "7b68ee",
    "mediumspringgreen": "00fa9a", "mediumturquoise": "48d1cc",
    "mediumvioletred": "c71585", "midnightblue": "191970",
    "mintcream": "f5fffa", "mistyrose": "ffe4e1", "moccasin": "ffe4b5",
    "navajowhite": "ffdead", "navy": "000080", "oldlace": "fdf5e6",
    "olive": "808000", "olivedrab": "6b8e23", "orange": "ffa500",
    "orangered": "ff4500", "orchid": "da70d6", "palegoldenrod": "eee8aa",
    "palegreen": "98fb98", "paleturquoise": "afeeee",
    "palevioletred": "db7093", "papayawhip": "ffefd5", "peachpuff": "ffdab9",
    "peru": "cd853f", "pink": "ffc0cb", "plum": "dda0dd",
    "powderblue": "b0e0e6", "purple": "800080", "red": "ff0000",
    "rosybrown": "bc8f8f", "royalblue": "4169e1", "saddlebrown": "8b4513",
    "salmon": "fa8072", "sandybrown": "f4a460", "seagreen": "2e8b57",
    "seashell": "fff5ee", "sienna": "a0522d", "silver": "c0c0c0",
    "skyblue": "87ceeb", "slateblue": "6a5acd", "slategray": "708090",
    "slategrey": "708090", "snow": "fffafa", "springgreen": "00ff7f",
    "steelblue": "4682b4", "tan": "d2b48c", "teal": "008080",
    "thistle": "d8bfd8", "tomato": "ff6347", "turquoise": "40e0d0",
    "violet": "ee82ee", "wheat": "f5deb3", "white": "ffffff",
    "whitesmoke": "f5f5f5", "yellow": "ffff00", "yellowgreen": "9acd32",
}

_RGB_FUNC_RE = re.compile(r"^rgba?\(([^)]*)\)$")


def _rgb_component(token: str) -> float:
    token = token.strip()
    if token.endswith("%"):
        return _clamp01(float(token[:-1]) / 100.0)
    return _clamp01(float(token) / 255.0)


def parse_color(value: str) -> Rgba:
    """Parse a CSS color into unit-range RGBA.

    Accepts hex (#rgb, #rrggbb, with optional alpha digits), rgb()/rgba(),
    CSS named colors, and "none", which maps to fully transparent black.
    Raises BadColor otherwise.  Out-of-range components clamp to [0, 1].
    """
    text = value.strip().lower()
    if not text:
        raise BadColor("empty color string")
    if text == "none":
        return Rgba(0.0, 0.0, 0.0, 0.0)

    if text.startswith("#"):
        digits = text[1:]
        if not re.fullmatch(r"[0-9a-f]+", digits or "x"):
            raise BadColor(f"bad hex color {value!r}")
        if len(digits) in (3, 4):
            digits = "".join(ch * 2 for ch in digits)
        if len(digits) == 6:
            digits += "ff"
        if len(digits) != 8:
            raise BadColor(f"bad hex color {value!r}")
        r, g, b, a = (int(digits[i : i + 2], 16) / 255.0 for i in (0, 2, 4, 6))
        return Rgba(r, g, b, a)

    m = _RGB_FUNC_RE.match(text)
    if m:
        parts = [p.strip() for p in m.group(1).split(",")]
        if len(parts) not in (3, 4):
            raise BadColor(f"bad rgb() arity in {value!r}")
        try:
            r, g, b = (_rgb_component(p) for p in parts[:3])
            a = 1.0
            if len(parts) == 4:
                tok = parts[3]
                a = _clamp01(float(tok[:-1]) / 100.0 if tok.endswith("%") else float(tok))
        except ValueError as exc:
            raise BadColor(f"bad rgb() component in {value!r}") from exc
        return Rgba(r, g, b, a)

    hexval = _NAMED_COLORS.get(text)
    if hexval is not None:
        r, g, b = (int(hexval[i : i + 2], 16) / 255.0 for i in (0, 2, 4))
        return Rgba(r, g, b, 1.0)

    raise BadColor(f"unsupported color {value!r}")


def parse_style(style: str) -> dict[str, str]:
    """Split an inline style attribute into a property map. Last wins."""
    props: dict[str, str] = {}
    for chunk in style.split(";"):
        if ":" not in chunk:
            continue
        key, val = chunk.split(":", 1)
        key = key.strip().lower()
        if key:
            props[key] = val.strip()
    return props
