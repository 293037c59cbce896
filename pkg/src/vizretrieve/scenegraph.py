"""Chart structure as a graph the encoder can consume.

The element tree becomes a bidirectional graph: hierarchy edges mirror
parent/child links, every leaf gets one self-loop so its own features
survive aggregation, and leaves that sit side by side under the same group
are chained left-to-right with neighbor edges.  Group nodes that merely
wrap zero or one child are spliced out first; they carry no structure.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import EmptyGraph, VizRetrieveError
from .features import (
    FEATURE_DIM,
    FEATURE_LAYOUT_VERSION,
    ElementFeatures,
    FeatureOptions,
    build_orderings,
    element_bbox,
    extract_features,
)
from .svgmodel import (
    DEFAULT_DENY_LIST,
    SvgDocument,
    SvgElement,
    filter_reference_elements,
    parse_path_geometry,
    parse_svg,
)

EDGE_HIERARCHY = 0
EDGE_SELF = 1
EDGE_NEIGHBOR = 2
EDGE_KIND_NAMES = ("hierarchy", "self_loop", "neighbor")

GRAPH_FORMAT = "visgraph"
GRAPH_FORMAT_VERSION = 1


@dataclasses.dataclass
class VisGraph:
    features: np.ndarray  # (n, FEATURE_DIM) float64
    tags: list[str]
    parent: np.ndarray  # (n,) int64, -1 at the root
    edges: np.ndarray  # (m, 3) int64 rows of (src, dst, kind)
    canvas: tuple[float, float]
    source_id: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.tags)

    def children_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_nodes, dtype=np.int64)
        for p in self.parent:
            if p >= 0:
                counts[p] += 1
        return counts

    def is_leaf(self) -> np.ndarray:
        return self.children_counts() == 0

    def leaf_count(self) -> int:
        return int(self.is_leaf().sum())


class _TreeView:
    """Mutable parent/children view used while pruning."""

    def __init__(self, root: SvgElement):
        self.root = root
        self.children: dict[int, list[SvgElement]] = {}
        self.parent: dict[int, SvgElement | None] = {id(root): None}
        stack = [root]
        while stack:
            elem = stack.pop()
            self.children[id(elem)] = list(elem.children)
            for child in elem.children:
                self.parent[id(child)] = elem
                stack.append(child)

    def all_elements(self) -> list[SvgElement]:
        order = []
        stack = [self.root]
        while stack:
            elem = stack.pop()
            order.append(elem)
            stack.extend(reversed(self.children[id(elem)]))
        return order

    def prune_thin_groups(self) -> None:
        # A <g> with at most one child adds no grouping information: splice
        # its child (if any) into its slot and drop it.  Repeat until stable
        # since removals can thin out ancestors.
        changed = True
        while changed:
            changed = False
            for elem in self.all_elements():
                if elem is self.root or elem.tag != "g":
                    continue
                kids = self.children[id(elem)]
                if len(kids) > 1:
                    continue
                parent = self.parent[id(elem)]
                siblings = self.children[id(parent)]
                slot = siblings.index(elem)
                if kids:
                    siblings[slot] = kids[0]
                    self.parent[id(kids[0])] = parent
                else:
                    siblings.pop(slot)
                del self.children[id(elem)]
                del self.parent[id(elem)]
                changed = True


def build_graph(
    doc: SvgDocument,
    features: dict[int, ElementFeatures],
    source_id: str = "",
) -> VisGraph:
    """Assemble the graph from a filtered document and its element features.

    ``features`` is keyed by ``id(element)`` over the document's elements.
    Raises EmptyGraph when nothing visible remains under the root.
    """
    view = _TreeView(doc.root)
    view.prune_thin_groups()
    if not view.children[id(doc.root)]:
        raise EmptyGraph(f"{source_id or 'document'}: no visible elements")

    order = view.all_elements()
    index = {id(elem): i for i, elem in enumerate(order)}
    n = len(order)

    feat = np.zeros((n, FEATURE_DIM))
    tags = []
    parent = np.full(n, -1, dtype=np.int64)
    for i, elem in enumerate(order):
        feat[i] = features[id(elem)].vector()
        tags.append(elem.tag)
        p = view.parent[id(elem)]
        if p is not None:
            parent[i] = index[id(p)]

    edges: list[tuple[int, int, int]] = []
    for i, elem in enumerate(order):
        if parent[i] >= 0:
            edges.append((int(parent[i]), i, EDGE_HIERARCHY))
            edges.append((i, int(parent[i]), EDGE_HIERARCHY))

    leaf = [len(view.children[id(elem)]) == 0 for elem in order]
    for i in range(n):
        if leaf[i]:
            edges.append((i, i, EDGE_SELF))

    # Neighbor chains: per group, leaves sorted left to right by bbox center
    # (ties by y, then document order), consecutive pairs linked both ways.
    for gi, elem in enumerate(order):
        kids = view.children[id(elem)]
        entries = []
        for child in kids:
            ci = index[id(child)]
            if not leaf[ci]:
                continue
            bbox = element_bbox(child)
            center = (
                (bbox[0] + bbox[2] / 2.0, bbox[1] + bbox[3] / 2.0) if bbox else (0.0, 0.0)
            )
            entries.append((ci, center))
        ranked = sorted(
            range(len(entries)),
            key=lambda k: (entries[k][1][0], entries[k][1][1], k),
        )
        for a, b in zip(ranked, ranked[1:]):
            u, v = entries[a][0], entries[b][0]
            edges.append((u, v, EDGE_NEIGHBOR))
            edges.append((v, u, EDGE_NEIGHBOR))

    return VisGraph(
        features=feat,
        tags=tags,
        parent=parent,
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 3),
        canvas=(doc.width, doc.height),
        source_id=source_id,
    )


def prune_groups(graph: VisGraph) -> VisGraph:
    """Splice out <g> nodes with at most one hierarchy partner besides their
    parent.  Already-built graphs come out of build_graph fully pruned, so
    running this twice is the same as running it once."""
    parent = graph.parent.copy()
    alive = np.ones(graph.n_nodes, dtype=bool)

    def child_counts() -> np.ndarray:
        counts = np.zeros(graph.n_nodes, dtype=np.int64)
        for i in range(graph.n_nodes):
            if alive[i] and parent[i] >= 0:
                counts[parent[i]] += 1
        return counts

    changed = True
    while changed:
        changed = False
        counts = child_counts()
        for i in range(graph.n_nodes):
            if not alive[i] or graph.tags[i] != "g" or parent[i] < 0:
                continue
            if counts[i] > 1:
                continue
            for j in range(graph.n_nodes):
                if alive[j] and parent[j] == i:
                    parent[j] = parent[i]
            alive[i] = False
            changed = True
            counts = child_counts()

    keep = np.flatnonzero(alive)
    remap = {int(old): new for new, old in enumerate(keep)}
    new_parent = np.array(
        [remap[int(parent[old])] if parent[old] >= 0 else -1 for old in keep],
        dtype=np.int64,
    )
    new_edges = []
    for src, dst, kind in graph.edges:
        if kind == EDGE_HIERARCHY:
            continue  # rebuilt below from the spliced parent array
        if alive[src] and alive[dst]:
            new_edges.append((remap[int(src)], remap[int(dst)], int(kind)))
    for new_id, old in enumerate(keep):
        p = new_parent[new_id]
        if p >= 0:
            new_edges.append((int(p), new_id, EDGE_HIERARCHY))
            new_edges.append((new_id, int(p), EDGE_HIERARCHY))

    return VisGraph(
        features=graph.features[keep].copy(),
        tags=[graph.tags[int(old)] for old in keep],
        parent=new_parent,
        edges=np.asarray(sorted(new_edges), dtype=np.int64).reshape(-1, 3),
        canvas=graph.canvas,
        source_id=graph.source_id,
    )


def graph_from_svg(
    svg_text: str,
    source_id: str = "",
    deny_list=DEFAULT_DENY_LIST,
    options: FeatureOptions | None = None,
    ordering_scope: str = "group",
) -> VisGraph:
    """Full front half of the pipeline: parse, filter, featurize, build.

    ``ordering_scope`` picks whether position differences are computed
    within each sibling group ("group") or across every positioned element
    of the chart ("global").
    """
    if ordering_scope not in ("group", "global"):
        raise VizRetrieveError(f"unknown ordering scope {ordering_scope!r}")
    doc = parse_svg(svg_text)
    doc = filter_reference_elements(doc, deny_list)

    elements = list(doc.root.iter_subtree())
    geometries = {}
    for elem in elements:
        if elem.tag == "path":
            try:
                geometries[id(elem)] = parse_path_geometry(elem.attributes.get("d", ""))
            except Exception:
                geometries[id(elem)] = None

    def center_of(elem: SvgElement):
        bbox = element_bbox(elem, geometries.get(id(elem)))
        if bbox is None:
            return None
        return (bbox[0] + bbox[2] / 2.0, bbox[1] + bbox[3] / 2.0)

    orderings = {}
    if ordering_scope == "group":
        for elem in elements:
            entries = []
            for child in elem.children:
                c = center_of(child)
                if c is not None:
                    entries.append((id(child), c))
            if entries:
                orderings.update(build_orderings(entries))
    else:
        entries = [(id(e), c) for e in elements if (c := center_of(e)) is not None]
        if entries:
            orderings.update(build_orderings(entries))

    canvas = (doc.width, doc.height)
    features = {
        id(elem): extract_features(
            elem,
            canvas,
            geometry=geometries.get(id(elem)),
            ordering=orderings.get(id(elem)),
            options=options,
        )
        for elem in elements
    }
    return build_graph(doc, features, source_id=source_id)


# ---------------------------------------------------------------------------
# Serialization: one JSON header line, then one JSON record per graph.


def write_graphs(path: str | Path, graphs: list[VisGraph], meta: dict | None = None) -> None:
    header = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_FORMAT_VERSION,
        "feature_dim": FEATURE_DIM,
        "feature_layout": FEATURE_LAYOUT_VERSION,
    }
    header.update(meta or {})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for g in graphs:
            record = {
                "id": g.source_id,
                "canvas": [g.canvas[0], g.canvas[1]],
                "tags": g.tags,
                "parent": g.parent.tolist(),
                "features": g.features.tolist(),
                "edges": g.edges.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def read_graphs(path: str | Path) -> tuple[list[VisGraph], dict]:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise VizRetrieveError(f"{path}: empty graph file")
        header = json.loads(header_line)
        if header.get("format") != GRAPH_FORMAT or header.get("version") != GRAPH_FORMAT_VERSION:
            raise VizRetrieveError(f"{path}: unsupported graph file format")
        if header.get("feature_dim") != FEATURE_DIM:
            raise VizRetrieveError(
                f"{path}: feature dim {header.get('feature_dim')} does not match {FEATURE_DIM}"
            )
        if header.get("feature_layout") != FEATURE_LAYOUT_VERSION:
            raise VizRetrieveError(
                f"{path}: feature layout {header.get('feature_layout')} does not match"
                f" {FEATURE_LAYOUT_VERSION}"
            )
        graphs = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            graphs.append(
                VisGraph(
                    features=np.asarray(rec["features"], dtype=np.float64).reshape(
                        -1, FEATURE_DIM
                    ),
                    tags=list(rec["tags"]),
                    parent=np.asarray(rec["parent"], dtype=np.int64),
                    edges=np.asarray(rec["edges"], dtype=np.int64).reshape(-1, 3),
                    canvas=(float(rec["canvas"][0]), float(rec["canvas"][1])),
                    source_id=rec["id"],
                )
            )
    return graphs, header
