"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately written in a different style from the
package code (plain loops, no shared helpers) so that agreement between
the two is evidence, not tautology.
"""

from __future__ import annotations

import math

import numpy as np
import pytest


# ---------------------------------------------------------------------------
# Finite-difference gradient checking


def fd_gradient(func, arrays, index, eps=1e-5):
    """Central-difference gradient of scalar ``func(arrays)`` w.r.t. one array."""
    base = arrays[index]
    grad = np.zeros_like(base, dtype=np.float64)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = func(arrays)
        flat[i] = keep - eps
        lo = func(arrays)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def assert_grads_close(analytic, numeric, tol=1e-4, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    worst = float(rel.max()) if rel.size else 0.0
    assert worst < tol, f"worst relative gradient error {worst:.3e}"
    return worst


# ---------------------------------------------------------------------------
# Naive metric / retrieval oracles


def naive_tcr(query_label, labels):
    if len(labels) == 0:
        raise ValueError("empty")
    same = 0
    for lab in labels:
        if lab == query_label:
            same += 1
    return same / len(labels)


def naive_dve(nq, nr):
    if nq < 1:
        raise ValueError("bad query count")
    return abs(nr - nq) / nq


def naive_topk(ids, matrix, query_vec, k, exclude=None):
    """Brute-force cosine top-k with (-score, id) tie ordering."""
    qn = math.sqrt(float(sum(x * x for x in query_vec)))
    scored = []
    for i, cid in enumerate(ids):
        if exclude is not None and cid == exclude:
            continue
        row = matrix[i]
        rn = math.sqrt(float(sum(x * x for x in row)))
        denom = (qn if qn > 0 else 1e-300) * (rn if rn > 0 else 1e-300)
        score = float(sum(a * b for a, b in zip(query_vec, row))) / denom
        scored.append((cid, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


# ---------------------------------------------------------------------------
# Naive HOG oracle (loops only, no vectorization)


def naive_hog(img, cell=8, block=2, bins=9):
    h, w = img.shape[:2]
    gray = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            px = img[r, c]
            gray[r, c] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]

    gy = np.gradient(gray, axis=0)
    gx = np.gradient(gray, axis=1)
    mag = np.sqrt(gx * gx + gy * gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    ncy, ncx = h // cell, w // cell
    hist = np.zeros((ncy, ncx, bins))
    width = 180.0 / bins
    for r in range(h):
        for c in range(w):
            cy, cx = r // cell, c // cell
            t = ang[r, c] / width - 0.5
            b0 = int(np.floor(t))
            frac = t - b0
            hist[cy, cx, b0 % bins] += mag[r, c] * (1.0 - frac)
            hist[cy, cx, (b0 + 1) % bins] += mag[r, c] * frac

    out = []
    for by in range(ncy - block + 1):
        for bx in range(ncx - block + 1):
            v = hist[by : by + block, bx : bx + block, :].reshape(-1)
            v = v / np.sqrt(float((v * v).sum()) + 1e-12)
            out.append(v)
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------------------
# Graph helpers


def permute_graph(graph, perm):
    """Relabel nodes of a VisGraph by ``perm`` (new id = perm[old id])."""
    from vizretrieve.scenegraph import VisGraph

    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    n = graph.n_nodes
    features = graph.features[inv]
    tags = [graph.tags[inv[i]] for i in range(n)]
    parent = np.full(n, -1, dtype=np.int64)
    for old in range(n):
        p = graph.parent[old]
        if p >= 0:
            parent[perm[old]] = perm[p]
    edges = graph.edges.copy()
    edges[:, 0] = perm[graph.edges[:, 0]]
    edges[:, 1] = perm[graph.edges[:, 1]]
    return VisGraph(
        features=features,
        tags=tags,
        parent=parent,
        edges=edges,
        canvas=graph.canvas,
        source_id=graph.source_id,
    )


# ---------------------------------------------------------------------------
# Tiny document builders used across test modules


BAR_SVG = (
    '<svg xmlns="http://www.w3.org/2000/svg" width="100" height="80">'
    '<g class="gridlayer"><path d="M0,40H100" stroke="#eee"/></g>'
    '<g class="plot">'
    '<g class="points">'
    '<path class="point" d="M10,70V30H25V70Z" fill="#336699"/>'
    '<path class="point" d="M40,70V20H55V70Z" fill="#336699"/>'
    '<path class="point" d="M70,70V45H85V70Z" fill="#336699"/>'
    "</g></g>"
    '<text class="gtitle" x="50" y="12">demo</text>'
    "</svg>"
)


@pytest.fixture
def bar_svg() -> str:
    return BAR_SVG


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
