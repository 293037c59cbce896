"""Exact cosine retrieval over stored chart embeddings.

The index is a flat binary file: magic, JSON header (format and feature
layout versions, per-kind dimensions, checkpoint ids, config hash, seed),
CRC32 of the header, then one fixed-width record per chart holding its id,
type label, visible-element count, and the three float32 embeddings.  The
fused mode normalizes the structural and visual halves to unit length and
concatenates, structural half first, so each half contributes equally to
the cosine.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    BadCount,
    EmptyCorpus,
    EmptyRetrieval,
    UnknownId,
    UnknownMode,
    VizRetrieveError,
    ZeroVector,
)
from .features import FEATURE_LAYOUT_VERSION

EMBED_KINDS = ("struct", "visual", "hog")
MODES = EMBED_KINDS + ("fused",)

INDEX_MAGIC = b"VZIDX001"
INDEX_FORMAT_VERSION = 1


class RetrievalIndex:
    def __init__(
        self,
        ids: list[str],
        labels: list[str],
        counts: np.ndarray,
        embeddings: dict[str, np.ndarray],
        meta: dict | None = None,
    ):
        if not ids:
            raise EmptyCorpus("index needs at least one item")
        n = len(ids)
        if len(labels) != n or len(counts) != n:
            raise VizRetrieveError("ids, labels and counts must align")
        if len(set(ids)) != n:
            raise VizRetrieveError("duplicate ids in index")
        for kind in EMBED_KINDS:
            if kind not in embeddings:
                raise VizRetrieveError(f"missing {kind} embeddings")
            emb = embeddings[kind]
            if emb.shape[0] != n or emb.ndim != 2:
                raise VizRetrieveError(f"{kind} embeddings misshapen: {emb.shape}")
            if not np.isfinite(emb).all():
                raise VizRetrieveError(f"{kind} embeddings contain non-finite values")
        for kind in ("struct", "visual"):
            norms = np.linalg.norm(embeddings[kind].astype(np.float64), axis=1)
            if (norms == 0).any():
                bad = ids[int(np.argmax(norms == 0))]
                raise ZeroVector(f"{kind} embedding of {bad!r} is all zero")
        self.ids = list(ids)
        self.labels = list(labels)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.embeddings = {k: embeddings[k].astype(np.float32) for k in EMBED_KINDS}
        self.meta = dict(meta or {})
        self._pos = {cid: i for i, cid in enumerate(self.ids)}
        self._unit_cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, chart_id: str) -> int:
        if chart_id not in self._pos:
            raise UnknownId(chart_id)
        return self._pos[chart_id]

    def mode_matrix(self, mode: str) -> np.ndarray:
        """Row-normalized float64 matrix for one mode (cached)."""
        if mode not in MODES:
            raise UnknownMode(f"{mode!r} not in {MODES}")
        if mode not in self._unit_cache:
            if mode == "fused":
                mat = np.concatenate(
                    [
                        _unit_rows(self.embeddings["struct"].astype(np.float64)),
                        _unit_rows(self.embeddings["visual"].astype(np.float64)),
                    ],
                    axis=1,
                )
                # Each half has norm 1, so rows of the fused matrix have
                # norm sqrt(2); normalize once more for cosine scoring.
                self._unit_cache[mode] = mat / np.sqrt(2.0)
            else:
                self._unit_cache[mode] = _unit_rows(
                    self.embeddings[mode].astype(np.float64)
                )
        return self._unit_cache[mode]

    def vector(self, chart_id: str, mode: str) -> np.ndarray:
        """The stored (unnormalized) vector of one chart in one mode."""
        i = self.position(chart_id)
        if mode == "fused":
            return fuse(
                self.embeddings["struct"][i].astype(np.float64),
                self.embeddings["visual"][i].astype(np.float64),
            )
        if mode not in MODES:
            raise UnknownMode(f"{mode!r} not in {MODES}")
        return self.embeddings[mode][i].astype(np.float64)


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return mat / np.maximum(norms, 1e-300)


def fuse(struct_vec: np.ndarray, visual_vec: np.ndarray) -> np.ndarray:
    """Concatenate the unit-normalized halves, structural first.

    The result always has norm sqrt(2).  Raises ZeroVector when either
    half cannot be normalized.
    """
    s = np.asarray(struct_vec, dtype=np.float64)
    v = np.asarray(visual_vec, dtype=np.float64)
    sn = np.linalg.norm(s)
    vn = np.linalg.norm(v)
    if sn == 0 or vn == 0:
        raise ZeroVector("cannot fuse a zero-norm embedding")
    return np.concatenate([s / sn, v / vn])


def query_topk(
    index: RetrievalIndex,
    query: str | np.ndarray,
    k: int,
    mode: str = "fused",
) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity.

    ``query`` is either a chart id present in the index (the chart itself
    is excluded from its own results) or a raw vector in the mode's space.
    Results are sorted by descending score; equal scores order by ascending
    id.  Raises BadCount for k < 1 and EmptyRetrieval when no candidate
    remains.
    """
    if mode not in MODES:
        raise UnknownMode(f"{mode!r} not in {MODES}")
    if k < 1:
        raise BadCount(f"k must be >= 1, got {k}")

    exclude = None
    if isinstance(query, str):
        exclude = index.position(query)
        qvec = index.vector(query, mode)
    else:
        qvec = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(qvec)
    if qn == 0:
        raise ZeroVector("query vector is all zero")
    qunit = qvec / qn

    mat = index.mode_matrix(mode)
    if qunit.shape[0] != mat.shape[1]:
        raise VizRetrieveError(
            f"query dim {qunit.shape[0]} does not match index dim {mat.shape[1]}"
        )
    scores = mat @ qunit

    candidates = [i for i in range(len(index)) if i != exclude]
    if not candidates:
        raise EmptyRetrieval("no candidates besides the query itself")
    candidates.sort(key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in candidates[:k]]


# ---------------------------------------------------------------------------
# On-disk format


def write_index(path: str | Path, index: RetrievalIndex) -> None:
    id_width = max(len(cid.encode("utf-8")) for cid in index.ids)
    label_width = max(max((len(l.encode("utf-8")) for l in index.labels), default=1), 1)
    dims = {k: int(index.embeddings[k].shape[1]) for k in EMBED_KINDS}
    header = {
        "format_version": INDEX_FORMAT_VERSION,
        "feature_layout": FEATURE_LAYOUT_VERSION,
        "dims": dims,
        "count": len(index),
        "id_width": id_width,
        "label_width": label_width,
        "meta": index.meta,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", zlib.crc32(header_bytes)))
        for i in range(len(index)):
            fh.write(index.ids[i].encode("utf-8").ljust(id_width, b"\x00"))
            fh.write(index.labels[i].encode("utf-8").ljust(label_width, b"\x00"))
            fh.write(struct.pack("<I", int(index.counts[i])))
            for kind in EMBED_KINDS:
                fh.write(
                    np.ascontiguousarray(index.embeddings[kind][i], dtype="<f4").tobytes()
                )


def read_index(path: str | Path) -> RetrievalIndex:
    with open(path, "rb") as fh:
        if fh.read(8) != INDEX_MAGIC:
            raise VizRetrieveError(f"{path}: not an index file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header_bytes = fh.read(hlen)
        (crc,) = struct.unpack("<I", fh.read(4))
        if zlib.crc32(header_bytes) != crc:
            raise VizRetrieveError(f"{path}: header checksum mismatch")
        header = json.loads(header_bytes)
        if header.get("format_version") != INDEX_FORMAT_VERSION:
            raise VizRetrieveError(f"{path}: unsupported index version")
        if header.get("feature_layout") != FEATURE_LAYOUT_VERSION:
            raise VizRetrieveError(
                f"{path}: feature layout {header.get('feature_layout')} does not "
                f"match this build ({FEATURE_LAYOUT_VERSION})"
            )
        n = header["count"]
        id_width = header["id_width"]
        label_width = header["label_width"]
        dims = header["dims"]
        ids, labels, counts = [], [], np.zeros(n, dtype=np.int64)
        embeddings = {k: np.zeros((n, dims[k]), dtype=np.float32) for k in EMBED_KINDS}
        for i in range(n):
            ids.append(fh.read(id_width).rstrip(b"\x00").decode("utf-8"))
            labels.append(fh.read(label_width).rstrip(b"\x00").decode("utf-8"))
            (counts[i],) = struct.unpack("<I", fh.read(4))
            for kind in EMBED_KINDS:
                raw = fh.read(4 * dims[kind])
                embeddings[kind][i] = np.frombuffer(raw, dtype="<f4")
    return RetrievalIndex(ids, labels, counts, embeddings, header.get("meta", {}))


def export_index_jsonl(index: RetrievalIndex, path: str | Path) -> None:
    """Readable JSON-lines dump of the same records, for debugging."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": index.meta, "count": len(index)}, sort_keys=True) + "\n")
        for i in range(len(index)):
            rec = {
                "id": index.ids[i],
                "label": index.labels[i],
                "n_elements": int(index.counts[i]),
            }
            for kind in EMBED_KINDS:
                rec[kind] = [float(x) for x in index.embeddings[kind][i]]
            fh.write(json.dumps(rec) + "\n")
