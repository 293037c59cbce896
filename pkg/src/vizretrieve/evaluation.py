"""Retrieval quality metrics and report generation.

Two numbers per query: the fraction of retrieved charts sharing the
query's type, and the element-count difference |n_retrieved - n_query|
normalized by the query's count (averaged over the k results).  Reports
aggregate both as mean and population standard deviation over the query
set, per mode and per k, and include a per-type confusion matrix of what
got retrieved for what.
"""

from __future__ import annotations

import base64
import dataclasses
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BadCount, MissingBitmap, UnknownId, VizRetrieveError
from .retrieval import MODES, RetrievalIndex, query_topk


def type_consistency_rate(query_label: str, retrieved_labels: list[str]) -> float:
    """Fraction of retrieved items that share the query's type label."""
    if not retrieved_labels:
        raise BadCount("no retrieved labels to score")
    same = sum(1 for l in retrieved_labels if l == query_label)
    return same / len(retrieved_labels)


def element_count_difference(n_query: int, n_retrieved: int) -> float:
    """|n_retrieved - n_query| / n_query for visible-element counts."""
    if n_query < 1:
        raise BadCount(f"query element count must be >= 1, got {n_query}")
    if n_retrieved < 0:
        raise BadCount(f"retrieved element count must be >= 0, got {n_retrieved}")
    return abs(n_retrieved - n_query) / n_query


@dataclasses.dataclass
class ModeStats:
    tcr_ave: float
    tcr_std: float
    dve_ave: float
    dve_std: float


@dataclasses.dataclass
class EvalReport:
    modes: list[str]
    ks: list[int]
    stats: dict[str, dict[int, ModeStats]]
    confusion: dict[str, dict[int, tuple[list[str], np.ndarray]]]
    meta: dict

    def to_json(self) -> str:
        payload = {
            "meta": self.meta,
            "modes": self.modes,
            "ks": self.ks,
            "results": {
                mode: {
                    str(k): dataclasses.asdict(self.stats[mode][k]) for k in self.ks
                }
                for mode in self.modes
            },
            "confusion": {
                mode: {
                    str(k): {
                        "types": self.confusion[mode][k][0],
                        "matrix": self.confusion[mode][k][1].tolist(),
                    }
                    for k in self.ks
                }
                for mode in self.modes
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        lines = [
            "| top-k | mode | TCR_ave | TCR_std | DVE_ave | DVE_std |",
            "|------:|------|--------:|--------:|--------:|--------:|",
        ]
        for k in self.ks:
            for mode in self.modes:
                s = self.stats[mode][k]
                lines.append(
                    f"| {k} | {mode} | {s.tcr_ave:.4f} | {s.tcr_std:.4f} "
                    f"| {s.dve_ave:.4f} | {s.dve_std:.4f} |"
                )
        return "\n".join(lines) + "\n"

    def confusion_csv(self, mode: str, k: int) -> str:
        types, matrix = self.confusion[mode][k]
        lines = ["query_type," + ",".join(types)]
        for t, row in zip(types, matrix):
            lines.append(t + "," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"


def evaluate(
    index: RetrievalIndex,
    query_ids: list[str],
    ks: tuple[int, ...] = (1, 5, 10, 20),
    modes: tuple[str, ...] = MODES,
    dve_std_scope: str = "query",
    meta: dict | None = None,
) -> EvalReport:
    """Score every mode at every k over the given query set.

    Queries are processed in sorted id order, so a permuted query list
    produces an identical report.  ``dve_std_scope`` selects whether the
    DVE deviation is taken over per-query means ("query") or over all
    query-result pairs ("pair"); the mean is the same either way because k
    is fixed.
    """
    if dve_std_scope not in ("query", "pair"):
        raise VizRetrieveError(f"unknown dve_std_scope {dve_std_scope!r}")
    for mode in modes:
        if mode not in MODES:
            raise VizRetrieveError(f"unknown mode {mode!r}")
    queries = sorted(set(query_ids))
    if not queries:
        raise VizRetrieveError("no query ids")
    for qid in queries:
        index.position(qid)  # raises UnknownId early

    label_of = dict(zip(index.ids, index.labels))
    count_of = dict(zip(index.ids, (int(c) for c in index.counts)))
    all_types = sorted(set(index.labels))
    type_pos = {t: i for i, t in enumerate(all_types)}

    stats: dict[str, dict[int, ModeStats]] = {}
    confusion: dict[str, dict[int, tuple[list[str], np.ndarray]]] = {}
    max_k = max(ks)
    for mode in modes:
        stats[mode] = {}
        confusion[mode] = {}
        hits = {qid: query_topk(index, qid, max_k, mode) for qid in queries}
        for k in ks:
            tcr_vals, dve_means, dve_pairs = [], [], []
            conf = np.zeros((len(all_types), len(all_types)))
            type_totals = np.zeros(len(all_types))
            for qid in queries:
                top = hits[qid][:k]
                labels = [label_of[rid] for rid, _ in top]
                tcr_vals.append(type_consistency_rate(label_of[qid], labels))
                dvals = [
                    element_count_difference(count_of[qid], count_of[rid])
                    for rid, _ in top
                ]
                dve_means.append(float(np.mean(dvals)))
                dve_pairs.extend(dvals)
                qrow = type_pos[label_of[qid]]
                type_totals[qrow] += 1
                for l in labels:
                    conf[qrow, type_pos[l]] += 1.0 / len(top)
            dve_spread = dve_means if dve_std_scope == "query" else dve_pairs
            stats[mode][k] = ModeStats(
                tcr_ave=float(np.mean(tcr_vals)),
                tcr_std=float(np.std(tcr_vals)),
                dve_ave=float(np.mean(dve_means)),
                dve_std=float(np.std(dve_spread)),
            )
            nz = type_totals > 0
            conf[nz] /= type_totals[nz, None]
            confusion[mode][k] = (all_types, conf)

    full_meta = {"n_queries": len(queries), "dve_std_scope": dve_std_scope}
    full_meta.update(meta or {})
    return EvalReport(
        modes=list(modes), ks=list(ks), stats=stats, confusion=confusion, meta=full_meta
    )


def write_report(
    report: EvalReport,
    json_path: str | Path | None = None,
    markdown_path: str | Path | None = None,
    confusion_dir: str | Path | None = None,
) -> None:
    if json_path:
        Path(json_path).write_text(report.to_json(), encoding="utf-8")
    if markdown_path:
        Path(markdown_path).write_text(report.to_markdown(), encoding="utf-8")
    if confusion_dir:
        out = Path(confusion_dir)
        out.mkdir(parents=True, exist_ok=True)
        for mode in report.modes:
            for k in report.ks:
                (out / f"confusion_{mode}_top{k}.csv").write_text(
                    report.confusion_csv(mode, k), encoding="utf-8"
                )


# ---------------------------------------------------------------------------
# Gallery


def _thumbnail_data_uri(path: Path, height: int = 120) -> str:
    if not path.exists():
        raise MissingBitmap(str(path))
    with Image.open(path) as img:
        img = img.convert("RGB")
        w = max(1, int(round(img.width * height / img.height)))
        img = img.resize((w, height))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def render_gallery(
    index: RetrievalIndex,
    bitmap_paths: dict[str, Path],
    query_ids: list[str],
    k: int,
    modes: tuple[str, ...],
    out_path: str | Path,
) -> None:
    """Static HTML page: one row per (query, mode) with the query thumbnail
    followed by its top-k results and scores.  Thumbnails are embedded, the
    file opens with no server."""
    for qid in query_ids:
        index.position(qid)
    rows = []
    for qid in query_ids:
        if qid not in bitmap_paths:
            raise MissingBitmap(f"no bitmap path for {qid!r}")
        qthumb = _thumbnail_data_uri(Path(bitmap_paths[qid]))
        for mode in modes:
            cells = [
                '<td class="query"><img src="{}"><div>{} ({})</div></td>'.format(
                    qthumb, qid, mode
                )
            ]
            for rid, score in query_topk(index, qid, k, mode):
                if rid not in bitmap_paths:
                    raise MissingBitmap(f"no bitmap path for {rid!r}")
                thumb = _thumbnail_data_uri(Path(bitmap_paths[rid]))
                cells.append(
                    f'<td><img src="{thumb}"><div>{rid}<br>{score:.4f}</div></td>'
                )
            rows.append("<tr>" + "".join(cells) + "</tr>")
    html = (
        "<!doctype html><html><head><meta charset='utf-8'>"
        "<title>retrieval gallery</title><style>"
        "body{font-family:sans-serif;background:#fafafa}"
        "table{border-collapse:collapse}"
        "td{border:1px solid #ccc;padding:4px;text-align:center;"
        "font-size:11px;vertical-align:top}"
        "td.query{background:#eef}"
        "img{display:block;margin:0 auto 2px}"
        "</style></head><body><table>" + "".join(rows) + "</table></body></html>"
    )
    Path(out_path).write_text(html, encoding="utf-8")
