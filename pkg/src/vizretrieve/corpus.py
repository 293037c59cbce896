"""Corpus manifests: ingestion, labels, and the train/test split.

A manifest is a JSONL file with one header line followed by one record per
corpus item.  All records are serialized with sorted keys, so reading a
manifest and writing it back reproduces the file byte for byte.

Ingestion pairs ``<id>.svg`` with ``<id>.png``, runs each SVG through the
parsing pipeline to count visible elements, and drops anything that fails
with a logged reason rather than aborting the whole run.  The element count
stored here is always the pipeline's own answer; ground-truth sidecars are
compared against it in tests, never copied into it.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import EmptyCorpus, NoValidPairs, TypeTooSmall, VizRetrieveError
from .scenegraph import graph_from_svg

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "viz-manifest"
MANIFEST_VERSION = 1


@dataclasses.dataclass
class CorpusItem:
    id: str
    svg: str
    png: str
    label: str
    n_elements: int
    split: str = ""


@dataclasses.dataclass
class Manifest:
    seed: int
    config_hash: str
    items: list[CorpusItem] = dataclasses.field(default_factory=list)

    def by_split(self, split: str) -> list[CorpusItem]:
        return [item for item in self.items if item.split == split]

    def labels(self) -> dict[str, str]:
        return {item.id: item.label for item in self.items}


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "count": len(manifest.items),
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for item in manifest.items:
            fh.write(json.dumps(dataclasses.asdict(item), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise VizRetrieveError(f"{path}: empty manifest file")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise VizRetrieveError(f"{path}: not a manifest file")
    if header.get("version") != MANIFEST_VERSION:
        raise VizRetrieveError(f"{path}: unsupported manifest version {header.get('version')}")
    items = [CorpusItem(**json.loads(line)) for line in lines[1:]]
    if len(items) != header.get("count"):
        raise VizRetrieveError(
            f"{path}: header count {header.get('count')} != {len(items)} records"
        )
    return Manifest(seed=header["seed"], config_hash=header["config_hash"], items=items)


def item_paths(manifest_path: str | Path, item: CorpusItem) -> tuple[Path, Path]:
    """Resolve an item's file paths relative to the manifest's directory."""
    base = Path(manifest_path).parent
    return base / item.svg, base / item.png


def _load_labels(corpus_dir: Path) -> dict[str, str]:
    sidecar = corpus_dir / "ground_truth.jsonl"
    if sidecar.exists():
        labels = {}
        with open(sidecar, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    labels[rec["id"]] = rec["label"]
        return labels
    plain = corpus_dir / "labels.json"
    if plain.exists():
        return json.loads(plain.read_text(encoding="utf-8"))
    return {}


def _bitmap_ok(path: Path) -> str | None:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        return f"unreadable bitmap: {exc}"
    if arr.size == 0:
        return "empty bitmap"
    if bool((arr == arr.reshape(-1, 3)[0]).all()):
        return "blank bitmap"
    return None


def ingest(
    corpus_dir: str | Path,
    config,
    seed: int | None = None,
    config_digest: str = "",
) -> tuple[Manifest, list[tuple[str, str]]]:
    """Scan a directory of svg/png pairs into a manifest.

    Returns the manifest plus a list of (id, reason) rejects.  Raises
    NoValidPairs if nothing usable is found.
    """
    root = Path(corpus_dir)
    svg_paths = sorted(root.glob("*.svg"))
    labels = _load_labels(root)

    items: list[CorpusItem] = []
    rejects: list[tuple[str, str]] = []
    for svg_path in svg_paths:
        item_id = svg_path.stem
        png_path = svg_path.with_suffix(".png")
        if not png_path.exists():
            rejects.append((item_id, "missing bitmap"))
            continue
        reason = _bitmap_ok(png_path)
        if reason is not None:
            rejects.append((item_id, reason))
            continue
        try:
            graph = graph_from_svg(
                svg_path.read_text(encoding="utf-8"),
                source_id=item_id,
                deny_list=config.deny_list,
                ordering_scope=config.ordering_scope,
            )
        except VizRetrieveError as exc:
            rejects.append((item_id, f"{type(exc).__name__}: {exc}"))
            continue
        items.append(
            CorpusItem(
                id=item_id,
                svg=svg_path.name,
                png=png_path.name,
                label=labels.get(item_id, "unknown"),
                n_elements=graph.leaf_count(),
                split="",
            )
        )
    if not items:
        raise NoValidPairs(f"{corpus_dir}: no usable svg/png pairs")
    for item_id, reason in rejects:
        log.warning("rejected %s: %s", item_id, reason)
    return (
        Manifest(
            seed=config.seed if seed is None else seed,
            config_hash=config_digest,
            items=items,
        ),
        rejects,
    )


def split_manifest(manifest: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Stratified train/test split, deterministic for a given seed.

    Every chart type needs at least two items so each side of the split is
    populated; the train count per type is clamped to [1, n-1].
    """
    if not manifest.items:
        raise EmptyCorpus("cannot split an empty manifest")
    if not 0.0 < train_fraction < 1.0:
        raise VizRetrieveError(f"train_fraction must be in (0, 1), got {train_fraction}")

    by_label: dict[str, list[int]] = {}
    for pos, item in enumerate(manifest.items):
        by_label.setdefault(item.label, []).append(pos)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignment: dict[int, str] = {}
    for label in sorted(by_label):
        positions = sorted(by_label[label], key=lambda p: manifest.items[p].id)
        n = len(positions)
        if n < 2:
            raise TypeTooSmall(f"type {label!r} has {n} item(s); need at least 2 to split")
        n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
        perm = rng.permutation(n)
        chosen = {positions[k] for k in perm[:n_train]}
        for pos in positions:
            assignment[pos] = "train" if pos in chosen else "test"

    items = [
        dataclasses.replace(item, split=assignment[pos])
        for pos, item in enumerate(manifest.items)
    ]
    return Manifest(seed=manifest.seed, config_hash=manifest.config_hash, items=items)
