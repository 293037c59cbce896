"""Corpus generation, ingest, and the train/test split."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from vizretrieve.config import default_config
from vizretrieve.corpus import (
    Manifest,
    ingest,
    item_paths,
    read_manifest,
    split_manifest,
    write_manifest,
)
from vizretrieve.errors import (
    EmptyCorpus,
    NoValidPairs,
    TypeTooSmall,
    VizRetrieveError,
)
from vizretrieve.scenegraph import graph_from_svg
from vizretrieve.synth import CHART_TYPES, generate_corpus


def dir_bytes(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


# ---------------------------------------------------------------------------
# Generation


def test_generate_corpus_byte_deterministic(tmp_path):
    counts = {"bar": 3, "box": 2, "line": 2, "scatter": 2}
    a, b = tmp_path / "a", tmp_path / "b"
    r1 = generate_corpus(a, counts, seed=11)
    r2 = generate_corpus(b, counts, seed=11)
    assert r1 == r2
    assert dir_bytes(a) == dir_bytes(b)


def test_generate_corpus_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_corpus(a, {"bar": 2}, seed=1)
    generate_corpus(b, {"bar": 2}, seed=2)
    assert dir_bytes(a) != dir_bytes(b)


def test_generate_corpus_counts_and_naming(tmp_path):
    records = generate_corpus(tmp_path / "c", {"bar": 3, "line": 2}, seed=0)
    ids = [r["id"] for r in records]
    assert ids == ["bar_0000", "bar_0001", "bar_0002", "line_0000", "line_0001"]
    for r in records:
        assert (tmp_path / "c" / f"{r['id']}.svg").exists()
        assert (tmp_path / "c" / f"{r['id']}.png").exists()
        assert r["n_elements"] >= 2  # marks plus at least the title
    sidecar = (tmp_path / "c" / "ground_truth.jsonl").read_text().splitlines()
    assert [json.loads(line) for line in sidecar] == records


def test_generate_corpus_rejects_unknown_type(tmp_path):
    with pytest.raises(ValueError, match="unknown chart types"):
        generate_corpus(tmp_path, {"pie": 1}, seed=0)


def test_single_chart_regenerates_independently(tmp_path):
    # Child seeding means the first bar chart does not depend on how many
    # other charts the run asked for.
    generate_corpus(tmp_path / "big", {"bar": 3}, seed=9)
    generate_corpus(tmp_path / "small", {"bar": 1}, seed=9)
    assert (tmp_path / "big" / "bar_0000.svg").read_bytes() == (
        tmp_path / "small" / "bar_0000.svg"
    ).read_bytes()


def test_pngs_are_not_blank(tmp_path):
    generate_corpus(tmp_path / "c", {t: 1 for t in CHART_TYPES}, seed=3)
    for png in (tmp_path / "c").glob("*.png"):
        arr = np.asarray(Image.open(png).convert("RGB"))
        assert len(np.unique(arr.reshape(-1, 3), axis=0)) > 1


# ---------------------------------------------------------------------------
# Manifest file format


def sample_manifest(tmp_path):
    generate_corpus(tmp_path / "c", {"bar": 2, "line": 2}, seed=4)
    manifest, rejects = ingest(tmp_path / "c", default_config(), config_digest="ffff")
    assert rejects == []
    return manifest


def test_manifest_byte_round_trip(tmp_path):
    manifest = sample_manifest(tmp_path)
    p1, p2 = tmp_path / "m1.jsonl", tmp_path / "m2.jsonl"
    write_manifest(manifest, p1)
    back = read_manifest(p1)
    assert back == manifest
    write_manifest(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_validations(tmp_path):
    manifest = sample_manifest(tmp_path)
    path = tmp_path / "m.jsonl"
    write_manifest(manifest, path)

    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.jsonl"

    bad.write_text("")
    with pytest.raises(VizRetrieveError, match="empty"):
        read_manifest(bad)

    header = json.loads(lines[0])
    header["format"] = "something-else"
    bad.write_text("\n".join([json.dumps(header)] + lines[1:]))
    with pytest.raises(VizRetrieveError, match="not a manifest"):
        read_manifest(bad)

    header = json.loads(lines[0])
    header["version"] = 99
    bad.write_text("\n".join([json.dumps(header)] + lines[1:]))
    with pytest.raises(VizRetrieveError, match="version"):
        read_manifest(bad)

    bad.write_text("\n".join(lines[:-1]))  # drop one record
    with pytest.raises(VizRetrieveError, match="count"):
        read_manifest(bad)


def test_item_paths_relative_to_manifest(tmp_path):
    manifest = sample_manifest(tmp_path)
    mpath = tmp_path / "c" / "manifest.jsonl"
    write_manifest(manifest, mpath)
    svg, png = item_paths(mpath, manifest.items[0])
    assert svg.parent == tmp_path / "c"
    assert svg.exists() and png.exists()


# ---------------------------------------------------------------------------
# Ingest


def test_ingest_counts_match_sidecar(tmp_path):
    generate_corpus(tmp_path / "c", {t: 3 for t in CHART_TYPES}, seed=6)
    sidecar = {
        rec["id"]: rec
        for rec in map(
            json.loads, (tmp_path / "c" / "ground_truth.jsonl").read_text().splitlines()
        )
    }
    manifest, rejects = ingest(tmp_path / "c", default_config())
    assert rejects == []
    assert len(manifest.items) == 12
    for item in manifest.items:
        assert item.label == sidecar[item.id]["label"]
        assert item.n_elements == sidecar[item.id]["n_elements"]


def test_ingest_rejects_broken_items(tmp_path):
    corpus = tmp_path / "c"
    generate_corpus(corpus, {"bar": 2}, seed=8)
    # Orphan svg without a bitmap.
    (corpus / "orphan.svg").write_text('<svg width="10" height="10"><rect width="5" height="5"/></svg>')
    # Unreadable bitmap.
    (corpus / "broken.svg").write_text('<svg width="10" height="10"><rect width="5" height="5"/></svg>')
    (corpus / "broken.png").write_text("this is not a png")
    # Blank bitmap.
    (corpus / "blank.svg").write_text('<svg width="10" height="10"><rect width="5" height="5"/></svg>')
    Image.new("RGB", (10, 10), (255, 255, 255)).save(corpus / "blank.png")
    # Unparseable document with a fine bitmap.
    (corpus / "badxml.svg").write_text("<svg><rect")
    Image.new("RGB", (10, 10), (0, 0, 0)).save(corpus / "badxml.png")
    (corpus / "badxml.png").write_bytes((corpus / "bar_0000.png").read_bytes())

    manifest, rejects = ingest(corpus, default_config())
    assert sorted(item.id for item in manifest.items) == ["bar_0000", "bar_0001"]
    reasons = dict(rejects)
    assert reasons["orphan"] == "missing bitmap"
    assert "unreadable" in reasons["broken"]
    assert reasons["blank"] == "blank bitmap"
    assert "MalformedXml" in reasons["badxml"]


def test_ingest_raises_when_nothing_usable(tmp_path):
    corpus = tmp_path / "c"
    corpus.mkdir()
    (corpus / "only.svg").write_text('<svg width="4" height="4"><rect width="2" height="2"/></svg>')
    with pytest.raises(NoValidPairs):
        ingest(corpus, default_config())


def test_ingest_label_fallbacks(tmp_path):
    corpus = tmp_path / "c"
    generate_corpus(corpus, {"bar": 2}, seed=5)
    # labels.json is honored when the jsonl sidecar is absent.
    (corpus / "ground_truth.jsonl").unlink()
    (corpus / "labels.json").write_text(json.dumps({"bar_0000": "custom"}))
    manifest, _ = ingest(corpus, default_config())
    labels = manifest.labels()
    assert labels["bar_0000"] == "custom"
    assert labels["bar_0001"] == "unknown"
    # No label source at all: everything is unknown.
    (corpus / "labels.json").unlink()
    manifest, _ = ingest(corpus, default_config())
    assert set(manifest.labels().values()) == {"unknown"}


def test_ingest_seed_and_hash_plumbing(tmp_path):
    generate_corpus(tmp_path / "c", {"bar": 2}, seed=5)
    manifest, _ = ingest(tmp_path / "c", default_config(), seed=77, config_digest="aa11")
    assert manifest.seed == 77
    assert manifest.config_hash == "aa11"
    manifest, _ = ingest(tmp_path / "c", default_config())
    assert manifest.seed == default_config().seed


# ---------------------------------------------------------------------------
# Split


def big_manifest(tmp_path, per_type=10):
    generate_corpus(tmp_path / "c", {t: per_type for t in CHART_TYPES}, seed=14)
    manifest, _ = ingest(tmp_path / "c", default_config())
    return manifest


def test_split_is_stratified(tmp_path):
    manifest = big_manifest(tmp_path)
    split = split_manifest(manifest, train_fraction=0.9, seed=2)
    for label in CHART_TYPES:
        train = [i for i in split.by_split("train") if i.label == label]
        test = [i for i in split.by_split("test") if i.label == label]
        assert len(train) == 9
        assert len(test) == 1
    # Item order and identity are untouched; only the split field changes.
    assert [i.id for i in split.items] == [i.id for i in manifest.items]


def test_split_deterministic_and_seed_sensitive(tmp_path):
    manifest = big_manifest(tmp_path)
    a = split_manifest(manifest, 0.7, seed=3)
    b = split_manifest(manifest, 0.7, seed=3)
    assert a == b
    c = split_manifest(manifest, 0.7, seed=4)
    assert [i.split for i in a.items] != [i.split for i in c.items]


def test_split_clamps_to_keep_both_sides(tmp_path):
    generate_corpus(tmp_path / "c", {"bar": 2}, seed=0)
    manifest, _ = ingest(tmp_path / "c", default_config())
    for fraction in (0.01, 0.99):
        split = split_manifest(manifest, fraction, seed=0)
        assert len(split.by_split("train")) == 1
        assert len(split.by_split("test")) == 1


def test_split_errors(tmp_path):
    manifest = big_manifest(tmp_path, per_type=2)
    with pytest.raises(VizRetrieveError, match="train_fraction"):
        split_manifest(manifest, 1.0, seed=0)
    with pytest.raises(VizRetrieveError, match="train_fraction"):
        split_manifest(manifest, 0.0, seed=0)
    with pytest.raises(EmptyCorpus):
        split_manifest(Manifest(seed=0, config_hash=""), 0.5, seed=0)
    lone = Manifest(seed=0, config_hash="", items=[manifest.items[0]])
    with pytest.raises(TypeTooSmall):
        split_manifest(lone, 0.5, seed=0)


# ---------------------------------------------------------------------------
# Generated documents hold the structural invariants end to end


def test_generated_svgs_parse_and_prune_cleanly(tmp_path):
    generate_corpus(tmp_path / "c", {t: 2 for t in CHART_TYPES}, seed=19)
    config = default_config()
    for svg_path in sorted((tmp_path / "c").glob("*.svg")):
        graph = graph_from_svg(
            svg_path.read_text(),
            source_id=svg_path.stem,
            deny_list=config.deny_list,
            ordering_scope=config.ordering_scope,
        )
        assert graph.n_nodes >= 2
        assert graph.leaf_count() >= 1
        # Dense ids, root first.
        assert graph.parent[0] == -1
        assert (graph.parent[1:] >= 0).all()
