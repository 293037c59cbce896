"""Command-line front end.

One subcommand per pipeline stage, wired so a full experiment reads as a
shell script: synth -> ingest -> split -> build-graphs -> train-struct /
train-visual -> embed (x3) -> index -> evaluate / query / gallery.

Usage errors exit with status 2 (argparse's own convention); pipeline
errors derived from VizRetrieveError print one line to stderr and exit
with status 1.  Set VIZRETRIEVE_LOG=debug|info|warning to control log
verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, retrieval, structembed, synth, visualembed
from .config import EngineConfig, config_hash, load_config, save_config
from .errors import VizRetrieveError
from .nn import checkpoint
from .scenegraph import graph_from_svg, read_graphs, write_graphs
from .visualembed import load_bitmap

log = logging.getLogger(__name__)


def _setup_logging() -> None:
    level_name = os.environ.get("VIZRETRIEVE_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _parse_counts(text: str) -> dict[str, int]:
    counts = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise VizRetrieveError(f"bad counts entry {part!r}, expected type=N")
        key, _, num = part.partition("=")
        try:
            counts[key.strip()] = int(num)
        except ValueError as exc:
            raise VizRetrieveError(f"bad count in {part!r}") from exc
    if not counts:
        raise VizRetrieveError("empty counts spec")
    return counts


def _seed_of(args, config: EngineConfig) -> int:
    return config.seed if args.seed is None else args.seed


def _load_manifest_bitmaps(manifest_path, items):
    return [load_bitmap(corpus_mod.item_paths(manifest_path, item)[1]) for item in items]


def _train_items(manifest: corpus_mod.Manifest) -> list[corpus_mod.CorpusItem]:
    train = manifest.by_split("train")
    # An unsplit manifest trains on everything; that is deliberate for
    # quick experiments, the acceptance runs always split first.
    return train if train else list(manifest.items)


def _write_losses(path: str | None, losses: list[float]) -> None:
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses):
            fh.write(f"{epoch},{loss:.6f}\n")


def _load_embedding_store(path: str) -> tuple[list[str], np.ndarray, dict]:
    arrays, meta = checkpoint.load_arrays(path)
    if "embeddings" not in arrays or "ids" not in meta:
        raise VizRetrieveError(f"{path}: not an embedding store")
    return list(meta["ids"]), arrays["embeddings"], meta


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_synth(args, config: EngineConfig) -> int:
    counts = _parse_counts(args.counts)
    seed = _seed_of(args, config)
    records = synth.generate_corpus(args.out_dir, counts, seed)
    print(f"wrote {len(records)} chart pairs to {args.out_dir} (seed {seed})")
    return 0


def _cmd_ingest(args, config: EngineConfig) -> int:
    manifest, rejects = corpus_mod.ingest(
        args.corpus_dir, config, config_digest=config_hash(config)
    )
    manifest_path = args.manifest or str(Path(args.corpus_dir) / "manifest.jsonl")
    corpus_mod.write_manifest(manifest, manifest_path)
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as fh:
            for item_id, reason in rejects:
                fh.write(f"{item_id}\t{reason}\n")
    print(f"ingested {len(manifest.items)} items, rejected {len(rejects)} -> {manifest_path}")
    return 0


def _cmd_split(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    fraction = config.train_fraction if args.train_fraction is None else args.train_fraction
    seed = _seed_of(args, config)
    manifest = corpus_mod.split_manifest(manifest, fraction, seed)
    out = args.out or args.manifest
    corpus_mod.write_manifest(manifest, out)
    n_train = len(manifest.by_split("train"))
    n_test = len(manifest.by_split("test"))
    print(f"split {n_train} train / {n_test} test -> {out}")
    return 0


def _cmd_build_graphs(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    graphs = []
    for item in manifest.items:
        svg_path, _ = corpus_mod.item_paths(args.manifest, item)
        graphs.append(
            graph_from_svg(
                svg_path.read_text(encoding="utf-8"),
                source_id=item.id,
                deny_list=config.deny_list,
                ordering_scope=config.ordering_scope,
            )
        )
    write_graphs(
        args.out,
        graphs,
        meta={"config_hash": config_hash(config), "seed": manifest.seed},
    )
    print(f"built {len(graphs)} scene graphs -> {args.out}")
    return 0


def _cmd_train_struct(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    graphs, _ = read_graphs(args.graphs)
    by_id = {g.source_id: g for g in graphs}
    train_ids = [item.id for item in _train_items(manifest)]
    missing = [i for i in train_ids if i not in by_id]
    if missing:
        raise VizRetrieveError(f"graphs file lacks {len(missing)} train items, e.g. {missing[0]!r}")
    seed = _seed_of(args, config)
    result = structembed.train_struct_encoder(
        [by_id[i] for i in train_ids], config.struct_model, config.struct_train, seed
    )
    structembed.save_struct_checkpoint(
        args.out,
        result,
        config.struct_model,
        meta={"config_hash": config_hash(config), "seed": seed},
    )
    _write_losses(args.losses, result.epoch_losses)
    print(
        f"trained struct encoder on {len(train_ids)} graphs, "
        f"final loss {result.epoch_losses[-1]:.4f} -> {args.out}"
    )
    return 0


def _cmd_train_visual(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    items = _train_items(manifest)
    bitmaps = _load_manifest_bitmaps(args.manifest, items)
    seed = _seed_of(args, config)
    result = visualembed.train_visual_encoder(
        bitmaps, config.visual_model, config.visual_train, config.augment, seed
    )
    visualembed.save_visual_checkpoint(
        args.out,
        result,
        config.visual_model,
        meta={"config_hash": config_hash(config), "seed": seed},
    )
    _write_losses(args.losses, result.epoch_losses)
    flag = "ok" if result.embed_std >= result.collapse_threshold else "COLLAPSED"
    print(
        f"trained visual encoder on {len(items)} bitmaps, final loss "
        f"{result.epoch_losses[-1]:.4f}, embed std {result.embed_std:.4f} ({flag}) -> {args.out}"
    )
    return 0


def _cmd_embed(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    ids = [item.id for item in manifest.items]
    meta = {
        "ids": ids,
        "kind": args.kind,
        "config_hash": config_hash(config),
        "seed": manifest.seed,
    }
    if args.kind == "struct":
        if not args.checkpoint or not args.graphs:
            raise VizRetrieveError("struct embedding needs --checkpoint and --graphs")
        encoder, _, _ = structembed.load_struct_encoder(args.checkpoint)
        graphs, _ = read_graphs(args.graphs)
        by_id = {g.source_id: g for g in graphs}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise VizRetrieveError(f"graphs file lacks {missing[0]!r} and {len(missing) - 1} more")
        emb = structembed.embed_graphs(encoder, [by_id[i] for i in ids])
        meta["checkpoint"] = checkpoint.file_digest(args.checkpoint)
    elif args.kind == "visual":
        if not args.checkpoint:
            raise VizRetrieveError("visual embedding needs --checkpoint")
        model, _ = visualembed.load_visual_model(args.checkpoint)
        bitmaps = _load_manifest_bitmaps(args.manifest, manifest.items)
        emb = visualembed.embed_bitmaps(model, bitmaps, config.visual_model.input_size)
        meta["checkpoint"] = checkpoint.file_digest(args.checkpoint)
    elif args.kind == "hog":
        bitmaps = _load_manifest_bitmaps(args.manifest, manifest.items)
        rows = [
            visualembed.hog_descriptor(
                visualembed.prepare_square(b, config.hog_size),
                cell=config.hog_cell,
                block=config.hog_block,
                bins=config.hog_bins,
            ).astype(np.float32)
            for b in bitmaps
        ]
        emb = np.stack(rows, axis=0)
        meta["checkpoint"] = ""
    else:
        raise VizRetrieveError(f"unknown embedding kind {args.kind!r}")
    meta["dim"] = int(emb.shape[1])
    checkpoint.save_arrays(args.out, {"embeddings": emb}, meta)
    print(f"embedded {emb.shape[0]} items ({args.kind}, dim {emb.shape[1]}) -> {args.out}")
    return 0


def _cmd_index(args, config: EngineConfig) -> int:
    manifest = corpus_mod.read_manifest(args.manifest)
    ids = [item.id for item in manifest.items]
    embeddings = {}
    checkpoints = {}
    for kind, path in (("struct", args.struct), ("visual", args.visual), ("hog", args.hog)):
        store_ids, emb, meta = _load_embedding_store(path)
        if store_ids != ids:
            raise VizRetrieveError(f"{path}: embedding ids do not match the manifest order")
        embeddings[kind] = emb
        checkpoints[kind] = meta.get("checkpoint", "")
    index = retrieval.RetrievalIndex(
        ids=ids,
        labels=[item.label for item in manifest.items],
        counts=np.array([item.n_elements for item in manifest.items], dtype=np.int64),
        embeddings=embeddings,
        meta={
            "config_hash": config_hash(config),
            "seed": manifest.seed,
            "checkpoints": checkpoints,
        },
    )
    retrieval.write_index(args.out, index)
    if args.export_jsonl:
        retrieval.export_index_jsonl(index, args.export_jsonl)
    print(f"indexed {len(index)} items -> {args.out}")
    return 0


def _cmd_query(args, config: EngineConfig) -> int:
    index = retrieval.read_index(args.index)
    hits = retrieval.query_topk(index, args.id, k=args.k, mode=args.mode)
    for rank, (hit_id, score) in enumerate(hits, start=1):
        label = index.labels[index.position(hit_id)]
        print(f"{rank}\t{score:.6f}\t{hit_id}\t{label}")
    return 0


def _cmd_evaluate(args, config: EngineConfig) -> int:
    index = retrieval.read_index(args.index)
    if args.manifest:
        manifest = corpus_mod.read_manifest(args.manifest)
        test = manifest.by_split("test")
        query_ids = [item.id for item in (test if test else manifest.items)]
    else:
        query_ids = list(index.ids)
    ks = tuple(int(x) for x in args.ks.split(",")) if args.ks else tuple(config.eval_ks)
    modes = tuple(args.modes.split(",")) if args.modes else retrieval.MODES
    report = evaluation.evaluate(
        index,
        query_ids,
        ks=ks,
        modes=modes,
        dve_std_scope=config.dve_std_scope,
        meta={"config_hash": config_hash(config), "index": str(args.index)},
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(
        report,
        json_path=out_dir / "report.json",
        markdown_path=out_dir / "report.md",
        confusion_dir=out_dir / "confusion",
    )
    print(report.to_markdown())
    return 0


def _cmd_gallery(args, config: EngineConfig) -> int:
    index = retrieval.read_index(args.index)
    manifest = corpus_mod.read_manifest(args.manifest)
    bitmap_paths = {
        item.id: corpus_mod.item_paths(args.manifest, item)[1] for item in manifest.items
    }
    if args.queries:
        query_ids = [q.strip() for q in args.queries.split(",") if q.strip()]
    else:
        test = manifest.by_split("test")
        pool = sorted(item.id for item in (test if test else manifest.items))
        rng = np.random.default_rng(_seed_of(args, config))
        take = min(args.num, len(pool))
        query_ids = [pool[i] for i in sorted(rng.choice(len(pool), size=take, replace=False))]
    modes = tuple(args.modes.split(",")) if args.modes else retrieval.MODES
    evaluation.render_gallery(index, bitmap_paths, query_ids, args.k, modes, args.out)
    print(f"gallery with {len(query_ids)} queries -> {args.out}")
    return 0


def _cmd_show_config(args, config: EngineConfig) -> int:
    if args.out:
        save_config(config, args.out)
        print(f"config ({config_hash(config)}) -> {args.out}")
    else:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        print(f"# hash: {config_hash(config)}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vizretrieve",
        description="Structure-aware retrieval over SVG visualizations.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="engine config JSON (or a preset name in quotes)")
    common.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic chart corpus")
    p.add_argument("out_dir")
    p.add_argument("--counts", default="bar=100,box=100,line=100,scatter=100")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="scan svg/png pairs into a manifest")
    p.add_argument("corpus_dir")
    p.add_argument("--manifest")
    p.add_argument("--rejects")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", parents=[common], help="stratified train/test split")
    p.add_argument("manifest")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("build-graphs", parents=[common], help="scene graphs for every item")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_graphs)

    p = sub.add_parser("train-struct", parents=[common], help="train the graph encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--losses")
    p.set_defaults(func=_cmd_train_struct)

    p = sub.add_parser("train-visual", parents=[common], help="train the bitmap encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--losses")
    p.set_defaults(func=_cmd_train_visual)

    p = sub.add_parser("embed", parents=[common], help="embed every corpus item")
    p.add_argument("--kind", required=True, choices=("struct", "visual", "hog"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--graphs")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("index", parents=[common], help="assemble the retrieval index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--struct", required=True)
    p.add_argument("--visual", required=True)
    p.add_argument("--hog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--export-jsonl")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("query", parents=[common], help="top-k lookup for one chart")
    p.add_argument("--index", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--mode", default="fused", choices=retrieval.MODES)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("evaluate", parents=[common], help="TCR/DVE report over a query set")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", help="use the manifest's test split as queries")
    p.add_argument("--ks")
    p.add_argument("--modes")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("gallery", parents=[common], help="static HTML of example retrievals")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--queries", help="comma-separated query ids")
    p.add_argument("--num", type=int, default=8, help="sample size when --queries is absent")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--modes")
    p.set_defaults(func=_cmd_gallery)

    p = sub.add_parser("show-config", parents=[common], help="print or save the resolved config")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_show_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except VizRetrieveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
