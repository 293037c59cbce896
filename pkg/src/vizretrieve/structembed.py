"""Graph encoder for chart structure and its self-supervised training.

The encoder is a two-layer GIN: each layer computes
MLP((1 + eps) * h_v + sum of neighbor h_u) with a learnable eps per layer,
and the graph representation concatenates the sum-pooled node states of
every layer.  Training maximizes the mutual information between a graph's
representation and its own nodes while pushing it away from the nodes of
the other graphs in the batch (Jensen-Shannon estimator with softplus
scoring).  No labels anywhere.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import BatchTooSmall, EmptyCorpus, VizRetrieveError
from .features import FEATURE_DIM, FEATURE_LAYOUT_VERSION
from .nn import checkpoint
from .nn.layers import Linear, load_params
from .nn.optim import Adam
from .nn.tensor import (
    Tensor,
    add,
    concat,
    gather_rows,
    matmul,
    mul,
    relu,
    segment_sum,
    softplus,
    sum_,
    transpose,
)
from .scenegraph import EDGE_KIND_NAMES, VisGraph


@dataclasses.dataclass
class StructModelConfig:
    feature_dim: int = FEATURE_DIM
    hidden_dim: int = 64
    num_layers: int = 2
    per_edge_kind: bool = False

    @property
    def graph_dim(self) -> int:
        return self.num_layers * self.hidden_dim


@dataclasses.dataclass
class StructTrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3


@dataclasses.dataclass
class GraphBatch:
    features: np.ndarray  # (total_nodes, feature_dim)
    src: np.ndarray
    dst: np.ndarray
    edge_kind: np.ndarray
    graph_ids: np.ndarray  # (total_nodes,)
    n_graphs: int


def batch_graphs(graphs: list[VisGraph]) -> GraphBatch:
    feats, srcs, dsts, kinds, gids = [], [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        feats.append(g.features)
        if g.edges.size:
            srcs.append(g.edges[:, 0] + offset)
            dsts.append(g.edges[:, 1] + offset)
            kinds.append(g.edges[:, 2])
        gids.append(np.full(g.n_nodes, gi, dtype=np.int64))
        offset += g.n_nodes
    return GraphBatch(
        features=np.concatenate(feats, axis=0),
        src=np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64),
        dst=np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64),
        edge_kind=np.concatenate(kinds) if kinds else np.zeros(0, dtype=np.int64),
        graph_ids=np.concatenate(gids),
        n_graphs=len(graphs),
    )


class GinLayer:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, per_edge_kind: bool):
        self.eps = Tensor(np.zeros(1), requires_grad=True)
        self.fc1 = Linear(in_dim, out_dim, rng)
        self.fc2 = Linear(out_dim, out_dim, rng)
        self.kind_weights = (
            [Linear(in_dim, in_dim, rng, bias=False) for _ in EDGE_KIND_NAMES]
            if per_edge_kind
            else None
        )

    def __call__(self, h: Tensor, batch: GraphBatch) -> Tensor:
        n = h.data.shape[0]
        if self.kind_weights is None:
            agg = segment_sum(gather_rows(h, batch.src), batch.dst, n)
        else:
            agg = None
            for kind, lin in enumerate(self.kind_weights):
                mask = batch.edge_kind == kind
                if not mask.any():
                    continue
                part = lin(segment_sum(gather_rows(h, batch.src[mask]), batch.dst[mask], n))
                agg = part if agg is None else add(agg, part)
            if agg is None:
                agg = mul(h, 0.0)
        combined = add(mul(h, add(self.eps, 1.0)), agg)
        return self.fc2(relu(self.fc1(combined)))

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        params = {f"{prefix}.eps": self.eps}
        params.update(self.fc1.named_params(f"{prefix}.fc1"))
        params.update(self.fc2.named_params(f"{prefix}.fc2"))
        if self.kind_weights is not None:
            for k, lin in enumerate(self.kind_weights):
                params.update(lin.named_params(f"{prefix}.kind{k}"))
        return params


class GinEncoder:
    def __init__(self, cfg: StructModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = []
        in_dim = cfg.feature_dim
        for _ in range(cfg.num_layers):
            self.layers.append(GinLayer(in_dim, cfg.hidden_dim, rng, cfg.per_edge_kind))
            in_dim = cfg.hidden_dim

    def node_reprs(self, batch: GraphBatch) -> Tensor:
        h = Tensor(batch.features)
        outs = []
        for layer in self.layers:
            h = layer(h, batch)
            outs.append(h)
        return concat(outs, axis=1)

    def forward(self, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        """Node representations and sum-pooled graph representations."""
        nodes = self.node_reprs(batch)
        graphs = segment_sum(nodes, batch.graph_ids, batch.n_graphs)
        return nodes, graphs

    def named_params(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            params.update(layer.named_params(f"gin{i}"))
        return params


class DiscriminatorHeads:
    """Projections of node and graph representations into a shared score
    space; the discriminator score is their dot product."""

    def __init__(self, cfg: StructModelConfig, rng: np.random.Generator):
        d = cfg.graph_dim
        h = cfg.hidden_dim
        self.node_fc1 = Linear(d, h, rng)
        self.node_fc2 = Linear(h, h, rng)
        self.graph_fc1 = Linear(d, h, rng)
        self.graph_fc2 = Linear(h, h, rng)

    def project_nodes(self, nodes: Tensor) -> Tensor:
        return self.node_fc2(relu(self.node_fc1(nodes)))

    def project_graphs(self, graphs: Tensor) -> Tensor:
        return self.graph_fc2(relu(self.graph_fc1(graphs)))

    def named_params(self) -> dict[str, Tensor]:
        params = {}
        params.update(self.node_fc1.named_params("head.node_fc1"))
        params.update(self.node_fc2.named_params("head.node_fc2"))
        params.update(self.graph_fc1.named_params("head.graph_fc1"))
        params.update(self.graph_fc2.named_params("head.graph_fc2"))
        return params


def infograph_loss(
    encoder: GinEncoder, heads: DiscriminatorHeads, batch: GraphBatch
) -> Tensor:
    """Jensen-Shannon mutual-information objective.

    softplus(-score) over (node, own graph) pairs plus softplus(score) over
    (node, other graph) pairs, each averaged over its pair count.  With the
    discriminator at zero this evaluates to 2 ln 2.
    """
    if batch.n_graphs < 2:
        raise BatchTooSmall("contrastive batch needs at least two graphs")
    nodes, graphs = encoder.forward(batch)
    pn = heads.project_nodes(nodes)
    pg = heads.project_graphs(graphs)
    scores = matmul(pn, transpose(pg))  # (total_nodes, n_graphs)

    n_total = batch.graph_ids.shape[0]
    pos_mask = np.zeros((n_total, batch.n_graphs))
    pos_mask[np.arange(n_total), batch.graph_ids] = 1.0
    neg_mask = 1.0 - pos_mask
    n_pos = n_total
    n_neg = n_total * (batch.n_graphs - 1)

    pos_term = sum_(mul(softplus(mul(scores, -1.0)), Tensor(pos_mask)))
    neg_term = sum_(mul(softplus(scores), Tensor(neg_mask)))
    return add(mul(pos_term, 1.0 / n_pos), mul(neg_term, 1.0 / n_neg))


@dataclasses.dataclass
class StructTrainResult:
    encoder: GinEncoder
    heads: DiscriminatorHeads
    epoch_losses: list[float]


def train_struct_encoder(
    graphs: list[VisGraph],
    model_cfg: StructModelConfig,
    train_cfg: StructTrainConfig,
    seed: int,
) -> StructTrainResult:
    if len(graphs) < 2:
        raise EmptyCorpus(f"need at least 2 graphs to train, got {len(graphs)}")
    init_rng, shuffle_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    )
    encoder = GinEncoder(model_cfg, init_rng)
    heads = DiscriminatorHeads(model_cfg, init_rng)
    named = {**encoder.named_params(), **heads.named_params()}
    params = [named[k] for k in sorted(named)]
    opt = Adam(params, lr=train_cfg.lr)

    losses = []
    for _ in range(train_cfg.epochs):
        order = shuffle_rng.permutation(len(graphs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), train_cfg.batch_size):
            chunk = [graphs[i] for i in order[start : start + train_cfg.batch_size]]
            if len(chunk) < 2:
                continue  # a lone graph has no negatives
            batch = batch_graphs(chunk)
            opt.zero_grad()
            loss = infograph_loss(encoder, heads, batch)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data)
            n_batches += 1
        losses.append(epoch_loss / max(n_batches, 1))
    return StructTrainResult(encoder=encoder, heads=heads, epoch_losses=losses)


def embed_graphs(
    encoder: GinEncoder, graphs: list[VisGraph], chunk_size: int = 256
) -> np.ndarray:
    """Graph embeddings as float32 rows, in input order."""
    if not graphs:
        raise EmptyCorpus("no graphs to embed")
    rows = []
    for start in range(0, len(graphs), chunk_size):
        batch = batch_graphs(graphs[start : start + chunk_size])
        _, reprs = encoder.forward(batch)
        rows.append(reprs.data.astype(np.float32))
    return np.concatenate(rows, axis=0)


def save_struct_checkpoint(
    path,
    result: StructTrainResult,
    model_cfg: StructModelConfig,
    meta: dict | None = None,
) -> None:
    named = {**result.encoder.named_params(), **result.heads.named_params()}
    arrays = {name: t.data for name, t in named.items()}
    full_meta = {
        "kind": "struct",
        "feature_dim": model_cfg.feature_dim,
        "feature_layout": FEATURE_LAYOUT_VERSION,
        "hidden_dim": model_cfg.hidden_dim,
        "num_layers": model_cfg.num_layers,
        "per_edge_kind": model_cfg.per_edge_kind,
        "epoch_losses": [float(x) for x in result.epoch_losses],
    }
    full_meta.update(meta or {})
    checkpoint.save_arrays(path, arrays, full_meta)


def load_struct_encoder(path) -> tuple[GinEncoder, DiscriminatorHeads, dict]:
    arrays, meta = checkpoint.load_arrays(path)
    if meta.get("kind") != "struct":
        raise VizRetrieveError(f"{path}: not a struct checkpoint")
    cfg = StructModelConfig(
        feature_dim=int(meta["feature_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
        num_layers=int(meta["num_layers"]),
        per_edge_kind=bool(meta["per_edge_kind"]),
    )
    rng = np.random.default_rng(0)
    encoder = GinEncoder(cfg, rng)
    heads = DiscriminatorHeads(cfg, rng)
    load_params({**encoder.named_params(), **heads.named_params()}, arrays)
    return encoder, heads, meta
