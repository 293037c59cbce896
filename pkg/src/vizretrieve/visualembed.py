"""Visual signatures of rendered charts.

Two routes to a vector per bitmap: a small CNN trained with the SimSiam
objective on two augmented views of the same chart, and a handcrafted
histogram-of-oriented-gradients descriptor as the untrained baseline.

Bitmaps are padded to squares rather than stretched, because stretching
distorts trends.  The augmentation set is deliberately narrow: crops,
cutout, color changes.  Flips and rotations are excluded by construction,
a mirrored line chart tells a different story, and the policy type has no
field that could express them.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .errors import BadGeometry, EmptyCorpus, MissingBitmap, VizRetrieveError
from .nn import checkpoint
from .nn.layers import BatchNorm1d, BatchNorm2d, Conv2d, Linear, load_params
from .nn.optim import SgdMomentum
from .nn.tensor import (
    Tensor,
    add,
    cosine_similarity,
    maxpool2d,
    mean_,
    mul,
    relu,
    reshape,
    stop_gradient,
)

Bitmap = np.ndarray  # (H, W, 3) float64 in [0, 1]


def load_bitmap(path: str | Path) -> Bitmap:
    p = Path(path)
    if not p.exists():
        raise MissingBitmap(str(p))
    with Image.open(p) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_bitmap(path: str | Path, img: Bitmap) -> None:
    arr = np.clip(img, 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path, format="PNG")


def pad_to_square(img: Bitmap, fill: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Bitmap:
    """Center the image on a side = max(H, W) square filled with ``fill``.

    An odd leftover pixel goes to the bottom or right band.
    """
    h, w = img.shape[:2]
    side = max(h, w)
    out = np.empty((side, side, 3), dtype=np.float64)
    out[:, :] = fill
    top = (side - h) // 2
    left = (side - w) // 2
    out[top : top + h, left : left + w] = img
    return out


def resize_bilinear(img: Bitmap, size: int) -> Bitmap:
    h, w = img.shape[:2]
    if h == size and w == size:
        return img.astype(np.float64).copy()
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = img[y0[:, None], x0[None, :]] * (1 - fx) + img[y0[:, None], x1[None, :]] * fx
    bot = img[y1[:, None], x0[None, :]] * (1 - fx) + img[y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


@dataclasses.dataclass
class AugmentPolicy:
    """Random view generation for contrastive training.

    There is intentionally no way to express a flip or rotation here.
    ``crop_scale`` is the area fraction range of the random crop; cutout
    patches are filled with the padding color.
    """

    out_size: int = 64
    crop_scale: tuple[float, float] = (0.5, 1.0)
    cutout_prob: float = 0.5
    cutout_scale: tuple[float, float] = (0.1, 0.35)
    jitter_prob: float = 0.4
    jitter_strength: float = 0.4
    gray_prob: float = 0.2
    fill: tuple[float, float, float] = (1.0, 1.0, 1.0)


def augment(img: Bitmap, policy: AugmentPolicy, rng: np.random.Generator) -> Bitmap:
    """One random view of a square bitmap at the policy's output size."""
    h, w = img.shape[:2]
    if h != w:
        raise BadGeometry(f"augment expects a square bitmap, got {h}x{w}")
    side = h

    area = rng.uniform(policy.crop_scale[0], policy.crop_scale[1])
    crop_side = max(1, min(side, int(round(np.sqrt(area) * side))))
    y0 = int(rng.integers(0, side - crop_side + 1))
    x0 = int(rng.integers(0, side - crop_side + 1))
    view = img[y0 : y0 + crop_side, x0 : x0 + crop_side]
    view = resize_bilinear(view, policy.out_size)

    u = rng.random()
    if u < policy.jitter_prob:
        s = policy.jitter_strength
        brightness = rng.uniform(1.0 - s, 1.0 + s)
        contrast = rng.uniform(1.0 - s, 1.0 + s)
        saturation = rng.uniform(1.0 - s, 1.0 + s)
        view = view * brightness
        mean = view.mean()
        view = (view - mean) * contrast + mean
        gray = view @ np.array([0.299, 0.587, 0.114])
        view = gray[..., None] + (view - gray[..., None]) * saturation
    elif u < policy.jitter_prob + policy.gray_prob:
        gray = view @ np.array([0.299, 0.587, 0.114])
        view = np.repeat(gray[..., None], 3, axis=2)

    if rng.random() < policy.cutout_prob:
        frac = rng.uniform(policy.cutout_scale[0], policy.cutout_scale[1])
        cut = max(1, int(round(frac * policy.out_size)))
        cy = int(rng.integers(0, policy.out_size - cut + 1))
        cx = int(rng.integers(0, policy.out_size - cut + 1))
        view = view.copy()
        view[cy : cy + cut, cx : cx + cut] = policy.fill

    return np.clip(view, 0.0, 1.0)


# ---------------------------------------------------------------------------
# SimSiam


@dataclasses.dataclass
class VisualModelConfig:
    input_size: int = 64
    embed_dim: int = 64
    conv_channels: tuple[int, ...] = (8, 16, 32)
    encoder: str = "tiny"


@dataclasses.dataclass
class VisualTrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.03
    momentum: float = 0.9
    aug_source_size: int = 128
    # Which branch the gradient is blocked on.  "projection" stops the
    # projector output and trains the predictor against it; "prediction"
    # stops the predictor output instead, matching the loss as sometimes
    # written with the stopgrad around the prediction.
    stop_gradient_on: str = "projection"


class CnnEncoder:
    """conv3x3-bn-relu-maxpool stack with a dense head to the embedding.

    Inputs are centered around 0 before the first convolution: chart
    bitmaps are mostly white, and without the shift (and the per-channel
    batch normalization) every chart lands on nearly the same embedding,
    which starves the contrastive signal.
    """

    def __init__(self, cfg: VisualModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.convs = []
        self.norms = []
        in_ch = 3
        size = cfg.input_size
        for out_ch in cfg.conv_channels:
            self.convs.append(Conv2d(in_ch, out_ch, 3, rng, pad=1))
            self.norms.append(BatchNorm2d(out_ch))
            in_ch = out_ch
            size //= 2
        if size < 1:
            raise VizRetrieveError("too many conv stages for the input size")
        self.flat_dim = in_ch * size * size
        self.head = Linear(self.flat_dim, cfg.embed_dim, rng)

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        h = add(x, -0.5)
        for conv, norm in zip(self.convs, self.norms):
            h = maxpool2d(relu(norm(conv(h), training)), 2)
        h = reshape(h, (h.data.shape[0], self.flat_dim))
        return self.head(h)

    def named_params(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, conv in enumerate(self.convs):
            params.update(conv.named_params(f"enc.conv{i}"))
        for i, norm in enumerate(self.norms):
            params.update(norm.named_params(f"enc.bn{i}"))
        params.update(self.head.named_params("enc.head"))
        return params

    def named_buffers(self) -> dict[str, np.ndarray]:
        buffers: dict[str, np.ndarray] = {}
        for i, norm in enumerate(self.norms):
            buffers.update(norm.named_buffers(f"enc.bn{i}"))
        return buffers

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for i, norm in enumerate(self.norms):
            norm.load_buffers(f"enc.bn{i}", buffers)


class ProjectionMlp:
    def __init__(self, dim: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, dim, rng)
        self.bn = BatchNorm1d(dim)
        self.fc2 = Linear(dim, dim, rng)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.fc2(relu(self.bn(self.fc1(x), training)))

    def named_params(self) -> dict[str, Tensor]:
        params = self.fc1.named_params("proj.fc1")
        params.update(self.bn.named_params("proj.bn"))
        params.update(self.fc2.named_params("proj.fc2"))
        return params


class PredictionMlp:
    """Bottleneck head: dim -> dim/4 -> dim."""

    def __init__(self, dim: int, rng: np.random.Generator):
        mid = max(dim // 4, 1)
        self.fc1 = Linear(dim, mid, rng)
        self.bn = BatchNorm1d(mid)
        self.fc2 = Linear(mid, dim, rng)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.fc2(relu(self.bn(self.fc1(x), training)))

    def named_params(self) -> dict[str, Tensor]:
        params = self.fc1.named_params("pred.fc1")
        params.update(self.bn.named_params("pred.bn"))
        params.update(self.fc2.named_params("pred.fc2"))
        return params


class SimSiamModel:
    def __init__(self, cfg: VisualModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = CnnEncoder(cfg, rng)
        self.projector = ProjectionMlp(cfg.embed_dim, rng)
        self.predictor = PredictionMlp(cfg.embed_dim, rng)

    def forward_pair(
        self, x1: Tensor, x2: Tensor, training: bool = True
    ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        v1 = self.projector(self.encoder(x1, training), training)
        v2 = self.projector(self.encoder(x2, training), training)
        p1 = self.predictor(v1, training)
        p2 = self.predictor(v2, training)
        return v1, v2, p1, p2

    def embed(self, x: Tensor) -> Tensor:
        return self.encoder(x, training=False)

    def named_params(self) -> dict[str, Tensor]:
        params = self.encoder.named_params()
        params.update(self.projector.named_params())
        params.update(self.predictor.named_params())
        return params

    def named_buffers(self) -> dict[str, np.ndarray]:
        buffers = self.encoder.named_buffers()
        buffers.update(self.projector.bn.named_buffers("proj.bn"))
        buffers.update(self.predictor.bn.named_buffers("pred.bn"))
        return buffers

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        self.encoder.load_buffers(buffers)
        self.projector.bn.load_buffers("proj.bn", buffers)
        self.predictor.bn.load_buffers("pred.bn", buffers)


def simsiam_loss(
    v1: Tensor, v2: Tensor, p1: Tensor, p2: Tensor, stop_gradient_on: str = "projection"
) -> Tensor:
    """Symmetric negative cosine between one branch and the stopped other.

    Loss = -1/2 * (cos(a1, stopgrad(b2)) + cos(a2, stopgrad(b1))) where the
    stopped branch is the projection by default.  Always lands in [-1, 1].
    """
    if stop_gradient_on == "projection":
        c1 = cosine_similarity(p1, stop_gradient(v2))
        c2 = cosine_similarity(p2, stop_gradient(v1))
    elif stop_gradient_on == "prediction":
        c1 = cosine_similarity(v1, stop_gradient(p2))
        c2 = cosine_similarity(v2, stop_gradient(p1))
    else:
        raise VizRetrieveError(f"unknown stop_gradient_on {stop_gradient_on!r}")
    return mul(add(mean_(c1), mean_(c2)), -0.5)


def _to_nchw(views: list[Bitmap]) -> np.ndarray:
    return np.stack(views).transpose(0, 3, 1, 2)


@dataclasses.dataclass
class VisualTrainResult:
    model: SimSiamModel
    epoch_losses: list[float]
    embed_std: float
    collapse_threshold: float


def prepare_square(img: Bitmap, size: int, fill=(1.0, 1.0, 1.0)) -> Bitmap:
    return resize_bilinear(pad_to_square(img, fill), size)


def train_visual_encoder(
    bitmaps: list[Bitmap],
    model_cfg: VisualModelConfig,
    train_cfg: VisualTrainConfig,
    policy: AugmentPolicy,
    seed: int,
) -> VisualTrainResult:
    if len(bitmaps) < 2:
        raise EmptyCorpus(f"need at least 2 bitmaps to train, got {len(bitmaps)}")
    if model_cfg.encoder != "tiny":
        raise VizRetrieveError(
            f"encoder {model_cfg.encoder!r} is recorded for reference but only "
            "'tiny' is trainable here"
        )
    if policy.out_size != model_cfg.input_size:
        raise VizRetrieveError(
            f"augment out_size {policy.out_size} != encoder input_size "
            f"{model_cfg.input_size}; the two must agree"
        )
    init_rng, shuffle_rng, aug_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    model = SimSiamModel(model_cfg, init_rng)
    named = model.named_params()
    params = [named[k] for k in sorted(named)]
    opt = SgdMomentum(params, lr=train_cfg.lr, momentum=train_cfg.momentum)

    sources = [
        prepare_square(b, train_cfg.aug_source_size, policy.fill) for b in bitmaps
    ]
    losses = []
    for _ in range(train_cfg.epochs):
        order = shuffle_rng.permutation(len(sources))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            if len(idx) < 2:
                continue  # batch statistics need company
            view1 = _to_nchw([augment(sources[i], policy, aug_rng) for i in idx])
            view2 = _to_nchw([augment(sources[i], policy, aug_rng) for i in idx])
            opt.zero_grad()
            v1, v2, p1, p2 = model.forward_pair(Tensor(view1), Tensor(view2), training=True)
            loss = simsiam_loss(v1, v2, p1, p2, train_cfg.stop_gradient_on)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data)
            n_batches += 1
        losses.append(epoch_loss / max(n_batches, 1))

    emb = embed_bitmaps(model, bitmaps, model_cfg.input_size, fill=policy.fill)
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    embed_std = float(unit.std(axis=0).mean())
    threshold = 0.1 / np.sqrt(model_cfg.embed_dim)
    return VisualTrainResult(
        model=model,
        epoch_losses=losses,
        embed_std=embed_std,
        collapse_threshold=float(threshold),
    )


def embed_bitmaps(
    model: SimSiamModel,
    bitmaps: list[Bitmap],
    input_size: int,
    fill=(1.0, 1.0, 1.0),
    chunk_size: int = 64,
) -> np.ndarray:
    """Encoder embeddings of un-augmented, square-padded bitmaps, float32."""
    if not bitmaps:
        raise EmptyCorpus("no bitmaps to embed")
    rows = []
    for start in range(0, len(bitmaps), chunk_size):
        chunk = bitmaps[start : start + chunk_size]
        x = _to_nchw([prepare_square(b, input_size, fill) for b in chunk])
        rows.append(model.embed(Tensor(x)).data.astype(np.float32))
    return np.concatenate(rows, axis=0)


def save_visual_checkpoint(
    path, result: VisualTrainResult, model_cfg: VisualModelConfig, meta: dict | None = None
) -> None:
    arrays = {name: t.data for name, t in result.model.named_params().items()}
    for name, buf in result.model.named_buffers().items():
        arrays[f"buffer.{name}"] = buf
    full_meta = {
        "kind": "visual",
        "input_size": model_cfg.input_size,
        "embed_dim": model_cfg.embed_dim,
        "conv_channels": list(model_cfg.conv_channels),
        "encoder": model_cfg.encoder,
        "epoch_losses": [float(x) for x in result.epoch_losses],
        "embed_std": result.embed_std,
        "collapse_threshold": result.collapse_threshold,
    }
    full_meta.update(meta or {})
    checkpoint.save_arrays(path, arrays, full_meta)


def load_visual_model(path) -> tuple[SimSiamModel, dict]:
    arrays, meta = checkpoint.load_arrays(path)
    if meta.get("kind") != "visual":
        raise VizRetrieveError(f"{path}: not a visual checkpoint")
    cfg = VisualModelConfig(
        input_size=int(meta["input_size"]),
        embed_dim=int(meta["embed_dim"]),
        conv_channels=tuple(int(c) for c in meta["conv_channels"]),
        encoder=str(meta.get("encoder", "tiny")),
    )
    model = SimSiamModel(cfg, np.random.default_rng(0))
    params = {k: v for k, v in arrays.items() if not k.startswith("buffer.")}
    load_params(model.named_params(), params)
    model.load_buffers(
        {k[len("buffer.") :]: v for k, v in arrays.items() if k.startswith("buffer.")}
    )
    return model, meta


# ---------------------------------------------------------------------------
# Histogram of oriented gradients


def hog_descriptor(
    img: Bitmap, cell: int = 8, block: int = 2, bins: int = 9
) -> np.ndarray:
    """Classic dense gradient-orientation descriptor.

    Pipeline, pinned exactly so an independent reimplementation can match
    it to float precision: luma grayscale (0.299, 0.587, 0.114); gradients
    per np.gradient (central differences inside, one-sided at borders);
    unsigned angles in [0, 180) split linearly between the two nearest of
    ``bins`` orientation-bin centers at (i + 0.5) * 180/bins; per-cell
    magnitude-weighted histograms; every block x block cell window (stride
    one cell) flattened in (row, col, bin) order and L2-normalized as
    v / sqrt(sum(v^2) + 1e-12); blocks concatenated row-major.

    A constant image has zero gradients everywhere and yields the zero
    vector.  Raises BadGeometry when the image does not divide into whole
    cells or is smaller than one block.
    """
    h, w = img.shape[:2]
    if h % cell or w % cell:
        raise BadGeometry(f"{h}x{w} image does not divide into {cell}px cells")
    ncy, ncx = h // cell, w // cell
    if ncy < block or ncx < block:
        raise BadGeometry(f"{ncy}x{ncx} cell grid is smaller than one {block}x{block} block")

    gray = img @ np.array([0.299, 0.587, 0.114]) if img.ndim == 3 else img.astype(np.float64)
    gy = np.gradient(gray, axis=0)
    gx = np.gradient(gray, axis=1)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    width = 180.0 / bins
    t = ang / width - 0.5
    i0 = np.floor(t)
    frac = t - i0
    bin0 = (i0.astype(np.int64)) % bins
    bin1 = (bin0 + 1) % bins
    hist = kernels.hog_accumulate(mag, bin0, 1.0 - frac, bin1, frac, cell, bins)

    nby, nbx = ncy - block + 1, ncx - block + 1
    windows = np.lib.stride_tricks.sliding_window_view(hist, (block, block), axis=(0, 1))
    blocks = windows.transpose(0, 1, 3, 4, 2).reshape(nby, nbx, block * block * bins)
    norms = np.sqrt((blocks * blocks).sum(axis=2, keepdims=True) + 1e-12)
    return (blocks / norms).ravel()


def hog_dim(size: int, cell: int = 8, block: int = 2, bins: int = 9) -> int:
    nc = size // cell
    nb = nc - block + 1
    return nb * nb * block * block * bins
