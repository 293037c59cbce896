"""Engine configuration: one dataclass tree, JSON in and out.

Two presets ship: the desk preset (default constructor values, sized to
train on a laptop CPU in minutes) and the reference preset with the large
published hyperparameters (512-dim embeddings, batch 128, a ResNet-50
backbone marker).  The reference preset documents those settings; only the
tiny encoder is trainable in this package.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .errors import VizRetrieveError
from .structembed import StructModelConfig, StructTrainConfig
from .svgmodel import DEFAULT_DENY_LIST
from .visualembed import AugmentPolicy, VisualModelConfig, VisualTrainConfig


@dataclasses.dataclass
class EngineConfig:
    seed: int = 0
    deny_list: tuple[str, ...] = DEFAULT_DENY_LIST
    ordering_scope: str = "group"  # or "global"
    loess_bandwidth: float = 0.5
    train_fraction: float = 0.9
    struct_model: StructModelConfig = dataclasses.field(default_factory=StructModelConfig)
    struct_train: StructTrainConfig = dataclasses.field(default_factory=StructTrainConfig)
    visual_model: VisualModelConfig = dataclasses.field(default_factory=VisualModelConfig)
    visual_train: VisualTrainConfig = dataclasses.field(default_factory=VisualTrainConfig)
    augment: AugmentPolicy = dataclasses.field(default_factory=AugmentPolicy)
    hog_size: int = 64
    hog_cell: int = 8
    hog_block: int = 2
    hog_bins: int = 9
    eval_ks: tuple[int, ...] = (1, 5, 10, 20)
    dve_std_scope: str = "query"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        def build(klass, payload):
            if payload is None:
                return klass()
            fields = {f.name for f in dataclasses.fields(klass)}
            unknown = set(payload) - fields
            if unknown:
                raise VizRetrieveError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
            kwargs = dict(payload)
            for key, val in kwargs.items():
                if isinstance(val, list):
                    kwargs[key] = tuple(val)
            return klass(**kwargs)

        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise VizRetrieveError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name, klass in (
            ("struct_model", StructModelConfig),
            ("struct_train", StructTrainConfig),
            ("visual_model", VisualModelConfig),
            ("visual_train", VisualTrainConfig),
            ("augment", AugmentPolicy),
        ):
            if name in kwargs:
                kwargs[name] = build(klass, kwargs[name])
        for key, val in kwargs.items():
            if isinstance(val, list):
                kwargs[key] = tuple(val)
        return cls(**kwargs)


def default_config() -> EngineConfig:
    return EngineConfig()


def reference_config() -> EngineConfig:
    """The published large-scale settings, recorded for reference runs."""
    return EngineConfig(
        struct_model=StructModelConfig(hidden_dim=512, num_layers=2),
        struct_train=StructTrainConfig(epochs=40, batch_size=128, lr=1e-3),
        visual_model=VisualModelConfig(input_size=224, embed_dim=512, encoder="resnet50"),
        visual_train=VisualTrainConfig(epochs=200, batch_size=128, lr=0.025),
    )


PRESETS = {"desk": default_config, "reference": reference_config}


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        return default_config()
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise VizRetrieveError(f"{path}: bad config JSON: {exc}") from exc
    if isinstance(data, str):
        if data not in PRESETS:
            raise VizRetrieveError(f"unknown preset {data!r}")
        return PRESETS[data]()
    return EngineConfig.from_dict(data)


def save_config(config: EngineConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def config_hash(config: EngineConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
