from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

VARIANTS = ("full", "no_recd", "no_attnpool", "no_recd_attnpool", "no_support_neg", "no_posneg_sep")

_VARIANT_FLAGS = {
    "full": (),
    "no_recd": ("no_recd",),
    "no_attnpool": ("no_attnpool",),
    "no_recd_attnpool": ("no_recd", "no_attnpool"),
    "no_support_neg": ("no_support_neg",),
    "no_posneg_sep": ("no_posneg_sep",),
}


@dataclass
class RunConfig:
    """Run settings; defaults follow the NELL setup (5-shot, d=100, T=100)."""

    dataset_dir: str | None = None
    embeddings: str | None = None
    few: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    margin: float = 1.0
    t_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    dim: int = 100
    hidden: int | None = None
    unet_channels: tuple[int, int, int] = (64, 128, 256)
    time_width: int = 64
    embed_width: int = 128
    max_neighbors: int = 50
    agg_layers: int = 2
    n_query: int = 3
    seed: int = 0
    max_steps: int = 2000
    eval_interval: int = 100
    patience: int = 10
    filtered: bool = True
    variant: str = "full"
    freeze_embeddings: bool = False
    max_eval_queries: int | None = None
    target_mrr: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unet_channels = tuple(self.unet_channels)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.few < 1:
            raise ConfigError("few (k) must be >= 1")
        if self.batch_size < 1 or self.n_query < 1:
            raise ConfigError("batch_size and n_query must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if len(self.unet_channels) != 3:
            raise ConfigError("unet_channels needs three widths")

    # ablation flags
    def _flag(self, name) -> bool:
        return name in _VARIANT_FLAGS[self.variant]

    @property
    def no_recd(self) -> bool:
        return self._flag("no_recd")

    @property
    def no_attnpool(self) -> bool:
        return self._flag("no_attnpool")

    @property
    def no_support_neg(self) -> bool:
        return self._flag("no_support_neg")

    @property
    def no_posneg_sep(self) -> bool:
        return self._flag("no_posneg_sep")

    @property
    def hidden_size(self) -> int:
        return self.hidden or self.dim

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["unet_channels"] = list(self.unet_channels)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("dataset_dir", None)
        d.pop("embeddings", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> RunConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None


PRESETS = {
    "nell": dict(lr=1e-3, batch_size=64),
    "fb15k": dict(lr=1e-4, batch_size=32),
    # desk-scale settings for the synthetic fixture
    "synthetic": dict(
        lr=1e-3, batch_size=8, dim=32, unet_channels=(32, 64, 64), time_width=32,
        embed_width=64, max_steps=2000, eval_interval=100, n_query=3,
    ),
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return RunConfig(**{**PRESETS[name], **overrides})
