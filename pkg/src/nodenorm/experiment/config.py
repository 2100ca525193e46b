"""Run configuration: JSON files, ``key=value`` overrides and variant names."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from ..data import SplitSpec
from ..errors import ConfigError
from ..models import ModelSpec, Norm
from . import presets

# sweep variant name -> (architecture, norm)
VARIANT_TABLE = {
    "gcn": ("gcn", "none"),
    "tgcn": ("tgcn", "none"),
    "pgcn": ("pgcn", "none"),
    "nodenorm1": ("gcn", "nodenorm1"),
    "nodenorm2": ("gcn", "nodenorm2"),
    "nodenorm3": ("gcn", "nodenorm3"),
    "layernorm": ("gcn", "layernorm"),
    "layernorm-star": ("gcn", "layernorm-star"),
    "layernorm-ms": ("gcn", "layernorm-ms"),
}


def parse_variant(name: str) -> tuple[str, str]:
    """Variant name to (architecture, norm); ``nodenorm<p>`` accepts any p >= 1."""
    key = name.strip().lower()
    if key in VARIANT_TABLE:
        return VARIANT_TABLE[key]
    if key.startswith("nodenorm") and key[len("nodenorm"):].isdigit():
        return "gcn", str(Norm.parse(key))
    raise ConfigError(f"unknown variant {name!r}; known: {', '.join(VARIANT_TABLE)}")


@dataclass(frozen=True)
class Diagnostics:
    variance: bool = True
    lipschitz: bool = False
    correlation: bool = False
    pair_limit: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one training run.

    Exactly one of ``dataset`` (bundle directory) and ``sbm`` (keyword
    arguments for :func:`nodenorm.data.generate_sbm`, plus ``seed``) is set.
    When ``preset`` names a dataset, dropout / l1 / weight decay / lr / epochs
    are looked up per (variant, depth) by :meth:`resolved`.
    """

    dataset: Optional[str] = None
    sbm: Optional[dict] = None
    split: SplitSpec = field(default_factory=SplitSpec)
    depth: int = 2
    hidden_dim: int = 64
    variant: str = "gcn"
    placement: str = "after"
    residual: bool = True
    lr: float = 0.005
    weight_decay: float = 5e-4
    l1_weight: float = 0.0
    dropout_rate: float = 0.5
    epochs: int = 400
    seed: int = 0
    missing_rate: float = 0.0
    protect_train: bool = True
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    preset: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.split, dict):
            object.__setattr__(self, "split", SplitSpec.from_dict(self.split))
        if isinstance(self.diagnostics, dict):
            object.__setattr__(self, "diagnostics", Diagnostics(**self.diagnostics))
        if (self.dataset is None) == (self.sbm is None):
            raise ConfigError("set exactly one of 'dataset' and 'sbm'")
        parse_variant(self.variant)
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.weight_decay < 0 or self.l1_weight < 0:
            raise ConfigError("weight_decay and l1_weight must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ConfigError(f"missing_rate must lie in [0, 1], got {self.missing_rate}")
        self.model_spec(2, 2)  # validates depth, width, placement

    def model_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        arch, norm = parse_variant(self.variant)
        return ModelSpec(depth=self.depth, input_dim=input_dim, num_classes=num_classes,
                         hidden_dim=self.hidden_dim, variant=arch, norm=Norm.parse(norm),
                         placement=self.placement if norm != "none" else "after",
                         residual=self.residual, dropout_rate=self.dropout_rate)

    def resolved(self) -> "RunConfig":
        if self.preset is None:
            return self
        dropout, l1, wd, lr, epochs = presets.lookup(self.variant, self.preset, self.depth)
        return replace(self, dropout_rate=dropout, l1_weight=l1, weight_decay=wd, lr=lr, epochs=epochs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split"] = self.split.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, overrides: Optional[list[str]] = None) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for item in overrides or []:
            apply_override(raw, item)
        return cls.from_dict(raw)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings such as variant names


def apply_override(raw: dict, item: str) -> None:
    """Apply ``a.b.c=value`` to a nested dict in place; values are parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a nested section")
        node = child
    node[parts[-1]] = _parse_value(value)
