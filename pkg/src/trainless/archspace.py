"""Architecture descriptions, validity rules and the random sampler.

A network is a *backbone* of layers followed by a fixed tail
(global pooling, then a fully connected classifier).  The tail is implied
by :class:`ArchitectureSpec` and never stored in ``layers``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import ClassVar, Union

from .errors import (
    ArchitectureError,
    BadSkipSource,
    EmptyArchitecture,
    ExhaustedRetries,
    IndexOutOfRange,
)
from .rng import Rng

SAME = "same"
VALID = "valid"
PADDINGS = (SAME, VALID)
STRIDES = (1, 2)
MAX_REPEAT = 6


@dataclass(frozen=True)
class Convolution:
    kernel_size: int
    stride: int
    padding: str
    out_channels: int
    batch_norm: bool
    kind: ClassVar[str] = "Convolution"

    def __post_init__(self):
        _check_positive(self, "kernel_size", "out_channels")
        _check_stride(self)
        if self.padding not in PADDINGS:
            raise ArchitectureError(f"padding must be one of {PADDINGS}, got {self.padding!r}")
        if not isinstance(self.batch_norm, bool):
            raise ArchitectureError(f"batch_norm must be a boolean, got {self.batch_norm!r}")


@dataclass(frozen=True)
class Pooling:
    mode: str
    kernel_size: int
    stride: int
    padding: str = VALID
    kind: ClassVar[str] = "Pooling"

    def __post_init__(self):
        if self.mode not in ("max", "avg"):
            raise ArchitectureError(f"pooling mode must be 'max' or 'avg', got {self.mode!r}")
        _check_positive(self, "kernel_size", "stride")
        if self.padding not in PADDINGS:
            raise ArchitectureError(f"padding must be one of {PADDINGS}, got {self.padding!r}")


@dataclass(frozen=True)
class BatchNorm:
    kind: ClassVar[str] = "BatchNorm"


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind: ClassVar[str] = "Dropout"

    def __post_init__(self):
        if isinstance(self.rate, bool) or not isinstance(self.rate, (int, float)) or not 0.0 < self.rate < 1.0:
            raise ArchitectureError(f"dropout rate must lie in (0, 1), got {self.rate}")


@dataclass(frozen=True)
class ResidualBlock:
    kernel_size: int
    stride: int
    out_channels: int
    repeat: int
    kind: ClassVar[str] = "ResidualBlock"

    def __post_init__(self):
        _check_positive(self, "kernel_size", "out_channels")
        _check_stride(self)
        if not 1 <= self.repeat <= MAX_REPEAT:
            raise ArchitectureError(f"repeat must lie in [1, {MAX_REPEAT}], got {self.repeat}")


@dataclass(frozen=True)
class SkipConnection:
    source_index: int
    kind: ClassVar[str] = "SkipConnection"

    def __post_init__(self):
        if isinstance(self.source_index, bool) or not isinstance(self.source_index, int):
            raise ArchitectureError(f"skip source must be an integer, got {self.source_index!r}")


@dataclass(frozen=True)
class FullyConnected:
    units: int
    kind: ClassVar[str] = "FullyConnected"

    def __post_init__(self):
        _check_positive(self, "units")


@dataclass(frozen=True)
class GlobalPooling:
    kind: ClassVar[str] = "GlobalPooling"


LayerSpec = Union[
    Convolution, Pooling, BatchNorm, Dropout, ResidualBlock, SkipConnection, FullyConnected, GlobalPooling
]

LAYER_TYPES: dict[str, type] = {
    cls.kind: cls
    for cls in (Convolution, Pooling, BatchNorm, Dropout, ResidualBlock, SkipConnection, FullyConnected, GlobalPooling)
}

BACKBONE_KINDS = ("Convolution", "Pooling", "BatchNorm", "Dropout", "ResidualBlock", "SkipConnection")


def _check_positive(layer, *names):
    for name in names:
        value = getattr(layer, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ArchitectureError(f"{layer.kind}.{name} must be a positive integer, got {value!r}")


def _check_stride(layer):
    if layer.stride not in STRIDES:
        raise ArchitectureError(f"{layer.kind}.stride must be in {STRIDES}, got {layer.stride!r}")


def layer_to_dict(layer: LayerSpec) -> dict:
    out = {"kind": layer.kind}
    out.update(dataclasses.asdict(layer))
    return out


def layer_from_dict(obj: dict) -> LayerSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ArchitectureError(f"layer object needs a 'kind' field: {obj!r}")
    cls = LAYER_TYPES.get(obj["kind"])
    if cls is None:
        raise ArchitectureError(f"unknown layer kind {obj['kind']!r}")
    names = {f.name for f in dataclasses.fields(cls)}
    given = set(obj) - {"kind"}
    if given - names:
        raise ArchitectureError(f"unexpected fields for {cls.kind}: {sorted(given - names)}")
    try:
        return cls(**{k: obj[k] for k in given})
    except TypeError as exc:
        raise ArchitectureError(f"bad {cls.kind} fields: {exc}") from None


@dataclass(frozen=True)
class ArchitectureSpec:
    """Backbone layers plus the implied GlobalPooling -> FullyConnected tail."""

    layers: tuple[LayerSpec, ...]
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.num_classes < 2:
            raise ArchitectureError("num_classes must be >= 2")

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def tail(self) -> tuple[LayerSpec, LayerSpec]:
        return (GlobalPooling(), FullyConnected(self.num_classes))

    @property
    def effective_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers + self.tail

    def to_dict(self) -> dict:
        return {"v": 1, "num_classes": self.num_classes, "layers": [layer_to_dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, obj: dict) -> "ArchitectureSpec":
        if obj.get("v", 1) != 1:
            raise ArchitectureError(f"unsupported architecture schema version {obj.get('v')!r}")
        return cls(tuple(layer_from_dict(l) for l in obj["layers"]), int(obj.get("num_classes", 10)))


@dataclass(frozen=True)
class SearchSpaceConfig:
    max_backbone_layers: int = 12
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    channel_range: tuple[int, int] = (3, 256)
    allowed_kinds: tuple[str, ...] = BACKBONE_KINDS
    dropout_rates: tuple[float, ...] = (0.3, 0.5)
    pool_kernel_sizes: tuple[int, ...] = (2, 3)
    max_repeat: int = MAX_REPEAT

    def __post_init__(self):
        if self.max_backbone_layers < 1:
            raise ValueError("max_backbone_layers must be >= 1")
        lo, hi = self.channel_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad channel_range {self.channel_range}")
        if not self.kernel_sizes or any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ValueError("kernel_sizes must be non-empty odd positive integers")
        unknown = set(self.allowed_kinds) - set(LAYER_TYPES)
        if unknown or not self.allowed_kinds:
            raise ValueError(f"bad allowed_kinds: {sorted(unknown) or 'empty'}")
        if not 1 <= self.max_repeat <= MAX_REPEAT:
            raise ValueError("max_repeat must lie in [1, 6]")


def validate(arch: ArchitectureSpec, input_shape=None) -> None:
    """Raise an :class:`ArchitectureError` subclass unless ``arch`` is well formed.

    Checks are those of full shape inference on ``input_shape``
    (default 32x32x3), so this also catches spatial collapse and
    incompatible skip sources.
    """
    from .shape import TensorShape, infer

    if not arch.layers:
        raise EmptyArchitecture("architecture has no backbone layers")
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, SkipConnection) and not 0 <= layer.source_index < i:
            raise BadSkipSource(f"layer {i}: skip source {layer.source_index} must be in [0, {i})")
    infer(arch, input_shape or TensorShape(32, 32, 3))


def is_valid(arch: ArchitectureSpec, input_shape=None) -> bool:
    try:
        validate(arch, input_shape)
    except ArchitectureError:
        return False
    return True


def prefix(arch: ArchitectureSpec, k: int) -> ArchitectureSpec:
    """The sub-network made of the first ``k`` backbone layers plus the tail."""
    if not 1 <= k <= len(arch.layers):
        raise IndexOutOfRange(f"prefix length {k} outside [1, {len(arch.layers)}]")
    if k == len(arch.layers):
        return arch
    kept = tuple(
        l for i, l in enumerate(arch.layers[:k]) if not (isinstance(l, SkipConnection) and l.source_index >= i)
    )
    return ArchitectureSpec(kept, arch.num_classes)


# -- sampling -----------------------------------------------------------------

RETRY_LIMIT = 100


def random_layer(kind: str, index: int, config: SearchSpaceConfig, rng: Rng) -> LayerSpec:
    """Draw one layer of ``kind`` uniformly from the space's legal values."""
    lo, hi = config.channel_range
    if kind == "Convolution":
        return Convolution(
            kernel_size=rng.choice(config.kernel_sizes),
            stride=rng.choice(STRIDES),
            padding=rng.choice(PADDINGS),
            out_channels=rng.randint(lo, hi),
            batch_norm=bool(rng.randbelow(2)),
        )
    if kind == "Pooling":
        return Pooling(
            mode=rng.choice(("max", "avg")),
            kernel_size=rng.choice(config.pool_kernel_sizes),
            stride=rng.choice(STRIDES),
            padding=rng.choice(PADDINGS),
        )
    if kind == "BatchNorm":
        return BatchNorm()
    if kind == "Dropout":
        return Dropout(rng.choice(config.dropout_rates))
    if kind == "ResidualBlock":
        return ResidualBlock(
            kernel_size=rng.choice(config.kernel_sizes),
            stride=rng.choice(STRIDES),
            out_channels=rng.randint(lo, hi),
            repeat=rng.randint(1, config.max_repeat),
        )
    if kind == "SkipConnection":
        if index == 0:
            raise ArchitectureError("a skip connection cannot be the first layer")
        return SkipConnection(rng.randbelow(index))
    if kind == "FullyConnected":
        return FullyConnected(rng.randint(lo, hi))
    if kind == "GlobalPooling":
        return GlobalPooling()
    raise ArchitectureError(f"unknown layer kind {kind!r}")


def sample(config: SearchSpaceConfig, num_classes: int, seed: int, input_shape=None) -> ArchitectureSpec:
    """Random architecture from ``config``; a pure function of its arguments.

    The backbone length is uniform in ``[1, max_backbone_layers]``.  Each
    layer is drawn by picking a kind and its hyperparameters uniformly, and
    the draw is repeated (up to 100 times) while the grown network would be
    invalid.
    """
    from .shape import TensorShape, infer_incremental

    rng = Rng(seed)
    shape = input_shape or TensorShape(32, 32, 3)
    length = rng.randint(1, config.max_backbone_layers)
    kinds = tuple(k for k in LAYER_TYPES if k in config.allowed_kinds)
    layers: list[LayerSpec] = []
    outputs = []
    for i in range(length):
        for _ in range(RETRY_LIMIT):
            kind = rng.choice(kinds)
            if kind == "SkipConnection" and i == 0:
                continue
            layer = random_layer(kind, i, config, rng)
            out = infer_incremental(layer, i, shape if i == 0 else outputs[-1], outputs)
            if out is not None:
                layers.append(layer)
                outputs.append(out)
                break
        else:
            raise ExhaustedRetries(f"no valid layer at position {i} after {RETRY_LIMIT} draws")
    arch = ArchitectureSpec(tuple(layers), num_classes)
    validate(arch, shape)
    return arch
