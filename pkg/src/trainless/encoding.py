"""Fixed-length per-layer encoding and feature-wise standardization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .archspace import ArchitectureSpec
from .errors import EmptyInput, IndexOutOfRange, SchemaError
from .shape import ShapeTrace

NUM_FEATURES = 14
ACCURACY = 13

#: One-hot slot of each layer kind; global pooling shares the pooling slot.
ONE_HOT_SLOT = {
    "Convolution": 0,
    "Pooling": 1,
    "GlobalPooling": 1,
    "BatchNorm": 2,
    "Dropout": 3,
    "ResidualBlock": 4,
    "SkipConnection": 5,
    "FullyConnected": 6,
}

FEATURE_NAMES = (
    "is_convolution",
    "is_pooling",
    "is_batch_norm",
    "is_dropout",
    "is_residual_block",
    "is_skip_connection",
    "is_fully_connected",
    "height_ratio",
    "depth_ratio",
    "num_weights",
    "num_layers",
    "prefix_flops",
    "prefix_memory",
    "accuracy",
)


def encode_layer(arch: ArchitectureSpec, i: int, trace: ShapeTrace, accuracy_field: float) -> np.ndarray:
    """Encode effective layer ``i`` (0-based; backbone first, then the tail).

    Features 0-6 are the one-hot layer type, 7-9 describe layer ``i`` alone,
    10-12 the sub-network from the input to layer ``i``, and 13 is the
    accuracy field, copied unchanged.
    """
    if not 0 <= i < len(trace):
        raise IndexOutOfRange(f"layer index {i} outside [0, {len(trace)})")
    t = trace.layers[i]
    v = np.zeros(NUM_FEATURES)
    v[ONE_HOT_SLOT[t.layer.kind]] = 1.0
    v[7] = t.output.height / t.input.height
    v[8] = t.output.channels / t.input.channels
    v[9] = t.cost.params
    v[10] = trace.layer_count(i)
    v[11] = trace.cumulative_flops[i]
    v[12] = trace.cumulative_memory[i]
    v[ACCURACY] = accuracy_field
    return v


def encode_architecture(arch: ArchitectureSpec, trace: ShapeTrace) -> np.ndarray:
    """All effective layers at once, with the accuracy column left at zero."""
    return np.stack([encode_layer(arch, i, trace, 0.0) for i in range(len(trace))])


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != (NUM_FEATURES,) or stds.shape != (NUM_FEATURES,):
            raise SchemaError(f"standardizer needs {NUM_FEATURES} means and stds, got {means.shape}, {stds.shape}")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(stds))) or np.any(stds < 0):
            raise SchemaError("standardizer values must be finite with non-negative stds")
        means.flags.writeable = False
        stds.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def _scale(self) -> np.ndarray:
        return np.where(self.stds > 0, self.stds, 1.0)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Works on a single vector or on any array whose last axis has 14 features."""
        return (np.asarray(v, dtype=np.float64) - self.means) / self._scale

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self._scale + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Standardizer":
        return cls(np.asarray(obj["means"], dtype=np.float64), np.asarray(obj["stds"], dtype=np.float64))


def fit_standardizer(vectors: Iterable[np.ndarray]) -> Standardizer:
    """Per-feature population mean and standard deviation."""
    data = np.asarray(list(vectors) if not isinstance(vectors, np.ndarray) else vectors, dtype=np.float64)
    if data.size == 0:
        raise EmptyInput("cannot fit a standardizer on no vectors")
    data = data.reshape(-1, NUM_FEATURES)
    stds = data.std(axis=0)
    # constant columns can pick up rounding noise in the mean
    stds[data.min(axis=0) == data.max(axis=0)] = 0.0
    return Standardizer(data.mean(axis=0), stds)


def apply_standardizer(s: Standardizer, v: np.ndarray) -> np.ndarray:
    return s.apply(v)
