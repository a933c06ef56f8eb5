"""Shape inference and cost accounting for backbone layers and prefixes.

Conventions (kept fixed so encodings are reproducible):

* a multiply-accumulate is 2 FLOPs; bias additions are not counted;
* every scalar is 4 bytes; memory = learnable parameters + output activations;
* ``same`` padding gives ``ceil(H / stride)``, ``valid`` gives
  ``floor((H - K) / stride) + 1``; width follows the same rule as height.

A skip connection adds the output of an earlier backbone layer to its own
input.  The source is brought to the current shape without parameters:
spatially by an integer subsampling stride, channel-wise by zero padding or
truncation.  When no integer stride maps the source grid onto the current
one the skip is rejected with :class:`ShapeMismatch`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .archspace import (
    SAME,
    ArchitectureSpec,
    BatchNorm,
    Convolution,
    Dropout,
    FullyConnected,
    GlobalPooling,
    LayerSpec,
    Pooling,
    ResidualBlock,
    SkipConnection,
)
from .errors import ArchitectureError, BadSkipSource, EmptyArchitecture, ShapeMismatch, SpatialCollapse

BYTES_PER_SCALAR = 4


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if min(self.height, self.width, self.channels) < 1:
            raise SpatialCollapse(f"non-positive tensor shape {self.as_tuple()}")

    @property
    def volume(self) -> int:
        return self.height * self.width * self.channels

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass(frozen=True)
class LayerCost:
    params: int
    flops: int
    memory_bytes: int

    def __add__(self, other: "LayerCost") -> "LayerCost":
        return LayerCost(self.params + other.params, self.flops + other.flops, self.memory_bytes + other.memory_bytes)


@dataclass(frozen=True)
class LayerTrace:
    layer: LayerSpec
    input: TensorShape
    output: TensorShape
    cost: LayerCost


@dataclass(frozen=True)
class ShapeTrace:
    """Per effective layer (backbone then tail) shapes, costs and prefix sums."""

    layers: tuple[LayerTrace, ...]
    cumulative_flops: tuple[int, ...]
    cumulative_memory: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.layers)

    def layer_count(self, i: int) -> int:
        """Number of layers from the input up to and including layer ``i``."""
        return i + 1

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "layers": [
                {
                    "kind": t.layer.kind,
                    "input": list(t.input.as_tuple()),
                    "output": list(t.output.as_tuple()),
                    "params": t.cost.params,
                    "flops": t.cost.flops,
                    "memory_bytes": t.cost.memory_bytes,
                }
                for t in self.layers
            ],
            "cumulative_flops": list(self.cumulative_flops),
            "cumulative_memory": list(self.cumulative_memory),
        }


def _spatial(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == SAME:
        return -(-size // stride)
    return (size - kernel) // stride + 1


def _window(shape: TensorShape, kernel: int, stride: int, padding: str, channels: int) -> TensorShape:
    h = _spatial(shape.height, kernel, stride, padding)
    w = _spatial(shape.width, kernel, stride, padding)
    if h < 1 or w < 1:
        raise SpatialCollapse(f"kernel {kernel} stride {stride} ({padding}) on {shape.height}x{shape.width} gives {h}x{w}")
    return TensorShape(h, w, channels)


def skip_stride(source: TensorShape, target: TensorShape) -> Optional[int]:
    """Integer subsampling stride mapping ``source`` onto ``target``, if any."""
    if source.height < target.height or source.width < target.width:
        return None
    for r in range(1, source.height + 1):
        if -(-source.height // r) == target.height and -(-source.width // r) == target.width:
            return r
        if -(-source.height // r) < target.height:
            break
    return None


def residual_units(block: ResidualBlock, in_shape: TensorShape):
    """Yield ``(in_shape, out_shape, stride, projected)`` for each repeated unit."""
    shape = in_shape
    for r in range(block.repeat):
        stride = block.stride if r == 0 else 1
        out = _window(shape, block.kernel_size, stride, SAME, block.out_channels)
        yield shape, out, stride, (shape.channels != block.out_channels or stride != 1)
        shape = out


def output_shape(layer: LayerSpec, in_shape: TensorShape, previous: Sequence[TensorShape] = ()) -> TensorShape:
    """Output shape of ``layer``; ``previous`` holds earlier backbone outputs (for skips)."""
    if isinstance(layer, Convolution):
        return _window(in_shape, layer.kernel_size, layer.stride, layer.padding, layer.out_channels)
    if isinstance(layer, Pooling):
        return _window(in_shape, layer.kernel_size, layer.stride, layer.padding, in_shape.channels)
    if isinstance(layer, (BatchNorm, Dropout)):
        return in_shape
    if isinstance(layer, ResidualBlock):
        out = in_shape
        for _, out, _, _ in residual_units(layer, in_shape):
            pass
        return out
    if isinstance(layer, SkipConnection):
        if not 0 <= layer.source_index < len(previous):
            raise BadSkipSource(f"skip source {layer.source_index} is not an earlier layer")
        source = previous[layer.source_index]
        if skip_stride(source, in_shape) is None:
            raise ShapeMismatch(
                f"skip source {source.as_tuple()} cannot be subsampled onto {in_shape.as_tuple()}"
            )
        return in_shape
    if isinstance(layer, GlobalPooling):
        return TensorShape(1, 1, in_shape.channels)
    if isinstance(layer, FullyConnected):
        return TensorShape(1, 1, layer.units)
    raise ArchitectureError(f"unsupported layer {layer!r}")


def _conv_cost(k: int, c_in: int, c_out: int, out: TensorShape) -> tuple[int, int]:
    return k * k * c_in * c_out + c_out, 2 * k * k * c_in * c_out * out.height * out.width


def layer_cost(layer: LayerSpec, in_shape: TensorShape, out_shape: TensorShape) -> LayerCost:
    hw_out = out_shape.height * out_shape.width
    if isinstance(layer, Convolution):
        params, flops = _conv_cost(layer.kernel_size, in_shape.channels, layer.out_channels, out_shape)
        if layer.batch_norm:
            params += 2 * layer.out_channels
    elif isinstance(layer, BatchNorm):
        params, flops = 2 * in_shape.channels, 2 * in_shape.volume
    elif isinstance(layer, FullyConnected):
        params = in_shape.volume * layer.units + layer.units
        flops = 2 * in_shape.volume * layer.units
    elif isinstance(layer, Pooling):
        params, flops = 0, layer.kernel_size**2 * hw_out * out_shape.channels
    elif isinstance(layer, GlobalPooling):
        params, flops = 0, in_shape.volume
    elif isinstance(layer, (Dropout, SkipConnection)):
        params, flops = 0, in_shape.volume
    elif isinstance(layer, ResidualBlock):
        params = flops = 0
        c = layer.out_channels
        for u_in, u_out, _, projected in residual_units(layer, in_shape):
            for k, c_in in ((layer.kernel_size, u_in.channels), (layer.kernel_size, c)):
                p, f = _conv_cost(k, c_in, c, u_out)
                params += p + 2 * c
                flops += f + 2 * u_out.volume
            if projected:
                p, f = _conv_cost(1, u_in.channels, c, u_out)
                params += p
                flops += f
            flops += u_out.volume
    else:
        raise ArchitectureError(f"unsupported layer {layer!r}")
    return LayerCost(params, flops, BYTES_PER_SCALAR * (params + out_shape.volume))


def infer_incremental(
    layer: LayerSpec, index: int, in_shape: TensorShape, previous: Sequence[TensorShape]
) -> Optional[TensorShape]:
    """Output shape if ``layer`` can sit at backbone position ``index``, else None."""
    if isinstance(layer, SkipConnection) and not 0 <= layer.source_index < index:
        return None
    try:
        return output_shape(layer, in_shape, previous)
    except ArchitectureError:
        return None


def infer(arch: ArchitectureSpec, input_shape: TensorShape = TensorShape(32, 32, 3)) -> ShapeTrace:
    if not arch.layers:
        raise EmptyArchitecture("architecture has no backbone layers")
    traces = []
    outputs: list[TensorShape] = []
    shape = input_shape
    flops = memory = 0
    cum_flops, cum_mem = [], []
    n_backbone = len(arch.layers)
    for i, layer in enumerate(arch.effective_layers):
        if isinstance(layer, SkipConnection) and layer.source_index >= i:
            raise BadSkipSource(f"layer {i}: skip source {layer.source_index} must precede it")
        out = output_shape(layer, shape, outputs)
        cost = layer_cost(layer, shape, out)
        traces.append(LayerTrace(layer, shape, out, cost))
        flops += cost.flops
        memory += cost.memory_bytes
        cum_flops.append(flops)
        cum_mem.append(memory)
        if i < n_backbone:
            outputs.append(out)
        shape = out
    return ShapeTrace(tuple(traces), tuple(cum_flops), tuple(cum_mem))
