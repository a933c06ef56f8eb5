"""Tournament-selection evolution scored by the predictor instead of training.

Each step draws two distinct individuals, drops the one with the lower
predicted accuracy (on a tie, the older one, i.e. the smaller id), and
replaces it with a mutated, freshly scored copy of the winner.  Because the
current best can never lose a tournament, the best-so-far curve never
decreases.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Mapping

from .archspace import (
    STRIDES,
    ArchitectureSpec,
    Convolution,
    LayerSpec,
    ResidualBlock,
    SearchSpaceConfig,
    SkipConnection,
    is_valid,
    random_layer,
    sample,
)
from .rng import Rng, derive_seed
from .shape import infer, skip_stride
from .tap import PredictorModel, predict, predict_batch


class MutationKind(enum.Enum):
    InsertConvolution = "InsertConvolution"
    RemoveLayer = "RemoveLayer"
    AlterStride = "AlterStride"
    AlterChannels = "AlterChannels"
    AlterKernelSize = "AlterKernelSize"
    AddSkipConnection = "AddSkipConnection"
    RemoveSkipConnection = "RemoveSkipConnection"
    Identity = "Identity"


@dataclass(frozen=True)
class Individual:
    id: int
    arch: ArchitectureSpec
    predicted_accuracy: float


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 1000
    steps: int = 20000
    seed: int = 0
    mutation_weights: Mapping[MutationKind, float] = field(
        default_factory=lambda: {k: 1.0 for k in MutationKind}
    )

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if any(w < 0 for w in self.mutation_weights.values()) or not any(self.mutation_weights.values()):
            raise ValueError("mutation weights must be non-negative with a positive sum")


@dataclass
class EvolutionResult:
    population: list[Individual]
    best: Individual
    history: list[float]


# -- mutations -----------------------------------------------------------------


def _insert(layers: list[LayerSpec], pos: int, layer: LayerSpec) -> list[LayerSpec]:
    """Insert ``layer`` at ``pos`` and renumber skip sources that moved."""
    moved = [
        SkipConnection(l.source_index + 1) if isinstance(l, SkipConnection) and l.source_index >= pos else l
        for l in layers[pos:]
    ]
    return layers[:pos] + [layer] + moved


def _remove(layers: list[LayerSpec], positions: set[int]) -> list[LayerSpec]:
    """Delete ``positions``; skips whose source disappears are deleted too."""
    gone = set(positions)
    for q, l in enumerate(layers):
        if isinstance(l, SkipConnection) and l.source_index in gone:
            gone.add(q)
    index: dict[int, int] = {}
    kept = []
    for q, l in enumerate(layers):
        if q not in gone:
            index[q] = len(kept)
            kept.append(l)
    return [SkipConnection(index[l.source_index]) if isinstance(l, SkipConnection) else l for l in kept]


def _insert_convolution(arch, space, rng):
    if len(arch.layers) >= space.max_backbone_layers:
        return None
    pos = rng.randbelow(len(arch.layers) + 1)
    return _insert(list(arch.layers), pos, random_layer("Convolution", pos, space, rng))


def _remove_layer(arch, space, rng):
    if len(arch.layers) == 1:
        return None
    return _remove(list(arch.layers), {rng.randbelow(len(arch.layers))}) or None


def _alter(arch, rng, kinds, make):
    candidates = [k for k, l in enumerate(arch.layers) if isinstance(l, kinds)]
    if not candidates:
        return None
    k = rng.choice(candidates)
    layers = list(arch.layers)
    layers[k] = make(layers[k])
    return layers


def _add_skip(arch, space, rng):
    if len(arch.layers) >= space.max_backbone_layers:
        return None
    trace = infer(arch)
    pos = 1 + rng.randbelow(len(arch.layers))
    current = trace.layers[pos - 1].output
    sources = [s for s in range(pos) if skip_stride(trace.layers[s].output, current) is not None]
    if not sources:
        return None
    return _insert(list(arch.layers), pos, SkipConnection(rng.choice(sources)))


def _remove_skip(arch, space, rng):
    skips = [k for k, l in enumerate(arch.layers) if isinstance(l, SkipConnection)]
    if not skips:
        return None
    return _remove(list(arch.layers), {rng.choice(skips)}) or None


def mutate(arch: ArchitectureSpec, kind: MutationKind, rng: Rng, space: SearchSpaceConfig = SearchSpaceConfig()) -> ArchitectureSpec:
    """Apply one mutation; inapplicable or invalid results fall back to identity."""
    lo, hi = space.channel_range
    if kind is MutationKind.InsertConvolution:
        layers = _insert_convolution(arch, space, rng)
    elif kind is MutationKind.RemoveLayer:
        layers = _remove_layer(arch, space, rng)
    elif kind is MutationKind.AlterStride:
        layers = _alter(arch, rng, (Convolution, ResidualBlock), lambda l: dataclasses.replace(l, stride=rng.choice(STRIDES)))
    elif kind is MutationKind.AlterChannels:
        layers = _alter(arch, rng, (Convolution, ResidualBlock), lambda l: dataclasses.replace(l, out_channels=rng.randint(lo, hi)))
    elif kind is MutationKind.AlterKernelSize:
        layers = _alter(
            arch, rng, (Convolution, ResidualBlock), lambda l: dataclasses.replace(l, kernel_size=rng.choice(space.kernel_sizes))
        )
    elif kind is MutationKind.AddSkipConnection:
        layers = _add_skip(arch, space, rng)
    elif kind is MutationKind.RemoveSkipConnection:
        layers = _remove_skip(arch, space, rng)
    else:
        layers = None
    if layers is None:
        return arch
    child = ArchitectureSpec(tuple(layers), arch.num_classes)
    return child if is_valid(child) else arch


# -- the search loop -----------------------------------------------------------


def init_population(
    cfg: EvolutionConfig, space: SearchSpaceConfig, num_classes: int, model: PredictorModel, dcn: float
) -> list[Individual]:
    """``population_size`` single-layer networks, scored by the predictor."""
    single = dataclasses.replace(space, max_backbone_layers=1)
    archs = [sample(single, num_classes, derive_seed(cfg.seed, 0, k)) for k in range(cfg.population_size)]
    scores = predict_batch(archs, dcn, num_classes, model)
    if scores.errors:
        raise RuntimeError(f"initial population contains unscorable networks: {scores.errors}")
    return [Individual(k, a, float(s)) for k, (a, s) in enumerate(zip(archs, scores.accuracies))]


def _loses(a: Individual, b: Individual) -> bool:
    """True when ``a`` is the one removed from the tournament ``(a, b)``."""
    if a.predicted_accuracy != b.predicted_accuracy:
        return a.predicted_accuracy < b.predicted_accuracy
    return a.id < b.id


def run(
    cfg: EvolutionConfig,
    space: SearchSpaceConfig,
    num_classes: int,
    model: PredictorModel,
    dcn: float,
    on_step=None,
) -> EvolutionResult:
    population = init_population(cfg, space, num_classes, model, dcn)
    rng = Rng(cfg.seed, 1)
    kinds = [k for k in MutationKind if cfg.mutation_weights.get(k, 0.0) > 0]
    weights = [cfg.mutation_weights[k] for k in kinds]
    next_id = len(population)
    best = max(population, key=lambda ind: (ind.predicted_accuracy, ind.id))
    history: list[float] = []
    n = len(population)
    for step in range(cfg.steps):
        i = rng.randbelow(n)
        j = rng.randbelow(n - 1)
        if j >= i:
            j += 1
        a, b = population[i], population[j]
        loser, winner = (i, b) if _loses(a, b) else (j, a)
        kind = kinds[rng.weighted_index(weights)]
        child_arch = mutate(winner.arch, kind, rng, space)
        child = Individual(next_id, child_arch, predict(child_arch, dcn, num_classes, model))
        next_id += 1
        population[loser] = child
        if child.predicted_accuracy > best.predicted_accuracy:
            best = child
        history.append(best.predicted_accuracy)
        if on_step is not None:
            on_step(step, population)
    return EvolutionResult(population, best, history)


def top_k(population, k: int = 3) -> list[Individual]:
    return sorted(population, key=lambda ind: (-ind.predicted_accuracy, ind.id))[:k]
