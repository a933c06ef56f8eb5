import pytest

from trainless.archspace import (
    ArchitectureSpec,
    BatchNorm,
    Convolution,
    Dropout,
    SearchSpaceConfig,
    SkipConnection,
    is_valid,
    sample,
)
from trainless.evolve import EvolutionConfig, Individual, MutationKind, init_population, mutate, run, top_k
from trainless.rng import Rng


def test_identity_mutation(mixed_arch):
    assert mutate(mixed_arch, MutationKind.Identity, Rng(0)) is mixed_arch


def test_remove_layer_on_single_layer_is_identity():
    arch = ArchitectureSpec((Convolution(3, 1, "same", 8, False),))
    assert mutate(arch, MutationKind.RemoveLayer, Rng(0)) is arch


def test_insert_convolution_grows_by_one():
    arch = ArchitectureSpec((Convolution(3, 1, "same", 8, False),))
    for seed in range(20):
        child = mutate(arch, MutationKind.InsertConvolution, Rng(seed))
        assert len(child) in (1, 2)
        assert sum(isinstance(l, Convolution) for l in child.layers) == len(child)


def test_insert_renumbers_skip_sources():
    arch = ArchitectureSpec(
        (Convolution(3, 1, "same", 8, False), BatchNorm(), Dropout(0.3), SkipConnection(1))
    )
    for seed in range(50):
        child = mutate(arch, MutationKind.InsertConvolution, Rng(seed))
        assert is_valid(child)
        skips = [(k, l) for k, l in enumerate(child.layers) if isinstance(l, SkipConnection)]
        assert len(skips) == 1
        _, skip = skips[0]
        # the skip still reads from the BatchNorm layer it was wired to
        assert isinstance(child.layers[skip.source_index], BatchNorm)


def test_remove_skip_drops_only_skips(mixed_arch):
    child = mutate(mixed_arch, MutationKind.RemoveSkipConnection, Rng(3))
    assert len(child) == len(mixed_arch) - 1
    assert sum(isinstance(l, SkipConnection) for l in child.layers) == 1


def test_removing_skip_source_cascades():
    arch = ArchitectureSpec((Convolution(3, 1, "same", 8, False), BatchNorm(), SkipConnection(1)))
    seen = set()
    for seed in range(40):
        child = mutate(arch, MutationKind.RemoveLayer, Rng(seed))
        assert is_valid(child)
        seen.add(tuple(l.kind for l in child.layers))
    # removing the BatchNorm also removes the skip that read from it
    assert ("Convolution",) in seen


@pytest.mark.parametrize("kind", list(MutationKind))
def test_mutations_keep_validity(kind):
    rng = Rng(17)
    space = SearchSpaceConfig()
    for seed in range(150):
        child = mutate(sample(space, 10, seed), kind, rng, space)
        assert is_valid(child)
        assert 1 <= len(child) <= space.max_backbone_layers


def test_zero_steps(tiny_model):
    res = run(EvolutionConfig(population_size=20, steps=0, seed=1), SearchSpaceConfig(), 10, tiny_model, 0.3)
    assert len(res.population) == 20 and res.history == []
    assert all(len(ind.arch) == 1 for ind in res.population)
    assert res.best.predicted_accuracy == max(i.predicted_accuracy for i in res.population)


def test_run_invariants_and_reproducibility(tiny_model):
    cfg = EvolutionConfig(population_size=30, steps=300, seed=2)
    sizes = []
    res = run(cfg, SearchSpaceConfig(), 10, tiny_model, 0.3, on_step=lambda s, pop: sizes.append(len(pop)))
    assert sizes == [30] * 300
    assert len(res.history) == 300
    assert all(a <= b for a, b in zip(res.history, res.history[1:]))
    assert res.history[-1] == res.best.predicted_accuracy
    again = run(cfg, SearchSpaceConfig(), 10, tiny_model, 0.3)
    assert again.history == res.history
    assert [i.arch for i in again.population] == [i.arch for i in res.population]
    assert max(len(i.arch) for i in res.population) > 1


def test_tournament_removes_loser(tiny_model):
    cfg = EvolutionConfig(population_size=2, steps=1, seed=0)
    start = init_population(cfg, SearchSpaceConfig(), 10, tiny_model, 0.3)
    res = run(cfg, SearchSpaceConfig(), 10, tiny_model, 0.3)
    survivor = max(start, key=lambda i: (i.predicted_accuracy, i.id))
    assert survivor in res.population
    assert {i.id for i in res.population} == {survivor.id, 2}


def test_top_k_sorted():
    pop = [Individual(k, None, acc) for k, acc in enumerate([0.2, 0.9, 0.5, 0.9, 0.1])]
    assert [i.id for i in top_k(pop, 3)] == [1, 3, 2]


def test_config_invariants():
    with pytest.raises(ValueError):
        EvolutionConfig(population_size=1)
    with pytest.raises(ValueError):
        EvolutionConfig(steps=-1)
    with pytest.raises(ValueError):
        EvolutionConfig(mutation_weights={k: 0.0 for k in MutationKind})
