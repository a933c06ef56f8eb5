import json

import numpy as np
import pytest

from trainless.archspace import (
    ArchitectureSpec,
    BatchNorm,
    Convolution,
    Dropout,
    SearchSpaceConfig,
    sample,
)
from trainless.errors import InvalidRecord, SchemaError, UnknownDataset
from trainless.lde import (
    DatasetMeta,
    ExperimentRecord,
    ExperimentStore,
    FilterConfig,
    filter_by_dcn,
    generate_synthetic_corpus,
    load_registry,
    prefix_accuracies,
    pseudo_accuracy,
    save_registry,
)
from trainless.rng import Rng

from conftest import FIXED_CLOCK


def make_record(dataset_id, seed, num_classes=10, dcn=0.5):
    arch = sample(SearchSpaceConfig(max_backbone_layers=5), num_classes, seed)
    return ExperimentRecord(dataset_id, arch, prefix_accuracies(arch, dcn, num_classes), "synthetic", FIXED_CLOCK)


def test_append_grows_store(datasets):
    store = ExperimentStore(datasets)
    store.append(make_record("easy", 1))
    assert len(store) == 1
    store.append(make_record("mid", 2))
    assert len(store) == 2


def test_append_unknown_dataset(datasets):
    with pytest.raises(UnknownDataset):
        ExperimentStore(datasets).append(make_record("nope", 1))


def test_append_rejects_bad_record(datasets):
    arch = ArchitectureSpec((BatchNorm(), Dropout(0.3)))
    with pytest.raises(InvalidRecord):
        ExperimentStore(datasets).append(ExperimentRecord("easy", arch, (0.5,)))
    with pytest.raises(InvalidRecord):
        ExperimentStore(datasets).append(ExperimentRecord("easy", arch, (0.5, 1.5)))


def test_thousand_records_reopen(tmp_path, datasets):
    path = tmp_path / "store.ndjson"
    store = ExperimentStore(datasets, path)
    ids = [d.id for d in datasets]
    records = [make_record(ids[k % 2], k) for k in range(1000)]
    store.extend(records[:500])
    for r in records[500:]:
        store.append(r)
    reopened = ExperimentStore(datasets, path)
    assert list(reopened) == records
    # rewriting the loaded records reproduces the file byte for byte
    copy = tmp_path / "copy.ndjson"
    ExperimentStore(datasets, copy).extend(reopened.records)
    assert copy.read_bytes() == path.read_bytes()


def test_partial_tail_is_dropped(tmp_path, datasets):
    path = tmp_path / "store.ndjson"
    store = ExperimentStore(datasets, path)
    store.extend([make_record("easy", k) for k in range(3)])
    with open(path, "ab") as fh:
        fh.write(b'{"v":1,"dataset_id":"ea')
    reopened = ExperimentStore(datasets, path)
    assert len(reopened) == 3
    reopened.append(make_record("easy", 9))
    assert len(ExperimentStore(datasets, path)) == 4


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.update(v=2),
        lambda o: o.update(extra=1),
        lambda o: o.update(dataset_id="ghost"),
        lambda o: o.update(prefix_accuracies=o["prefix_accuracies"][:-1] or [0.1, 0.2]),
        lambda o: o.update(prefix_accuracies=["x"] * len(o["prefix_accuracies"])),
        lambda o: o.update(source="scraped"),
        lambda o: o.update(created_at="yesterday"),
        lambda o: o["layers"].append({"kind": "Warp"}),
    ],
)
def test_corrupted_line_rejected(tmp_path, datasets, mutate):
    path = tmp_path / "store.ndjson"
    obj = make_record("easy", 4).to_dict()
    mutate(obj)
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises((SchemaError, InvalidRecord, UnknownDataset)):
        ExperimentStore(datasets, path)


def test_registry_roundtrip(tmp_path, datasets):
    path = tmp_path / "reg.json"
    save_registry(path, datasets)
    assert load_registry(path) == datasets
    path.write_text('{"v": 1, "datasets": [{"id": "a", "name": "a", "dcn": 1.5, "num_classes": 10}]}')
    with pytest.raises(SchemaError):
        load_registry(path)


def test_filter_example():
    ds = [DatasetMeta("a", "a", 0.63, 10), DatasetMeta("b", "b", 0.70, 10)]
    store = ExperimentStore(ds)
    store.extend([make_record("a", 1), make_record("b", 2), make_record("a", 3)])
    got = filter_by_dcn(store, 0.60, FilterConfig(0.05))
    assert [r.dataset_id for r in got] == ["a", "a"]
    assert store.filter_by_dcn(0.60, FilterConfig(1.0)) == list(store)


def test_filter_matches_brute_force_scan():
    rng = np.random.default_rng(5)
    ds = [DatasetMeta(f"d{i}", f"d{i}", float(rng.random()), 10) for i in range(50)]
    store = ExperimentStore(ds)
    store.extend([make_record(f"d{int(rng.integers(50))}", k) for k in range(200)])
    dcn = {d.id: d.dcn for d in ds}
    for k in range(100):
        q = float(rng.random())
        tau = 0.05 if k % 4 == 0 else float(rng.random() * 0.3)
        want = [r for r in store.records if abs(q - dcn[r.dataset_id]) <= tau]
        assert filter_by_dcn(store, q, FilterConfig(tau)) == want


def test_filter_config_rejects_negative_tau():
    with pytest.raises(ValueError):
        FilterConfig(-0.1)


def test_dataset_meta_invariants():
    with pytest.raises(SchemaError):
        DatasetMeta("x", "x", 1.2, 10)
    with pytest.raises(SchemaError):
        DatasetMeta("x", "x", 0.5, 1)


def test_pseudo_accuracy_chance_at_full_difficulty(mixed_arch):
    assert pseudo_accuracy(mixed_arch, 1.0, 10) == 0.1
    assert pseudo_accuracy(mixed_arch, 1.0, 100) == 0.01


def test_pseudo_accuracy_worked_example():
    # z = 0.4*2 - 0.05*3 - 1.5 = -0.85; logistic(-0.85) = 0.29943285752602705
    # 0.1 + 0.9 * 0.7 * 0.29943285752602705 = 0.28864270024139704
    arch = ArchitectureSpec(
        (Convolution(3, 1, "same", 8, False), Dropout(0.3), Convolution(3, 1, "same", 8, False))
    )
    assert pseudo_accuracy(arch, 0.3, 10) == pytest.approx(0.28864270024139704, abs=1e-12)


def test_extra_convolution_increases_accuracy():
    base = ArchitectureSpec((Convolution(3, 1, "same", 8, False), BatchNorm()))
    more = ArchitectureSpec(base.layers + (Convolution(3, 1, "same", 8, False),))
    assert pseudo_accuracy(more, 0.4, 10) > pseudo_accuracy(base, 0.4, 10)


@pytest.mark.parametrize("seed", range(20))
def test_pseudo_accuracy_monotone_in_dcn(seed):
    arch = sample(SearchSpaceConfig(), 10, seed)
    accs = [pseudo_accuracy(arch, d, 10) for d in np.linspace(0, 1, 21)]
    assert all(a >= b for a, b in zip(accs, accs[1:]))


def test_corpus_counts_and_determinism(datasets):
    space = SearchSpaceConfig(max_backbone_layers=6)
    a = generate_synthetic_corpus(datasets[:2], 3, space, 11, created_at=FIXED_CLOCK)
    b = generate_synthetic_corpus(datasets[:2], 3, space, 11, created_at=FIXED_CLOCK)
    assert len(a) == 6
    assert all(len(r.prefix_accuracies) == len(r.architecture) for r in a)
    assert [json.dumps(r.to_dict()) for r in a] == [json.dumps(r.to_dict()) for r in b]


def test_corpus_accuracy_range(small_corpus, datasets):
    classes = {d.id: d.num_classes for d in datasets}
    for r in small_corpus:
        chance = 1 / classes[r.dataset_id]
        assert all(chance <= a < 1 for a in r.prefix_accuracies)
        assert r.prefix_accuracies == prefix_accuracies(r.architecture, {d.id: d.dcn for d in datasets}[r.dataset_id], classes[r.dataset_id])
