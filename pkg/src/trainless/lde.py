"""Lifelong database of experiments.

Records live in a newline-delimited JSON file, one experiment per line;
the datasets they refer to live in a separate JSON registry.  Appends take
an exclusive ``flock`` and write a whole line with a single ``write`` call
followed by ``fsync``.  A trailing line without its newline (an interrupted
append) is discarded when the store is opened.
"""

from __future__ import annotations

import datetime as _dt
import fcntl
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .archspace import ArchitectureSpec, SearchSpaceConfig, layer_from_dict, layer_to_dict, prefix, sample, validate
from .errors import ArchitectureError, InvalidRecord, SchemaError, UnknownDataset
from .rng import derive_seed

SCHEMA_VERSION = 1
SOURCES = ("synthetic", "external")


@dataclass(frozen=True)
class DatasetMeta:
    id: str
    name: str
    dcn: float
    num_classes: int

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError("dataset id must be a non-empty string")
        if not (isinstance(self.dcn, (int, float)) and 0.0 <= self.dcn <= 1.0):
            raise SchemaError(f"dataset {self.id}: dcn must lie in [0, 1], got {self.dcn!r}")
        if isinstance(self.num_classes, bool) or not isinstance(self.num_classes, int) or self.num_classes < 2:
            raise SchemaError(f"dataset {self.id}: num_classes must be an integer >= 2")

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "dcn": self.dcn, "num_classes": self.num_classes}


@dataclass(frozen=True)
class FilterConfig:
    tau: float = 0.05

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")


@dataclass(frozen=True)
class ExperimentRecord:
    dataset_id: str
    architecture: ArchitectureSpec
    prefix_accuracies: tuple[float, ...]
    source: str = "synthetic"
    created_at: str = "1970-01-01T00:00:00+00:00"

    def __post_init__(self):
        object.__setattr__(self, "prefix_accuracies", tuple(float(a) for a in self.prefix_accuracies))

    def check(self) -> None:
        if len(self.prefix_accuracies) != len(self.architecture.layers):
            raise InvalidRecord(
                f"{len(self.prefix_accuracies)} prefix accuracies for a backbone of {len(self.architecture.layers)}"
            )
        if not all(0.0 <= a <= 1.0 for a in self.prefix_accuracies):
            raise InvalidRecord("prefix accuracies must lie in [0, 1]")
        if self.source not in SOURCES:
            raise InvalidRecord(f"source must be one of {SOURCES}")
        try:
            _dt.datetime.fromisoformat(self.created_at)
        except (TypeError, ValueError):
            raise InvalidRecord(f"created_at is not ISO-8601: {self.created_at!r}") from None
        try:
            validate(self.architecture)
        except ArchitectureError as exc:
            raise InvalidRecord(f"invalid architecture: {exc}") from None

    @property
    def final_accuracy(self) -> float:
        return self.prefix_accuracies[-1]

    def to_dict(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "layers": [layer_to_dict(l) for l in self.architecture.layers],
            "prefix_accuracies": list(self.prefix_accuracies),
            "source": self.source,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, obj: dict, registry: dict[str, DatasetMeta]) -> "ExperimentRecord":
        if not isinstance(obj, dict) or obj.get("v") != SCHEMA_VERSION:
            raise SchemaError(f"record schema version must be {SCHEMA_VERSION}")
        expected = {"v", "dataset_id", "layers", "prefix_accuracies", "source", "created_at"}
        if set(obj) != expected:
            raise SchemaError(f"record fields must be exactly {sorted(expected)}, got {sorted(obj)}")
        meta = registry.get(obj["dataset_id"])
        if meta is None:
            raise UnknownDataset(f"unknown dataset {obj['dataset_id']!r}")
        try:
            arch = ArchitectureSpec(tuple(layer_from_dict(l) for l in obj["layers"]), meta.num_classes)
            accs = obj["prefix_accuracies"]
            if not isinstance(accs, list) or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in accs):
                raise InvalidRecord("prefix_accuracies must be a list of numbers")
            record = cls(obj["dataset_id"], arch, tuple(accs), obj["source"], obj["created_at"])
        except (ArchitectureError, TypeError) as exc:
            raise InvalidRecord(str(exc)) from None
        record.check()
        return record


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def load_registry(path) -> list[DatasetMeta]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or obj.get("v") != SCHEMA_VERSION or not isinstance(obj.get("datasets"), list):
        raise SchemaError(f"{path}: registry must be {{'v': 1, 'datasets': [...]}}")
    datasets = []
    for d in obj["datasets"]:
        if not isinstance(d, dict) or set(d) != {"id", "name", "dcn", "num_classes"}:
            raise SchemaError(f"{path}: bad dataset entry {d!r}")
        datasets.append(DatasetMeta(**d))
    if len({d.id for d in datasets}) != len(datasets):
        raise SchemaError(f"{path}: duplicate dataset ids")
    return datasets


def save_registry(path, datasets: Iterable[DatasetMeta]) -> None:
    text = json.dumps({"v": SCHEMA_VERSION, "datasets": [d.to_dict() for d in datasets]}, indent=2) + "\n"
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class ExperimentStore:
    """Append-only experiment store bound to a dataset registry.

    ``path=None`` gives an in-memory store.
    """

    def __init__(self, datasets: Iterable[DatasetMeta], path: Optional[os.PathLike] = None):
        self.datasets: dict[str, DatasetMeta] = {}
        for d in datasets:
            if d.id in self.datasets:
                raise SchemaError(f"duplicate dataset id {d.id!r}")
            self.datasets[d.id] = d
        self.path = Path(path) if path is not None else None
        self._records: list[ExperimentRecord] = []
        if self.path is not None and self.path.exists():
            self._records = list(self._load())

    @classmethod
    def open(cls, store_path, registry_path) -> "ExperimentStore":
        return cls(load_registry(registry_path), store_path)

    def _load(self) -> Iterator[ExperimentRecord]:
        data = self.path.read_bytes()
        cut = data.rfind(b"\n") + 1
        if cut < len(data):
            # interrupted append: drop the partial tail so the next write starts on a clean line
            with open(self.path, "r+b") as fh:
                fh.truncate(cut)
        for lineno, line in enumerate(data[:cut].decode("utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{self.path}:{lineno}: {exc}") from None
            try:
                yield ExperimentRecord.from_dict(obj, self.datasets)
            except (SchemaError, InvalidRecord, UnknownDataset) as exc:
                raise type(exc)(f"{self.path}:{lineno}: {exc}") from None

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ExperimentRecord]:
        return iter(self._records)

    @property
    def records(self) -> tuple[ExperimentRecord, ...]:
        return tuple(self._records)

    def dataset_of(self, record: ExperimentRecord) -> DatasetMeta:
        return self.datasets[record.dataset_id]

    def append(self, record: ExperimentRecord) -> None:
        self.extend([record])

    def extend(self, records: Sequence[ExperimentRecord]) -> None:
        """Append several records; each one is written as its own atomic line."""
        for record in records:
            meta = self.datasets.get(record.dataset_id)
            if meta is None:
                raise UnknownDataset(f"dataset {record.dataset_id!r} is not registered")
            if record.architecture.num_classes != meta.num_classes:
                raise InvalidRecord(f"architecture has {record.architecture.num_classes} classes, dataset {meta.num_classes}")
            record.check()
        if self.path is not None:
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                fcntl.flock(fd, fcntl.LOCK_EX)
                for record in records:
                    os.write(fd, (_dumps(record.to_dict()) + "\n").encode("utf-8"))
                os.fsync(fd)
            finally:
                fcntl.flock(fd, fcntl.LOCK_UN)
                os.close(fd)
        self._records.extend(records)

    def filter_by_dcn(self, query_dcn: float, cfg: FilterConfig = FilterConfig()) -> list[ExperimentRecord]:
        return filter_by_dcn(self, query_dcn, cfg)


def filter_by_dcn(store: ExperimentStore, query_dcn: float, cfg: FilterConfig = FilterConfig()) -> list[ExperimentRecord]:
    """Records whose dataset satisfies ``|query_dcn - dcn| <= tau``, in store order."""
    keep = {d.id for d in store.datasets.values() if abs(query_dcn - d.dcn) <= cfg.tau}
    return [r for r in store if r.dataset_id in keep]


# -- synthetic ground truth --------------------------------------------------


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def oracle_logit(arch: ArchitectureSpec) -> float:
    kinds = [l.kind for l in arch.layers]
    n_conv = kinds.count("Convolution")
    n_res = kinds.count("ResidualBlock")
    bn_frac = sum(1 for l in arch.layers if l.kind == "Convolution" and l.batch_norm) / n_conv if n_conv else 0.0
    return 0.4 * n_conv + 0.6 * n_res + 0.2 * bn_frac - 0.05 * len(arch.layers) - 1.5


def pseudo_accuracy(arch: ArchitectureSpec, dcn: float, num_classes: int) -> float:
    """Deterministic stand-in for the trained accuracy of ``arch``.

    ``1/N + (1 - 1/N) (1 - dcn) logistic(z)`` where ``z`` rewards
    convolutions, residual blocks and batch-normalized convolutions and
    charges a small cost per layer.
    """
    chance = 1.0 / num_classes
    return chance + (1.0 - chance) * (1.0 - dcn) * _logistic(oracle_logit(arch))


def prefix_accuracies(arch: ArchitectureSpec, dcn: float, num_classes: int) -> tuple[float, ...]:
    return tuple(pseudo_accuracy(prefix(arch, k), dcn, num_classes) for k in range(1, len(arch.layers) + 1))


def generate_synthetic_corpus(
    datasets: Sequence[DatasetMeta],
    nets_per_dataset: int,
    space: SearchSpaceConfig,
    seed: int,
    created_at: Optional[str] = None,
) -> list[ExperimentRecord]:
    """Sample ``nets_per_dataset`` networks per dataset and label them with the oracle.

    Network ``j`` of dataset ``i`` is sampled with seed ``derive_seed(seed, i, j)``.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    if nets_per_dataset < 1:
        raise ValueError("nets_per_dataset must be positive")
    stamp = created_at or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    records = []
    for i, meta in enumerate(datasets):
        for j in range(nets_per_dataset):
            arch = sample(space, meta.num_classes, derive_seed(seed, i, j))
            records.append(
                ExperimentRecord(meta.id, arch, prefix_accuracies(arch, meta.dcn, meta.num_classes), "synthetic", stamp)
            )
    return records
