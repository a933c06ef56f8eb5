"""The train-less accuracy predictor.

A network is scored by walking its backbone two layers at a time.  Each
step feeds the pair ``(layer i with the running accuracy, layer i+1 with
accuracy 0)`` as a 2-step sequence to the stacked LSTM, together with the
dataset's DCN, and the output becomes the running accuracy for the next
step.  The walk starts from chance accuracy ``1 / num_classes``.  Recurrent
state is fresh at every step; only the accuracy is carried over.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .archspace import ArchitectureSpec, validate
from .encoding import ACCURACY, NUM_FEATURES, Standardizer, encode_architecture, fit_standardizer
from .errors import (
    ArchitectureError,
    DimensionMismatch,
    EmptyInput,
    InvalidRecord,
    ModelDimensionMismatch,
    SchemaError,
    UnknownDataset,
)
from .lde import DatasetMeta, ExperimentRecord
from .nn import DenseParams, LstmParams, RmspropState, StackedLstmRegressor, rmsprop_step
from .rng import Rng, derive_seed
from .shape import infer

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    lstm1_hidden: int = 50
    lstm2_hidden: int = 100
    input_dim: int = NUM_FEATURES
    log_count_features: bool = True

    def __post_init__(self):
        if min(self.lstm1_hidden, self.lstm2_hidden, self.input_dim) < 1:
            raise ValueError("predictor dimensions must be positive")

    @property
    def dcn_concat_dim(self) -> int:
        return self.lstm2_hidden + 1


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 50
    seed: int = 0
    weight_decay: float = 0.0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1 or not self.learning_rate > 0 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1 and learning_rate > 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class TrainingSample:
    pair: np.ndarray  # (2, 14), raw features
    dcn: float
    target: float


#: Parameter count, prefix FLOPs and prefix memory span several decades.
COUNT_FEATURES = [9, 11, 12]


def prepare_inputs(x: np.ndarray, config: PredictorConfig) -> np.ndarray:
    """Raw encodings -> network-ready features, before standardization."""
    if not config.log_count_features:
        return x
    x = np.array(x, dtype=np.float64)
    x[..., COUNT_FEATURES] = np.log1p(x[..., COUNT_FEATURES])
    return x


@dataclass(frozen=True)
class DcnScaler:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)) or self.std < 0:
            raise SchemaError("DCN scaler needs a finite mean and a non-negative std")

    @classmethod
    def fit(cls, dcn: np.ndarray) -> "DcnScaler":
        std = float(np.std(dcn)) if np.ptp(dcn) > 0 else 0.0
        return cls(float(np.mean(dcn)), std)

    def apply(self, dcn):
        return (np.asarray(dcn, dtype=np.float64) - self.mean) / (self.std if self.std > 0 else 1.0)


@dataclass
class PredictorModel:
    network: StackedLstmRegressor
    standardizer: Standardizer
    config: PredictorConfig = PredictorConfig()
    metadata: dict = field(default_factory=dict)
    dcn_scaler: DcnScaler = DcnScaler()

    def __post_init__(self):
        c = self.config
        net = self.network
        if (
            c.input_dim != NUM_FEATURES
            or net.lstm1.input_dim != c.input_dim
            or net.lstm1.hidden != c.lstm1_hidden
            or net.lstm2.hidden != c.lstm2_hidden
            or net.dense.input_dim != c.dcn_concat_dim
        ):
            raise ModelDimensionMismatch("network dimensions do not match the predictor config")

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        def lstm(p: LstmParams) -> dict:
            return {"W": p.W.tolist(), "U": p.U.tolist(), "b": p.b.tolist()}

        return {
            "v": MODEL_SCHEMA_VERSION,
            "config": asdict(self.config),
            "standardizer": self.standardizer.to_dict(),
            "dcn_scaler": {"mean": self.dcn_scaler.mean, "std": self.dcn_scaler.std},
            "parameters": {
                "lstm1": lstm(self.network.lstm1),
                "lstm2": lstm(self.network.lstm2),
                "dense": {"weights": self.network.dense.weights.tolist(), "bias": self.network.dense.bias.tolist()},
            },
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def from_dict(cls, obj: dict) -> "PredictorModel":
        if not isinstance(obj, dict) or obj.get("v") != MODEL_SCHEMA_VERSION:
            raise SchemaError(f"model schema version must be {MODEL_SCHEMA_VERSION}")
        missing = {"config", "standardizer", "dcn_scaler", "parameters", "metadata"} - set(obj)
        if missing:
            raise SchemaError(f"model file lacks {sorted(missing)}")
        try:
            config = PredictorConfig(**obj["config"])
            standardizer = Standardizer.from_dict(obj["standardizer"])
            scaler = obj["dcn_scaler"]
            if set(scaler) != {"mean", "std"}:
                raise SchemaError("dcn_scaler needs exactly 'mean' and 'std'")
            dcn_scaler = DcnScaler(float(scaler["mean"]), float(scaler["std"]))
            p = obj["parameters"]
            h1, h2, d = config.lstm1_hidden, config.lstm2_hidden, config.input_dim
            lstm1 = LstmParams(
                _matrix(p["lstm1"]["W"], (4 * h1, d)), _matrix(p["lstm1"]["U"], (4 * h1, h1)), _matrix(p["lstm1"]["b"], (4 * h1,))
            )
            lstm2 = LstmParams(
                _matrix(p["lstm2"]["W"], (4 * h2, h1)), _matrix(p["lstm2"]["U"], (4 * h2, h2)), _matrix(p["lstm2"]["b"], (4 * h2,))
            )
            dense = DenseParams(_matrix(p["dense"]["weights"], (1, h2 + 1)), _matrix(p["dense"]["bias"], (1,)))
            return cls(StackedLstmRegressor(lstm1, lstm2, dense), standardizer, config, dict(obj["metadata"]), dcn_scaler)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise ModelDimensionMismatch(f"malformed model parameters: {exc}") from None

    @classmethod
    def load(cls, path) -> "PredictorModel":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: {exc}") from None
        return cls.from_dict(obj)


def _matrix(values, shape: tuple[int, ...]) -> np.ndarray:
    try:
        a = np.array(values, dtype=np.float64)
    except (ValueError, TypeError):
        raise ModelDimensionMismatch(f"ragged or non-numeric array, expected shape {shape}") from None
    if a.shape != shape:
        raise ModelDimensionMismatch(f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelDimensionMismatch("parameters must be finite")
    return a


# -- training data -----------------------------------------------------------


def prediction_pairs(num_layers: int) -> list[tuple[int, int]]:
    """Effective-layer index pairs walked for a backbone of ``num_layers``.

    A single-layer backbone is paired with the classifier at the end of the tail.
    """
    if num_layers == 1:
        return [(0, 2)]
    return [(j, j + 1) for j in range(num_layers - 1)]


def build_training_samples(
    records: Sequence[ExperimentRecord], datasets: Mapping[str, DatasetMeta]
) -> list[TrainingSample]:
    samples = []
    for record in records:
        meta = datasets.get(record.dataset_id)
        if meta is None:
            raise UnknownDataset(f"dataset {record.dataset_id!r} is not registered")
        arch = record.architecture
        n = len(arch.layers)
        if len(record.prefix_accuracies) != n:
            raise InvalidRecord(f"{len(record.prefix_accuracies)} prefix accuracies for {n} backbone layers")
        enc = encode_architecture(arch, infer(arch))
        accs = record.prefix_accuracies
        for j in range(n - 1):
            pair = enc[j : j + 2].copy()
            pair[0, ACCURACY] = 1.0 / meta.num_classes if j == 0 else accs[j]
            samples.append(TrainingSample(pair, meta.dcn, accs[j + 1]))
    return samples


def _stack(samples: Sequence[TrainingSample]):
    x = np.stack([s.pair for s in samples])
    dcn = np.array([s.dcn for s in samples], dtype=np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    return x, dcn, y


def train(
    samples: Sequence[TrainingSample],
    tcfg: TrainingConfig = TrainingConfig(),
    pcfg: PredictorConfig = PredictorConfig(),
    log=None,
) -> PredictorModel:
    """Fit the predictor with RMSprop on mini-batch mean squared error."""
    if not samples:
        raise EmptyInput("no training samples")
    x, raw_dcn, y = _stack(samples)
    x = prepare_inputs(x, pcfg)
    standardizer = fit_standardizer(x.reshape(-1, NUM_FEATURES))
    xs = standardizer.apply(x)
    dcn_scaler = DcnScaler.fit(raw_dcn)
    dcn = dcn_scaler.apply(raw_dcn)

    order = Rng(tcfg.seed).child(1).permutation(len(y))
    n_val = int(math.floor(tcfg.validation_fraction * len(y)))
    val_idx = np.array(sorted(order[:n_val]), dtype=np.intp)
    train_idx = [i for i in order[n_val:]]
    if not train_idx:
        raise EmptyInput("validation split leaves no training samples")

    net = StackedLstmRegressor.initialize(pcfg.input_dim, pcfg.lstm1_hidden, pcfg.lstm2_hidden, derive_seed(tcfg.seed, 2))
    params = net.parameters()
    state = RmspropState(learning_rate=tcfg.learning_rate, weight_decay=tcfg.weight_decay)
    shuffler = Rng(tcfg.seed).child(3)
    history = []

    def mse(idx) -> Optional[float]:
        if len(idx) == 0:
            return None
        pred = net.predict(xs[idx], dcn[idx])
        return float(np.mean((pred - y[idx]) ** 2))

    for epoch in range(tcfg.epochs):
        shuffler.shuffle(train_idx)
        for start in range(0, len(train_idx), tcfg.batch_size):
            batch = np.array(train_idx[start : start + tcfg.batch_size], dtype=np.intp)
            pred, cache = net.forward(xs[batch], dcn[batch])
            grads = net.backward(cache, 2.0 * (pred - y[batch]) / len(batch))
            rmsprop_step(params, grads, state)
            net.touch()
        train_loss = mse(np.array(sorted(train_idx), dtype=np.intp))
        val_loss = mse(val_idx)
        if not math.isfinite(train_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch + 1}")
        history.append({"epoch": epoch + 1, "train_mse": train_loss, "validation_mse": val_loss})
        if log is not None:
            log(epoch + 1, train_loss, val_loss)

    metadata = {
        "seed": tcfg.seed,
        "training_config": asdict(tcfg),
        "epochs_run": tcfg.epochs,
        "num_samples": len(y),
        "num_validation": int(n_val),
        "final_train_mse": history[-1]["train_mse"],
        "final_validation_mse": history[-1]["validation_mse"],
        "history": history,
    }
    return PredictorModel(net, standardizer, pcfg, metadata, dcn_scaler)


# -- prediction --------------------------------------------------------------


@dataclass
class BatchPrediction:
    accuracies: np.ndarray  # NaN where the architecture was rejected
    errors: dict[int, str]
    seconds: float

    @property
    def networks_per_second(self) -> float:
        return len(self.accuracies) / self.seconds if self.seconds > 0 else math.inf


def _check_model(model: PredictorModel) -> None:
    if model.network.input_dim != NUM_FEATURES or model.standardizer.means.shape != (NUM_FEATURES,):
        raise ModelDimensionMismatch("model does not consume 14-feature encodings")


def _encode_for_prediction(arch: ArchitectureSpec) -> np.ndarray:
    validate(arch)
    return encode_architecture(arch, infer(arch))


def _walk(encodings: Sequence[np.ndarray], dcn: float, num_classes: int, model: PredictorModel) -> np.ndarray:
    walks = [prediction_pairs(len(e) - 2) for e in encodings]
    acc = np.full(len(encodings), 1.0 / num_classes)
    longest = max((len(w) for w in walks), default=0)
    for step in range(longest):
        active = [k for k, w in enumerate(walks) if len(w) > step]
        x = np.empty((len(active), 2, NUM_FEATURES))
        for row, k in enumerate(active):
            a, b = walks[k][step]
            x[row, 0] = encodings[k][a]
            x[row, 0, ACCURACY] = acc[k]
            x[row, 1] = encodings[k][b]
            x[row, 1, ACCURACY] = 0.0
        x = model.standardizer.apply(prepare_inputs(x, model.config))
        y = model.network.predict(x, model.dcn_scaler.apply(np.full(len(active), float(dcn))))
        acc[active] = y
    return acc


def predict(arch: ArchitectureSpec, dcn: float, num_classes: int, model: PredictorModel) -> float:
    """Predicted final accuracy of ``arch`` on a dataset with the given DCN."""
    _check_model(model)
    try:
        enc = _encode_for_prediction(arch)
    except ArchitectureError as exc:
        raise ArchitectureError(f"invalid architecture: {exc}") from None
    return float(_walk([enc], dcn, num_classes, model)[0])


def predict_batch(
    archs: Sequence[ArchitectureSpec], dcn: float, num_classes: int, model: PredictorModel
) -> BatchPrediction:
    """Element-wise :func:`predict`, advancing all networks in lock step."""
    _check_model(model)
    start = time.perf_counter()
    errors: dict[int, str] = {}
    ok, encodings = [], []
    for k, arch in enumerate(archs):
        try:
            encodings.append(_encode_for_prediction(arch))
            ok.append(k)
        except ArchitectureError as exc:
            errors[k] = str(exc)
    out = np.full(len(archs), np.nan)
    if ok:
        out[ok] = _walk(encodings, dcn, num_classes, model)
    return BatchPrediction(out, errors, time.perf_counter() - start)


def evaluate_records(
    model: PredictorModel, records: Sequence[ExperimentRecord], datasets: Mapping[str, DatasetMeta]
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted vs recorded final accuracies, grouped per dataset for batching."""
    if not records:
        raise EmptyInput("no records to evaluate")
    pred = np.empty(len(records))
    truth = np.array([r.final_accuracy for r in records])
    by_dataset: dict[str, list[int]] = {}
    for k, r in enumerate(records):
        if r.dataset_id not in datasets:
            raise UnknownDataset(f"dataset {r.dataset_id!r} is not registered")
        by_dataset.setdefault(r.dataset_id, []).append(k)
    for ds_id, idx in by_dataset.items():
        meta = datasets[ds_id]
        res = predict_batch([records[k].architecture for k in idx], meta.dcn, meta.num_classes, model)
        if res.errors:
            raise InvalidRecord(f"unpredictable architectures: {res.errors}")
        pred[idx] = res.accuracies
    return pred, truth
