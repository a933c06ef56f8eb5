"""Command-line entry point: ``trainless <command> ...``.

Exit codes: 0 success, 2 bad input, 3 empty selection, 4 internal error.
Every command writes a ``*.manifest.json`` next to its main output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import math
import sys
import time
from importlib import metadata as _metadata
from pathlib import Path
from typing import Optional, Sequence

from . import evolve, lde, metrics, tap
from .archspace import ArchitectureSpec, SearchSpaceConfig, sample
from .errors import ArchitectureError, DegenerateInput, EmptyInput, TrainlessError
from .rng import Rng, derive_seed

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_INTERNAL = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _version() -> str:
    try:
        return _metadata.version("artifact")
    except _metadata.PackageNotFoundError:
        return "0+unknown"


def _now(args) -> str:
    if args.fixed_clock:
        return args.fixed_clock
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _write_manifest(path: Path, args, started: float, inputs: dict, outputs: dict, seeds: dict) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "config": config,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": _version(),
        "started_at": _now(args),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _emit(args, report: dict, lines: Sequence[str]) -> None:
    if args.json:
        print(json.dumps(report, default=float))
    else:
        for line in lines:
            print(line)


def _open_store(store: str, registry: str) -> lde.ExperimentStore:
    if not Path(store).is_file():
        raise CommandError(EXIT_INPUT, f"store {store} does not exist")
    return lde.ExperimentStore.open(store, registry)


def _split(n: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Record indices for (train, holdout)."""
    order = Rng(seed).child(7).permutation(n)
    n_hold = int(math.floor(fraction * n))
    return sorted(order[n_hold:]), sorted(order[:n_hold])


# -- commands ------------------------------------------------------------------


def cmd_generate_corpus(args) -> int:
    started = time.perf_counter()
    datasets = lde.load_registry(args.registry)
    space = SearchSpaceConfig(max_backbone_layers=args.max_layers)
    records = lde.generate_synthetic_corpus(datasets, args.nets_per_dataset, space, args.seed, created_at=_now(args))
    out = Path(args.store)
    if out.exists() and not args.append:
        out.unlink()
    store = lde.ExperimentStore(datasets, out)
    store.extend(records)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        args,
        started,
        {"registry": args.registry},
        {"store": str(out)},
        {"seed": args.seed},
    )
    _emit(args, {"records": len(records), "store_size": len(store)}, [f"wrote {len(records)} records to {out} ({len(store)} total)"])
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.perf_counter()
    store = _open_store(args.store, args.registry)
    selected = store.filter_by_dcn(args.query_dcn, lde.FilterConfig(args.tau))
    if not selected:
        raise CommandError(EXIT_EMPTY, f"no experiments within tau={args.tau} of DCN {args.query_dcn}")
    train_idx, hold_idx = _split(len(selected), args.holdout_fraction, args.seed)
    records = [selected[k] for k in train_idx]
    samples = tap.build_training_samples(records, store.datasets)
    if not samples:
        raise CommandError(EXIT_EMPTY, "selected experiments yield no layer pairs (all backbones have one layer)")
    tcfg = tap.TrainingConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        weight_decay=args.weight_decay,
        validation_fraction=args.validation_fraction,
    )

    def log(epoch, train_mse, val_mse):
        if args.verbose:
            print(f"epoch {epoch}: train_mse={_fmt(train_mse)} validation_mse={_fmt(val_mse) if val_mse is not None else '-'}", file=sys.stderr)

    model = tap.train(samples, tcfg, tap.PredictorConfig(args.lstm1_hidden, args.lstm2_hidden), log=log)
    model.metadata["selection"] = {
        "query_dcn": args.query_dcn,
        "tau": args.tau,
        "holdout_fraction": args.holdout_fraction,
        "split_seed": args.seed,
        "num_records": len(selected),
        "num_train_records": len(train_idx),
    }
    model.save(args.model)
    _write_manifest(
        Path(str(args.model) + ".manifest.json"),
        args,
        started,
        {"store": args.store, "registry": args.registry},
        {"model": args.model},
        {"seed": args.seed},
    )
    report = {
        "records": len(records),
        "samples": len(samples),
        "final_train_mse": model.metadata["final_train_mse"],
        "final_validation_mse": model.metadata["final_validation_mse"],
    }
    val = report["final_validation_mse"]
    _emit(
        args,
        report,
        [
            f"records\t{len(records)}",
            f"samples\t{len(samples)}",
            f"final_train_mse\t{_fmt(report['final_train_mse'])}",
            f"final_validation_mse\t{_fmt(val) if val is not None else '-'}",
        ],
    )
    return EXIT_OK


def load_architectures(path: str, num_classes: int) -> list[tuple[str, ArchitectureSpec]]:
    """An architecture file holds one architecture object or ``{"architectures": [...]}``."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    items = obj["architectures"] if isinstance(obj, dict) and "architectures" in obj else [obj]
    out = []
    for k, item in enumerate(items):
        arch = ArchitectureSpec.from_dict(item)
        name = path if len(items) == 1 and "architectures" not in obj else f"{path}#{k}"
        out.append((name, dataclasses.replace(arch, num_classes=num_classes)))
    return out


def cmd_predict(args) -> int:
    model = tap.PredictorModel.load(args.model)
    names: list[str] = []
    archs: list[ArchitectureSpec] = []
    failed = []
    for path in args.architectures:
        try:
            for name, arch in load_architectures(path, args.num_classes):
                names.append(name)
                archs.append(arch)
        except (OSError, ValueError, KeyError, TypeError, ArchitectureError) as exc:
            failed.append(path)
            print(f"{path}: {exc}", file=sys.stderr)
    result = tap.predict_batch(archs, args.dcn, args.num_classes, model)
    rows = []
    for k, name in enumerate(names):
        if k in result.errors:
            failed.append(name)
            print(f"{name}: {result.errors[k]}", file=sys.stderr)
        else:
            rows.append((name, float(result.accuracies[k])))
    report = {
        "predictions": [{"file": n, "predicted_accuracy": a} for n, a in rows],
        "networks": len(archs),
        "seconds": result.seconds,
        "networks_per_second": result.networks_per_second,
        "failed": failed,
    }
    lines = [f"{n}\t{_fmt(a)}" for n, a in rows]
    lines.append(f"throughput\t{_fmt(result.networks_per_second)} networks/s ({len(archs)} networks in {_fmt(result.seconds)} s)")
    _emit(args, report, lines)
    return EXIT_INPUT if failed else EXIT_OK


def cmd_evaluate(args) -> int:
    model = tap.PredictorModel.load(args.model)
    store = _open_store(args.store, args.registry)
    sel = model.metadata.get("selection", {})
    query = args.query_dcn if args.query_dcn is not None else sel.get("query_dcn")
    tau = args.tau if args.tau is not None else sel.get("tau", 0.05)
    if query is None:
        raise CommandError(EXIT_INPUT, "--query-dcn is required for models without selection metadata")
    records = store.filter_by_dcn(query, lde.FilterConfig(tau))
    if args.subset != "all":
        if not sel:
            raise CommandError(EXIT_INPUT, "model carries no split metadata; use --subset all")
        if (query, tau) != (sel["query_dcn"], sel["tau"]) or len(records) != sel["num_records"]:
            raise CommandError(EXIT_INPUT, "train/holdout subsets need the model's own selection")
        train_idx, hold_idx = _split(len(records), sel["holdout_fraction"], sel["split_seed"])
        records = [records[k] for k in (train_idx if args.subset == "train" else hold_idx)]
    if not records:
        raise CommandError(EXIT_EMPTY, "no records selected for evaluation")
    pred, truth = tap.evaluate_records(model, records, store.datasets)
    if args.dump_csv:
        with open(args.dump_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "dataset_id", "predicted", "recorded"])
            for k, (r, p, t) in enumerate(zip(records, pred, truth)):
                w.writerow([k, r.dataset_id, repr(float(p)), repr(float(t))])
    report = {"n": len(records), "mse": metrics.mse(pred, truth)}
    for name, fn in (("kendall_tau", metrics.kendall_tau), ("r_squared", metrics.r_squared)):
        try:
            report[name] = fn(pred, truth)
        except (DegenerateInput, EmptyInput):
            report[name] = None
    lines = [f"{k}\t{_fmt(v) if isinstance(v, float) else v}" for k, v in report.items()]
    _emit(args, report, lines)
    return EXIT_OK


def cmd_evolve(args) -> int:
    started = time.perf_counter()
    model = tap.PredictorModel.load(args.model)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = evolve.EvolutionConfig(population_size=args.population, steps=args.steps, seed=args.seed)
    space = SearchSpaceConfig(max_backbone_layers=args.max_layers)
    result = evolve.run(cfg, space, args.num_classes, model, args.dcn)
    if len(result.population) != args.population:
        raise CommandError(EXIT_INTERNAL, "population size changed during the run")
    with open(out / "history.tsv", "w", encoding="utf-8") as fh:
        fh.write("step\tbest_predicted_accuracy\n")
        for step, best in enumerate(result.history, 1):
            fh.write(f"{step}\t{best!r}\n")
    top = evolve.top_k(result.population, 3)
    (out / "top3.json").write_text(
        json.dumps(
            [{"id": ind.id, "predicted_accuracy": ind.predicted_accuracy, "architecture": ind.arch.to_dict()} for ind in top],
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    elapsed = time.perf_counter() - started
    _write_manifest(
        out / "manifest.json", args, started, {"model": args.model}, {"history": "history.tsv", "top": "top3.json"}, {"seed": args.seed}
    )
    report = {
        "steps": len(result.history),
        "population": len(result.population),
        "best_id": result.best.id,
        "best_predicted_accuracy": result.best.predicted_accuracy,
        "seconds": elapsed,
    }
    lines = [f"{k}\t{_fmt(v) if isinstance(v, float) else v}" for k, v in report.items()]
    lines += [f"top{r}\t{ind.id}\t{_fmt(ind.predicted_accuracy)}\t{len(ind.arch.layers)} layers" for r, ind in enumerate(top, 1)]
    _emit(args, report, lines)
    return EXIT_OK


def cmd_sample(args) -> int:
    space = SearchSpaceConfig(max_backbone_layers=args.max_layers)
    archs = [sample(space, args.num_classes, derive_seed(args.seed, k)).to_dict() for k in range(args.count)]
    obj = archs[0] if args.count == 1 else {"architectures": archs}
    Path(args.out).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    _emit(args, {"architectures": args.count, "out": args.out}, [f"wrote {args.count} architectures to {args.out}"])
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print reports as JSON")
    common.add_argument("--fixed-clock", metavar="ISO8601", help="use this timestamp instead of the current time")

    p = argparse.ArgumentParser(prog="trainless", description="Train-less accuracy prediction and simulated architecture search.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-corpus", parents=[common], help="label sampled networks with the synthetic oracle")
    g.add_argument("registry")
    g.add_argument("store")
    g.add_argument("--nets-per-dataset", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-layers", type=int, default=12)
    g.add_argument("--append", action="store_true", help="append to an existing store instead of replacing it")
    g.set_defaults(func=cmd_generate_corpus)

    t = sub.add_parser("train", parents=[common], help="filter the store by DCN and fit the predictor")
    t.add_argument("store")
    t.add_argument("--registry", required=True)
    t.add_argument("--query-dcn", type=float, required=True)
    t.add_argument("--tau", type=float, default=0.05)
    t.add_argument("--model", required=True, help="output model path")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch-size", type=int, default=512)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--validation-fraction", type=float, default=0.1)
    t.add_argument("--lstm1-hidden", type=int, default=50)
    t.add_argument("--lstm2-hidden", type=int, default=100)
    t.add_argument("--holdout-fraction", type=float, default=0.0, help="records withheld from training for evaluate")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", parents=[common], help="predict accuracies of architecture files")
    pr.add_argument("model")
    pr.add_argument("architectures", nargs="+")
    pr.add_argument("--dcn", type=float, required=True)
    pr.add_argument("--num-classes", type=int, required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", parents=[common], help="MSE, Kendall tau and R^2 against recorded accuracies")
    e.add_argument("model")
    e.add_argument("store")
    e.add_argument("--registry", required=True)
    e.add_argument("--query-dcn", type=float)
    e.add_argument("--tau", type=float)
    e.add_argument("--subset", choices=("all", "train", "holdout"), default="all")
    e.add_argument("--dump-csv")
    e.set_defaults(func=cmd_evaluate)

    ev = sub.add_parser("evolve", parents=[common], help="simulated tournament evolution")
    ev.add_argument("model")
    ev.add_argument("--dcn", type=float, required=True)
    ev.add_argument("--num-classes", type=int, required=True)
    ev.add_argument("--steps", type=int, default=20000)
    ev.add_argument("--population", type=int, default=1000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--max-layers", type=int, default=12)
    ev.add_argument("--out-dir", required=True)
    ev.set_defaults(func=cmd_evolve)

    s = sub.add_parser("sample", parents=[common], help="write random architectures to a file")
    s.add_argument("out")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--num-classes", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-layers", type=int, default=12)
    s.set_defaults(func=cmd_sample)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError, KeyError, TrainlessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AssertionError, FloatingPointError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
