"""Step 1: build a small experiment database.

Real corpora come from training networks on GPUs. Here every accuracy is
produced by a deterministic oracle, so the whole walkthrough runs on a
laptop in about a minute.

    python demos/01_build_corpus.py [workdir]
"""

import sys
from pathlib import Path

from trainless.archspace import SearchSpaceConfig
from trainless.lde import DatasetMeta, ExperimentStore, generate_synthetic_corpus, save_registry

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
work.mkdir(exist_ok=True)

# Each dataset is described only by its difficulty (DCN, 0 = easy, 1 = hopeless)
# and its class count. The predictor never sees images.
datasets = [DatasetMeta(f"ds{k}", f"toy-{k}", dcn, 10) for k, dcn in enumerate([0.1, 0.3, 0.5, 0.7, 0.9])]
save_registry(work / "registry.json", datasets)

space = SearchSpaceConfig()
records = generate_synthetic_corpus(datasets, 120, space, seed=7, created_at="2024-01-01T00:00:00+00:00")

store_path = work / "store.ndjson"
store_path.unlink(missing_ok=True)
store = ExperimentStore(datasets, store_path)
store.extend(records)

# One record holds the accuracy after every prefix of the backbone, which is
# what lets the predictor learn layer by layer.
r = store.records[0]
print(f"{len(store)} experiments written to {store_path}")
print(f"first record: {len(r.architecture)} backbone layers on {r.dataset_id}")
for k, (layer, acc) in enumerate(zip(r.architecture.layers, r.prefix_accuracies), 1):
    print(f"  prefix {k:2d}  {layer.kind:15s} accuracy {acc:.4f}")
