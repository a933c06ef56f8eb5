"""Step 2: select experiments by dataset difficulty and fit the predictor.

    python demos/02_train_predictor.py [workdir]
"""

import sys
from pathlib import Path

from trainless import metrics
from trainless.lde import ExperimentStore, FilterConfig
from trainless.tap import TrainingConfig, build_training_samples, evaluate_records, train

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
store = ExperimentStore.open(work / "store.ndjson", work / "registry.json")

# Only experiments on datasets of similar difficulty are useful. tau=1 keeps
# everything; try 0.05 to see the selection shrink to one dataset.
selected = store.filter_by_dcn(0.5, FilterConfig(tau=1.0))
print(f"{len(selected)} of {len(store)} experiments selected")

# hold back every fifth record so we can score the model on unseen networks
train_records = [r for k, r in enumerate(selected) if k % 5]
test_records = [r for k, r in enumerate(selected) if not k % 5]

# A record with L backbone layers gives L-1 (layer, next layer) training pairs.
samples = build_training_samples(train_records, store.datasets)
print(f"{len(samples)} layer pairs for training")


def progress(epoch, train_mse, val_mse):
    if epoch % 10 == 0:
        print(f"  epoch {epoch:3d}  train mse {train_mse:.5f}  validation mse {val_mse:.5f}")


model = train(samples, TrainingConfig(epochs=40, seed=7), log=progress)
model.save(work / "model.json")

pred, truth = evaluate_records(model, test_records, store.datasets)
report = metrics.report(pred, truth)
print(f"held-out: mse {report['mse']:.5f}  kendall tau {report['kendall_tau']:.3f}  R^2 {report['r_squared']:.3f}")
