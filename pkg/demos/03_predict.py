"""Step 3: score unseen architectures without training them.

    python demos/03_predict.py [workdir]
"""

import sys
from pathlib import Path

from trainless.archspace import ArchitectureSpec, BatchNorm, Convolution, Pooling, ResidualBlock, SearchSpaceConfig, sample
from trainless.rng import derive_seed
from trainless.tap import PredictorModel, predict, predict_batch

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
model = PredictorModel.load(work / "model.json")

# a hand-written network; the GlobalPooling -> FullyConnected tail is implied
arch = ArchitectureSpec(
    (
        Convolution(3, 1, "same", 32, True),
        ResidualBlock(3, 2, 64, 2),
        Pooling("max", 2, 2),
        BatchNorm(),
        Convolution(1, 1, "valid", 64, False),
    )
)
for dcn in (0.1, 0.5, 0.9):
    print(f"dcn {dcn}: predicted accuracy {predict(arch, dcn, 10, model):.4f}")

# Batches walk all networks forward in lock step, which is where the speed comes from.
archs = [sample(SearchSpaceConfig(), 10, derive_seed(3, k)) for k in range(1000)]
res = predict_batch(archs, 0.5, 10, model)
print(f"scored {len(archs)} random networks at {res.networks_per_second:.0f} networks/s")
best = int(res.accuracies.argmax())
print(f"best random network ({len(archs[best])} layers): {res.accuracies[best]:.4f}")
