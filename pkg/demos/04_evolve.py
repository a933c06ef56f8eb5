"""Step 4: tournament evolution with the predictor as the fitness function.

Every step picks two networks, deletes the worse one and puts a mutated copy
of the better one in its place. No network is ever trained.

    python demos/04_evolve.py [workdir]
"""

import sys
from pathlib import Path

from trainless.archspace import SearchSpaceConfig
from trainless.evolve import EvolutionConfig, run, top_k
from trainless.tap import PredictorModel

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
model = PredictorModel.load(work / "model.json")

cfg = EvolutionConfig(population_size=200, steps=3000, seed=1)
result = run(cfg, SearchSpaceConfig(), 10, model, dcn=0.3)

for step in (0, 99, 999, len(result.history) - 1):
    print(f"step {step + 1:5d}: best predicted accuracy {result.history[step]:.4f}")

for rank, ind in enumerate(top_k(result.population, 3), 1):
    layers = ", ".join(l.kind for l in ind.arch.layers)
    print(f"#{rank} ({ind.predicted_accuracy:.4f}): {layers}")
