"""Quickstart: hide 80% of a rank-2 tensor and fill it back in.

Run with ``python3 demos/quickstart.py``.
"""
from tensorfill import complete, method, sample_observed
from tensorfill.datagen import generate_lowrank
from tensorfill.harness import evaluate

# A 10x10x10 tensor that is exactly rank 2, scaled into [0, 1].
truth = generate_lowrank((10, 10, 10), true_rank=2, seed=0, name="demo")

# Keep 20% of the entries; everything else is what we want to predict.
observed = sample_observed(truth, 0.2, seed=0)
print(f"observed {observed.nnz} of {truth.size} entries")

for name in ("naive", "cpd", "tucker", "tensemble-cpd-median"):
    spec = method(name, rank=2) if name in ("cpd", "tucker") else method(name)
    result = complete(observed, spec, seed=0)
    scores = evaluate(result.prediction, truth, observed)
    print(f"{spec.name:>22}: held-out MAE {scores['mae']:.2e}  ({result.seconds:.2f}s, {result.stop_reason or 'n/a'})")
