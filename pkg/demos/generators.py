"""Benchmark generators beyond random low-rank tensors.

* a hyperparameter grid: every cell is the test F1 of a k-NN classifier
  with that configuration;
* a query-cardinality tensor: every cell counts the rows of a synthetic
  table matching a random combination of predicates.

Run with ``python3 demos/generators.py``.
"""
from tensorfill import complete, method, sample_observed
from tensorfill.datagen import (
    default_axes,
    generate_hpo_grid,
    generate_query_tensor,
    make_table,
    query_counts,
    random_template,
)
from tensorfill.harness import evaluate


def report(tensor, fraction, names):
    observed = sample_observed(tensor, fraction, seed=0)
    for name in names:
        res = complete(observed, method(name), seed=0)
        mae = evaluate(res.prediction, tensor, observed)["mae"]
        print(f"  {fraction:>4.0%} observed  {name:>22}: MAE {mae:.4f}")


hpo = generate_hpo_grid(default_axes("knn"), "knn", data_seed=0, name="knn-grid")
print("k-NN grid axes:", [a["name"] for a in hpo.meta["axes"]], "shape", hpo.shape)
print(f"F1 range {hpo.values.min():.3f} .. {hpo.values.max():.3f}")
# Only 64 cells with F1 packed into a narrow band: a handful of observations
# barely constrains a factor model, and guessing observed values (naive) is
# already close. Factor methods need a denser sample to pay off here.
for fraction in (0.3, 0.5):
    report(hpo, fraction, ("naive", "cpd-s", "tensemble-cpd-median"))

template = random_template(make_table(300, seed=0), n_values=6, seed=0)
print("query template:", template.expression())
counts = query_counts(template)
print(f"row counts range {counts.min()} .. {counts.max()}")
report(generate_query_tensor(template, name="cardinality"), 0.1, ("naive", "cpd-s"))
