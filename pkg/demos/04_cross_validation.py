"""
Cross-validating the four model/score combinations
==================================================

Each gesture's recordings are split into folds. Every fold trains on the
others and labels the held-out recordings whole. Precision and recall per
gesture and overall accuracy come from the summed confusion matrix.
This demo uses 12 recordings per gesture to stay quick; the CLI's
``eval`` command runs the full 60-recording study.
"""

import warnings

from bimanual.evaluation import kfold_evaluate_methods
from bimanual.signals import synchronize_trials
from bimanual.synthgen import generate_dataset

warnings.simplefilter("ignore")

raw = generate_dataset(trials_per_gesture=12, seed=3)
dataset = {g: synchronize_trials([r.trial for r in v], [r.offsets for r in v]) for g, v in raw.items()}

for approach in ("4x4D", "2x7D"):
    results = kfold_evaluate_methods(dataset, folds=6, approach=approach, seed=3)
    for result in results.values():
        print(result.report())
