"""
Modelling one gesture with GMM + GMR
====================================

All training trials of a gesture are brought to a common length, their
features are pooled with time as an extra dimension, and a Gaussian mixture
is fitted. Conditioning the mixture on time (Gaussian mixture regression)
gives the expected feature curve and an envelope around it.
"""

import warnings

import numpy as np

from bimanual import build_gesture_model, design_cheby1_lowpass, normalize_lengths, trial_features
from bimanual.comparison import score_features
from bimanual.signals import synchronize_trials
from bimanual.synthgen import generate_dataset, templates_by_name

warnings.simplefilter("ignore")

raw = generate_dataset([templates_by_name()["OCC"]], trials_per_gesture=20, seed=1)["OCC"]
trials = synchronize_trials([r.trial for r in raw], [r.offsets for r in raw])
training = normalize_lengths(trials, "OCC")
print(f"{training.S_m} trials of {training.K_m} samples")

filt = design_cheby1_lowpass()
model = build_gesture_model(training, "4x4D", filt, seed=0)

# the silhouette sweep picks a component count per feature
for fid, k in model.component_counts.items():
    print(f"feature {fid}: {k} components")

# expected gravity curve of the left wrist at a few instants, with its spread
g_l = model["g_l"]
for i in np.linspace(0, model.K_m - 1, 5).astype(int):
    sd = np.sqrt(np.diag(g_l.covariances[i]))
    print(f"t={g_l.t[i]:5.2f} s  mean {np.round(g_l.means[i], 2)}  sd {np.round(sd, 2)}")

# a training trial stays within a couple of envelope widths of the curve
fs = trial_features(training.trials[0], "4x4D", filt)
for method in ("distance", "probability"):
    print(f"{method:12s} score of trial 0: {score_features(model, fs, method).overall:8.3f}")
