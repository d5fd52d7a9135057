"""
Recognizing gestures in a continuous recording
==============================================

Models of all five gestures are trained, then a scripted recording
(open a wardrobe, take a bottle from the fridge, fill a cup, open and close
curtains, separated by rest) is scanned with sliding windows. Windows no
model accepts are labelled N.A.
"""

import warnings

from bimanual import generate_scenario, recognize_stream, score_timeline, train_bundle
from bimanual.signals import synchronize_trials
from bimanual.synthgen import SCENARIOS, generate_dataset

warnings.simplefilter("ignore")

raw = generate_dataset(trials_per_gesture=60, seed=0)
dataset = {g: synchronize_trials([r.trial for r in v], [r.offsets for r in v]) for g, v in raw.items()}

# the implicit layout (four 4D features) pairs best with the probability score
bundle = train_bundle(dataset, "4x4D", seed=0)
print("acceptance thresholds (mean log-density):")
for g, th in bundle.thresholds["probability"].items():
    print(f"  {g:5s} {th:8.3f}")

scenario = generate_scenario(SCENARIOS[2], seed=0)
timeline = recognize_stream(scenario.recording.left, scenario.recording.right, bundle.models,
                            bundle.config("probability"), bundle.filter())

print("\npredicted timeline:")
for e in timeline.events:
    print(f"  {e.t_start:6.2f} - {e.t_end:6.2f}  {e.label}")
print("ground truth:")
for a in scenario.annotations:
    print(f"  {a.t_start:6.2f} - {a.t_end:6.2f}  {a.label}")
print("\n" + score_timeline(timeline, scenario.annotations).summary())
