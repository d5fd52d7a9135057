"""
Separating gravity from body acceleration
=========================================

A wrist accelerometer measures the pull of gravity plus the acceleration of
the arm itself. A very low cut-off Chebyshev type I filter keeps the slow
orientation part; whatever it removes is body acceleration.
"""

import warnings

import numpy as np

from bimanual import design_cheby1_lowpass, separate_gravity_body
from bimanual.synthgen import JitterSpec, generate_trial, templates_by_name

warnings.simplefilter("ignore")

# the default design: order 5, 0.001 dB ripple, 0.25 Hz cut-off at 40 Hz
filt = design_cheby1_lowpass()
for f in (0.0, 0.25, 1.0, 2.0, 5.0):
    print(f"gain at {f:4.2f} Hz: {float(filt.gain_db(f)):9.4f} dB")
print("poles inside the unit circle:", bool(np.all(np.abs(filt.poles) < 1)))

# one noisy execution of "sweep the floor"
rng = np.random.default_rng(0)
trial, onset = generate_trial(templates_by_name()["SWP"], JitterSpec(), rng)
gravity, body = separate_gravity_body(trial.left, filt)

# gravity keeps a magnitude near 9.81, body acceleration averages out
g_norm = np.linalg.norm(gravity.a, axis=1)
print(f"\n{len(trial.left)} samples, gesture starts at {onset:.2f} s")
print(f"|gravity| between {g_norm.min():.2f} and {g_norm.max():.2f} m/s^2")
print("mean body acceleration per axis:", np.round(body.a.mean(axis=0), 3))

# the split is exact: adding the parts gives back the recording bit for bit
print("gravity + body == raw:", np.array_equal(gravity.a + body.a, trial.left.a))
