"""Model-selection aggregation: EWA on shifted losses over a finite dictionary,
followed by averaging of the per-round posterior-mean predictors.

Run: python demos/02_finite_aggregation.py
"""
import math

import numpy as np

from improper_o2b.analysis import bound_aggregation
from improper_o2b.estimators import aggregate_finite
from improper_o2b.losses import squared_loss
from improper_o2b.o2b import shifted_regret

rng = np.random.default_rng(42)
T = 400

# a dictionary of clipped linear functions; the data follow one of them plus noise
slopes = np.linspace(-1.5, 1.5, 7)
dictionary = [lambda X, a=a: np.clip(a * np.atleast_2d(X)[:, 0], -1, 1) for a in slopes]
X = rng.uniform(-1, 1, size=(T, 1))
Y = np.clip(0.5 * X[:, 0] + rng.uniform(-0.4, 0.4, T), -1, 1)

loss = squared_loss(-1.0, 1.0)
avg = aggregate_finite(dictionary, zip(X, Y), loss)
traj = avg.trajectory

# shifted regret against every expert stays under ln(K)/alpha
worst = max(shifted_regret(traj, f) for f in dictionary)
print(f"max shifted regret {worst:.3f} <= ln(K)/alpha = {math.log(len(dictionary)) / loss.alpha:.3f}")

final_weights = traj.rounds[-1].snapshot.weights
print("posterior at round T:", np.round(final_weights, 3), "(true slope 0.5)")

# risk of the averaged predictor on fresh data vs the best expert
Xf = rng.uniform(-1, 1, size=(100_000, 1))
Yf = np.clip(0.5 * Xf[:, 0] + rng.uniform(-0.4, 0.4, len(Xf)), -1, 1)
risk = np.mean((avg.predict(Xf) - Yf) ** 2)
best = min(np.mean((f(Xf) - Yf) ** 2) for f in dictionary)
print(f"excess risk {risk - best:.5f}; high-probability bound {bound_aggregation(len(dictionary), loss.alpha, loss.m, 0.05, T):.3f}")
