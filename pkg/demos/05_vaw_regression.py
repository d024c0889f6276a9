"""Clipped linear regression: the Vovk-Azoury-Warmuth forecaster with
clipped targets, plus the EWA variant on a Gaussian prior.

Run: python demos/05_vaw_regression.py
"""
import numpy as np

from improper_o2b.analysis import BoundParams, bound_linreg, vaw_regret_bound
from improper_o2b.estimators import LinRegConfig, linreg_ewa, linreg_vaw
from improper_o2b.harness.models import BoundedRegression, excess_risk, generate
from improper_o2b.o2b import shifted_regret

d, T, r, l, b = 2, 500, 1.0, 1.0, 2.0
theta = np.array([1.2, -0.8])
model = BoundedRegression(tuple(theta), r, l, noise=0.5)
stream = generate(model, T, seed=42)

vaw = linreg_vaw(stream, LinRegConfig(d, r, l, b))
regret = shifted_regret(vaw.trajectory, lambda q: q @ theta)
print(f"VAW shifted regret {regret:.3f} <= {vaw_regret_bound(l, d, T, b, r):.3f}")
print(f"VAW excess risk {excess_risk(vaw, model, b=b, seed=1).value:.5f}; bound {bound_linreg(BoundParams(T=T, d=d, r=r, b=b, l=l), 'vaw-clipped'):.3f}")

ewa = linreg_ewa(stream, LinRegConfig(d, r, l, b, mode="ewa-clipped"))
print(f"EWA excess risk {excess_risk(ewa, model, b=b, seed=1).value:.5f}; bound {bound_linreg(BoundParams(T=T, d=d, r=r, b=b, l=l), 'ewa-clipped'):.3f}")

# misspecified target (l - a) sin(3 theta^T x): excess risk against the best
# norm-constrained linear fit can be negative because the estimator is improper
mis = BoundedRegression(tuple(theta / 2), r, l, noise=0.3, misspecified=True)
vaw_mis = linreg_vaw(generate(mis, T, seed=7), LinRegConfig(d, r, l, b))
print(f"misspecified: excess risk vs best linear fit {excess_risk(vaw_mis, mis, b=b, seed=1).value:.5f}")
