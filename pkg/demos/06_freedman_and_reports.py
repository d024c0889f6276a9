"""Freedman's inequality by simulation and nearest-rank risk reports.

Run: python demos/06_freedman_and_reports.py
"""
import numpy as np

from improper_o2b.analysis import (
    centered_bernoulli_differences,
    excess_risk_quantiles,
    freedman_check,
    freedman_tolerance,
    rademacher_differences,
)

for name, gen in [("rademacher", rademacher_differences(1.0)), ("bernoulli(0.2)", centered_bernoulli_differences(0.2))]:
    for lam in (0.2 / gen.R, 1.0 / gen.R):
        for delta in (0.05, 0.01):
            rate = freedman_check(gen, gen.R, lam, delta, trials=10_000, T=100, seed=42)
            print(f"{name:15s} lambda={lam:.3f} delta={delta}: violation rate {rate:.4f} (tolerance {freedman_tolerance(delta, 10_000):.4f})")

# a risk report: nearest-rank (1 - delta)-quantile with a bootstrap standard error
rng = np.random.default_rng(42)
risks = rng.exponential(0.01, size=500)
report = excess_risk_quantiles(risks, delta=0.05, bound=0.04)
for key, value in report.summary().items():
    print(f"{key:>15s}: {value}")
