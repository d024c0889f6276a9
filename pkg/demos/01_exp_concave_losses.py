"""Exp-concave losses, the shifted loss, and the midpoint inequality.

Run: python demos/01_exp_concave_losses.py
"""
import numpy as np

from improper_o2b.losses import (
    check_exp_concavity,
    clipped_squared_loss,
    make_shifted,
    negative_term_residual,
    smoothed_log_loss_family,
    squared_loss,
)

rng = np.random.default_rng(42)

# squared loss on [-1, 1]: alpha = 1/(2 D^2) with D = 2, m = D^2 = 4
sq = squared_loss(-1.0, 1.0)
print(f"squared loss: alpha={sq.alpha:.4g}, m={sq.m:.4g}, gamma=4 max(m, 1/alpha)={sq.gamma:.4g}")

# the clipped squared loss used for linear regression has gamma = 32 l^2
print(f"clipped squared loss, l=1: gamma={clipped_squared_loss(1.0).gamma:.4g}")

# smoothed log-loss -log((1 - mu) p + mu p0), bounded thanks to the mu p0 floor
sll = smoothed_log_loss_family(mu=0.05, p_max=1.0, p0_min=0.5)
print(f"smoothed log-loss, mu=0.05: alpha={sll.alpha:.4g}, m={sll.m:.4g}")
print("exp-concave on a grid:", check_exp_concavity(sll, [0.5]))

# midpoint inequality with the negative quadratic term; residuals must be >= 0
x, y, out = rng.uniform(-1, 1, size=(3, 100_000))
res = negative_term_residual(sq, x, y, out)
print(f"min residual over 1e5 draws: {res.min():.3e}")

# shifting at the current prediction keeps the exp-concavity constant
shifted = make_shifted(sq, center=0.3, outcome=-0.5)
w = np.linspace(-1, 1, 5)
print("shifted loss at w:", np.round(shifted.value(w), 4))
print("equals base at (w + 0.3)/2:", np.allclose(shifted.value(w), sq((w + 0.3) / 2, -0.5)))
