"""
Balanced models and their single-species reduction
===================================================

A multi-species model is a set of species ratios and interaction
strengths.  When it is balanced, its whole mixture collapses on the
diagonal to one single-species polynomial ``sum_p beta_p^2 x^p``.
"""

import numpy as np

from balancedglass import mixture as mx

# The bipartite 2-spin model: two equal species, couplings only across.
spec = mx.bipartite_sk(1.0)
print(spec)
print("balanced:", mx.check_balanced(spec).balanced)

# beta_p^2 per degree, and the decoupled model with the same diagonal.
print("beta_p^2:", {p: float(b) for p, b in mx.reduce_beta(spec).items()})
lift = mx.diagonal_lift(spec)
print("lifted interactions:", dict(lift.interactions))

# Both mixtures agree on the diagonal x * (1, 1).
f, g = mx.build_mixture(spec), mx.build_mixture(lift)
xs = np.linspace(0, 1, 5)[:, None] * np.ones(2)
print("xi on diagonal      :", mx.eval_mixture(f, xs))
print("lifted xi on diagonal:", mx.eval_mixture(g, xs))

# Off the diagonal they differ, but the key inequality keeps the
# balanced mixture on the right side of its lift.
pts = np.random.default_rng(0).random((2000, 2))
rep = mx.key_inequality_margin(spec, pts)
print(f"key inequality: min margin {rep.min_margin:.3g}, gap at ones {rep.gap_at_ones:.3g}")

# A random balanced model with three species and degrees up to four.
rnd = mx.random_balanced_spec(np.random.default_rng(1), 3, 4)
print("random model balanced:", mx.check_balanced(rnd).balanced)
print("its beta_p^2:", {p: round(float(b), 4) for p, b in mx.reduce_beta(rnd).items()})
