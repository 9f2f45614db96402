"""
Injective norms of Gaussian tensors
===================================

The injective norm of an order-p Gaussian tensor, divided by sqrt(d),
has the same law as the ground state of a p-species spin glass.  Its
limit is ``sqrt(p) E0(p)``.
"""

import math

import numpy as np

from balancedglass import tensor as tn

# Matrices: the injective norm is the spectral norm, edge 2 sqrt(d).
T = tn.GaussianTensor(2, 40, seed=0)
est = tn.injective_norm_estimate(T)
print(f"p=2 estimate {est.value:.10f}  svd {np.linalg.svd(T.entries, compute_uv=False)[0]:.10f}")

for p, d in ((2, 30), (3, 15)):
    vals = [tn.injective_norm_estimate(tn.GaussianTensor(p, d, seed=i), restarts=4 * p * d).value / math.sqrt(d) for i in range(10)]
    print(f"p={p}, d={d}: mean ||T||/sqrt(d) = {np.mean(vals):.4f}, limit {tn.asymptote(p):.4f}")

# The translated spin glass gives the same distribution.
rep = tn.correspondence_check(3, 8, n_samples=30, seed=1)
print(f"tensor {rep.tensor_mean:.4f} vs model {rep.model_mean:.4f}, z = {rep.z:+.2f}")

spec, sizes = tn.translate_to_model(3, 8)
print("translated model:", dict(spec.interactions), sizes.block_sizes)
