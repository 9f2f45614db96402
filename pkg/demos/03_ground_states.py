"""
Zero temperature: from free energies to ground states
=====================================================

The ground-state energy of the spherical pure p-spin is the large-alpha
limit of ``F(alpha) / alpha``.  A three-term fit extrapolates it from a
handful of temperatures.
"""

import math

from balancedglass import reference as ref

fit = ref.e0_extrapolation(2)
print(f"E0(2) = {fit.value:.10f}  (exact sqrt 2 = {math.sqrt(2):.10f}), reliable={fit.reliable}")

fit3 = ref.e0_extrapolation(3)
print(f"E0(3) = {fit3.value:.6f}, reliable={fit3.reliable}")
print("samples F/alpha:", [round(float(s), 6) for s in fit3.samples])

# The two-parameter bound for the pure bipartite model at p = q = 1
# reproduces the bipartite closed form.
for beta in (0.3, 1.0, 3.0):
    print(f"beta={beta}: bound {ref.pure_bound_2param(beta, 1, 1):.10f}  closed form {ref.bipartite_sk_free_energy(beta):.10f}")
