"""
Parisi functionals and the diagonal lift
========================================

The spherical and Ising functionals take a path ``(m, q)``.  Lifting a
single-species path to every species reproduces the single-species
functional exactly, which is how the balanced free energy reduces to a
one-dimensional problem.
"""

import numpy as np

from balancedglass import mixture as mx
from balancedglass import parisi as pa
from balancedglass import reference as ref

spec = mx.random_balanced_spec(np.random.default_rng(3), 3, 4)
f = mx.build_mixture(spec)

path = pa.ParisiPath([0.0, 0.4, 1.0], [0.0, 0.2, 0.7, 1.0])
lifted = pa.lift_path(path, spec.n_species)
for ens in ("spherical", "ising"):
    multi = pa.evaluate(f, lifted, ens).value
    single = pa.single_species_functional(f, path, ens).value
    print(f"{ens:9s}: multi-species {multi:.12f}  single-species {single:.12f}")

# Optimizing over single-species paths recovers the closed form of the
# bipartite spherical model on both sides of the transition.
for beta in (0.5, 1.0, 2.0):
    single = mx.single_species_mixture(mx.reduce_beta(mx.bipartite_sk(beta)))
    res = pa.optimize_path(single, "spherical", 2, restarts=2, seed=0)
    print(f"beta={beta}: optimized {res.value.value:.10f}  closed form {ref.bipartite_sk_free_energy(beta):.10f}")

# Without the diagonal restriction the indefinite bipartite mixture lets
# the infimum fall below the free energy, so the restriction matters.
free = pa.optimize_path(mx.build_mixture(mx.bipartite_sk(0.5)), "spherical", 1, restarts=2, seed=0)
print(f"unrestricted infimum at beta=0.5: {free.value.value:.6f} (free energy 0.125)")
