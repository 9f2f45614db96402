"""Closed-form and low-dimensional reference values."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .mixture import MixtureFunction, ModelSpec, eval_mixture, single_species_mixture
from .parisi import gse_from_free_energy, optimize_path

M_MIN = 1e-6
A_MAX = 1.0 - 1e-9


def bipartite_sk_free_energy(beta: float) -> float:
    """Limiting free energy of the balanced bipartite spherical 2-spin model."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta <= 1.0 / math.sqrt(2.0):
        return 0.5 * beta * beta
    r = math.sqrt(2.0) * beta
    return r - 0.5 * math.log(r) - 0.75


def pure_bracket(m, a, beta: float, P: int):
    """The two-parameter bound, vectorized over ``m`` and ``a``."""
    m = np.asarray(m, dtype=float)
    a = np.asarray(a, dtype=float)
    return 0.5 * (
        beta * beta * (1.0 - (1.0 - m) * a**P) + np.log1p(m * a / (1.0 - a)) / m + np.log1p(-a)
    )


def pure_bound_2param(beta: float, p: int, q: int, n_grid: int = 200) -> float:
    """Infimum of the bracket over ``m in [1e-6, 1]``, ``a in [0, 1 - 1e-9]``.

    Dense grid first, then bounded quasi-Newton refinement from the best cells.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    P = p + q
    ms = np.geomspace(M_MIN, 1.0, n_grid)
    half = n_grid // 2
    a_lin = np.linspace(0.0, 0.99, n_grid - half, endpoint=False)
    a_edge = 1.0 - np.geomspace(1e-2, 1.0 - A_MAX, half)
    As = np.concatenate([a_lin, a_edge])
    vals = pure_bracket(ms[:, None], As[None, :], beta, P)
    best = float(vals.min())
    flat = np.argsort(vals, axis=None)[:5]
    for idx in flat:
        i, j = np.unravel_index(idx, vals.shape)
        res = minimize(
            lambda z: float(pure_bracket(z[0], z[1], beta, P)),
            [ms[i], As[j]],
            method="L-BFGS-B",
            bounds=[(M_MIN, 1.0), (0.0, A_MAX)],
            options={"ftol": 1e-15, "gtol": 1e-12},
        )
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))
    return best


def annealed_bound(f: MixtureFunction) -> float:
    """``xi(1) / 2``, the Jensen upper bound on the free energy."""
    return 0.5 * float(eval_mixture(f, np.ones(f.n_species)))


def sk_critical_check(spec: ModelSpec) -> float:
    """``sum_{s,t} 2 Delta^2_{st} lambda_s lambda_t``; equal to 1 on the critical surface."""
    extra = [k for k in spec.interactions if len(k) != 2]
    if extra:
        raise ValueError(f"only 2-spin interactions are allowed, found degrees {sorted({len(k) for k in extra})}")
    total = 0.0
    for (s, t), d2 in spec.interactions.items():
        ways = 1 if s == t else 2
        total += 2.0 * ways * float(d2) * float(spec.lam[s]) * float(spec.lam[t])
    return total


def pure_free_energy_path(p: int, alphas, k: int = 2, restarts: int = 2, seed: int = 0):
    """``F(alpha) / alpha`` for the spherical pure p-spin, continued along ``alphas``."""
    out = []
    prev = None
    for a in alphas:
        f = single_species_mixture({p: float(a) * float(a)})
        res = optimize_path(f, "spherical", k, restarts=restarts, seed=seed, init=[prev] if prev else None, maxiter=1000)
        prev = res.path
        out.append(res.value.value / float(a))
    return np.array(out)


def e0_extrapolation(p: int, n_alpha: int = 8, alpha_range=(2.0, 128.0), k: int = 2, restarts: int = 2, seed: int = 0):
    """Zero-temperature fit for the spherical pure p-spin at unit weight."""
    alphas = np.geomspace(alpha_range[0], alpha_range[1], n_alpha)
    samples = dict(zip(alphas.tolist(), pure_free_energy_path(p, alphas, k, restarts, seed)))
    return gse_from_free_energy(lambda a: samples[float(a)], alphas)


@lru_cache(maxsize=None)
def e0_pure(p: int, n_alpha: int = 8) -> float:
    """Limiting ground-state energy of the spherical pure p-spin model.

    ``sqrt(2)`` for ``p = 2`` by convention; computed by zero-temperature
    extrapolation of the optimized functional otherwise.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if p == 2:
        return math.sqrt(2.0)
    return e0_extrapolation(p, n_alpha).value
