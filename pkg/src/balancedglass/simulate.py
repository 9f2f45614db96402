"""Finite-N experiments: disorder sampling, exact enumeration and ground-state search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Mapping

import numba
import numpy as np
from scipy.stats import binom

from ._parallel import pmap
from ._seeding import child_seed, stream
from .mixture import FiniteSizes, ModelSpec, build_mixture, eval_mixture, sup_abs_difference

ISING_N_CAP = 24


def _distinct_orderings(multiset):
    return sorted(set(permutations(multiset)))


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """Gaussian couplings of one finite system.

    ``couplings[t]`` holds the standard normals for the ordered species
    tuple ``t`` (shape ``(#I_{t_1}, ..., #I_{t_p})``); only tuples with
    nonzero strength are stored.  Each array is drawn from its own stream
    keyed by ``(seed, p, *t)``, so two models sharing a seed share the
    couplings of every common tuple.
    """

    spec: ModelSpec
    sizes: FiniteSizes
    seed: int
    couplings: Mapping[tuple[int, ...], np.ndarray]
    scale: float = 1.0
    effective: Mapping[tuple[int, ...], np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.sizes.block_sizes) != self.spec.n_species:
            raise ValueError("sizes must have one block per species")
        N = self.sizes.N
        eff = {}
        for key, d2 in self.spec.interactions.items():
            p = len(key)
            total = None
            for t in _distinct_orderings(key):
                g = self.couplings[t]
                # Reorder axes so they follow the sorted species order.
                perm = np.argsort(np.array(t), kind="stable")
                term = np.transpose(g, perm)
                total = term if total is None else total + term
            eff[key] = total * (self.scale * math.sqrt(float(d2)) / N ** ((p - 1) / 2.0))
        object.__setattr__(self, "effective", eff)

    @classmethod
    def draw(cls, spec: ModelSpec, sizes: FiniteSizes, seed: int) -> "DisorderSample":
        couplings = {}
        for key in spec.interactions:
            for t in _distinct_orderings(key):
                shape = tuple(sizes.block_sizes[s] for s in t)
                couplings[t] = stream(seed, len(t), *t).standard_normal(shape)
        return cls(spec, sizes, int(seed), couplings)

    def scaled(self, factor: float) -> "DisorderSample":
        """Same couplings multiplied by ``factor``."""
        return DisorderSample(self.spec, self.sizes, self.seed, self.couplings, self.scale * factor)


def _blocks(sizes: FiniteSizes, sigma: np.ndarray):
    return [sigma[..., sizes.block(s)] for s in range(len(sizes.block_sizes))]


def _contract_tail(T: np.ndarray, vecs) -> np.ndarray:
    """Contract axes ``1..p-1`` of ``T`` with batched vectors; returns ``(B, n_0)``."""
    B = vecs[0].shape[0] if vecs else None
    if not vecs:
        raise ValueError("nothing to contract")
    X = T.reshape(-1, T.shape[-1]) @ vecs[-1].T  # (n_0 .. n_{p-2}, B)
    for v in reversed(vecs[:-1]):
        X = X.reshape(-1, v.shape[1], B)
        X = np.einsum("aib,bi->ab", X, v)
    return X.T


def _pair_terms(disorder: DisorderSample):
    """Per (multiset, axis): tensor with that axis moved to the front, cached."""
    cache = disorder.__dict__.get("_axis_cache")
    if cache is None:
        cache = []
        for key, G in disorder.effective.items():
            for j in range(len(key)):
                others = tuple(key[i] for i in range(len(key)) if i != j)
                cache.append((key[j], others, np.ascontiguousarray(np.moveaxis(G, j, 0))))
        object.__setattr__(disorder, "_axis_cache", cache)
    return cache


def _energy(disorder: DisorderSample, flat: np.ndarray) -> np.ndarray:
    blocks = _blocks(disorder.sizes, flat)
    out = np.zeros(flat.shape[0])
    for key, G in disorder.effective.items():
        if len(key) == 1:
            out += blocks[key[0]] @ G
        else:
            out += np.sum(_contract_tail(G, [blocks[s] for s in key[1:]]) * blocks[key[0]], axis=1)
    return out


def hamiltonian(spec: ModelSpec, sizes: FiniteSizes, disorder: DisorderSample, sigma) -> np.ndarray | float:
    """``H_N(sigma)`` for one configuration or a batch (last axis of length N)."""
    _check_disorder(spec, sizes, disorder)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[-1] != sizes.N:
        raise ValueError(f"configuration has length {sigma.shape[-1]}, expected N = {sizes.N}")
    out = _energy(disorder, sigma.reshape(-1, sizes.N)).reshape(sigma.shape[:-1])
    return float(out) if out.ndim == 0 else out


def hamiltonian_gradient(disorder: DisorderSample, sigma: np.ndarray) -> np.ndarray:
    """Euclidean gradient of ``H_N`` for a batch ``(B, N)``."""
    sizes = disorder.sizes
    blocks = _blocks(sizes, sigma)
    grad = np.zeros_like(sigma)
    for s, others, T in _pair_terms(disorder):
        if not others:
            grad[:, sizes.block(s)] += T[None, :]
        else:
            grad[:, sizes.block(s)] += _contract_tail(T, [blocks[o] for o in others])
    return grad


def _check_disorder(spec, sizes, disorder):
    if disorder.sizes.block_sizes != sizes.block_sizes:
        raise ValueError("disorder was drawn for different block sizes")
    if disorder.spec.species != spec.species or dict(disorder.spec.interactions) != dict(spec.interactions):
        raise ValueError("disorder was drawn for a different model")


def overlap(sigma, tau, sizes: FiniteSizes) -> np.ndarray:
    """Per-species overlaps ``R_s = <sigma, tau>_s / #I_s``."""
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if sigma.shape != tau.shape or sigma.shape[-1] != sizes.N:
        raise ValueError("configurations must have matching shapes with last axis N")
    R = np.stack(
        [np.sum(a * b, axis=-1) / n for a, b, n in zip(_blocks(sizes, sigma), _blocks(sizes, tau), sizes.block_sizes)],
        axis=-1,
    )
    norms = np.stack(
        [
            np.sqrt(np.sum(a * a, axis=-1) * np.sum(b * b, axis=-1)) / n
            for a, b, n in zip(_blocks(sizes, sigma), _blocks(sizes, tau), sizes.block_sizes)
        ],
        axis=-1,
    )
    if np.any(np.abs(R) > norms * (1 + 1e-12) + 1e-12):
        raise AssertionError("overlap violates the Cauchy-Schwarz bound")
    return R


# Exact Ising enumeration.


def walsh_terms(disorder: DisorderSample) -> tuple[float, np.ndarray, np.ndarray]:
    """Multilinear form ``H = c + sum_A J_A prod_{i in A} sigma_i``.

    Returns the constant, the subset bitmasks and their coefficients.
    Repeated indices cancel because ``sigma_i^2 = 1``.
    """
    sizes = disorder.sizes
    offs = sizes.offsets
    masks, coefs = [], []
    for key, G in disorder.effective.items():
        grids = np.indices(G.shape).reshape(len(key), -1)
        m = np.zeros(grids.shape[1], dtype=np.int64)
        for axis, s in enumerate(key):
            m ^= np.left_shift(np.int64(1), grids[axis] + offs[s])
        masks.append(m)
        coefs.append(G.ravel())
    if not masks:
        return 0.0, np.zeros(0, dtype=np.int64), np.zeros(0)
    masks = np.concatenate(masks)
    coefs = np.concatenate(coefs)
    uniq, inv = np.unique(masks, return_inverse=True)
    summed = np.bincount(inv, weights=coefs, minlength=uniq.size)
    const = float(summed[uniq == 0].sum())
    keep = uniq != 0
    return const, uniq[keep], summed[keep]


@numba.njit(cache=True)
def _gray_logsumexp(N, const, coef, indptr, members):
    terms = coef.copy()
    H = const + terms.sum()
    M = H
    S = 1.0
    for step in range(1, 2**N):
        # Bit that changes between Gray codes step-1 and step.
        i = 0
        x = step
        while (x & 1) == 0:
            x >>= 1
            i += 1
        delta = 0.0
        for ptr in range(indptr[i], indptr[i + 1]):
            a = members[ptr]
            delta += terms[a]
            terms[a] = -terms[a]
        H -= 2.0 * delta
        if H > M:
            S = S * math.exp(M - H) + 1.0
            M = H
        else:
            S += math.exp(H - M)
    return M, S


def ising_exact_free_energy(spec: ModelSpec, sizes: FiniteSizes, disorder: DisorderSample, method: str = "gray") -> float:
    """``(1/N) log(2^-N sum_sigma exp H(sigma))`` for one disorder."""
    _check_disorder(spec, sizes, disorder)
    N = sizes.N
    if N > ISING_N_CAP:
        raise ValueError(f"exact enumeration is capped at N = {ISING_N_CAP}")
    if method == "naive":
        bits = (np.arange(2**N)[:, None] >> np.arange(N)) & 1
        H = np.atleast_1d(hamiltonian(spec, sizes, disorder, 1.0 - 2.0 * bits))
        top = H.max()
        return float((top + np.log(np.exp(H - top).sum()) - N * math.log(2.0)) / N)
    if method != "gray":
        raise ValueError(f"unknown method {method!r}")
    const, masks, coef = walsh_terms(disorder)
    # Spin -> list of terms containing it.
    member_bits = ((masks[:, None] >> np.arange(N)) & 1).astype(bool)
    counts = member_bits.sum(axis=0)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    members = np.concatenate([np.flatnonzero(member_bits[:, i]) for i in range(N)]).astype(np.int64) if masks.size else np.zeros(0, np.int64)
    M, S = _gray_logsumexp(N, const, coef.astype(float), indptr, members)
    return float((M + math.log(S) - N * math.log(2.0)) / N)


@dataclass(frozen=True)
class FreeEnergySamples:
    seeds: np.ndarray
    values: np.ndarray
    annealed: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def stderr(self) -> float:
        n = self.values.size
        return float(np.std(self.values, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")

    @property
    def strict_violations(self) -> int:
        return int(np.sum(self.values >= self.annealed))


def _free_energy_task(args):
    spec, sizes, seed = args
    return ising_exact_free_energy(spec, sizes, DisorderSample.draw(spec, sizes, seed))


def ising_free_energies(spec: ModelSpec, sizes: FiniteSizes, n_disorders: int, seed: int, workers: int | None = 1) -> FreeEnergySamples:
    """Exact ``log Z / N`` for ``n_disorders`` independent disorders; disorder ``i`` uses seed key ``(seed, i)``."""
    seeds = np.array([child_seed(seed, i) for i in range(n_disorders)], dtype=np.uint64)
    vals = pmap(_free_energy_task, [(spec, sizes, int(s)) for s in seeds], workers)
    annealed = 0.5 * float(eval_mixture(build_mixture(spec, sizes), np.ones(spec.n_species)))
    return FreeEnergySamples(seeds, np.array(vals), annealed)


# Spherical ground-state search.


@dataclass(frozen=True)
class GSEResult:
    value: float
    sigma: np.ndarray
    restart_values: np.ndarray
    iterations: np.ndarray
    stagnated: bool


def _project_blocks(sizes: FiniteSizes, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for s, n in enumerate(sizes.block_sizes):
        b = x[:, sizes.block(s)]
        norm = np.linalg.norm(b, axis=1, keepdims=True)
        norm = np.where(norm == 0, 1.0, norm)
        out[:, sizes.block(s)] = b * (math.sqrt(n) / norm)
    return out


def _tangent(sizes, sigma, grad):
    out = np.empty_like(grad)
    for s, n in enumerate(sizes.block_sizes):
        sl = sizes.block(s)
        c = np.sum(grad[:, sl] * sigma[:, sl], axis=1, keepdims=True) / n
        out[:, sl] = grad[:, sl] - c * sigma[:, sl]
    return out


CHUNK = 8
# Gradient level (per coordinate of N) below which a failed line search counts as converged.
PRECISION_GRAD = 1e-6


def _ascend(disorder: DisorderSample, sigma, max_iter, tol, step0=0.1, armijo=1e-4, shrink=0.5):
    sizes = disorder.sizes
    N = sizes.N
    B = sigma.shape[0]
    H = _energy(disorder, sigma)
    step = np.full(B, step0)
    active = np.ones(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    stalled = np.zeros(B, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        grad = _tangent(sizes, sigma[idx], hamiltonian_gradient(disorder, sigma[idx]))
        gnorm2 = np.sum(grad * grad, axis=1)
        done = np.sqrt(gnorm2) / N < tol
        active[idx[done]] = False
        idx, grad, gnorm2 = idx[~done], grad[~done], gnorm2[~done]
        if idx.size == 0:
            break
        iters[idx] += 1
        pending = np.ones(idx.size, dtype=bool)
        for _bt in range(40):
            if not pending.any():
                break
            p = np.flatnonzero(pending)
            cand = _project_blocks(sizes, sigma[idx[p]] + step[idx[p], None] * grad[p])
            Hc = _energy(disorder, cand)
            # Strict increase too: below rounding the Armijo term vanishes.
            ok = (Hc >= H[idx[p]] + armijo * step[idx[p]] * gnorm2[p]) & (Hc > H[idx[p]])
            acc = idx[p[ok]]
            sigma[acc] = cand[ok]
            H[acc] = Hc[ok]
            step[acc] *= 2.0
            pending[p[ok]] = False
            step[idx[p[~ok]]] *= shrink
        if pending.any():
            # No representable ascent left: stationary up to rounding in H.
            lost = idx[pending]
            stalled[lost] = np.sqrt(gnorm2[pending]) / N > PRECISION_GRAD
            active[lost] = False
    stalled |= active
    return sigma, H, iters, stalled


def spherical_gse_search(
    spec: ModelSpec,
    sizes: FiniteSizes,
    disorder: DisorderSample,
    restarts: int = 20,
    seed: int = 0,
    max_iter: int = 5000,
    tol: float = 1e-10,
) -> GSEResult:
    """Best ``max H / N`` found by projected gradient ascent from random starts.

    Restart ``r`` starts from a uniform point drawn from stream ``(seed, r)``.
    Restarts run in fixed-size padded batches, so the value of any single
    restart does not depend on how many restarts are requested.
    """
    _check_disorder(spec, sizes, disorder)
    if restarts < 1:
        raise ValueError("restarts must be positive")
    N = sizes.N
    if not disorder.effective:
        sigma = _project_blocks(sizes, np.ones((1, N)))[0]
        return GSEResult(0.0, sigma, np.zeros(restarts), np.zeros(restarts, dtype=np.int64), False)
    vals, iters, stall, best_sigma = [], [], [], None
    best = -np.inf
    for start in range(0, restarts, CHUNK):
        x0 = np.stack([stream(seed, r).standard_normal(N) for r in range(start, start + CHUNK)])
        sig, H, it, st = _ascend(disorder, _project_blocks(sizes, x0), max_iter, tol)
        take = min(CHUNK, restarts - start)
        for r in range(take):
            vals.append(H[r] / N)
            iters.append(it[r])
            stall.append(st[r])
            if H[r] / N > best:
                best, best_sigma = H[r] / N, sig[r].copy()
    vals = np.array(vals)
    # Stagnation is flagged when the winning restart did not reach the gradient tolerance.
    i = int(np.argmax(vals))
    return GSEResult(float(vals[i]), best_sigma, vals, np.array(iters), bool(stall[i]))


def _gse_task(args):
    spec, sizes, seed, restarts, search_seed = args
    return spherical_gse_search(spec, sizes, DisorderSample.draw(spec, sizes, seed), restarts, search_seed).value


def spherical_gse_samples(spec, sizes, n_disorders, seed, restarts=20, workers=1) -> np.ndarray:
    """``max H / N`` estimates for independent disorders keyed by ``(seed, i)``."""
    tasks = [(spec, sizes, child_seed(seed, i), restarts, child_seed(seed, i, 1)) for i in range(n_disorders)]
    return np.array(pmap(_gse_task, tasks, workers))


# Checks of identities and inequalities.


@dataclass(frozen=True)
class CovarianceReport:
    overlaps: np.ndarray
    expected: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    n_disorders: int

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= 4.0))


def _pair_configs(sizes: FiniteSizes, n_pairs: int, rng, mode: str):
    N = sizes.N
    if mode == "ising":
        sigma = rng.choice([-1.0, 1.0], size=(n_pairs, N))
        flip = rng.random((n_pairs, N)) < rng.random((n_pairs, 1))
        tau = np.where(flip, -sigma, sigma)
    else:
        sigma = _project_blocks(sizes, rng.standard_normal((n_pairs, N)))
        mix = rng.random((n_pairs, 1))
        tau = _project_blocks(sizes, mix * sigma + (1 - mix) * rng.standard_normal((n_pairs, N)))
    return sigma, tau


def covariance_check(
    spec: ModelSpec, sizes: FiniteSizes, n_pairs: int = 20, n_disorders: int = 5000, seed: int = 0, mode: str = "ising"
) -> CovarianceReport:
    """Monte Carlo ``E[H(sigma) H(tau)]`` against ``N xi_N(R(sigma, tau))``."""
    sigma, tau = _pair_configs(sizes, n_pairs, stream(seed, 0), mode)
    configs = np.concatenate([sigma, tau])
    Y = np.empty((n_disorders, n_pairs))
    for i in range(n_disorders):
        H = hamiltonian(spec, sizes, DisorderSample.draw(spec, sizes, child_seed(seed, 1, i)), configs)
        Y[i] = H[:n_pairs] * H[n_pairs:]
    R = overlap(sigma, tau, sizes)
    expected = sizes.N * np.atleast_1d(eval_mixture(build_mixture(spec, sizes), R))
    est = Y.mean(axis=0)
    se = Y.std(axis=0, ddof=1) / math.sqrt(n_disorders)
    z = np.where(se > 0, (est - expected) / np.where(se > 0, se, 1.0), 0.0)
    return CovarianceReport(R, expected, est, se, z, n_disorders)


@dataclass(frozen=True)
class LipschitzReport:
    difference: float
    stderr: float
    sup_bound: float
    one_sided_lhs: float
    one_sided_bound: float
    n_disorders: int

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= self.sup_bound + 3.0 * self.stderr

    @property
    def one_sided_passed(self) -> bool:
        return self.one_sided_lhs <= self.one_sided_bound + 3.0 * self.stderr


def _paired_task(args):
    specA, specB, sizes, seed = args
    a = ising_exact_free_energy(specA, sizes, DisorderSample.draw(specA, sizes, seed))
    b = ising_exact_free_energy(specB, sizes, DisorderSample.draw(specB, sizes, seed))
    return a, b


def lipschitz_bound_check(
    specA: ModelSpec, specB: ModelSpec, sizes: FiniteSizes, n_disorders: int = 200, seed: int = 0, workers: int | None = 1
) -> LipschitzReport:
    """Paired estimate of ``F_N(A) - F_N(B)`` against ``sup |xi_A - xi_B|``.

    Both models see the same seed per disorder.  The one-sided combination
    ``F(B) - F(A) <= [xi_B(1) - xi_A(1) + sup (xi_A - xi_B)] / 2`` is recorded too.
    """
    if specA.lam != specB.lam and not np.allclose(specA.lam_array(), specB.lam_array(), atol=0, rtol=0):
        raise ValueError("both models must share species ratios")
    if sizes.N > 20:
        raise ValueError("paired enumeration is capped at N = 20")
    tasks = [(specA, specB, sizes, child_seed(seed, i)) for i in range(n_disorders)]
    pairs = np.array(pmap(_paired_task, tasks, workers))
    diff = pairs[:, 0] - pairs[:, 1]
    se = float(np.std(diff, ddof=1) / math.sqrt(n_disorders)) if n_disorders > 1 else 0.0
    fA, fB = build_mixture(specA, sizes), build_mixture(specB, sizes)
    sup = sup_abs_difference(fA, fB)
    ones = np.ones(specA.n_species)
    sup_signed = _sup_signed(fA, fB)
    one_bound = 0.5 * (float(eval_mixture(fB, ones)) - float(eval_mixture(fA, ones)) + sup_signed)
    return LipschitzReport(float(diff.mean()), se, sup, float(-diff.mean()), one_bound, n_disorders)


def _sup_signed(f, g):
    """``sup (f - g)`` over ``[-1, 1]^S``."""
    from scipy.optimize import minimize

    S = f.n_species
    n = {1: 2001, 2: 101, 3: 31}.get(S, 11)
    axes = [np.linspace(-1.0, 1.0, n)] * S
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, S)
    vals = eval_mixture(f, pts) - eval_mixture(g, pts)
    best = float(np.max(vals))
    for i in np.argsort(vals)[-5:]:
        res = minimize(lambda z: -(float(eval_mixture(f, z)) - float(eval_mixture(g, z))), pts[i], method="L-BFGS-B", bounds=[(-1, 1)] * S)
        best = max(best, -float(res.fun))
    return best


@dataclass(frozen=True)
class ConcentrationReport:
    values: np.ndarray
    mean: float
    std: float
    t: float
    exceed_frequency: float
    tail_bound: float
    allowed_frequency: float

    @property
    def passed(self) -> bool:
        return self.exceed_frequency <= self.allowed_frequency


def concentration_check(
    spec: ModelSpec, sizes: FiniteSizes, n_disorders: int = 100, seed: int = 0, restarts: int = 10, workers: int | None = 1
) -> ConcentrationReport:
    """Spread of ``max H / N`` across disorders against the Gaussian tail bound.

    The empirical mean stands in for the expectation.  Deviations are
    counted at ``t = 2 sqrt(2 xi_N(1) / N)``, where the bound is
    ``2 exp(-4)``; the allowed frequency adds the 99.9% binomial quantile.
    """
    values = spherical_gse_samples(spec, sizes, n_disorders, seed, restarts, workers)
    xi1 = float(eval_mixture(build_mixture(spec, sizes), np.ones(spec.n_species)))
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if n_disorders > 1 else 0.0
    if xi1 == 0:
        return ConcentrationReport(values, mean, std, 0.0, 0.0, 0.0, 0.0)
    N = sizes.N
    t = 2.0 * math.sqrt(2.0 * xi1 / N)
    bound = min(1.0, 2.0 * math.exp(-N * t * t / (2.0 * xi1)))
    freq = float(np.mean(np.abs(values - mean) >= t))
    allowed = float(binom.ppf(0.999, n_disorders, bound)) / n_disorders
    return ConcentrationReport(values, mean, std, t, freq, bound, allowed)
