"""Ising and spherical Parisi functionals for multi-species mixtures.

A path is a mass sequence ``0 = m_0 < m_1 < ... < m_k = 1`` together with,
for every species, overlap levels ``0 = q_0 <= q_1 <= ... <= q_{k+1} = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.special import logsumexp

from ._parallel import pmap
from ._seeding import stream
from .mixture import MixtureFunction, single_species_mixture, species_derivatives, theta

INCREMENT_CLAMP = 1e-14
DEFAULT_NODES = 40
QUADRATURE_BUDGET = 40**4
K_CAP = {"ising": 6, "spherical": 8}


@dataclass(frozen=True, eq=False)
class ParisiPath:
    """Discrete order parameter.

    ``m`` has shape ``(k + 1,)`` and ``q`` has shape ``(k + 2, S)``; column
    ``s`` of ``q`` is the overlap sequence of species ``s``.
    """

    m: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        q = np.array(self.q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if m.ndim != 1 or m.size < 2:
            raise ValueError("m must be a sequence of length k + 1 >= 2")
        k = m.size - 1
        if q.ndim != 2 or q.shape[0] != k + 2 or q.shape[1] < 1:
            raise ValueError(f"q must have shape ({k + 2}, S), got {q.shape}")
        if m[0] != 0 or m[-1] != 1 or np.any(np.diff(m) <= 0):
            raise ValueError(f"m must increase strictly from 0 to 1, got {m}")
        if np.any(q[0] != 0) or np.any(q[-1] != 1) or np.any(np.diff(q, axis=0) < 0):
            raise ValueError("every q column must be nondecreasing from 0 to 1")
        m.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

    @property
    def k(self) -> int:
        return self.m.size - 1

    @property
    def n_species(self) -> int:
        return self.q.shape[1]

    def to_dict(self) -> dict:
        return {"k": self.k, "m": self.m.tolist(), "q": self.q.tolist()}


@dataclass(frozen=True)
class FunctionalValue:
    """``value == sum_s lam_s * per_species[s] + theta_sum``."""

    value: float
    per_species: np.ndarray
    theta_sum: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        diag = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.diagnostics.items()}
        return {
            "value": self.value,
            "per_species": self.per_species.tolist(),
            "theta_sum": self.theta_sum,
            "diagnostics": diag,
        }


def lift_path(path: ParisiPath, n_species: int) -> ParisiPath:
    """Copy a single-species ``q`` column to every species."""
    if path.n_species != 1:
        raise ValueError("lift_path expects a single-species path")
    return ParisiPath(path.m, np.repeat(path.q, n_species, axis=1))


def _check(f: MixtureFunction, path: ParisiPath, lam):
    if path.n_species != f.n_species:
        raise ValueError(f"path has {path.n_species} species, mixture has {f.n_species}")
    lam = f.lam if lam is None else np.asarray(lam, dtype=float)
    if lam.shape != (f.n_species,):
        raise ValueError("lambda must have one entry per species")
    return lam


def increments(f: MixtureFunction, path: ParisiPath) -> np.ndarray:
    """Gaussian variances per level and species, shape ``(k + 1, S)``.

    Level 0 has variance ``xi^s(q_1)``; the value at the origin is kept so
    that degree-1 terms enter as a random field.
    """
    xs = species_derivatives(f, path.q)
    v = np.diff(xs, axis=0)
    v[0] = xs[1]
    if np.any(v < -INCREMENT_CLAMP):
        raise ValueError(f"negative increment {v.min():.3g}; mixture or path is invalid")
    return np.maximum(v, 0.0)


def theta_correction(f: MixtureFunction, path: ParisiPath) -> float:
    """``-1/2 sum_{j=1}^k m_j (theta(q_{j+1}) - theta(q_j))``."""
    th = np.atleast_1d(theta(f, path.q))
    return float(-0.5 * np.dot(path.m[1:], np.diff(th)[1:]))


def _logcosh(h):
    a = np.abs(h)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _gauss_rule(n: int):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / np.sqrt(2.0 * np.pi)


def _ising_species(m: np.ndarray, v: np.ndarray, nodes: int):
    """``X_0`` for one species; the top level is integrated in closed form."""
    k = m.size - 1
    active = [j for j in range(k) if v[j] > 0]
    if not active:
        return float(v[k] / 2.0), 0
    n = nodes
    while n ** len(active) > QUADRATURE_BUDGET:
        n -= 1
    z, w = _gauss_rule(n)
    logw = np.log(w)
    h = np.zeros((n,) * len(active))
    for axis, j in enumerate(active):
        shape = [1] * len(active)
        shape[axis] = n
        h = h + np.sqrt(v[j]) * z.reshape(shape)
    # E_k exp(log cosh(h + sqrt(v_k) eta)) = cosh(h) exp(v_k / 2)
    X = _logcosh(h) + v[k] / 2.0
    for axis in range(len(active) - 1, 0, -1):
        mj = m[active[axis]]
        X = logsumexp(mj * X + logw, axis=-1) / mj
    if active[0] == 0:
        X = float(np.dot(w, X))
    else:
        mj = m[active[0]]
        X = float(logsumexp(mj * X + logw) / mj)
    return X, n


def ising_functional(f: MixtureFunction, path: ParisiPath, nodes: int = DEFAULT_NODES, lam=None) -> FunctionalValue:
    """Ising functional by nested Gauss-Hermite quadrature.

    Levels with zero variance are skipped.  The node count is reduced when
    ``nodes ** levels`` would exceed the quadrature budget.
    """
    lam = _check(f, path, lam)
    v = increments(f, path)
    per, used = [], []
    for s in range(f.n_species):
        x0, n = _ising_species(path.m, v[:, s], nodes)
        per.append(x0)
        used.append(n)
    per = np.array(per)
    th = theta_correction(f, path)
    return FunctionalValue(
        float(np.dot(lam, per) + th), per, th, {"nodes": nodes, "nodes_used": used, "ensemble": "ising"}
    )


@dataclass(frozen=True)
class _Barrier:
    """``X(b)`` written in ``t = b - d_1 > 0``."""

    d1: float
    c: float  # xi^s(q_1)
    gaps: np.ndarray  # d_1 - d_j for j = 1..k+1
    inv_m: np.ndarray  # 1 / m_j for j = 1..k

    def value(self, t):
        t = np.asarray(t, dtype=float)
        b = t + self.d1
        tt = t[..., None]
        logs = np.log(tt + self.gaps)
        x = b - 1.0 - np.log(b) + self.c / t
        return x + (np.diff(logs, axis=-1) * self.inv_m).sum(axis=-1)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        b = t + self.d1
        inv = 1.0 / (t[..., None] + self.gaps)
        return 1.0 - 1.0 / b - self.c / t**2 + (np.diff(inv, axis=-1) * self.inv_m).sum(axis=-1)


T_MIN = 1e-12


def _minimize_barrier(bar: _Barrier, scan: int = 400):
    hi = max(4.0, 4.0 * (bar.d1 + bar.c + 1.0))
    while bar.deriv(hi) <= 0:
        hi *= 4.0
        if hi > 1e300:
            raise RuntimeError("inner minimization failed to bracket")
    grid = np.geomspace(T_MIN, hi, scan)
    vals = bar.value(grid)
    i = int(np.nanargmin(vals))
    if i == 0:
        raise RuntimeError(f"inner minimum lies below t = {T_MIN:g}; d_1 = {bar.d1:.6g} is pathological")
    lo_t, hi_t = grid[i - 1], grid[min(i + 1, scan - 1)]
    dlo, dhi = bar.deriv(lo_t), bar.deriv(hi_t)
    if dlo < 0 < dhi:
        t = brentq(lambda u: float(bar.deriv(u)), lo_t, hi_t, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    else:
        res = minimize_scalar(lambda u: float(bar.value(u)), bounds=(lo_t, hi_t), method="bounded", options={"xatol": 1e-14})
        t = float(res.x)
    return float(t), float(bar.value(t)), float(bar.deriv(t))


def spherical_functional(f: MixtureFunction, path: ParisiPath, lam=None) -> FunctionalValue:
    """Spherical functional with the inner infimum over ``b`` solved per species.

    ``per_species[s]`` is half of ``inf_b X_s(b)``.
    """
    lam = _check(f, path, lam)
    v = increments(f, path)
    m = path.m
    k = path.k
    # d_j for j = 1..k+1
    tail = (m[1:, None] * v[1:])[::-1].cumsum(axis=0)[::-1]
    d = np.vstack([tail, np.zeros((1, f.n_species))])
    c = v[0]  # xi^s(q_1)
    inf_x, b_star, grad = [], [], []
    for s in range(f.n_species):
        bar = _Barrier(float(d[0, s]), float(c[s]), d[0, s] - d[:, s], 1.0 / m[1:])
        t, val, g = _minimize_barrier(bar)
        inf_x.append(val)
        b_star.append(t + d[0, s])
        grad.append(g)
    inf_x = np.array(inf_x)
    per = 0.5 * inf_x
    th = theta_correction(f, path)
    diag = {
        "ensemble": "spherical",
        "b_star": np.array(b_star),
        "d1": d[0].copy(),
        "inf_X": inf_x,
        "dX_db": np.array(grad),
    }
    _ = k
    return FunctionalValue(float(np.dot(lam, per) + th), per, th, diag)


def evaluate(f: MixtureFunction, path: ParisiPath, ensemble: str, nodes: int = DEFAULT_NODES) -> FunctionalValue:
    if ensemble == "ising":
        return ising_functional(f, path, nodes)
    if ensemble == "spherical":
        return spherical_functional(f, path)
    raise ValueError(f"unknown ensemble {ensemble!r}")


def single_species_functional(f: MixtureFunction, path: ParisiPath, ensemble: str, nodes: int = DEFAULT_NODES):
    """Functional of the single-species reduction ``sum_p beta_p^2 x^p`` of ``f``."""
    return evaluate(single_species_mixture(f.degree_weights()), path, ensemble, nodes)


# Optimization over paths at fixed k.


def _softplus(w):
    return np.logaddexp(0.0, w)


def _softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 30, y, np.log(np.expm1(np.minimum(y, 30))))


def _decode(theta_vec: np.ndarray, k: int, S: int) -> ParisiPath:
    wm = theta_vec[: k - 1]
    u = theta_vec[k - 1 :].reshape(k, S)
    dm = np.concatenate([_softplus(wm) + 1e-12, [1.0]])
    m = np.concatenate([[0.0], np.cumsum(dm) / dm.sum()])
    m[-1] = 1.0
    dq = np.vstack([u**2, np.ones((1, S))])
    q = np.vstack([np.zeros((1, S)), np.cumsum(dq, axis=0) / dq.sum(axis=0)])
    q[-1] = 1.0
    if np.any(np.diff(m) <= 0):
        # Resolution loss in m; nudge to strict increase.
        m = np.maximum.accumulate(m)
        for j in range(1, k + 1):
            m[j] = max(m[j], np.nextafter(m[j - 1], 2.0))
        m[-1] = 1.0
    return ParisiPath(m, q)


def _encode(path: ParisiPath) -> np.ndarray:
    k, S = path.k, path.n_species
    dm = np.diff(path.m)
    wm = _softplus_inv(np.maximum(dm[:-1] / dm[-1], 1e-300)) if k > 1 else np.zeros(0)
    dq = np.diff(path.q, axis=0)
    top = dq[-1]
    if np.any(top <= 0):
        raise ValueError("cannot encode a path whose top overlap gap is zero")
    u = np.sqrt(dq[:-1] / top)
    return np.concatenate([wm, u.ravel()])


def embed_path(path: ParisiPath) -> ParisiPath:
    """Same functional value with one more level (a zero-variance level below ``m_1``)."""
    m = np.concatenate([[0.0, path.m[1] / 2.0], path.m[1:]])
    q = np.vstack([path.q[:2], path.q[1:]])
    return ParisiPath(m, q)


@dataclass(frozen=True)
class OptimizationResult:
    path: ParisiPath
    value: FunctionalValue
    converged: bool
    history: tuple[float, ...]  # best value at each k reached


def _objective(theta_vec, f, k, S, ensemble, nodes):
    try:
        return evaluate(f, _decode(theta_vec, k, S), ensemble, nodes).value
    except (ValueError, RuntimeError, FloatingPointError):
        return np.inf


def _local_search(task):
    f, k, ensemble, nodes, x0, maxiter = task
    S = f.n_species
    obj = partial(_objective, f=f, k=k, S=S, ensemble=ensemble, nodes=nodes)
    opts = {"xatol": 1e-10, "fatol": 1e-14, "maxiter": maxiter, "maxfev": maxiter * 2, "adaptive": x0.size > 3}
    best = minimize(obj, x0, method="Nelder-Mead", options=opts)
    conv = bool(best.success)
    res = minimize(obj, best.x, method="Nelder-Mead", options=opts)
    if res.fun <= best.fun:
        best, conv = res, bool(res.success)
    return np.asarray(best.x), float(best.fun), conv


def _rank_key(item):
    x, val, _, path = item
    return val, float(np.linalg.norm(path.q))


def optimize_path(
    f: MixtureFunction,
    ensemble: str,
    k: int,
    restarts: int = 4,
    seed: int = 0,
    nodes: int = DEFAULT_NODES,
    init: list[ParisiPath] | None = None,
    maxiter: int = 2000,
    workers: int | None = 1,
) -> OptimizationResult:
    """Minimize the functional over paths with at most ``k`` levels.

    Levels are added one at a time; the best ``k - 1`` path is embedded in
    the next level as a warm start, so the returned values never increase
    with ``k``.  Restart ``r`` at level ``j`` draws its start from the seed
    stream ``(seed, j, r)``.
    """
    if ensemble not in K_CAP:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    if not 1 <= k <= K_CAP[ensemble]:
        raise ValueError(f"k must be in 1..{K_CAP[ensemble]} for the {ensemble} ensemble")
    S = f.n_species
    warm: list[ParisiPath] = []
    history = []
    converged = True
    best_path = None
    for level in range(1, k + 1):
        starts = []
        if best_path is not None:
            starts.append(embed_path(best_path))
        for p in init or []:
            if p.n_species != S:
                raise ValueError("init path has the wrong number of species")
            while p.k < level:
                p = embed_path(p)
            if p.k == level:
                starts.append(p)
        xs = []
        for p in starts:
            try:
                xs.append(_encode(p))
            except ValueError:
                continue
        for r in range(restarts):
            rng = stream(seed, level, r)
            xs.append(np.concatenate([rng.normal(size=level - 1), rng.uniform(0.0, 2.0, size=level * S)]))
        tasks = [(f, level, ensemble, nodes, x0, maxiter) for x0 in xs]
        results = pmap(_local_search, tasks, workers)
        items = []
        for x, val, conv in results:
            if np.isfinite(val):
                items.append((x, val, conv, _decode(x, level, S)))
        if not items:
            raise RuntimeError("every start failed to evaluate")
        items.sort(key=_rank_key)
        x, val, conv, path = items[0]
        if history and val > history[-1]:
            # Keep the embedded previous optimum (numerically equal value).
            path = embed_path(best_path)
            val = evaluate(f, path, ensemble, nodes).value
        converged = converged and conv
        best_path = path
        history.append(min(val, history[-1]) if history else val)
    del warm
    value = evaluate(f, best_path, ensemble, nodes)
    return OptimizationResult(best_path, value, converged, tuple(history))


@dataclass(frozen=True)
class ExtrapolationResult:
    value: float
    coefficients: np.ndarray
    alphas: np.ndarray
    samples: np.ndarray
    reliable: bool
    residual: float


def gse_from_free_energy(evaluator, alphas=None, n_alpha: int = 8, tol: float = 1e-6) -> ExtrapolationResult:
    """Zero-temperature limit of ``alpha -> F(alpha * model) / alpha``.

    Fits ``c0 + c1 log(alpha) / alpha + c2 / alpha`` on a geometric grid and
    returns ``c0``.  The samples must be nondecreasing in ``alpha`` (they are
    normalized log-moments of ``exp(H)``); a decrease beyond ``tol`` marks
    the result unreliable.
    """
    if alphas is None:
        alphas = np.geomspace(2.0, 128.0, n_alpha)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size < 3 or np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise ValueError("alphas must be an increasing grid of at least 3 positive values")
    y = np.array([float(evaluator(a)) for a in alphas])
    A = np.column_stack([np.ones_like(alphas), np.log(alphas) / alphas, 1.0 / alphas])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    reliable = bool(np.all(np.diff(y) >= -tol * np.maximum(1.0, np.abs(y[1:]))))
    return ExtrapolationResult(float(coef[0]), coef, alphas, y, reliable, resid)
