"""Injective norms of Gaussian tensors and their spin-glass translation."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._parallel import pmap
from ._seeding import child_seed, stream
from .mixture import FiniteSizes, ModelSpec
from .reference import e0_pure
from .simulate import DisorderSample, spherical_gse_search

MAX_ENTRIES = 2**24
MAGIC = b"GTEN"
HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class GaussianTensor:
    """Order-``p`` array of side ``d``; entries come from ``seed`` unless given explicitly."""

    order: int
    dim: int
    seed: int | None = None
    entries: np.ndarray | None = None

    def __post_init__(self):
        if self.order < 1 or self.dim < 1:
            raise ValueError("order and dimension must be positive")
        if self.dim**self.order > MAX_ENTRIES:
            raise ValueError(f"tensor with {self.dim}^{self.order} entries exceeds the memory budget")
        if self.entries is None:
            if self.seed is None:
                raise ValueError("either a seed or explicit entries is required")
            arr = stream(self.seed, 0).standard_normal((self.dim,) * self.order)
        else:
            arr = np.array(self.entries, dtype=float)
            if arr.shape != (self.dim,) * self.order:
                raise ValueError(f"entries have shape {arr.shape}, expected {(self.dim,) * self.order}")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_array(cls, arr) -> "GaussianTensor":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim < 1 or len(set(arr.shape)) != 1:
            raise ValueError("tensor must be cubical")
        return cls(arr.ndim, arr.shape[0], None, arr)


def write_tensor(T: GaussianTensor, path) -> None:
    """Header ``GTEN``, u32 order, u32 dim, u32 zero; then little-endian f8 in C order."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, T.order, T.dim, 0))
        fh.write(np.ascontiguousarray(T.entries, dtype="<f8").tobytes())


def read_tensor(path) -> GaussianTensor:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError("file too short for a tensor header")
    magic, order, dim, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a tensor file (bad magic)")
    n = dim**order
    body = raw[HEADER.size :]
    if len(body) != 8 * n:
        raise ValueError(f"expected {8 * n} data bytes, found {len(body)}")
    return GaussianTensor.from_array(np.frombuffer(body, dtype="<f8").reshape((dim,) * order))


@dataclass(frozen=True)
class InjNormResult:
    value: float
    vectors: list[np.ndarray]
    restart_values: np.ndarray
    sweeps: np.ndarray


CHUNK = 64
# Extra sweeps granted to the winning restart when it hit the sweep cap.
POLISH_SWEEPS = 20_000


def _random_unit(rng, shape):
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _contract_except(T_front: np.ndarray, vecs: list[np.ndarray]) -> np.ndarray:
    """``T`` with the kept axis first, contracted with one batched vector per remaining axis."""
    B = vecs[0].shape[0]
    X = T_front.reshape(-1, T_front.shape[-1]) @ vecs[-1].T
    for v in reversed(vecs[:-1]):
        X = X.reshape(-1, v.shape[1], B)
        X = np.einsum("aib,bi->ab", X, v)
    return X.T


def _alternate(T, fronts, U, iters, tol, rng):
    p = T.ndim
    B = U[0].shape[0]
    value = np.full(B, -np.inf)
    active = np.ones(B, dtype=bool)
    sweeps = np.zeros(B, dtype=np.int64)
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        for j in range(p):
            c = _contract_except(fronts[j], [U[i][idx] for i in range(p) if i != j])
            norm = np.linalg.norm(c, axis=1)
            zero = norm == 0
            if zero.any():
                # Measure-zero event: redraw those starts.
                for i in range(p):
                    U[i][idx[zero]] = _random_unit(rng, (int(zero.sum()), T.shape[0]))
                norm = np.where(zero, 1.0, norm)
            U[j][idx] = c / norm[:, None]
            new = np.where(zero, -np.inf, norm)
        sweeps[idx] += 1
        gain = new - value[idx]
        value[idx] = new
        done = np.isfinite(gain) & (gain < tol * np.maximum(1.0, new))
        active[idx[done]] = False
    return value, sweeps


def injective_norm_estimate(T: GaussianTensor, restarts: int | None = None, iters: int = 500, seed: int = 0, tol: float = 1e-12) -> InjNormResult:
    """Best ``<T, u_1 x ... x u_p>`` over unit vectors by alternating maximization.

    Each mode update is the exact maximizer given the others, so the
    objective never decreases within a restart.  Restart ``r`` starts from
    stream ``(seed, r)``; restarts run in padded batches so single-restart
    results do not depend on the total count.
    """
    p, d = T.order, T.dim
    A = T.entries
    if p == 1:
        norm = float(np.linalg.norm(A))
        u = A / norm if norm > 0 else np.eye(d)[0]
        return InjNormResult(norm, [u], np.array([norm]), np.zeros(1, dtype=np.int64))
    if restarts is None:
        restarts = 10 * p * d
    if restarts < 1:
        raise ValueError("restarts must be positive")
    fronts = [np.ascontiguousarray(np.moveaxis(A, j, 0)) for j in range(p)]
    vals, sweeps, best_u = [], [], None
    best = -np.inf
    for start in range(0, restarts, CHUNK):
        U = [np.empty((CHUNK, d)) for _ in range(p)]
        for r in range(CHUNK):
            rng = stream(seed, start + r)
            for i in range(p):
                U[i][r] = _random_unit(rng, d)
        value, sw = _alternate(A, fronts, U, iters, tol, stream(seed, start, 2**32))
        for r in range(min(CHUNK, restarts - start)):
            vals.append(value[r])
            sweeps.append(sw[r])
            if value[r] > best:
                best, best_sweeps = value[r], sw[r]
                best_u = [U[i][r].copy() for i in range(p)]
    if best_sweeps >= iters:
        # Small spectral gaps converge slowly; finish the winner only.
        W = [u[None, :].copy() for u in best_u]
        _alternate(A, fronts, W, POLISH_SWEEPS, tol, stream(seed, 2**32))
        best_u = [w[0] for w in W]
    # Report the objective at the returned vectors.
    exact = A
    for u in reversed(best_u):
        exact = exact @ u
    return InjNormResult(float(exact), best_u, np.array(vals), np.array(sweeps))


def translate_to_model(p: int, d: int) -> tuple[ModelSpec, FiniteSizes]:
    """``p`` species of size ``d`` with ``xi_N(x) = p x_1 ... x_p``."""
    if p < 1 or d < 1:
        raise ValueError("p and d must be positive")
    d2 = Fraction(p ** (p + 1), math.factorial(p))
    spec = ModelSpec(
        tuple(str(s + 1) for s in range(p)), tuple(Fraction(1, p) for _ in range(p)), {tuple(range(p)): d2}
    )
    return spec, FiniteSizes((d,) * p)


@dataclass(frozen=True)
class CorrespondenceReport:
    p: int
    d: int
    tensor_values: np.ndarray
    model_values: np.ndarray
    tensor_mean: float
    model_mean: float
    tensor_var: float
    model_var: float
    pooled_se: float
    z: float

    @property
    def passed(self) -> bool:
        return abs(self.z) <= 3.0


def _tensor_task(args):
    p, d, seed, restarts = args
    return injective_norm_estimate(GaussianTensor(p, d, seed), restarts, seed=seed).value / math.sqrt(d)


def _model_task(args):
    p, d, seed, restarts = args
    spec, sizes = translate_to_model(p, d)
    return spherical_gse_search(spec, sizes, DisorderSample.draw(spec, sizes, seed), restarts, seed).value


def correspondence_check(
    p: int, d: int, n_samples: int = 100, restarts: int | None = None, seed: int = 0, workers: int | None = 1
) -> CorrespondenceReport:
    """Two-sample comparison of ``||T||_inj / sqrt(d)`` and ``max H / N`` of the translated model."""
    if restarts is None:
        restarts = 8 * p
    t_vals = np.array(pmap(_tensor_task, [(p, d, child_seed(seed, 0, i), restarts) for i in range(n_samples)], workers))
    m_vals = np.array(pmap(_model_task, [(p, d, child_seed(seed, 1, i), restarts) for i in range(n_samples)], workers))
    tv = float(t_vals.var(ddof=1)) if n_samples > 1 else 0.0
    mv = float(m_vals.var(ddof=1)) if n_samples > 1 else 0.0
    se = math.sqrt((tv + mv) / n_samples)
    diff = float(t_vals.mean() - m_vals.mean())
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return CorrespondenceReport(p, d, t_vals, m_vals, float(t_vals.mean()), float(m_vals.mean()), tv, mv, se, z)


def asymptote(p: int) -> float:
    """Limit of ``||T||_inj / sqrt(d)``: ``sqrt(p) E_0(p)``, and 1 for vectors."""
    if p < 1:
        raise ValueError("p must be positive")
    if p == 1:
        return 1.0
    return math.sqrt(p) * e0_pure(p)
