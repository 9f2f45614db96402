"""Model algebra for multi-species mixed p-spin glasses.

A model is a pair ``(Delta, lambda)``: species ratios and a symmetric array of
squared interaction strengths for every degree ``p``.  Interactions are keyed
by the sorted multiset of species indices, so every ordering of a multiset
shares one stored value.  The covariance (mixture) polynomial is

    xi(x) = sum_p sum_{s_1..s_p} Delta^2_{s_1..s_p} lambda_{s_1}..lambda_{s_p} x_{s_1}..x_{s_p}

and is stored per multiset with the ordering count and lambda weights folded
into a single coefficient.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate, combinations_with_replacement, permutations
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence, Union

import numpy as np

Number = Union[int, float, Fraction]
Multiset = tuple[int, ...]

_DOMAIN_SLACK = 1e-12


def parse_number(value) -> Number:
    """Exact ``Fraction`` for ints and numeric strings (``"1/3"``), float otherwise."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse number {value!r}") from exc
    return float(value)


def orderings(multiset: Sequence[int]) -> int:
    """Number of distinct orderings of a multiset (the multinomial coefficient)."""
    count = math.factorial(len(multiset))
    for c in Counter(multiset).values():
        count //= math.factorial(c)
    return count


def _prod(values) -> Number:
    out: Number = 1
    for v in values:
        out = out * v
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Species ratios and symmetric interaction strengths.

    ``interactions`` maps a sorted tuple of species indices (its length is
    the degree ``p``) to ``Delta^2``.  Missing multisets mean zero.  Use
    :meth:`create` to build a spec from species labels in any order.
    """

    species: tuple[str, ...]
    lam: tuple[Number, ...]
    interactions: Mapping[Multiset, Number]

    def __post_init__(self):
        species = tuple(str(s) for s in self.species)
        if not species:
            raise ValueError("at least one species is required")
        if len(set(species)) != len(species):
            raise ValueError(f"duplicate species labels in {species}")
        lam = tuple(parse_number(v) if not isinstance(v, float) else v for v in self.lam)
        if len(lam) != len(species):
            raise ValueError("lambda must have one entry per species")
        if any(not math.isfinite(float(v)) or v <= 0 for v in lam):
            raise ValueError(f"species ratios must be positive, got {lam}")
        total = sum(lam)
        if isinstance(total, Fraction):
            if total != 1:
                raise ValueError(f"species ratios must sum to 1, got {total}")
        elif abs(total - 1.0) > 1e-12:
            raise ValueError(f"species ratios must sum to 1, got {total}")
        inter = {}
        for key, value in self.interactions.items():
            key = tuple(int(k) for k in key)
            if not key:
                raise ValueError("empty interaction multiset")
            if list(key) != sorted(key):
                raise ValueError(f"interaction key {key} is not sorted; use ModelSpec.create")
            if min(key) < 0 or max(key) >= len(species):
                raise ValueError(f"interaction key {key} refers to an unknown species")
            value = value if isinstance(value, float) else parse_number(value)
            if not math.isfinite(float(value)) or value < 0:
                raise ValueError(f"Delta^2 must be nonnegative, got {value} for {key}")
            if value != 0:
                inter[key] = value
        object.__setattr__(self, "species", species)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "interactions", MappingProxyType(dict(sorted(inter.items()))))

    @classmethod
    def create(
        cls,
        species: Sequence[str],
        lam: Sequence,
        interactions: Mapping[Sequence[str], object],
    ) -> "ModelSpec":
        """Build from labelled, possibly unsorted multisets.

        Two keys that name the same multiset are rejected rather than merged.
        """
        species = tuple(str(s) for s in species)
        index = {s: i for i, s in enumerate(species)}
        inter: dict[Multiset, Number] = {}
        for key, value in interactions.items():
            if isinstance(key, str):
                key = (key,)
            try:
                canon = tuple(sorted(index[str(k)] for k in key))
            except KeyError as exc:
                raise ValueError(f"unknown species {exc.args[0]!r} in {key}") from None
            if canon in inter:
                raise ValueError(f"duplicate interaction multiset {tuple(species[i] for i in canon)}")
            inter[canon] = value if isinstance(value, float) else parse_number(value)
        return cls(species, tuple(lam), inter)

    @classmethod
    def from_ordered(
        cls,
        species: Sequence[str],
        lam: Sequence,
        ordered: Mapping[Sequence[int], object],
    ) -> "ModelSpec":
        """Symmetrize an array given on ordered index tuples.

        Every multiset receives the arithmetic mean of its orderings (absent
        orderings count as zero), which leaves the Hamiltonian's law unchanged.
        """
        totals: dict[Multiset, Number] = {}
        for key, value in ordered.items():
            canon = tuple(sorted(int(k) for k in key))
            v = value if isinstance(value, float) else parse_number(value)
            totals[canon] = totals.get(canon, 0) + v
        inter = {}
        for canon, total in totals.items():
            n = orderings(canon)
            inter[canon] = total / n if isinstance(total, float) else Fraction(total) / n
        return cls(tuple(species), tuple(lam), inter)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def max_degree(self) -> int:
        return max((len(k) for k in self.interactions), default=0)

    @property
    def degrees(self) -> list[int]:
        return sorted({len(k) for k in self.interactions})

    def lam_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.lam])

    def delta_sq(self, multiset: Sequence[int]) -> Number:
        return self.interactions.get(tuple(sorted(multiset)), 0)

    def index(self, species: Union[int, str]) -> int:
        if isinstance(species, (int, np.integer)):
            if not 0 <= species < self.n_species:
                raise ValueError(f"species index {species} out of range")
            return int(species)
        try:
            return self.species.index(str(species))
        except ValueError:
            raise ValueError(f"unknown species {species!r}") from None

    def scaled(self, alpha: float) -> "ModelSpec":
        """The model with every ``Delta`` multiplied by ``alpha`` (``Delta^2`` by ``alpha^2``)."""
        a2 = alpha * alpha
        return ModelSpec(self.species, self.lam, {k: v * a2 for k, v in self.interactions.items()})

    def __reduce__(self):
        return (ModelSpec, (self.species, self.lam, dict(self.interactions)))

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, Fraction):
                return int(v) if v.denominator == 1 else str(v)
            return v

        return {
            "species": list(self.species),
            "lambda": [enc(v) for v in self.lam],
            "interactions": [
                {"species": [self.species[i] for i in key], "delta_sq": float(value)}
                for key, value in self.interactions.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelSpec":
        for required in ("species", "lambda", "interactions"):
            if required not in data:
                raise ValueError(f"model is missing key {required!r}")
        inter: dict[tuple, object] = {}
        species = [str(s) for s in data["species"]]
        seen = set()
        for entry in data["interactions"]:
            if "species" not in entry or "delta_sq" not in entry:
                raise ValueError(f"interaction entry {entry} needs 'species' and 'delta_sq'")
            key = tuple(sorted((str(s) for s in entry["species"]), key=_label_order(species)))
            if key in seen:
                raise ValueError(f"duplicate interaction multiset {list(key)}")
            seen.add(key)
            inter[key] = entry["delta_sq"]
        return cls.create(species, [parse_number(v) if isinstance(v, str) else v for v in data["lambda"]], inter)


def _label_order(species):
    pos = {s: i for i, s in enumerate(species)}
    return lambda s: pos.get(s, len(pos))


def load_model(path) -> ModelSpec:
    """Read a model file (JSON with ``species``, ``lambda``, ``interactions``)."""
    with open(path) as fh:
        return ModelSpec.from_dict(json.load(fh))


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class FiniteSizes:
    """Block sizes ``#I_{s,N}`` of a finite system."""

    block_sizes: tuple[int, ...]
    _slices: tuple[slice, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.block_sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError(f"block sizes must be positive integers, got {self.block_sizes}")
        object.__setattr__(self, "block_sizes", sizes)
        starts = (0, *accumulate(sizes))
        object.__setattr__(self, "_slices", tuple(slice(a, b) for a, b in zip(starts, starts[1:])))

    @property
    def N(self) -> int:
        return sum(self.block_sizes)

    @property
    def lambda_N(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(n, self.N) for n in self.block_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(sl.start for sl in self._slices)

    def block(self, s: int) -> slice:
        return self._slices[s]

    @classmethod
    def from_total(cls, spec: ModelSpec, N: int) -> "FiniteSizes":
        """Largest-remainder rounding of ``N * lambda`` with every block at least 1."""
        S = spec.n_species
        if N < S:
            raise ValueError(f"need N >= {S} to give every species a coordinate")
        raw = [float(v) * N for v in spec.lam]
        sizes = [max(1, math.floor(r)) for r in raw]
        order = sorted(range(S), key=lambda s: raw[s] - math.floor(raw[s]), reverse=True)
        i = 0
        while sum(sizes) < N:
            sizes[order[i % S]] += 1
            i += 1
        while sum(sizes) > N:
            s = max(range(S), key=lambda t: sizes[t] - raw[t])
            sizes[s] -= 1
        return cls(tuple(sizes))


@dataclass(frozen=True, eq=False)
class MixtureFunction:
    """Multivariate polynomial on ``[-1, 1]^S`` with no constant term.

    ``coefficients[multiset]`` multiplies the monomial ``prod_{s in multiset} x_s``.
    ``lam`` are the ratios used by :func:`partial_s` (limiting or finite-N).
    """

    species: tuple[str, ...]
    lam: np.ndarray
    coefficients: Mapping[Multiset, float]
    degree_cap: int

    def __post_init__(self):
        S = len(self.species)
        coeffs = {tuple(k): float(v) for k, v in self.coefficients.items() if v != 0}
        object.__setattr__(self, "coefficients", MappingProxyType(dict(sorted(coeffs.items()))))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        keys = list(coeffs)
        exps = np.zeros((len(keys), S), dtype=np.int64)
        for row, key in enumerate(keys):
            for s in key:
                exps[row, s] += 1
        object.__setattr__(self, "_exponents", exps)
        object.__setattr__(self, "_coef", np.array([coeffs[k] for k in keys], dtype=float))

    def __reduce__(self):
        return (MixtureFunction, (self.species, self.lam, dict(self.coefficients), self.degree_cap))

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def exponents(self) -> np.ndarray:
        return self._exponents

    @property
    def coef(self) -> np.ndarray:
        return self._coef

    def degree_weights(self) -> dict[int, float]:
        """Sum of coefficients per degree, i.e. ``beta_p^2`` when ``lam`` is the model's."""
        out: dict[int, float] = {}
        for key, c in self.coefficients.items():
            out[len(key)] = out.get(len(key), 0.0) + c
        return out

    def scaled(self, factor: float) -> "MixtureFunction":
        return MixtureFunction(
            self.species, self.lam, {k: v * factor for k, v in self.coefficients.items()}, self.degree_cap
        )

    def __call__(self, x) -> np.ndarray:
        return eval_mixture(self, x)


def build_mixture(spec: ModelSpec, sizes: FiniteSizes | None = None) -> MixtureFunction:
    """Covariance polynomial of a model.

    With ``sizes`` the finite-N ratios ``#I_s / N`` are used, otherwise the
    limiting ratios.  Each multiset coefficient is
    ``orderings * Delta^2 * prod(lambda)``.
    """
    if sizes is not None:
        if len(sizes.block_sizes) != spec.n_species:
            raise ValueError("sizes must have one block per species")
        lam = sizes.lambda_N
    else:
        lam = spec.lam
    coeffs = {key: float(orderings(key) * value * _prod(lam[s] for s in key)) for key, value in spec.interactions.items()}
    return MixtureFunction(spec.species, np.array([float(v) for v in lam]), coeffs, spec.max_degree)


def single_species_mixture(beta_sq: Mapping[int, float], label: str = "1") -> MixtureFunction:
    """``xi(x) = sum_p beta_p^2 x^p`` on a single species."""
    coeffs = {(0,) * int(p): float(v) for p, v in beta_sq.items() if v != 0}
    return MixtureFunction((label,), np.array([1.0]), coeffs, max((int(p) for p in beta_sq), default=0))


def _as_points(f: MixtureFunction, x, check_domain: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (f.n_species,):
        raise ValueError(f"expected points with last axis {f.n_species}, got shape {x.shape}")
    if check_domain and np.any(np.abs(x) > 1 + _DOMAIN_SLACK):
        raise ValueError("mixture arguments must lie in [-1, 1]^S")
    return x


def _monomials(exps: np.ndarray, x: np.ndarray) -> np.ndarray:
    # (..., T)
    return np.prod(x[..., None, :] ** exps, axis=-1)


def eval_mixture(f: MixtureFunction, x) -> np.ndarray | float:
    x = _as_points(f, x)
    if f.coef.size == 0:
        out = np.zeros(x.shape[:-1])
    else:
        out = _monomials(f.exponents, x) @ f.coef
    return float(out) if out.ndim == 0 else out


def gradient(f: MixtureFunction, x, check_domain: bool = True) -> np.ndarray:
    """``d xi / d x_s`` for every species, shape ``x.shape``."""
    x = _as_points(f, x, check_domain)
    out = np.zeros(x.shape)
    for s in range(f.n_species):
        mask = f.exponents[:, s] > 0
        if not mask.any():
            continue
        exps = f.exponents[mask].copy()
        mult = exps[:, s].astype(float)
        exps[:, s] -= 1
        out[..., s] = _monomials(exps, x) @ (f.coef[mask] * mult)
    return out


def partial_s(f: MixtureFunction, s: Union[int, str], x) -> np.ndarray | float:
    """``xi^s(x) = (1/lambda_s) d xi / d x_s``."""
    if isinstance(s, str):
        if s not in f.species:
            raise ValueError(f"unknown species {s!r}")
        s = f.species.index(s)
    elif not 0 <= int(s) < f.n_species:
        raise ValueError(f"species index {s} out of range")
    out = gradient(f, x)[..., int(s)] / f.lam[int(s)]
    return float(out) if np.ndim(out) == 0 else out


def species_derivatives(f: MixtureFunction, x) -> np.ndarray:
    """All ``xi^s(x)`` at once, shape ``x.shape``."""
    return gradient(f, x) / f.lam


def theta(f: MixtureFunction, x) -> np.ndarray | float:
    """``sum_s x_s d xi/dx_s - xi(x)``; per monomial this is ``(degree - 1) * term``."""
    x = _as_points(f, x)
    if f.coef.size == 0:
        out = np.zeros(x.shape[:-1])
    else:
        deg = f.exponents.sum(axis=1)
        out = _monomials(f.exponents, x) @ (f.coef * (deg - 1))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BalanceReport:
    balanced: bool
    row_sums: dict[int, tuple[Number, ...]]
    discrepancy: dict[int, float]
    max_discrepancy: float


def row_sums(spec: ModelSpec, p: int) -> tuple[Number, ...]:
    """``sum_{s_2..s_p} Delta^2_{t, s_2..s_p} lambda_{s_2}..lambda_{s_p}`` for every ``t``."""
    S = spec.n_species
    out = []
    for t in range(S):
        total: Number = 0
        for rest in combinations_with_replacement(range(S), p - 1):
            d2 = spec.interactions.get(tuple(sorted((t,) + rest)))
            if d2:
                total = total + orderings(rest) * d2 * _prod(spec.lam[s] for s in rest)
        out.append(total)
    return tuple(out)


def check_balanced(spec: ModelSpec, tol: float = 1e-10) -> BalanceReport:
    """Whether the lambda-weighted row sums agree across species at every degree.

    Degree 1 reduces to all ``Delta^2_t`` being equal.  ``tol`` is relative to
    the largest row sum of each degree.
    """
    sums, disc = {}, {}
    ok = True
    for p in range(1, spec.max_degree + 1):
        r = row_sums(spec, p)
        spread = max(r) - min(r)
        scale = max(abs(float(v)) for v in r)
        sums[p] = r
        disc[p] = float(spread)
        if float(spread) > tol * scale:
            ok = False
    return BalanceReport(ok, sums, disc, max(disc.values(), default=0.0))


def reduce_beta(spec: ModelSpec) -> dict[int, Number]:
    """``beta_p^2`` for ``p = 1..max_degree``: the total degree-p variance weight."""
    out: dict[int, Number] = {p: 0 for p in range(1, spec.max_degree + 1)}
    for key, value in spec.interactions.items():
        out[len(key)] = out[len(key)] + orderings(key) * value * _prod(spec.lam[s] for s in key)
    return out


def single_species_spec(beta_sq: Mapping[int, object], label: str = "1") -> ModelSpec:
    return ModelSpec((label,), (1,), {(0,) * int(p): v for p, v in beta_sq.items()})


def diagonal_lift(spec: ModelSpec) -> ModelSpec:
    """Decoupled model with ``Delta^2_{s..s} = beta_p^2 / lambda_s^(p-1)`` and no cross terms."""
    inter = {}
    for p, b2 in reduce_beta(spec).items():
        if b2 == 0:
            continue
        for s in range(spec.n_species):
            inter[(s,) * p] = b2 / spec.lam[s] ** (p - 1)
    return ModelSpec(spec.species, spec.lam, inter)


@dataclass(frozen=True)
class MarginReport:
    min_margin: float
    argmin: np.ndarray
    gap_at_ones: float


def key_inequality_margin(spec: ModelSpec, grid, tol: float = 1e-10) -> MarginReport:
    """Minimum of ``xi_lift(x) - xi(x)`` over ``grid`` (points of ``[0,1]^S``).

    Also reports ``|xi_lift(1) - xi(1)|``.  Raises for unbalanced input.
    """
    report = check_balanced(spec, tol)
    if not report.balanced:
        raise ValueError(f"model is not balanced (max row-sum discrepancy {report.max_discrepancy:.3g})")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if np.any(grid < -_DOMAIN_SLACK) or np.any(grid > 1 + _DOMAIN_SLACK):
        raise ValueError("grid points must lie in [0, 1]^S")
    xi = build_mixture(spec)
    lifted = build_mixture(diagonal_lift(spec))
    diff = eval_mixture(lifted, grid) - eval_mixture(xi, grid)
    i = int(np.argmin(diff))
    ones = np.ones(spec.n_species)
    gap = abs(eval_mixture(lifted, ones) - eval_mixture(xi, ones))
    return MarginReport(float(diff[i]), grid[i].copy(), float(gap))


def sup_abs_difference(f: MixtureFunction, g: MixtureFunction, lower: float = -1.0, n_grid: int | None = None) -> float:
    """``sup |f - g|`` over ``[lower, 1]^S`` by grid search plus local refinement."""
    from scipy.optimize import minimize

    S = f.n_species
    if g.n_species != S:
        raise ValueError("mixtures have different numbers of species")
    if n_grid is None:
        n_grid = {1: 2001, 2: 101, 3: 31}.get(S, 11)
    axes = [np.linspace(lower, 1.0, n_grid)] * S
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, S)
    vals = np.abs(eval_mixture(f, pts) - eval_mixture(g, pts))
    best = float(vals.max())
    bounds = [(lower, 1.0)] * S
    for i in np.argsort(vals)[-5:]:
        res = minimize(
            lambda z: -abs(float(eval_mixture(f, z)) - float(eval_mixture(g, z))),
            pts[i],
            method="L-BFGS-B",
            bounds=bounds,
        )
        best = max(best, -float(res.fun))
    return best


# Named models used throughout the package and its tests.


def sk(beta: float) -> ModelSpec:
    """Single-species 2-spin model with ``xi(x) = beta^2 x^2``."""
    return single_species_spec({2: beta * beta if isinstance(beta, float) else parse_number(beta) ** 2})


def bipartite_sk(beta: float) -> ModelSpec:
    """Two equal species, cross 2-spin only: ``xi(x1, x2) = beta^2 x1 x2``."""
    b2 = beta * beta if isinstance(beta, float) else parse_number(beta) ** 2
    return ModelSpec(("1", "2"), (Fraction(1, 2), Fraction(1, 2)), {(0, 1): 2 * b2})


def pure_bipartite(p: int, q: int, beta: float = 1.0, lam1=None) -> ModelSpec:
    """``xi(x1, x2) = beta^2 x1^p x2^q``-type model; balanced when ``lam1 = p/(p+q)``."""
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    lam1 = Fraction(p, p + q) if lam1 is None else parse_number(lam1) if not isinstance(lam1, float) else lam1
    lam2 = 1 - lam1
    b2 = beta * beta if isinstance(beta, float) else parse_number(beta) ** 2
    # Delta^2 such that xi(1,1) = beta^2 at the balanced ratio.
    norm = Fraction(math.comb(p + q, p) * p**p * q**q, (p + q) ** (p + q))
    d2 = b2 / norm if not isinstance(b2, float) else b2 / float(norm)
    return ModelSpec(("1", "2"), (lam1, lam2), {(0,) * p + (1,) * q: d2})


def random_balanced_spec(
    rng: np.random.Generator,
    n_species: int,
    max_degree: int,
    zero_prob: float = 0.25,
    max_iter: int = 20000,
) -> ModelSpec:
    """Random balanced model: random positive array per degree, then equalized row sums.

    Row sums are equalized by a symmetric diagonal scaling
    ``Delta^2_M -> Delta^2_M prod_{s in M} d_s`` iterated to a fixed point.
    """
    S = n_species
    for _ in range(100):
        lam = rng.dirichlet(np.full(S, 3.0))
        lam = lam / lam.sum()
        inter: dict[Multiset, float] = {}
        degrees = [p for p in range(1, max_degree + 1) if rng.random() < 0.8] or [max_degree]
        ok = True
        for p in degrees:
            if p == 1:
                v = float(rng.uniform(0.05, 0.5))
                inter.update({(s,): v for s in range(S)})
                continue
            block = {}
            for key in combinations_with_replacement(range(S), p):
                if rng.random() >= zero_prob:
                    block[key] = float(rng.uniform(0.2, 1.0))
            if not block:
                block[tuple(range(S))[:p] if p <= S else (0,) * p] = 1.0
            block = _equalize(block, lam, S, p, max_iter)
            if block is None:
                ok = False
                break
            b2 = sum(orderings(k) * v * np.prod(lam[list(k)]) for k, v in block.items())
            target = float(rng.uniform(0.2, 1.0))
            inter.update({k: v * target / b2 for k, v in block.items()})
        if ok:
            # Normalize through float so that the ratios sum to 1 to rounding.
            lam = tuple(float(v) for v in lam)
            lam = tuple(v / math.fsum(lam) for v in lam)
            spec = ModelSpec(tuple(str(s + 1) for s in range(S)), lam, inter)
            if check_balanced(spec, 1e-12).balanced:
                return spec
    raise RuntimeError("could not generate a balanced model")


def _equalize(block, lam, S, p, max_iter):
    keys = list(block)
    vals = np.array([block[k] for k in keys])
    counts = np.zeros((len(keys), S))
    for i, k in enumerate(keys):
        for s in k:
            counts[i, s] += 1
    # Row t: sum over multisets M containing t of (orderings(M) * mult_t(M) / p) * Delta^2_M * prod(lam[M]) / lam_t
    ords = np.array([orderings(k) for k in keys], dtype=float)
    lamprod = np.array([np.prod(lam[list(k)]) for k in keys])
    d = np.ones(S)
    for _ in range(max_iter):
        if not np.all(np.isfinite(d)) or d.max() > 1e8 * d.min():
            # Zero pattern admits no balancing scaling.
            return None
        scaled = vals * np.prod(d[None, :] ** counts, axis=1)
        rows = (counts * (ords * scaled * lamprod / p)[:, None]).sum(axis=0) / lam
        if np.any(rows <= 0):
            return None
        target = np.exp(np.mean(np.log(rows)))
        if np.max(np.abs(rows - target)) <= 1e-15 * target:
            break
        d *= (target / rows) ** (1.0 / p)
    else:
        return None
    scaled = vals * np.prod(d[None, :] ** counts, axis=1)
    return dict(zip(keys, scaled.tolist()))
