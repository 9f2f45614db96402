"""Command-line front end.

Every command accepts ``--seed``, ``--out``, ``--format`` and ``--workers``.
Text output prints the headline number with ``%.8g``.  CSV output has a
header row; the first column is ``seed`` and the last is ``stderr``.  JSON
output is an object ``{command, defaults, results, summary}`` matching
:data:`RESULT_SCHEMA`.  Exit codes: 0 success, 1 invalid input, 2 bad flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import mixture, parisi, reference, simulate, tensor
from ._parallel import ENV_VAR, default_workers
from ._seeding import child_seed, stream

RESULT_SCHEMA = {
    "type": "object",
    "required": ["command", "defaults", "results", "summary"],
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "defaults": {"type": "object"},
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["seed", "estimate", "stderr"],
                "properties": {
                    "seed": {"type": "integer", "minimum": 0},
                    "estimate": {"type": ["number", "null"]},
                    "stderr": {"type": ["number", "null"]},
                },
            },
        },
        "summary": {"type": "object"},
    },
}


@dataclass
class Outcome:
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    headline: str = ""


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if v is None or isinstance(v, (int, str)):
        return v
    return str(v)


def _fmt(v) -> str:
    return "%.8g" % v


def _row(columns, seed, estimate, stderr=None, **extra):
    row = {"seed": int(seed), **extra, "estimate": estimate, "stderr": stderr}
    return {c: row.get(c) for c in columns}


# Command handlers.


def _cmd_model_check(a) -> Outcome:
    spec = mixture.load_model(a.file)
    rep = mixture.check_balanced(spec)
    betas = mixture.reduce_beta(spec)
    xi1 = float(mixture.eval_mixture(mixture.build_mixture(spec), np.ones(spec.n_species)))
    cols = ["seed", "p", "beta_sq", "max_row_discrepancy", "estimate", "stderr"]
    rows = [
        _row(cols, a.seed, float(b), 0.0, p=p, beta_sq=float(b), max_row_discrepancy=rep.discrepancy.get(p, 0.0))
        for p, b in betas.items()
    ]
    lines = [
        f"species: {', '.join(spec.species)}",
        f"lambda: {', '.join(str(v) for v in spec.lam)}",
        "H1 (positive ratios summing to 1): ok",
        f"H2 (finite mixture, max degree {spec.max_degree}): ok",
        f"H3 (balanced): {'yes' if rep.balanced else 'no'} (max row-sum discrepancy {rep.max_discrepancy:.3g})",
    ]
    if betas:
        lines += [f"beta_{p}^2 = {_fmt(float(b))}" for p, b in betas.items()]
    else:
        lines.append("no interactions: all beta_p^2 = 0")
    lines.append(f"xi(1) = {_fmt(xi1)}")
    summary = {
        "balanced": rep.balanced,
        "max_discrepancy": rep.max_discrepancy,
        "xi_one": xi1,
        "beta_sq": {str(p): float(b) for p, b in betas.items()},
        "row_sums": {str(p): [float(x) for x in r] for p, r in rep.row_sums.items()},
    }
    return Outcome(cols, rows, summary, "\n".join(lines))


def _cmd_parisi_solve(a) -> Outcome:
    spec = mixture.load_model(a.model)
    if a.diagonal:
        if not mixture.check_balanced(spec).balanced:
            raise ValueError("--diagonal requires a balanced model")
        f = mixture.single_species_mixture(mixture.reduce_beta(spec))
    else:
        f = mixture.build_mixture(spec)
    res = parisi.optimize_path(f, a.ensemble, a.k, restarts=a.restarts, seed=a.seed, nodes=a.nodes, workers=a.workers)
    cols = ["seed", "ensemble", "k", "estimate", "stderr"]
    rows = [_row(cols, a.seed, res.value.value, 0.0, ensemble=a.ensemble, k=a.k)]
    summary = {
        "value": res.value.value,
        "diagonal": bool(a.diagonal),
        "converged": res.converged,
        "history": list(res.history),
        "path": res.path.to_dict(),
        "functional": res.value.to_dict(),
    }
    return Outcome(cols, rows, summary, _fmt(res.value.value))


def _random_path(rng, k: int) -> parisi.ParisiPath:
    m = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, k - 1)), [1.0]])
    q = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, k)), [1.0]])
    return parisi.ParisiPath(m, q)


def _cmd_parisi_lift_check(a) -> Outcome:
    spec = mixture.load_model(a.model)
    rep = mixture.check_balanced(spec)
    if not rep.balanced:
        raise ValueError(f"model is not balanced (max discrepancy {rep.max_discrepancy:.3g})")
    f = mixture.build_mixture(spec)
    cols = ["seed", "path", "k", "ensemble", "single_value", "estimate", "stderr"]
    rows, worst = [], {"spherical": 0.0, "ising": 0.0}
    for i in range(a.paths):
        rng = stream(a.seed, i)
        path = _random_path(rng, int(rng.integers(1, a.max_k + 1)))
        lifted = parisi.lift_path(path, spec.n_species)
        for ens in ("spherical", "ising"):
            multi = parisi.evaluate(f, lifted, ens, a.nodes).value
            single = parisi.single_species_functional(f, path, ens, a.nodes).value
            worst[ens] = max(worst[ens], abs(multi - single))
            rows.append(_row(cols, child_seed(a.seed, i), abs(multi - single), None, path=i, k=path.k, ensemble=ens, single_value=single))
    summary = {"max_residual_spherical": worst["spherical"], "max_residual_ising": worst["ising"]}
    text = f"max residual spherical {worst['spherical']:.3g}, ising {worst['ising']:.3g}"
    return Outcome(cols, rows, summary, text)


def _cmd_ref_bipartite(a) -> Outcome:
    v = reference.bipartite_sk_free_energy(a.beta)
    cols = ["seed", "beta", "estimate", "stderr"]
    return Outcome(cols, [_row(cols, a.seed, v, 0.0, beta=a.beta)], {"value": v}, _fmt(v))


def _cmd_ref_pure(a) -> Outcome:
    v = reference.pure_bound_2param(a.beta, a.p, a.q, a.grid)
    cols = ["seed", "beta", "p", "q", "estimate", "stderr"]
    return Outcome(cols, [_row(cols, a.seed, v, 0.0, beta=a.beta, p=a.p, q=a.q)], {"value": v}, _fmt(v))


def _cmd_ref_e0(a) -> Outcome:
    if a.p < 2:
        raise ValueError("p must be at least 2")
    if a.p == 2:
        v, extra = math.sqrt(2.0), {"method": "convention"}
    else:
        fit = reference.e0_extrapolation(a.p, a.n_alpha, seed=a.seed)
        v = fit.value
        extra = {
            "method": "zero-temperature extrapolation",
            "alphas": fit.alphas,
            "samples": fit.samples,
            "coefficients": fit.coefficients,
            "reliable": fit.reliable,
            "fit_residual": fit.residual,
        }
    cols = ["seed", "p", "estimate", "stderr"]
    return Outcome(cols, [_row(cols, a.seed, v, None, p=a.p)], {"value": v, **extra}, _fmt(v))


def _sizes(spec, a):
    if a.blocks:
        sizes = mixture.FiniteSizes(tuple(int(x) for x in a.blocks.split(",")))
        if len(sizes.block_sizes) != spec.n_species:
            raise ValueError("--blocks needs one size per species")
        return sizes
    return mixture.FiniteSizes.from_total(spec, a.N)


def _sample_summary(values, extra=None):
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return {"mean": float(values.mean()), "stderr": se, "n": n, **(extra or {})}


def _cmd_sim_ising(a) -> Outcome:
    spec = mixture.load_model(a.model)
    sizes = _sizes(spec, a)
    res = simulate.ising_free_energies(spec, sizes, a.disorders, a.seed, a.workers)
    cols = ["seed", "N", "estimate", "stderr"]
    rows = [_row(cols, s, v, None, N=sizes.N) for s, v in zip(res.seeds, res.values)]
    summary = _sample_summary(res.values, {"annealed_bound": res.annealed, "strict_violations": res.strict_violations, "blocks": sizes.block_sizes})
    return Outcome(cols, rows, summary, f"{_fmt(summary['mean'])} +/- {_fmt(summary['stderr'] or 0.0)}")


def _cmd_sim_gse(a) -> Outcome:
    spec = mixture.load_model(a.model)
    sizes = _sizes(spec, a)
    vals = simulate.spherical_gse_samples(spec, sizes, a.disorders, a.seed, a.restarts, a.workers)
    cols = ["seed", "N", "estimate", "stderr"]
    rows = [_row(cols, child_seed(a.seed, i), v, None, N=sizes.N) for i, v in enumerate(vals)]
    summary = _sample_summary(vals, {"blocks": sizes.block_sizes})
    return Outcome(cols, rows, summary, f"{_fmt(summary['mean'])} +/- {_fmt(summary['stderr'] or 0.0)}")


def _cmd_sim_cov(a) -> Outcome:
    spec = mixture.load_model(a.model)
    sizes = _sizes(spec, a)
    rep = simulate.covariance_check(spec, sizes, a.pairs, a.disorders, a.seed, a.mode)
    cols = ["seed", "pair", "expected", "z", "estimate", "stderr"]
    rows = [
        _row(cols, a.seed, rep.estimate[i], rep.stderr[i], pair=i, expected=rep.expected[i], z=rep.z[i])
        for i in range(len(rep.z))
    ]
    summary = {"passed": rep.passed, "max_abs_z": float(np.max(np.abs(rep.z))), "overlaps": rep.overlaps}
    return Outcome(cols, rows, summary, f"max |z| = {_fmt(summary['max_abs_z'])} ({'pass' if rep.passed else 'fail'})")


def _cmd_sim_lipschitz(a) -> Outcome:
    specA = mixture.load_model(a.model_a)
    specB = mixture.load_model(a.model_b)
    sizes = _sizes(specA, a)
    rep = simulate.lipschitz_bound_check(specA, specB, sizes, a.disorders, a.seed, a.workers)
    cols = ["seed", "N", "sup_bound", "estimate", "stderr"]
    rows = [_row(cols, a.seed, rep.difference, rep.stderr, N=sizes.N, sup_bound=rep.sup_bound)]
    summary = {
        "passed": rep.passed,
        "one_sided_lhs": rep.one_sided_lhs,
        "one_sided_bound": rep.one_sided_bound,
        "one_sided_passed": rep.one_sided_passed,
    }
    return Outcome(cols, rows, summary, f"|dF| = {_fmt(abs(rep.difference))} <= {_fmt(rep.sup_bound)} ({'pass' if rep.passed else 'fail'})")


def _cmd_sim_conc(a) -> Outcome:
    spec = mixture.load_model(a.model)
    sizes = _sizes(spec, a)
    rep = simulate.concentration_check(spec, sizes, a.disorders, a.seed, a.restarts, a.workers)
    cols = ["seed", "N", "estimate", "stderr"]
    rows = [_row(cols, child_seed(a.seed, i), v, None, N=sizes.N) for i, v in enumerate(rep.values)]
    summary = {
        "mean": rep.mean,
        "std": rep.std,
        "t": rep.t,
        "exceed_frequency": rep.exceed_frequency,
        "tail_bound": rep.tail_bound,
        "allowed_frequency": rep.allowed_frequency,
        "passed": rep.passed,
    }
    return Outcome(cols, rows, summary, f"std {_fmt(rep.std)}, exceedance {_fmt(rep.exceed_frequency)} ({'pass' if rep.passed else 'fail'})")


def _inj_task(args):
    p, d, seed, restarts = args
    return tensor.injective_norm_estimate(tensor.GaussianTensor(p, d, seed), restarts, seed=seed).value / math.sqrt(d)


def _cmd_tensor_injnorm(a) -> Outcome:
    from ._parallel import pmap

    seeds = [child_seed(a.seed, i) for i in range(a.samples)]
    vals = np.array(pmap(_inj_task, [(a.p, a.d, s, a.restarts) for s in seeds], a.workers))
    cols = ["seed", "p", "d", "estimate", "stderr"]
    rows = [_row(cols, s, v, None, p=a.p, d=a.d) for s, v in zip(seeds, vals)]
    summary = _sample_summary(vals, {"normalization": "injective norm / sqrt(d)"})
    return Outcome(cols, rows, summary, f"{_fmt(summary['mean'])} +/- {_fmt(summary['stderr'] or 0.0)}")


def _cmd_tensor_corr(a) -> Outcome:
    rep = tensor.correspondence_check(a.p, a.d, a.samples, a.restarts, a.seed, a.workers)
    cols = ["seed", "p", "d", "side", "estimate", "stderr"]
    n = len(rep.tensor_values)
    rows = [
        _row(cols, a.seed, rep.tensor_mean, math.sqrt(rep.tensor_var / n), p=a.p, d=a.d, side="tensor"),
        _row(cols, a.seed, rep.model_mean, math.sqrt(rep.model_var / n), p=a.p, d=a.d, side="model"),
    ]
    summary = {"z": rep.z, "pooled_se": rep.pooled_se, "passed": rep.passed}
    return Outcome(cols, rows, summary, f"z = {_fmt(rep.z)} ({'pass' if rep.passed else 'fail'})")


# Parser.


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed (nonnegative)")
    p.add_argument("--out", help="write output to this file instead of stdout")
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${ENV_VAR} or 1)")
    return p


def _finite_args(p):
    p.add_argument("--N", type=int, default=12, help="total size, split by largest remainder")
    p.add_argument("--blocks", help="explicit comma-separated block sizes")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="balancedglass", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)

    model = groups.add_parser("model", help="model files").add_subparsers(dest="action", required=True)
    c = model.add_parser("check", parents=[common], help="hypotheses, beta_p table, balanced verdict")
    c.add_argument("file")
    c.set_defaults(handler=_cmd_model_check)

    par = groups.add_parser("parisi", help="Parisi functionals").add_subparsers(dest="action", required=True)
    c = par.add_parser("solve", parents=[common], help="optimize the functional at fixed k")
    c.add_argument("--model", required=True)
    c.add_argument("--ensemble", choices=["ising", "spherical"], required=True)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--restarts", type=int, default=4)
    c.add_argument("--nodes", type=int, default=parisi.DEFAULT_NODES)
    c.add_argument("--diagonal", action="store_true", help="restrict to lifted single-species paths (balanced models)")
    c.set_defaults(handler=_cmd_parisi_solve)
    c = par.add_parser("lift-check", parents=[common], help="multi-species versus single-species residuals")
    c.add_argument("--model", required=True)
    c.add_argument("--paths", type=int, default=20)
    c.add_argument("--max-k", type=int, default=3)
    c.add_argument("--nodes", type=int, default=parisi.DEFAULT_NODES)
    c.set_defaults(handler=_cmd_parisi_lift_check)

    ref = groups.add_parser("reference", help="closed-form references").add_subparsers(dest="action", required=True)
    c = ref.add_parser("bipartite", parents=[common], help="bipartite spherical 2-spin free energy")
    c.add_argument("--beta", type=float, required=True)
    c.set_defaults(handler=_cmd_ref_bipartite)
    c = ref.add_parser("pure-bound", parents=[common], help="two-parameter bound for the pure bipartite model")
    c.add_argument("--beta", type=float, required=True)
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--q", type=int, required=True)
    c.add_argument("--grid", type=int, default=200)
    c.set_defaults(handler=_cmd_ref_pure)
    c = ref.add_parser("e0", parents=[common], help="ground-state energy of the spherical pure p-spin")
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--n-alpha", type=int, default=8)
    c.set_defaults(handler=_cmd_ref_e0)

    sim = groups.add_parser("simulate", help="finite-N experiments").add_subparsers(dest="action", required=True)
    c = sim.add_parser("ising-exact", parents=[common], help="exact log Z / N per disorder")
    c.add_argument("--model", required=True)
    _finite_args(c)
    c.add_argument("--disorders", type=int, default=100)
    c.set_defaults(handler=_cmd_sim_ising)
    c = sim.add_parser("spherical-gse", parents=[common], help="max H / N per disorder")
    c.add_argument("--model", required=True)
    _finite_args(c)
    c.add_argument("--disorders", type=int, default=20)
    c.add_argument("--restarts", type=int, default=16)
    c.set_defaults(handler=_cmd_sim_gse)
    c = sim.add_parser("covariance", parents=[common], help="Monte Carlo covariance identity")
    c.add_argument("--model", required=True)
    _finite_args(c)
    c.add_argument("--pairs", type=int, default=20)
    c.add_argument("--disorders", type=int, default=5000)
    c.add_argument("--mode", choices=["ising", "spherical"], default="ising")
    c.set_defaults(handler=_cmd_sim_cov)
    c = sim.add_parser("lipschitz", parents=[common], help="paired free-energy comparison")
    c.add_argument("--model-a", required=True)
    c.add_argument("--model-b", required=True)
    _finite_args(c)
    c.add_argument("--disorders", type=int, default=200)
    c.set_defaults(handler=_cmd_sim_lipschitz)
    c = sim.add_parser("concentration", parents=[common], help="spread of max H / N")
    c.add_argument("--model", required=True)
    _finite_args(c)
    c.add_argument("--disorders", type=int, default=100)
    c.add_argument("--restarts", type=int, default=10)
    c.set_defaults(handler=_cmd_sim_conc)

    ten = groups.add_parser("tensor", help="Gaussian tensors").add_subparsers(dest="action", required=True)
    c = ten.add_parser("injnorm", parents=[common], help="injective norm / sqrt(d) per sample")
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--samples", type=int, default=1)
    c.add_argument("--restarts", type=int, default=None)
    c.set_defaults(handler=_cmd_tensor_injnorm)
    c = ten.add_parser("correspondence", parents=[common], help="tensor versus translated spin glass")
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--restarts", type=int, default=None)
    c.set_defaults(handler=_cmd_tensor_corr)
    return parser


def _render(a, outcome: Outcome) -> str:
    if a.format == "text":
        return outcome.headline + "\n"
    if a.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(outcome.columns)
        for row in outcome.rows:
            w.writerow(["" if row[c] is None else (repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]) for c in outcome.columns])
        return buf.getvalue()
    defaults = {k: v for k, v in vars(a).items() if k not in ("handler", "out", "format", "group", "action")}
    doc = {
        "command": f"{a.group} {a.action}",
        "defaults": _clean(defaults),
        "results": _clean(outcome.rows),
        "summary": _clean(outcome.summary),
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        if a.seed < 0:
            raise ValueError("--seed must be nonnegative")
        if a.workers is None:
            a.workers = default_workers()
        elif a.workers < 1:
            raise ValueError("--workers must be positive")
        outcome = a.handler(a)
        text = _render(a, outcome)
    except (ValueError, OSError, json.JSONDecodeError, KeyError, RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": f"{a.group} {a.action}"}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    if a.out:
        with open(a.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
