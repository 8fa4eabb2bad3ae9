"""Command-line entry point: ``crackle <subcommand> [flags]``.

Exit status is 0 on success, 2 on a usage error, 1 on a runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .cech import SimplicialComplex, build_cech
from .experiment import (
    ExperimentConfig,
    coverage_probability,
    layer_profile,
    resolve_radius,
    run_crackle_experiment,
)
from .homology import betti_numbers
from .io import cloud_to_csv, cloud_to_dict, dumps, read_cloud
from .sampler import DistributionSpec, Kind, sample_cloud, sphere_area
from .theory import (
    critical_radius,
    core_radius,
    delta_constant,
    mu_constant,
    predicted_mean_betti,
)


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CRACKLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"CRACKLE_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_model(p, required=True):
    p.add_argument("--dist", choices=[k.value for k in Kind], required=required,
                   help="noise model")
    p.add_argument("--d", type=int, required=required, help="ambient dimension")
    p.add_argument("--alpha", type=float, help="power-law tail exponent (alpha > d)")


def _add_common(p):
    p.add_argument("--csv", action="store_true", help="write CSV instead of JSON")
    p.add_argument("--out", help="output file (default: standard out)")


def _add_threads(p):
    p.add_argument("--threads", type=int,
                   help="worker cap (default: $CRACKLE_THREADS, else CPU count)")


def _add_experiment_overrides(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    _add_model(p, required=False)
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--trials", type=int, help="number of trials")
    p.add_argument("--kmax", type=int, help="Betti numbers beta_0..beta_{kmax-1}")
    p.add_argument("--poisson", action="store_true", default=None,
                   help="Poissonized sample size")
    p.add_argument("--base-seed", type=int, help="trial t uses seed base_seed XOR t")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crackle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("sample", help="draw a point cloud")
    _add_model(p)
    p.add_argument("--n", type=int, required=True, help="sample size (Poisson mean with --poisson)")
    p.add_argument("--poisson", action="store_true", help="Poissonized sample size")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    _add_common(p)

    p = sub.add_parser("cech", help="build the Čech complex of a cloud")
    p.add_argument("--in", dest="inp", required=True, help="cloud file (.csv or .json)")
    p.add_argument("--epsilon", type=float, default=1.0, help="ball radius")
    p.add_argument("--kmax", type=int, help="top simplex dimension (default: d)")
    p.add_argument("--out", help="output file (default: standard out)")

    p = sub.add_parser("betti", help="Betti numbers over GF(2)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="inp", help="cloud file (.csv or .json)")
    src.add_argument("--complex", help="complex JSON written by `cech`")
    p.add_argument("--epsilon", type=float, default=1.0, help="ball radius (with --in)")
    p.add_argument("--kmax", type=int, help="report beta_0..beta_{kmax-1} (default: d)")
    _add_common(p)

    p = sub.add_parser("theory", help="radii, limit constants and predictions")
    _add_model(p)
    p.add_argument("--k", type=int, help="single homology degree (default: all)")
    p.add_argument("--n", type=float, help="sample size for radii and predictions")
    p.add_argument("--epsilon-exp", type=float, default=0.0,
                   help="slack exponent of the critical radii")
    p.add_argument("--core-epsilon", type=float, default=0.1,
                   help="slack of the core radius")
    p.add_argument("--mc-budget", type=int, default=10**6, help="Monte Carlo evaluations")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    _add_threads(p)
    p.add_argument("--out", help="output file (default: standard out)")

    p = sub.add_parser("experiment", help="replicated Betti-number experiment")
    _add_experiment_overrides(p)
    p.add_argument("--radii", help="comma list: numbers, core[:eps], critical:k[:eps]")
    p.add_argument("--cap", type=int, help="combinatorial cap on exterior points")
    p.add_argument("--mu-budget", type=int, help="MC budget for k >= 1 predictions (0 skips)")
    p.add_argument("--coverage", action="store_true", default=None,
                   help="also check core coverage at each radius")
    p.add_argument("--no-crackle", action="store_true", help="skip subset statistics")
    _add_threads(p)
    _add_common(p)

    p = sub.add_parser("layers", help="mean Betti numbers along a radius grid")
    _add_experiment_overrides(p)
    p.add_argument("--grid", help="strictly decreasing comma list of radii or rules")
    _add_threads(p)
    _add_common(p)

    p = sub.add_parser("coverage", help="probability that the core is covered")
    _add_experiment_overrides(p)
    p.add_argument("--R", help="core radius: a number or core[:eps] (default core:0.1)")
    _add_threads(p)
    _add_common(p)
    return parser


# -- handlers ---------------------------------------------------------------------

def _model(args) -> DistributionSpec:
    return DistributionSpec(Kind(args.dist), args.d, args.alpha)


def cmd_sample(args):
    spec = _model(args)
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    yield
    cloud = sample_cloud(spec, args.n, args.poisson, args.seed)
    as_csv = args.csv or (args.out or "").lower().endswith(".csv")
    _emit(cloud_to_csv(cloud) if as_csv else dumps(cloud_to_dict(cloud)), args.out)


def cmd_cech(args):
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    yield
    cloud = read_cloud(args.inp)
    cx = build_cech(cloud, args.epsilon, args.kmax)
    _emit(dumps(cx), args.out)


def cmd_betti(args):
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    yield
    if args.complex:
        cx = SimplicialComplex.from_dict(json.loads(Path(args.complex).read_text()))
        bv = betti_numbers(cx, args.kmax)
    else:
        cloud = read_cloud(args.inp)
        kmax = cloud.d if args.kmax is None else args.kmax
        bv = betti_numbers(build_cech(cloud, args.epsilon, kmax))
    if args.csv:
        header = ",".join(f"beta_{k}" for k in range(len(bv.beta)))
        _emit(header + "\n" + ",".join(str(b) for b in bv.beta), args.out)
    else:
        _emit(dumps(bv), args.out)


def cmd_theory(args):
    spec = _model(args)
    ks = list(range(spec.d)) if args.k is None else [args.k]
    if any(not 0 <= k < spec.d for k in ks):
        raise UsageError(f"--k must lie in 0..{spec.d - 1}")
    if args.mc_budget < 2:
        raise UsageError("--mc-budget must be >= 2")
    threads = _threads(args)
    yield
    mus, errs = {}, {}
    if spec.kind is not Kind.GAUSSIAN:
        for k in ks:
            m = mu_constant(spec.kind, k, spec.d, spec.alpha, args.mc_budget, args.seed, threads)
            mus[str(k)] = m.value
            errs[str(k)] = m.std_error
    constants = {"s_dminus1": sphere_area(spec.d), "c": spec.c,
                 "delta": delta_constant(spec.kind, spec.d, spec.alpha)}
    out = {"model": spec.to_dict(), "constants": constants}
    radii, preds = None, None
    if args.n is not None:
        radii = {"critical": {}, "core": None}
        preds = {}
        for k in ks:
            try:
                R = critical_radius(spec.kind, k, args.n, spec.d, spec.alpha, args.epsilon_exp)
            except ValueError:
                continue
            radii["critical"][str(k)] = R
            if spec.kind is Kind.GAUSSIAN:
                preds[str(k)] = 0.0
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    preds[str(k)] = predicted_mean_betti(spec.kind, k, args.n, R, spec.d,
                                                         spec.alpha, mus[str(k)])
        try:
            radii["core"] = core_radius(spec.kind, args.n, spec.d, spec.alpha, args.core_epsilon)
        except ValueError:
            pass
    out["radii"] = radii
    out["predictions"] = preds
    out["mc_std_errors"] = errs if errs else None
    if spec.kind is Kind.GAUSSIAN:
        out["mu"] = None
    elif args.k is not None:
        out["mu"] = mus[str(args.k)]
    else:
        out["mu"] = mus
    _emit(dumps(out), args.out)


def _config(args, radii_attr=None) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}")
    spec = dict(data.get("spec") or {})
    if args.dist is not None:
        spec["kind"] = args.dist
    if args.d is not None:
        spec["d"] = args.d
    if args.alpha is not None:
        spec["alpha"] = args.alpha
    if not spec:
        raise UsageError("a model is required: --config or --dist/--d")
    data["spec"] = spec
    for flag, key in (("n", "n"), ("trials", "trials"), ("kmax", "kmax"),
                      ("poisson", "poissonized"), ("base_seed", "base_seed"),
                      ("cap", "combinatorial_cap"), ("mu_budget", "mu_budget"),
                      ("coverage", "check_coverage")):
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    if getattr(args, "no_crackle", False):
        data["crackle_stats"] = False
    if radii_attr and getattr(args, radii_attr, None):
        data["radii"] = [r.strip() for r in getattr(args, radii_attr).split(",") if r.strip()]
    if "n" not in data:
        raise UsageError("--n (or config field n) is required")
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise UsageError(str(exc))


def cmd_experiment(args):
    cfg = _config(args, "radii")
    cfg.resolved_radii()
    threads = _threads(args)
    yield
    report = run_crackle_experiment(cfg, threads)
    _emit(report.to_csv() if args.csv else report.to_json(), args.out)


def cmd_layers(args):
    cfg = _config(args, "grid")
    values = cfg.resolved_radii()
    if any(b >= a for a, b in zip(values, values[1:])):
        raise UsageError("--grid must be strictly decreasing")
    threads = _threads(args)
    yield
    prof = layer_profile(cfg.spec, cfg.n, cfg.radii, cfg.kmax, cfg.trials, cfg.base_seed,
                         cfg.poissonized, threads)
    _emit(prof.to_csv() if args.csv else dumps(prof), args.out)


def cmd_coverage(args):
    if args.R is not None:
        args.radii = args.R
    elif not args.config:
        args.radii = "core:0.1"
    else:
        args.radii = None
    cfg = _config(args, "radii")
    R = resolve_radius(cfg.radii[0], cfg.spec, cfg.n)
    threads = _threads(args)
    yield
    res = coverage_probability(cfg.spec, cfg.n, R, cfg.trials, cfg.base_seed,
                               cfg.poissonized, threads)
    if args.csv:
        keys = ["R", "n", "trials", "p_certificate", "p_direct", "analytic_bound",
                "failure_rate", "binomial_se"]
        vals = [res.to_dict()[k] for k in keys]
        row = ",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in vals)
        _emit(",".join(keys) + "\n" + row, args.out)
    else:
        _emit(dumps(res), args.out)


HANDLERS = {
    "sample": cmd_sample,
    "cech": cmd_cech,
    "betti": cmd_betti,
    "theory": cmd_theory,
    "experiment": cmd_experiment,
    "layers": cmd_layers,
    "coverage": cmd_coverage,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # each handler validates up to its first `yield`, then does the work
    steps = HANDLERS[args.command](args)
    try:
        next(steps)
    except (UsageError, ValueError, KeyError) as exc:
        sys.stderr.write(f"crackle {args.command}: error: {exc}\n")
        return 2
    try:
        next(steps, None)
    except Exception as exc:
        sys.stderr.write(f"crackle {args.command}: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
