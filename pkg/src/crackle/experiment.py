"""Replicated experiments: Betti means against theory, layer profiles, coverage."""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cech import build_cech
from .geometry import annulus_filter, check_core_coverage, default_cube_side
from .homology import CombinatorialCapError, betti_numbers, crackle_statistics
from .io import dumps
from .sampler import DistributionSpec, Kind, density_at_radius, sample_cloud
from .theory import (
    RegimeWarning,
    core_radius,
    critical_radius,
    mu_constant,
    predicted_mean_betti,
)


def trial_seed(base_seed: int, t: int) -> int:
    return int(base_seed) ^ int(t)


# -- radius rules ------------------------------------------------------------------

def parse_radius(item):
    """Normalize a radius entry to a number or a rule dict.

    Accepted: a positive number, ``"core[:eps]"``, ``"critical:k[:eps]"``,
    or a dict ``{"rule": "core"|"critical", "k": .., "epsilon": ..}``.
    """
    if isinstance(item, dict):
        rule = item["rule"]
        if rule == "core":
            return {"rule": "core", "epsilon": float(item.get("epsilon", 0.1))}
        if rule == "critical":
            return {"rule": "critical", "k": int(item.get("k", 0)),
                    "epsilon": float(item.get("epsilon", 0.0))}
        raise ValueError(f"unknown radius rule {rule!r}")
    if isinstance(item, (int, float)) and not isinstance(item, bool):
        if not item > 0:
            raise ValueError("radii must be positive")
        return float(item)
    text = str(item).strip()
    parts = text.split(":")
    if parts[0] == "core":
        return parse_radius({"rule": "core", "epsilon": float(parts[1]) if len(parts) > 1 else 0.1})
    if parts[0] == "critical":
        if len(parts) < 2:
            raise ValueError("critical rule needs k, as in critical:0")
        eps = float(parts[2]) if len(parts) > 2 else 0.0
        return parse_radius({"rule": "critical", "k": int(parts[1]), "epsilon": eps})
    return parse_radius(float(text))


def resolve_radius(item, spec: DistributionSpec, n: float) -> float:
    item = parse_radius(item)
    if isinstance(item, float):
        return item
    if item["rule"] == "core":
        return core_radius(spec.kind, n, spec.d, spec.alpha, item["epsilon"])
    return critical_radius(spec.kind, item["k"], n, spec.d, spec.alpha, item["epsilon"])


# -- config and report -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    spec: DistributionSpec
    n: int
    trials: int = 1
    radii: list = field(default_factory=lambda: [{"rule": "critical", "k": 0, "epsilon": 0.0}])
    kmax: int | None = None
    poissonized: bool = False
    base_seed: int = 0
    combinatorial_cap: int = 64
    crackle_stats: bool = True
    check_coverage: bool = False
    mu_budget: int = 0
    mu_seed: int = 0

    def __post_init__(self):
        if isinstance(self.spec, dict):
            self.spec = DistributionSpec.from_dict(self.spec)
        if self.kmax is None:
            self.kmax = self.spec.d
        self.radii = [parse_radius(r) for r in self.radii]
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.kmax <= self.spec.d:
            raise ValueError(f"kmax must lie in 0..{self.spec.d}")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    def resolved_radii(self) -> list:
        out = [resolve_radius(r, self.spec, self.n) for r in self.radii]
        if any(not r > 0 for r in out):
            raise ValueError("resolved radii must be positive")
        return out

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "n": self.n,
            "trials": self.trials,
            "radii": list(self.radii),
            "kmax": self.kmax,
            "poissonized": self.poissonized,
            "base_seed": self.base_seed,
            "combinatorial_cap": self.combinatorial_cap,
            "crackle_stats": self.crackle_stats,
            "check_coverage": self.check_coverage,
            "mu_budget": self.mu_budget,
            "mu_seed": self.mu_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**data)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    radii: list
    trials: list
    aggregates: list
    theory: list
    provenance: dict

    def to_dict(self, timing: bool = True) -> dict:
        prov = dict(self.provenance)
        if not timing:
            prov.pop("wall_time_s", None)
        return {
            "config": self.config.to_dict(),
            "radii": self.radii,
            "aggregates": self.aggregates,
            "theory": self.theory,
            "trials": self.trials,
            "provenance": prov,
        }

    def to_json(self, timing: bool = True) -> str:
        return dumps(self.to_dict(timing))

    def to_csv(self) -> str:
        """One row per (trial, radius)."""
        kmax = self.config.kmax
        ks = list(range(1, kmax))
        header = ["trial", "seed", "n_actual", "R", "exterior_n"]
        header += [f"beta_{k}" for k in range(kmax)]
        header += ["S0", "S0_hat"]
        for k in ks:
            header += [f"S_{k}", f"S_hat_{k}", f"L_{k}"]
        header += ["crackle_ran", "sandwich_ok", "certificate", "direct", "error"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        fmt = lambda v: "" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
        for rec in self.trials:
            if rec.get("error"):
                w.writerow([rec["trial"], rec["seed"], "", "", ""] + [""] * (len(header) - 6)
                           + [rec["error"]])
                continue
            for row in rec["radii"]:
                cr = row.get("crackle")
                cov = row.get("coverage") or {}
                line = [rec["trial"], rec["seed"], rec["n_actual"], fmt(row["R"]), row["exterior_n"]]
                line += row["betti"]
                if cr:
                    line += [cr["S0"], cr["S0_hat"]]
                    for k in ks:
                        line += [cr["S"][str(k)], cr["S_hat"][str(k)], cr["L"][str(k)]]
                else:
                    line += [""] * (2 + 3 * len(ks))
                line += [int(cr is not None), fmt(row.get("sandwich_ok")),
                         fmt(cov.get("certificate")), fmt(cov.get("direct")), ""]
                w.writerow(line)
        return buf.getvalue()


def _run_trial(config: ExperimentConfig, radii: list, t: int) -> dict:
    seed = trial_seed(config.base_seed, t)
    rec = {"trial": t, "seed": seed}
    try:
        cloud = sample_cloud(config.spec, config.n, config.poissonized, seed)
        rec["n_actual"] = len(cloud)
        rows = []
        for R in radii:
            ext = annulus_filter(cloud, R)
            cx = build_cech(ext, 1.0, config.kmax)
            bv = betti_numbers(cx)
            row = {"R": R, "exterior_n": len(ext), "betti": bv.beta, "counts": bv.counts,
                   "crackle": None, "crackle_skipped": False, "sandwich_ok": None}
            if config.crackle_stats:
                try:
                    stats = crackle_statistics(cloud, R, config.kmax, config.combinatorial_cap)
                except CombinatorialCapError:
                    row["crackle_skipped"] = True
                else:
                    row["crackle"] = stats.to_dict()
                    row["sandwich_ok"] = stats.sandwich_holds(bv.beta)
            if config.check_coverage:
                row["coverage"] = check_core_coverage(cloud, R).to_dict()
            rows.append(row)
        rec["radii"] = rows
        rec["error"] = None
    except Exception as exc:  # recorded, the batch carries on
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _mean_se(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        return None, None
    mean = float(arr.sum() / len(arr))
    if len(arr) < 2:
        return mean, None
    return mean, float(arr.std(ddof=1) / math.sqrt(len(arr)))


def _aggregate(config: ExperimentConfig, radii: list, trials: list) -> list:
    ok = [t for t in trials if not t.get("error")]
    ks = list(range(1, config.kmax))
    out = []
    for i, R in enumerate(radii):
        rows = [t["radii"][i] for t in ok]
        agg = {"R": R, "trials": len(rows), "failed_trials": len(trials) - len(ok)}
        agg["mean_betti"], agg["se_betti"] = [], []
        for k in range(config.kmax):
            m, se = _mean_se([r["betti"][k] for r in rows])
            agg["mean_betti"].append(m)
            agg["se_betti"].append(se)
        agg["mean_exterior_n"], agg["se_exterior_n"] = _mean_se([r["exterior_n"] for r in rows])
        ran = [r for r in rows if r["crackle"] is not None]
        agg["crackle_trials"] = len(ran)
        agg["crackle_excluded"] = sum(1 for r in rows if r["crackle_skipped"])
        agg["sandwich_violations"] = sum(1 for r in ran if not r["sandwich_ok"])
        if ran:
            cm = {"S0": _mean_se([r["crackle"]["S0"] for r in ran])[0],
                  "S0_hat": _mean_se([r["crackle"]["S0_hat"] for r in ran])[0]}
            for name in ("S", "S_hat", "L"):
                cm[name] = {str(k): _mean_se([r["crackle"][name][str(k)] for r in ran])[0] for k in ks}
            agg["mean_crackle"] = cm
        else:
            agg["mean_crackle"] = None
        if config.check_coverage and rows:
            agg["p_certificate"] = sum(r["coverage"]["certificate"] for r in rows) / len(rows)
            agg["p_direct"] = sum(r["coverage"]["direct"] for r in rows) / len(rows)
        out.append(agg)
    return out


def _theory_block(config: ExperimentConfig, radii: list) -> list:
    spec = config.spec
    mus = {}
    if spec.kind is not Kind.GAUSSIAN:
        for k in range(config.kmax):
            if k == 0 or config.mu_budget > 0:
                mus[k] = mu_constant(spec.kind, k, spec.d, spec.alpha,
                                     max(config.mu_budget, 2), config.mu_seed)
    block = []
    for item, R in zip(config.radii, radii):
        preds, notes = {}, []
        for k in range(config.kmax):
            if spec.kind is not Kind.GAUSSIAN and k not in mus:
                continue
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RegimeWarning)
                preds[str(k)] = predicted_mean_betti(
                    spec.kind, k, config.n, R, spec.d, spec.alpha,
                    mus[k].value if k in mus else None)
            notes += [str(w.message) for w in caught if issubclass(w.category, RegimeWarning)]
        if spec.kind is Kind.GAUSSIAN:
            notes.append("Gaussian noise does not crackle: every limit is 0")
        block.append({
            "radius": item,
            "R": R,
            "predicted_mean_betti": preds,
            "mu": {str(k): m.value for k, m in mus.items()},
            "mu_std_error": {str(k): m.std_error for k, m in mus.items()},
            "regime_notes": sorted(set(notes)),
        })
    return block


def _map_trials(fn, args: list, workers: int) -> list:
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*args)))
    return [fn(*a) for a in args]


def run_crackle_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Sample ``config.trials`` clouds and measure the complex outside each radius.

    Trial t uses seed ``base_seed ^ t``. Results do not depend on ``workers``.
    """
    start = time.perf_counter()
    radii = config.resolved_radii()
    args = [(config, radii, t) for t in range(config.trials)]
    trials = _map_trials(_run_trial, args, workers)
    report = ExperimentReport(
        config=config,
        radii=radii,
        trials=trials,
        aggregates=_aggregate(config, radii, trials),
        theory=_theory_block(config, radii),
        provenance={
            "package": "crackle",
            "version": __version__,
            "rng": "numpy Philox4x64-10 via SeedSequence(seed)",
            "trial_seed": "base_seed XOR trial_index",
            "wall_time_s": time.perf_counter() - start,
        },
    )
    return report


# -- layer profile -----------------------------------------------------------------

@dataclass
class LayerProfile:
    kmax: int
    trials: int
    rows: list

    def to_dict(self) -> dict:
        return {"kmax": self.kmax, "trials": self.trials, "rows": self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R"] + [f"beta_{k}" for k in range(self.kmax)] + ["exterior_n", "trials"])
        for row in self.rows:
            w.writerow([format(row["R"], ".17g")]
                       + [format(b, ".17g") for b in row["mean_betti"]]
                       + [format(row["mean_exterior_n"], ".17g"), row["trials"]])
        return buf.getvalue()


def layer_profile(spec: DistributionSpec, n: int, radii_grid, kmax: int | None = None,
                  trials: int = 1, base_seed: int = 0, poissonized: bool = False,
                  workers: int = 1) -> LayerProfile:
    """Mean Betti numbers and exterior counts along a decreasing radius grid.

    Each trial's cloud is shared by every radius of the grid.
    """
    cfg = ExperimentConfig(spec, n, trials, list(radii_grid), kmax, poissonized, base_seed,
                           crackle_stats=False)
    values = cfg.resolved_radii()
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError("radii grid must be strictly decreasing")
    args = [(cfg, values, t) for t in range(trials)]
    recs = _map_trials(_run_trial, args, workers)
    aggs = _aggregate(cfg, values, recs)
    rows = [{"R": a["R"], "mean_betti": a["mean_betti"], "mean_exterior_n": a["mean_exterior_n"],
             "trials": a["trials"]} for a in aggs]
    return LayerProfile(cfg.kmax, trials, rows)


# -- coverage -----------------------------------------------------------------------

@dataclass
class CoverageSummary:
    R: float
    n: int
    trials: int
    p_certificate: float
    p_direct: float
    analytic_bound: float
    failure_rate: float
    binomial_se: float
    records: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def empty_cube_bound(spec: DistributionSpec, n: int, R: float) -> float:
    """(2/g)^d R^d exp(-n g^d f(R)) with g = 1/(2 sqrt d)."""
    g = default_cube_side(spec.d)
    f_r = float(density_at_radius(spec, R))
    return (2.0 / g) ** spec.d * R ** spec.d * math.exp(-n * g ** spec.d * f_r)


def _coverage_trial(spec, n, R, poissonized, seed):
    cloud = sample_cloud(spec, n, poissonized, seed)
    res = check_core_coverage(cloud, R)
    return {"seed": seed, **res.to_dict()}


def coverage_probability(spec: DistributionSpec, n: int, R: float, trials: int,
                         base_seed: int = 0, poissonized: bool = False,
                         workers: int = 1) -> CoverageSummary:
    """Fraction of trials whose core B_R is certified / directly covered."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    args = [(spec, n, R, poissonized, trial_seed(base_seed, t)) for t in range(trials)]
    recs = _map_trials(_coverage_trial, args, workers)
    p_cert = sum(r["certificate"] for r in recs) / trials
    p_dir = sum(r["direct"] for r in recs) / trials
    fail = 1.0 - p_cert
    return CoverageSummary(
        R=float(R), n=int(n), trials=trials,
        p_certificate=p_cert, p_direct=p_dir,
        analytic_bound=empty_cube_bound(spec, n, R),
        failure_rate=fail,
        binomial_se=math.sqrt(fail * (1.0 - fail) / trials),
        records=recs,
    )
