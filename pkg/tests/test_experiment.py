import json
import math

import numpy as np
import pytest

from crackle import experiment as ex
from crackle.experiment import (
    ExperimentConfig,
    coverage_probability,
    empty_cube_bound,
    layer_profile,
    parse_radius,
    run_crackle_experiment,
)
from crackle.sampler import DistributionSpec
from crackle.theory import core_radius, critical_radius

PL = DistributionSpec("powerlaw", 2, 4.0)
EXP = DistributionSpec("exponential", 2)


def test_parse_radius_forms():
    assert parse_radius(3) == 3.0
    assert parse_radius("core") == {"rule": "core", "epsilon": 0.1}
    assert parse_radius("core:0.2") == {"rule": "core", "epsilon": 0.2}
    assert parse_radius("critical:1:-0.5") == {"rule": "critical", "k": 1, "epsilon": -0.5}
    assert parse_radius({"rule": "critical", "k": 0}) == {"rule": "critical", "k": 0, "epsilon": 0.0}
    for bad in (-1.0, "critical", "edge:1", 0):
        with pytest.raises(ValueError):
            parse_radius(bad)


def test_config_validation_and_resolution():
    cfg = ExperimentConfig({"kind": "powerlaw", "d": 2, "alpha": 4.0}, 10**4,
                           radii=["critical:0", "core", 7.5])
    assert cfg.kmax == 2
    assert cfg.resolved_radii() == [100.0, core_radius("powerlaw", 10**4, 2, 4.0), 7.5]
    with pytest.raises(ValueError):
        ExperimentConfig(PL, 100, trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(PL, 100, kmax=3)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"spec": PL.to_dict(), "n": 10, "bogus": 1})
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def _small_config(**kw):
    base = dict(spec=PL, n=2000, trials=6, radii=["critical:0", 20.0, 8.0], base_seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


def test_determinism_and_worker_independence():
    cfg = _small_config()
    a = run_crackle_experiment(cfg).to_json(timing=False)
    b = run_crackle_experiment(cfg).to_json(timing=False)
    c = run_crackle_experiment(cfg, workers=2).to_json(timing=False)
    assert a == b == c
    assert "wall_time_s" in run_crackle_experiment(cfg).to_dict()["provenance"]


def test_aggregates_are_arithmetic_means():
    rep = run_crackle_experiment(_small_config())
    for i, agg in enumerate(rep.aggregates):
        for k in range(2):
            vals = np.array([t["radii"][i]["betti"][k] for t in rep.trials], dtype=float)
            assert agg["mean_betti"][k] == pytest.approx(vals.mean(), rel=1e-15, abs=0)
            assert agg["se_betti"][k] == pytest.approx(vals.std(ddof=1) / math.sqrt(len(vals)),
                                                        rel=1e-12, abs=1e-300)


def test_trial_seeds_and_trivial_bounds():
    rep = run_crackle_experiment(_small_config())
    assert [t["seed"] for t in rep.trials] == [11 ^ t for t in range(6)]
    for t in rep.trials:
        for row in t["radii"]:
            cr = row["crackle"]
            assert cr["S0_hat"] <= row["betti"][0] <= cr["S0"] == row["exterior_n"]
            assert cr["S_hat"]["1"] <= row["betti"][1]
            # with no connected 4-subsets every component has <= 3 points
            if cr["L"]["1"] == 0:
                assert row["betti"][1] == cr["S"]["1"]
            if not row["sandwich_ok"]:
                assert cr["S"]["1"] > cr["S_hat"]["1"]


def test_empty_exterior_gives_zeros():
    cfg = ExperimentConfig(EXP, 5, trials=1, radii=[500.0])
    rep = run_crackle_experiment(cfg)
    row = rep.trials[0]["radii"][0]
    assert row["betti"] == [0, 0] and row["exterior_n"] == 0
    assert rep.trials[0]["radii"][0]["crackle"] == {"S0": 0, "S0_hat": 0, "S": {"1": 0},
                                                    "S_hat": {"1": 0}, "L": {"1": 0}}


def test_cap_exceeded_is_flagged_not_fatal():
    cfg = ExperimentConfig(EXP, 3000, trials=3, radii=[4.0], combinatorial_cap=10)
    rep = run_crackle_experiment(cfg)
    agg = rep.aggregates[0]
    assert agg["crackle_excluded"] == 3 and agg["crackle_trials"] == 0
    assert agg["trials"] == 3 and agg["mean_betti"][0] > 0
    assert all(t["radii"][0]["crackle_skipped"] for t in rep.trials)


def test_trial_errors_are_recorded(monkeypatch):
    real = ex.sample_cloud

    def flaky(spec, n, poissonized, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(spec, n, poissonized, seed)

    monkeypatch.setattr(ex, "sample_cloud", flaky)
    rep = run_crackle_experiment(_small_config(trials=3, base_seed=0))
    assert rep.trials[1]["error"] == "RuntimeError: boom"
    assert rep.aggregates[0]["trials"] == 2 and rep.aggregates[0]["failed_trials"] == 1
    assert "boom" in rep.to_csv()


def test_report_csv_shape():
    rep = run_crackle_experiment(_small_config(trials=2))
    lines = rep.to_csv().strip().splitlines()
    header = lines[0].split(",")
    assert header[:7] == ["trial", "seed", "n_actual", "R", "exterior_n", "beta_0", "beta_1"]
    assert len(lines) == 1 + 2 * 3
    assert all(len(line.split(",")) == len(header) for line in lines)


def test_theory_block():
    rep = run_crackle_experiment(_small_config(trials=1))
    first = rep.theory[0]
    assert first["R"] == pytest.approx(math.sqrt(2000))
    assert first["predicted_mean_betti"]["0"] == pytest.approx(2 / math.pi)
    assert "1" not in first["predicted_mean_betti"]  # mu_1 needs a Monte Carlo budget
    g = run_crackle_experiment(ExperimentConfig(DistributionSpec("gaussian", 2), 500, 1,
                                                radii=["critical:0:1"]))
    assert g.theory[0]["predicted_mean_betti"] == {"0": 0.0, "1": 0.0}


def test_layer_profile_powerlaw_monotone():
    grid = ["critical:0:0.1", "critical:0", "critical:1", "core"]
    prof = layer_profile(PL, 10**4, grid, kmax=2, trials=2, base_seed=5)
    beta0 = [row["mean_betti"][0] for row in prof.rows]
    assert all(a <= b for a, b in zip(beta0, beta0[1:]))
    header = prof.to_csv().splitlines()[0]
    assert header == "R,beta_0,beta_1,exterior_n,trials"


def test_layer_profile_exponential_sign_pattern():
    n = 10**5
    r1 = critical_radius("exponential", 1, n, 2)
    prof = layer_profile(EXP, n, ["critical:0:0.5", "critical:0", r1 - 2.0, r1 - 3.3],
                         kmax=2, trials=8, base_seed=3)
    beta1 = [row["mean_betti"][1] for row in prof.rows]
    assert beta1[0] == 0 and beta1[1] == 0
    assert beta1[-1] > 0


def test_layer_profile_far_radius_is_zero_and_grid_checked():
    prof = layer_profile(EXP, 1000, [1e6], trials=2)
    assert prof.rows[0]["mean_betti"] == [0.0, 0.0] and prof.rows[0]["mean_exterior_n"] == 0.0
    with pytest.raises(ValueError):
        layer_profile(EXP, 1000, [3.0, 5.0])


def test_coverage_probability_trivial_cases():
    zero = coverage_probability(PL, 0, 2.0, trials=3)
    assert zero.p_certificate == 0.0 and zero.p_direct == 0.0
    tiny = coverage_probability(EXP, 1000, 0.01, trials=5, base_seed=2)
    assert tiny.p_direct == 1.0
    with pytest.raises(ValueError):
        coverage_probability(EXP, 10, 1.0, trials=0)


def test_empty_cube_bound_formula():
    R = 4.0
    g = 1 / (2 * math.sqrt(2))
    f = PL.c / (1 + R ** 4)
    assert empty_cube_bound(PL, 10**5, R) == pytest.approx(
        (2 / g) ** 2 * R ** 2 * math.exp(-1e5 * g ** 2 * f), rel=1e-12)
