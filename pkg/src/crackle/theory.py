"""Closed-form radii, limit constants and predicted Betti-number means.

All logarithms are natural. ``epsilon`` below is always the slack exponent
of a radius formula, never a Čech radius.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .homology import minimal_cycle_batch
from .sampler import DistributionSpec, Kind, sphere_area

# T_k(0, y) = 1 forces every pair of the k+2 points within distance 2, so
# each offset y_i lies in B_2(0). The MC proposal uses this bound.
SUPPORT_RADIUS = 2.0
_MC_BATCH = 1 << 17


class RegimeWarning(UserWarning):
    """Radius outside the regime where the limit theorem applies."""


def _spec(kind, d, alpha) -> DistributionSpec:
    return DistributionSpec(Kind(kind), d, alpha)


def log_cube_side(d: int) -> float:
    return -math.log(2.0 * math.sqrt(d))


def delta_constant(kind, d: int, alpha: float | None = None) -> float:
    """Offset constant of the core radius for each model."""
    spec = _spec(kind, d, alpha)
    c = spec.c
    if spec.kind is Kind.POWERLAW:
        return c * spec.alpha * 2.0 ** (-d) * d ** (-(1 + d / 2))
    if spec.kind is Kind.EXPONENTIAL:
        stated = (1 + d / 2) * math.log(d) + d * math.log(2) - math.log(c)
        via_grid = math.log(d) - math.log(c) - d * log_cube_side(d)
    else:
        stated = (1 + d / 2) * math.log(d) + (d - 1) * math.log(2) - math.log(c)
        via_grid = math.log(d / 2) - math.log(c) - d * log_cube_side(d)
    # the two published forms must agree
    assert math.isclose(stated, via_grid, rel_tol=1e-12, abs_tol=1e-12), (stated, via_grid)
    return stated


def core_radius(kind, n: float, d: int, alpha: float | None = None, epsilon: float = 0.1) -> float:
    """Radius below which the unit balls cover B_R with probability -> 1."""
    if not epsilon > 0:
        raise ValueError("core radius needs epsilon > 0")
    if n < 16:
        raise ValueError("core radius needs n >= 16 so that log log log n > 0")
    kind = Kind(kind)
    delta = delta_constant(kind, d, alpha)
    ln = math.log(n)
    lln = math.log(ln)
    llln = math.log(lln)
    if kind is Kind.POWERLAW:
        base = delta * n / (ln - math.exp(-epsilon) * lln) - 1.0
        if base <= 0:
            raise ValueError(f"core radius undefined for n={n} (non-positive base)")
        return base ** (1.0 / alpha)
    if kind is Kind.EXPONENTIAL:
        value = ln - llln - delta - epsilon
        if value <= 0:
            raise ValueError(f"core radius undefined for n={n} (non-positive value)")
        return value
    inner = ln - llln - delta - epsilon
    if inner <= 0:
        raise ValueError(f"core radius undefined for n={n} (non-positive radicand)")
    return math.sqrt(2.0 * inner)


def critical_radius(kind, k: int, n: float, d: int, alpha: float | None = None,
                    epsilon: float = 0.0) -> float:
    """Radius R_{k,n}^epsilon at which E[beta_k] outside B_R stays finite.

    ``epsilon`` may be negative. The Gaussian model only has k = 0.
    """
    kind = Kind(kind)
    if not 0 <= k <= d - 1:
        raise ValueError(f"k must lie in 0..{d - 1}")
    if kind is Kind.POWERLAW:
        _spec(kind, d, alpha)
        expo = 1.0 / (alpha - d) if k == 0 else 1.0 / (alpha - d / (k + 2))
        return n ** (expo + epsilon)
    if n < 3:
        raise ValueError("critical radius needs n >= 3 so that log log n > 0")
    ln = math.log(n)
    lln = math.log(ln)
    if kind is Kind.EXPONENTIAL:
        coef = d - 1 if k == 0 else (d - 1) / (k + 2)
        return ln + (coef + epsilon) * lln
    if k > 0:
        raise ValueError("critical radius for k > 0 is not defined for the Gaussian model")
    value = 2.0 * ln + (d - 2 + epsilon) * lln
    if value <= 0:
        raise ValueError(f"critical radius undefined for n={n}")
    return math.sqrt(value)


@dataclass
class RadiiSpec:
    kind: Kind
    n: float
    d: int
    alpha: float | None
    epsilon: float
    core: float | None
    critical: dict = field(default_factory=dict)
    delta: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n": self.n,
            "d": self.d,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "core": self.core,
            "critical": {str(k): v for k, v in sorted(self.critical.items())},
            "delta": self.delta,
        }


def radii(kind, n: float, d: int, alpha: float | None = None, epsilon: float = 0.1) -> RadiiSpec:
    """Core radius (slack ``epsilon``) and R_{k,n} for every k (slack 0)."""
    kind = Kind(kind)
    crit = {}
    for k in range(d):
        try:
            crit[k] = critical_radius(kind, k, n, d, alpha, 0.0)
        except ValueError:
            pass
    core = core_radius(kind, n, d, alpha, epsilon) if n >= 16 else None
    return RadiiSpec(kind, n, d, alpha, epsilon, core, crit, delta_constant(kind, d, alpha))


# -- limit constants ----------------------------------------------------------------

@dataclass
class MuEstimate:
    value: float
    std_error: float
    evaluations: int = 0
    support_radius: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TheoryConstants:
    s_dminus1: float
    c: float
    mu: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "s_dminus1": self.s_dminus1,
            "c": self.c,
            "mu": {str(k): m.to_dict() for k, m in sorted(self.mu.items())},
        }


def _ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


def _uniform_ball(rng, shape, d, r):
    g = rng.standard_normal(shape + (d,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    rad = r * rng.random(shape) ** (1.0 / d)
    return g * rad[..., None]


def _mc_batch(kind, k, d, size, seed_seq, radius):
    """Sum and sum of squares of the integrand over one batch of draws."""
    rng = np.random.Generator(np.random.Philox(seed_seq))
    y = _uniform_ball(rng, (size, k + 1), d, radius)
    weight = _ball_volume(d, radius) ** (k + 1)
    if kind is Kind.EXPONENTIAL:
        # rho ~ Exp(k+2); the density factor (k+2) e^{-(k+2) rho} is divided out
        rho = rng.standard_exponential(size) / (k + 2)
        first = y[..., 0]
        gate = np.all(first > -rho[:, None], axis=1)
        weight = weight / (k + 2)
        factor = np.where(gate, np.exp(-first.sum(axis=1)), 0.0)
    else:
        factor = np.ones(size)
    configs = np.concatenate([np.zeros((size, 1, d)), y], axis=1)
    vals = weight * factor * minimal_cycle_batch(configs)
    return float(vals.sum()), float((vals * vals).sum())


def mu_constant(kind, k: int, d: int, alpha: float | None = None, mc_budget: int = 10**6,
                seed: int = 0, threads: int = 1, support_radius: float = SUPPORT_RADIUS) -> MuEstimate:
    """Limit constant of E[beta_k] for the power-law and exponential models.

    k = 0 is closed form. For k >= 1 the integral of T_k(0, y) over
    (R^d)^(k+1) (weighted for the exponential model) is estimated by Monte
    Carlo with offsets uniform on B_r(0)^(k+1). Batches draw from spawned
    Philox streams and are summed in a fixed order, so a seed gives the same
    bits for any thread count.
    """
    spec = _spec(kind, d, alpha)
    if spec.kind is Kind.GAUSSIAN:
        raise ValueError("no limit constant is defined for the Gaussian model")
    if not 0 <= k <= d - 1:
        raise ValueError(f"k must lie in 0..{d - 1}")
    s = sphere_area(d)
    if k == 0:
        if spec.kind is Kind.POWERLAW:
            return MuEstimate(s * spec.c / (spec.alpha - d), 0.0)
        return MuEstimate(s * spec.c, 0.0)
    if mc_budget < 2:
        raise ValueError("mc_budget must be at least 2")

    sizes = [_MC_BATCH] * (mc_budget // _MC_BATCH)
    if mc_budget % _MC_BATCH:
        sizes.append(mc_budget % _MC_BATCH)
    streams = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    jobs = [(spec.kind, k, d, size, ss, support_radius) for size, ss in zip(sizes, streams)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _mc_batch(*a), jobs))
    else:
        parts = [_mc_batch(*a) for a in jobs]
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    mean = total / mc_budget
    var = max(total_sq / mc_budget - mean * mean, 0.0) * mc_budget / (mc_budget - 1)
    if spec.kind is Kind.POWERLAW:
        prefactor = s * spec.c ** (k + 2) / ((spec.alpha * (k + 2) - d) * math.factorial(k + 2))
    else:
        prefactor = s * spec.c ** (k + 2) / math.factorial(k + 2)
    return MuEstimate(prefactor * mean, prefactor * math.sqrt(var / mc_budget),
                      mc_budget, support_radius)


def theory_constants(kind, d: int, alpha: float | None = None, ks=None, mc_budget: int = 10**6,
                     seed: int = 0, threads: int = 1) -> TheoryConstants:
    spec = _spec(kind, d, alpha)
    out = TheoryConstants(sphere_area(d), spec.c)
    if spec.kind is not Kind.GAUSSIAN:
        for k in (range(d) if ks is None else ks):
            out.mu[k] = mu_constant(kind, k, d, alpha, mc_budget, seed, threads)
    return out


# -- predictions ----------------------------------------------------------------

def betti_scaling(kind, k: int, n: float, R: float, d: int, alpha: float | None = None) -> float:
    """Normalizing sequence multiplying mu in the limit of E[beta_k]."""
    kind = Kind(kind)
    m = 1 if k == 0 else k + 2
    if kind is Kind.POWERLAW:
        return math.exp(m * math.log(n) + (d - alpha * m) * math.log(R))
    if kind is Kind.EXPONENTIAL:
        return math.exp(m * math.log(n) + (d - 1) * math.log(R) - m * R)
    return 0.0


def regime_parameter(kind, n: float, R: float, alpha: float | None = None) -> float:
    """n R^-alpha (power law) or n e^-R (exponential); must be small."""
    kind = Kind(kind)
    if kind is Kind.POWERLAW:
        return n * R ** (-alpha)
    return n * math.exp(-R)


def predicted_mean_betti(kind, k: int, n: float, R: float, d: int, alpha: float | None = None,
                         mu: float | None = None, regime_tol: float = 0.1) -> float:
    """Asymptotic prediction scaling(n, R) * mu for E[beta_k] outside B_R.

    The Gaussian prediction is exactly 0. A ``RegimeWarning`` is issued when
    n R^-alpha (or n e^-R) exceeds ``regime_tol``.
    """
    kind = Kind(kind)
    if kind is Kind.GAUSSIAN:
        return 0.0
    if mu is None:
        if k != 0:
            raise ValueError("mu must be supplied for k >= 1")
        mu = mu_constant(kind, 0, d, alpha).value
    lam = regime_parameter(kind, n, R, alpha)
    if lam > regime_tol:
        warnings.warn(
            f"regime parameter {lam:.3g} > {regime_tol}; limit theorem does not apply",
            RegimeWarning,
            stacklevel=2,
        )
    return betti_scaling(kind, k, n, R, d, alpha) * mu
