"""Point clouds drawn from the spherically symmetric noise models.

Three radial profiles are supported, all normalized to probability densities
on R^d:

    powerlaw     f(x) = c / (1 + |x|^alpha),   alpha > d
    exponential  f(x) = c * exp(-|x|)
    gaussian     f(x) = c * exp(-|x|^2 / 2)

Directions are uniform on the sphere; only the radius law differs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special


class Kind(str, enum.Enum):
    POWERLAW = "powerlaw"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _check_model(kind: Kind, d: int, alpha: Optional[float]) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1 (got d={d})")
    if kind is Kind.POWERLAW:
        if alpha is None:
            raise ValueError("power-law model needs alpha")
        if not alpha > d:
            raise ValueError(
                f"power-law density is not integrable unless alpha > d "
                f"(got alpha={alpha}, d={d})"
            )


def normalization_constant(kind, d: int, alpha: Optional[float] = None) -> float:
    """Constant ``c`` making the density integrate to one over R^d.

    All three models have closed forms:

    * gaussian: ``(2 pi)^(-d/2)``
    * exponential: ``1 / (s_{d-1} Gamma(d))``
    * powerlaw: ``alpha sin(pi d / alpha) / (pi s_{d-1})``, from
      ``int_0^inf r^(d-1) / (1 + r^alpha) dr = B(d/alpha, 1 - d/alpha) / alpha``.
    """
    kind = Kind(kind)
    _check_model(kind, d, alpha)
    s = sphere_area(d)
    if kind is Kind.GAUSSIAN:
        return (2.0 * math.pi) ** (-d / 2)
    if kind is Kind.EXPONENTIAL:
        return 1.0 / (s * math.gamma(d))
    a = d / alpha
    return alpha * math.sin(math.pi * a) / (math.pi * s)


@dataclass(frozen=True)
class DistributionSpec:
    """Noise model identity. ``c`` is derived, never passed in."""

    kind: Kind
    d: int
    alpha: Optional[float] = None
    c: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "d", int(self.d))
        alpha = None if kind is not Kind.POWERLAW else self.alpha
        if alpha is not None:
            alpha = float(alpha)
        object.__setattr__(self, "alpha", alpha)
        _check_model(kind, self.d, alpha)
        object.__setattr__(self, "c", normalization_constant(kind, self.d, alpha))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "d": self.d, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: dict) -> "DistributionSpec":
        return cls(Kind(data["kind"]), int(data["d"]), data.get("alpha"))


# -- radial law -------------------------------------------------------------

def radial_shape(spec: DistributionSpec, r):
    """Unnormalized density as a function of the radius."""
    r = np.asarray(r, dtype=float)
    if spec.kind is Kind.POWERLAW:
        return special.expit(-_alpha_log(spec, r))
    if spec.kind is Kind.EXPONENTIAL:
        return np.exp(-r)
    return np.exp(-0.5 * r * r)


def density_at_radius(spec: DistributionSpec, r):
    return spec.c * radial_shape(spec, r)


def radial_pdf(spec: DistributionSpec, r):
    """Density of |X|: s_{d-1} c r^(d-1) shape(r)."""
    r = np.asarray(r, dtype=float)
    return sphere_area(spec.d) * spec.c * r ** (spec.d - 1) * radial_shape(spec, r)


def _alpha_log(spec, r):
    with np.errstate(divide="ignore"):
        return spec.alpha * np.log(r)


def _powerlaw_parts(spec, r):
    # CDF = I_u(a, 1-a) with u = r^alpha / (1 + r^alpha); for r > 1 go through
    # the complement 1/(1 + r^alpha) so the tail keeps relative precision.
    a = spec.d / spec.alpha
    t = _alpha_log(spec, r)
    lower = special.betainc(a, 1.0 - a, special.expit(t))
    upper = special.betainc(1.0 - a, a, special.expit(-t))
    return lower, upper


def _powerlaw_log_sf(spec, x):
    """log P(|X| > e^x); switches to the leading tail term once the
    incomplete-beta argument would underflow."""
    a = spec.d / spec.alpha
    b = 1.0 - a
    t = spec.alpha * x
    w_log = special.log_expit(-t)
    with np.errstate(divide="ignore"):
        direct = np.log(special.betainc(b, a, np.exp(w_log)))
    # I_w(b, a) = w^b / (b B(b, a)) (1 + O(w))
    asym = b * w_log - math.log(b) - special.betaln(b, a)
    return np.where(w_log > -600.0, direct, asym)


def radial_cdf(spec: DistributionSpec, r):
    """P(|X| <= r)."""
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    if spec.kind is Kind.EXPONENTIAL:
        return special.gammainc(spec.d, r)
    if spec.kind is Kind.GAUSSIAN:
        return special.gammainc(spec.d / 2, 0.5 * r * r)
    lower, upper = _powerlaw_parts(spec, r)
    return np.where(r <= 1.0, lower, 1.0 - upper)


def radial_sf(spec: DistributionSpec, r):
    """P(|X| > r), accurate deep into the tail."""
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    if spec.kind is Kind.EXPONENTIAL:
        return special.gammaincc(spec.d, r)
    if spec.kind is Kind.GAUSSIAN:
        return special.gammaincc(spec.d / 2, 0.5 * r * r)
    lower, upper = _powerlaw_parts(spec, r)
    return np.where(r <= 1.0, 1.0 - lower, upper)


_TABLE_KNOTS = 4096
_tables: dict = {}


def _powerlaw_table(spec: DistributionSpec):
    """Knots (log r, log CDF, log SF), cached per model."""
    key = (spec.d, spec.alpha)
    if key not in _tables:
        # SF ~ K r^(d - alpha); stop once it underflows double range
        hi = min(40.0 + 745.0 / (spec.alpha - spec.d), 700.0)
        x = np.linspace(-40.0, hi, _TABLE_KNOTS)
        r = np.exp(x)
        with np.errstate(divide="ignore"):
            logc = np.log(radial_cdf(spec, r))
        logs = _powerlaw_log_sf(spec, x)
        ok = np.isfinite(logc) & np.isfinite(logs)
        _tables[key] = (x[ok], logc[ok], logs[ok])
    return _tables[key]


def _powerlaw_invert(spec: DistributionSpec, target, from_tail: bool):
    """Solve CDF(r) = target (or SF(r) = target) for r, vectorized.

    Start from the knot table, then Newton steps in log r, each kept inside
    the current bracket and replaced by bisection when it leaves it.
    """
    target = np.asarray(target, dtype=float)
    xs, logc, logs = _powerlaw_table(spec)
    lt = np.log(target)
    # log SF decreasing, log CDF increasing in x
    if from_tail:
        ref = -logs
        key = -lt
        sign = -1.0
    else:
        ref = logc
        key = lt
        sign = 1.0
    j = np.clip(np.searchsorted(ref, key), 1, len(xs) - 1)
    lo = xs[j - 1].copy()
    hi = xs[j].copy()
    # targets beyond the table: widen the bracket outward
    lo = np.where(key < ref[0], -745.0, lo)
    hi = np.where(key > ref[-1], 710.0, hi)
    x = np.interp(key, ref, xs)
    x = np.clip(x, lo, hi)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(200):
        if not active.any():
            break
        xa = x[active]
        if from_tail:
            log_val = _powerlaw_log_sf(spec, xa)
        else:
            with np.errstate(divide="ignore"):
                log_val = np.log(radial_cdf(spec, np.exp(xa)))
        g = log_val - lt[active]
        # d log(val) / d log r = +-(r pdf(r) / val), evaluated in logs
        log_rpdf = (
            math.log(sphere_area(spec.d) * spec.c)
            + spec.d * xa
            + special.log_expit(-spec.alpha * xa)
        )
        with np.errstate(divide="ignore", over="ignore"):
            deriv = sign * np.exp(log_rpdf - log_val)
        # g increasing in x for CDF, decreasing for SF
        above = (g > 0) if not from_tail else (g < 0)
        lo_a, hi_a = lo[active], hi[active]
        hi_a = np.where(above, xa, hi_a)
        lo_a = np.where(above, lo_a, xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = xa - g / deriv
        bad = ~np.isfinite(step) | (step <= lo_a) | (step >= hi_a)
        new = np.where(bad, 0.5 * (lo_a + hi_a), step)
        scale = np.maximum(1.0, np.abs(xa))
        done = (np.abs(g) <= 1e-13) | (hi_a - lo_a <= 4e-16 * scale)
        done |= ~bad & (np.abs(new - xa) <= 1e-15 * scale)
        x[active] = np.where(done & bad, xa, new)
        lo[active] = lo_a
        hi[active] = hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    # radii past double range come back as inf
    with np.errstate(over="ignore"):
        return np.exp(x)


def radial_quantile(spec: DistributionSpec, u):
    """Inverse of the radial CDF: r with P(|X| <= r) = u.

    ``u = 0`` gives 0 and ``u = 1`` gives ``inf``.
    """
    scalar = np.isscalar(u)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~(u >= 0.0) | ~(u <= 1.0)):
        raise ValueError("quantile level must lie in [0, 1]")
    out = np.empty_like(u)
    lower = u <= 0.5
    out[lower] = _quantile_lower(spec, u[lower])
    out[~lower] = radial_tail_quantile(spec, 1.0 - u[~lower])
    return float(out[0]) if scalar else out


def _quantile_lower(spec, u):
    out = np.zeros_like(u)
    pos = u > 0
    if spec.kind is Kind.EXPONENTIAL:
        out[pos] = special.gammaincinv(spec.d, u[pos])
    elif spec.kind is Kind.GAUSSIAN:
        out[pos] = np.sqrt(2.0 * special.gammaincinv(spec.d / 2, u[pos]))
    elif pos.any():
        out[pos] = _powerlaw_invert(spec, u[pos], from_tail=False)
    return out


def radial_tail_quantile(spec: DistributionSpec, q):
    """r with P(|X| > r) = q; precise for tiny ``q``."""
    q = np.asarray(q, dtype=float)
    out = np.full(q.shape, np.inf)
    pos = q > 0
    if spec.kind is Kind.EXPONENTIAL:
        out[pos] = special.gammainccinv(spec.d, q[pos])
    elif spec.kind is Kind.GAUSSIAN:
        out[pos] = np.sqrt(2.0 * special.gammainccinv(spec.d / 2, q[pos]))
    else:
        full = pos & (q >= 1.0)
        out[full] = 0.0
        mid = pos & (q < 1.0)
        if mid.any():
            out[mid] = _powerlaw_invert(spec, q[mid], from_tail=True)
    return out


# -- clouds -----------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Philox4x64-10 counter-based generator keyed through SeedSequence(seed)."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class CloudMeta:
    model: Optional[DistributionSpec]
    n_requested: int
    poissonized: bool
    seed: Optional[int]
    n_actual: int

    def to_dict(self) -> dict:
        out = {} if self.model is None else self.model.to_dict()
        out.update(
            n=self.n_requested,
            poissonized=self.poissonized,
            seed=self.seed,
            n_actual=self.n_actual,
        )
        return out


@dataclass(frozen=True)
class PointCloud:
    """Immutable (N, d) array of points plus provenance.

    ``index`` maps each row to its row in the cloud it was filtered from.
    """

    points: np.ndarray
    meta: Optional[CloudMeta] = None
    index: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2:
            raise ValueError("points must be an (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        idx = np.arange(len(pts)) if self.index is None else np.array(self.index, dtype=np.int64)
        if len(idx) != len(pts):
            raise ValueError("index length does not match number of points")
        idx.flags.writeable = False
        object.__setattr__(self, "index", idx)

    def __len__(self):
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)


def _directions(rng, n, d):
    g = rng.standard_normal((n, d))
    nrm = np.linalg.norm(g, axis=1)
    # a zero vector has probability zero; redraw defensively
    while np.any(nrm == 0):
        bad = nrm == 0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        nrm = np.linalg.norm(g, axis=1)
    return g / nrm[:, None]


def sample_cloud(spec: DistributionSpec, n: int, poissonized: bool = False, seed: int = 0) -> PointCloud:
    """Draw ``n`` i.i.d. points from ``spec`` (or Poisson(n) of them).

    Gaussian points come from per-coordinate standard normals, exponential
    radii from Gamma(d, 1), and power-law radii by inverting the tail of the
    radial law.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = make_rng(seed)
    count = int(rng.poisson(n)) if poissonized else int(n)
    d = spec.d
    if count == 0:
        pts = np.empty((0, d))
    elif spec.kind is Kind.GAUSSIAN:
        pts = rng.standard_normal((count, d))
    else:
        dirs = _directions(rng, count, d)
        if spec.kind is Kind.EXPONENTIAL:
            r = rng.standard_gamma(d, count)
        else:
            # 1 - U lies in (0, 1]; read it as a tail probability
            r = radial_tail_quantile(spec, 1.0 - rng.random(count))
        pts = dirs * r[:, None]
    meta = CloudMeta(spec, int(n), bool(poissonized), int(seed), count)
    return PointCloud(pts, meta)
