"""Metric primitives: enclosing balls, proximity graphs, annuli, core coverage."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .sampler import PointCloud

# Additive slack on every distance comparison against 2*eps. Ball radii are
# compared against eps with half of it, so a pair passes the face test exactly
# when it passes the edge rule.
SLACK = 1e-9


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def contains(self, p, tol: float = SLACK) -> bool:
        return float(np.linalg.norm(np.asarray(p, dtype=float) - self.center)) <= self.radius + tol


def _as_points(points) -> np.ndarray:
    if isinstance(points, PointCloud):
        return points.points
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    return pts


def circumball(support: np.ndarray) -> Ball:
    """Smallest ball with every support point on its boundary.

    The center is taken in the affine hull of the support. Degenerate
    supports fall back to the least-squares solution.
    """
    p0 = support[0]
    if len(support) == 1:
        return Ball(p0.copy(), 0.0)
    u = support[1:] - p0
    gram = u @ u.T
    rhs = 0.5 * np.einsum("ij,ij->i", u, u)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        lam = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    offset = lam @ u
    return Ball(p0 + offset, float(np.sqrt(offset @ offset)))


def _ball_ok(ball: Ball, pts: np.ndarray) -> bool:
    dist = np.linalg.norm(pts - ball.center, axis=1)
    return bool(np.all(dist <= ball.radius + SLACK))


def _meb_by_supports(pts: np.ndarray) -> Ball:
    d = pts.shape[1]
    best = None
    for size in range(1, min(len(pts), d + 1) + 1):
        for sub in itertools.combinations(range(len(pts)), size):
            ball = circumball(pts[list(sub)])
            if np.isfinite(ball.radius) and _ball_ok(ball, pts):
                if best is None or ball.radius < best.radius:
                    best = ball
    return best


def min_enclosing_ball(points) -> Ball:
    """Smallest ball containing all points (move-to-front Welzl).

    The result is checked against the input; if rounding in a degenerate
    (collinear or cospherical) configuration left a point outside, the ball
    is recomputed by enumerating support subsets.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("enclosing ball of an empty point set")
    d = pts.shape[1]
    order = list(range(len(pts)))

    def mtf(end, support):
        ball = circumball(pts[support]) if support else Ball(pts[order[0]].copy(), -1.0)
        if len(support) == d + 1:
            return ball
        i = 0
        while i < end:
            j = order[i]
            if ball.radius < 0 or np.linalg.norm(pts[j] - ball.center) > ball.radius + 1e-12:
                ball = mtf(i, support + [j])
                order.insert(0, order.pop(i))
            i += 1
        return ball

    ball = mtf(len(pts), [])
    if ball.radius < 0:
        ball = Ball(pts[0].copy(), 0.0)
    if not _ball_ok(ball, pts):
        ball = _meb_by_supports(pts)
    return ball


def enclosing_radii(batch) -> np.ndarray:
    """Minimal enclosing radius of each point set in a (B, m, d) batch.

    Vectorized support enumeration: every subset of at most d+1 points gives
    a candidate circumball; the answer is the smallest candidate containing
    the whole set. Affinely dependent supports are skipped.
    """
    batch = np.asarray(batch, dtype=float)
    nb, m, d = batch.shape
    best = np.full(nb, np.inf)
    if nb == 0:
        return best
    if m == 1:
        return np.zeros(nb)
    for size in range(1, min(m, d + 1) + 1):
        for sub in itertools.combinations(range(m), size):
            sup = batch[:, sub, :]
            p0 = sup[:, 0, :]
            if size == 1:
                center = p0
                valid = np.ones(nb, dtype=bool)
            else:
                u = sup[:, 1:, :] - p0[:, None, :]
                gram = np.einsum("bik,bjk->bij", u, u)
                rhs = 0.5 * np.einsum("bik,bik->bi", u, u)
                scale = np.prod(np.maximum(np.diagonal(gram, axis1=1, axis2=2), 1e-300), axis=1)
                det = np.linalg.det(gram)
                valid = np.abs(det) > 1e-12 * scale
                gram = np.where(valid[:, None, None], gram, np.eye(size - 1))
                lam = np.linalg.solve(gram, rhs[..., None])[..., 0]
                center = p0 + np.einsum("bi,bik->bk", lam, u)
            r = np.linalg.norm(p0 - center, axis=1)
            dist = np.linalg.norm(batch - center[:, None, :], axis=2)
            inside = np.all(dist <= r[:, None] + SLACK * 0.5, axis=1)
            ok = valid & inside & (r < best)
            best = np.where(ok, r, best)
    return best


def cech_face_test(points, epsilon: float) -> bool:
    """True iff the epsilon-balls around ``points`` share a common point."""
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("face test on an empty point set")
    if len(pts) == 1:
        return True
    if len(pts) == 2:
        return float(np.linalg.norm(pts[0] - pts[1])) <= 2 * epsilon + SLACK
    # a far pair already rules the face out
    diff = pts[:, None, :] - pts[None, :, :]
    if np.any(np.einsum("ijk,ijk->ij", diff, diff) > (2 * epsilon + SLACK) ** 2):
        return False
    return 2 * min_enclosing_ball(pts).radius <= 2 * epsilon + SLACK


# -- proximity ----------------------------------------------------------------

class SpatialHash:
    """Uniform grid of cubic cells of side ``h`` over a point array."""

    def __init__(self, points: np.ndarray, h: float):
        self.points = np.asarray(points, dtype=float)
        self.h = float(h)
        self.cells: dict = {}
        if len(self.points):
            keys = np.floor(self.points / self.h).astype(np.int64)
            uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            order = np.argsort(inverse, kind="stable")
            bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
            for c, key in enumerate(map(tuple, uniq)):
                self.cells[key] = order[bounds[c]:bounds[c + 1]]

    def pairs_within(self, r: float) -> np.ndarray:
        """All index pairs (i < j) at distance <= r; needs r <= h."""
        d = self.points.shape[1] if self.points.ndim == 2 else 0
        out = []
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if o > (0,) * d]
        for key, members in self.cells.items():
            own = self.points[members]
            if len(members) > 1:
                dist = np.linalg.norm(own[:, None, :] - own[None, :, :], axis=2)
                a, b = np.nonzero(np.triu(dist <= r, k=1))
                out.append(np.stack([members[a], members[b]], axis=1))
            for off in offsets:
                other = self.cells.get(tuple(k + o for k, o in zip(key, off)))
                if other is None:
                    continue
                dist = np.linalg.norm(own[:, None, :] - self.points[other][None, :, :], axis=2)
                a, b = np.nonzero(dist <= r)
                out.append(np.stack([members[a], other[b]], axis=1))
        if not out:
            return np.empty((0, 2), dtype=np.int64)
        pairs = np.sort(np.concatenate(out), axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def any_within(self, q: np.ndarray, r: float) -> bool:
        """Whether some stored point lies within ``r`` of ``q`` (r <= h)."""
        key = np.floor(q / self.h).astype(np.int64)
        for off in itertools.product((-1, 0, 1), repeat=len(key)):
            members = self.cells.get(tuple(int(k + o) for k, o in zip(key, off)))
            if members is not None:
                if np.any(np.linalg.norm(self.points[members] - q, axis=1) <= r):
                    return True
        return False


def proximity_graph(cloud, epsilon: float) -> np.ndarray:
    """Edges (i, j), i < j, whose epsilon-balls meet: |x_i - x_j| <= 2 eps.

    Returned as an (E, 2) int array in lexicographic order.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    pts = _as_points(cloud)
    if len(pts) < 2:
        return np.empty((0, 2), dtype=np.int64)
    return SpatialHash(pts, 2 * epsilon + SLACK).pairs_within(2 * epsilon + SLACK)


def annulus_filter(cloud: PointCloud, a: float, b: float = math.inf) -> PointCloud:
    """Points with a <= |x| < b, keeping their original indices."""
    if not a < b:
        raise ValueError(f"annulus needs a < b (got a={a}, b={b})")
    norms = cloud.norms()
    keep = (norms >= a) & (norms < b)
    return PointCloud(cloud.points[keep], cloud.meta, cloud.index[keep])


# -- core coverage ------------------------------------------------------------

@dataclass(frozen=True)
class CoverageGrid:
    """Cubes [i g, (i+1) g) of the origin-anchored grid lying inside B_R."""

    g: float
    R: float
    cubes: np.ndarray  # (Q, d) integer lower-corner indices


def default_cube_side(d: int) -> float:
    return 1.0 / (2.0 * math.sqrt(d))


def coverage_grid(R: float, d: int, g: float | None = None) -> CoverageGrid:
    g = default_cube_side(d) if g is None else float(g)
    m = int(math.ceil(R / g))
    axis = np.arange(-m, m)
    idx = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    # farthest corner of each cube from the origin
    far = np.maximum(np.abs(idx), np.abs(idx + 1)) * g
    inside = np.linalg.norm(far, axis=1) <= R
    return CoverageGrid(g, float(R), idx[inside])


@dataclass(frozen=True)
class CoverageResult:
    certificate: bool
    direct: bool
    n_cubes: int
    empty_cubes: int
    n_probes: int
    uncovered_probes: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_core_coverage(cloud, R: float, probe_spacing: float = 0.05) -> CoverageResult:
    """Grid certificate and probe test for B_R being covered by unit balls.

    ``certificate``: every grid cube of side 1/(2 sqrt d) inside B_R holds a
    sample point. ``direct``: every lattice probe in B_R is within distance 1
    of some sample point (only points with norm <= R + 1 can matter).
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if probe_spacing > 0.05:
        raise ValueError("probe spacing must be at most 0.05")
    pts = _as_points(cloud)
    d = pts.shape[1]
    norms = np.linalg.norm(pts, axis=1)
    near = pts[norms <= R + 1.0]
    pts = pts[norms <= R]

    grid = coverage_grid(R, d)
    if len(pts):
        occupied = np.unique(np.floor(pts / grid.g).astype(np.int64), axis=0)
        hit = _rows_in(grid.cubes, occupied)
    else:
        hit = np.zeros(len(grid.cubes), dtype=bool)
    empty = int((~hit).sum())

    m = int(math.floor(R / probe_spacing))
    axis = np.arange(-m, m + 1) * probe_spacing
    probes = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    probes = probes[np.linalg.norm(probes, axis=1) <= R]
    if len(near) == 0:
        uncovered = len(probes)
    else:
        # a probe sharing a cell of diameter < 1 with a sample point is covered
        s = (1.0 - 1e-12) / math.sqrt(d)
        quick = _rows_in(
            np.floor(probes / s).astype(np.int64),
            np.unique(np.floor(near / s).astype(np.int64), axis=0),
        )
        rest = probes[~quick]
        uncovered = 0
        if len(rest):
            table = SpatialHash(near, 1.0)
            uncovered = sum(1 for q in rest if not table.any_within(q, 1.0))
    return CoverageResult(
        certificate=empty == 0 and len(pts) > 0,
        direct=uncovered == 0 and len(near) > 0,
        n_cubes=len(grid.cubes),
        empty_cubes=empty,
        n_probes=len(probes),
        uncovered_probes=uncovered,
    )


def _rows_in(rows: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Membership of each integer row of ``rows`` in ``table``."""
    if len(table) == 0 or len(rows) == 0:
        return np.zeros(len(rows), dtype=bool)
    lo = np.minimum(rows.min(axis=0), table.min(axis=0))
    span = np.maximum(rows.max(axis=0), table.max(axis=0)) - lo + 1
    enc_rows = np.ravel_multi_index((rows - lo).T, span)
    enc_table = np.ravel_multi_index((table - lo).T, span)
    return np.isin(enc_rows, enc_table)
