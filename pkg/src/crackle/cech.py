"""Čech complexes of point clouds, truncated at a dimension cap."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import SLACK, enclosing_radii, proximity_graph
from .sampler import PointCloud

_BATCH = 1 << 15


@dataclass
class SimplicialComplex:
    """Downward-closed set of simplices over vertices ``0..n_vertices-1``.

    ``simplices[k]`` holds the k-simplices as strictly increasing index
    tuples in lexicographic order.
    """

    n_vertices: int
    epsilon: float
    kmax: int
    simplices: list = field(default_factory=list)

    @property
    def is_full(self) -> bool:
        """True when nothing above ``kmax`` can exist, so the cap is not binding."""
        return self.kmax >= self.n_vertices - 1 or not self.simplices[self.kmax]

    def counts(self) -> list:
        return [len(s) for s in self.simplices]

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "kmax": self.kmax,
            "n_vertices": self.n_vertices,
            "counts": self.counts(),
            "simplices": [[list(s) for s in level] for level in self.simplices],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimplicialComplex":
        levels = [sorted(tuple(int(v) for v in s) for s in level) for level in data["simplices"]]
        kmax = int(data.get("kmax", len(levels) - 1))
        n = int(data.get("n_vertices", len(levels[0]) if levels else 0))
        return cls(n, float(data["epsilon"]), kmax, levels)


def build_cech(cloud, epsilon: float, kmax: int | None = None) -> SimplicialComplex:
    """Čech complex of ``cloud`` at radius ``epsilon`` up to dimension ``kmax``.

    Expansion is incremental: a (k+1)-tuple is a candidate only if it is a
    clique of the proximity graph and every one of its k-faces is already
    present; candidates are then kept when their enclosing radius is at most
    ``epsilon``. ``kmax`` defaults to the ambient dimension.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if pts.ndim != 2:
        pts = pts.reshape(len(pts), -1)
    n, d = pts.shape
    if kmax is None:
        kmax = d
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    levels = [[(i,) for i in range(n)]]
    if kmax >= 1:
        edges = proximity_graph(pts, epsilon)
        levels.append([tuple(e) for e in edges.tolist()])
        up = [set() for _ in range(n)]
        for i, j in levels[1]:
            up[i].add(j)
    for k in range(2, kmax + 1):
        prev = levels[k - 1]
        if not prev:
            levels.append([])
            continue
        present = set(prev)
        cands = []
        for sigma in prev:
            common = set.intersection(*(up[v] for v in sigma))
            for v in sorted(w for w in common if w > sigma[-1]):
                tau = sigma + (v,)
                if all(tau[:i] + tau[i + 1:] in present for i in range(k)):
                    cands.append(tau)
        keep = []
        for start in range(0, len(cands), _BATCH):
            chunk = cands[start:start + _BATCH]
            radii = enclosing_radii(pts[np.array(chunk)])
            keep.extend(t for t, r in zip(chunk, radii) if 2 * r <= 2 * epsilon + SLACK)
        levels.append(keep)
    return SimplicialComplex(n, float(epsilon), int(kmax), levels)


def simplex_counts(cx: SimplicialComplex) -> list:
    return cx.counts()
