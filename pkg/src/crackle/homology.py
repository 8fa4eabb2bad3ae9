"""GF(2) Betti numbers, minimal cycles, and the crackle counting statistics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cech import SimplicialComplex, build_cech
from .geometry import SLACK, annulus_filter, enclosing_radii, proximity_graph
from .sampler import PointCloud


class CombinatorialCapError(ValueError):
    """Too many exterior points for exact subset enumeration."""


@dataclass
class BettiVector:
    beta: list
    counts: list
    field: str = "GF(2)"

    def to_dict(self) -> dict:
        return {"betti": list(self.beta), "counts": list(self.counts), "field": self.field}


class UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))
        self.components = size

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
            self.components -= 1


def boundary_columns(faces: list, cofaces: list) -> list:
    """Boundary matrix of ``cofaces`` as one int bitset per column.

    Bit i of column j is set when ``faces[i]`` is a facet of ``cofaces[j]``.
    """
    row = {s: i for i, s in enumerate(faces)}
    cols = []
    for tau in cofaces:
        bits = 0
        for i in range(len(tau)):
            bits |= 1 << row[tau[:i] + tau[i + 1:]]
        cols.append(bits)
    return cols


def gf2_rank(columns: list) -> int:
    """Rank over GF(2) by left-to-right column reduction on bitsets."""
    pivots: dict = {}
    for col in columns:
        while col:
            low = col.bit_length() - 1
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                break
            col ^= other
    return len(pivots)


def betti_numbers(cx: SimplicialComplex, kmax: int | None = None) -> BettiVector:
    """beta_0 .. beta_{kmax-1} of ``cx`` over GF(2).

    ``kmax`` defaults to the complex's dimension cap. beta_k needs the
    (k+1)-simplices, so ``kmax`` may exceed the cap only by one, and only
    when the cap did not cut anything off.
    """
    top = cx.kmax if kmax is None else int(kmax)
    limit = cx.kmax + 1 if cx.is_full else cx.kmax
    if top > limit:
        raise ValueError(
            f"beta_{top - 1} needs {top}-simplices but the complex stops at dimension {cx.kmax}"
        )
    levels = list(cx.simplices) + [[]]
    ranks = [0]
    for k in range(1, top + 1):
        ranks.append(gf2_rank(boundary_columns(levels[k - 1], levels[k])))
    beta = [len(levels[k]) - ranks[k] - ranks[k + 1] for k in range(top)]
    if top >= 1:
        uf = UnionFind(cx.n_vertices)
        for i, j in levels[1] if len(levels) > 1 else []:
            uf.union(i, j)
        if uf.components != beta[0]:
            raise RuntimeError(
                f"beta_0 from reduction ({beta[0]}) disagrees with union-find ({uf.components})"
            )
    return BettiVector(beta, cx.counts())


def euler_characteristic(values) -> int:
    return sum((-1) ** k * v for k, v in enumerate(values))


# -- minimal cycles -------------------------------------------------------------

def minimal_cycle_indicator(points, k: int) -> int:
    """1 if the unit Čech complex on these k+2 points has beta_k = 1, else 0."""
    pts = np.asarray(points, dtype=float)
    if k < 1:
        raise ValueError("minimal cycles are defined for k >= 1")
    if len(pts) != k + 2:
        raise ValueError(f"a minimal {k}-cycle needs exactly {k + 2} points, got {len(pts)}")
    cx = build_cech(pts, 1.0, kmax=k + 1)
    return int(betti_numbers(cx, k + 1).beta[k] == 1)


def minimal_cycle_batch(configs) -> np.ndarray:
    """Vectorized minimal-cycle indicator for a (B, k+2, d) batch.

    On k+2 vertices beta_k is 1 exactly when every k-face is present and the
    full (k+1)-simplex is not: the boundary of the simplex spans the only
    nonzero k-cycle.
    """
    configs = np.asarray(configs, dtype=float)
    nb, m, _ = configs.shape
    k = m - 2
    out = np.ones(nb, dtype=bool)
    # all pairs within 2 is necessary for any face to be present
    diff = configs[:, :, None, :] - configs[:, None, :, :]
    pair_ok = np.all(np.einsum("bijk,bijk->bij", diff, diff) <= (2.0 + SLACK) ** 2, axis=(1, 2))
    out &= pair_ok
    live = np.flatnonzero(out)
    if len(live) == 0:
        return out.astype(np.int8)
    sub = configs[live]
    whole = enclosing_radii(sub)
    keep = 2 * whole > 2.0 + SLACK
    if k >= 2:
        for drop in range(m):
            face = np.delete(sub, drop, axis=1)
            keep &= 2 * enclosing_radii(face) <= 2.0 + SLACK
    out[live] = keep
    return out.astype(np.int8)


# -- crackle statistics ---------------------------------------------------------

@dataclass
class CrackleStats:
    S0: int
    S0_hat: int
    S: dict = field(default_factory=dict)
    S_hat: dict = field(default_factory=dict)
    L: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        keys = sorted(self.S)
        return {
            "S0": self.S0,
            "S0_hat": self.S0_hat,
            "S": {str(k): self.S[k] for k in keys},
            "S_hat": {str(k): self.S_hat[k] for k in keys},
            "L": {str(k): self.L[k] for k in keys},
        }

    def sandwich_holds(self, beta) -> bool:
        """S0_hat <= beta_0 <= S0 and S_hat_k <= beta_k <= S_hat_k + L_k."""
        if beta and not (self.S0_hat <= beta[0] <= self.S0):
            return False
        for k in self.S:
            if k < len(beta) and not (self.S_hat[k] <= beta[k] <= self.S_hat[k] + self.L[k]):
                return False
        return True


def connected_subsets(adj: dict, size: int):
    """Yield each connected vertex set of the given size exactly once.

    Extension-set enumeration: a subset is grown only from its smallest
    vertex, through neighbours larger than it not yet adjacent to the subset.
    """
    for v in sorted(adj):
        yield from _extend({v}, {w for w in adj[v] if w > v}, v, adj, size)


def _extend(sub, ext, root, adj, size):
    if len(sub) == size:
        yield tuple(sorted(sub))
        return
    ext = set(ext)
    while ext:
        w = min(ext)
        ext.discard(w)
        border = set().union(*(adj[u] for u in sub)) | sub
        new_ext = ext | {u for u in adj[w] if u > root and u not in border}
        yield from _extend(sub | {w}, new_ext, root, adj, size)


def crackle_statistics(cloud: PointCloud, R: float, kmax: int, cap: int = 64) -> CrackleStats:
    """Counts bracketing the Betti numbers of the complex outside B_R.

    ``S0`` exterior points; ``S0_hat`` exterior points isolated in the unit
    Čech complex of the whole cloud; for 1 <= k <= kmax-1, ``S[k]`` exterior
    (k+2)-subsets forming a minimal k-cycle, ``S_hat[k]`` those that are also
    a connected component of the whole complex, ``L[k]`` connected exterior
    (k+3)-subsets.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    ext = annulus_filter(cloud, R)
    n_ext = len(ext)
    ks = list(range(1, kmax))
    if n_ext > cap and ks:
        raise CombinatorialCapError(f"{n_ext} exterior points exceed the cap of {cap}")

    # only points within distance 2 of the exterior can touch it
    near = annulus_filter(cloud, max(R - 2.0 - 1e-6, 0.0))
    is_ext = near.norms() >= R
    full_adj = {i: set() for i in range(len(near))}
    for i, j in proximity_graph(near, 1.0).tolist():
        full_adj[i].add(j)
        full_adj[j].add(i)
    ext_rows = np.flatnonzero(is_ext)
    local = {int(r): a for a, r in enumerate(ext_rows)}
    adj = {a: {local[w] for w in full_adj[int(r)] if w in local} for a, r in enumerate(ext_rows)}
    # neighbours in the whole cloud, in exterior numbering (-1 marks a core point)
    outside = {a: {local.get(w, -1) for w in full_adj[int(r)]} for a, r in enumerate(ext_rows)}

    stats = CrackleStats(n_ext, sum(1 for a in adj if not outside[a]))
    pts = near.points[ext_rows]
    for k in ks:
        s = s_hat = 0
        for sub in connected_subsets(adj, k + 2):
            if minimal_cycle_indicator(pts[list(sub)], k):
                s += 1
                members = set(sub)
                if all(outside[a] <= members for a in sub):
                    s_hat += 1
        stats.S[k] = s
        stats.S_hat[k] = s_hat
        stats.L[k] = sum(1 for _ in connected_subsets(adj, k + 3))
    return stats
