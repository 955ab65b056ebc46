"""Geometry of the disagreement set of a plus/minus pair.

Sites are extended-graph sites of the pair's region (vertices first, then
mid-edges). Connectivity is always along extended-graph adjacency, so a path
alternates between vertices and mid-edges.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._kernels import bfs_distances
from .lattice import Rectangle, Region, Vertex, boundary_indices
from .model import PairSample


class InvariantViolation(AssertionError):
    """A structural property that must hold on every sample failed."""


def _sites(s: Iterable) -> np.ndarray:
    return np.unique(np.asarray(list(s), dtype=np.int64))


class DisagreementGeometry:
    """The set ``D`` of disagreeing sites with its connected components.

    Parameters
    ----------
    region : Region
    mask : bool array over extended sites
    plus, minus : optional site-value arrays the mask was derived from
    """

    def __init__(self, region: Region, mask: np.ndarray, plus=None, minus=None):
        ext = region.extended
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (ext.n_sites,):
            raise ValueError("mask does not match the extended graph")
        self.region, self.ext, self.mask = region, ext, mask
        self.plus, self.minus = plus, minus

        idx = np.flatnonzero(mask)
        labels = np.full(ext.n_sites, -1, dtype=np.int64)
        if len(idx):
            sub = ext.adjacency[idx][:, idx]
            k, lab = connected_components(sub, directed=False)
            labels[idx] = lab
        else:
            k = 0
        self.component_id = labels
        self.n_components = int(k)

    @classmethod
    def from_pair(cls, pair: PairSample) -> DisagreementGeometry:
        a, b = pair.plus.values(), pair.minus.values()
        if a.shape != b.shape:
            raise ValueError("pair configurations live on different graphs")
        return cls(pair.region, a != b, a, b)

    @classmethod
    def from_values(cls, region: Region, plus: np.ndarray, minus: np.ndarray):
        plus, minus = np.asarray(plus), np.asarray(minus)
        if plus.shape != minus.shape:
            raise ValueError("pair configurations live on different graphs")
        return cls(region, plus != minus, plus, minus)

    @property
    def sites(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def components(self) -> list[np.ndarray]:
        order = np.argsort(self.component_id, kind="stable")
        ids = self.component_id[order]
        start = np.searchsorted(ids, 0)
        cuts = np.flatnonzero(np.diff(ids[start:])) + 1
        return [np.sort(c) for c in np.split(order[start:], cuts)] if self.n_components else []

    @cached_property
    def _csr(self):
        a = self.ext.adjacency
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    def distances(self, seeds, active: np.ndarray | None = None) -> np.ndarray:
        """BFS distances through ``active`` (default: D) from the seeds in it."""
        active = self.mask if active is None else active
        indptr, indices = self._csr
        return bfs_distances(active, indptr, indices, _sites(seeds))


def disagreement_set(pair: PairSample) -> DisagreementGeometry:
    return DisagreementGeometry.from_pair(pair)


def cluster_mask(geom: DisagreementGeometry, S) -> np.ndarray:
    S = _sites(S)
    ids = geom.component_id[S]
    ids = ids[ids >= 0]
    return np.isin(geom.component_id, ids) & geom.mask if len(ids) else np.zeros_like(geom.mask)


def cluster_of(geom: DisagreementGeometry, S) -> np.ndarray:
    """Sites of the components of D meeting ``S``."""
    return np.flatnonzero(cluster_mask(geom, S))


def connected(geom: DisagreementGeometry, A, B) -> bool:
    ia = geom.component_id[_sites(A)]
    ib = geom.component_id[_sites(B)]
    return bool(np.intersect1d(ia[ia >= 0], ib[ib >= 0]).size)


def sign_coherent(geom: DisagreementGeometry) -> bool:
    """Whether every component has plus > minus throughout or plus < minus throughout."""
    if geom.plus is None:
        raise ValueError("geometry carries no configuration values")
    up = (geom.plus > geom.minus)[geom.mask]
    ids = geom.component_id[geom.mask]
    if not len(ids):
        return True
    frac = np.bincount(ids, weights=up, minlength=geom.n_components)
    cnt = np.bincount(ids, minlength=geom.n_components)
    return bool(np.all((frac == 0) | (frac == cnt)))


def order_parameter_event(pair: PairSample, L: int | None = None, center=(0, 0)) -> bool:
    """Whether the center joins the internal boundary of the pair's region in D.

    ``L`` is informational; the boundary is that of the sampled region, which
    for the order parameter is the box of radius ``L``.
    """
    geom = DisagreementGeometry.from_pair(pair)
    r = pair.region
    return connected(geom, [r.index(center)], boundary_indices(r))


# -- annuli ------------------------------------------------------------------


def _layer(region: Region, center) -> np.ndarray:
    return region.distances_from(center)


def extended_annulus_mask(region: Region, center, l1: int, l2: int) -> np.ndarray:
    """Vertices with ``l1 < d <= l2`` and the mid-edges of edges inside them."""
    d = _layer(region, center)
    vin = (d > l1) & (d <= l2)
    e = region.edges
    return np.concatenate([vin, vin[e[:, 0]] & vin[e[:, 1]]])


@dataclass(frozen=True)
class CrossingReport:
    crossed: bool
    shortest_length: int | None = None

    def __post_init__(self):
        if self.crossed != (self.shortest_length is not None):
            raise ValueError("shortest_length must be given exactly when crossed")


def annulus_crossing(geom: DisagreementGeometry, center, l1: int, l2: int) -> CrossingReport:
    """Shortest D-path inside the extended annulus from layer ``l1 + 1`` to
    layer ``l2``, in extended steps."""
    r = geom.region
    d = _layer(r, center)
    if not np.any(d == l2) or not np.any(d == l1 + 1):
        raise ValueError("annulus not contained in the region")
    active = geom.mask & extended_annulus_mask(r, center, l1, l2)
    dist = geom.distances(np.flatnonzero(d == l1 + 1), active)
    ends = dist[np.flatnonzero(d == l2)]
    ends = ends[ends >= 0]
    if not len(ends):
        return CrossingReport(False)
    return CrossingReport(True, int(ends.min()))


def designated_cluster(geom: DisagreementGeometry, boundary_component_only: bool) -> np.ndarray:
    if boundary_component_only:
        return cluster_mask(geom, boundary_indices(geom.region))
    return geom.mask.copy()


def lasso_present(
    geom: DisagreementGeometry, center, l1: int, l2: int, boundary_component_only: bool = True
) -> bool:
    """Whether the designated cluster holds a circuit in the annulus around the hole.

    A lattice edge is *closed* when both endpoints and its mid-edge lie in the
    cluster and in the annulus. A surrounding circuit of closed edges exists iff
    the plaquettes at the center cannot reach the outside through open edges.
    """
    r = geom.region
    H = designated_cluster(geom, boundary_component_only) & extended_annulus_mask(r, center, l1, l2)
    n = r.n_vertices
    cx, cy = int(center[0]), int(center[1])
    closed = set()
    for k, (u, v) in enumerate(r.edges):
        if H[u] and H[v] and H[n + k]:
            a, b = r.vertices[u], r.vertices[v]
            closed.add((a.x - cx, a.y - cy, b.x - cx, b.y - cy))
    if not closed:
        return False
    R = l2 + 1  # plaquettes with lower-left corner in [-R, R - 1]^2

    def blocked(x0, y0, x1, y1) -> bool:
        return (x0, y0, x1, y1) in closed

    start = [(-1, -1), (-1, 0), (0, -1), (0, 0)]
    seen = set(start)
    stack = list(start)
    while stack:
        i, j = stack.pop()
        if i in (-R, R - 1) or j in (-R, R - 1):
            return False
        # neighbours across the four sides of plaquette [i, i+1] x [j, j+1]
        for di, dj, edge in (
            (1, 0, (i + 1, j, i + 1, j + 1)),
            (-1, 0, (i, j, i, j + 1)),
            (0, 1, (i, j + 1, i + 1, j + 1)),
            (0, -1, (i, j, i + 1, j)),
        ):
            nb = (i + di, j + dj)
            if nb not in seen and not blocked(*edge):
                seen.add(nb)
                stack.append(nb)
    return True


# -- rectangles --------------------------------------------------------------


def rectangle_sides(region: Region, rect: Rectangle) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extended-site mask of the rasterized rectangle and its two short sides."""
    pts = rect.raster()
    if not pts or not all(p in region for p in pts):
        raise ValueError("rectangle not contained in the region")
    vin = np.zeros(region.n_vertices, dtype=bool)
    idx = region.indices(pts)
    vin[idx] = True
    e = region.edges
    mask = np.concatenate([vin, vin[e[:, 0]] & vin[e[:, 1]]])
    ax = rect.long_axis
    coord = region.coords[idx, ax]
    lo = idx[coord == coord.min()]
    hi = idx[coord == coord.max()]
    return mask, lo, hi


def rectangle_crossing(
    geom: DisagreementGeometry, rect: Rectangle, boundary_component_only: bool = True
) -> bool:
    """Whether the designated cluster joins the two short sides of ``rect`` inside it."""
    mask, lo, hi = rectangle_sides(geom.region, rect)
    active = designated_cluster(geom, boundary_component_only) & mask
    dist = geom.distances(lo, active)
    return bool(np.any(dist[hi] >= 0))


# -- non-anticipatory exploration ------------------------------------------------


@dataclass
class Exploration:
    counts: np.ndarray  # |S_n & D|, n = 1..N
    sets: list[np.ndarray]  # S_n as boolean masks (up to saturation)
    backward: list[np.ndarray]


def _closure_mask(region: Region, d: np.ndarray, radius: int) -> np.ndarray:
    vin = d <= radius
    e = region.edges
    return np.concatenate([vin, vin[e[:, 0]] & vin[e[:, 1]]])


def exploration_annulus_mask(region: Region, center, k: int, outer_l: int) -> np.ndarray:
    """Vertices with ``k < d <= outer_l`` and the mid-edges of edges inside the
    closed ball that are not inside the ball of radius ``k``."""
    d = _layer(region, center)
    e = region.edges
    vin = (d > k) & (d <= outer_l)
    ball = d <= outer_l
    small = d <= k
    mid = ball[e[:, 0]] & ball[e[:, 1]] & ~(small[e[:, 0]] & small[e[:, 1]])
    return np.concatenate([vin, mid])


def explore_nonanticipatory(
    geom: DisagreementGeometry,
    center,
    k: int,
    outer_l: int,
    inner_l: int = 0,
    *,
    check: bool = True,
    return_sets: bool = False,
):
    """Sizes ``|S_n & D|`` of the exploration sets, ``n = 1..N`` with ``N`` the
    number of sites of the exploration annulus.

    ``B_n`` holds the sites of the boundary-attached cluster within the annulus
    at cluster distance at most ``2n - 1`` from the outer boundary; ``S_n`` is
    its outer vertex boundary inside the closed ball. With ``check`` the
    backward sets are verified to be nested and every mid-edge of ``S_n`` is
    verified to be zero in both copies.
    """
    r = geom.region
    d = _layer(r, center)
    if not 0 <= inner_l <= k < outer_l or not np.any(d == outer_l):
        raise ValueError("exploration annulus not contained in the region")
    n_v = r.n_vertices
    closure = _closure_mask(r, d, outer_l)
    ann = exploration_annulus_mask(r, center, k, outer_l)
    N = int(ann.sum())
    dist = geom.distances(np.flatnonzero(d == outer_l), geom.mask & ann)
    dmax = int(dist.max()) if np.any(dist >= 0) else -1
    n_sat = max(1, (dmax + 2) // 2)  # B_n stops growing once 2n - 1 >= dmax

    A = geom.ext.adjacency
    inner_seeds = np.flatnonzero(d == inner_l)
    counts = np.zeros(N, dtype=np.int64)
    sets, backs = [], []
    prev_back = None
    for n in range(1, min(n_sat, N) + 1):
        ball = (dist >= 0) & (dist <= 2 * n - 1)
        S = (A @ ball.astype(np.int8) > 0) & ~ball & closure
        counts[n - 1] = int(np.count_nonzero(S & geom.mask))
        if check:
            if geom.plus is not None:
                mids = np.flatnonzero(S[n_v:]) + n_v
                if np.any(geom.plus[mids] != 0) or np.any(geom.minus[mids] != 0):
                    raise InvariantViolation(f"mid-edge of S_{n} is not zero in both copies")
            fwd = geom.distances(inner_seeds, closure & ~S) >= 0
            back = closure & ~fwd
            if prev_back is not None and np.any(prev_back & ~back):
                raise InvariantViolation(f"backward sets not nested at n = {n}")
            prev_back = back
            backs.append(back)
        sets.append(S)
    if N > n_sat:
        counts[n_sat:] = counts[n_sat - 1]
    if return_sets:
        return Exploration(counts, sets, backs)
    return counts


# -- Monte Carlo disagreement counts -----------------------------------------------


@dataclass(frozen=True)
class DisagreementEstimate:
    mean: float
    stderr: float
    second_moment: float
    n: int


def cluster_count(pair: PairSample, inner: Region) -> int:
    """``|inner & C|`` with ``C`` the D-cluster of the pair region's boundary."""
    geom = DisagreementGeometry.from_pair(pair)
    r = pair.region
    cl = cluster_mask(geom, boundary_indices(r))
    return int(cl[r.indices(inner.vertices)].sum())


def disagreement_count_mc(pairs: Iterable[PairSample], inner: Region, outer: Region | None = None
                          ) -> DisagreementEstimate:
    """Mean, standard error and second moment of ``|inner & C_{boundary}|``."""
    vals = []
    for pr in pairs:
        if outer is not None and pr.region != outer:
            raise ValueError("pair not sampled on the outer region")
        vals.append(cluster_count(pr, inner))
    x = np.asarray(vals, dtype=float)
    if not len(x):
        warnings.warn("no pairs supplied", RuntimeWarning, stacklevel=2)
        return DisagreementEstimate(float("nan"), float("nan"), float("nan"), 0)
    se = float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("nan")
    return DisagreementEstimate(float(x.mean()), se, float((x**2).mean()), len(x))


def vertex_of(region: Region, site: int) -> Vertex | tuple[Vertex, Vertex]:
    """Human-readable name of a site: a vertex or the endpoints of a mid-edge."""
    n = region.n_vertices
    if site < n:
        return region.vertices[site]
    u, v = region.edges[site - n]
    return region.vertices[u], region.vertices[v]


# -- synthetic geometries -----------------------------------------------------------


def path_geometry(region: Region, path: Sequence) -> DisagreementGeometry:
    """Geometry whose disagreement set is exactly a lattice path: its vertices and
    the mid-edges between consecutive vertices."""
    mask = np.zeros(region.n_vertices + region.n_edges, dtype=bool)
    for a, b in zip(path[:-1], path[1:]):
        mask[region.midedge_site(a, b)] = True
    mask[region.indices(path)] = True
    return DisagreementGeometry(region, mask)


def comb_path(l: int, n_edges: int) -> list[Vertex]:
    """Self-avoiding path in the quadrant ``x, y >= 0`` from ``(l + 1, 0)`` to
    ``(2l, 0)`` with ``n_edges`` edges, staying at distance ``< 2l`` before the
    end. ``n_edges - (l - 1)`` must be even and nonnegative.

    The path climbs on one column and descends on the next; the climbs are
    allocated from the inside out.
    """
    extra = n_edges - (l - 1)
    if extra < 0 or extra % 2:
        raise ValueError("n_edges - (l - 1) must be even and nonnegative")
    left = extra // 2
    heights = {}
    for x in range(l + 1, 2 * l - 1, 2):
        h = min(left, 2 * l - 2 - x)
        if h > 0:
            heights[x] = h
            left -= h
    if left:
        raise ValueError("path does not fit in the annulus")
    path = [Vertex(l + 1, 0)]
    x, y = l + 1, 0
    while True:
        target = heights.get(x, 0) if y == 0 else 0
        step = 1 if target > y else -1
        while y != target:
            y += step
            path.append(Vertex(x, y))
        if x == 2 * l:
            break
        x += 1
        path.append(Vertex(x, y))
    return path


def quadrant_region(radius: int) -> Region:
    return Region([(x, y) for x in range(radius + 1) for y in range(radius + 1 - x)])
