"""Finite regions of the square lattice and their extended (mid-edge) graphs.

Vertices are integer points of Z^2. A :class:`Region` is a finite vertex set
together with its induced nearest-neighbour edges. The extended graph adds one
site at the midpoint of every edge; sites are numbered so that vertex ``i`` is
site ``i`` and the mid-edge of edge ``k`` is site ``n_vertices + k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class Vertex(NamedTuple):
    x: int
    y: int


def _as_vertex(v) -> Vertex:
    return Vertex(int(v[0]), int(v[1]))


def l1_distance(u, v) -> int:
    return abs(u[0] - v[0]) + abs(u[1] - v[1])


class Region:
    """A finite set of lattice vertices with its induced edge set.

    Vertices are kept in lexicographic ``(x, y)`` order; every index-based
    array in the package refers to this order.

    Parameters
    ----------
    vertices : iterable of (x, y)
    description : dict, optional
        JSON description used for serialization (see :func:`region_to_json`).
    """

    def __init__(self, vertices: Iterable, description: dict | None = None):
        verts = sorted({_as_vertex(v) for v in vertices})
        self._vertices: tuple[Vertex, ...] = tuple(verts)
        self._index = {v: i for i, v in enumerate(verts)}
        self.description = description or {
            "kind": "explicit",
            "vertices": [list(v) for v in verts],
        }

        edges = []
        for i, (x, y) in enumerate(verts):
            for dx, dy in ((1, 0), (0, 1)):
                j = self._index.get((x + dx, y + dy))
                if j is not None:
                    edges.append((i, j) if i < j else (j, i))
        edges.sort()
        self._edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self._edges.flags.writeable = False

    # -- basic accessors -------------------------------------------------

    @property
    def vertices(self) -> tuple[Vertex, ...]:
        return self._vertices

    @property
    def edges(self) -> np.ndarray:
        """(m, 2) array of vertex indices, ``i < j``, sorted."""
        return self._edges

    @property
    def n_vertices(self) -> int:
        return len(self._vertices)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def __len__(self) -> int:
        return len(self._vertices)

    def __contains__(self, v) -> bool:
        return _as_vertex(v) in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Region) and self._vertices == other._vertices

    def __hash__(self) -> int:
        return hash(self._vertices)

    def __repr__(self) -> str:
        kind = self.description.get("kind", "explicit")
        return f"Region({kind}, n_vertices={self.n_vertices}, n_edges={self.n_edges})"

    def index(self, v) -> int:
        """Index of vertex ``v``; raises ``KeyError`` if absent."""
        return self._index[_as_vertex(v)]

    def indices(self, vertices: Iterable) -> np.ndarray:
        return np.array(sorted(self.index(v) for v in vertices), dtype=np.int64)

    @cached_property
    def coords(self) -> np.ndarray:
        arr = np.array(self._vertices, dtype=np.int64).reshape(-1, 2)
        arr.flags.writeable = False
        return arr

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR neighbour structure ``(indptr, indices)`` on vertex indices."""
        n = self.n_vertices
        e = self._edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sort_indices()
        return adj.indptr.astype(np.int64), adj.indices.astype(np.int64)

    @cached_property
    def degree(self) -> np.ndarray:
        indptr, _ = self.neighbors
        return np.diff(indptr)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self._edges)}

    def edge_id(self, u, v) -> int:
        """Edge number of the lattice edge between vertices ``u`` and ``v``."""
        i, j = self.index(u), self.index(v)
        return self.edge_index[(min(i, j), max(i, j))]

    def midedge_site(self, u, v) -> int:
        return self.n_vertices + self.edge_id(u, v)

    def distances_from(self, center) -> np.ndarray:
        """Graph (l1) distance of every vertex from ``center``."""
        c = _as_vertex(center)
        return np.abs(self.coords[:, 0] - c.x) + np.abs(self.coords[:, 1] - c.y)

    @cached_property
    def extended(self) -> ExtendedGraph:
        return extend(self)


@dataclass(frozen=True, eq=False)
class ExtendedGraph:
    """Vertices plus one mid-edge site per edge; ``{v, e}`` adjacent iff v in e."""

    region: Region
    adjacency: sp.csr_matrix

    @property
    def n_sites(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.region.n_vertices

    def is_midedge(self, site: int) -> bool:
        return site >= self.region.n_vertices

    def endpoints(self, site: int) -> tuple[int, int]:
        i, j = self.region.edges[site - self.region.n_vertices]
        return int(i), int(j)

    @cached_property
    def positions2(self) -> np.ndarray:
        """Doubled planar coordinates; vertices at (2x, 2y), mid-edges in between."""
        c = self.region.coords
        e = self.region.edges
        mids = c[e[:, 0]] + c[e[:, 1]] if len(e) else np.zeros((0, 2), dtype=np.int64)
        return np.vstack([2 * c, mids]).astype(np.int64)

    def neighbors(self, site: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[site]:a.indptr[site + 1]]


def extend(r: Region) -> ExtendedGraph:
    n, m = r.n_vertices, r.n_edges
    mid = n + np.arange(m)
    e = r.edges
    rows = np.concatenate([e[:, 0], mid, e[:, 1], mid])
    cols = np.concatenate([mid, e[:, 0], mid, e[:, 1]])
    adj = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n + m, n + m)
    )
    adj.sort_indices()
    return ExtendedGraph(r, adj)


# -- constructors ----------------------------------------------------------


def box(center=(0, 0), L: int = 0) -> Region:
    """The l1 ball ``{v : d(center, v) <= L}``."""
    if L < 0:
        raise ValueError(f"box radius must be nonnegative, got {L}")
    c = _as_vertex(center)
    verts = [
        (c.x + dx, c.y + dy)
        for dx in range(-L, L + 1)
        for dy in range(-(L - abs(dx)), L - abs(dx) + 1)
    ]
    return Region(verts, {"kind": "box", "center": list(c), "L": int(L)})


def annulus(center=(0, 0), l1: int = 0, l2: int = 1) -> Region:
    """Vertices with ``l1 < d(center, v) <= l2``, induced edges."""
    if not 0 <= l1 < l2:
        raise ValueError(f"annulus needs 0 <= l1 < l2, got l1={l1}, l2={l2}")
    c = _as_vertex(center)
    verts = [
        (c.x + dx, c.y + dy)
        for dx in range(-l2, l2 + 1)
        for dy in range(-(l2 - abs(dx)), l2 - abs(dx) + 1)
        if abs(dx) + abs(dy) > l1
    ]
    return Region(verts, {"kind": "annulus", "center": list(c), "l1": int(l1), "l2": int(l2)})


def internal_boundary(r: Region, ambient: Region | None = None) -> frozenset[Vertex]:
    """Vertices of ``r`` with a lattice neighbour outside ``r``.

    With ``ambient=None`` all four lattice neighbours count; otherwise only
    neighbours lying in ``ambient``.
    """
    out = set()
    for v in r.vertices:
        for dx, dy in _STEPS:
            w = (v.x + dx, v.y + dy)
            if w in r:
                continue
            if ambient is None or w in ambient:
                out.add(v)
                break
    return frozenset(out)


def boundary_indices(r: Region, ambient: Region | None = None) -> np.ndarray:
    return r.indices(internal_boundary(r, ambient))


def union(*regions: Region) -> Region:
    return Region([v for r in regions for v in r.vertices])


# -- rectangles --------------------------------------------------------------


def _half_up(v: float) -> float:
    # smallest half-integer >= v
    return math.ceil(v - 0.5) + 0.5


def _half_down(v: float) -> float:
    # largest half-integer <= v
    return math.floor(v + 0.5) - 0.5


@dataclass(frozen=True)
class Rectangle:
    """Axis-parallel real rectangle ``[x0, x1] x [y0, y1]``.

    Rasterization keeps the lattice points whose unit cell lies inside the
    rectangle, i.e. corners are rounded inward to half-integers.
    """

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("degenerate rectangle")

    @property
    def long_axis(self) -> int:
        """0 if the x side is at least as long as the y side, else 1."""
        return 0 if (self.x1 - self.x0) >= (self.y1 - self.y0) else 1

    def raster(self) -> list[Vertex]:
        xa, xb = _half_up(self.x0), _half_down(self.x1)
        ya, yb = _half_up(self.y0), _half_down(self.y1)
        xs = range(int(xa + 0.5), int(xb - 0.5) + 1)
        ys = range(int(ya + 0.5), int(yb - 0.5) + 1)
        return [Vertex(x, y) for x in xs for y in ys]

    def rotated(self, pivot, quarter_turns: int) -> Rectangle:
        """Rotation by ``quarter_turns * pi/2`` about a lattice point."""
        px, py = pivot
        pts = [(self.x0, self.y0), (self.x1, self.y1)]
        for _ in range(quarter_turns % 4):
            pts = [(px - (y - py), py + (x - px)) for x, y in pts]
        (a, b), (c, d) = pts
        return Rectangle(min(a, c), min(b, d), max(a, c), max(b, d))


def rectangle(x0: float, y0: float, x1: float, y1: float) -> Region:
    rect = Rectangle(x0, y0, x1, y1)
    return Region(
        rect.raster(), {"kind": "rectangle", "x0": x0, "y0": y0, "x1": x1, "y1": y1}
    )


def rotated_family(rect: Rectangle, pivot) -> list[Rectangle]:
    """The four pi/2 rotations of ``rect`` about ``pivot`` (measurement batches)."""
    return [rect.rotated(pivot, j) for j in range(4)]


# -- serialization ---------------------------------------------------------


def region_to_json(r: Region) -> dict:
    return dict(r.description)


def region_from_json(d: dict) -> Region:
    kind = d.get("kind")
    if kind == "box":
        return box(tuple(d.get("center", (0, 0))), int(d["L"]))
    if kind == "annulus":
        return annulus(tuple(d.get("center", (0, 0))), int(d["l1"]), int(d["l2"]))
    if kind == "rectangle":
        return rectangle(d["x0"], d["y0"], d["x1"], d["y1"])
    if kind == "explicit":
        return Region([tuple(v) for v in d["vertices"]])
    raise ValueError(f"unknown region kind {kind!r}")
