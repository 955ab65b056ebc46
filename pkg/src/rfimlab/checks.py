"""Randomized exact-identity checks on small instances.

Each ``check_*`` function draws its instances from a :class:`RandomSource`
and returns a :class:`VerificationReport`. The ``verify`` command and the
acceptance tests both run these.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .analysis import QuadratureSpec, surface_tension_integral
from .disagreement import DisagreementGeometry, InvariantViolation, explore_nonanticipatory
from .exact import (
    Enumerator,
    boundary_non_connection_probability,
    extended_partition_function,
    one_point_means,
    pair_law,
    partition_function,
    swap_pushforward_discrepancy,
    swap_values,
    surface_tension_exact,
    truncated_correlation,
    two_boundary_spec,
    vertex_marginal_tv,
)
from .lattice import Region, box, boundary_indices
from .model import BoundarySpec, CouplingParams, FieldRealization, hard_constraint_violations
from .rng import RandomSource, as_source
from .sampler import gaussian_field, sample_pair


@dataclass
class VerificationReport:
    identity: str
    instances: int
    max_abs_error: float
    max_rel_error: float
    passed: bool
    tolerance: float = float("nan")
    note: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


class _Acc:
    def __init__(self, identity: str, tol: float):
        self.identity, self.tol = identity, tol
        self.n, self.abs, self.rel = 0, 0.0, 0.0

    def add(self, value: float, reference: float) -> None:
        err = float(abs(value - reference))
        self.n += 1
        self.abs = max(self.abs, err)
        self.rel = max(self.rel, err / abs(reference) if reference != 0 else (0.0 if err == 0 else math.inf))

    def add_error(self, err: float) -> None:
        err = float(err)
        self.n += 1
        self.abs = max(self.abs, err)
        self.rel = max(self.rel, err)

    def report(self, passed: bool | None = None, note: str = "") -> VerificationReport:
        ok = (self.abs <= self.tol) if passed is None else passed
        if self.n == 0:
            note = note or "no instances: vacuous pass"
        return VerificationReport(self.identity, self.n, self.abs, self.rel, bool(ok), self.tol, note)


# -- instance generators ---------------------------------------------------------


def random_region(gen: np.random.Generator, n_vertices: int) -> Region:
    """Connected lattice animal grown from the origin."""
    verts = {(0, 0)}
    while len(verts) < n_vertices:
        frontier = sorted(
            {(x + dx, y + dy) for x, y in verts for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))} - verts
        )
        verts.add(frontier[gen.integers(len(frontier))])
    return Region(verts)


def random_params(gen: np.random.Generator) -> CouplingParams:
    return CouplingParams(
        beta=float(gen.uniform(0.2, 3.0)),
        J=float(gen.choice([0.5, 1.0, 2.0])),
        h=float(gen.uniform(-1.0, 1.0)),
        eps=float(gen.uniform(0.0, 3.0)),
    )


def random_vertex_bc(gen: np.random.Generator, region: Region, max_fixed: int | None = None) -> BoundarySpec:
    n = region.n_vertices
    k = int(gen.integers(0, (max_fixed if max_fixed is not None else n) + 1))
    idx = gen.choice(n, size=min(k, n), replace=False)
    return BoundarySpec(idx, gen.choice([-1, 1], size=len(idx)).astype(np.int8))


def random_extended_pair(gen: np.random.Generator, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Two random site-value arrays obeying the hard constraints."""
    out = []
    e = region.edges
    for _ in range(2):
        s = gen.choice(np.array([-1, 1], dtype=np.int8), size=region.n_vertices)
        agree = s[e[:, 0]] == s[e[:, 1]]
        k = np.where(agree & (gen.random(len(e)) < 0.5), s[e[:, 0]], 0).astype(np.int8)
        out.append(np.concatenate([s, k]))
    return out[0], out[1]


# -- the checks -------------------------------------------------------------------


def check_extended_equivalence(rng, instances: int = 200, max_vertices: int = 10, tol: float = 1e-10):
    """Extended and plain partition functions agree, as do the spin marginals,
    and pinning one mid-edge to 0 deletes its edge up to ``exp(-beta J)``."""
    src = as_source(rng)
    z_acc = _Acc("extended-partition-function", tol)
    tv_acc = _Acc("vertex-marginal", tol)
    del_acc = _Acc("midedge-zero-deletes-edge", tol)
    for i in range(instances):
        g = src.child("equivalence", i).generator()
        r = random_region(g, int(g.integers(1, max_vertices + 1)))
        p = random_params(g)
        f = FieldRealization(r, g.standard_normal(r.n_vertices))
        bc = random_vertex_bc(g, r, max_fixed=r.n_vertices // 2)
        lz = partition_function(r, p, f, bc)
        lzb = extended_partition_function(r, p, f, bc)
        z_acc.add_error(abs(math.expm1(lzb - lz)))
        tv_acc.add_error(vertex_marginal_tv(r, p, f, bc))
        if r.n_edges:
            e = int(g.integers(r.n_edges))
            pinned = bc.merged(BoundarySpec([r.n_vertices + e], [0]))
            lz0 = extended_partition_function(r, p, f, pinned)
            keep = [k for k in range(r.n_edges) if k != e]
            lcut = _log_z_without_edges(r, p, f, bc, keep)
            del_acc.add_error(abs(math.expm1(lz0 - (lcut - p.x))))
    return [z_acc.report(), tv_acc.report(), del_acc.report()]


def _log_z_without_edges(r, p, f, bc, keep):
    """Plain log partition function with only the edges in ``keep``."""
    enum = Enumerator(r, p, bc)
    lf = f.local_fields(p)
    e = r.edges[keep]
    parts = []
    for sig in enum.blocks():
        s = sig.astype(float)
        lw = p.beta * (p.J * (s[:, e[:, 0]] * s[:, e[:, 1]]).sum(axis=1) + s @ lf)
        parts.append(logsumexp(lw))
    return float(logsumexp(parts))


def check_disagreement_representation(rng, instances: int = 50, max_vertices: int = 6, tol: float = 1e-9):
    """Truncated correlations and boundary-driven mean differences equal
    disagreement-connection probabilities."""
    src = as_source(rng)
    a1 = _Acc("truncated-correlation-connection", tol)
    a2 = _Acc("mean-difference-connection", tol)
    for i in range(instances):
        g = src.child("representation", i).generator()
        r = random_region(g, int(g.integers(2, max_vertices + 1)))
        p = random_params(g)
        f = FieldRealization(r, g.standard_normal(r.n_vertices))
        n = r.n_vertices
        # identical copies
        bc = random_vertex_bc(g, r, max_fixed=n // 2)
        u, v = (int(x) for x in g.integers(0, n, size=2))
        tc = truncated_correlation(r.vertices[u], r.vertices[v], r, p, f, bc)
        pc = pair_law(r, p, f, bc, bc).connection_probability([u], [v])
        a1.add(2 * pc, tc)
        # + versus - on a set A
        k = int(g.integers(1, n))
        A = np.sort(g.choice(n, size=k, replace=False))
        free = np.setdiff1d(np.arange(n), A)
        u = int(g.choice(free))
        bp = BoundarySpec(A, np.ones(k, dtype=np.int8))
        bm = BoundarySpec(A, -np.ones(k, dtype=np.int8))
        mp = one_point_means(r, p, f, bp)[u]
        mm = one_point_means(r, p, f, bm)[u]
        pa = pair_law(r, p, f, bp, bm).connection_probability([u], A)
        a2.add(pa, 0.5 * (mp - mm))
    return [a1.report(), a2.report()]


def check_swap(rng, instances: int = 20, fuzz: int = 10_000, tol: float = 1e-12):
    """Exact invariance of the pair measure under the cluster swap, and the
    swap being an involution that keeps the hard constraints."""
    src = as_source(rng)
    acc = _Acc("swap-pushforward", tol)
    for i in range(instances):
        g = src.child("swap", i).generator()
        r = random_region(g, int(g.integers(2, 5)))
        p = random_params(g)
        f = FieldRealization(r, g.standard_normal(r.n_vertices))
        n_sites = r.n_vertices + r.n_edges
        k = int(g.integers(1, r.n_vertices))
        A = np.sort(g.choice(r.n_vertices, size=k, replace=False))
        if g.random() < 0.5:
            bc_a = BoundarySpec(A, np.ones(k, dtype=np.int8))
            bc_b = BoundarySpec(A, -np.ones(k, dtype=np.int8))
        else:
            bc_a = bc_b = BoundarySpec(A, g.choice([-1, 1], size=k).astype(np.int8))
        S = g.choice(n_sites, size=int(g.integers(1, 3)), replace=False)
        acc.add_error(swap_pushforward_discrepancy(r, p, f, bc_a, bc_b, S, A))
    inv = _Acc("swap-involution", 0.0)
    bad = 0
    for i in range(fuzz):
        g = src.child("swap-fuzz", i).generator()
        r = random_region(g, int(g.integers(1, 9)))
        va, vb = random_extended_pair(g, r)
        n_sites = len(va)
        S = g.choice(n_sites, size=int(g.integers(1, 4)), replace=True)
        A = g.choice(n_sites, size=int(g.integers(0, 3)), replace=True)
        wa, wb = swap_values(va, vb, S, A, r)
        xa, xb = swap_values(wa, wb, S, A, r)
        n = r.n_vertices
        broken = not (np.array_equal(xa, va) and np.array_equal(xb, vb))
        broken |= hard_constraint_violations(wa[:n], wa[n:], r) > 0
        broken |= hard_constraint_violations(wb[:n], wb[n:], r) > 0
        bad += int(broken)
        inv.add_error(float(broken))
    return [acc.report(), inv.report(passed=bad == 0, note=f"{bad} violations")]


def nested_instances(src: RandomSource, instances: int):
    """Pairs (inner, outer, params, field) with disjoint boundaries."""
    for i in range(instances):
        g = src.child("nested", i).generator()
        inner = box((0, 0), 0)
        outer = box((0, 0), 2)
        if i % 3 == 1:
            # grow the outer region by a few distance-3 vertices
            extra = [v for v in box((0, 0), 3).vertices if abs(v.x) + abs(v.y) == 3]
            pick = g.choice(len(extra), size=int(g.integers(1, 4)), replace=False)
            outer = Region(list(outer.vertices) + [extra[j] for j in pick])
        p = random_params(g)
        f = FieldRealization(outer, g.standard_normal(outer.n_vertices))
        yield inner, outer, p, f


def check_partition_ratio(rng, instances: int = 30, tol: float = 1e-9):
    """``exp(-beta T)`` equals the probability that the two boundaries are not
    joined in D under (+,+) x (-,-)."""
    src = as_source(rng)
    acc = _Acc("partition-ratio-non-connection", tol)
    for inner, outer, p, f in nested_instances(src, instances):
        T = surface_tension_exact(inner, outer, p, f)
        pn = boundary_non_connection_probability(inner, outer, p, f)
        acc.add(pn, math.exp(-p.beta * T))
    return [acc.report()]


def check_integral_form(rng, instances: int = 10, tol: float = 1e-4, q: QuadratureSpec | None = None):
    """The surface tension equals the tilt integral of the disagreement count."""
    src = as_source(rng)
    acc = _Acc("surface-tension-integral", tol)
    inner, outer = box((0, 0), 0), box((0, 0), 2)
    for i in range(instances):
        g = src.child("integral", i).generator()
        p = CouplingParams(float(g.uniform(0.5, 2.0)), float(g.choice([0.5, 1.0, 2.0])),
                           float(g.uniform(-1, 1)), float(g.uniform(0.5, 3.0)))
        f = FieldRealization(outer, g.standard_normal(outer.n_vertices))
        acc.add(surface_tension_integral(inner, outer, p, f, q).value, surface_tension_exact(inner, outer, p, f))
    return [acc.report()]


def separating_sets_small():
    """Mixed separating sets between the center of box(0,2) and its boundary.

    For each distance-1 vertex pick the vertex itself, the mid-edge joining it
    to the center, or all mid-edges joining it to distance-2 vertices.
    """
    outer = box((0, 0), 2)
    c = (0, 0)
    ring = [v for v in outer.vertices if abs(v.x) + abs(v.y) == 1]
    options = []
    for r in ring:
        outs = [w for w in outer.vertices if abs(w.x) + abs(w.y) == 2 and abs(w.x - r.x) + abs(w.y - r.y) == 1]
        options.append([
            ("v", [outer.index(r)]),
            ("m", [outer.midedge_site(c, r)]),
            ("m", [outer.midedge_site(r, w) for w in outs]),
        ])
    for combo in itertools.product(*options):
        verts = sorted(s for kind, sites in combo if kind == "v" for s in sites)
        mids = sorted(s for kind, sites in combo if kind == "m" for s in sites)
        yield verts, mids


def prop44_slack(inner, outer, p, f, vertex_sites, midedge_sites) -> float:
    """``16 J <|S & D|> - T`` with the mid-edges of ``S`` pinned to 0 in both copies."""
    extra = BoundarySpec(midedge_sites, np.zeros(len(midedge_sites), dtype=np.int8)) if midedge_sites else None
    T = surface_tension_exact(inner, outer, p, f, extra_bc=extra)
    if extra is None:
        # vertex-only sets: the count only needs one-point means
        mp = one_point_means(outer, p, f, two_boundary_spec(inner, outer, 1, 1))
        mm = one_point_means(outer, p, f, two_boundary_spec(inner, outer, -1, -1))
        idx = np.asarray(vertex_sites, dtype=np.int64)
        count = float(0.5 * (1 - mp[idx] * mm[idx]).sum())
    else:
        bp = two_boundary_spec(inner, outer, 1, 1).merged(extra)
        bm = two_boundary_spec(inner, outer, -1, -1).merged(extra)
        count = pair_law(outer, p, f, bp, bm).expected_disagreement(list(vertex_sites) + list(midedge_sites))
    return 16 * p.J * count - T


def check_nonanticipatory_bound(rng, instances: int = 30, tol: float = 1e-9):
    """``T <= 16 J <|S & D|>`` for deterministic separating sets."""
    src = as_source(rng)
    acc = _Acc("nonanticipatory-bound", tol)
    sets = list(separating_sets_small())
    worst = math.inf
    inner0, outer0 = box((0, 0), 0), box((0, 0), 2)
    inner1, outer1 = box((0, 0), 1), box((0, 0), 3)
    ring2 = [outer1.index(v) for v in outer1.vertices if abs(v.x) + abs(v.y) == 2]
    for i in range(instances):
        g = src.child("prop44", i).generator()
        p = random_params(g)
        if i % 5 == 4:
            f = FieldRealization(outer1, g.standard_normal(outer1.n_vertices))
            slack = prop44_slack(inner1, outer1, p, f, ring2, [])
        else:
            f = FieldRealization(outer0, g.standard_normal(outer0.n_vertices))
            verts, mids = sets[int(g.integers(len(sets)))]
            slack = prop44_slack(inner0, outer0, p, f, verts, mids)
        worst = min(worst, slack)
        acc.add_error(max(0.0, -slack))
    return [acc.report(passed=acc.n == 0 or worst >= -tol, note=f"min slack {worst:.6g}")]


def check_exploration(rng, pairs: int = 1000, L: int = 5, params: CouplingParams | None = None):
    """Nesting of the backward sets and zero mid-edges on the exploration sets,
    on sampled pairs."""
    src = as_source(rng)
    p = params or CouplingParams(1.0, 1.0, 0.0, 2.0)
    r = box((0, 0), L)
    bnd = boundary_indices(r)
    bad = 0
    for i in range(pairs):
        f = gaussian_field(r, src.child("exploration", i, "field"))
        pr = sample_pair(r, p, f, bnd, "cftp", src.child("exploration", i))
        geom = DisagreementGeometry.from_pair(pr)
        for k in range(1, L):
            try:
                explore_nonanticipatory(geom, (0, 0), k, L, inner_l=0)
            except InvariantViolation:
                bad += 1
    acc = _Acc("exploration-nesting-goodsets", 0.0)
    acc.n = pairs
    acc.abs = float(bad)
    return [acc.report(passed=bad == 0, note=f"{bad} violations")]


def run_all(rng, *, instance_count: int = 200, max_vertices: int = 10, tolerance: float = 1e-10,
            quick: bool = False) -> list[VerificationReport]:
    """Every identity check, scaled by ``instance_count``."""
    src = as_source(rng)
    if instance_count <= 0:
        return []
    small = max(1, instance_count // 4)
    out = []
    out += check_extended_equivalence(src, instance_count, max_vertices, tolerance)
    out += check_disagreement_representation(src, small, min(max_vertices, 6), max(tolerance, 1e-9))
    out += check_swap(src, max(1, small // 2), fuzz=500 if quick else 10_000, tol=max(tolerance, 1e-12))
    out += check_partition_ratio(src, max(1, small // 2), max(tolerance, 1e-9))
    out += check_nonanticipatory_bound(src, max(1, small // 2), max(tolerance, 1e-9))
    out += check_integral_form(src, max(1, small // 10), 1e-4)
    return out
