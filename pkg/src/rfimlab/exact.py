"""Exact enumeration of the random-field Ising model and its extension.

Everything here sums over all spin configurations of the free vertices of a
small region, in log space. Mid-edge variables are summed out edge by edge,
which is exact because, given the vertex spins, the mid-edges are independent.

The disagreement probabilities for pairs of extended configurations are
computed from the spin-pair enumeration: for fixed vertex spins of both copies
each mid-edge lies in the disagreement set independently, with a probability
read off from the two conditional mid-edge laws. Connection events are then
evaluated by a dynamic program over edge-by-edge merges of a set partition.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np
from scipy.special import logsumexp

from .lattice import Region, internal_boundary
from .model import (
    BoundarySpec,
    CouplingParams,
    ExtendedConfig,
    FieldRealization,
    log_midedge_factor,
)

DEFAULT_VERTEX_CAP = 24
DEFAULT_PAIR_CAP = 10**7
_BLOCK_BITS = 16


class CapExceeded(RuntimeError):
    """The requested enumeration is larger than the configured cap."""


def _spin_block(n_free: int, start: int, stop: int) -> np.ndarray:
    """Rows ``k = start..stop-1``; bit j of k set means free vertex j is +1."""
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n_free, dtype=np.int64)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


class Enumerator:
    """All admissible vertex configurations of a region under a boundary spec.

    With ``extended=False`` the weight of a configuration is ``exp(-beta H)``.
    With ``extended=True`` each edge contributes the sum of
    ``W(s_u, k) W(s_v, k)`` over the mid-edge values ``k`` allowed by ``bc``,
    so the total is the extended partition function.
    """

    def __init__(
        self,
        region: Region,
        params: CouplingParams,
        bc: BoundarySpec | None = None,
        *,
        extended: bool = False,
        cap: int = DEFAULT_VERTEX_CAP,
    ):
        bc = bc if bc is not None else BoundarySpec()
        if not extended and not bc.is_vertex_only(region.n_vertices):
            raise ValueError("mid-edge boundary values need extended=True")
        bc.check_allowed(region)
        self.region, self.params, self.bc, self.extended = region, params, bc, extended
        n = region.n_vertices

        fixed = dict(zip(*(a.tolist() for a in bc.vertex_part(n))))
        self.kappa_fixed = np.full(region.n_edges, 2, dtype=np.int8)  # 2 = free
        es, ev = bc.midedge_part(n)
        self.kappa_fixed[es] = ev
        for e, k in zip(es.tolist(), ev.tolist()):
            if k != 0:
                for u in region.edges[e]:
                    fixed[int(u)] = k
        self.fixed_idx = np.array(sorted(fixed), dtype=np.int64)
        self.fixed_val = np.array([fixed[i] for i in self.fixed_idx], dtype=np.int8)
        self.free_idx = np.setdiff1d(np.arange(n), self.fixed_idx)
        if len(self.free_idx) > cap:
            raise CapExceeded(f"{len(self.free_idx)} free vertices exceeds the cap of {cap}")
        self.n_configs = 1 << len(self.free_idx)

        # log edge factor table per edge: E[e, a, b]
        x = params.x
        m = region.n_edges
        tab = np.empty((m, 2, 2))
        plain = np.array([[x, -x], [-x, x]])
        tab[:] = plain
        if extended:
            F = log_midedge_factor(params)
            for e in range(m):
                k = int(self.kappa_fixed[e])
                if k == 2:
                    tab[e] = logsumexp(F, axis=2) if x > 0 else plain
                else:
                    tab[e] = F[:, :, k + 1]
        self.edge_table = tab

    # -- configurations ------------------------------------------------------

    def blocks(self) -> Iterator[np.ndarray]:
        """Yield full spin arrays (B, n) covering all admissible configurations."""
        n = self.region.n_vertices
        step = 1 << _BLOCK_BITS
        for start in range(0, self.n_configs, step):
            stop = min(start + step, self.n_configs)
            sig = np.empty((stop - start, n), dtype=np.int8)
            sig[:, self.fixed_idx] = self.fixed_val
            sig[:, self.free_idx] = _spin_block(len(self.free_idx), start, stop)
            yield sig

    def configs(self) -> np.ndarray:
        return np.concatenate(list(self.blocks()), axis=0)

    def log_coupling(self, sigma: np.ndarray) -> np.ndarray:
        e = self.region.edges
        a = (sigma[:, e[:, 0]] > 0).astype(np.intp)
        b = (sigma[:, e[:, 1]] > 0).astype(np.intp)
        vals = self.edge_table[np.arange(len(e))[None, :], a, b]
        return vals.sum(axis=1)

    def log_weights(self, sigma: np.ndarray, local_fields: np.ndarray) -> np.ndarray:
        """Log weights; ``local_fields`` has shape (n,) or (R, n) for R fields."""
        lf = np.asarray(local_fields, dtype=float)
        ext = self.params.beta * (sigma.astype(float) @ lf.T)
        base = self.log_coupling(sigma)
        return base + ext if lf.ndim == 1 else base[:, None] + ext

    def log_partition(self, local_fields: np.ndarray) -> np.ndarray | float:
        parts = [logsumexp(self.log_weights(s, local_fields), axis=0) for s in self.blocks()]
        out = logsumexp(np.stack(parts), axis=0)
        return float(out) if np.ndim(out) == 0 else out

    def kappa_law(self, sigma: np.ndarray) -> np.ndarray:
        """Conditional mid-edge law ``P[kappa = k - 1 | sigma]`` of shape (B, m, 3)."""
        if not self.extended:
            raise ValueError("mid-edge law needs an extended enumerator")
        F = log_midedge_factor(self.params)
        e = self.region.edges
        a = (sigma[:, e[:, 0]] > 0).astype(np.intp)
        b = (sigma[:, e[:, 1]] > 0).astype(np.intp)
        logf = F[a, b]  # (B, m, 3)
        mask = np.zeros((len(e), 3), dtype=bool)
        for k in range(3):
            mask[:, k] = (self.kappa_fixed == 2) | (self.kappa_fixed == k - 1)
        logf = np.where(mask[None], logf, -np.inf)
        with np.errstate(invalid="ignore"):
            out = np.exp(logf - logsumexp(logf, axis=2, keepdims=True))
        return np.nan_to_num(out, nan=0.0)


def _local_fields(field: FieldRealization, region: Region, params: CouplingParams) -> np.ndarray:
    return field.on(region).local_fields(params)


# -- energies and partition functions ----------------------------------------


def hamiltonian(
    sigma: np.ndarray, region: Region, params: CouplingParams, field: FieldRealization
) -> float | np.ndarray:
    """Energy of a spin array ``(n,)`` or a batch ``(B, n)`` in canonical order."""
    s = np.asarray(sigma, dtype=float)
    b = _local_fields(field, region, params)
    e = region.edges
    coup = (s[..., e[:, 0]] * s[..., e[:, 1]]).sum(axis=-1)
    return -params.J * coup - (s * b).sum(axis=-1)


def partition_function(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    log: bool = True,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """``Z`` (or ``log Z``) summed over spins agreeing with vertex boundary values."""
    enum = Enumerator(region, params, bc, cap=cap)
    lz = enum.log_partition(_local_fields(field, region, params))
    return lz if log else math.exp(lz)


def extended_partition_function(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    log: bool = True,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """Sum of extended weights over configurations consistent with ``bc``."""
    enum = Enumerator(region, params, bc, extended=True, cap=cap)
    lz = enum.log_partition(_local_fields(field, region, params))
    return lz if log else math.exp(lz)


def thermal_expectation(
    obs: Callable[[np.ndarray], np.ndarray],
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    vectorized: bool = True,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """Gibbs average of ``obs``.

    ``obs`` receives a (B, n) int8 array of spin rows when ``vectorized``,
    otherwise one (n,) row at a time.
    """
    enum = Enumerator(region, params, bc, cap=cap)
    lf = _local_fields(field, region, params)
    lws, vals = [], []
    for sig in enum.blocks():
        lws.append(enum.log_weights(sig, lf))
        v = obs(sig) if vectorized else np.array([obs(row) for row in sig])
        vals.append(np.asarray(v, dtype=float))
    lw = np.concatenate(lws)
    w = np.exp(lw - logsumexp(lw))
    return float(w @ np.concatenate(vals))


def one_point_means(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
) -> np.ndarray:
    """``<sigma_v>`` for every vertex."""
    enum = Enumerator(region, params, bc, cap=cap)
    lf = _local_fields(field, region, params)
    sig = enum.configs()
    lw = enum.log_weights(sig, lf)
    w = np.exp(lw - logsumexp(lw))
    return w @ sig.astype(float)


def truncated_correlation(
    u,
    v,
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """``<s_u s_v> - <s_u><s_v>``; for ``u == v`` this is the variance."""
    i, j = region.index(u), region.index(v)
    enum = Enumerator(region, params, bc, cap=cap)
    sig = enum.configs().astype(float)
    lw = enum.log_weights(sig.astype(np.int8), _local_fields(field, region, params))
    w = np.exp(lw - logsumexp(lw))
    mu, mv = w @ sig[:, i], w @ sig[:, j]
    return float(w @ (sig[:, i] * sig[:, j]) - mu * mv)


def vertex_marginal_tv(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """Total variation between the spin marginal of the extended measure and
    the plain Gibbs measure (vertex-only ``bc``)."""
    lf = _local_fields(field, region, params)
    plain = Enumerator(region, params, bc, cap=cap)
    ext = Enumerator(region, params, bc, extended=True, cap=cap)
    sig = plain.configs()
    lp = plain.log_weights(sig, lf)
    le = ext.log_weights(sig, lf)
    p = np.exp(lp - logsumexp(lp))
    q = np.exp(le - logsumexp(le))
    return 0.5 * float(np.abs(p - q).sum())


# -- full extended enumeration (small regions) --------------------------------


def enumerate_extended(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None = None,
    *,
    max_configs: int = 10**6,
) -> tuple[np.ndarray, np.ndarray]:
    """All allowed extended configurations with their log weights.

    Returns ``(values, logw)`` where ``values`` has shape (N, n + m) in
    extended-site order. Configurations of zero weight are excluded.
    """
    enum = Enumerator(region, params, bc, extended=True, cap=DEFAULT_VERTEX_CAP)
    F = log_midedge_factor(params)
    lf = _local_fields(field, region, params)
    e = region.edges
    n, m = region.n_vertices, region.n_edges
    rows, lws = [], []
    total = 0
    for sig in enum.configs():
        choices = []
        for k in range(m):
            a, b = int(sig[e[k, 0]] > 0), int(sig[e[k, 1]] > 0)
            fixed = int(enum.kappa_fixed[k])
            opts = [-1, 0, 1] if fixed == 2 else [fixed]
            choices.append([(c, F[a, b, c + 1]) for c in opts if F[a, b, c + 1] > -np.inf])
        base = params.beta * float(sig @ lf)
        for combo in itertools.product(*choices):
            total += 1
            if total > max_configs:
                raise CapExceeded("too many extended configurations")
            kap = np.array([c for c, _ in combo], dtype=np.int8)
            rows.append(np.concatenate([sig, kap]))
            lws.append(base + sum(w for _, w in combo))
    vals = np.array(rows, dtype=np.int8).reshape(-1, n + m)
    return vals, np.array(lws)


def extended_log_weight(values: np.ndarray, region: Region, params: CouplingParams,
                        field: FieldRealization) -> float:
    """Unnormalized log weight of one extended configuration (``-inf`` if forbidden)."""
    F = log_midedge_factor(params)
    n = region.n_vertices
    sig, kap = values[:n], values[n:]
    e = region.edges
    a = (sig[e[:, 0]] > 0).astype(np.intp)
    b = (sig[e[:, 1]] > 0).astype(np.intp)
    lw = F[a, b, kap.astype(np.intp) + 1].sum()
    return float(lw + params.beta * float(sig @ _local_fields(field, region, params)))


# -- disagreement connection probabilities ------------------------------------


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _canonical(labels: Iterable[int]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def connection_probability_given_spins(
    dmask: np.ndarray,
    q: np.ndarray,
    region: Region,
    source: Iterable[int],
    target: Iterable[int],
) -> tuple[float, float]:
    """``(P[connected], P[not connected])`` for source and target inside D when
    the vertex disagreement ``dmask`` is fixed and mid-edge ``e`` belongs to D
    independently with probability ``q[e]``.

    Both masses are accumulated separately so that either one is accurate when
    it is tiny.
    """
    n = region.n_vertices
    S, T = n + region.n_edges, n + region.n_edges + 1  # contracted super-nodes
    dsu = _DSU(n + region.n_edges + 2)
    src, tgt = set(int(s) for s in source), set(int(s) for s in target)
    for s in src:
        if s < n and dmask[s]:
            dsu.union(s, S)
    for s in tgt:
        if s < n and dmask[s]:
            dsu.union(s, T)

    def members(e: int) -> list[int]:
        u, v = region.edges[e]
        out = [int(w) for w in (u, v) if dmask[w]]
        if n + e in src:
            out.append(S)
        if n + e in tgt:
            out.append(T)
        return out

    random_edges = []
    for e in range(region.n_edges):
        if q[e] <= 0.0:
            continue
        mem = members(e)
        if len(mem) < 2:
            continue
        if q[e] >= 1.0:
            for w in mem[1:]:
                dsu.union(mem[0], w)
        else:
            random_edges.append((e, mem))
    if dsu.find(S) == dsu.find(T):
        return 1.0, 0.0

    # random hyperedges act on the components of the deterministic part
    hyper = []
    for e, mem in random_edges:
        roots = sorted({dsu.find(w) for w in mem})
        if len(roots) >= 2:
            hyper.append((float(q[e]), roots))
    if not hyper:
        return 0.0, 1.0
    rS, rT = dsu.find(S), dsu.find(T)
    nodes = sorted({r for _, roots in hyper for r in roots} | {rS, rT})
    last = {}
    for k, (_, roots) in enumerate(hyper):
        for r in roots:
            last[r] = k

    active = list(nodes)
    states: dict[tuple[int, ...], float] = {tuple(range(len(nodes))): 1.0}
    connected = 0.0
    for k, (qe, roots) in enumerate(hyper):
        idx = [active.index(r) for r in roots]
        iS, iT = active.index(rS), active.index(rT)
        nxt: dict[tuple[int, ...], float] = {}
        for st, pr in states.items():
            nxt[st] = nxt.get(st, 0.0) + pr * (1.0 - qe)
            labs = {st[i] for i in idx}
            merged = tuple(min(labs) if x in labs else x for x in st)
            if merged[iS] == merged[iT]:
                connected += pr * qe
            else:
                key = _canonical(merged)
                nxt[key] = nxt.get(key, 0.0) + pr * qe
        # forget nodes whose last hyperedge has been processed
        drop = {i for i, r in enumerate(active) if last.get(r, -1) <= k and r not in (rS, rT)}
        if drop:
            keepi = [i for i in range(len(active)) if i not in drop]
            active = [active[i] for i in keepi]
            red: dict[tuple[int, ...], float] = {}
            for st, pr in nxt.items():
                key = _canonical(st[i] for i in keepi)
                red[key] = red.get(key, 0.0) + pr
            nxt = red
        states = nxt
    return connected, math.fsum(states.values())


@dataclass
class _CopyLaw:
    sigma: np.ndarray  # (N, n) int8
    prob: np.ndarray  # (N,)
    kappa: np.ndarray  # (N, m, 3)
    log_z: float


def _copy_law(region, params, field, bc, cap) -> _CopyLaw:
    enum = Enumerator(region, params, bc, extended=True, cap=cap)
    sig = enum.configs()
    lw = enum.log_weights(sig, _local_fields(field, region, params))
    keep = np.isfinite(lw)
    sig, lw = sig[keep], lw[keep]
    lz = float(logsumexp(lw))
    return _CopyLaw(sig, np.exp(lw - lz), enum.kappa_law(sig), lz)


@dataclass
class PairLaw:
    """Spin-pair enumeration of a product of two extended measures, grouped by
    disagreement structure."""

    region: Region
    dmask: np.ndarray  # (K, n) bool, one row per distinct key
    q: np.ndarray  # (K, m) P[mid-edge in D]
    prob: np.ndarray  # (K,)
    log_z: tuple[float, float]

    def connection_masses(self, source, target) -> tuple[float, float]:
        """``(P[source <-> target], P[not source <-> target])`` inside D."""
        yes, no = [], []
        for d, q, p in zip(self.dmask, self.q, self.prob):
            if p > 0:
                c, nc = connection_probability_given_spins(d, q, self.region, source, target)
                yes.append(p * c)
                no.append(p * nc)
        return math.fsum(yes), math.fsum(no)

    def connection_probability(self, source, target) -> float:
        return self.connection_masses(source, target)[0]

    def non_connection_probability(self, source, target) -> float:
        return self.connection_masses(source, target)[1]

    def expected_disagreement(self, sites) -> float:
        """``E |sites & D|``."""
        n = self.region.n_vertices
        sites = np.asarray(sorted(sites), dtype=np.int64)
        vs, es = sites[sites < n], sites[sites >= n] - n
        per = self.dmask[:, vs].sum(axis=1) + self.q[:, es].sum(axis=1)
        return float(self.prob @ per)


def pair_law(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc_plus: BoundarySpec | None,
    bc_minus: BoundarySpec | None,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
    pair_cap: int = DEFAULT_PAIR_CAP,
) -> PairLaw:
    a = _copy_law(region, params, field, bc_plus, cap)
    b = _copy_law(region, params, field, bc_minus, cap)
    if len(a.prob) * len(b.prob) > pair_cap:
        raise CapExceeded(f"{len(a.prob) * len(b.prob)} configuration pairs exceeds the cap")
    dm = a.sigma[:, None, :] != b.sigma[None, :, :]
    agree = np.einsum("imk,jmk->ijm", a.kappa, b.kappa)
    q = np.clip(1.0 - agree, 0.0, 1.0)
    pr = a.prob[:, None] * b.prob[None, :]
    n, m = region.n_vertices, region.n_edges
    K = pr.size
    flat = np.concatenate([dm.reshape(K, n).astype(float), q.reshape(K, m)], axis=1)
    keys, inv = np.unique(flat, axis=0, return_inverse=True)
    probs = np.bincount(inv.reshape(-1), weights=pr.reshape(-1), minlength=len(keys))
    return PairLaw(region, keys[:, :n] > 0.5, keys[:, n:], probs, (a.log_z, b.log_z))


def pair_connection_probability_exact(
    source,
    target,
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc_plus: BoundarySpec | None,
    bc_minus: BoundarySpec | None,
    **kw,
) -> float:
    """Probability that ``source`` and ``target`` (extended site sets) are joined
    inside the disagreement set of two independent extended configurations."""
    law = pair_law(region, params, field, bc_plus, bc_minus, **kw)
    return law.connection_probability(source, target)


# -- surface tension and disagreement counts ---------------------------------


def _nested_boundaries(inner: Region, outer: Region) -> tuple[np.ndarray, np.ndarray]:
    bi = internal_boundary(inner)
    bo = internal_boundary(outer)
    if not all(v in outer for v in inner.vertices):
        raise ValueError("inner region must lie inside outer region")
    if bi & bo:
        raise ValueError("inner and outer boundaries overlap")
    return outer.indices(bi), outer.indices(bo)


def two_boundary_spec(inner: Region, outer: Region, a: int, b: int) -> BoundarySpec:
    """Value ``a`` on the inner boundary and ``b`` on the outer boundary (sites of ``outer``)."""
    ii, oo = _nested_boundaries(inner, outer)
    return BoundarySpec(
        np.concatenate([ii, oo]),
        np.concatenate([np.full(len(ii), a), np.full(len(oo), b)]).astype(np.int8),
    )


def surface_tension_exact(
    inner: Region,
    outer: Region,
    params: CouplingParams,
    field: FieldRealization,
    *,
    extra_bc: BoundarySpec | None = None,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """``(1/beta) log(Z++ Z-- / (Z+- Z-+))`` with the first sign on the inner
    boundary and the second on the outer one.

    ``extra_bc`` adds further constraints (e.g. mid-edges fixed to 0) common to
    all four partition functions.
    """
    lf = _local_fields(field, outer, params)
    lz = {}
    for a, b in itertools.product((1, -1), repeat=2):
        bc = two_boundary_spec(inner, outer, a, b)
        ext = extra_bc is not None
        if ext:
            bc = bc.merged(extra_bc)
        lz[a, b] = Enumerator(outer, params, bc, extended=ext, cap=cap).log_partition(lf)
    return (lz[1, 1] + lz[-1, -1] - lz[1, -1] - lz[-1, 1]) / params.beta


def boundary_non_connection_probability(
    inner: Region,
    outer: Region,
    params: CouplingParams,
    field: FieldRealization,
    *,
    extra_bc: BoundarySpec | None = None,
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """P(inner boundary not joined to outer boundary inside D) for the pair with
    + on both boundaries in one copy and - on both in the other."""
    ii, oo = _nested_boundaries(inner, outer)
    bp, bm = two_boundary_spec(inner, outer, 1, 1), two_boundary_spec(inner, outer, -1, -1)
    if extra_bc is not None:
        bp, bm = bp.merged(extra_bc), bm.merged(extra_bc)
    law = pair_law(outer, params, field, bp, bm, cap=cap)
    return law.non_connection_probability(ii, oo)


def disagreement_count_exact(
    inner: Region,
    outer: Region,
    params: CouplingParams,
    field: FieldRealization,
    *,
    method: str = "means",
    cap: int = DEFAULT_VERTEX_CAP,
) -> float:
    """``D = (1/2) sum_{v in inner} (<s_v>+ - <s_v>-)`` with +/- on the outer boundary.

    ``method="clusters"`` evaluates the same quantity as the expected number of
    inner vertices joined to the outer boundary inside the disagreement set.
    """
    bo = outer.indices(internal_boundary(outer))
    plus = BoundarySpec(bo, np.ones(len(bo), dtype=np.int8))
    minus = BoundarySpec(bo, -np.ones(len(bo), dtype=np.int8))
    idx = outer.indices(inner.vertices)
    if method == "means":
        mp = one_point_means(outer, params, field, plus, cap=cap)
        mm = one_point_means(outer, params, field, minus, cap=cap)
        return float(0.5 * (mp[idx] - mm[idx]).sum())
    if method == "clusters":
        law = pair_law(outer, params, field, plus, minus, cap=cap)
        return float(sum(law.connection_probability([int(i)], bo) for i in idx))
    raise ValueError(f"unknown method {method!r}")


# -- the cluster swap ----------------------------------------------------------


def disagreement_components(values_a: np.ndarray, values_b: np.ndarray, region: Region):
    """Component labels of the disagreement set on extended sites (-1 off D)."""
    n = region.n_vertices
    d = values_a != values_b
    dsu = _DSU(len(d))
    for k, (u, v) in enumerate(region.edges):
        s = n + k
        if d[s]:
            if d[u]:
                dsu.union(int(u), s)
            if d[v]:
                dsu.union(int(v), s)
    return np.array([dsu.find(i) if d[i] else -1 for i in range(len(d))])


def swap(
    pair: tuple[ExtendedConfig, ExtendedConfig],
    S: Iterable[int],
    A: Iterable[int],
    region: Region,
) -> tuple[ExtendedConfig, ExtendedConfig]:
    """Exchange the two configurations on the disagreement clusters meeting ``S``,
    unless those clusters meet ``A``."""
    n = region.n_vertices
    va, vb = pair[0].values(), pair[1].values()
    wa, wb = swap_values(va, vb, S, A, region)
    return ExtendedConfig.from_values(wa, n), ExtendedConfig.from_values(wb, n)


def swap_values(va, vb, S, A, region: Region) -> tuple[np.ndarray, np.ndarray]:
    comp = disagreement_components(va, vb, region)
    roots = {int(comp[s]) for s in S if comp[s] >= 0}
    if not roots:
        return va.copy(), vb.copy()
    cluster = np.isin(comp, list(roots))
    if np.any(cluster[np.asarray(list(A), dtype=np.int64)]):
        return va.copy(), vb.copy()
    wa, wb = va.copy(), vb.copy()
    wa[cluster], wb[cluster] = vb[cluster], va[cluster]
    return wa, wb


def swap_pushforward_discrepancy(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc_a: BoundarySpec,
    bc_b: BoundarySpec,
    S: Iterable[int],
    A: Iterable[int],
    *,
    max_pairs: int = 10**6,
) -> float:
    """Max |mu(R^{-1}(x)) - mu(x)| over all pairs x, for the exactly enumerated
    product measure ``mu`` and the swap ``R``."""
    S, A = list(S), list(A)
    va, la = enumerate_extended(region, params, field, bc_a)
    vb, lb = enumerate_extended(region, params, field, bc_b)
    if len(va) * len(vb) > max_pairs:
        raise CapExceeded("too many configuration pairs")
    pa = np.exp(la - logsumexp(la))
    pb = np.exp(lb - logsumexp(lb))
    ia = {row.tobytes(): i for i, row in enumerate(va)}
    ib = {row.tobytes(): i for i, row in enumerate(vb)}
    push = np.zeros((len(va), len(vb)))
    for i, x in enumerate(va):
        for j, y in enumerate(vb):
            wx, wy = swap_values(x, y, S, A, region)
            ii, jj = ia.get(wx.tobytes()), ib.get(wy.tobytes())
            if ii is None or jj is None:
                # image left the support: it carries mass nowhere it should
                return math.inf
            push[ii, jj] += pa[i] * pb[j]
    return float(np.abs(push - pa[:, None] * pb[None, :]).max())
