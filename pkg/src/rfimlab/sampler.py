"""Random fields, Glauber dynamics, coupling from the past and mid-edge augmentation.

All samplers take a :class:`~rfimlab.rng.RandomSource` and read a fresh
generator from it, so a call is a pure function of its arguments. Chains use
single-site heat-bath updates in the canonical vertex order; boundary vertices
are never updated. Heat-bath updates are monotone in the spins, which is what
makes the two-chain coupling from the past valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._kernels import heat_bath, heat_bath_many
from .lattice import Region
from .model import BoundarySpec, CouplingParams, ExtendedConfig, FieldRealization, PairSample
from .rng import RandomSource, as_source

_CHUNK = 1 << 22  # uniforms generated per chunk


class CoalescenceError(RuntimeError):
    """Coupling from the past did not coalesce within the epoch cap."""


# -- disorder ------------------------------------------------------------------


def gaussian_field(region: Region, rng) -> FieldRealization:
    """i.i.d. standard normal values in canonical vertex order."""
    g = as_source(rng).generator()
    return FieldRealization(region, g.standard_normal(region.n_vertices))


def tilt_field(f: FieldRealization, inner: Region, t: float) -> FieldRealization:
    """Add ``t`` to the field on the vertices of ``inner``."""
    idx = np.array([f.region.index(v) for v in inner.vertices], dtype=np.int64)
    eta = f.eta.copy()
    eta[idx] += t
    return FieldRealization(f.region, eta)


def normalized_field_sum(f: FieldRealization, r: Region) -> float:
    """``sum_{v in r} eta_v / sqrt(|r|)``."""
    return float(f.on(r).eta.sum() / math.sqrt(r.n_vertices))


# -- dynamics ----------------------------------------------------------------


@dataclass
class ChainState:
    sigma: np.ndarray
    sweep_count: int = 0


class HeatBath:
    """Precomputed heat-bath tables for one region, field and vertex boundary."""

    def __init__(self, region: Region, params: CouplingParams, field: FieldRealization,
                 bc: BoundarySpec | None = None):
        bc = bc if bc is not None else BoundarySpec()
        if not bc.is_vertex_only(region.n_vertices):
            raise ValueError("samplers accept vertex boundary values only")
        bc.check_allowed(region)
        self.region, self.params, self.bc = region, params, bc
        n = region.n_vertices
        self.fixed_idx, self.fixed_val = bc.vertex_part(n)
        self.order = np.setdiff1d(np.arange(n), self.fixed_idx).astype(np.int64)
        self.indptr, self.indices = region.neighbors
        b = field.on(region).local_fields(params)[self.order]
        s = np.arange(-4, 5)
        self.ptab = expit(2 * params.beta * (params.J * s[None, :] + b[:, None]))

    @property
    def n_free(self) -> int:
        return len(self.order)

    def initial(self, value: int | None = None) -> np.ndarray:
        """Start with every free vertex at ``value`` (default: the common
        boundary value if there is one, else +1)."""
        if value is None:
            vals = np.unique(self.fixed_val)
            value = int(vals[0]) if len(vals) == 1 else 1
        sig = np.full(self.region.n_vertices, value, dtype=np.int8)
        sig[self.fixed_idx] = self.fixed_val
        return sig

    def run(self, sigma: np.ndarray, U: np.ndarray) -> None:
        """Sweeps with explicit uniforms ``U`` of shape (sweeps, n_free), in place."""
        if self.n_free:
            heat_bath(sigma, self.order, self.indptr, self.indices, self.ptab, U)

    def run_stream(self, state: ChainState, sweeps: int, gen: np.random.Generator) -> ChainState:
        per = max(1, _CHUNK // max(self.n_free, 1))
        left = sweeps
        while left > 0:
            k = min(per, left)
            self.run(state.sigma, gen.random((k, self.n_free)))
            left -= k
        state.sweep_count += sweeps
        return state


def heat_bath_sweeps(region, params, field, bc, sigma, U) -> np.ndarray:
    """Apply sweeps driven by given uniforms to a copy of ``sigma``."""
    out = np.array(sigma, dtype=np.int8)
    HeatBath(region, params, field, bc).run(out, np.asarray(U, dtype=float))
    return out


def default_sweeps(region: Region) -> int:
    return 100 * region.n_vertices


def glauber_sample(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None,
    sweeps: int | None = None,
    rng=0,
) -> np.ndarray:
    """Spins after ``sweeps`` heat-bath sweeps (default ``100 |V|``)."""
    sweeps = default_sweeps(region) if sweeps is None else int(sweeps)
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    hb = HeatBath(region, params, field, bc)
    st = hb.run_stream(ChainState(hb.initial()), sweeps, as_source(rng).generator())
    return st.sigma


def glauber_samples(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None,
    n_samples: int,
    sweeps: int | None = None,
    rng=0,
) -> np.ndarray:
    """``n_samples`` independent chains, each run for ``sweeps`` sweeps, driven
    by one stream. Returns an (n_samples, n) array."""
    sweeps = default_sweeps(region) if sweeps is None else int(sweeps)
    hb = HeatBath(region, params, field, bc)
    gen = as_source(rng).generator()
    out = np.tile(hb.initial(), (n_samples, 1))
    if hb.n_free == 0:
        return out
    per = max(1, _CHUNK // (sweeps * hb.n_free))
    for start in range(0, n_samples, per):
        stop = min(start + per, n_samples)
        U = gen.random((stop - start, sweeps, hb.n_free))
        heat_bath_many(out[start:stop], hb.order, hb.indptr, hb.indices, hb.ptab, U)
    return out


def _epoch_length(e: int) -> int:
    return 1 if e == 0 else 1 << (e - 1)


def cftp_sample(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None,
    rng=0,
    *,
    max_epochs: int = 20,
    return_epochs: bool = False,
):
    """Exact sample by monotone coupling from the past.

    Epoch ``e`` prepends the sweeps ``[-2^e, -2^(e-1))`` (epoch 0 is the single
    sweep ending at time 0); the uniforms of every epoch come from their own
    child stream and are regenerated in chunks at each restart, so memory does
    not grow with the coalescence time.
    """
    hb = HeatBath(region, params, field, bc)
    src = as_source(rng)
    if hb.n_free == 0:
        out = hb.initial()
        return (out, 0) if return_epochs else out
    per = max(1, _CHUNK // hb.n_free)
    for e in range(max_epochs + 1):
        top, bottom = hb.initial(1), hb.initial(-1)
        for j in range(e, -1, -1):
            gen = src.child("cftp", j).generator()
            left = _epoch_length(j)
            while left:
                k = min(per, left)
                U = gen.random((k, hb.n_free))
                hb.run(top, U)
                hb.run(bottom, U)
                left -= k
        if np.array_equal(top, bottom):
            return (top, e) if return_epochs else top
    raise CoalescenceError(f"no coalescence after {max_epochs} epochs")


def cftp_samples(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    bc: BoundarySpec | None,
    n_samples: int,
    rng=0,
    *,
    max_epochs: int = 20,
) -> np.ndarray:
    """``n_samples`` independent exact samples, run as one batch.

    Every replica keeps its own uniforms for each epoch across restarts, so
    each is a coupling from the past on its own. Epoch ``e`` draws fresh rows,
    from child stream ``("cftp", e)``, only for the replicas not yet
    coalesced; stored rows of coalesced replicas are dropped.
    """
    hb = HeatBath(region, params, field, bc)
    src = as_source(rng)
    out = np.tile(hb.initial(), (n_samples, 1))
    if hb.n_free == 0 or n_samples == 0:
        return out
    blocks: list[np.ndarray] = []  # rows aligned with ``todo``
    todo = np.arange(n_samples)
    for e in range(max_epochs + 1):
        blocks.append(src.child("cftp", e).generator().random((len(todo), _epoch_length(e), hb.n_free)))
        top = np.tile(hb.initial(1), (len(todo), 1))
        bottom = np.tile(hb.initial(-1), (len(todo), 1))
        for U in reversed(blocks):
            heat_bath_many(top, hb.order, hb.indptr, hb.indices, hb.ptab, U)
            heat_bath_many(bottom, hb.order, hb.indptr, hb.indices, hb.ptab, U)
        done = np.all(top == bottom, axis=1)
        out[todo[done]] = top[done]
        todo = todo[~done]
        if not len(todo):
            return out
        blocks = [np.ascontiguousarray(b[~done]) for b in blocks]
    raise CoalescenceError(f"{len(todo)} replicas did not coalesce after {max_epochs} epochs")


# -- mid-edges and pairs ---------------------------------------------------------


def attach_midedges(sigma: np.ndarray, region: Region, params: CouplingParams, rng) -> ExtendedConfig:
    """Draw mid-edge values given the spins.

    Disagreeing endpoints force 0; endpoints equal to ``s`` give ``kappa = s``
    with probability ``1 - exp(-2 beta J)`` and 0 otherwise.
    """
    gen = rng if isinstance(rng, np.random.Generator) else as_source(rng).generator()
    sigma = np.asarray(sigma, dtype=np.int8)
    e = region.edges
    su, sv = sigma[e[:, 0]], sigma[e[:, 1]]
    u = gen.random(len(e))
    kappa = np.where((su == sv) & (u < params.p_bond), su, 0).astype(np.int8)
    return ExtendedConfig(sigma.copy(), kappa)


def uniform_boundary(region: Region, boundary, value: int) -> BoundarySpec:
    """``value`` on ``boundary`` (vertex indices or vertex coordinates)."""
    b = list(boundary)
    if b and not isinstance(b[0], (int, np.integer)):
        idx = region.indices(b)
    else:
        idx = np.array(sorted(int(i) for i in b), dtype=np.int64)
    return BoundarySpec(idx, np.full(len(idx), value, dtype=np.int8))


def sample_spins(region, params, field, bc, mode: str, rng, sweeps: int | None = None,
                 max_epochs: int = 20) -> np.ndarray:
    if mode == "glauber":
        return glauber_sample(region, params, field, bc, sweeps, rng)
    if mode == "cftp":
        return cftp_sample(region, params, field, bc, rng, max_epochs=max_epochs)
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample_pair(
    region: Region,
    params: CouplingParams,
    field: FieldRealization,
    boundary,
    mode: str = "cftp",
    rng=0,
    *,
    sweeps: int | None = None,
    max_epochs: int = 20,
) -> PairSample:
    """Independent plus- and minus-boundary extended configurations on ``region``
    with a shared field; each copy uses its own child streams."""
    src = as_source(rng)
    field = field.on(region)
    out = []
    for tag, value in (("plus", 1), ("minus", -1)):
        bc = uniform_boundary(region, boundary, value)
        s = sample_spins(region, params, field, bc, mode, src.child(tag), sweeps, max_epochs)
        out.append(attach_midedges(s, region, params, src.child(tag, "kappa")))
    return PairSample(out[0], out[1], field)
