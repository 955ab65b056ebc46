"""Model parameters, disorder fields, boundary conditions and configurations.

The random-field Ising energy on a region is

    H(sigma) = -J * sum_{<u,v>} sigma_u sigma_v - sum_v (h + eps * eta_v) sigma_v

and its extended version places a variable kappa in {-1, 0, +1} on every edge
midpoint with weights W(a, a) = lam, W(a, 0) = lam * t, W(a, -a) = 0, where
t = (exp(2 beta J) - 1)^(-1/2) and lam = (2 sinh(beta J))^(1/2). Summing
W(s_u, k) W(s_v, k) over k returns exp(beta J s_u s_v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .lattice import Region, Vertex, boundary_indices

# index into the last axis of a weight table: kappa + 1
KAPPA_VALUES = np.array([-1, 0, 1], dtype=np.int8)


@dataclass(frozen=True)
class CouplingParams:
    beta: float
    J: float = 1.0
    h: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        # J = 0 (decoupled sites) is admitted as a limiting case.
        if not (math.isfinite(self.J) and self.J >= 0):
            raise ValueError(f"J must be nonnegative, got {self.J}")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not math.isfinite(self.h):
            raise ValueError("h must be finite")

    @property
    def x(self) -> float:
        return self.beta * self.J

    @property
    def t(self) -> float:
        return 1.0 / math.sqrt(math.expm1(2 * self.x)) if self.x > 0 else math.inf

    @property
    def lam(self) -> float:
        return math.sqrt(2 * math.sinh(self.x))

    @property
    def log_lam(self) -> float:
        if self.x == 0:
            return -math.inf
        # 0.5 * log(2 sinh x), written to survive large x
        return 0.5 * (self.x + math.log1p(-math.exp(-2 * self.x)))

    @property
    def log_lam_t(self) -> float:
        """log(lam * t), which simplifies to -x/2."""
        return -0.5 * self.x

    @property
    def p_bond(self) -> float:
        """P(kappa = s | both endpoints equal s) = 1 - exp(-2 beta J)."""
        return -math.expm1(-2 * self.x)

    def to_json(self) -> dict:
        return {"beta": self.beta, "J": self.J, "h": self.h, "eps": self.eps}


def log_weight_table(p: CouplingParams) -> np.ndarray:
    """``T[a, k] = log W(a, kappa)`` with ``a`` = 0 for spin -1, 1 for +1 and
    ``k = kappa + 1``."""
    neg = -math.inf
    agree, zero = p.log_lam, p.log_lam_t
    return np.array([[agree, zero, neg], [neg, zero, agree]])


def log_midedge_factor(p: CouplingParams) -> np.ndarray:
    """``F[a, b, k] = log W(a, kappa) + log W(b, kappa)``."""
    T = log_weight_table(p)
    return T[:, None, :] + T[None, :, :]


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """Disorder values ``eta`` aligned with ``region.vertices``."""

    region: Region
    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if eta.shape[0] != self.region.n_vertices:
            raise ValueError("field length does not match region")
        eta.flags.writeable = False
        object.__setattr__(self, "eta", eta)

    @classmethod
    def zeros(cls, region: Region) -> FieldRealization:
        return cls(region, np.zeros(region.n_vertices))

    def __getitem__(self, v) -> float:
        return float(self.eta[self.region.index(v)])

    def on(self, region: Region) -> FieldRealization:
        """Restriction to a subregion; raises ``KeyError`` on missing vertices."""
        if region == self.region:
            return self
        idx = np.array([self.region.index(v) for v in region.vertices], dtype=np.int64)
        return FieldRealization(region, self.eta[idx])

    def local_fields(self, p: CouplingParams) -> np.ndarray:
        """``h + eps * eta_v`` for every vertex."""
        return p.h + p.eps * self.eta


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """Fixed values on extended-graph sites of a region.

    ``sites`` are extended site indices (vertices first, then mid-edges).
    """

    sites: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=np.int64).reshape(-1)
        v = np.asarray(self.values, dtype=np.int8).reshape(-1)
        if s.shape != v.shape:
            raise ValueError("sites and values differ in length")
        if len(np.unique(s)) != len(s):
            raise ValueError("duplicate boundary sites")
        order = np.argsort(s, kind="stable")
        object.__setattr__(self, "sites", s[order])
        object.__setattr__(self, "values", v[order])

    @classmethod
    def free(cls) -> BoundarySpec:
        return cls()

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> BoundarySpec:
        items = sorted(mapping.items())
        return cls([k for k, _ in items], [v for _, v in items])

    @classmethod
    def on_vertices(cls, region: Region, vertices, value: int) -> BoundarySpec:
        idx = region.indices(vertices)
        return cls(idx, np.full(len(idx), value, dtype=np.int8))

    @classmethod
    def plus_minus(cls, region: Region, value: int) -> BoundarySpec:
        """Uniform ``value`` on the internal vertex boundary of ``region``."""
        idx = boundary_indices(region)
        return cls(idx, np.full(len(idx), value, dtype=np.int8))

    def __len__(self) -> int:
        return len(self.sites)

    def as_dict(self) -> dict[int, int]:
        return {int(s): int(v) for s, v in zip(self.sites, self.values)}

    def merged(self, other: BoundarySpec) -> BoundarySpec:
        d = self.as_dict()
        for s, v in other.as_dict().items():
            if s in d and d[s] != v:
                raise ValueError(f"conflicting boundary values at site {s}")
            d[s] = v
        return BoundarySpec.from_mapping(d)

    def vertex_part(self, n_vertices: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.sites < n_vertices
        return self.sites[m], self.values[m]

    def midedge_part(self, n_vertices: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.sites >= n_vertices
        return self.sites[m] - n_vertices, self.values[m]

    def is_vertex_only(self, n_vertices: int) -> bool:
        return bool(np.all(self.sites < n_vertices))

    def check_allowed(self, region: Region) -> None:
        """Raise ``ValueError`` unless some extended configuration obeys the values."""
        n = region.n_vertices
        if np.any(self.sites < 0) or np.any(self.sites >= n + region.n_edges):
            raise ValueError("boundary site out of range")
        vs, vv = self.vertex_part(n)
        if np.any((vv != 1) & (vv != -1)):
            raise ValueError("vertex boundary values must be +1 or -1")
        es, ev = self.midedge_part(n)
        if np.any((ev < -1) | (ev > 1)):
            raise ValueError("mid-edge boundary values must lie in {-1, 0, 1}")
        # a nonzero mid-edge forces both endpoints; collect the forced values
        forced = dict(zip(vs.tolist(), vv.tolist()))
        for e, k in zip(es.tolist(), ev.tolist()):
            if k == 0:
                continue
            for u in region.edges[e]:
                u = int(u)
                if forced.setdefault(u, k) != k:
                    raise ValueError("boundary values violate the hard constraints")
        # a zero mid-edge is compatible with any endpoint values, and distinct
        # edges only interact through forced endpoints, so this suffices


@dataclass(frozen=True, eq=False)
class ExtendedConfig:
    """Vertex spins ``sigma`` (+-1) and mid-edge values ``kappa`` (-1, 0, 1)."""

    sigma: np.ndarray
    kappa: np.ndarray

    def values(self) -> np.ndarray:
        """Site values in extended-site order."""
        return np.concatenate([self.sigma, self.kappa]).astype(np.int8)

    @classmethod
    def from_values(cls, values: np.ndarray, n_vertices: int) -> ExtendedConfig:
        v = np.asarray(values, dtype=np.int8)
        return cls(v[:n_vertices].copy(), v[n_vertices:].copy())

    def violations(self, region: Region) -> int:
        return hard_constraint_violations(self.sigma, self.kappa, region)

    def satisfies_hard_constraints(self, region: Region) -> bool:
        return self.violations(region) == 0


def hard_constraint_violations(sigma: np.ndarray, kappa: np.ndarray, region: Region) -> int:
    e = region.edges
    su, sv = sigma[e[:, 0]], sigma[e[:, 1]]
    bad = (su != sv) & (kappa != 0)
    bad |= (kappa != 0) & ((su != kappa) | (sv != kappa))
    return int(bad.sum())


@dataclass(frozen=True, eq=False)
class PairSample:
    """Independent plus/minus extended configurations sharing one field."""

    plus: ExtendedConfig
    minus: ExtendedConfig
    field: FieldRealization

    @property
    def region(self) -> Region:
        return self.field.region


def vertex_label(v: Vertex) -> str:
    return f"({v.x},{v.y})"
