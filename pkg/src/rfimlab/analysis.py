"""Derived quantities and statistics.

* the surface tension as an integral of the disagreement count over a uniform
  tilt of the field on the inner region,
* the two-sided Gaussian tail and the anti-concentration check,
* the regular-stretch selector for non-increasing sequences,
* exponential decay fits and tortuosity exponents.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erfc, logsumexp

from .exact import (
    DEFAULT_VERTEX_CAP,
    Enumerator,
    boundary_non_connection_probability,
    disagreement_count_exact,
    partition_function,
    thermal_expectation,
    two_boundary_spec,
)
from .lattice import Region, internal_boundary
from .model import BoundarySpec, CouplingParams, FieldRealization
from .rng import as_source

# -- surface tension as a tilt integral ---------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature over ``t in [center - t_max, center + t_max]``.

    ``t_max=None`` picks a window from the couplings and the field (see
    :func:`default_window`).
    """

    t_max: float | None = None
    n_points: int = 801
    rule: str = "simpson"

    def __post_init__(self):
        if self.rule not in ("simpson", "trapezoid"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.n_points < 3 or (self.rule == "simpson" and self.n_points % 2 == 0):
            raise ValueError("need n_points >= 3, odd for simpson")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")


class TiltProfile:
    """``D(t)`` for the field tilted by ``t`` on the inner region, for all ``t``.

    The tilt only enters through ``s = sum_{inner} sigma``, so the weights are
    grouped by ``s`` once and each evaluation is a short log-sum-exp.
    """

    def __init__(self, inner: Region, outer: Region, params: CouplingParams,
                 field: FieldRealization, cap: int = DEFAULT_VERTEX_CAP):
        self.inner, self.outer, self.params = inner, outer, params
        bo = outer.indices(internal_boundary(outer))
        idx = outer.indices(inner.vertices)
        lf = field.on(outer).local_fields(params)
        self.s_values = np.arange(-len(idx), len(idx) + 1, 2)
        self.logmass = []
        for value in (1, -1):
            bc = BoundarySpec(bo, np.full(len(bo), value, dtype=np.int8))
            enum = Enumerator(outer, params, bc, cap=cap)
            acc = np.full(len(self.s_values), -np.inf)
            for sig in enum.blocks():
                lw = enum.log_weights(sig, lf)
                s = sig[:, idx].sum(axis=1).astype(np.int64)
                pos = (s + len(idx)) // 2
                for j in np.unique(pos):
                    acc[j] = np.logaddexp(acc[j], logsumexp(lw[pos == j]))
            self.logmass.append(acc)
        self.eta_inner = field.on(inner).eta

    def mean_s(self, t: np.ndarray, copy: int) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = self.logmass[copy][None, :] + self.params.beta * self.params.eps * t[:, None] * self.s_values[None, :]
        w = np.exp(a - logsumexp(a, axis=1, keepdims=True))
        return w @ self.s_values

    def D(self, t) -> np.ndarray:
        return 0.5 * (self.mean_s(t, 0) - self.mean_s(t, 1))

    def default_window(self) -> tuple[float, float]:
        """Center and half-width of the integration window.

        The center cancels the mean effective field on the inner region. The
        half-width lets the tilt overcome the largest coupling pull (4J per
        site), the spread of the field over the inner region, and a further
        40/beta of energy, so the integrand is negligible outside.
        """
        p = self.params
        eta = self.eta_inner
        center = -(p.h / p.eps + float(eta.mean()))
        half = (4 * p.J + 40.0 / p.beta) / p.eps + 0.5 * float(eta.max() - eta.min())
        return center, half

    def tail_bound(self, lo: float, hi: float) -> float:
        """Upper bound on ``2 eps * integral of D`` outside ``[lo, hi]``.

        For ``t >= hi``, ``D(t) <= (N - E^-_t[s]) / 2`` and each ``s < N`` term
        decays like ``exp(-beta eps t (N - s))``; integrating term by term
        gives the bound. The lower tail is symmetric with the plus copy.
        """
        p = self.params
        N = int(self.s_values[-1])
        be = p.beta * p.eps
        am, ap = self.logmass[1], self.logmass[0]
        s = self.s_values
        up = np.exp(am[:-1] - am[-1] - be * hi * (N - s[:-1]))
        down = np.exp(ap[1:] - ap[0] + be * lo * (s[1:] + N))
        return float((up.sum() + down.sum()) / p.beta)


def _integrate(y: np.ndarray, h: float, rule: str) -> float:
    if rule == "trapezoid":
        return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))
    w = np.ones(len(y))
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float(h / 3 * (w @ y))


@dataclass(frozen=True)
class IntegralResult:
    value: float
    truncation_bound: float
    discretization_estimate: float
    t_lo: float
    t_hi: float
    endpoint_values: tuple[float, float]
    roundoff: float = 0.0

    @property
    def error_bound(self) -> float:
        """Tail bound plus discretization estimate plus a floating-point allowance
        covering both this value and the log-space exact evaluation."""
        return self.truncation_bound + self.discretization_estimate + self.roundoff


def surface_tension_integral(
    inner: Region,
    outer: Region,
    params: CouplingParams,
    field: FieldRealization,
    q: QuadratureSpec | None = None,
    *,
    profile: TiltProfile | None = None,
) -> IntegralResult:
    """``2 eps * integral D(eta^(t)) dt`` by quadrature over a finite window."""
    q = q or QuadratureSpec()
    if params.eps == 0:
        return IntegralResult(0.0, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0))
    prof = profile or TiltProfile(inner, outer, params, field)
    center, half = prof.default_window()
    if q.t_max is not None:
        half = q.t_max
    lo, hi = center - half, center + half
    t = np.linspace(lo, hi, q.n_points)
    y = prof.D(t)
    h = (hi - lo) / (q.n_points - 1)
    val = 2 * params.eps * _integrate(y, h, q.rule)
    # Richardson-style estimate from the rule on every other node
    if q.rule == "simpson" and q.n_points >= 5 and (q.n_points - 1) % 4 == 0:
        coarse = 2 * params.eps * _integrate(y[::2], 2 * h, q.rule)
        disc = abs(val - coarse) / 15
    elif q.rule == "trapezoid" and q.n_points >= 3 and (q.n_points - 1) % 2 == 0:
        coarse = 2 * params.eps * _integrate(y[::2], 2 * h, q.rule)
        disc = abs(val - coarse) / 3
    else:
        disc = float("nan")
    roundoff = 1e-12 * max(1.0, abs(val))
    return IntegralResult(val, prof.tail_bound(lo, hi), disc, lo, hi, (float(y[0]), float(y[-1])), roundoff)


# -- anti-concentration ---------------------------------------------------------


def chi(t: float | np.ndarray) -> float | np.ndarray:
    """Two-sided standard Gaussian tail ``P(|Z| >= t)``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("chi is defined for t >= 0")
    out = erfc(arr / math.sqrt(2))
    return float(out) if out.ndim == 0 else out


def chi_argument(mean_T: float, mean_D: float, n_inner: int, eps: float) -> float:
    """``(1 / 2 eps) * (E T / sqrt(N)) * (N / E D)``."""
    return (mean_T / math.sqrt(n_inner)) * (n_inner / mean_D) / (2 * eps)


def exact_T_D_batch(inner: Region, outer: Region, params: CouplingParams, etas: np.ndarray,
                    cap: int = DEFAULT_VERTEX_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Exact surface tension and disagreement count for many fields at once.

    ``etas`` has shape (R, |outer|). Returns arrays ``(T, D)`` of length R.
    """
    etas = np.atleast_2d(etas)
    lf = params.h + params.eps * etas
    lz = {}
    for a in (1, -1):
        for b in (1, -1):
            enum = Enumerator(outer, params, two_boundary_spec(inner, outer, a, b), cap=cap)
            lz[a, b] = np.atleast_1d(enum.log_partition(lf))
    T = (lz[1, 1] + lz[-1, -1] - lz[1, -1] - lz[-1, 1]) / params.beta
    bo = outer.indices(internal_boundary(outer))
    idx = outer.indices(inner.vertices)
    means = []
    for value in (1, -1):
        enum = Enumerator(outer, params, BoundarySpec(bo, np.full(len(bo), value, dtype=np.int8)), cap=cap)
        sig = enum.configs()
        lw = enum.log_weights(sig, lf)  # (N, R)
        w = np.exp(lw - logsumexp(lw, axis=0, keepdims=True))
        means.append(sig[:, idx].sum(axis=1).astype(float) @ w)
    return T, 0.5 * (means[0] - means[1])


def exact_T_D_loop(inner: Region, outer: Region, params: CouplingParams, etas: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Same quantities as :func:`exact_T_D_batch`, one field at a time through the
    scalar partition-function and expectation routines."""
    bo = outer.indices(internal_boundary(outer))
    idx = outer.indices(inner.vertices)
    Ts, Ds = [], []
    for eta in np.atleast_2d(etas):
        f = FieldRealization(outer, eta)
        lz = {
            (a, b): partition_function(outer, params, f, two_boundary_spec(inner, outer, a, b))
            for a in (1, -1) for b in (1, -1)
        }
        Ts.append((lz[1, 1] + lz[-1, -1] - lz[1, -1] - lz[-1, 1]) / params.beta)
        m = [
            thermal_expectation(lambda s: s[:, idx].sum(axis=1), outer, params, f,
                                BoundarySpec(bo, np.full(len(bo), v, dtype=np.int8)))
            for v in (1, -1)
        ]
        Ds.append(0.5 * (m[0] - m[1]))
    return np.array(Ts), np.array(Ds)


@dataclass
class AntiConcentrationReport:
    replicas: int
    lhs: float
    lhs_stderr: float
    rhs: float
    chi_arg: float
    mean_T: float
    mean_T_stderr: float
    mean_D: float
    mean_D_stderr: float
    chi_arg_crosscheck: float
    crosscheck_max_abs_error: float
    geometric_crosscheck_replicas: int
    geometric_max_abs_error: float
    passed: bool

    def to_json(self) -> dict:
        return asdict(self)


def anti_concentration_check(
    inner: Region,
    outer: Region,
    params: CouplingParams,
    replicas: int,
    rng,
    *,
    geometric_crosscheck: int = 50,
) -> AntiConcentrationReport:
    """Estimate ``P[D / E D < 1/2]`` over the disorder and compare it with the
    Gaussian-tail lower bound built from ``E T`` and ``E D``.

    ``T`` and ``D`` are computed exactly per field. The chi argument is also
    recomputed by a second, scalar code path. On the first
    ``geometric_crosscheck`` fields, ``T`` and ``D`` are recomputed from their
    disagreement-connection forms as well.
    """
    if params.eps <= 0:
        raise ValueError("anti-concentration needs eps > 0")
    src = as_source(rng)
    etas = np.stack([src.child(r, "field").generator().standard_normal(outer.n_vertices)
                     for r in range(replicas)])
    T, D = exact_T_D_batch(inner, outer, params, etas)
    n1 = inner.n_vertices
    mT, mD = float(T.mean()), float(D.mean())
    arg = chi_argument(mT, mD, n1, params.eps)
    rhs = float(chi(arg))
    below = (D / mD < 0.5).astype(float)
    lhs = float(below.mean())
    se = math.sqrt(max(lhs * (1 - lhs), 1.0 / replicas) / replicas)

    T2, D2 = exact_T_D_loop(inner, outer, params, etas)
    arg2 = chi_argument(math.fsum(T2) / replicas, math.fsum(D2) / replicas, n1, params.eps)
    cross = float(max(np.abs(T - T2).max(), np.abs(D - D2).max()))

    g = min(geometric_crosscheck, replicas)
    gerr = 0.0
    for r in range(g):
        f = FieldRealization(outer, etas[r])
        pn = boundary_non_connection_probability(inner, outer, params, f)
        tg = -math.log(pn) / params.beta
        dg = disagreement_count_exact(inner, outer, params, f, method="clusters")
        gerr = max(gerr, float(abs(tg - T[r])), float(abs(dg - D[r])))

    return AntiConcentrationReport(
        replicas=replicas,
        lhs=lhs,
        lhs_stderr=se,
        rhs=rhs,
        chi_arg=arg,
        mean_T=mT,
        mean_T_stderr=float(T.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan"),
        mean_D=mD,
        mean_D_stderr=float(D.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan"),
        chi_arg_crosscheck=arg2,
        crosscheck_max_abs_error=cross,
        geometric_crosscheck_replicas=g,
        geometric_max_abs_error=gerr,
        passed=lhs >= rhs - 4 * se,
    )


def second_moment_ratio(second_moment: float, mean: float, L: float, gamma: float) -> float:
    """``E<|.|^2> / (L^(2 gamma) (E D)^2)``; reported for monitoring only."""
    return second_moment / (L ** (2 * gamma) * mean**2)


# -- regular stretches ------------------------------------------------------------


def _check_sequence(p: np.ndarray, k: int) -> None:
    if k < 0 or len(p) < k + 1:
        raise ValueError("sequence must have length at least k + 1")
    if np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p)):
        raise ValueError("values must lie in [0, 1]")
    if np.any(np.diff(p) > 0):
        raise ValueError("sequence must be non-increasing")


def regular_stretch(p: Sequence[float], gamma: float, k: int) -> int:
    """Index ``n <= k`` maximizing ``p_n (n + 1)^(1 + gamma)``, smallest on ties."""
    p = np.asarray(p, dtype=float)
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    _check_sequence(p, k)
    j = np.arange(k + 1)
    score = p[: k + 1] * (j + 1.0) ** (1 + gamma)
    n = int(np.argmax(score))
    ok, why = verify_regular_stretch(p, gamma, k, n)
    if not ok:
        raise AssertionError(f"selected index fails verification: {why}")
    return n


def verify_regular_stretch(p: Sequence[float], gamma: float, k: int, n: int,
                           rtol: float = 1e-12) -> tuple[bool, str]:
    """Check ``p_n <= p_j <= p_n ((n+1)/(j+1))^(1+gamma)`` for all ``j <= n`` and
    ``(k+1) p_k^(1/(1+gamma)) - 1 <= n <= k``, up to relative rounding ``rtol``."""
    p = np.asarray(p, dtype=float)
    if not 0 <= n <= k:
        return False, "n outside [0, k]"
    for j in range(n + 1):
        if p[n] > p[j] * (1 + rtol):
            return False, f"p_n > p_{j}"
        bound = p[n] * ((n + 1) / (j + 1)) ** (1 + gamma)
        if p[j] > bound * (1 + rtol):
            return False, f"p_{j} exceeds the upper bound"
    low = (k + 1) * p[k] ** (1 / (1 + gamma)) - 1
    if n < low - rtol * (k + 1):
        return False, "n below the lower range bound"
    return True, ""


# -- decay fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    C: float
    c: float
    rate_stderr: float
    r2: float
    L_max: float
    n_points: int
    weighted: bool

    def predict(self, L) -> np.ndarray | float:
        arr = np.asarray(L, dtype=float)
        if np.any(arr > self.L_max):
            raise ValueError("refusing to extrapolate beyond the largest fitted L")
        out = self.C * np.exp(-self.c * arr)
        return float(out) if out.ndim == 0 else out

    def to_json(self) -> dict:
        return asdict(self)


def fit_exponential(points: Iterable[Sequence[float]]) -> DecayFit:
    """Least squares of ``log m`` against ``L`` for points ``(L, m, stderr)``.

    Points with nonpositive estimates are dropped with a warning. When every
    kept point has a positive standard error, residuals are weighted by
    ``m / stderr`` (the inverse standard error of ``log m``) and the rate error
    comes from the weights alone; otherwise an unweighted fit with the residual
    variance is used.
    """
    pts = [tuple(pt) + (None,) * (3 - len(pt)) for pt in points]
    keep = [pt for pt in pts if pt[1] is not None and pt[1] > 0]
    if len(keep) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(keep)} nonpositive estimates", RuntimeWarning, stacklevel=2)
    if len(keep) < 3:
        raise ValueError("need at least 3 points with positive estimates")
    L = np.array([pt[0] for pt in keep], dtype=float)
    m = np.array([pt[1] for pt in keep], dtype=float)
    se = np.array([np.nan if pt[2] is None else pt[2] for pt in keep], dtype=float)
    y = np.log(m)
    X = np.column_stack([np.ones_like(L), -L])
    weighted = bool(np.all(se > 0))
    w = (m / se) ** 2 if weighted else np.ones_like(L)
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    if not weighted:
        dof = len(L) - 2
        cov = cov * (float(resid @ resid) / dof if dof > 0 else np.nan)
    ybar = float(w @ y / w.sum())
    ss_tot = float(w @ (y - ybar) ** 2)
    ss_res = float(w @ resid**2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(
        C=float(math.exp(beta[0])),
        c=float(beta[1]),
        rate_stderr=float(math.sqrt(cov[1, 1])),
        r2=r2,
        L_max=float(L.max()),
        n_points=len(L),
        weighted=weighted,
    )


# -- tortuosity ---------------------------------------------------------------------

DEFAULT_QUANTILES = (0.05, 0.1, 0.25, 0.5)


@dataclass
class TortuositySummary:
    scale: int
    n: int
    crossing_probability: float
    quantiles: dict[float, float] = field(default_factory=dict)
    normalized_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lasso_frequency: float | None = None

    def row(self) -> dict:
        out = {"scale": self.scale, "replicas": self.n, "crossing_probability": self.crossing_probability}
        for qv in DEFAULT_QUANTILES:
            out[f"q{qv:g}"] = self.quantiles.get(qv, float("nan"))
        out["lasso_frequency"] = self.lasso_frequency if self.lasso_frequency is not None else float("nan")
        return out


def tortuosity_summary(reports, l: int, quantiles=DEFAULT_QUANTILES, lassos=None) -> TortuositySummary:
    """Crossing probability and quantiles of the shortest crossing length at scale ``l``."""
    reports = list(reports)
    lengths = np.array([r.shortest_length for r in reports if r.crossed], dtype=float)
    n = len(reports)
    prob = len(lengths) / n if n else 0.0
    qs = {float(qv): float(np.quantile(lengths, qv)) for qv in quantiles} if len(lengths) else {}
    lasso = None
    if lassos is not None:
        lassos = list(lassos)
        lasso = float(np.mean(lassos)) if lassos else 0.0
    return TortuositySummary(l, n, prob, qs, lengths / l, lasso)


def tortuosity_exponent(summaries: Sequence[TortuositySummary], quantile: float = 0.1) -> float | None:
    """Slope of ``log q(l)`` against ``log l`` over scales with crossings."""
    xs, ys = [], []
    for s in summaries:
        v = s.quantiles.get(float(quantile))
        if v is not None and v > 0:
            xs.append(math.log(s.scale))
            ys.append(math.log(v))
    if len(xs) < 2:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


def synthetic_edge_count(l: int, exponent: float) -> int:
    """Number of lattice edges of a synthetic crossing of length about ``l**exponent``
    (never shorter than the straight crossing, ``l - 1`` edges)."""
    extra = max(0.0, l**exponent - (l - 1))
    return (l - 1) + 2 * int(round(extra / 2))


def calibrate_tortuosity(exponent: float, scales=(16, 32, 64, 128), quantile: float = 0.1):
    """Exponent recovered from synthetic comb-shaped crossings at each scale.

    Each scale ``l`` gets one crossing of annulus ``(l, 2l)`` built as a lattice
    path with :func:`synthetic_edge_count` edges; the path is measured by
    :func:`~rfimlab.disagreement.annulus_crossing` like any sampled geometry.
    """
    from .disagreement import annulus_crossing, comb_path, path_geometry, quadrant_region

    summaries = []
    for l in scales:
        region = quadrant_region(2 * l)
        geom = path_geometry(region, comb_path(l, synthetic_edge_count(l, exponent)))
        rep = annulus_crossing(geom, (0, 0), l, 2 * l)
        summaries.append(tortuosity_summary([rep], l, quantiles=(quantile,)))
    return tortuosity_exponent(summaries, quantile), summaries
