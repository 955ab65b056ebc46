import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rfimlab.analysis import (
    QuadratureSpec,
    TiltProfile,
    anti_concentration_check,
    calibrate_tortuosity,
    chi,
    chi_argument,
    exact_T_D_batch,
    exact_T_D_loop,
    fit_exponential,
    regular_stretch,
    surface_tension_integral,
    synthetic_edge_count,
    tortuosity_exponent,
    tortuosity_summary,
    verify_regular_stretch,
)
from rfimlab.disagreement import CrossingReport
from rfimlab.exact import surface_tension_exact
from rfimlab.lattice import box
from rfimlab.model import CouplingParams, FieldRealization
from rfimlab.rng import RandomSource

CHI_1 = 0.317310507862914102829534908736
CHI_2 = 0.0455002638963584144005652743331

INNER, OUTER = box((0, 0), 0), box((0, 0), 2)


def test_chi_values():
    assert chi(0.0) == 1.0
    assert chi(1.0) == pytest.approx(CHI_1, rel=1e-14)
    assert chi(2.0) == pytest.approx(CHI_2, rel=1e-14)
    assert np.allclose(chi(np.array([1.0, 2.0])), [CHI_1, CHI_2], rtol=1e-14)
    for bad in (-0.1, math.nan):
        with pytest.raises(ValueError):
            chi(bad)


def test_chi_argument_formula():
    # (1/2eps) (ET/sqrt N) (N/ED)
    assert chi_argument(3.0, 0.5, 4, 2.0) == pytest.approx((3.0 / 2) * (4 / 0.5) / 4)


@pytest.mark.parametrize("seed", range(3))
def test_integral_form_matches_exact(seed):
    p = CouplingParams(1.0, 1.0, 0.3, 1.5)
    f = FieldRealization(OUTER, np.random.default_rng(seed).standard_normal(OUTER.n_vertices))
    T = surface_tension_exact(INNER, OUTER, p, f)
    res = surface_tension_integral(INNER, OUTER, p, f)
    assert abs(T - res.value) <= res.error_bound
    assert abs(T - res.value) < 1e-10
    assert max(abs(x) for x in res.endpoint_values) < 1e-12


def test_tail_bound_dominates_window_error():
    p = CouplingParams(1.0, 1.0, 0.0, 2.0)
    f = FieldRealization(OUTER, np.random.default_rng(1).standard_normal(OUTER.n_vertices))
    T = surface_tension_exact(INNER, OUTER, p, f)
    prof = TiltProfile(INNER, OUTER, p, f)
    c, _ = prof.default_window()
    for half in (0.5, 1.0, 2.0):
        res = surface_tension_integral(INNER, OUTER, p, f, QuadratureSpec(t_max=half, n_points=4001), profile=prof)
        assert abs(T - res.value) <= res.truncation_bound + res.discretization_estimate + 1e-9


def test_disagreement_profile_shape():
    p = CouplingParams(1.0, 1.0, 0.0, 1.0)
    f = FieldRealization.zeros(OUTER)
    prof = TiltProfile(INNER, OUTER, p, f)
    t = np.linspace(-20, 20, 81)
    D = prof.D(t)
    assert np.all(D >= -1e-15) and np.all(D <= 1 + 1e-15)
    assert D[0] < 1e-6 and D[-1] < 1e-6
    # zero field and h: the profile is symmetric in t
    assert np.allclose(D, D[::-1], atol=1e-12)


def test_zero_disorder_strength():
    p = CouplingParams(1.0, 1.0, 0.0, 0.0)
    f = FieldRealization.zeros(OUTER)
    res = surface_tension_integral(INNER, OUTER, p, f)
    assert res.value == 0.0 and res.error_bound == 0.0
    assert surface_tension_exact(INNER, OUTER, p, f) > 0


def test_quadrature_validation():
    for kw in (dict(n_points=2), dict(n_points=800), dict(rule="gauss"), dict(t_max=-1.0)):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)
    QuadratureSpec(n_points=800, rule="trapezoid")


def test_batch_and_loop_paths_agree():
    p = CouplingParams(1.0, 1.0, 0.0, 2.0)
    etas = np.random.default_rng(0).standard_normal((5, OUTER.n_vertices))
    T1, D1 = exact_T_D_batch(INNER, OUTER, p, etas)
    T2, D2 = exact_T_D_loop(INNER, OUTER, p, etas)
    assert np.allclose(T1, T2, atol=1e-12) and np.allclose(D1, D2, atol=1e-12)


def test_anti_concentration_report_small():
    p = CouplingParams(1.0, 1.0, 0.0, 2.0)
    rep = anti_concentration_check(INNER, OUTER, p, 40, RandomSource(0), geometric_crosscheck=5)
    assert rep.crosscheck_max_abs_error < 1e-10
    assert rep.geometric_max_abs_error < 1e-9
    assert rep.chi_arg == pytest.approx(rep.chi_arg_crosscheck, rel=1e-12)
    assert rep.rhs == pytest.approx(chi(rep.chi_arg))
    assert "passed" in rep.to_json()
    with pytest.raises(ValueError):
        anti_concentration_check(INNER, OUTER, CouplingParams(1.0), 5, 0)


@st.composite
def monotone_sequences(draw):
    n = draw(st.integers(1, 60))
    steps = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    p = np.clip(1.0 - np.cumsum(steps) / max(1.0, sum(steps)) * draw(st.floats(0, 1)), 0, 1)
    p = np.minimum.accumulate(p)
    k = draw(st.integers(0, n - 1))
    return p, k


@settings(max_examples=200)
@given(monotone_sequences(), st.sampled_from([0.05, 0.5, 1.0]))
def test_regular_stretch_against_high_precision_oracle(pk, gamma):
    p, k = pk
    n = regular_stretch(p, gamma, k)
    assert oracles.stretch_valid(p, gamma, k, n)
    assert verify_regular_stretch(p, gamma, k, n)[0]


def test_regular_stretch_tie_breaks_to_smallest():
    p = np.array([1.0, 0.25, 0.25])
    # score (j+1)^2 p_j at gamma = 1: 1, 1, 2.25
    assert regular_stretch(p, 1.0, 1) == 0
    assert regular_stretch(p, 1.0, 2) == 2
    with pytest.raises(ValueError):
        regular_stretch([0.5, 0.6], 0.5, 1)
    with pytest.raises(ValueError):
        regular_stretch([0.5], 0.0, 0)
    with pytest.raises(ValueError):
        regular_stretch([0.5], 0.5, 3)
    assert not verify_regular_stretch([1.0, 0.5, 0.5], 0.5, 2, 3)[0]


def test_fit_recovers_exact_exponential():
    L = np.array([2, 4, 8, 12.0])
    m = 0.8 * np.exp(-0.3 * L)
    fit = fit_exponential([(a, b, 0.01 * b) for a, b in zip(L, m)])
    assert fit.C == pytest.approx(0.8, rel=1e-10) and fit.c == pytest.approx(0.3, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0) and fit.weighted
    assert fit.predict(5.0) == pytest.approx(0.8 * math.exp(-1.5))
    with pytest.raises(ValueError):
        fit.predict(13.0)


def test_fit_drops_zeros_and_falls_back_to_unweighted():
    pts = [(2, 0.4, 0.01), (4, 0.1, 0.005), (6, 0.02, 0.0), (8, 0.004, 0.001), (12, 0.0, 0.0)]
    with pytest.warns(RuntimeWarning):
        fit = fit_exponential(pts)
    assert fit.n_points == 4 and not fit.weighted
    assert fit.c > 0 and fit.rate_stderr > 0
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_exponential([(1, 0.5, 0.1), (2, 0.0, 0.0), (3, 0.0, 0.0)])
    flat = fit_exponential([(1, 0.5, None), (2, 0.5, None), (3, 0.5, None)])
    assert flat.c == pytest.approx(0.0, abs=1e-12) and flat.r2 == 0.0


def test_tortuosity_summary_and_exponent():
    reps = [CrossingReport(True, x) for x in (10, 20, 30, 40)] + [CrossingReport(False)]
    s = tortuosity_summary(reps, 5, quantiles=(0.5,), lassos=[True, False, False, False, False])
    assert s.crossing_probability == pytest.approx(0.8)
    assert s.quantiles[0.5] == pytest.approx(25.0)
    assert s.lasso_frequency == pytest.approx(0.2)
    row = s.row()
    assert math.isnan(row["q0.1"]) and row["q0.5"] == 25.0
    none = tortuosity_summary([CrossingReport(False)], 3)
    assert none.quantiles == {} and tortuosity_exponent([none]) is None
    summ = [tortuosity_summary([CrossingReport(True, int(2 * l**1.5))], l, (0.1,)) for l in (4, 16, 64)]
    assert tortuosity_exponent(summ) == pytest.approx(1.5, abs=0.01)


def test_synthetic_calibration():
    assert synthetic_edge_count(16, 1.0) == 15
    assert (synthetic_edge_count(32, 1.25) - 31) % 2 == 0
    for target in (1.0, 1.25):
        est, summaries = calibrate_tortuosity(target)
        assert abs(est - target) <= 0.05
        assert [s.scale for s in summaries] == [16, 32, 64, 128]
