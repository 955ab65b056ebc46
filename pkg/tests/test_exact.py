import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rfimlab import checks
from rfimlab.exact import (
    CapExceeded,
    Enumerator,
    boundary_non_connection_probability,
    disagreement_count_exact,
    enumerate_extended,
    extended_partition_function,
    hamiltonian,
    one_point_means,
    pair_connection_probability_exact,
    pair_law,
    partition_function,
    surface_tension_exact,
    swap_pushforward_discrepancy,
    swap_values,
    truncated_correlation,
    vertex_marginal_tv,
)
from rfimlab.lattice import Region, box, boundary_indices
from rfimlab.model import BoundarySpec, CouplingParams, FieldRealization
from rfimlab.rng import RandomSource

TANH_1 = 0.761594155955764888119458282605

params_st = st.builds(
    CouplingParams,
    beta=st.floats(0.2, 3.0),
    J=st.sampled_from([0.5, 1.0, 2.0]),
    h=st.floats(-1.0, 1.0),
    eps=st.floats(0.0, 3.0),
)


@st.composite
def instances(draw, max_vertices=6):
    n = draw(st.integers(1, max_vertices))
    region = checks.random_region(np.random.default_rng(draw(st.integers(0, 2**32 - 1))), n)
    p = draw(params_st)
    eta = draw(st.lists(st.floats(-3, 3), min_size=n, max_size=n))
    fixed = draw(st.dictionaries(st.integers(0, n - 1), st.sampled_from([-1, 1]), max_size=n))
    return region, p, eta, fixed


def _f(region, eta):
    return FieldRealization(region, np.array(eta, dtype=float))


@given(instances(max_vertices=8))
def test_partition_function_matches_bruteforce(inst):
    r, p, eta, fixed = inst
    got = partition_function(r, p, _f(r, eta), BoundarySpec.from_mapping(fixed))
    want = oracles.log_Z(r, p.beta, p.J, p.h, p.eps, eta, fixed)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(instances(max_vertices=5))
def test_extended_partition_function_matches_closed_form_weights(inst):
    r, p, eta, fixed = inst
    conf = oracles.extended_configs(r, p.beta, p.J, p.h, p.eps, eta, fixed)
    want_ext = math.log(math.fsum(w for _, w in conf))
    got = extended_partition_function(r, p, _f(r, eta), BoundarySpec.from_mapping(fixed))
    assert got == pytest.approx(want_ext, rel=1e-11, abs=1e-11)
    # and the extended sum equals the plain one
    assert want_ext == pytest.approx(oracles.log_Z(r, p.beta, p.J, p.h, p.eps, eta, fixed), rel=1e-11, abs=1e-11)


@given(instances(max_vertices=4))
def test_enumerate_extended_matches_oracle(inst):
    r, p, eta, fixed = inst
    vals, logw = enumerate_extended(r, p, _f(r, eta), BoundarySpec.from_mapping(fixed))
    conf = oracles.extended_configs(r, p.beta, p.J, p.h, p.eps, eta, fixed)
    assert len(vals) == len(conf)
    z_got = np.exp(logw - np.logaddexp.reduce(logw))
    z_want = {v: w for v, w in conf}
    tot = math.fsum(z_want.values())
    for row, pr in zip(vals, z_got):
        assert pr == pytest.approx(z_want[tuple(int(x) for x in row)] / tot, rel=1e-10, abs=1e-14)


def test_single_edge_correlation():
    r = Region([(0, 0), (1, 0)])
    p = CouplingParams(1.0, 1.0)
    f = FieldRealization.zeros(r)
    assert truncated_correlation((0, 0), (1, 0), r, p, f) == pytest.approx(TANH_1, rel=1e-14)
    # which is twice the probability that the two sites are joined in D
    prob = pair_connection_probability_exact([0], [1], r, p, f, BoundarySpec.free(), BoundarySpec.free())
    assert 2 * prob == pytest.approx(TANH_1, rel=1e-13)


def test_hamiltonian_batch_and_values():
    r = Region([(0, 0), (1, 0), (2, 0)])
    p = CouplingParams(1.0, J=2.0, h=0.5, eps=1.0)
    f = FieldRealization(r, np.array([1.0, -1.0, 0.0]))
    s = np.array([[1, 1, 1], [1, -1, 1]], dtype=np.int8)
    want = [-4 - (1.5 - 0.5 * 1 + 0.5), 4 - (1.5 + 0.5 + 0.5)]
    assert np.allclose(hamiltonian(s, r, p, f), want)


@settings(max_examples=25)
@given(instances(max_vertices=4))
def test_connection_probability_matches_networkx_oracle(inst):
    r, p, eta, fixed = inst
    n = r.n_vertices
    plus = {k: 1 for k in fixed}
    minus = {k: -1 for k in fixed}
    src, tgt = [n - 1], sorted(fixed) or [0]
    got = pair_connection_probability_exact(src, tgt, r, p, _f(r, eta),
                                            BoundarySpec.from_mapping(plus), BoundarySpec.from_mapping(minus))
    want = oracles.connection_probability(r, p.beta, p.J, p.h, p.eps, eta, plus, minus, src, tgt)
    assert got == pytest.approx(want, abs=1e-12)


@settings(max_examples=25)
@given(instances(max_vertices=5))
def test_mean_difference_is_connection_to_boundary(inst):
    r, p, eta, fixed = inst
    if not fixed:
        fixed = {0: 1}
    plus = BoundarySpec.from_mapping({k: 1 for k in fixed})
    minus = BoundarySpec.from_mapping({k: -1 for k in fixed})
    f = _f(r, eta)
    mp, mm = one_point_means(r, p, f, plus), one_point_means(r, p, f, minus)
    law = pair_law(r, p, f, plus, minus)
    for u in range(r.n_vertices):
        assert 0.5 * (mp[u] - mm[u]) == pytest.approx(law.connection_probability([u], list(fixed)), abs=1e-10)


def test_means_and_cluster_forms_agree():
    src = RandomSource(3)
    for inner, outer, p, f in checks.nested_instances(src, 4):
        a = disagreement_count_exact(inner, outer, p, f, method="means")
        b = disagreement_count_exact(inner, outer, p, f, method="clusters")
        assert a == pytest.approx(b, abs=1e-10)
    with pytest.raises(ValueError):
        disagreement_count_exact(inner, outer, p, f, method="bogus")


@pytest.mark.parametrize("seed", range(4))
def test_partition_ratio_against_oracle(seed):
    g = np.random.default_rng(seed)
    inner, outer = box((0, 0), 0), box((0, 0), 1)
    p = checks.random_params(g)
    eta = list(g.standard_normal(outer.n_vertices))
    f = _f(outer, eta)
    T = surface_tension_exact(inner, outer, p, f)
    ci = outer.index((0, 0))
    ring = [int(i) for i in boundary_indices(outer)]
    lz = {}
    for a in (1, -1):
        for b in (1, -1):
            lz[a, b] = oracles.log_Z(outer, p.beta, p.J, p.h, p.eps, eta, {ci: a, **{i: b for i in ring}})
    assert T == pytest.approx((lz[1, 1] + lz[-1, -1] - lz[1, -1] - lz[-1, 1]) / p.beta, rel=1e-12, abs=1e-12)
    pn = oracles.connection_probability(outer, p.beta, p.J, p.h, p.eps, eta,
                                        {ci: 1, **{i: 1 for i in ring}}, {ci: -1, **{i: -1 for i in ring}},
                                        [ci], ring)
    assert boundary_non_connection_probability(inner, outer, p, f) == pytest.approx(1 - pn, abs=1e-12)
    assert math.exp(-p.beta * T) == pytest.approx(1 - pn, abs=1e-9)


def test_partition_ratio_relative_precision_when_tiny():
    # strongly coupled: the non-connection probability is far below 1e-9, and
    # the two forms still agree to many digits
    inner, outer = box((0, 0), 0), box((0, 0), 2)
    p = CouplingParams(3.0, 2.0, 0.0, 0.5)
    f = FieldRealization.zeros(outer)
    T = surface_tension_exact(inner, outer, p, f)
    pn = boundary_non_connection_probability(inner, outer, p, f)
    assert pn < 1e-9
    assert pn == pytest.approx(math.exp(-p.beta * T), rel=1e-9)


def test_vertex_marginal_tv_is_zero():
    r = box((0, 0), 1)
    p = CouplingParams(0.7, 1.0, 0.2, 1.0)
    f = FieldRealization(r, np.linspace(-1, 1, r.n_vertices))
    assert vertex_marginal_tv(r, p, f) < 1e-13


def test_swap_involution_and_pushforward():
    r = Region([(0, 0), (1, 0), (2, 0), (1, 1)])
    p = CouplingParams(0.8, 1.0, 0.1, 1.0)
    f = FieldRealization(r, np.array([0.3, -0.2, 0.5, 0.0]))
    bc_a = BoundarySpec.from_mapping({0: 1})
    bc_b = BoundarySpec.from_mapping({0: -1})
    assert swap_pushforward_discrepancy(r, p, f, bc_a, bc_b, S=[2], A=[0]) < 1e-14
    g = np.random.default_rng(0)
    for _ in range(200):
        va, vb = checks.random_extended_pair(g, r)
        wa, wb = swap_values(va, vb, [2, 3], [0], r)
        xa, xb = swap_values(wa, wb, [2, 3], [0], r)
        assert np.array_equal(xa, va) and np.array_equal(xb, vb)


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        Enumerator(box((0, 0), 4), CouplingParams(1.0), None, cap=10)


def test_mutated_lambda_is_detected(monkeypatch):
    """Using 2 sinh(beta J) in place of its square root must break Zbar = Z."""
    monkeypatch.setattr(CouplingParams, "log_lam",
                        property(lambda self: math.log(2 * math.sinh(self.x))))
    reports = checks.check_extended_equivalence(RandomSource(0), instances=20, max_vertices=6)
    assert not all(r.passed for r in reports)
