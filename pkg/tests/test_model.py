import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfimlab.lattice import box
from rfimlab.model import (
    BoundarySpec,
    CouplingParams,
    ExtendedConfig,
    FieldRealization,
    hard_constraint_violations,
    log_weight_table,
)

# high-precision values at beta J = 1
LAMBDA_1 = 1.53310221031984782464779731492
T_1 = 0.395623106946075195773603712882
P_BOND_1 = 0.864664716763387308106000505028


def test_weights_at_unit_coupling():
    p = CouplingParams(beta=1.0, J=1.0)
    assert p.lam == pytest.approx(LAMBDA_1, rel=1e-14)
    assert p.t == pytest.approx(T_1, rel=1e-14)
    assert p.p_bond == pytest.approx(P_BOND_1, rel=1e-14)
    assert math.exp(p.log_lam) == pytest.approx(LAMBDA_1, rel=1e-14)
    assert math.exp(p.log_lam_t) == pytest.approx(LAMBDA_1 * T_1, rel=1e-14)


@given(st.floats(1e-6, 30.0))
def test_edge_sums_reproduce_boltzmann_factors(x):
    p = CouplingParams(beta=x, J=1.0)
    T = log_weight_table(p)  # T[a, kappa + 1]
    for a in (0, 1):
        agree = np.logaddexp.reduce(2 * T[a])
        assert agree == pytest.approx(x, abs=1e-12 * max(1, x))
        assert 2 * T[a, 1] == pytest.approx(-x, abs=1e-12 * max(1, x))
    assert T[0, 2] == -np.inf and T[1, 0] == -np.inf


def test_zero_coupling_is_admitted():
    p = CouplingParams(beta=1.0, J=0.0)
    assert p.p_bond == 0.0
    T = log_weight_table(p)
    # only kappa = 0 carries weight, with factor one per half-edge
    assert np.all(T[:, 1] == 0.0)


@pytest.mark.parametrize("kw", [dict(beta=0), dict(beta=-1), dict(beta=1, J=-1),
                                dict(beta=1, eps=-0.1), dict(beta=math.inf), dict(beta=1, h=math.nan)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        CouplingParams(**kw)


def test_field_restriction_and_local_fields():
    r = box((0, 0), 2)
    f = FieldRealization(r, np.arange(r.n_vertices, dtype=float))
    sub = box((0, 0), 1)
    g = f.on(sub)
    for v in sub.vertices:
        assert g[v] == f[v]
    p = CouplingParams(1.0, 1.0, h=0.5, eps=2.0)
    assert np.allclose(f.local_fields(p), 0.5 + 2.0 * f.eta)
    with pytest.raises(ValueError):
        FieldRealization(r, np.zeros(3))
    with pytest.raises(KeyError):
        sub_field = FieldRealization(sub, np.zeros(sub.n_vertices))
        sub_field.on(r)


def test_boundary_spec_merge_and_checks():
    r = box((0, 0), 1)
    a = BoundarySpec.plus_minus(r, 1)
    assert len(a) == 4 and set(a.values) == {1}
    b = BoundarySpec.from_mapping({0: 1, r.n_vertices: 0})
    with pytest.raises(ValueError):
        a.merged(BoundarySpec.plus_minus(r, -1))
    m = a.merged(b)
    assert not m.is_vertex_only(r.n_vertices)
    m.check_allowed(r)
    with pytest.raises(ValueError):
        BoundarySpec([0, 0], [1, 1])
    # a +1 mid-edge next to a fixed -1 endpoint is impossible
    u, v = r.edges[0]
    with pytest.raises(ValueError):
        BoundarySpec.from_mapping({int(u): -1, r.n_vertices: 1}).check_allowed(r)
    with pytest.raises(ValueError):
        BoundarySpec.from_mapping({0: 0}).check_allowed(r)


def test_hard_constraints():
    r = box((0, 0), 1)
    sigma = np.array([1, 1, 1, -1, 1], dtype=np.int8)
    ok = ExtendedConfig(sigma, np.zeros(4, dtype=np.int8))
    assert ok.satisfies_hard_constraints(r)
    for k, (u, v) in enumerate(r.edges):
        kap = np.zeros(4, dtype=np.int8)
        kap[k] = sigma[u]
        expect = 0 if sigma[u] == sigma[v] else 1
        assert hard_constraint_violations(sigma, kap, r) == expect
        kap[k] = -sigma[u]
        assert hard_constraint_violations(sigma, kap, r) == 1
    roundtrip = ExtendedConfig.from_values(ok.values(), r.n_vertices)
    assert np.array_equal(roundtrip.values(), ok.values())
