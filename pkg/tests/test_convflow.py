import math

import numpy as np
import pytest

from resurgence import convflow as cf
from resurgence import dfs, oracles
from resurgence.convflow import FlowPath, NodeSystem, QuadParams
from resurgence.errors import ContinuationError, FlowError, PathError
from resurgence.germs import Germ, conv_origin, constant_germ, continue_along, germ_from_oracle
from resurgence.pathgeo import PolyPath

UNIT = dfs.from_closed_discrete([1], 6)
RHO = cf.rho_for(UNIT)
DETOUR = PolyPath.through([0.3 + 0.3j, 1 + 0.5j, 2 + 0.4j, 2.5])


def fp(path, omega=UNIT):
    return FlowPath.from_path(path, cf.rho_for(omega))


# --- normal form and D ----------------------------------------------------------------

def test_flowpath_normal_form():
    g = fp(DETOUR)
    assert 0 < g.a_len < RHO
    assert g.length == pytest.approx(DETOUR.length)
    assert g.point(g.length) == pytest.approx(DETOUR.end, abs=1e-15)
    with pytest.raises(PathError):
        FlowPath.from_path(DETOUR, RHO, a_len=RHO)


def test_big_D_examples():
    g = fp(DETOUR)
    t = 1.0
    on_track = NodeSystem(np.array([t]), np.array([g.point(t)]), np.array([1.0]))
    eta = float(dfs.eta_array(UNIT, t, g.point(t)))
    assert cf.big_D(t, on_track, g, UNIT) == pytest.approx(eta)
    origin = NodeSystem(np.zeros(2), np.zeros(2, dtype=complex), np.zeros(2))
    assert cf.big_D(t, origin, g, UNIT) == pytest.approx(math.hypot(t, abs(g.point(t))))


def test_big_D_random_matches_formula():
    rng = np.random.default_rng(0)
    g = fp(DETOUR)
    for _ in range(20):
        lam = rng.uniform(0, 2, 3)
        z = rng.normal(size=3) + 1j * rng.normal(size=3)
        sys = NodeSystem(lam, z, np.zeros(3))
        t = rng.uniform(g.a_len, g.length)
        ref = sum(dfs.eta(UNIT, (l_, z_)) for l_, z_ in zip(lam, z))
        ref += math.hypot(t - lam.sum(), abs(g.point(t) - z.sum()))
        assert cf.big_D(t, sys, g, UNIT) == pytest.approx(ref)


def test_big_D_nonpositive_raises():
    g = FlowPath.from_path(PolyPath.through([1.0]), 0.4)
    sys = NodeSystem(np.array([1.0]), np.array([1 + 0j]), np.array([1.0]))
    with pytest.raises(FlowError):
        cf.big_D(1.0, sys, g, dfs.DFS({1: 1.0}, 6))


def test_vector_field_examples():
    g = fp(DETOUR)
    t = 1.2
    u = g.derivative(t)
    single = NodeSystem(np.array([t]), np.array([g.point(t)]), np.array([1.0]))
    (dl, dz), = cf.vector_field(t, single, g, UNIT)
    assert dl == pytest.approx(1.0) and dz == pytest.approx(u)
    mixed = NodeSystem(np.array([0.0, 0.4]), np.array([0j, 0.3 + 0.1j]), np.array([0.0, 0.5]))
    X = cf.vector_field(t, mixed, g, UNIT)
    assert X[0] == (0.0, 0j)
    Xp = cf.vector_field(t, mixed, g, UNIT, printed_form=True)
    assert Xp[1][0] == Xp[0][0]


def test_vector_field_ratio_form():
    g = fp(DETOUR)
    t = 1.0
    pair = NodeSystem(np.array([0.4, t - 0.4]), np.array([0.4 * g.point(t) / abs(g.point(t)), 0j]),
                      np.array([0.5, 0.5]))
    pair.zeta[1] = g.point(t) - pair.zeta[0]
    X = cf.vector_field(t, pair, g, UNIT)
    # distance term vanishes: the speeds split in proportion to eta
    eta = dfs.eta_array(UNIT, pair.lam, pair.zeta)
    assert X[0][0] / X[1][0] == pytest.approx(eta[0] / eta[1])
    assert X[0][0] + X[1][0] == pytest.approx(1.0)


# --- flow ------------------------------------------------------------------------------

def test_single_node_follows_path():
    g = fp(DETOUR)
    tr = cf.flow_nodes(NodeSystem.seed([1.0], g), g, UNIT)
    np.testing.assert_allclose(tr.zeta[:, 0, 0], [g.point(t) for t in tr.times], atol=1e-9)
    np.testing.assert_allclose(tr.lam[:, 0, 0], tr.times, atol=1e-9)


def test_origin_nodes_frozen_and_face_invariant():
    g = fp(DETOUR)
    seeds = np.array([[0.0, 1.0], [0.3, 0.7], [0.0, 0.4], [0.5, 0.2]])
    tr = cf.flow_nodes(seeds, g, UNIT, delta=0.2)
    rep = cf.invariant_report(tr, UNIT, delta=0.2)
    assert rep["origin_frozen"]
    assert rep["face_error"] < 1e-6
    assert rep["arclength_error"] < 1e-6
    assert rep["floor_margin"] > 0


def test_printed_form_unfreezes_origin_nodes():
    g = fp(DETOUR)
    tr = cf.flow_nodes(np.array([[0.5, 0.0]]), g, UNIT, printed_form=True)
    assert abs(tr.zeta[-1, 0, 1]) > 0


def test_seed_outside_allowed_set():
    g = FlowPath.from_path(PolyPath.through([0.3]), 0.5)
    with pytest.raises(FlowError):
        cf.flow_nodes(np.array([[1.0]]), g, dfs.DFS({0.3: 0.1}, 2))


def test_delta_and_c_of_t():
    g = fp(DETOUR)
    d = 0.2
    a = g.a_len
    assert cf.delta_of_t(a, g, d) == pytest.approx(RHO / 2)
    assert cf.c_of_t(a, g, d) == pytest.approx(a)
    t = a + d / (2 * math.sqrt(2)) * math.log(2)
    assert cf.delta_of_t(t, g, d) == pytest.approx(RHO / 4)
    ts = np.linspace(a, g.length, 9)
    assert np.all(np.diff([cf.delta_of_t(x, g, d) for x in ts]) < 0)
    assert np.all(np.diff([cf.c_of_t(x, g, d) for x in ts]) > 0)
    with pytest.raises(FlowError):
        cf.delta_of_t(a, g, 0.4)


def test_constants():
    dp, c = cf.constants(1e12, 3, 0.5, 0.3)
    assert dp == pytest.approx(0.25) and c == pytest.approx(0.3)
    dp, c = cf.constants(0.2, 0, 0.5, 0.3)
    assert dp == pytest.approx(0.25) and c == pytest.approx(0.3)
    vals = [cf.constants(0.2, L, 0.5) for L in (0.5, 1, 2)]
    assert vals[0][0] > vals[1][0] > vals[2][0]
    assert vals[0][1] < vals[1][1] < vals[2][1]
    with pytest.raises(ValueError):
        cf.constants(0.6, 1, 0.5, omega=UNIT)


# --- conv_eval -------------------------------------------------------------------------

@pytest.mark.parametrize("n, z", [(1, 1.3), (2, 1.0), (3, 0.8 + 0.4j)])
def test_ones_give_power(n, z):
    val = cf.conv_eval(["one"] * n, PolyPath.through([z]), dfs.trivial(4))
    assert val == pytest.approx(z**n / math.factorial(n), rel=1e-10)


def test_ones_montecarlo_n4():
    res = cf.conv_eval_detailed(["one"] * 4, DETOUR, UNIT)
    assert res.method == "montecarlo"
    assert res.value == pytest.approx(2.5**4 / 24, rel=1e-9)


def test_n1_pole_matches_log_continuation():
    val = cf.conv_eval(["pole:1"], DETOUR, UNIT)
    ref = continue_along(germ_from_oracle(oracles.Log(1)), DETOUR).coeffs[0]
    assert val == pytest.approx(complex(ref), rel=1e-6)


def test_n2_pole_in_origin_disk_matches_taylor():
    g = germ_from_oracle(oracles.pole(1))
    taylor = conv_origin(constant_germ(1), conv_origin(g, g))
    val = cf.conv_eval(["pole:1", "pole:1"], PolyPath.through([0.5]), UNIT)
    assert val == pytest.approx(complex(taylor(0.5)), rel=1e-6)


def test_germ_factors_inside_disk_and_outside():
    g = Germ(0j, germ_from_oracle(oracles.pole(1)).numeric, radius_hint=1.0)
    val = cf.conv_eval([g], PolyPath.through([0.4j]), UNIT)
    assert val == pytest.approx(complex(oracles.Log(1).along([0j, 0.4j])), rel=1e-8)
    with pytest.raises(ContinuationError):
        cf.conv_eval([g], DETOUR, UNIT)


def test_conv_eval_rejects_disallowed_path_and_bad_arity():
    with pytest.raises(PathError):
        cf.conv_eval(["pole:1"] * 2, PolyPath.through([2.5]), UNIT)
    with pytest.raises(ValueError):
        cf.conv_eval(["one"] * 6, DETOUR, UNIT)


def test_montecarlo_agrees_with_lattice():
    path = PolyPath.through([0.3 + 0.3j, 1.6 + 0.3j])
    lat = cf.conv_eval_detailed(["pole:1", "log:1"], path, UNIT)
    mc = cf.conv_eval_detailed(["pole:1", "log:1"], path, UNIT, QuadParams(method="montecarlo", samples=100000))
    assert mc.method == "montecarlo"
    assert abs(mc.value - lat.value) <= 5 * mc.error + 1e-9


def test_result_json():
    res = cf.conv_eval_detailed(["one", "one"], PolyPath.through([1.0]), dfs.trivial(3))
    doc = res.to_json()
    assert doc["value"][0] == pytest.approx(0.5)
    assert doc["method"] == "lattice"


# --- Jacobian and invariants ------------------------------------------------------------

def test_seed_determinant_and_ceiling():
    g = fp(DETOUR)
    tr = cf.lattice_flow(2, 16, g, UNIT, delta=0.2)
    rep = cf.jacobian_bound_check(tr, 2, 16, 0.2)
    assert rep.seed_det_error < 1e-12
    assert rep.ok and rep.worst_ratio <= 1 + 1e-12
    J = cf.pl_jacobians(tr, 2, 16)
    np.testing.assert_allclose(np.abs(J[0]), g.a_len**2, rtol=1e-12)


def test_one_dimensional_jacobian_explicit():
    path = PolyPath.through([2.0])
    g = fp(path, dfs.trivial(3))
    tr = cf.lattice_flow(1, 8, g, dfs.trivial(3))
    J = cf.pl_jacobians(tr, 1, 8)
    assert np.all(np.abs(J) <= [[cf.c_of_t(t, g, 0.5)] for t in tr.times])


# --- endpoint germ and the bound ----------------------------------------------------------------

def test_endpoint_germ_derivative_identity():
    path = PolyPath.through([0.3 + 0.4j, 1.4 + 0.4j, 1.6])
    eg = cf.endpoint_germ(["pole:1"], path, UNIT)
    f_end = oracles.pole(1).along(path)
    assert complex(eg.derivative().coeffs[0]) == pytest.approx(f_end, rel=1e-4)


def test_verify_bound_ones_closed_form():
    cert = cf.verify_bound(["one", "one"], UNIT, 0.2, 1.0, density=0)
    assert cert.lhs_sup <= 1.0**2 / 2 + 1e-9
    assert cert.rhs_value == pytest.approx(cert.c**2 / 2)
    assert cert.margin >= 0
    doc = cert.to_json()
    assert doc["schema"] == "cert.v1" and doc["margin"] == cert.margin


def test_partition_max():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([1.0, 5.0, 6.0])
    assert cf.partition_max([a, b]) == max(1 * 6, 2 * 5, 3 * 1)
    assert cf.partition_max([a]) == 3.0


def test_sup_profile_monotone():
    prof, count = cf.sup_profile("pole:1", UNIT, 0.2, [0, 0.5, 1.0, 2.0], density=0)
    assert np.all(np.diff(prof) >= 0) and prof[0] == 1.0 and count > 0
