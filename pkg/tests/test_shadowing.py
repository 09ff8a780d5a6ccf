import math
import os

import numpy as np
import pytest

import geoflow as gf

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def torus():
    return gf.torus_of_revolution()


@pytest.fixture(scope="module")
def flat():
    return gf.flat_torus()


@pytest.fixture(scope="module")
def orbit_chain_torus(torus):
    start = gf.renormalize_energy(torus, gf.CotangentState((0.2, 0.1), (1.0, 0.2)))
    return gf.orbit_chain(torus, start, 4, 1.5, 1e-6)


@pytest.fixture(scope="module")
def equator_chain(torus):
    # phase slips along the inner equator plus transverse kicks small enough
    # that one segment of hyperbolic growth keeps the jump under delta
    rng = np.random.default_rng(7)
    slips = rng.uniform(-4e-5, 4e-5, 4)
    vs = []
    s = 0.0
    for k in range(5):
        if k > 0:
            s += slips[k - 1]
        a, b = rng.uniform(-1e-7, 1e-7, 2) if 0 < k < 4 else (0.0, 0.0)
        vs.append(
            gf.renormalize_energy(
                torus,
                gf.CotangentState(torus.chart.wrap((s, math.pi + a)), (1.0, b)),
            )
        )
    return gf.build_chain(torus, vs, [TWO_PI] * 5, delta=1e-4, T=math.pi, i_min=-2)


@pytest.fixture(scope="module")
def momentum_drift_chain(flat):
    # direction creeps 0.01 per jump; a straight line cannot follow
    vs = []
    x = np.array([0.3, 0.4])
    for k in range(11):
        phi = 0.01 * k
        p = (math.cos(phi), math.sin(phi))
        vs.append(gf.unit_state(flat, tuple(flat.chart.wrap(x)), p))
        x = flat.chart.wrap(x + np.array(p))
    return gf.build_chain(flat, vs, [1.0] * 11, delta=0.012, T=1.0, i_min=-5)


@pytest.fixture(scope="module")
def equator_report(torus, equator_chain):
    return gf.shadow_search(torus, equator_chain, eps=1e-2, horizon=21.0,
                            rep_eps=0.05)


# -- chain bookkeeping -----------------------------------------------------------


def test_accumulated_time_examples(orbit_chain_torus):
    c = orbit_chain_torus
    assert gf.accumulated_time(c, 0) == 0.0
    assert gf.accumulated_time(c, 3) == pytest.approx(4.5)
    # extension indices reuse the edge durations
    assert gf.accumulated_time(c, 7) == pytest.approx(10.5)
    assert gf.accumulated_time(c, -2) == pytest.approx(-3.0)


def test_negative_index_window(momentum_drift_chain):
    c = momentum_drift_chain
    assert c.i_min == -5 and c.i_max == 5
    assert gf.accumulated_time(c, c.i_min) == pytest.approx(-5.0)
    assert c.time(-20) == 1.0 and c.time(20) == 1.0
    assert c.extension_rule == "StationaryOrbit"


def test_chain_eval_hits_vertices(torus, orbit_chain_torus):
    c = orbit_chain_torus
    for i in range(c.i_min, c.i_max + 1):
        at = gf.chain_eval(torus, c, gf.accumulated_time(c, i))
        assert gf.shell_distance(torus.chart, at, c.state(i)) < 1e-12


def test_chain_eval_matches_true_flow(torus, orbit_chain_torus):
    # tolerance covers the O(h^2) sensitivity to the per-call step rescaling
    c = orbit_chain_torus
    start = c.state(0)
    for t in (0.7, 2.2, 5.9):
        expect = gf.flow(torus, start, t)
        got = gf.chain_eval(torus, c, t)
        assert gf.shell_distance(torus.chart, got, expect) < 1e-7


def test_chain_eval_extends_past_window(torus, orbit_chain_torus):
    c = orbit_chain_torus
    end = gf.accumulated_time(c, c.i_max + 1)
    ahead = gf.chain_eval(torus, c, end + 2.0)
    expect = gf.flow(torus, gf.flow(torus, c.state(c.i_max), c.time(c.i_max)), 2.0)
    assert gf.shell_distance(torus.chart, ahead, expect) < 1e-7
    behind = gf.chain_eval(torus, c, -1.3)
    expect_b = gf.flow(torus, c.state(0), -1.3)
    assert gf.shell_distance(torus.chart, behind, expect_b) < 1e-7


def test_validate_chain_flags_big_jump(torus):
    start = gf.renormalize_energy(torus, gf.CotangentState((0.2, 0.1), (1.0, 0.2)))
    states = [start]
    for _ in range(4):
        states.append(gf.flow(torus, states[-1], 1.5))
    delta = 1e-3
    kicked = list(states)
    z = kicked[2]
    kicked[2] = gf.renormalize_energy(
        torus, gf.CotangentState((z.x[0], z.x[1] + 0.5 * delta), z.p)
    )
    ok, jumps = gf.validate_chain(
        torus, gf.PseudoGeodesic(kicked, [1.5] * 5, delta, 1.0), delta, 1.0
    )
    assert ok
    kicked[2] = gf.renormalize_energy(
        torus, gf.CotangentState((z.x[0], z.x[1] + 2.0 * delta), z.p)
    )
    ok, jumps = gf.validate_chain(
        torus, gf.PseudoGeodesic(kicked, [1.5] * 5, delta, 1.0), delta, 1.0
    )
    assert not ok
    worst = max(jumps, key=lambda j: j[1])
    assert worst[0] == 1
    assert worst[1] > delta


def test_validate_chain_rejects_short_segment(torus, orbit_chain_torus):
    c = orbit_chain_torus
    ok, _ = gf.validate_chain(torus, c, c.delta, 2.0)
    assert not ok


def test_build_chain_errors(torus):
    start = gf.renormalize_energy(torus, gf.CotangentState((0.2, 0.1), (1.0, 0.2)))
    far = gf.renormalize_energy(torus, gf.CotangentState((2.0, 2.0), (0.5, 0.5)))
    with pytest.raises(gf.ChainError):
        gf.build_chain(torus, [start, far], [1.0], 1e-4, 0.5)
    with pytest.raises(gf.ChainError):
        gf.build_chain(torus, [start, far], [1.0, 1.0], 1e-4, 0.5, i_min=3)
    with pytest.raises(gf.ChainError, match="worst jump"):
        gf.build_chain(torus, [start, far], [1.0, 1.0], 1e-4, 0.5)


# -- reparameterizations ----------------------------------------------------------


def test_identity_reparam():
    tau = gf.identity_reparam(0.05)
    assert tau(0.0) == 0.0
    assert tau(3.7) == pytest.approx(3.7)
    assert tau(-12.0) == pytest.approx(-12.0)
    assert tau.check_slopes()


def test_reparam_requires_zero_at_zero():
    with pytest.raises(ValueError):
        gf.Reparameterization(np.array([-1.0, 0.0, 1.0]),
                              np.array([-1.0, 0.1, 1.0]), 0.05)


def test_reparam_slope_bounds():
    with pytest.raises(ValueError):
        gf.Reparameterization(np.array([0.0, 1.0]), np.array([0.0, 1.2]), 0.05)
    tau = gf.Reparameterization(np.array([0.0, 1.0, 2.0]),
                                np.array([0.0, 1.04, 2.0]), 0.05)
    assert tau.check_slopes()
    assert tau(0.5) == pytest.approx(0.52)
    # past the last knot the slope is one
    assert tau(5.0) == pytest.approx(2.0 + 3.0)


def test_reparam_pairwise_slope_check_catches_secants():
    # adjacent slopes stay legal but a longer secant does not
    breaks = np.array([0.0, 1.0, 2.0])
    vals = np.array([0.0, 1.049, 2.098])
    tau = gf.Reparameterization(breaks, vals, 0.05)
    assert tau.check_slopes()
    bad = gf.Reparameterization.__new__(gf.Reparameterization)
    bad.breakpoints = np.array([0.0, 1.0, 2.0])
    bad.values = np.array([0.0, 1.049, 2.11])
    bad.eps_bound = 0.05
    assert not bad.check_slopes()


# -- strong shadowing --------------------------------------------------------------


def test_true_orbit_chain_is_found(torus, orbit_chain_torus):
    rep = gf.shadow_search(torus, orbit_chain_torus, eps=1e-3, horizon=8.0)
    assert rep.verdict == "found"
    assert rep.achieved_sup < 1e-4
    assert rep.reparam.check_slopes()
    # tau stays near the identity for a zero-jump chain
    for t in (0.0, 2.0, 5.0):
        assert rep.reparam(t) == pytest.approx(t, abs=1e-3)


def test_equator_chain_is_found(equator_report):
    assert equator_report.verdict == "found"
    assert equator_report.achieved_sup < 1e-2
    assert equator_report.reparam.eps_bound == 0.05
    assert equator_report.reparam.check_slopes()


def test_found_is_monotone_in_eps(torus, equator_chain, equator_report):
    sup, n = gf.evaluate_shadow(
        torus, equator_chain, equator_report.shadow_point,
        equator_report.reparam, 21.0
    )
    assert sup < 2e-2
    assert n > 100


def test_strong_witness_passes_weak_check(torus, equator_chain, equator_report):
    ok, dists = gf.weak_shadow_check(
        torus, equator_chain, 1e-2, equator_report.shadow_point, 25.0
    )
    assert ok
    assert dists.max() < 1e-2


def test_momentum_drift_chain_not_found(flat, momentum_drift_chain):
    rep = gf.shadow_search(flat, momentum_drift_chain, eps=0.01, horizon=8.0)
    assert rep.verdict == "not-found"
    assert rep.achieved_sup >= 0.01
    assert rep.search_effort["seeds_tried"] >= 2


def test_momentum_drift_analytic_oracle(momentum_drift_chain):
    # a straight line has constant momentum: it stays at least half the total
    # drift away from either the first or the last vertex, in momentum alone
    c = momentum_drift_chain
    ps = np.array([c.state(i).p for i in range(c.i_min, c.i_max + 1)])
    total = np.linalg.norm(ps[-1] - ps[0])
    assert total > 10 * 0.01 * 0.99
    for cand in ps:
        worst = max(np.linalg.norm(cand - p) for p in ps)
        assert worst >= total / 2.0 * 0.99
    # and unconstrained candidates do no better than total / 2
    best = min(
        max(np.linalg.norm(np.array([math.cos(a), math.sin(a)]) - p) for p in ps)
        for a in np.linspace(-0.05, 0.15, 201)
    )
    assert best >= total / 2.0 * 0.99


def test_shadow_report_serializes(equator_report):
    blob = gf.shadow_report_dict(equator_report)
    assert blob["verdict"] == "found"
    assert set(blob) >= {"verdict", "achieved_sup", "epsilon", "search_effort"}
    assert isinstance(blob["witness"]["x"], list)


# -- weak shadowing ----------------------------------------------------------------


def test_weak_permuted_vertices_still_true(torus):
    start = gf.renormalize_energy(torus, gf.CotangentState((0.2, 0.1), (1.0, 0.2)))
    pts = [start] + [gf.flow(torus, start, t) for t in (1.5, 3.0, 4.5, 6.0)]
    perm = [pts[i] for i in (2, 0, 3, 1, 4)]
    chain = gf.PseudoGeodesic(perm, [1.5] * 5, 10.0, 1.5)
    ok, dists = gf.weak_shadow_check(torus, chain, 1e-3, start, 8.0)
    assert ok
    assert dists.max() < 1e-6


def test_weak_search_finds_orbit_chain(torus, orbit_chain_torus):
    rep = gf.weak_shadow_search(torus, orbit_chain_torus, 1e-3)
    assert rep.verdict == "found"
    assert rep.achieved_sup < 1e-6


def test_weak_fails_on_momentum_spread(flat):
    vs = []
    x = np.array([0.1, 0.2])
    for k in range(5):
        phi = 0.05 * k
        p = (math.cos(phi), math.sin(phi))
        vs.append(gf.unit_state(flat, tuple(flat.chart.wrap(x)), p))
        x = flat.chart.wrap(x + np.array(p))
    chain = gf.PseudoGeodesic(vs, [1.0] * 5, 0.06, 1.0)
    ok, dists = gf.weak_shadow_check(flat, chain, 0.01, vs[0], 6.0)
    assert not ok
    assert dists.max() > 0.01
    rep = gf.weak_shadow_search(flat, chain, 0.01)
    assert rep.verdict == "not-found"


# -- weak specification ------------------------------------------------------------


def test_specification_same_orbit_found(torus):
    base1 = gf.renormalize_energy(torus, gf.CotangentState((0.2, 0.1), (1.0, 0.2)))
    base2 = gf.flow(torus, base1, 5.0)
    spec = gf.SpecificationInstance([(0.0, 2.0), (5.0, 7.0)], 1.0, [base1, base2])
    rep = gf.specification_shadow_search(torus, spec, 1e-3, budget=200)
    assert rep.verdict == "found"
    assert rep.achieved_sup < 1e-3


def test_specification_incompatible_momenta_not_found(flat):
    b1 = gf.unit_state(flat, (0.0, 0.0), (1.0, 0.0))
    b2 = gf.unit_state(flat, (0.5, 0.5), (0.0, 1.0))
    spec = gf.SpecificationInstance([(0.0, 2.0), (5.0, 7.0)], 1.0, [b1, b2])
    rep = gf.specification_shadow_search(flat, spec, 0.05, budget=600)
    assert rep.verdict == "not-found"
    # perpendicular lines cannot both be traced: the gap is order one
    assert rep.achieved_sup > 0.5


def test_specification_validation():
    flat = gf.flat_torus()
    b = gf.unit_state(flat, (0.0, 0.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        gf.SpecificationInstance([(0.0, 2.0)], 1.0, [b])
    with pytest.raises(ValueError):
        gf.SpecificationInstance([(0.0, 2.0), (2.5, 4.0)], 1.0, [b, b])
    with pytest.raises(ValueError):
        gf.SpecificationInstance([(0.0, 2.0), (3.0, 3.0)], 1.0, [b, b])
    spec = gf.SpecificationInstance([(0.0, 2.0), (3.0, 4.0)], 1.0, [b, b])
    at = spec.prescription(flat, 3.5)
    assert at.x[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        spec.prescription(flat, 2.5)


# -- chain files --------------------------------------------------------------------


def test_chain_roundtrip_exact(torus, orbit_chain_torus, tmp_path):
    path = os.path.join(tmp_path, "chain.txt")
    gf.save_chain(orbit_chain_torus, path)
    back = gf.load_chain(path)
    assert back.delta == orbit_chain_torus.delta
    assert back.T == orbit_chain_torus.T
    assert back.i_min == orbit_chain_torus.i_min
    for a, b in zip(orbit_chain_torus.states, back.states):
        assert tuple(map(float, a.x)) == tuple(map(float, b.x))
        assert tuple(map(float, a.p)) == tuple(map(float, b.p))
    assert [float(t) for t in back.times] == [float(t) for t in orbit_chain_torus.times]


def test_chain_roundtrip_negative_window(flat, momentum_drift_chain, tmp_path):
    path = os.path.join(tmp_path, "chain.txt")
    gf.save_chain(momentum_drift_chain, path)
    back = gf.load_chain(path)
    assert back.i_min == -5
    ok, _ = gf.validate_chain(flat, back, back.delta, back.T)
    assert ok


def test_load_rejects_gapped_indices(tmp_path):
    path = os.path.join(tmp_path, "bad.txt")
    with open(path, "w") as fh:
        fh.write("delta = 0.001\nT = 1.0\nextension = StationaryOrbit\n")
        fh.write("0 0.0 0.0 1.0 0.0 1.0\n")
        fh.write("2 0.5 0.0 1.0 0.0 1.0\n")
    with pytest.raises(gf.ChainError):
        gf.load_chain(path)


def test_load_rejects_malformed_row(tmp_path):
    path = os.path.join(tmp_path, "bad.txt")
    with open(path, "w") as fh:
        fh.write("delta = 0.001\nT = 1.0\n0 0.0 0.0 1.0\n")
    with pytest.raises(gf.ChainError):
        gf.load_chain(path)
