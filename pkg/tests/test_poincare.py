import math

import numpy as np
import pytest

import geoflow as gf

TWO_PI = 2.0 * math.pi
COSH_2PI = 2.0 * math.cosh(TWO_PI)
COS_2PI_SQRT3 = 2.0 * math.cos(TWO_PI * math.sqrt(3.0))


@pytest.fixture(scope="module")
def torus():
    return gf.torus_of_revolution()


@pytest.fixture(scope="module")
def inner_orbit(torus):
    seed = gf.renormalize_energy(
        torus, gf.CotangentState((0.0, math.pi + 0.02), (1.0, 0.0))
    )
    return gf.find_periodic_orbit(torus, seed, 6.3)


@pytest.fixture(scope="module")
def outer_orbit(torus):
    seed = gf.renormalize_energy(torus, gf.CotangentState((0.0, 0.03), (3.0, 0.0)))
    return gf.find_periodic_orbit(torus, seed, 6.0 * math.pi)


@pytest.fixture(scope="module")
def inner_dp(torus, inner_orbit):
    return gf.transversal_linear_poincare(torus, inner_orbit)


@pytest.fixture(scope="module")
def outer_dp(torus, outer_orbit):
    return gf.transversal_linear_poincare(torus, outer_orbit)


# -- return map ----------------------------------------------------------------


def test_flat_return_time_is_circumference():
    flat = gf.flat_torus()
    base = gf.unit_state(flat, (0.0, 1.0), (1.0, 0.0))
    sec = gf.coordinate_section(flat, base)
    out, theta = gf.return_map(flat, sec, base, 10.0)
    assert theta == pytest.approx(TWO_PI, abs=1e-9)
    assert gf.shell_distance(flat.chart, out, base) < 1e-10
    assert abs(sec.normal_functional(out)) <= 1e-10


def test_returns_compose(torus, inner_orbit):
    sec = gf.coordinate_section(torus, inner_orbit.start, axis=0)
    st1, th1 = gf.return_map(torus, sec, inner_orbit.start, 10.0)
    st2, th2 = gf.return_map(torus, sec, st1, 10.0)
    assert th1 + th2 == pytest.approx(2.0 * inner_orbit.period, abs=1e-6)
    # periodic point is a fixed point of the return map
    assert gf.shell_distance(torus.chart, st1, inner_orbit.start) < 1e-8


def test_no_return_raises():
    flat = gf.flat_torus()
    base = gf.unit_state(flat, (0.0, 1.0), (0.6, 0.8))
    sec = gf.coordinate_section(flat, base, axis=1)
    drifting = gf.unit_state(flat, (0.0, 2.5), (1.0, 0.0))
    with pytest.raises(gf.NoReturnError):
        gf.return_map(flat, sec, drifting, 20.0)


def test_section_requires_transversal_base(torus):
    equator = gf.unit_state(torus, (0.0, 0.0), (3.0, 0.0))
    with pytest.raises(gf.TransversalityError):
        gf.coordinate_section(torus, equator, axis=1)


# -- periodic orbit search -----------------------------------------------------


def test_inner_equator_found(inner_orbit):
    assert inner_orbit.period == pytest.approx(TWO_PI, abs=1e-9)
    assert inner_orbit.residual <= 1e-8
    assert inner_orbit.start.x[1] == pytest.approx(math.pi, abs=1e-9)
    assert not inner_orbit.flagged


def test_outer_equator_found(outer_orbit):
    assert outer_orbit.period == pytest.approx(6.0 * math.pi, abs=1e-9)
    assert outer_orbit.residual <= 1e-8


def test_flat_orbit_and_subperiod_reduction():
    flat = gf.flat_torus()
    seed = gf.unit_state(flat, (0.0, 0.5), (1.0, 0.0))
    orbit = gf.find_periodic_orbit(flat, seed, 2.0 * TWO_PI)
    # guess was the double cover; the minimal period is returned and flagged
    assert orbit.period == pytest.approx(TWO_PI, abs=1e-9)
    assert orbit.flagged
    assert len(orbit.samples) == 257


def test_search_failure_carries_iterates(torus):
    seed = gf.renormalize_energy(torus, gf.CotangentState((0.0, 2.0), (0.4, 0.9)))
    with pytest.raises(gf.OrbitSearchError) as exc:
        gf.find_periodic_orbit(torus, seed, 5.0, max_newton_iters=3)
    assert len(exc.value.iterates) >= 1


# -- linear return map vs Jacobi oracles ----------------------------------------


def test_inner_trace_matches_jacobi(inner_dp):
    trace = np.trace(inner_dp)
    assert abs(trace - COSH_2PI) / COSH_2PI < 1e-3


def test_outer_trace_matches_jacobi(outer_dp):
    assert np.trace(outer_dp) == pytest.approx(COS_2PI_SQRT3, abs=1e-3)


def test_sphere_band_unit_curvature_monodromy_is_identity():
    sph = gf.sphere_band()
    seed = gf.unit_state(sph, (0.0, 0.0), (1.0, 0.0))
    orbit = gf.find_periodic_orbit(sph, seed, TWO_PI)
    dp = gf.transversal_linear_poincare(sph, orbit)
    assert np.trace(dp) == pytest.approx(2.0, abs=1e-4)
    assert np.abs(dp - np.eye(2)).max() < 1e-4


def test_dp_is_area_preserving(inner_dp, outer_dp):
    assert abs(np.linalg.det(inner_dp) - 1.0) <= 1e-5
    assert abs(np.linalg.det(outer_dp) - 1.0) <= 1e-5


def test_trace_independent_of_section_station(torus):
    # u-translation symmetry is broken by the bump, so the two stations
    # exercise genuinely different numerical paths
    pert = gf.apply_conformal_bump(
        torus, gf.ConformalBump((3.0, math.pi), 0.6, 0.003)
    )
    seed = gf.renormalize_energy(pert, gf.CotangentState((0.0, math.pi), (1.0, 0.0)))
    orbit = gf.find_periodic_orbit(pert, seed, 6.3)
    sec_a = gf.coordinate_section(pert, orbit.start, axis=0)
    mid = gf.flow(pert, orbit.start, orbit.period / 3.0)
    sec_b = gf.coordinate_section(pert, mid, axis=0)
    tr_a = np.trace(gf.transversal_linear_poincare(pert, orbit, section=sec_a))
    tr_b = np.trace(gf.transversal_linear_poincare(pert, orbit, section=sec_b))
    assert abs(tr_a - tr_b) < 1e-6


def test_flat_orbit_trace_is_two():
    flat = gf.flat_torus()
    orbit = gf.find_periodic_orbit(flat, gf.unit_state(flat, (0.0, 0.5), (1.0, 0.0)), TWO_PI)
    assert gf.trace_map(flat, orbit) == pytest.approx(2.0, abs=1e-9)


# -- classification -------------------------------------------------------------


def hyperbolic_matrix(mu):
    return np.array([[math.cosh(mu), math.sinh(mu)], [math.sinh(mu), math.cosh(mu)]])


def rotation_matrix(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def test_classify_hyperbolic_multiplier():
    cls = gf.classify_orbit(hyperbolic_matrix(TWO_PI))
    assert cls.kind == "Hyperbolic"
    assert cls.multiplier == pytest.approx(math.exp(TWO_PI), rel=1e-12)


def test_classify_parabolic_boundary():
    cls = gf.classify_orbit(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert cls.kind == "Parabolic"
    assert cls.parabolic_sign == 1
    cls = gf.classify_orbit(np.array([[-1.0, 1.0], [0.0, -1.0]]))
    assert cls.parabolic_sign == -1


def test_classify_elliptic_irrational():
    cls = gf.classify_orbit(rotation_matrix(TWO_PI * math.sqrt(3.0)))
    assert cls.kind == "EllipticIrrational"
    assert cls.rotation_number == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-9)


def test_classify_elliptic_rational_unresolved():
    cls = gf.classify_orbit(rotation_matrix(TWO_PI * 3.0 / 8.0))
    assert cls.kind == "EllipticRationalOrUnresolved"
    assert cls.rotation_number == pytest.approx(3.0 / 8.0, abs=1e-12)
    assert cls.denominator_bound == 64


def test_classify_rejects_non_area_preserving():
    with pytest.raises(ValueError):
        gf.classify_orbit(np.diag([2.0, 1.0]))


def test_classification_trichotomy():
    for tr in np.linspace(-2.8, 2.8, 57):
        cls = gf.classify_orbit(np.array([[tr, -1.0], [1.0, 0.0]]))
        if abs(tr) > 2.0 + 1e-7:
            assert cls.kind == "Hyperbolic"
        elif abs(tr) < 2.0 - 1e-7:
            assert cls.kind.startswith("Elliptic")
        else:
            assert cls.kind == "Parabolic"


def test_torus_equator_classifications(inner_dp, outer_dp):
    inner = gf.classify_orbit(inner_dp)
    assert inner.kind == "Hyperbolic"
    assert inner.multiplier == pytest.approx(math.exp(TWO_PI), rel=1e-3)
    outer = gf.classify_orbit(outer_dp)
    assert outer.kind == "EllipticIrrational"
    assert outer.rotation_number == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-4)


# -- trace perturbation sweep ----------------------------------------------------


def test_sweep_zero_amplitude_is_identity(torus, inner_orbit):
    bump = gf.ConformalBump((3.0, math.pi), 0.6, 0.0)
    sweep = gf.trace_perturbation_sweep(torus, inner_orbit, bump, [0.0])
    assert len(sweep) == 1
    a, c2, tr = sweep[0]
    assert a == 0.0 and c2 == 0.0
    assert tr == pytest.approx(gf.trace_map(torus, inner_orbit), abs=1e-9)


def test_sweep_brackets_the_unperturbed_trace(torus, inner_orbit):
    bump = gf.ConformalBump((3.0, math.pi), 0.6, 0.0)
    sweep = gf.trace_perturbation_sweep(
        torus, inner_orbit, bump, [-0.002, 0.0, 0.002]
    )
    assert len(sweep) == 3
    (a0, c0, t0), (_, c1, t1), (a2, c2, t2) = sweep
    assert c0 > 0 and c1 == 0.0 and c2 > 0
    # linear response dominates: the signed amplitudes land on opposite sides
    assert (t0 - t1) * (t2 - t1) < 0


# -- hyperbolicity certificates ---------------------------------------------------


def test_certificate_single_orbit(inner_orbit, inner_dp):
    lam = math.exp(TWO_PI)
    cert = gf.certify_hyperbolic_set(
        [(inner_orbit, inner_dp)], theta=1.01 / lam, m=inner_orbit.period
    )
    assert cert.holds and not cert.empty
    assert all(m_s >= 0 and m_u >= 0 for m_s, m_u in cert.margins)
    tight = gf.certify_hyperbolic_set(
        [(inner_orbit, inner_dp)], theta=0.99 / lam, m=inner_orbit.period
    )
    assert not tight.holds


def test_certificate_fractional_time_interpolation():
    # lambda = e^(2pi) over period 2pi interpolates to e^(-pi) at m = pi
    flat = gf.flat_torus()
    start = gf.unit_state(flat, (0.0, 0.0), (1.0, 0.0))
    orbit = gf.ClosedOrbit(start=start, period=TWO_PI, residual=0.0, samples=[])
    dp = hyperbolic_matrix(TWO_PI)
    ok = gf.certify_hyperbolic_set([(orbit, dp)], theta=math.exp(-math.pi) * 1.001, m=math.pi)
    assert ok.holds
    bad = gf.certify_hyperbolic_set([(orbit, dp)], theta=math.exp(-math.pi) * 0.999, m=math.pi)
    assert not bad.holds


def test_certificate_refuses_elliptic(inner_orbit, inner_dp, outer_orbit, outer_dp):
    with pytest.raises(gf.CertificationError):
        gf.certify_hyperbolic_set(
            [(inner_orbit, inner_dp), (outer_orbit, outer_dp)], theta=0.5, m=6.0
        )


def test_certificate_vacuous_on_empty():
    cert = gf.certify_hyperbolic_set([], theta=0.5, m=1.0)
    assert cert.holds and cert.empty


def test_manifold_seeds_diagonal_and_invariance(inner_orbit, inner_dp):
    dp = np.diag([math.exp(TWO_PI), math.exp(-TWO_PI)])
    es, eu = gf.local_manifold_seeds(inner_orbit, dp)
    assert np.allclose(es, [0.0, 1.0]) and np.allclose(eu, [1.0, 0.0])
    es, eu = gf.local_manifold_seeds(inner_orbit, inner_dp)
    lams = np.sort(np.abs(np.linalg.eigvals(inner_dp)))
    assert np.abs(inner_dp @ es - lams[0] * es).max() < 1e-8
    assert np.abs(inner_dp @ eu - lams[1] * eu).max() < 1e-8
    with pytest.raises(gf.CertificationError):
        gf.local_manifold_seeds(inner_orbit, rotation_matrix(1.0))


# -- report ----------------------------------------------------------------------


def test_orbit_report_fields(torus, inner_orbit):
    rep = gf.orbit_report(torus, inner_orbit)
    assert rep["kind"] == "Hyperbolic"
    assert rep["trace"] == pytest.approx(COSH_2PI, rel=1e-3)
    assert rep["multiplier"] == pytest.approx(math.exp(TWO_PI), rel=1e-3)
    assert rep["section"]["axis"] == "u"
    assert rep["period"] == pytest.approx(TWO_PI, abs=1e-9)
    assert "rotation_number" not in rep
