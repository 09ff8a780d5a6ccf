"""Area-preserving twist maps on the annulus and the climbing obstruction.

The sandbox isolates the instability mechanism: detect invariant circles,
build a pseudo-orbit that climbs across them with jumps below delta', and
certify by brute force that no true orbit matches it.  Twist pseudo-orbits
embed back into the geodesic world through a section coordinate map and the
actual return-time solver.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricField, UnitCotangentState
from .integrator import FlowSettings
from .poincare import TransversalSection, ClosedOrbit, return_map
from .shadowing import PseudoGeodesic, validate_chain

TWO_PI = 2.0 * math.pi


class TransitSearchError(RuntimeError):
    """Zone transit search hit the iteration cap; carries the stuck zone."""

    def __init__(self, msg, zone=None, explored_r=None, steps=None):
        super().__init__(msg)
        self.zone = zone
        self.explored_r = explored_r
        self.steps = steps


class EmbeddingError(RuntimeError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


def _wrap01(x):
    return x % 1.0


def _circle_gap(a, b):
    """Distance on the unit circle."""
    return np.abs((np.asarray(a) - np.asarray(b) + 0.5) % 1.0 - 0.5)


def annulus_distance(z, w):
    """max of wrapped angular gap and radial gap; the sandbox metric."""
    return float(max(_circle_gap(z[0], w[0]), abs(z[1] - w[1])))


@dataclass
class TwistMapParams:
    """One shipped twist family on the annulus T x [r_lo, r_hi].

    The step closures return the angular image unwrapped, so lifted
    increments come for free.  Generating-function families are exactly
    area preserving by construction.
    """

    family: str
    domain: tuple
    tau: float | None
    params: dict
    _apply: callable = field(repr=False, compare=False, default=None)
    _jacobian: callable = field(repr=False, compare=False, default=None)
    _apply_inverse: callable = field(repr=False, compare=False, default=None)
    _apply_batch: callable = field(repr=False, compare=False, default=None)
    _inverse_batch: callable = field(repr=False, compare=False, default=None)

    def contains(self, point):
        return self.domain[0] <= point[1] <= self.domain[1]


def integrable_normal_form(tau: float, domain=(-1.0, 1.0)) -> TwistMapParams:
    """Q(theta, r) = (theta + tau r, r); F = G = 0."""
    if tau == 0.0:
        raise ValueError("twist constant tau must be nonzero")

    def apply_(th, r):
        return th + tau * r, r

    def jac(th, r):
        return np.array([[1.0, tau], [0.0, 1.0]])

    def inv(th, r):
        return th - tau * r, r

    def batch(th, r):
        return th + tau * r, r

    def inv_batch(th, r):
        return th - tau * r, r

    return TwistMapParams("integrable-normal-form", tuple(domain), tau,
                          {"tau": tau}, apply_, jac, inv, batch, inv_batch)


def perturbed_normal_form(tau: float, eta: float,
                          domain=(-1.0, 1.0)) -> TwistMapParams:
    """Twist from the generating function (theta'-theta)^2 (1/(2 tau) + eta cos 2 pi theta).

    Implicit r = -h_1, r' = h_2 keeps the map exactly area preserving and
    fixes the segment r = 0 pointwise.
    """
    if tau == 0.0:
        raise ValueError("twist constant tau must be nonzero")
    if abs(eta) >= 1.0 / (2.0 * abs(tau)):
        raise ValueError("eta too large: generating function loses convexity")

    def b(th):
        return 1.0 / (2.0 * tau) + eta * math.cos(TWO_PI * th)

    def bp(th):
        return -TWO_PI * eta * math.sin(TWO_PI * th)

    def bpp(th):
        return -TWO_PI * TWO_PI * eta * math.cos(TWO_PI * th)

    def solve_forward(th, r):
        bb, bb1 = b(th), bp(th)
        d = tau * r
        for _ in range(50):
            g = 2.0 * d * bb - d * d * bb1 - r
            gp = 2.0 * bb - 2.0 * d * bb1
            step = g / gp
            d -= step
            if abs(step) < 1e-15 * (1.0 + abs(d)):
                break
        return d

    def apply_(th, r):
        d = solve_forward(th, r)
        return th + d, 2.0 * d * b(th)

    def jac(th, r):
        d = solve_forward(th, r)
        bb, bb1, bb2 = b(th), bp(th), bpp(th)
        h11 = 2.0 * bb - 4.0 * d * bb1 + d * d * bb2
        h12 = -2.0 * bb + 2.0 * d * bb1
        h22 = 2.0 * bb
        return np.array([
            [-h11 / h12, -1.0 / h12],
            [h12 - h22 * h11 / h12, -h22 / h12],
        ])

    def inv(th1, r1):
        d = tau * r1
        for _ in range(50):
            th = th1 - d
            g = 2.0 * d * b(th) - r1
            gp = 2.0 * b(th) - 2.0 * d * bp(th)
            step = g / gp
            d -= step
            if abs(step) < 1e-15 * (1.0 + abs(d)):
                break
        th = th1 - d
        return th, 2.0 * d * b(th) - d * d * bp(th)

    def batch(th, r):
        th = np.asarray(th, dtype=float)
        r = np.asarray(r, dtype=float)
        bb = 1.0 / (2.0 * tau) + eta * np.cos(TWO_PI * th)
        bb1 = -TWO_PI * eta * np.sin(TWO_PI * th)
        d = tau * r
        for _ in range(50):
            g = 2.0 * d * bb - d * d * bb1 - r
            gp = 2.0 * bb - 2.0 * d * bb1
            step = g / gp
            d = d - step
            if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(d))):
                break
        return th + d, 2.0 * d * bb

    def inv_batch(th1, r1):
        th1 = np.asarray(th1, dtype=float)
        r1 = np.asarray(r1, dtype=float)
        d = tau * r1
        for _ in range(50):
            th = th1 - d
            bb = 1.0 / (2.0 * tau) + eta * np.cos(TWO_PI * th)
            bb1 = -TWO_PI * eta * np.sin(TWO_PI * th)
            g = 2.0 * d * bb - r1
            gp = 2.0 * bb - 2.0 * d * bb1
            step = g / gp
            d = d - step
            if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(d))):
                break
        th = th1 - d
        bb = 1.0 / (2.0 * tau) + eta * np.cos(TWO_PI * th)
        bb1 = -TWO_PI * eta * np.sin(TWO_PI * th)
        return th, 2.0 * d * bb - d * d * bb1

    return TwistMapParams("perturbed-normal-form", tuple(domain), tau,
                          {"tau": tau, "eta": eta},
                          apply_, jac, inv, batch, inv_batch)


def standard_map(k: float, domain=(0.0, 1.0)) -> TwistMapParams:
    """r' = r - (k/2 pi) sin(2 pi theta), theta' = theta + r' (kick form)."""
    c = k / TWO_PI

    def apply_(th, r):
        r1 = r - c * math.sin(TWO_PI * th)
        return th + r1, r1

    def jac(th, r):
        kc = k * math.cos(TWO_PI * th)
        return np.array([[1.0 - kc, 1.0], [-kc, 1.0]])

    def inv(th1, r1):
        th = th1 - r1
        return th, r1 + c * math.sin(TWO_PI * th)

    def batch(th, r):
        r1 = r - c * np.sin(TWO_PI * np.asarray(th, dtype=float))
        return th + r1, r1

    def inv_batch(th1, r1):
        th = np.asarray(th1, dtype=float) - r1
        return th, r1 + c * np.sin(TWO_PI * th)

    return TwistMapParams("standard-map", tuple(domain), 1.0, {"k": k},
                          apply_, jac, inv, batch, inv_batch)


@dataclass
class TwistStep:
    point: tuple
    jacobian: np.ndarray
    in_domain: bool


def twist_step(params: TwistMapParams, point) -> TwistStep:
    """One map application; leaving the annulus is a signal, not an error."""
    th, r = float(point[0]), float(point[1])
    if not params.contains((th, r)):
        raise ValueError(f"point r = {r} outside annulus {params.domain}")
    th1, r1 = params._apply(th, r)
    jac = params._jacobian(th, r)
    return TwistStep((_wrap01(th1), r1), jac,
                     params.domain[0] <= r1 <= params.domain[1])


# -- rotation numbers ---------------------------------------------------------------


@dataclass
class RotationNumberEstimate:
    value: float
    error_bar: float
    iterations: int
    flagged: bool

    def __float__(self):
        return self.value


def rotation_number(params: TwistMapParams, point, n: int) -> RotationNumberEstimate:
    """Birkhoff average of lifted angular increments with the 1/N error bar.

    Domain exit truncates the orbit and flags the partial estimate.
    """
    th, r = float(point[0]), float(point[1])
    total = 0.0
    used = 0
    flagged = False
    for _ in range(n):
        th1, r1 = params._apply(th, r)
        total += th1 - th
        used += 1
        th, r = _wrap01(th1), r1
        if not (params.domain[0] <= r <= params.domain[1]):
            flagged = True
            break
    if used == 0:
        raise ValueError("need at least one iteration")
    return RotationNumberEstimate(total / used, 1.0 / used, used, flagged)


def _wb_rho(params, th0, r0, n):
    """Weighted Birkhoff rotation number; superconvergent on KAM circles."""
    th, r = th0, r0
    num = 0.0
    den = 0.0
    apply_ = params._apply
    for i in range(1, n):
        th1, r1 = apply_(th, r)
        s = i / n
        w = math.exp(-1.0 / (s * (1.0 - s)))
        num += w * (th1 - th)
        den += w
        th, r = _wrap01(th1), r1
    return num / den


# -- invariant circles ---------------------------------------------------------------


@dataclass
class InvariantCircleEstimate:
    rotation_number: float
    graph_samples: np.ndarray
    invariance_residual: float
    lipschitz_bound: float

    def psi(self, theta):
        """Periodic linear interpolation of the graph."""
        samples = self.graph_samples
        m = len(samples)
        pos = _wrap01(np.asarray(theta, dtype=float)) * m
        j = np.floor(pos).astype(int) % m
        frac = pos - np.floor(pos)
        out = samples[j] * (1.0 - frac) + samples[(j + 1) % m] * frac
        return out if out.ndim else float(out)

    def radial_level(self):
        return float(np.mean(self.graph_samples))


@dataclass
class CircleAbsence:
    target_rho: float
    candidate_radius: float
    band: tuple
    witness_seed: tuple
    witness_r_range: tuple
    iterations: int


def _iterate_lift(params, th0, r0, n):
    lifts = np.empty(n)
    rs = np.empty(n)
    th, r = th0, r0
    lift = th0
    apply_ = params._apply
    for i in range(n):
        lifts[i] = lift
        rs[i] = r
        th1, r1 = apply_(th, r)
        lift += th1 - th
        th, r = _wrap01(th1), r1
    return lifts, rs


def _wb_weights(n):
    s = np.arange(1, n) / n
    return np.concatenate([[0.0], np.exp(-1.0 / (s * (1.0 - s)))])


def _fit_circle(params, th0, r0, n=65536, modes=96):
    """Fourier coefficients of the conjugacy theta(t) = t + u(t), r(t) = R(t)."""
    lifts, rs = _iterate_lift(params, th0, r0, n)
    w = _wb_weights(n)
    wsum = w.sum()
    inc = np.diff(lifts)
    rho = float(np.sum(w[1:] * inc) / np.sum(w[1:]))
    ns = np.arange(n)
    tgrid = ns * rho
    u = lifts - ns * rho
    ms = np.arange(-modes, modes + 1)
    phase = np.exp(-2j * math.pi * np.outer(ms, tgrid))
    cu = phase @ (w * u) / wsum
    cr = phase @ (w * rs) / wsum
    return rho, ms, cu, cr


def _eval_series(ms, coeffs, t):
    t = np.atleast_1d(t)
    return np.real(np.exp(2j * math.pi * np.outer(t, ms)) @ coeffs)


def _eval_series_deriv(ms, coeffs, t):
    t = np.atleast_1d(t)
    return np.real(np.exp(2j * math.pi * np.outer(t, ms))
                   @ (2j * math.pi * ms * coeffs))


def _graph_from_fit(ms, cu, cr, m_grid):
    """Invert theta(t) = t + u(t) on a uniform theta grid, sample R there."""
    thetas = np.arange(m_grid) / m_grid
    # the mean of u is a phase offset; Newton from t = theta - <u>
    t = thetas - np.real(cu[len(cu) // 2])
    for _ in range(60):
        f = t + _eval_series(ms, cu, t) - thetas
        fp = 1.0 + _eval_series_deriv(ms, cu, t)
        step = f / fp
        t = t - step
        if np.max(np.abs(step)) < 1e-14:
            break
    psi = _eval_series(ms, cr, t)
    dpsi = _eval_series_deriv(ms, cr, t) / (1.0 + _eval_series_deriv(ms, cu, t))
    return thetas, psi, t, float(np.max(np.abs(dpsi)))


def detect_invariant_circle(
    params: TwistMapParams,
    target_rho: float,
    tolerance: float = 1e-8,
    m_grid: int = 8192,
    n_orbit: int = 65536,
    modes: int = 96,
    transport_iterations: int = 200000,
):
    """Circle with the target rotation number, or absence at this resolution.

    Bisection on the initial radius against weighted Birkhoff rotation
    numbers locates the candidate; a Fourier fit of the conjugacy produces
    the graph.  Failure returns the obstruction witness: an orbit whose
    radial transport crosses the candidate band both ways.
    """
    lo_dom, hi_dom = params.domain
    if params.family == "integrable-normal-form":
        r_star = target_rho / params.tau
        if not (lo_dom <= r_star <= hi_dom):
            raise ValueError("target rotation number outside the twist range")
        samples = np.full(m_grid, r_star)
        return InvariantCircleEstimate(target_rho, samples, 0.0, 0.0)

    tau_eff = params.tau if params.tau else 1.0
    guess = target_rho / tau_eff
    lo = max(lo_dom, guess - 0.08)
    hi = min(hi_dom, guess + 0.08)
    if lo >= hi:
        raise ValueError("target rotation number outside the twist range")
    n_scan = 20000
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if _wb_rho(params, 0.0, mid, n_scan) < target_rho:
            lo = mid
        else:
            hi = mid
    r_star = 0.5 * (lo + hi)

    # two window lengths agree only on a quasi-periodic closure
    rho_a = _wb_rho(params, 0.0, r_star, 40000)
    rho_b = _wb_rho(params, 0.0, r_star, 120000)
    converged = abs(rho_a - rho_b) < 1e-9 and abs(rho_b - target_rho) < 1e-6
    residual = math.inf
    if converged:
        rho, ms, cu, cr = _fit_circle(params, 0.0, r_star, n_orbit, modes)
        thetas, psi, tgrid, lip = _graph_from_fit(ms, cu, cr, m_grid)
        # conjugacy residual: Q(circle(t)) vs circle(t + rho)
        t_chk = np.arange(1024) / 1024
        th_c = t_chk + _eval_series(ms, cu, t_chk)
        r_c = _eval_series(ms, cr, t_chk)
        th_n, r_n = params._apply_batch(th_c, r_c)
        th_e = (t_chk + rho) + _eval_series(ms, cu, t_chk + rho)
        r_e = _eval_series(ms, cr, t_chk + rho)
        conj_res = float(np.max(np.maximum(_circle_gap(th_n, th_e),
                                           np.abs(r_n - r_e))))
        # graph residual on the reported samples: map them, compare vertically
        th_m, r_m = params._apply_batch(thetas, psi)
        est = InvariantCircleEstimate(rho, psi, 0.0, lip)
        vert = float(np.max(np.abs(r_m - est.psi(th_m))))
        residual = max(conj_res, vert)
        if residual <= tolerance:
            est.invariance_residual = residual
            return est

    # absence: find one orbit crossing the candidate radial band both ways
    band_half = max(10.0 * tolerance, 0.01)
    band = (r_star - band_half, r_star + band_half)
    for th0 in (0.0, 0.13, 0.29, 0.47, 0.61, 0.83):
        for dr in (0.0, 0.5 * band_half, -0.5 * band_half):
            th, r = th0, r_star + dr
            r_min = r_max = r
            for i in range(transport_iterations):
                th1, r1 = params._apply(th, r)
                th, r = _wrap01(th1), r1
                if r < r_min:
                    r_min = r
                if r > r_max:
                    r_max = r
                if r_min < band[0] and r_max > band[1]:
                    return CircleAbsence(target_rho, r_star, band,
                                         (th0, r_star + dr), (r_min, r_max),
                                         i + 1)
    raise TransitSearchError(
        f"no circle at rho = {target_rho} (residual {residual:.3e}) and no "
        "transport witness within the iteration cap",
        zone=band, explored_r=None, steps=transport_iterations,
    )


# -- climbing pseudo-orbits ------------------------------------------------------------


@dataclass
class TwistPseudoOrbit:
    points: np.ndarray
    jump_log: list
    delta_prime: float
    spacing: int
    transits: list


def build_climbing_pseudo_orbit(
    params: TwistMapParams,
    circles,
    delta_prime: float,
    min_spacing: int,
    transit_cap: int = 500000,
    transit_patience: int | None = None,
) -> TwistPseudoOrbit:
    """Pseudo-orbit from the lowest circle to the top one, jumps under delta'.

    Per zone the orbit hops off the source circle with one climb jump, rides
    the true map until the image lands within delta' below the next graph,
    and jumps onto it (logged as zone-transit).  Families that transport
    nothing radially (integrable) exhaust the patience budget instead and
    climb a ladder of equal rungs, each strictly below delta'.  Every jump is
    radial with 0 < jump < delta'; logged indices name the landing vertex.
    A heteroclinic-hop jump type exists in the log schema but this builder
    never synthesizes one.
    """
    if delta_prime <= 0.0:
        raise ValueError("delta_prime must be positive")
    ordered = sorted(circles, key=lambda c: c.radial_level())
    levels = [c.radial_level() for c in ordered]
    if len(ordered) < 2:
        raise ValueError("need at least two circles to climb")
    integrable = params.family == "integrable-normal-form"
    if transit_patience is None:
        # interior circles survive inside a zone and block pure transport,
        # so even chaotic families get a finite patience before laddering
        transit_patience = 0 if integrable else 200

    th = 0.0
    r = float(ordered[0].psi(0.0))
    pts = [(th, r)]
    jump_log = []
    transits = []
    since_jump = 0
    # settle on the bottom circle first: the backward tail is a real orbit
    for _ in range(min_spacing):
        th1, r1 = params._apply(th, r)
        th, r = _wrap01(th1), r1
        pts.append((th, r))
        since_jump += 1

    for target in ordered[1:]:
        waited = 0
        detached = integrable  # the ladder needs no hop off the circle
        hopped = False
        transit_start = len(pts) - 1
        while True:
            gap = float(target.psi(th)) - r
            if gap <= 0.0:
                break
            if since_jump >= min_spacing:
                th1, r1 = params._apply(th, r)
                landing = float(target.psi(_wrap01(th1)))
                jump = landing - r1
                if 0.0 < jump < delta_prime:
                    kind = "zone-transit" if hopped and waited > 0 else "climb"
                    th, r = _wrap01(th1), landing
                    pts.append((th, r))
                    jump_log.append((len(pts) - 1, jump, kind))
                    if waited > 0:
                        transits.append((transit_start, waited))
                    since_jump = 0
                    break
                if not detached:
                    # hop off the source circle into the zone
                    hop = min(0.999 * delta_prime, 0.5 * gap)
                    th, r = _wrap01(th1), r1 + hop
                    pts.append((th, r))
                    jump_log.append((len(pts) - 1, hop, "climb"))
                    since_jump = 0
                    waited = 0
                    detached = True
                    hopped = True
                    continue
                if waited >= transit_patience:
                    # no natural approach: climb a rung of the ladder
                    n_rungs = math.floor(gap / delta_prime) + 1
                    rung = gap / n_rungs
                    th, r = _wrap01(th1), r1 + rung
                    pts.append((th, r))
                    jump_log.append((len(pts) - 1, rung, "climb"))
                    since_jump = 0
                    waited = 0
                    continue
            th1, r1 = params._apply(th, r)
            th, r = _wrap01(th1), r1
            pts.append((th, r))
            since_jump += 1
            waited += 1
            if waited > transit_cap:
                seen = [p[1] for p in pts[transit_start:]]
                raise TransitSearchError(
                    "transit search exceeded the iteration cap between "
                    f"levels {levels}",
                    zone=(levels[0], float(target.radial_level())),
                    explored_r=(min(seen), max(seen)),
                    steps=waited,
                )

    gaps = [jump_log[i + 1][0] - jump_log[i][0] for i in range(len(jump_log) - 1)]
    spacing = min(gaps) if gaps else len(pts)
    return TwistPseudoOrbit(np.array(pts), jump_log, delta_prime, spacing,
                            transits)


# -- brute-force certificates ----------------------------------------------------------


def circle_distance(a: InvariantCircleEstimate, b: InvariantCircleEstimate,
                    n_grid: int = 2048) -> float:
    """min over sample pairs of the annulus distance between two graphs."""
    ta = np.arange(len(a.graph_samples)) / len(a.graph_samples)
    tb = np.arange(len(b.graph_samples)) / len(b.graph_samples)
    if len(ta) > n_grid:
        ta = ta[:: len(ta) // n_grid]
    if len(tb) > n_grid:
        tb = tb[:: len(tb) // n_grid]
    ra = a.psi(ta)
    rb = b.psi(tb)
    dth = _circle_gap(ta[:, None], tb[None, :])
    dr = np.abs(ra[:, None] - rb[None, :])
    return float(np.min(np.maximum(dth, dr)))


@dataclass
class NonShadowCertificate:
    eps_prime: float
    grid: dict
    per_cell_best: np.ndarray
    conclusion: str
    wall_time: float
    offset_slack: int

    @property
    def min_best_distance(self):
        return float(self.per_cell_best.min())


def certify_non_shadowable(
    params: TwistMapParams,
    pseudo_orbit: TwistPseudoOrbit,
    circles,
    grid_resolution: int,
    offset_slack: int = 5,
) -> NonShadowCertificate:
    """Exhaustive sweep: does any true orbit match the pseudo-orbit vertices?

    Every grid initial condition (plus the pseudo-orbit's own start) is
    iterated along the vertex sequence with index offsets up to the slack;
    a cell dies once its running sup distance reaches eps'.  Not-shadowed
    means every cell died or finished at >= eps'.
    """
    t0 = time.time()
    eps_prime = 0.5 * min(
        circle_distance(a, b)
        for i, a in enumerate(circles)
        for b in circles[i + 1:]
    )
    r_lo, r_hi = params.domain
    spacing_theta = 1.0 / grid_resolution
    spacing_r = (r_hi - r_lo) / grid_resolution
    if max(spacing_theta, spacing_r) > eps_prime / 4.0:
        raise ValueError(
            f"grid spacing {max(spacing_theta, spacing_r):.3e} coarser than "
            f"eps'/4 = {eps_prime / 4.0:.3e}; refuse to certify"
        )
    verts = pseudo_orbit.points
    n_vert = len(verts)
    v_th = verts[:, 0]
    v_r = verts[:, 1]

    cell_th = (np.arange(grid_resolution) + 0.5) * spacing_theta
    cell_r = r_lo + (np.arange(grid_resolution) + 0.5) * spacing_r
    th0 = np.repeat(cell_th, grid_resolution)
    r0 = np.tile(cell_r, grid_resolution)
    # the exact start vertex rides along: zero-jump controls must match
    th0 = np.concatenate([th0, [verts[0, 0]]])
    r0 = np.concatenate([r0, [verts[0, 1]]])
    n_seed = len(th0)

    best = np.full(n_seed, np.inf)
    for offset in range(-offset_slack, offset_slack + 1):
        th, r = th0.copy(), r0.copy()
        for _ in range(abs(offset)):
            if offset > 0:
                th, r = params._apply_batch(th, r)
            else:
                th, r = params._inverse_batch(th, r)
        th = th % 1.0
        alive = np.arange(n_seed)
        runmax = np.zeros(n_seed)
        for n in range(n_vert):
            d = np.maximum(_circle_gap(th, v_th[n]), np.abs(r - v_r[n]))
            runmax[alive] = np.maximum(runmax[alive], d)
            keep = runmax[alive] < eps_prime
            # a dead cell keeps its capped sup; it can never beat eps'
            alive = alive[keep]
            th = th[keep]
            r = r[keep]
            if len(alive) == 0:
                break
            if n + 1 < n_vert:
                th, r = params._apply_batch(th, r)
                th = th % 1.0
        best = np.minimum(best, runmax)

    conclusion = ("not-shadowed-at-resolution"
                  if np.all(best >= eps_prime) else "shadowed")
    grid_desc = {
        "resolution": grid_resolution,
        "theta_spacing": spacing_theta,
        "r_spacing": spacing_r,
        "r_range": [r_lo, r_hi],
        "cells": grid_resolution * grid_resolution,
        "extra_seeds": 1,
    }
    return NonShadowCertificate(eps_prime, grid_desc, best, conclusion,
                                time.time() - t0, offset_slack)


# -- embedding into the geodesic world ------------------------------------------------


def flat_section_coordinate_map(tau: float = 1.0):
    """Annulus chart into the flat-torus section {u = 0}.

    (theta, r) -> x = (0, 2 pi theta), p = (1, tau r) / |(1, tau r)|; the
    section return map is then exactly the integrable twist by tau, with
    return time 2 pi sqrt(1 + (tau r)^2).
    """

    def h_inv(theta, r):
        s = tau * r
        scale = 1.0 / math.sqrt(1.0 + s * s)
        return UnitCotangentState(
            (0.0, TWO_PI * _wrap01(theta)),
            (scale, s * scale),
        )

    return h_inv


def embed_as_pseudo_geodesic(
    metric: MetricField,
    orbit: ClosedOrbit,
    section: TransversalSection,
    twist_po: TwistPseudoOrbit,
    coordinate_map,
    T: float | None = None,
    settings: FlowSettings = FlowSettings(),
) -> PseudoGeodesic:
    """Chain whose vertices are the mapped twist vertices, times from the solver.

    Each segment duration is the measured first return to the section; delta
    is set from the measured jumps, T from the slowest return unless given.
    """
    ell = orbit.period
    states = []
    times = []
    for idx, (th, r) in enumerate(twist_po.points):
        state = coordinate_map(th, r)
        try:
            _, t_ret = return_map(metric, section, state, 1.75 * ell, settings)
        except Exception as exc:
            raise EmbeddingError(
                f"return-time solve failed at vertex {idx}: {exc}", index=idx
            ) from exc
        states.append(state)
        times.append(t_ret)
    chain = PseudoGeodesic(states, times, 0.0, 0.0, 0)
    _, jumps = validate_chain(metric, chain, math.inf, 0.0, settings)
    worst = max((g for _, g in jumps), default=0.0)
    chain.delta = worst * (1.0 + 1e-9) + 1e-14
    chain.T = min(times) if T is None else T
    if any(t < chain.T for t in times):
        bad = min(range(len(times)), key=lambda i: times[i])
        raise EmbeddingError(
            f"return time {times[bad]:.6f} at vertex {bad} below T = {chain.T}",
            index=bad,
        )
    return chain
