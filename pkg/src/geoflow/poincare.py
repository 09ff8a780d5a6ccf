"""Transversal sections, return maps, closed orbits and their linear data.

Sections are level sets of one chart coordinate through a base point,
intersected with the unit shell and oriented by the sign of the crossing
velocity.  The return map marches the flow until an oriented level-set
crossing and polishes the crossing time by Newton on a partial step.  The
2x2 linear return map is the full 4x4 monodromy with the flow direction
removed by return-time correction, compressed to an orthonormal frame of
the section plane; Floquet classification follows from its trace.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import (
    CotangentState,
    MetricField,
    SurfaceChart,
    UnitCotangentState,
    apply_conformal_bump,
    ConformalBump,
    c2_distance,
    eval_hamiltonian,
    hamiltonian_vector_field,
    shell_distance,
)
from .integrator import (
    FlowSettings,
    _flow_monodromy_raw,
    _flow_raw,
    _rhs,
    _state_tuple,
    _step,
    flow,
    flow_samples,
    flow_with_monodromy,
    renormalize_energy,
)


class PoincareError(RuntimeError):
    pass


class NoReturnError(PoincareError):
    pass


class TransversalityError(PoincareError):
    pass


class OrbitSearchError(PoincareError):
    def __init__(self, message, iterates=None):
        super().__init__(message)
        self.iterates = iterates or []


class FrameError(PoincareError):
    pass


class CertificationError(PoincareError):
    pass


def _dh_covector(metric, state):
    # dH = (-dp/dt, dx/dt) read off the canonical equations
    f = hamiltonian_vector_field(metric, state)
    return np.array([-f[2], -f[3], f[0], f[1]])


def _nullspace_frame(rows):
    """Orthonormal basis (4x2) of the common kernel of two covectors."""
    _, s, vt = np.linalg.svd(rows)
    if s.min() < 1e-12 * s.max():
        raise FrameError("degenerate section frame: covectors nearly parallel")
    return vt[2:].T.copy()


@dataclass
class TransversalSection:
    base: UnitCotangentState
    chart: SurfaceChart
    axis: int
    value: float
    direction: float
    in_plane_frame: np.ndarray

    def offset(self, x) -> float:
        """Signed, wrap-minimal distance of coordinate `axis` from the level."""
        lo, hi = (self.chart.u_range, self.chart.v_range)[self.axis]
        periodic = (self.chart.u_periodic, self.chart.v_periodic)[self.axis]
        d = float(x[self.axis]) - self.value
        if periodic:
            span = hi - lo
            d = (d + 0.5 * span) % span - 0.5 * span
        return d

    def normal_functional(self, state: CotangentState) -> float:
        return self.offset(state.x)


def coordinate_section(
    metric: MetricField, base: UnitCotangentState, axis: int | None = None
) -> TransversalSection:
    """Oriented coordinate level-set section through `base`.

    With axis=None the chart coordinate with the larger crossing velocity is
    used, which maximizes transversality of the flow to the section.
    """
    f = hamiltonian_vector_field(metric, base)
    if axis is None:
        axis = 0 if abs(f[0]) >= abs(f[1]) else 1
    speed = f[axis]
    if abs(speed) < 1e-10:
        raise TransversalityError(
            f"flow tangent to the coordinate-{axis} level set at the base point"
        )
    dl = np.zeros(4)
    dl[axis] = 1.0
    frame = _nullspace_frame(np.vstack([dl, _dh_covector(metric, base)]))
    return TransversalSection(
        base=base,
        chart=metric.chart,
        axis=axis,
        value=float(base.x[axis]),
        direction=1.0 if speed > 0 else -1.0,
        in_plane_frame=frame,
    )


def return_map(
    metric: MetricField,
    section: TransversalSection,
    state: UnitCotangentState,
    t_target: float,
    settings: FlowSettings = FlowSettings(),
):
    """First oriented section crossing: (state on section, return time Theta).

    Raises NoReturnError if the flow does not cross within t_target and
    TransversalityError on a grazing (tangential) crossing.
    """
    chart = metric.chart
    axis = section.axis
    lo, hi = (chart.u_range, chart.v_range)[axis]
    span = hi - lo
    h = settings.step
    n_max = max(1, math.ceil(t_target / h))
    z = _state_tuple(state)
    s_prev = section.offset(z[:2])
    elapsed = 0.0
    check = not (chart.u_periodic and chart.v_periodic)
    for _ in range(n_max):
        z_next = _step(metric, z, h, settings.tol, settings.max_newton_iters)
        if check:
            from .integrator import _check_domain

            _check_domain(chart, z_next[0], z_next[1])
        s_next = section.offset(z_next[:2])
        crossed = (
            s_prev * section.direction < 0.0 <= s_next * section.direction
            and abs(s_next - s_prev) < 0.25 * span
        )
        if crossed:
            sigma = h * s_prev / (s_prev - s_next)
            zc, sc = z_next, s_next
            for _ in range(12):
                zc = _step(metric, z, sigma, settings.tol, settings.max_newton_iters)
                sc = section.offset(zc[:2])
                sdot = _rhs(metric.aval, metric.agrad, *zc)[axis]
                if abs(sdot) < 1e-8:
                    raise TransversalityError("grazing section crossing")
                if abs(sc) <= 1e-12:
                    break
                sigma = min(max(sigma - sc / sdot, 0.0), h)
            if abs(sc) > 1e-10:
                raise TransversalityError(
                    f"crossing refinement stalled at residual {abs(sc):.2e}"
                )
            out = UnitCotangentState(chart.wrap(zc[:2]), zc[2:])
            return out, elapsed + sigma
        z, s_prev = z_next, s_next
        elapsed += h
    raise NoReturnError(f"no oriented section crossing within time {t_target}")


# -- closed orbits -------------------------------------------------------------


@dataclass
class ClosedOrbit:
    start: UnitCotangentState
    period: float
    residual: float
    samples: list = field(repr=False)
    flagged: bool = False


def _closure_gap(metric, z, t, settings):
    """((wrap dx, dp) 4-vector, end tuple, monodromy 16-list) for phi^t(z) - z."""
    z_end, y = _flow_monodromy_raw(metric, z, t, settings)
    dx = metric.chart.wrap_diff(z_end[:2], z[:2])
    gap = np.array([dx[0], dx[1], z_end[2] - z[2], z_end[3] - z[3]])
    return gap, z_end, y


def _orbit_residual(gap, energy_defect):
    return max(
        math.hypot(gap[0], gap[1]), math.hypot(gap[2], gap[3]), abs(energy_defect)
    )


def find_periodic_orbit(
    metric: MetricField,
    seed: UnitCotangentState,
    period_guess: float,
    settings: FlowSettings = FlowSettings(),
    max_newton_iters: int = 30,
) -> ClosedOrbit:
    """Newton shooting for a closed orbit near `seed`.

    Unknowns are the full phase point and the period; the linear systems are
    solved in the least-squares sense, which suppresses the neutral
    along-the-orbit direction.  Raises OrbitSearchError (with the iterate
    trail attached) if the residual cannot be pushed below 1e-8.
    """
    if period_guess <= 0:
        raise ValueError("period_guess must be positive")
    chart = metric.chart
    z = np.array(_state_tuple(seed))
    t = float(period_guess)
    iterates = []
    res = math.inf
    for _ in range(max_newton_iters):
        gap, z_end, y = _closure_gap(metric, tuple(z), t, settings)
        state_z = CotangentState(chart.wrap(z[:2]), z[2:])
        defect = eval_hamiltonian(metric, state_z) - 0.5
        res = _orbit_residual(gap, defect)
        iterates.append((z.copy(), t, res))
        if res <= 1e-10:
            break
        m = np.array(y).reshape(4, 4)
        f_end = np.array(
            _rhs(metric.aval, metric.agrad, *z_end)
        )
        jac = np.zeros((5, 5))
        jac[:4, :4] = m - np.eye(4)
        jac[:4, 4] = f_end
        jac[4, :4] = _dh_covector(metric, state_z)
        rhs = -np.concatenate([gap, [defect]])
        step_vec, *_ = np.linalg.lstsq(jac, rhs, rcond=None)
        # backtracking keeps the shooting stable far from the orbit; trial
        # states that blow up the integrator just shrink the step
        scale = 1.0
        for _ in range(8):
            z_try = z + scale * step_vec[:4]
            t_try = t + scale * step_vec[4]
            if t_try <= 0.1 * period_guess:
                scale *= 0.5
                continue
            try:
                gap_try, _, _ = _closure_gap(metric, tuple(z_try), t_try, settings)
                defect_try = eval_hamiltonian(
                    metric, CotangentState(chart.wrap(z_try[:2]), z_try[2:])
                ) - 0.5
            except Exception:
                scale *= 0.5
                continue
            if _orbit_residual(gap_try, defect_try) < res:
                z, t = z_try, t_try
                break
            scale *= 0.5
        else:
            break
    if res > 1e-8:
        raise OrbitSearchError(
            f"shooting stalled at residual {res:.3e}", iterates=iterates
        )
    start = UnitCotangentState(chart.wrap(z[:2]), z[2:].copy())
    period = t
    # minimality among integer fractions of the found period
    reduced = True
    while reduced:
        reduced = False
        for k in range(8, 1, -1):
            cand = flow(metric, start, period / k, settings)
            if shell_distance(chart, cand, start) <= 1e-8:
                period /= k
                reduced = True
                break
    end = flow(metric, start, period, settings)
    residual = max(
        shell_distance(chart, end, start),
        abs(eval_hamiltonian(metric, start) - 0.5),
    )
    _, rows = flow_samples(metric, start, period, settings, n_samples=256)
    samples = [UnitCotangentState(r[:2], r[2:4]) for r in rows]
    flagged = abs(period - period_guess) > 0.1 * period_guess
    return ClosedOrbit(
        start=start, period=period, residual=residual, samples=samples, flagged=flagged
    )


# -- linear return map ---------------------------------------------------------


def _project_monodromy(metric, section, matrix):
    """Compress a period monodromy to the section plane at the (closed) base."""
    f_end = hamiltonian_vector_field(metric, section.base)
    denom = f_end[section.axis]
    if abs(denom) < 1e-10:
        raise TransversalityError("flow tangent to the section at the base point")
    frame = section.in_plane_frame
    w = matrix @ frame
    w = w - np.outer(f_end, w[section.axis, :] / denom)
    return frame.T @ w


def transversal_linear_poincare(
    metric: MetricField,
    orbit: ClosedOrbit,
    section: TransversalSection | None = None,
    settings: FlowSettings = FlowSettings(),
) -> np.ndarray:
    """2x2 linear return map of a closed orbit in a section frame.

    The period monodromy is corrected for return-time variation by explicit
    projection along the flow direction onto the section plane.  If the
    automatically chosen coordinate section yields an ill-conditioned frame
    (|det - 1| > 1e-5) the other coordinate is tried before failing.
    """
    if section is not None:
        rec = flow_with_monodromy(metric, section.base, orbit.period, settings)
        dp = _project_monodromy(metric, section, rec.matrix)
        if abs(np.linalg.det(dp) - 1.0) > 1e-5:
            raise FrameError(
                f"section frame failed the area check: det = {np.linalg.det(dp)!r}"
            )
        return dp
    rec = flow_with_monodromy(metric, orbit.start, orbit.period, settings)
    f = hamiltonian_vector_field(metric, orbit.start)
    axes = [0, 1] if abs(f[0]) >= abs(f[1]) else [1, 0]
    last = None
    for axis in axes:
        try:
            sec = coordinate_section(metric, orbit.start, axis=axis)
            dp = _project_monodromy(metric, sec, rec.matrix)
        except (TransversalityError, FrameError) as err:
            last = err
            continue
        if abs(np.linalg.det(dp) - 1.0) <= 1e-5:
            return dp
        last = FrameError(
            f"coordinate-{axis} frame failed the area check: "
            f"det = {np.linalg.det(dp)!r}"
        )
    raise FrameError(f"no well-conditioned coordinate section: {last}")


# -- Floquet classification ----------------------------------------------------


@dataclass
class OrbitClassification:
    kind: str
    trace: float
    eigen_data: np.ndarray
    multiplier: float | None = None
    rotation_number: float | None = None
    denominator_bound: int | None = None
    parabolic_sign: int | None = None


def classify_orbit(
    dp: np.ndarray,
    denominator_bound: int = 64,
    tol: float = 1e-7,
    rho_tol: float = 1e-10,
) -> OrbitClassification:
    """Floquet type from the 2x2 linear return map.

    |trace| > 2+tol is hyperbolic, |trace| < 2-tol elliptic with rotation
    number rho = arccos(trace/2)/2pi, and the band in between parabolic.
    Elliptic orbits are labeled irrational only when rho stays rho_tol away
    from every rational p/q with q <= denominator_bound; float arithmetic
    cannot certify irrationality beyond that sieve.
    """
    dp = np.asarray(dp, dtype=float)
    det = float(np.linalg.det(dp))
    if abs(det - 1.0) > 1e-4:
        raise ValueError(f"not an area-preserving linear map: det = {det!r}")
    trace = float(dp[0, 0] + dp[1, 1])
    eigen = np.linalg.eigvals(dp)
    if abs(trace) > 2.0 + tol:
        lam = 0.5 * (trace + math.copysign(math.sqrt(trace * trace - 4.0), trace))
        return OrbitClassification(
            kind="Hyperbolic", trace=trace, eigen_data=eigen, multiplier=lam
        )
    if abs(trace) < 2.0 - tol:
        rho = math.acos(0.5 * trace) / (2.0 * math.pi)
        for q in range(1, denominator_bound + 1):
            if abs(rho - round(rho * q) / q) <= rho_tol:
                return OrbitClassification(
                    kind="EllipticRationalOrUnresolved",
                    trace=trace,
                    eigen_data=eigen,
                    rotation_number=rho,
                    denominator_bound=denominator_bound,
                )
        return OrbitClassification(
            kind="EllipticIrrational",
            trace=trace,
            eigen_data=eigen,
            rotation_number=rho,
        )
    return OrbitClassification(
        kind="Parabolic",
        trace=trace,
        eigen_data=eigen,
        parabolic_sign=1 if trace > 0 else -1,
    )


# -- trace map and its perturbation --------------------------------------------


def trace_map(metric: MetricField, orbit: ClosedOrbit) -> float:
    return float(np.trace(transversal_linear_poincare(metric, orbit)))


def trace_perturbation_sweep(
    metric: MetricField,
    orbit: ClosedOrbit,
    bump_template: ConformalBump,
    amplitudes,
    settings: FlowSettings = FlowSettings(),
):
    """Sweep conformal bump amplitudes, re-finding the orbit at each one.

    Returns [(amplitude, C2 size of the perturbation, trace)] in the order
    given.  The orbit is continued by Newton from the last success; if the
    continuation fails the sweep is truncated there with a warning.
    """
    results = []
    seed, guess = orbit.start, orbit.period
    for a in amplitudes:
        a = float(a)
        if a == 0.0:
            results.append((0.0, 0.0, trace_map(metric, orbit)))
            continue
        bump = ConformalBump(bump_template.center, bump_template.radius, a)
        perturbed = apply_conformal_bump(metric, bump)
        try:
            cont = find_periodic_orbit(perturbed, seed, guess, settings)
        except (OrbitSearchError, PoincareError) as err:
            warnings.warn(
                f"trace sweep truncated at amplitude {a}: {err}", stacklevel=2
            )
            break
        results.append((a, c2_distance(perturbed, metric), trace_map(perturbed, cont)))
        seed, guess = cont.start, cont.period
    return results


# -- hyperbolicity certificates --------------------------------------------------


@dataclass
class HyperbolicityCertificate:
    theta: float
    m: float
    directions: list
    margins: list
    holds: bool
    empty: bool


def local_manifold_seeds(orbit: ClosedOrbit, dp: np.ndarray):
    """Unit stable/unstable eigendirections of a hyperbolic linear return map."""
    cls = classify_orbit(dp)
    if cls.kind != "Hyperbolic":
        raise CertificationError(f"orbit is {cls.kind}, not hyperbolic")
    evals, evecs = np.linalg.eig(np.asarray(dp, dtype=float))
    order = np.argsort(np.abs(evals))
    out = []
    for idx in order:
        v = np.real(evecs[:, idx])
        v = v / np.linalg.norm(v)
        k = 0 if abs(v[0]) >= abs(v[1]) else 1
        if v[k] < 0:
            v = -v
        out.append(v)
    return out[0], out[1]


def certify_hyperbolic_set(orbits, theta: float, m: float) -> HyperbolicityCertificate:
    """Uniform contraction/expansion certificate for a finite orbit family.

    `orbits` is a list of (ClosedOrbit, 2x2 linear return map) pairs.  Each
    multiplier is interpolated to the common time m through the fractional
    power |lambda|^(m/period); any non-hyperbolic member refuses the whole
    certificate.  An empty family certifies vacuously.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if m <= 0.0:
        raise ValueError("m must be positive")
    if not orbits:
        return HyperbolicityCertificate(
            theta=theta, m=m, directions=[], margins=[], holds=True, empty=True
        )
    directions = []
    margins = []
    holds = True
    for orbit, dp in orbits:
        cls = classify_orbit(dp)
        if cls.kind != "Hyperbolic":
            raise CertificationError(
                f"certification refused: orbit of period {orbit.period:.6g} is {cls.kind}"
            )
        es, eu = local_manifold_seeds(orbit, dp)
        directions.append((es, eu))
        mags = np.sort(np.abs(cls.eigen_data))
        contraction = mags[0] ** (m / orbit.period)
        expansion_inv = mags[1] ** (-(m / orbit.period))
        margins.append((theta - contraction, theta - expansion_inv))
        if contraction > theta or expansion_inv > theta:
            holds = False
    return HyperbolicityCertificate(
        theta=theta, m=m, directions=directions, margins=margins, holds=holds, empty=False
    )


# -- reporting -----------------------------------------------------------------


def orbit_report(
    metric: MetricField,
    orbit: ClosedOrbit,
    denominator_bound: int = 64,
    settings: FlowSettings = FlowSettings(),
) -> dict:
    """JSON-ready summary of a closed orbit and its Floquet data."""
    section = coordinate_section(metric, orbit.start)
    dp = transversal_linear_poincare(metric, orbit, section=section, settings=settings)
    cls = classify_orbit(dp, denominator_bound=denominator_bound)
    out = {
        "period": orbit.period,
        "residual": orbit.residual,
        "trace": cls.trace,
        "kind": cls.kind,
        "section": {
            "axis": "uv"[section.axis],
            "value": section.value,
            "direction": section.direction,
        },
    }
    if cls.rotation_number is not None:
        out["rotation_number"] = cls.rotation_number
    if cls.multiplier is not None:
        out["multiplier"] = cls.multiplier
    if cls.parabolic_sign is not None:
        out["parabolic_sign"] = cls.parabolic_sign
    return out
