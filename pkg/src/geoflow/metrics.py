"""Surface charts, metric fields and conformal perturbations.

A surface is presented in a single chart with coordinates (u, v), each of
which may wrap.  The metric is carried contravariantly: the field A(x) is
the inverse metric matrix, so the geodesic Hamiltonian is

    H(x, p) = 1/2 <A(x) p, p>

and the unit cotangent bundle is the shell H = 1/2.  Every family below
supplies A, its coordinate gradient and its Hessian as closed-form scalar
functions; the integrator consumes those directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SurfaceChart",
    "CotangentState",
    "UnitCotangentState",
    "MetricField",
    "ConformalBump",
    "eval_hamiltonian",
    "hamiltonian_vector_field",
    "legendre_transform",
    "inverse_legendre",
    "gaussian_curvature",
    "apply_conformal_bump",
    "c2_distance",
    "shell_distance",
    "flat_torus",
    "torus_of_revolution",
    "surface_of_revolution",
    "sphere_band",
]


class DomainError(ValueError):
    """A chart point left its coordinate ranges."""


@dataclass(frozen=True)
class SurfaceChart:
    """Single coordinate chart; periodic coordinates identify endpoints."""

    name: str
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    u_periodic: bool = True
    v_periodic: bool = True

    def __post_init__(self):
        if not (self.u_range[1] > self.u_range[0] and self.v_range[1] > self.v_range[0]):
            raise ValueError("chart ranges must be nonempty")

    @property
    def spans(self) -> tuple[float, float]:
        return (self.u_range[1] - self.u_range[0], self.v_range[1] - self.v_range[0])

    def wrap(self, x) -> np.ndarray:
        """Reduce periodic coordinates into range; reject out-of-range otherwise."""
        u, v = float(x[0]), float(x[1])
        lo_u, hi_u = self.u_range
        lo_v, hi_v = self.v_range
        if self.u_periodic:
            u = lo_u + (u - lo_u) % (hi_u - lo_u)
        elif not (lo_u <= u <= hi_u):
            raise DomainError(f"u = {u} outside chart range {self.u_range}")
        if self.v_periodic:
            v = lo_v + (v - lo_v) % (hi_v - lo_v)
        elif not (lo_v <= v <= hi_v):
            raise DomainError(f"v = {v} outside chart range {self.v_range}")
        return np.array([u, v])

    def wrap_diff(self, x, y) -> np.ndarray:
        """Minimal signed coordinate difference x - y, respecting wrapping."""
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        su, sv = self.spans
        if self.u_periodic:
            d[0] = (d[0] + 0.5 * su) % su - 0.5 * su
        if self.v_periodic:
            d[1] = (d[1] + 0.5 * sv) % sv - 0.5 * sv
        return d

    def contains(self, x) -> bool:
        try:
            self.wrap(x)
        except DomainError:
            return False
        return True


@dataclass
class CotangentState:
    """A point (x, p) of the cotangent bundle in chart coordinates."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        self.p = np.asarray(self.p, dtype=float).copy()
        if self.x.shape != (2,) or self.p.shape != (2,):
            raise ValueError("x and p must be 2-vectors")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_vector(cls, z) -> "CotangentState":
        z = np.asarray(z, dtype=float)
        return cls(z[:2], z[2:])


class UnitCotangentState(CotangentState):
    """CotangentState pinned to the energy shell H = 1/2.

    Construct through unit_state or renormalize_energy in the integrator
    module; direct construction checks nothing (the metric is not stored).
    """


def unit_state(metric: "MetricField", x, p, tol: float = 1e-9) -> UnitCotangentState:
    """Checked construction of a shell state."""
    s = UnitCotangentState(x, p)
    h = eval_hamiltonian(metric, s)
    if abs(2.0 * h - 1.0) > tol:
        raise ValueError(f"state off the unit shell: 2H = {2 * h}")
    return s


def shell_distance(chart: SurfaceChart, a: CotangentState, b: CotangentState) -> float:
    """d((x,p),(x',p')) = max(wrapped |dx|, |dp|)."""
    dx = chart.wrap_diff(a.x, b.x)
    dp = a.p - b.p
    return max(math.hypot(dx[0], dx[1]), math.hypot(dp[0], dp[1]))


# The scalar core of a metric family: aval(u,v) returns the contravariant
# components (a11, a12, a22); agrad returns their u- and v-derivatives as a
# flat 6-tuple (a11u, a12u, a22u, a11v, a12v, a22v); ahess returns the nine
# second derivatives (uu, uv, vv blocks of three each).  All closed-form.

Scalar3 = Callable[[float, float], tuple]


@dataclass
class MetricField:
    """Chart-based metric given by its contravariant matrix field A(x)."""

    chart: SurfaceChart
    family_tag: str
    aval: Scalar3
    agrad: Scalar3
    ahess: Scalar3
    curvature_fn: Callable[[float, float], float] | None = None
    bump: "ConformalBump | None" = None
    base: "MetricField | None" = None
    params: dict = field(default_factory=dict)

    def contravariant(self, x) -> np.ndarray:
        u, v = self.chart.wrap(x)
        a11, a12, a22 = self.aval(u, v)
        return np.array([[a11, a12], [a12, a22]])

    def covariant(self, x) -> np.ndarray:
        a = self.contravariant(x)
        det = a[0, 0] * a[1, 1] - a[0, 1] ** 2
        if det <= 0.0:
            raise DomainError("degenerate metric")
        return np.array([[a[1, 1], -a[0, 1]], [-a[0, 1], a[0, 0]]]) / det

    def grad_contravariant(self, x) -> tuple[np.ndarray, np.ndarray]:
        u, v = self.chart.wrap(x)
        g = self.agrad(u, v)
        du = np.array([[g[0], g[1]], [g[1], g[2]]])
        dv = np.array([[g[3], g[4]], [g[4], g[5]]])
        return du, dv


# -- operations ---------------------------------------------------------------


def eval_hamiltonian(metric: MetricField, state: CotangentState) -> float:
    u, v = metric.chart.wrap(state.x)
    a11, a12, a22 = metric.aval(u, v)
    pu, pv = state.p
    return 0.5 * (a11 * pu * pu + 2.0 * a12 * pu * pv + a22 * pv * pv)


def hamiltonian_vector_field(metric: MetricField, state: CotangentState) -> np.ndarray:
    """Right-hand side of the canonical equations, as (du, dv, dpu, dpv)."""
    u, v = metric.chart.wrap(state.x)
    pu, pv = state.p
    a11, a12, a22 = metric.aval(u, v)
    g = metric.agrad(u, v)
    dxu = a11 * pu + a12 * pv
    dxv = a12 * pu + a22 * pv
    dpu = -0.5 * (g[0] * pu * pu + 2.0 * g[1] * pu * pv + g[2] * pv * pv)
    dpv = -0.5 * (g[3] * pu * pu + 2.0 * g[4] * pu * pv + g[5] * pv * pv)
    return np.array([dxu, dxv, dpu, dpv])


def legendre_transform(metric: MetricField, x, v) -> CotangentState:
    """(x, v) -> (x, A(x)^{-1} v): tangent vector to momentum covector."""
    g = metric.covariant(x)
    return CotangentState(np.asarray(x, dtype=float), g @ np.asarray(v, dtype=float))


def inverse_legendre(metric: MetricField, state: CotangentState) -> tuple[np.ndarray, np.ndarray]:
    """(x, p) -> (x, A(x) p): momentum back to velocity."""
    a = metric.contravariant(state.x)
    return state.x.copy(), a @ state.p


def gaussian_curvature(metric: MetricField, x) -> float:
    if metric.curvature_fn is not None:
        u, v = metric.chart.wrap(x)
        return metric.curvature_fn(u, v)
    return _brioschi_fd(metric, x)


def _brioschi_fd(metric: MetricField, x, h: float = 1e-3) -> float:
    """Finite-difference Brioschi formula on the covariant components."""

    def efg(u, v):
        g = metric.covariant(np.array([u, v]))
        return np.array([g[0, 0], g[0, 1], g[1, 1]])

    u0, v0 = metric.chart.wrap(x)
    f0 = efg(u0, v0)
    fu = (efg(u0 + h, v0) - efg(u0 - h, v0)) / (2 * h)
    fv = (efg(u0, v0 + h) - efg(u0, v0 - h)) / (2 * h)
    fuu = (efg(u0 + h, v0) - 2 * f0 + efg(u0 - h, v0)) / h**2
    fvv = (efg(u0, v0 + h) - 2 * f0 + efg(u0, v0 - h)) / h**2
    fuv = (
        efg(u0 + h, v0 + h) - efg(u0 + h, v0 - h) - efg(u0 - h, v0 + h) + efg(u0 - h, v0 - h)
    ) / (4 * h**2)
    E, F, G = f0
    Eu, Fu, Gu = fu
    Ev, Fv, Gv = fv
    Evv, Guu = fvv[0], fuu[2]
    Fuv = fuv[1]
    m1 = np.array(
        [
            [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
            [Fv - 0.5 * Gu, E, F],
            [0.5 * Gv, F, G],
        ]
    )
    m2 = np.array([[0.0, 0.5 * Ev, 0.5 * Gu], [0.5 * Ev, E, F], [0.5 * Gu, F, G]])
    den = (E * G - F * F) ** 2
    return float((np.linalg.det(m1) - np.linalg.det(m2)) / den)


# -- conformal bumps ----------------------------------------------------------


@dataclass(frozen=True)
class ConformalBump:
    """Compactly supported conformal factor exp(2 * amplitude * b(x)).

    b is the rescaled mollifier exp(1 - 1/(1 - s^2)) of the normalized
    chart distance s = |x - center| / radius; b(center) = 1 and b vanishes
    with all derivatives at s = 1.
    """

    center: tuple[float, float]
    radius: float
    amplitude: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("bump radius must be positive")

    def _q(self, chart: SurfaceChart, u: float, v: float):
        w = chart.wrap_diff((u, v), self.center)
        return (w[0] * w[0] + w[1] * w[1]) / (self.radius * self.radius), w

    def phi(self, chart: SurfaceChart, u: float, v: float) -> float:
        q, _ = self._q(chart, u, v)
        if q >= 1.0:
            return 0.0
        return self.amplitude * math.exp(1.0 - 1.0 / (1.0 - q))

    def phi_grad(self, chart: SurfaceChart, u: float, v: float) -> tuple[float, float]:
        q, w = self._q(chart, u, v)
        if q >= 1.0 - 1e-14:
            return (0.0, 0.0)
        b = math.exp(1.0 - 1.0 / (1.0 - q))
        bp = -b / (1.0 - q) ** 2
        c = self.amplitude * bp * 2.0 / self.radius**2
        return (c * w[0], c * w[1])

    def phi_hess(self, chart: SurfaceChart, u: float, v: float) -> tuple[float, float, float]:
        """Second derivatives (uu, uv, vv) of amplitude * b."""
        q, w = self._q(chart, u, v)
        if q >= 1.0 - 1e-14:
            return (0.0, 0.0, 0.0)
        b = math.exp(1.0 - 1.0 / (1.0 - q))
        om = 1.0 - q
        bp = -b / om**2
        bpp = b * (1.0 / om**4 - 2.0 / om**3)
        r2 = self.radius**2
        c1 = self.amplitude * bpp * 4.0 / r2**2
        c2 = self.amplitude * bp * 2.0 / r2
        return (
            c1 * w[0] * w[0] + c2,
            c1 * w[0] * w[1],
            c1 * w[1] * w[1] + c2,
        )


def apply_conformal_bump(metric: MetricField, bump: ConformalBump) -> MetricField:
    """Perturb covariantly by exp(2 a b); the contravariant field scales by
    exp(-2 a b).  Outside the support the base metric is returned bitwise."""
    chart = metric.chart
    su, sv = chart.spans
    # support must fit in one fundamental domain (no self-overlap through a seam)
    if chart.u_periodic and 2.0 * bump.radius >= su:
        raise DomainError("bump support wraps around the u seam")
    if chart.v_periodic and 2.0 * bump.radius >= sv:
        raise DomainError("bump support wraps around the v seam")
    cu, cv = bump.center
    if not chart.u_periodic and not (
        chart.u_range[0] <= cu - bump.radius and cu + bump.radius <= chart.u_range[1]
    ):
        raise DomainError("bump support leaves the non-periodic u range")
    if not chart.v_periodic and not (
        chart.v_range[0] <= cv - bump.radius and cv + bump.radius <= chart.v_range[1]
    ):
        raise DomainError("bump support leaves the non-periodic v range")

    base_aval, base_agrad, base_ahess = metric.aval, metric.agrad, metric.ahess

    def aval(u, v):
        a = base_aval(u, v)
        ph = bump.phi(chart, u, v)
        if ph == 0.0:
            return a
        e = math.exp(-2.0 * ph)
        return (e * a[0], e * a[1], e * a[2])

    def agrad(u, v):
        g = base_agrad(u, v)
        ph = bump.phi(chart, u, v)
        if ph == 0.0 and bump.phi_grad(chart, u, v) == (0.0, 0.0):
            return g
        a = base_aval(u, v)
        pu, pv = bump.phi_grad(chart, u, v)
        e = math.exp(-2.0 * ph)
        out = []
        for k, pk in ((0, pu), (3, pv)):
            for i in range(3):
                out.append(e * (g[k + i] - 2.0 * pk * a[i]))
        return tuple(out)

    def ahess(u, v):
        hb = base_ahess(u, v)
        ph = bump.phi(chart, u, v)
        pu, pv = bump.phi_grad(chart, u, v)
        huu, huv, hvv = bump.phi_hess(chart, u, v)
        if ph == 0.0 and pu == 0.0 and pv == 0.0 and (huu, huv, hvv) == (0.0, 0.0, 0.0):
            return hb
        a = base_aval(u, v)
        g = base_agrad(u, v)
        e = math.exp(-2.0 * ph)
        out = []
        # d2(e^{-2phi} A) = e^{-2phi} [A_kl - 2 phi_l A_k - 2 phi_k A_l
        #                              - 2 phi_kl A + 4 phi_k phi_l A]
        for (k, l, pk, pl, pkl, off) in (
            (0, 0, pu, pu, huu, 0),
            (0, 1, pu, pv, huv, 3),
            (1, 1, pv, pv, hvv, 6),
        ):
            gk = g[3 * k : 3 * k + 3]
            gl = g[3 * l : 3 * l + 3]
            for i in range(3):
                out.append(
                    e
                    * (
                        hb[off + i]
                        - 2.0 * pl * gk[i]
                        - 2.0 * pk * gl[i]
                        - 2.0 * pkl * a[i]
                        + 4.0 * pk * pl * a[i]
                    )
                )
        return tuple(out)

    curvature = None
    if metric.curvature_fn is not None:
        base_curv = metric.curvature_fn

        def curvature(u, v):
            # K_hat = e^{-2 phi} (K - Laplace_g phi)
            ph = bump.phi(chart, u, v)
            k0 = base_curv(u, v)
            if ph == 0.0:
                pg = bump.phi_grad(chart, u, v)
                if pg == (0.0, 0.0):
                    return k0
            pu, pv = bump.phi_grad(chart, u, v)
            huu, huv, hvv = bump.phi_hess(chart, u, v)
            a = base_aval(u, v)
            g = base_agrad(u, v)
            # Laplace-Beltrami in the base metric:
            #   A^{ij} phi_ij + [dA^{ij}/dx_i - A^{ij} tr(A^{-1} dA/dx_i)/2] phi_j
            lap = a[0] * huu + 2.0 * a[1] * huv + a[2] * hvv
            det = a[0] * a[2] - a[1] * a[1]
            # tr(A^{-1} dA) = (a22*da11 - 2 a12*da12 + a11*da22)/det
            tr_u = (a[2] * g[0] - 2.0 * a[1] * g[1] + a[0] * g[2]) / det
            tr_v = (a[2] * g[3] - 2.0 * a[1] * g[4] + a[0] * g[5]) / det
            lap += (g[0] + g[4] - 0.5 * (a[0] * tr_u + a[1] * tr_v)) * pu
            lap += (g[1] + g[5] - 0.5 * (a[1] * tr_u + a[2] * tr_v)) * pv
            return math.exp(-2.0 * ph) * (k0 - lap)

    return MetricField(
        chart=chart,
        family_tag=f"ConformallyPerturbed({metric.family_tag})",
        aval=aval,
        agrad=agrad,
        ahess=ahess,
        curvature_fn=curvature,
        bump=bump,
        base=metric,
        params={**metric.params, "bump_center": tuple(bump.center),
                "bump_radius": bump.radius, "bump_amplitude": bump.amplitude},
    )


def c2_distance(
    metric: MetricField,
    base: MetricField,
    box: tuple[tuple[float, float], tuple[float, float]] | None = None,
    n: int = 33,
    fd_step: float = 1e-4,
) -> float:
    """Sampled sup of componentwise deviations of A and its first and second
    finite-difference derivatives over a grid.

    The default box is the perturbation's support (when the metric carries a
    bump) or the whole chart.
    """
    if box is None:
        if metric.bump is not None:
            cu, cv = metric.bump.center
            rad = 1.05 * metric.bump.radius
            box = ((cu - rad, cu + rad), (cv - rad, cv + rad))
        else:
            box = (metric.chart.u_range, metric.chart.v_range)

    us = np.linspace(box[0][0], box[0][1], n)
    vs = np.linspace(box[1][0], box[1][1], n)
    h = fd_step
    worst = 0.0

    def dev(u, v):
        da = np.subtract(metric.aval(u, v), base.aval(u, v))
        return da

    for u in us:
        for v in vs:
            d0 = dev(u, v)
            du = (dev(u + h, v) - dev(u - h, v)) / (2 * h)
            dv = (dev(u, v + h) - dev(u, v - h)) / (2 * h)
            duu = (dev(u + h, v) - 2 * d0 + dev(u - h, v)) / h**2
            dvv = (dev(u, v + h) - 2 * d0 + dev(u, v - h)) / h**2
            duv = (
                dev(u + h, v + h) - dev(u + h, v - h) - dev(u - h, v + h) + dev(u - h, v - h)
            ) / (4 * h**2)
            m = max(
                np.abs(d0).max(),
                np.abs(du).max(),
                np.abs(dv).max(),
                np.abs(duu).max(),
                np.abs(dvv).max(),
                np.abs(duv).max(),
            )
            if m > worst:
                worst = m
    return worst


# -- shipped families ---------------------------------------------------------

_ZERO3 = (0.0, 0.0, 0.0)
_ZERO6 = (0.0,) * 6
_ZERO9 = (0.0,) * 9


def flat_torus(span: float = 2.0 * math.pi) -> MetricField:
    """Flat torus with A = I on [0, span) x [0, span)."""
    chart = SurfaceChart("flat-torus", (0.0, span), (0.0, span))
    return MetricField(
        chart=chart,
        family_tag="FlatTorus",
        aval=lambda u, v: (1.0, 0.0, 1.0),
        agrad=lambda u, v: _ZERO6,
        ahess=lambda u, v: _ZERO9,
        curvature_fn=lambda u, v: 0.0,
        params={"span": span},
    )


def _revolution_metric(
    name: str,
    E,
    Ep,
    Epp,
    g_const: float,
    v_range: tuple[float, float],
    v_periodic: bool,
    params: dict,
) -> MetricField:
    """Metric ds^2 = E(v) du^2 + g_const dv^2 of a surface of revolution."""
    chart = SurfaceChart(name, (0.0, 2.0 * math.pi), v_range, True, v_periodic)
    ginv = 1.0 / g_const

    def aval(u, v):
        return (1.0 / E(v), 0.0, ginv)

    def agrad(u, v):
        e = E(v)
        return (0.0, 0.0, 0.0, -Ep(v) / (e * e), 0.0, 0.0)

    def ahess(u, v):
        e = E(v)
        ep = Ep(v)
        d2 = -Epp(v) / (e * e) + 2.0 * ep * ep / (e * e * e)
        return (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, d2, 0.0, 0.0)

    def curvature(u, v):
        # K = -E''/(2EG) + (E')^2/(4E^2 G) for ds^2 = E(v) du^2 + G dv^2
        e = E(v)
        if e <= 0.0:
            raise DomainError("degenerate profile")
        ep = Ep(v)
        return -Epp(v) / (2.0 * e * g_const) + ep * ep / (4.0 * e * e * g_const)

    return MetricField(
        chart=chart,
        family_tag=f"SurfaceOfRevolution({name})",
        aval=aval,
        agrad=agrad,
        ahess=ahess,
        curvature_fn=curvature,
        params=params,
    )


def torus_of_revolution(R: float = 2.0, r: float = 1.0) -> MetricField:
    """Torus of revolution, ds^2 = (R + r cos v)^2 du^2 + r^2 dv^2."""
    if not R > r > 0.0:
        raise ValueError("need R > r > 0")

    def E(v):
        w = R + r * math.cos(v)
        return w * w

    def Ep(v):
        return -2.0 * r * math.sin(v) * (R + r * math.cos(v))

    def Epp(v):
        return -2.0 * r * math.cos(v) * (R + r * math.cos(v)) + 2.0 * r * r * math.sin(v) ** 2

    return _revolution_metric(
        "torus-of-revolution", E, Ep, Epp, r * r, (0.0, 2.0 * math.pi), True,
        {"R": R, "r": r},
    )


def surface_of_revolution(
    f: Callable[[float], float],
    fp: Callable[[float], float],
    fpp: Callable[[float], float],
    v_range: tuple[float, float],
    name: str = "profile",
) -> MetricField:
    """Surface of revolution with arc-length profile f: ds^2 = f(v)^2 du^2 + dv^2.

    The Gaussian curvature is K = -f''/f.  The v coordinate does not wrap.
    """

    def E(v):
        return f(v) ** 2

    def Ep(v):
        return 2.0 * f(v) * fp(v)

    def Epp(v):
        return 2.0 * (fp(v) ** 2 + f(v) * fpp(v))

    return _revolution_metric(name, E, Ep, Epp, 1.0, v_range, False, {"profile": name})


def sphere_band(half_width: float = 1.2) -> MetricField:
    """Band around the equator of the unit sphere (f = cos v); K = 1."""
    return surface_of_revolution(
        math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v),
        (-half_width, half_width), name="sphere-band",
    )
