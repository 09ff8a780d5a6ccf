"""Implicit midpoint integration of the geodesic Hamiltonian flow.

The scheme is symplectic for the non-separable Hamiltonian 1/2 p^T A(x) p,
so energy error stays bounded (no secular drift) and linear first integrals
such as the Clairaut momentum p_u are conserved to solver tolerance.  The
variational (monodromy) flow is advanced with the same midpoint stages: per
step the tangent map is the Cayley transform

    Y  <-  (I - h/2 J)^{-1} (I + h/2 J) Y,   J = Df(midpoint),

which is the exact derivative of the discrete step map and exactly
symplectic whenever J is (which it is, being a Hamiltonian linearization).

The inner kernels work on plain floats; state objects and numpy appear only
at the API boundary.  This keeps a step at a few microseconds, which the
long-horizon acceptance runs require.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import (
    CotangentState,
    DomainError,
    MetricField,
    UnitCotangentState,
    eval_hamiltonian,
)

__all__ = [
    "FlowSettings",
    "MonodromyRecord",
    "IntegrationError",
    "flow",
    "flow_with_monodromy",
    "flow_samples",
    "renormalize_energy",
]


class IntegrationError(RuntimeError):
    """Implicit solver failed to converge."""


@dataclass(frozen=True)
class FlowSettings:
    step: float = 5e-3
    tol: float = 1e-13
    max_newton_iters: int = 12

    def __post_init__(self):
        if self.step <= 0.0 or self.tol <= 0.0:
            raise ValueError("step and tol must be positive")


@dataclass
class MonodromyRecord:
    """Derivative of the time-t flow in chart coordinates (x, p)."""

    end_state: UnitCotangentState
    matrix: np.ndarray
    elapsed: float


def _rhs(aval, agrad, u, v, pu, pv):
    a11, a12, a22 = aval(u, v)
    g = agrad(u, v)
    return (
        a11 * pu + a12 * pv,
        a12 * pu + a22 * pv,
        -0.5 * (g[0] * pu * pu + 2.0 * g[1] * pu * pv + g[2] * pv * pv),
        -0.5 * (g[3] * pu * pu + 2.0 * g[4] * pu * pv + g[5] * pv * pv),
    )


def _dfield(aval, agrad, ahess, u, v, pu, pv):
    """Jacobian of the Hamiltonian vector field, row-major 16-tuple."""
    a11, a12, a22 = aval(u, v)
    g = agrad(u, v)
    h = ahess(u, v)
    return (
        g[0] * pu + g[1] * pv, g[3] * pu + g[4] * pv, a11, a12,
        g[1] * pu + g[2] * pv, g[4] * pu + g[5] * pv, a12, a22,
        -0.5 * (h[0] * pu * pu + 2 * h[1] * pu * pv + h[2] * pv * pv),
        -0.5 * (h[3] * pu * pu + 2 * h[4] * pu * pv + h[5] * pv * pv),
        -(g[0] * pu + g[1] * pv), -(g[1] * pu + g[2] * pv),
        -0.5 * (h[3] * pu * pu + 2 * h[4] * pu * pv + h[5] * pv * pv),
        -0.5 * (h[6] * pu * pu + 2 * h[7] * pu * pv + h[8] * pv * pv),
        -(g[3] * pu + g[4] * pv), -(g[4] * pu + g[5] * pv),
    )


def _solve4(m, rhs_cols):
    """Solve the 4x4 system M X = B in place; B given as list of columns."""
    a = [list(m[0:4]), list(m[4:8]), list(m[8:12]), list(m[12:16])]
    cols = [list(c) for c in rhs_cols]
    n = 4
    for k in range(n):
        piv = k
        best = abs(a[k][k])
        for i in range(k + 1, n):
            if abs(a[i][k]) > best:
                best = abs(a[i][k])
                piv = i
        if best == 0.0:
            raise IntegrationError("singular Newton matrix")
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            for c in cols:
                c[k], c[piv] = c[piv], c[k]
        akk = a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] / akk
            if f != 0.0:
                row_i, row_k = a[i], a[k]
                for j in range(k + 1, n):
                    row_i[j] -= f * row_k[j]
                for c in cols:
                    c[i] -= f * c[k]
    for c in cols:
        for k in range(n - 1, -1, -1):
            s = c[k]
            row = a[k]
            for j in range(k + 1, n):
                s -= row[j] * c[j]
            c[k] = s / row[k]
    return cols


def _check_domain(chart, u, v):
    if not chart.u_periodic and not (chart.u_range[0] <= u <= chart.u_range[1]):
        raise DomainError(f"u = {u} left the chart during integration")
    if not chart.v_periodic and not (chart.v_range[0] <= v <= chart.v_range[1]):
        raise DomainError(f"v = {v} left the chart during integration")


def _step(metric, z, h, tol, max_iters):
    """One implicit midpoint step; returns the new state tuple."""
    aval, agrad, ahess = metric.aval, metric.agrad, metric.ahess
    u0, v0, pu0, pv0 = z
    # the attainable residual floor is roundoff relative to the state size
    tol = tol * (1.0 + abs(u0) + abs(v0) + abs(pu0) + abs(pv0))
    fu, fv, fpu, fpv = _rhs(aval, agrad, u0, v0, pu0, pv0)
    zu, zv, zpu, zpv = u0 + h * fu, v0 + h * fv, pu0 + h * fpu, pv0 + h * fpv
    half = 0.5 * h
    for _ in range(max_iters):
        mu, mv = 0.5 * (u0 + zu), 0.5 * (v0 + zv)
        mpu, mpv = 0.5 * (pu0 + zpu), 0.5 * (pv0 + zpv)
        fu, fv, fpu, fpv = _rhs(aval, agrad, mu, mv, mpu, mpv)
        gu = zu - u0 - h * fu
        gv = zv - v0 - h * fv
        gpu = zpu - pu0 - h * fpu
        gpv = zpv - pv0 - h * fpv
        res = abs(gu) + abs(gv) + abs(gpu) + abs(gpv)
        if res <= tol:
            return (zu, zv, zpu, zpv)
        j = _dfield(aval, agrad, ahess, mu, mv, mpu, mpv)
        m = (
            1.0 - half * j[0], -half * j[1], -half * j[2], -half * j[3],
            -half * j[4], 1.0 - half * j[5], -half * j[6], -half * j[7],
            -half * j[8], -half * j[9], 1.0 - half * j[10], -half * j[11],
            -half * j[12], -half * j[13], -half * j[14], 1.0 - half * j[15],
        )
        (d,) = _solve4(m, [(-gu, -gv, -gpu, -gpv)])
        zu += d[0]
        zv += d[1]
        zpu += d[2]
        zpv += d[3]
    raise IntegrationError(
        f"implicit midpoint failed to converge: residual {res:.3e} at state {z}"
    )


def _flow_raw(metric, z, t, settings):
    """Integrate the 4-vector z over time t; no wrapping of the result."""
    if t == 0.0:
        return z
    n = max(1, math.ceil(abs(t) / settings.step))
    h = t / n
    chart = metric.chart
    check = not (chart.u_periodic and chart.v_periodic)
    tol, iters = settings.tol, settings.max_newton_iters
    for _ in range(n):
        z = _step(metric, z, h, tol, iters)
        if check:
            _check_domain(chart, z[0], z[1])
    return z


def _flow_monodromy_raw(metric, z, t, settings):
    """Integrate state plus tangent map; returns (z, Y) with Y row-major 16-list."""
    y = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
         0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
    if t == 0.0:
        return z, y
    n = max(1, math.ceil(abs(t) / settings.step))
    h = t / n
    half = 0.5 * h
    chart = metric.chart
    check = not (chart.u_periodic and chart.v_periodic)
    aval, agrad, ahess = metric.aval, metric.agrad, metric.ahess
    tol, iters = settings.tol, settings.max_newton_iters
    for _ in range(n):
        z_new = _step(metric, z, h, tol, iters)
        mu, mv = 0.5 * (z[0] + z_new[0]), 0.5 * (z[1] + z_new[1])
        mpu, mpv = 0.5 * (z[2] + z_new[2]), 0.5 * (z[3] + z_new[3])
        j = _dfield(aval, agrad, ahess, mu, mv, mpu, mpv)
        # columns of (I + h/2 J) Y
        cols = []
        for c in range(4):
            y0, y1, y2, y3 = y[c], y[4 + c], y[8 + c], y[12 + c]
            cols.append((
                y0 + half * (j[0] * y0 + j[1] * y1 + j[2] * y2 + j[3] * y3),
                y1 + half * (j[4] * y0 + j[5] * y1 + j[6] * y2 + j[7] * y3),
                y2 + half * (j[8] * y0 + j[9] * y1 + j[10] * y2 + j[11] * y3),
                y3 + half * (j[12] * y0 + j[13] * y1 + j[14] * y2 + j[15] * y3),
            ))
        m = (
            1.0 - half * j[0], -half * j[1], -half * j[2], -half * j[3],
            -half * j[4], 1.0 - half * j[5], -half * j[6], -half * j[7],
            -half * j[8], -half * j[9], 1.0 - half * j[10], -half * j[11],
            -half * j[12], -half * j[13], -half * j[14], 1.0 - half * j[15],
        )
        sol = _solve4(m, cols)
        for c in range(4):
            y[c] = sol[c][0]
            y[4 + c] = sol[c][1]
            y[8 + c] = sol[c][2]
            y[12 + c] = sol[c][3]
        z = z_new
        if check:
            _check_domain(chart, z[0], z[1])
    return z, y


def _state_tuple(state: CotangentState):
    return (float(state.x[0]), float(state.x[1]), float(state.p[0]), float(state.p[1]))


def flow(
    metric: MetricField,
    state: UnitCotangentState,
    t: float,
    settings: FlowSettings = FlowSettings(),
) -> UnitCotangentState:
    """phi^t(state).  Energy is never silently re-pinned."""
    z = _flow_raw(metric, _state_tuple(state), float(t), settings)
    return UnitCotangentState(metric.chart.wrap(z[:2]), z[2:])


def flow_with_monodromy(
    metric: MetricField,
    state: UnitCotangentState,
    t: float,
    settings: FlowSettings = FlowSettings(),
) -> MonodromyRecord:
    z, y = _flow_monodromy_raw(metric, _state_tuple(state), float(t), settings)
    end = UnitCotangentState(metric.chart.wrap(z[:2]), z[2:])
    return MonodromyRecord(end, np.array(y).reshape(4, 4), float(t))


def flow_samples(
    metric: MetricField,
    state: UnitCotangentState,
    t: float,
    settings: FlowSettings = FlowSettings(),
    n_samples: int = 200,
):
    """States at n_samples+1 uniform times spanning [0, t], with energies.

    Returns (times, states) where states has rows (u, v, p_u, p_v, H);
    coordinates are wrapped into the chart.
    """
    times = np.linspace(0.0, float(t), n_samples + 1)
    z = _state_tuple(state)
    rows = np.empty((n_samples + 1, 5))
    prev_t = 0.0
    for i, tk in enumerate(times):
        z = _flow_raw(metric, z, tk - prev_t, settings)
        prev_t = tk
        x = metric.chart.wrap(z[:2])
        h = eval_hamiltonian(metric, CotangentState(x, z[2:]))
        rows[i] = (x[0], x[1], z[2], z[3], h)
    return times, rows


def renormalize_energy(metric: MetricField, state: CotangentState) -> UnitCotangentState:
    """Rescale p to the shell H = 1/2 (momentum rescaling between levels)."""
    h = eval_hamiltonian(metric, state)
    if h <= 0.0:
        raise DomainError("cannot renormalize a zero momentum")
    s = 1.0 / math.sqrt(2.0 * h)
    return UnitCotangentState(metric.chart.wrap(state.x), s * state.p)
