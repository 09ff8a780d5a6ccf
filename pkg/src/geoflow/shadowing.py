"""Pseudo-geodesic chains and numerical shadowing testers.

A chain is a finite window of unit-shell states with segment durations; the
bi-infinite object it stands for extends both ends by the true orbit of the
terminal states, so all jump activity lives in the window.  Shadowing
verdicts are produced by a multi-start Gauss-Newton shooting search and are
always replayed by independent re-integration before being reported; a
not-found verdict is only ever relative to the declared seed grid and
budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import (
    CotangentState,
    MetricField,
    UnitCotangentState,
    eval_hamiltonian,
    hamiltonian_vector_field,
    shell_distance,
)
from .integrator import (
    FlowSettings,
    _flow_monodromy_raw,
    _flow_raw,
    _state_tuple,
    flow,
    renormalize_energy,
)


class ChainError(ValueError):
    pass


EXTENSION_RULE = "StationaryOrbit"


@dataclass
class PseudoGeodesic:
    states: list
    times: list
    delta: float
    T: float
    i_min: int = 0
    extension_rule: str = EXTENSION_RULE

    @property
    def i_max(self):
        return self.i_min + len(self.states) - 1

    def state(self, i):
        return self.states[i - self.i_min]

    def time(self, i):
        """Segment duration t_i, extension segments reuse the edge duration."""
        if i < self.i_min:
            return self.times[0]
        if i > self.i_max:
            return self.times[-1]
        return self.times[i - self.i_min]


def accumulated_time(chain: PseudoGeodesic, n: int) -> float:
    """Breakpoint time: sum of t_0..t_{n-1}, negative branch -(t_n+..+t_-1)."""
    if n >= 0:
        return sum(chain.time(i) for i in range(n))
    return -sum(chain.time(i) for i in range(n, 0))


def validate_chain(
    metric: MetricField,
    chain: PseudoGeodesic,
    delta: float,
    T: float,
    settings: FlowSettings = FlowSettings(),
):
    """(valid, jump table); valid iff all t_i >= T and all jumps < delta."""
    jumps = []
    ok = all(t >= T for t in chain.times)
    for i in range(chain.i_min, chain.i_max):
        end = flow(metric, chain.state(i), chain.time(i), settings)
        gap = shell_distance(metric.chart, end, chain.state(i + 1))
        jumps.append((i, gap))
        if gap >= delta:
            ok = False
    return ok, jumps


def build_chain(
    metric: MetricField,
    states,
    times,
    delta: float,
    T: float,
    i_min: int = 0,
    settings: FlowSettings = FlowSettings(),
) -> PseudoGeodesic:
    """Validated (delta, T)-chain; raises ChainError when the data violate it."""
    if len(states) != len(times):
        raise ChainError("need one segment duration per state")
    if not states:
        raise ChainError("empty chain")
    if not (i_min <= 0 <= i_min + len(states) - 1):
        raise ChainError("index window must contain 0")
    chain = PseudoGeodesic(list(states), [float(t) for t in times], float(delta),
                           float(T), i_min)
    ok, jumps = validate_chain(metric, chain, delta, T, settings)
    if not ok:
        worst = max(jumps, key=lambda j: j[1]) if jumps else (None, 0.0)
        raise ChainError(
            f"not a ({delta}, {T})-chain: worst jump {worst[1]:.3e} at index {worst[0]}"
        )
    return chain


def orbit_chain(
    metric: MetricField,
    start: UnitCotangentState,
    n_segments: int,
    segment_time: float,
    delta: float,
    settings: FlowSettings = FlowSettings(),
) -> PseudoGeodesic:
    """Chain sampled from a single true orbit (all jumps at integrator scale)."""
    states = [start]
    for _ in range(n_segments):
        states.append(flow(metric, states[-1], segment_time, settings))
    times = [segment_time] * (n_segments + 1)
    return build_chain(metric, states, times, delta, segment_time, 0, settings)


def chain_eval(
    metric: MetricField,
    chain: PseudoGeodesic,
    t: float,
    settings: FlowSettings = FlowSettings(),
) -> UnitCotangentState:
    """The chain evaluation (x_0,p_0) * t = phi^(t - s(i))(x_i, p_i)."""
    lo = accumulated_time(chain, chain.i_min)
    hi = accumulated_time(chain, chain.i_max + 1)
    if t < lo:
        return flow(metric, chain.state(chain.i_min), t - lo, settings)
    if t >= hi:
        return flow(metric, chain.state(chain.i_max),
                    t - hi + chain.time(chain.i_max), settings)
    i = chain.i_min
    s = lo
    while t >= s + chain.time(i):
        s += chain.time(i)
        i += 1
    return flow(metric, chain.state(i), t - s, settings)


def _chain_samples(metric, chain, times, settings):
    """chain_eval at many times, flowing each segment once (times sorted)."""
    out = [None] * len(times)
    order = np.argsort(times)
    lo = accumulated_time(chain, chain.i_min)
    hi = accumulated_time(chain, chain.i_max + 1)
    # group queries by segment, then advance incrementally inside each
    groups = {}
    for idx in order:
        t = times[idx]
        if t < lo:
            key = ("past", None)
        elif t >= hi:
            key = ("future", None)
        else:
            i = chain.i_min
            s = lo
            while t >= s + chain.time(i):
                s += chain.time(i)
                i += 1
            key = ("seg", i)
        groups.setdefault(key, []).append(idx)
    for key, idxs in groups.items():
        if key[0] == "past":
            anchor, s0 = chain.state(chain.i_min), lo
            idxs = sorted(idxs, key=lambda k: -times[k])
        elif key[0] == "future":
            anchor = chain.state(chain.i_max)
            s0 = hi - chain.time(chain.i_max)
            idxs = sorted(idxs, key=lambda k: times[k])
        else:
            anchor, s0 = chain.state(key[1]), accumulated_time(chain, key[1])
            idxs = sorted(idxs, key=lambda k: times[k])
        cur, cur_t = anchor, 0.0
        for idx in idxs:
            dt = (times[idx] - s0) - cur_t
            cur = flow(metric, cur, dt, settings)
            cur_t += dt
            out[idx] = cur
    return out


# -- reparameterizations ---------------------------------------------------------


@dataclass
class Reparameterization:
    breakpoints: np.ndarray
    values: np.ndarray
    eps_bound: float

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.breakpoints.size != self.values.size or self.breakpoints.size == 0:
            raise ValueError("breakpoints and values must align and be nonempty")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must increase strictly")
        k = int(np.argmin(np.abs(self.breakpoints)))
        if abs(self.breakpoints[k]) > 1e-12 or abs(self.values[k]) > 1e-12:
            raise ValueError("a reparameterization must fix tau(0) = 0")
        if not self.check_slopes():
            raise ValueError(f"slope outside (1-{self.eps_bound}, 1+{self.eps_bound})")

    def check_slopes(self) -> bool:
        """Exhaustive pairwise slope bound over all breakpoint pairs."""
        b, v = self.breakpoints, self.values
        for i in range(b.size):
            for j in range(i + 1, b.size):
                slope = (v[j] - v[i]) / (b[j] - b[i])
                if abs(slope - 1.0) >= self.eps_bound:
                    return False
        return True

    def __call__(self, t):
        b, v = self.breakpoints, self.values
        t = float(t)
        if t <= b[0]:
            return v[0] + (t - b[0])
        if t >= b[-1]:
            return v[-1] + (t - b[-1])
        return float(np.interp(t, b, v))


def identity_reparam(eps_bound: float) -> Reparameterization:
    return Reparameterization(np.array([0.0]), np.array([0.0]), eps_bound)


# -- reports ---------------------------------------------------------------------


@dataclass
class ShadowReport:
    verdict: str
    shadow_point: UnitCotangentState | None
    reparam: Reparameterization | None
    achieved_sup: float
    epsilon: float
    search_effort: dict = field(default_factory=dict)


def shadow_report_dict(report: ShadowReport) -> dict:
    out = {
        "verdict": report.verdict,
        "achieved_sup": report.achieved_sup,
        "epsilon": report.epsilon,
        "search_effort": dict(report.search_effort),
    }
    if report.shadow_point is not None:
        out["witness"] = {
            "x": [float(c) for c in report.shadow_point.x],
            "p": [float(c) for c in report.shadow_point.p],
        }
    if report.reparam is not None:
        out["reparam"] = {
            "breakpoints": report.reparam.breakpoints.tolist(),
            "values": report.reparam.values.tolist(),
            "eps_bound": report.reparam.eps_bound,
        }
    return out


# -- strong shadowing --------------------------------------------------------------


def _sample_times(chain, horizon):
    """Knots plus a uniform grid at step min(T,1)/20 over [-horizon, horizon]."""
    step = min(chain.T, 1.0) / 20.0
    ts = set(np.arange(-horizon, horizon + 0.5 * step, step).tolist())
    for i in range(chain.i_min, chain.i_max + 2):
        s = accumulated_time(chain, i)
        if -horizon <= s <= horizon:
            ts.add(s)
    return sorted(ts), step


def evaluate_shadow(
    metric: MetricField,
    chain: PseudoGeodesic,
    point: UnitCotangentState,
    reparam: Reparameterization,
    horizon: float,
    settings: FlowSettings = FlowSettings(),
    refine: int = 1,
):
    """Sampled sup_t d(phi^(tau(t))(point), chain * t) over [-horizon, horizon]."""
    times, step = _sample_times(chain, horizon)
    if refine > 1:
        extra = set(times)
        for k in range(1, refine):
            extra.update(
                (np.asarray(times[:-1]) + k * np.diff(times) / refine).tolist()
            )
        times = sorted(extra)
    chain_states = _chain_samples(metric, chain, times, settings)
    # flow the witness through the reparameterized times in one sweep
    taus = [reparam(t) for t in times]
    order = np.argsort(taus)
    witness = [None] * len(times)
    neg = [i for i in order[::-1] if taus[i] < 0.0]
    pos = [i for i in order if taus[i] >= 0.0]
    for idxs in (neg, pos):
        cur, cur_t = point, 0.0
        for idx in idxs:
            cur = flow(metric, cur, taus[idx] - cur_t, settings)
            cur_t = taus[idx]
            witness[idx] = cur
    sup = 0.0
    for w, c in zip(witness, chain_states):
        sup = max(sup, shell_distance(metric.chart, w, c))
    return sup, len(times)


def _window_shooting(metric, anchors, seed_states, seg_times, settings, max_iters=12):
    """Constrained multiple shooting: a true orbit nearest the anchor vertices.

    Segment continuity and the energy pin are hard constraints (driven to
    roundoff, otherwise hyperbolic windows amplify any slack exponentially);
    the distance to the anchors is minimized in the constraint null space.
    Unknowns are one phase point per vertex plus the segment durations.
    Returns (states, sigmas, iterations).
    """
    chart = metric.chart
    n_seg = len(seed_states) - 1
    zs = [np.array(_state_tuple(s)) for s in seed_states]
    sigmas = [float(t) for t in seg_times]
    anc = [np.array(_state_tuple(s)) for s in anchors]
    n_unknown = 4 * len(zs) + n_seg
    w_sigma = 1e-3
    iters = 0
    for _ in range(max_iters):
        iters += 1
        c = np.zeros(4 * n_seg + 1)
        a = np.zeros((4 * n_seg + 1, n_unknown))
        for i in range(n_seg):
            z_end, y = _flow_monodromy_raw(metric, tuple(zs[i]), sigmas[i], settings)
            dx = chart.wrap_diff(z_end[:2], zs[i + 1][:2])
            c[4 * i : 4 * i + 4] = (dx[0], dx[1], z_end[2] - zs[i + 1][2],
                                    z_end[3] - zs[i + 1][3])
            a[4 * i : 4 * i + 4, 4 * i : 4 * i + 4] = np.array(y).reshape(4, 4)
            a[4 * i : 4 * i + 4, 4 * (i + 1) : 4 * (i + 1) + 4] = -np.eye(4)
            a[4 * i : 4 * i + 4, 4 * len(zs) + i] = hamiltonian_vector_field(
                metric, CotangentState(chart.wrap(z_end[:2]), z_end[2:])
            )
        state0 = CotangentState(chart.wrap(zs[0][:2]), zs[0][2:])
        c[-1] = eval_hamiltonian(metric, state0) - 0.5
        f0 = hamiltonian_vector_field(metric, state0)
        a[-1, 0:4] = (-f0[2], -f0[3], f0[0], f0[1])
        # restoration step, then the objective step in the constraint kernel
        d_part, *_ = np.linalg.lstsq(a, -c, rcond=None)
        _, svals, vt = np.linalg.svd(a)
        rank = int((svals > svals[0] * 1e-12).sum())
        kernel = vt[rank:].T
        obj = np.zeros((4 * len(zs) + n_seg, n_unknown))
        r0 = np.zeros(4 * len(zs) + n_seg)
        for i, z in enumerate(zs):
            dx = chart.wrap_diff(z[:2], anc[i][:2])
            r0[4 * i : 4 * i + 4] = (dx[0], dx[1], z[2] - anc[i][2], z[3] - anc[i][3])
            obj[4 * i : 4 * i + 4, 4 * i : 4 * i + 4] = np.eye(4)
        for i in range(n_seg):
            r0[4 * len(zs) + i] = w_sigma * (sigmas[i] - seg_times[i])
            obj[4 * len(zs) + i, 4 * len(zs) + i] = w_sigma
        xi, *_ = np.linalg.lstsq(obj @ kernel, -(r0 + obj @ d_part), rcond=None)
        d = d_part + kernel @ xi
        for i in range(len(zs)):
            zs[i] = zs[i] + d[4 * i : 4 * i + 4]
        for i in range(n_seg):
            sigmas[i] = max(0.25 * seg_times[i], sigmas[i] + d[4 * len(zs) + i])
        if np.abs(c).max() < 1e-12 and np.abs(d).max() < 1e-10:
            break
    states = [UnitCotangentState(chart.wrap(z[:2]), z[2:].copy()) for z in zs]
    return states, sigmas, iters


def shadow_search(
    metric: MetricField,
    chain: PseudoGeodesic,
    eps: float,
    horizon: float,
    search_budget: int = 200,
    rep_eps: float | None = None,
    settings: FlowSettings = FlowSettings(),
) -> ShadowReport:
    """Search for a true orbit eps-shadowing the chain after reparameterization.

    Found verdicts carry the witness and tau and have been replayed on a x4
    refined sample grid; not-found means every seed's optimized candidate
    stayed at sup >= eps within the budget; running out of budget first
    yields inconclusive.
    """
    if rep_eps is None:
        rep_eps = eps
    # pad the shooting window with extension vertices until it covers the horizon,
    # otherwise the witness is unconstrained over part of the sampled range
    t_first = chain.time(chain.i_min)
    t_last = chain.time(chain.i_max)
    lo = chain.i_min - max(
        0, math.ceil((horizon + accumulated_time(chain, chain.i_min)) / t_first)
    )
    hi = chain.i_max + max(
        0, math.ceil((horizon - accumulated_time(chain, chain.i_max + 1)) / t_last)
    )
    verts = {i: chain.state(i) for i in range(chain.i_min, chain.i_max + 1)}
    for i in range(chain.i_min - 1, lo - 1, -1):
        verts[i] = flow(metric, verts[i + 1], -chain.time(i), settings)
    for i in range(chain.i_max + 1, hi + 2):
        verts[i] = flow(metric, verts[i - 1], chain.time(i - 1), settings)
    window = [verts[i] for i in range(lo, hi + 1)]
    window_times = [chain.time(i) for i in range(lo, hi + 1)]
    # closing state of the window fixes the final vertex of the shooting
    anchors = window + [verts[hi + 1]]
    effort = {
        "seeds_tried": 0,
        "gauss_newton_iterations": 0,
        "sup_evaluations": 0,
        "sample_step": min(chain.T, 1.0) / 20.0,
        "budget": search_budget,
    }
    best_sup = math.inf
    budget = search_budget
    seeds = [list(anchors)]
    # vertex-anchored restarts: snap every unknown to the orbit of one vertex
    for j in np.unique(np.linspace(0, len(window) - 1, min(8, len(window))).astype(int)):
        z = window[j]
        back = sum(window_times[:j])
        cur = flow(metric, z, -back, settings) if back else z
        anchored = [cur]
        for t in window_times:
            cur = flow(metric, cur, t, settings)
            anchored.append(cur)
        seeds.append(anchored)
    for seed_states in seeds:
        if budget <= 0:
            verdict = "inconclusive"
            break
        effort["seeds_tried"] += 1
        states, sigmas, iters = _window_shooting(
            metric, anchors, seed_states, window_times, settings
        )
        effort["gauss_newton_iterations"] += iters
        budget -= iters
        # tau knots at the chain breakpoints, slopes sigma_i / t_i
        breaks = [accumulated_time(chain, i) for i in range(lo, hi + 2)]
        offset = sum(sigmas[:-lo]) if lo < 0 else 0.0
        vals = []
        acc = -offset
        vals.append(acc)
        for s in sigmas:
            acc += s
            vals.append(acc)
        try:
            reparam = Reparameterization(np.array(breaks), np.array(vals), rep_eps)
        except ValueError:
            continue
        # the shooting state at knot index 0 sits at tau = 0 on the witness orbit
        witness = renormalize_energy(metric, states[-lo])
        sup, _ = evaluate_shadow(metric, chain, witness, reparam, horizon, settings)
        effort["sup_evaluations"] += 1
        best_sup = min(best_sup, sup)
        if sup < eps:
            fine, _ = evaluate_shadow(
                metric, chain, witness, reparam, horizon, settings, refine=4
            )
            replay, _ = evaluate_shadow(
                metric, chain, witness, reparam, horizon, settings, refine=4
            )
            effort["sup_evaluations"] += 2
            if abs(fine - replay) > 1e-9:
                raise RuntimeError("shadow replay mismatch beyond 1e-9")
            if fine < eps:
                return ShadowReport(
                    verdict="found",
                    shadow_point=witness,
                    reparam=reparam,
                    achieved_sup=fine,
                    epsilon=eps,
                    search_effort=effort,
                )
            best_sup = min(best_sup, fine)
    else:
        verdict = "not-found"
    return ShadowReport(
        verdict=verdict,
        shadow_point=None,
        reparam=None,
        achieved_sup=best_sup,
        epsilon=eps,
        search_effort=effort,
    )


# -- weak shadowing -----------------------------------------------------------------


def weak_shadow_check(
    metric: MetricField,
    chain: PseudoGeodesic,
    eps: float,
    candidate: UnitCotangentState,
    orbit_horizon: float,
    settings: FlowSettings = FlowSettings(),
):
    """True iff every chain vertex is within eps of the sampled candidate orbit."""
    step = min(chain.T, 1.0) / 20.0
    n = max(1, math.ceil(orbit_horizon / step))
    samples = []
    for sign in (-1.0, 1.0):
        cur = candidate
        for _ in range(n):
            cur = flow(metric, cur, sign * step, settings)
            samples.append(cur)
    samples.append(candidate)
    dists = []
    for i in range(chain.i_min, chain.i_max + 1):
        v = chain.state(i)
        dists.append(min(shell_distance(metric.chart, v, s) for s in samples))
    dists = np.array(dists)
    return bool(np.all(dists < eps)), dists


def weak_shadow_search(
    metric: MetricField,
    chain: PseudoGeodesic,
    eps: float,
    budget: int = 64,
    settings: FlowSettings = FlowSettings(),
) -> ShadowReport:
    """Existential weak-shadowing search seeded at every chain vertex."""
    span = accumulated_time(chain, chain.i_max + 1) - accumulated_time(
        chain, chain.i_min
    )
    horizon = span + chain.T
    effort = {"seeds_tried": 0, "budget": budget, "orbit_horizon": horizon}
    best = math.inf
    verdict = "not-found"
    for i in range(chain.i_min, chain.i_max + 1):
        if effort["seeds_tried"] >= budget:
            verdict = "inconclusive"
            break
        effort["seeds_tried"] += 1
        ok, dists = weak_shadow_check(
            metric, chain, eps, chain.state(i), horizon, settings
        )
        best = min(best, float(dists.max()))
        if ok:
            return ShadowReport(
                verdict="found",
                shadow_point=chain.state(i),
                reparam=None,
                achieved_sup=float(dists.max()),
                epsilon=eps,
                search_effort=effort,
            )
    return ShadowReport(
        verdict=verdict,
        shadow_point=None,
        reparam=None,
        achieved_sup=best,
        epsilon=eps,
        search_effort=effort,
    )


# -- weak specification ---------------------------------------------------------------


@dataclass
class SpecificationInstance:
    intervals: list
    K: float
    base_points: list

    def __post_init__(self):
        if len(self.intervals) != 2 or len(self.base_points) != 2:
            raise ValueError("a weak specification uses exactly two intervals")
        (a1, b1), (a2, b2) = self.intervals
        if not (a1 < b1 and a2 < b2):
            raise ValueError("intervals must be nondegenerate")
        if a2 < b1 + self.K:
            raise ValueError("intervals must be K-spaced: a2 >= b1 + K")

    def prescription(self, metric, t, settings=FlowSettings()):
        """P(t) = phi^(t - a_i)(base_i) on interval i."""
        for (a, b), base in zip(self.intervals, self.base_points):
            if a <= t <= b:
                return flow(metric, base, t - a, settings)
        raise ValueError(f"t = {t} lies in neither interval")


def specification_shadow_search(
    metric: MetricField,
    spec: SpecificationInstance,
    eps: float,
    budget: int = 400,
    settings: FlowSettings = FlowSettings(),
) -> ShadowReport:
    """Single point whose orbit eps-traces both prescribed segments.

    Seeds replay each interval's own base point; a Nelder-Mead polish over
    on-shell phase points spends the remaining budget.  Verdict semantics
    match shadow_search.
    """
    from scipy.optimize import minimize

    step = min(1.0, min(b - a for a, b in spec.intervals)) / 20.0
    times = []
    for a, b in spec.intervals:
        times.extend(np.arange(a, b + 0.5 * step, step).tolist())
    targets = [spec.prescription(metric, t, settings) for t in times]
    evals = {"n": 0}

    def orbit_sup(z0):
        evals["n"] += 1
        order = np.argsort(times)
        sup = 0.0
        cur, cur_t = z0, 0.0
        neg = [i for i in order[::-1] if times[i] < 0]
        pos = [i for i in order if times[i] >= 0]
        for idxs in (neg, pos):
            cur, cur_t = z0, 0.0
            for idx in idxs:
                cur = flow(metric, cur, times[idx] - cur_t, settings)
                cur_t = times[idx]
                sup = max(sup, shell_distance(metric.chart, cur, targets[idx]))
        return sup

    def unpack(q):
        x = metric.chart.wrap((q[0], q[1]))
        p = np.array([math.cos(q[2]), math.sin(q[2])])
        return renormalize_energy(metric, CotangentState(x, p))

    seeds = []
    for (a, _), base in zip(spec.intervals, spec.base_points):
        seeds.append(flow(metric, base, -a, settings))
    effort = {"seeds_tried": 0, "objective_evaluations": 0, "budget": budget}
    best_sup = math.inf
    best_point = None
    verdict = "not-found"
    # share the budget so every seed gets polished before we give a verdict
    share = max(1, budget // len(seeds))
    for seed in seeds:
        if evals["n"] >= budget:
            verdict = "inconclusive"
            break
        effort["seeds_tried"] += 1
        q0 = np.array([seed.x[0], seed.x[1], math.atan2(seed.p[1], seed.p[0])])
        obj = lambda q: orbit_sup(unpack(q))
        r = minimize(
            obj,
            q0,
            method="Nelder-Mead",
            options={"maxfev": min(share, max(1, budget - evals["n"])),
                     "xatol": 1e-10, "fatol": 1e-12},
        )
        cand = unpack(r.x)
        sup = orbit_sup(cand)
        if sup < best_sup:
            best_sup, best_point = sup, cand
    effort["objective_evaluations"] = evals["n"]
    if best_sup < eps:
        replay = orbit_sup(best_point)
        if abs(replay - best_sup) > 1e-9:
            raise RuntimeError("specification replay mismatch beyond 1e-9")
        return ShadowReport(
            verdict="found",
            shadow_point=best_point,
            reparam=None,
            achieved_sup=best_sup,
            epsilon=eps,
            search_effort=effort,
        )
    return ShadowReport(
        verdict=verdict,
        shadow_point=best_point,
        reparam=None,
        achieved_sup=best_sup,
        epsilon=eps,
        search_effort=effort,
    )


# -- chain files ------------------------------------------------------------------------


def save_chain(chain: PseudoGeodesic, path):
    lines = [
        "# pseudo-geodesic chain",
        f"delta = {float(chain.delta)!r}",
        f"T = {float(chain.T)!r}",
        f"extension = {chain.extension_rule}",
        "# i u v p_u p_v t_i",
    ]
    for k, (s, t) in enumerate(zip(chain.states, chain.times)):
        i = chain.i_min + k
        row = [float(s.x[0]), float(s.x[1]), float(s.p[0]), float(s.p[1]), float(t)]
        lines.append(f"{i} " + " ".join(repr(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_chain(path) -> PseudoGeodesic:
    header = {}
    states, times, indices = [], [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ChainError(f"malformed chain row: {line!r}")
            indices.append(int(parts[0]))
            vals = [float(c) for c in parts[1:]]
            states.append(UnitCotangentState(vals[0:2], vals[2:4]))
            times.append(vals[4])
    if not states:
        raise ChainError("chain file holds no states")
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise ChainError("chain rows must use consecutive indices")
    return PseudoGeodesic(
        states=states,
        times=times,
        delta=float(header["delta"]),
        T=float(header["T"]),
        i_min=indices[0],
        extension_rule=header.get("extension", EXTENSION_RULE),
    )
