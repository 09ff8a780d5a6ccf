"""Batch experiment runner: geoflow <command> --config <path> [--out <dir>].

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 when the run
finished but produced only inconclusive verdicts.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, build_metric, load_config
from .metrics import ConformalBump, CotangentState, DomainError
from .integrator import IntegrationError, flow_samples, renormalize_energy
from .poincare import PoincareError, find_periodic_orbit, orbit_report, trace_perturbation_sweep
from .shadowing import ChainError, load_chain, shadow_report_dict, shadow_search
from . import twist
from .reports import emit_plot_data, write_report, write_run_meta

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

_NUMERICAL_ERRORS = (
    PoincareError,
    ChainError,
    IntegrationError,
    DomainError,
    twist.TransitSearchError,
    twist.EmbeddingError,
    np.linalg.LinAlgError,
    FloatingPointError,
    ZeroDivisionError,
)


def _start_state(metric, params):
    u, v, pu, pv = params["start"]
    return renormalize_energy(metric, CotangentState((u, v), (pu, pv)))


def _state_list(state):
    return [float(state.x[0]), float(state.x[1]), float(state.p[0]), float(state.p[1])]


def _run_integrate(config: ExperimentConfig):
    metric = build_metric(config.metric)
    params = config.params
    state = _start_state(metric, params)
    n = params.get("samples", 400)
    times, rows = flow_samples(metric, state, params["time"], n_samples=n)
    drift = float(np.max(np.abs(rows[:, 4] - 0.5)))
    results = {
        "start": _state_list(state),
        "time": float(params["time"]),
        "samples": int(n),
        "energy_drift": drift,
        "end_state": [float(x) for x in rows[-1, :4]],
        "series": [],
    }
    if "section_axis" in params:
        axis = params["section_axis"]
        axis = {"u": 0, "v": 1}.get(axis, axis)
        value = float(params.get("section_value", 0.0))
        lo, hi = (metric.chart.u_range, metric.chart.v_range)[axis]
        span = hi - lo
        periodic = (metric.chart.u_periodic, metric.chart.v_periodic)[axis]

        def off(x):
            d = x - value
            return (d + 0.5 * span) % span - 0.5 * span if periodic else d

        pts = []
        for i in range(1, len(rows)):
            a, b = off(rows[i - 1, axis]), off(rows[i, axis])
            if a == 0.0 or a * b >= 0.0 or abs(b - a) > 0.5 * span:
                continue
            w = -a / (b - a)
            # scatter coordinates: the other chart coordinate and its momentum
            other = 1 - axis
            pts.append(
                [
                    float(rows[i - 1, other] + w * (rows[i, other] - rows[i - 1, other])),
                    float(rows[i - 1, 2 + other] + w * (rows[i, 2 + other] - rows[i - 1, 2 + other])),
                ]
            )
        col = "uv"[1 - axis]
        results["series"].append(
            {
                "name": "poincare-scatter",
                "kind": "poincare-scatter",
                "columns": [col, f"p_{col}"],
                "rows": pts,
            }
        )
    return results, EXIT_OK


def _run_find_periodic(config: ExperimentConfig):
    metric = build_metric(config.metric)
    params = config.params
    orbit = find_periodic_orbit(metric, _start_state(metric, params), params["period_guess"])
    results = {
        "orbit": {
            "start": _state_list(orbit.start),
            "period": float(orbit.period),
            "residual": float(orbit.residual),
            "flagged": bool(orbit.flagged),
        },
        "series": [],
    }
    return results, EXIT_OK


def _run_classify(config: ExperimentConfig):
    metric = build_metric(config.metric)
    params = config.params
    orbit = find_periodic_orbit(metric, _start_state(metric, params), params["period_guess"])
    report = orbit_report(metric, orbit, params.get("denominator_bound", 64))
    results = {"orbit": report, "series": []}
    return results, EXIT_OK


def _run_perturb_trace(config: ExperimentConfig):
    metric = build_metric(config.metric)
    params = config.params
    orbit = find_periodic_orbit(metric, _start_state(metric, params), params["period_guess"])
    template = ConformalBump(tuple(params["bump_center"]), params["bump_radius"], 1.0)
    sweep = trace_perturbation_sweep(metric, orbit, template, params["amplitudes"])
    results = {
        "sweep": [
            {"amplitude": float(a), "c2_size": float(c2), "trace": float(tr)}
            for a, c2, tr in sweep
        ],
        "series": [
            {
                "name": "trace-sweep",
                "kind": "trace-sweep",
                "columns": ["amplitude", "trace"],
                "rows": [[float(a), float(tr)] for a, _, tr in sweep],
            }
        ],
    }
    return results, EXIT_OK


def _run_chain_test(config: ExperimentConfig):
    metric = build_metric(config.metric)
    params = config.params
    try:
        chain = load_chain(params["chain_file"])
    except OSError as err:
        raise ConfigError(f"cannot read chain file: {err}") from err
    report = shadow_search(
        metric,
        chain,
        params["epsilon"],
        params["horizon"],
        search_budget=params.get("budget", 200),
        rep_eps=params.get("rep_epsilon"),
    )
    results = {"shadowing": shadow_report_dict(report), "series": []}
    status = EXIT_INCONCLUSIVE if report.verdict == "inconclusive" else EXIT_OK
    return results, status


def _twist_params(params):
    fam = params["family"]
    domain = tuple(params["domain"])
    if fam == "integrable-normal-form":
        return twist.integrable_normal_form(params["tau"], domain)
    if fam == "perturbed-normal-form":
        return twist.perturbed_normal_form(params["tau"], params["eta"], domain)
    return twist.standard_map(params["k"], domain)


def _run_twist_demo(config: ExperimentConfig):
    params = config.params
    tp = _twist_params(params)
    tol = params.get("circle_tolerance", 1e-6)
    circles = []
    for rho in params["rotation_numbers"]:
        c = twist.detect_invariant_circle(tp, rho, tol)
        if isinstance(c, twist.CircleAbsence):
            raise twist.TransitSearchError(
                f"no invariant circle at rotation number {rho}: transport "
                f"witness crosses the band {c.band}"
            )
        circles.append(c)
    eps_prime = 0.5 * min(
        twist.circle_distance(a, b)
        for i, a in enumerate(circles)
        for b in circles[i + 1 :]
    )
    if "delta_prime" in params:
        delta_prime = params["delta_prime"]
    else:
        delta_prime = eps_prime * params.get("delta_prime_factor", 0.1)
    po = twist.build_climbing_pseudo_orbit(
        tp,
        circles,
        delta_prime,
        params["min_spacing"],
        transit_patience=params.get("transit_patience"),
    )
    cert = twist.certify_non_shadowable(
        tp, po, circles, params["grid_resolution"], params.get("offset_slack", 5)
    )
    results = {
        "circles": [
            {
                "rotation_number": float(c.rotation_number),
                "invariance_residual": float(c.invariance_residual),
                "radial_level": float(c.radial_level()),
                "lipschitz_bound": float(c.lipschitz_bound),
            }
            for c in circles
        ],
        "eps_prime": float(eps_prime),
        "delta_prime": float(delta_prime),
        "pseudo_orbit": {
            "length": int(len(po.points)),
            "jumps": int(len(po.jump_log)),
            "spacing": int(po.spacing),
            "max_jump": float(max((s for _, s, _ in po.jump_log), default=0.0)),
            "transits": [[int(a), int(b)] for a, b in po.transits],
        },
        "certificate": {
            "conclusion": cert.conclusion,
            "eps_prime": float(cert.eps_prime),
            "min_best_distance": cert.min_best_distance,
            "grid": cert.grid,
            "offset_slack": int(cert.offset_slack),
        },
        "series": [
            {
                "name": "twist-r-profile",
                "kind": "twist-r-profile",
                "columns": ["index", "r"],
                "rows": [[float(i), float(r)] for i, (_, r) in enumerate(po.points)],
                "jump_indices": [int(i) for i, _, _ in po.jump_log],
            }
        ],
    }
    return results, EXIT_OK


_HANDLERS = {
    "integrate": _run_integrate,
    "find-periodic": _run_find_periodic,
    "classify": _run_classify,
    "perturb-trace": _run_perturb_trace,
    "chain-test": _run_chain_test,
    "twist-demo": _run_twist_demo,
}


def run_experiment(config: ExperimentConfig):
    """(report dict, exit status); raises on numerical failure."""
    results, status = _HANDLERS[config.kind](config)
    report = {
        "config": config.raw,
        "results": results,
        "provenance": {
            "tool": "geoflow",
            "version": __version__,
            "seed": config.seed,
        },
    }
    return report, status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="geoflow",
        description="geodesic-flow experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, kind=args.command, seed_override=args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        report, status = run_experiment(config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0

    write_report(report, args.out)
    write_run_meta(
        {"wall_time_s": wall, "threads": args.threads, "exit_status": status},
        args.out,
    )
    written, skipped = emit_plot_data(report, args.out)
    if skipped:
        print(f"skipped unknown series: {skipped}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
