"""Experiment configuration: JSON schema validation and metric construction.

Configs are plain JSON objects {kind, metric?, params, seed?}.  Validation
is strict: unknown keys are rejected everywhere and tolerances must be
positive, so a typo fails before any computation starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from numbers import Real

from .metrics import (
    MetricField,
    ConformalBump,
    apply_conformal_bump,
    flat_torus,
    torus_of_revolution,
    sphere_band,
)

KINDS = (
    "integrate",
    "find-periodic",
    "classify",
    "perturb-trace",
    "chain-test",
    "twist-demo",
)

TWIST_FAMILIES = ("integrable-normal-form", "perturbed-normal-form", "standard-map")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    metric: dict | None
    params: dict
    seed: int
    raw: dict


def _is_number(x):
    return isinstance(x, Real) and not isinstance(x, bool)


def _positive(x):
    return _is_number(x) and x > 0


def _pos_int(x):
    return isinstance(x, int) and not isinstance(x, bool) and x > 0


def _nonneg_int(x):
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _vector(n):
    def check(x):
        return (
            isinstance(x, (list, tuple))
            and len(x) == n
            and all(_is_number(v) for v in x)
        )

    return check


def _number_list(x):
    return isinstance(x, list) and len(x) > 0 and all(_is_number(v) for v in x)


def _string(x):
    return isinstance(x, str) and len(x) > 0


# key -> (required, checker, description)
_SCHEMAS = {
    "integrate": {
        "start": (True, _vector(4), "a 4-vector [u, v, p_u, p_v]"),
        "time": (True, _positive, "a positive number"),
        "samples": (False, _pos_int, "a positive integer"),
        "section_axis": (False, lambda x: x in (0, 1, "u", "v"), "0, 1, 'u' or 'v'"),
        "section_value": (False, _is_number, "a number"),
    },
    "find-periodic": {
        "start": (True, _vector(4), "a 4-vector [u, v, p_u, p_v]"),
        "period_guess": (True, _positive, "a positive number"),
    },
    "classify": {
        "start": (True, _vector(4), "a 4-vector [u, v, p_u, p_v]"),
        "period_guess": (True, _positive, "a positive number"),
        "denominator_bound": (False, _pos_int, "a positive integer"),
    },
    "perturb-trace": {
        "start": (True, _vector(4), "a 4-vector [u, v, p_u, p_v]"),
        "period_guess": (True, _positive, "a positive number"),
        "amplitudes": (True, _number_list, "a nonempty list of numbers"),
        "bump_center": (True, _vector(2), "a 2-vector [u, v]"),
        "bump_radius": (True, _positive, "a positive number"),
    },
    "chain-test": {
        "chain_file": (True, _string, "a path string"),
        "epsilon": (True, _positive, "a positive number"),
        "horizon": (True, _positive, "a positive number"),
        "rep_epsilon": (False, _positive, "a positive number"),
        "budget": (False, _pos_int, "a positive integer"),
    },
    "twist-demo": {
        "family": (True, lambda x: x in TWIST_FAMILIES, f"one of {TWIST_FAMILIES}"),
        "tau": (False, lambda x: _is_number(x) and x != 0, "a nonzero number"),
        "k": (False, _is_number, "a number"),
        "eta": (False, _is_number, "a number"),
        "domain": (
            True,
            lambda x: _vector(2)(x) and x[0] < x[1],
            "an increasing 2-vector [r_lo, r_hi]",
        ),
        "rotation_numbers": (
            True,
            lambda x: _number_list(x) and len(x) >= 2 and sorted(x) == list(x),
            "an increasing list of at least two numbers",
        ),
        "circle_tolerance": (False, _positive, "a positive number"),
        "delta_prime": (False, _positive, "a positive number"),
        "delta_prime_factor": (False, _positive, "a positive number"),
        "min_spacing": (True, _pos_int, "a positive integer"),
        "grid_resolution": (True, _pos_int, "a positive integer"),
        "offset_slack": (False, _nonneg_int, "a nonnegative integer"),
        "transit_patience": (False, _nonneg_int, "a nonnegative integer"),
    },
}

_METRIC_SCHEMA = {
    "family": (
        True,
        lambda x: x in ("flat-torus", "torus-of-revolution", "sphere-band"),
        "one of flat-torus, torus-of-revolution, sphere-band",
    ),
    "R": (False, _positive, "a positive number"),
    "r": (False, _positive, "a positive number"),
    "half_width": (False, _positive, "a positive number"),
    "bump": (False, lambda x: isinstance(x, dict), "an object"),
}

_BUMP_SCHEMA = {
    "center": (True, _vector(2), "a 2-vector [u, v]"),
    "radius": (True, _positive, "a positive number"),
    "amplitude": (True, _is_number, "a number"),
}


def _check_keys(obj, schema, where):
    unknown = sorted(set(obj) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    for key, (required, check, desc) in schema.items():
        if key not in obj:
            if required:
                raise ConfigError(f"{where} is missing required key {key!r}")
            continue
        if not check(obj[key]):
            raise ConfigError(f"{where}.{key} must be {desc}")


def validate_config(data: dict, kind: str | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        data,
        {
            "kind": (True, lambda x: x in KINDS, f"one of {KINDS}"),
            "metric": (False, lambda x: isinstance(x, dict), "an object"),
            "params": (True, lambda x: isinstance(x, dict), "an object"),
            "seed": (False, _nonneg_int, "a nonnegative integer"),
        },
        "config",
    )
    if kind is not None and data["kind"] != kind:
        raise ConfigError(
            f"config kind {data['kind']!r} does not match command {kind!r}"
        )
    k = data["kind"]
    metric = data.get("metric")
    if k == "twist-demo":
        if metric is not None:
            raise ConfigError("twist-demo runs on the annulus; drop the metric key")
    else:
        if metric is None:
            raise ConfigError(f"kind {k!r} requires a metric")
        _check_keys(metric, _METRIC_SCHEMA, "metric")
        if "bump" in metric:
            _check_keys(metric["bump"], _BUMP_SCHEMA, "metric.bump")
    _check_keys(data["params"], _SCHEMAS[k], "params")
    params = data["params"]
    if k == "twist-demo":
        fam = params["family"]
        if fam in ("integrable-normal-form", "perturbed-normal-form"):
            if "tau" not in params:
                raise ConfigError(f"{fam} requires params.tau")
        if fam == "perturbed-normal-form" and "eta" not in params:
            raise ConfigError("perturbed-normal-form requires params.eta")
        if fam == "standard-map" and "k" not in params:
            raise ConfigError("standard-map requires params.k")
        if "delta_prime" in params and "delta_prime_factor" in params:
            raise ConfigError("give delta_prime or delta_prime_factor, not both")
    return ExperimentConfig(k, metric, dict(params), int(data.get("seed", 0)), data)


def load_config(path, kind: str | None = None, seed_override: int | None = None):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if seed_override is not None:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        data["seed"] = seed_override
    return validate_config(data, kind)


def build_metric(spec: dict) -> MetricField:
    family = spec["family"]
    if family == "flat-torus":
        metric = flat_torus()
    elif family == "torus-of-revolution":
        metric = torus_of_revolution(spec.get("R", 2.0), spec.get("r", 1.0))
    else:
        metric = sphere_band(spec.get("half_width", 1.2))
    if "bump" in spec:
        b = spec["bump"]
        bump = ConformalBump(tuple(b["center"]), b["radius"], b["amplitude"])
        metric = apply_conformal_bump(metric, bump)
    return metric
