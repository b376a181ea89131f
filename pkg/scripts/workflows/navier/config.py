# SPDX-License-Identifier: copyleft-next-0.3.1
"""
The navier-bench YAML configuration: defaults, validation with source
line diagnostics, command line overrides and the config hash.

Every key below has a default, so an empty file is a valid config.
Unknown sections and keys are rejected.
"""

import copy
import logging
import os

import yaml

from navier import NavierError
from navier.elliptic import HARMONIC, LIFT_KINDS
from navier.reports import config_hash

EXPERIMENT_IDS = ("T3.1", "T3.4", "T3.5", "L3.7", "T3.8", "T3.9k1", "T3.10",
                  "AppA", "AppB", "MULT-ID", "TRANSPOSE", "ENERGY", "KORN")


class ConfigError(NavierError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path:
            where.append(path)
        if line:
            where.append("line %d" % line)
        super().__init__("%s: %s" % (", ".join(where), message) if where else message)


def _number(low=None, high=None, integer=False, strict_low=False):
    def check(value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number, got %r" % (value,))
        if integer and int(value) != value:
            raise ValueError("expected an integer, got %r" % (value,))
        value = int(value) if integer else float(value)
        if low is not None and (value <= low if strict_low else value < low):
            raise ValueError("must be %s %g" % (">" if strict_low else ">=", low))
        if high is not None and value > high:
            raise ValueError("must be <= %g" % high)
        return value
    return check


def _positive():
    return _number(0.0, strict_low=True)


def _count(low=0):
    return _number(low, integer=True)


def _boolean(value):
    if not isinstance(value, bool):
        raise ValueError("expected true or false, got %r" % (value,))
    return value


def _string(value):
    if not isinstance(value, str) or not value:
        raise ValueError("expected a non-empty string, got %r" % (value,))
    return value


def _choice(options):
    def check(value):
        if value not in options:
            raise ValueError("expected one of %s, got %r" % (", ".join(map(str, options)), value))
        return value
    return check


def _list(item, increasing=False, length=None, allowed_empty=False):
    def check(value):
        if not isinstance(value, list):
            raise ValueError("expected a list, got %r" % (value,))
        if not value and not allowed_empty:
            raise ValueError("list must not be empty")
        if length is not None and len(value) != length:
            raise ValueError("expected %d entries, got %d" % (length, len(value)))
        out = [item(v) for v in value]
        if increasing and any(b <= a for a, b in zip(out, out[1:])):
            raise ValueError("entries must be strictly increasing")
        return out
    return check


# section -> key -> (default, check)
SCHEMA = {
    "domain": {
        "dimension": (2, _choice((2, 3))),
        "inner_radius": (1.0, _positive()),
        "outer_radius": (2.0, _positive()),
        "levels": ([0, 1, 2], _list(_count(), increasing=True)),
    },
    "discretization": {
        "degree": (2, _choice((1, 2))),
        "lift": (HARMONIC, _choice(LIFT_KINDS)),
        "steps_per_unit": (32, _count(1)),
        "level": (1, _count()),
        "T_list": ([1.0, 2.0, 4.0, 8.0], _list(_positive(), increasing=True)),
        "T_list_long": ([1.0, 2.0, 4.0, 8.0, 16.0], _list(_positive(), increasing=True)),
    },
    "physics": {
        "mu": (1.0, _positive()),
        "lam": (1.0, _positive()),
    },
    "ensembles": {
        "members": (8, _count(1)),
        "eigenmodes": ([8, 16], _list(_count(), increasing=True, length=2)),
        "pulse_width": (0.25, _positive()),
        "forcing_frequency": (0.5, _positive()),
        "wave_number": (2, _count(1)),
        "wave_speed": (1.0, _positive()),
        "rough_wave_number": (6, _count(1)),
        "amplitude": (1.0, _positive()),
        "dual_modes": (2, _count(0)),
        "dual_time_modes": (2, _count(1)),
    },
    "timescale": {
        "orders": ([1, 2], _list(_number(1, 8, integer=True), increasing=True)),
        "taus": ([0.25, 1.0, 4.0, 16.0], _list(_positive(), increasing=True)),
        "modes": (64, _count(1)),
        "steps": (512, _count(32)),
        "members": (8, _count(1)),
    },
    "experiments": {
        "enabled": (list(EXPERIMENT_IDS), _list(_choice(EXPERIMENT_IDS))),
        "ratio_limit": (100.0, _positive()),
        "slope_limit": (0.05, _number(0.0)),
        "sqrt_law": ([0.35, 0.65], _list(_number(0.0), increasing=True, length=2)),
        "refinement_factor": (1.5, _positive()),
        "transposition_factor": (2.0, _positive()),
        "two_route_tolerance": (0.1, _positive()),
        "cauchy_tolerance": (0.1, _positive()),
        "energy_tolerance": (1e-10, _positive()),
        "energy_steps": (1000, _count(1)),
        "identity_tolerance": (1e-12, _positive()),
        "identity_fields": (100, _count(1)),
        "identity_points": (50, _count(1)),
        "term_tolerance": (0.05, _positive()),
        "rotation_tolerance": (1e-10, _positive()),
        "korn_levels": ([0, 1], _list(_count(), increasing=True)),
    },
    "output": {
        "directory": ("navier-out", _string),
        "formats": (["json", "csv", "xml"], _list(_choice(("json", "csv", "xml")))),
    },
    "run": {
        "seed": (0, _number(0, 2 ** 64 - 1, integer=True)),
        "workers": (0, _count(0)),
        "serial": (False, _boolean),
    },
}


def defaults():
    return {section: {key: copy.deepcopy(spec[0]) for key, spec in keys.items()}
            for section, keys in SCHEMA.items()}


def _key_lines(text):
    """(section, key) -> 1-based line, from the composed YAML node tree."""
    lines = {}
    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is None or not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for sub, _ in vnode.value:
                lines[(knode.value, sub.value)] = sub.start_mark.line + 1
    return lines


def validate(raw, lines=None):
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping of sections", None, 1)
    config = defaults()
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError("unknown section", str(section), lines.get((section,)))
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError("section must be a mapping", section, lines.get((section,)))
        for key, value in body.items():
            path = "%s.%s" % (section, key)
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", path, lines.get((section, key)))
            try:
                config[section][key] = SCHEMA[section][key][1](value)
            except ValueError as exc:
                raise ConfigError(str(exc), path, lines.get((section, key)))
    domain = config["domain"]
    if domain["outer_radius"] <= domain["inner_radius"]:
        raise ConfigError("outer_radius must exceed inner_radius", "domain.outer_radius",
                          lines.get(("domain", "outer_radius")))
    return config


def load_config(path=None):
    """Validated config from a YAML file; None gives the defaults."""
    if path is None:
        return defaults()
    if not os.path.isfile(path):
        raise ConfigError("%s does not exist" % path)
    with open(path) as stream:
        text = stream.read()
    try:
        raw = yaml.safe_load(text)
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("invalid YAML: %s" % getattr(exc, "problem", exc), path,
                          mark.line + 1 if mark else None)
    return validate(raw, lines)


def apply_overrides(config, seed=None, workers=None, out=None, serial=False):
    config = copy.deepcopy(config)
    if seed is not None:
        config["run"]["seed"] = _number(0, 2 ** 64 - 1, integer=True)(seed)
    if workers is not None:
        if workers < 1:
            raise ConfigError("worker count must be at least 1", "run.workers")
        config["run"]["workers"] = workers
    if out is not None:
        config["output"]["directory"] = out
    if serial:
        config["run"]["serial"] = True
        config["run"]["workers"] = 1
    return config


def worker_count(config):
    if config["run"]["serial"]:
        return 1
    return config["run"]["workers"] or os.cpu_count() or 1


def describe(config):
    digest = config_hash(config)
    logging.info("config %s seed %d workers %d" % (digest, config["run"]["seed"],
                                                   worker_count(config)))
    return digest
