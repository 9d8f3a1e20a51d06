"""Experiment configuration: a strict TOML schema.

Example::

    output_dir = "out"
    epsilon = 0.5
    layers = "auto"          # or a whole number

    [kernel]
    name = "cone"
    lambda2 = 0.5
    T = 1.0

    [grid]                   # lengths are multiples of the domain unit
    length = 8.0
    cells = 16384

    [ensemble]
    realizations = 100
    master_seed = 0
    workers = 1

    [y_law]
    kind = "deterministic"   # or "lognormal" (s2) or "constant" (c)

    [tests.xi]
    q = [1.0, 2.0]

Unknown keys are rejected. Errors carry the dotted field name and, when the
text is available, the line it was found on.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .catalog import CATALOG, make_kernel
from .sampler import GridSpec, YLaw


class ConfigError(ValueError):
    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        self.field_name = field_name
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name:
            where.append(f"field '{field_name}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


# per-test parameter schema: name -> (type, required)
_NUM = (int, float)
TEST_SCHEMA = {
    "normalization": {"z_mult": (_NUM, False)},
    "xi": {"q": (list, True), "fit_min": (_NUM, False), "fit_max": (_NUM, False),
           "expected_tolerance": (_NUM, False)},
    "kernel_recovery": {"separations": (list, True), "h": (_NUM, True),
                        "y_mode": (str, False), "y_floor": (_NUM, False),
                        "tolerance": (_NUM, False), "expected": (list, False)},
    "mixing": {"distances": (list, True), "interval": (_NUM, True)},
    "star": {"draws": (int, True), "omega_epsilon": (_NUM, False), "layers": (int, False),
             "cells": (int, False)},
    "cutoff": {"distance": (_NUM, True), "interval": (_NUM, True), "expect": (str, False)},
    "ergodic": {"windows": (list, True), "tolerance": (_NUM, False),
                "min_fraction": (_NUM, False), "relative_to_y": (bool, False)},
    "small_interval": {"gamma": (_NUM, True), "n": (list, True)},
    "atoms": {"alpha": (list, True), "n": (list, True)},
}
TOP_KEYS = {"output_dir", "epsilon", "layers", "kernel", "grid", "ensemble", "y_law", "tests"}
ENSEMBLE_KEYS = {"realizations", "master_seed", "workers"}
GRID_KEYS = {"length", "cells"}
Y_KEYS = {"kind", "s2", "c"}


@dataclass
class ExperimentConfig:
    kernel: dict
    grid: GridSpec
    epsilon: float = 0.5
    layers: int | None = None
    realizations: int = 100
    master_seed: int = 0
    workers: int = 1
    y_law: YLaw = field(default_factory=YLaw)
    tests: dict = field(default_factory=dict)
    output_dir: str = "out"

    def build_kernel(self):
        params = {k: v for k, v in self.kernel.items() if k != "name"}
        return make_kernel(self.kernel["name"], **params)

    def to_dict(self) -> dict:
        return {
            "output_dir": self.output_dir,
            "epsilon": self.epsilon,
            "layers": "auto" if self.layers is None else self.layers,
            "kernel": dict(self.kernel),
            "grid": self.grid.to_dict(),
            "ensemble": {"realizations": self.realizations, "master_seed": self.master_seed,
                         "workers": self.workers},
            "y_law": self.y_law.to_dict(),
            "tests": copy.deepcopy(self.tests),
        }

    @classmethod
    def from_mapping(cls, data: dict, text: str | None = None) -> "ExperimentConfig":
        return _parse(data, _LineIndex(text))


class _LineIndex:
    """Find the line a dotted key was written on, for diagnostics."""

    def __init__(self, text: str | None):
        self.lines = text.splitlines() if text else []

    def __call__(self, dotted: str) -> int | None:
        if not self.lines:
            return None
        for i, line in enumerate(self.lines, 1):
            if line.strip() == f"[{dotted}]":
                return i
        *tables, key = dotted.split(".")
        header = "[" + ".".join(tables) + "]" if tables else None
        in_table = header is None
        key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for i, line in enumerate(self.lines, 1):
            stripped = line.strip()
            if stripped.startswith("["):
                in_table = stripped == header
            elif in_table and key_re.match(line):
                return i
        return None


def _err(msg, name, where):
    raise ConfigError(msg, name, where(name))


def _reject_unknown(table: dict, allowed: set, prefix: str, where) -> None:
    for key in table:
        if key not in allowed:
            name = f"{prefix}.{key}" if prefix else key
            _err(f"unknown key (allowed: {sorted(allowed)})", name, where)


def _number(table, key, prefix, where, *, default=None, integer=False, positive=False,
            minimum=None):
    name = f"{prefix}.{key}" if prefix else key
    if key not in table:
        if default is None:
            _err("missing required value", name, where)
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(f"expected a number, got {v!r}", name, where)
    if integer and not (isinstance(v, int) or float(v).is_integer()):
        _err(f"expected a whole number, got {v!r}", name, where)
    if not math.isfinite(v):
        _err("must be finite", name, where)
    if positive and v <= 0:
        _err(f"must be positive, got {v!r}", name, where)
    if minimum is not None and v < minimum:
        _err(f"must be >= {minimum}, got {v!r}", name, where)
    return int(v) if integer else float(v)


def _parse(data: dict, where) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    _reject_unknown(data, TOP_KEYS, "", where)

    kernel = data.get("kernel")
    if not isinstance(kernel, dict) or "name" not in kernel:
        _err("a [kernel] table with a 'name' is required", "kernel.name", where)
    name = kernel["name"]
    if name not in CATALOG:
        _err(f"unknown kernel {name!r} (known: {sorted(CATALOG)})", "kernel.name", where)
    _reject_unknown(kernel, {"name", *CATALOG[name][1]}, "kernel", where)
    kparams = {"name": name}
    for key in CATALOG[name][1]:
        if key in kernel:
            kparams[key] = _number(kernel, key, "kernel", where)
    try:
        make_kernel(**kparams)
    except (ValueError, TypeError) as exc:
        params = [k for k in kparams if k != "name"]
        bad = next((k for k in params if kparams[k] <= 0), params[0] if params else "name")
        _err(str(exc), f"kernel.{bad}", where)

    grid = data.get("grid")
    if not isinstance(grid, dict):
        _err("a [grid] table is required", "grid", where)
    _reject_unknown(grid, GRID_KEYS, "grid", where)
    length = _number(grid, "length", "grid", where, positive=True)
    cells = _number(grid, "cells", "grid", where, integer=True, minimum=2)

    eps = _number(data, "epsilon", "", where, default=0.5)
    if not 0.0 < eps < 1.0:
        _err(f"must lie in (0, 1), got {eps}", "epsilon", where)
    layers = data.get("layers", "auto")
    if layers == "auto":
        layers = None
    else:
        layers = _number(data, "layers", "", where, integer=True, minimum=0)

    ens = data.get("ensemble", {})
    if not isinstance(ens, dict):
        _err("must be a table", "ensemble", where)
    _reject_unknown(ens, ENSEMBLE_KEYS, "ensemble", where)
    realizations = _number(ens, "realizations", "ensemble", where, default=100, integer=True,
                           minimum=1)
    seed = _number(ens, "master_seed", "ensemble", where, default=0, integer=True, minimum=0)
    if seed >= 2 ** 64:
        _err("must fit in 64 bits", "ensemble.master_seed", where)
    workers = _number(ens, "workers", "ensemble", where, default=1, integer=True, minimum=1)

    y = data.get("y_law", {"kind": "deterministic"})
    if not isinstance(y, dict):
        _err("must be a table", "y_law", where)
    _reject_unknown(y, Y_KEYS, "y_law", where)
    kind = y.get("kind", "deterministic")
    if kind not in ("deterministic", "lognormal", "constant"):
        _err(f"unknown Y law {kind!r}", "y_law.kind", where)
    ylaw = YLaw(kind,
                _number(y, "s2", "y_law", where, default=0.0, minimum=0.0),
                _number(y, "c", "y_law", where, default=1.0, minimum=0.0))

    tests = data.get("tests", {})
    if not isinstance(tests, dict):
        _err("must be a table of test tables", "tests", where)
    parsed_tests = {}
    for tname, params in tests.items():
        prefix = f"tests.{tname}"
        if tname not in TEST_SCHEMA:
            _err(f"unknown test (known: {sorted(TEST_SCHEMA)})", prefix, where)
        if not isinstance(params, dict):
            _err("must be a table", prefix, where)
        schema = TEST_SCHEMA[tname]
        _reject_unknown(params, set(schema), prefix, where)
        out = {}
        for key, (typ, required) in schema.items():
            if key not in params:
                if required:
                    _err("missing required value", f"{prefix}.{key}", where)
                continue
            v = params[key]
            if typ is list:
                if not isinstance(v, list) or not all(
                        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                    _err("expected a list of numbers", f"{prefix}.{key}", where)
            elif typ is _NUM:
                v = _number(params, key, prefix, where)
            elif typ is int:
                v = _number(params, key, prefix, where, integer=True, minimum=1)
            elif not isinstance(v, typ):
                _err(f"expected {typ.__name__}, got {v!r}", f"{prefix}.{key}", where)
            out[key] = v
        parsed_tests[tname] = out

    out_dir = data.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        _err("expected a non-empty path string", "output_dir", where)

    return ExperimentConfig(kparams, GridSpec(length, cells), eps, layers, realizations, seed,
                            workers, ylaw, parsed_tests, out_dir)


def load_config(path) -> ExperimentConfig:
    """Read a TOML config, or the ``config`` entry of a JSON meta file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path} is not UTF-8 ({exc.reason})") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, line=exc.lineno) from None
        data = data.get("config", data) if isinstance(data, dict) else data
        return ExperimentConfig.from_mapping(data)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(str(exc), line=int(m.group(1)) if m else None) from None
    return ExperimentConfig.from_mapping(data, text)
