"""YAML run configuration with validation that points at the offending line."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .functionals import REGIME_TAGS, Grid2D, Regime, RegimeError
from .gamma import PRESETS, QuadSpec
from .laminate import Laminate, LaminateError, Layer, build_laminate, isotropic_form
from .minimize import SolverOptions
from .tensor import ElasticForm


class ConfigError(ValueError):
    def __init__(self, message, line=None, code="config"):
        prefix = f"line {line}: " if line else ""
        super().__init__(prefix + message)
        self.line = line
        self.code = code


class _Section(dict):
    """Mapping that remembers the source line of each key."""

    def __init__(self, *args, start=None, **kw):
        super().__init__(*args, **kw)
        self.lines = {}
        self.start = start

    def line(self, key=None):
        return self.lines.get(key, self.start)


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    out = _Section(start=node.start_mark.line + 1)
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _check_keys(section, allowed, where, required=()):
    if not isinstance(section, _Section):
        raise ConfigError(f"{where} must be a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; allowed: {sorted(allowed)}", section.line(key))
    for key in required:
        if key not in section:
            raise ConfigError(f"missing required key {key!r} in {where}", section.line())


def _number(section, key, default=None, *, lo=None, hi=None, strict_lo=False, integer=False):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}", section.line())
        return default
    value = section[key]
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind) or not np.isfinite(value):
        what = "an integer" if integer else "a finite number"
        raise ConfigError(f"{key} must be {what}, got {value!r}", section.line(key))
    if lo is not None and (value <= lo if strict_lo else value < lo):
        op = ">" if strict_lo else ">="
        raise ConfigError(f"{key} = {value} out of range (must be {op} {lo})", section.line(key), "range")
    if hi is not None and value > hi:
        raise ConfigError(f"{key} = {value} out of range (must be <= {hi})", section.line(key), "range")
    return value


def _matrix(section, key, shape, default):
    if key not in section:
        return default
    try:
        m = np.array(section[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a numeric {shape[0]}x{shape[1]} matrix", section.line(key)) from None
    if m.shape != shape or not np.all(np.isfinite(m)):
        raise ConfigError(f"{key} must be a finite {shape[0]}x{shape[1]} matrix, got shape {m.shape}",
                          section.line(key))
    return m


@dataclass(frozen=True)
class LayerSpec:
    fraction: float
    stiffness: ElasticForm
    misfit_const: np.ndarray
    misfit_slope: np.ndarray
    line: int | None = None


@dataclass(frozen=True)
class GammaSpec:
    hs: tuple = tuple(2.0**-k for k in range(3, 8))
    preset: str = "cap"
    quad: QuadSpec = QuadSpec()


@dataclass(frozen=True)
class ProblemSpec:
    layers: tuple
    grid: Grid2D
    regime: Regime
    solver: SolverOptions
    gamma: GammaSpec = GammaSpec()
    thetas: tuple = (1e-4, 1e-2, 1.0, 1e2, 1e4)
    fields_path: str | None = None
    out_dir: str = "out"
    laminate: Laminate = field(default=None, repr=False)


_TOP = {"laminate", "domain", "regime", "solver", "sweep", "gamma", "fields", "output"}


def _parse_layer(raw, index) -> LayerSpec:
    where = f"laminate.layers[{index}]"
    _check_keys(raw, {"fraction", "lambda", "mu", "voigt", "misfit_const", "misfit_slope"}, where, ("fraction",))
    frac = _number(raw, "fraction")
    if "voigt" in raw:
        if "lambda" in raw or "mu" in raw:
            raise ConfigError(f"{where}: give either voigt or lambda/mu, not both", raw.line("voigt"))
        c = _matrix(raw, "voigt", (6, 6), None)
        if not np.allclose(c, c.T, rtol=0, atol=1e-12 * max(1.0, np.abs(c).max())):
            raise ConfigError(f"{where}: voigt matrix is not symmetric", raw.line("voigt"))
        q = ElasticForm(c)
    else:
        lam = _number(raw, "lambda", lo=0)
        mu = _number(raw, "mu", lo=0, strict_lo=True)
        q = isotropic_form(lam, mu)
    zero = np.zeros((3, 3))
    return LayerSpec(frac, q, _matrix(raw, "misfit_const", (3, 3), zero),
                     _matrix(raw, "misfit_slope", (3, 3), zero), raw.line())


def _parse_solver(raw):
    if raw is None:
        return SolverOptions(), -1
    _check_keys(raw, {"tol", "max_iter", "memory", "jitter", "reproducible", "precondition", "lki_sign",
                      "refresh"}, "solver")
    rep = raw.get("reproducible", False)
    pre = raw.get("precondition", True)
    for key, value in (("reproducible", rep), ("precondition", pre)):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false", raw.line(key))
    sign = _number(raw, "lki_sign", -1, integer=True)
    if sign not in (-1, 1):
        raise ConfigError(f"lki_sign must be -1 or 1, got {sign}", raw.line("lki_sign"), "range")
    opts = SolverOptions(
        tol=_number(raw, "tol", 1e-8, lo=0, strict_lo=True),
        max_iter=_number(raw, "max_iter", 10_000, lo=1, integer=True),
        memory=_number(raw, "memory", 10, lo=1, integer=True),
        jitter=_number(raw, "jitter", 0.0, lo=0),
        refresh=_number(raw, "refresh", 20, lo=1, integer=True),
        reproducible=rep,
        precondition=pre,
    )
    return opts, sign


def _parse_gamma(raw):
    if raw is None:
        return GammaSpec()
    _check_keys(raw, {"h", "preset", "cells", "inplane_order", "thickness_order"}, "gamma")
    hs = raw.get("h", list(GammaSpec.hs))
    line = raw.line("h")
    if not isinstance(hs, list) or not all(isinstance(h, (int, float)) and not isinstance(h, bool) for h in hs):
        raise ConfigError("gamma.h must be a list of numbers", line)
    if len(hs) < 4:
        raise ConfigError(f"gamma.h needs at least 4 values, got {len(hs)}", line, "range")
    if any(not h > 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError(f"gamma.h must be positive and strictly decreasing, got {hs}", line, "range")
    preset = raw.get("preset", "cap")
    if preset not in PRESETS:
        raise ConfigError(f"unknown field preset {preset!r}; expected one of {list(PRESETS)}", raw.line("preset"))
    quad = QuadSpec(
        cells=_number(raw, "cells", 64, lo=1, integer=True),
        inplane_order=_number(raw, "inplane_order", 3, lo=1, integer=True),
        thickness_order=_number(raw, "thickness_order", 3, lo=1, integer=True),
    )
    return GammaSpec(tuple(float(h) for h in hs), preset, quad)


def parse_config(text: str) -> ProblemSpec:
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"malformed YAML: {exc.problem}", line) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if raw is None:
        raise ConfigError("empty configuration")
    _check_keys(raw, _TOP, "configuration", ("laminate", "regime"))

    lam_raw = raw["laminate"]
    _check_keys(lam_raw, {"layers"}, "laminate", ("layers",))
    layers_raw = lam_raw["layers"]
    if not isinstance(layers_raw, list) or not layers_raw:
        raise ConfigError("laminate.layers must be a non-empty list", lam_raw.line("layers"))
    layers = tuple(_parse_layer(item, i) for i, item in enumerate(layers_raw))
    try:
        laminate = build_laminate([Layer(s.fraction, s.stiffness, s.misfit_const, s.misfit_slope) for s in layers])
    except LaminateError as exc:
        raise ConfigError(str(exc), lam_raw.line("layers"), exc.code) from None

    dom = raw.get("domain", _Section())
    _check_keys(dom, {"Lx", "Ly", "nx", "ny"}, "domain")
    grid = Grid2D(
        Lx=float(_number(dom, "Lx", 1.0, lo=0, strict_lo=True)),
        Ly=float(_number(dom, "Ly", 1.0, lo=0, strict_lo=True)),
        nx=_number(dom, "nx", 33, lo=3, integer=True),
        ny=_number(dom, "ny", 33, lo=3, integer=True),
    )

    solver, sign = _parse_solver(raw.get("solver"))

    reg = raw["regime"]
    _check_keys(reg, {"tag", "theta", "alpha"}, "regime", ("tag",))
    if reg["tag"] not in REGIME_TAGS:
        raise ConfigError(f"unknown regime {reg['tag']!r}; expected one of {list(REGIME_TAGS)}", reg.line("tag"))
    theta = _number(reg, "theta", 1.0, lo=0, strict_lo=True)
    alpha = _number(reg, "alpha", 0.0, lo=2, strict_lo=True) if "alpha" in reg else None
    try:
        regime = Regime(reg["tag"], float(theta), alpha, sign)
    except RegimeError as exc:
        raise ConfigError(str(exc), reg.line("alpha"), exc.code) from None

    thetas = (1e-4, 1e-2, 1.0, 1e2, 1e4)
    if "sweep" in raw:
        sw = raw["sweep"]
        _check_keys(sw, {"thetas"}, "sweep", ("thetas",))
        ts = sw["thetas"]
        if not isinstance(ts, list) or not ts or any(isinstance(t, bool) or not isinstance(t, (int, float))
                                                     or not t > 0 for t in ts):
            raise ConfigError("sweep.thetas must be a non-empty list of positive numbers", sw.line("thetas"), "range")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("sweep.thetas must be strictly increasing", sw.line("thetas"), "range")
        thetas = tuple(float(t) for t in ts)

    gamma = _parse_gamma(raw.get("gamma"))

    fields_path = raw.get("fields")
    if fields_path is not None and not isinstance(fields_path, str):
        raise ConfigError("fields must be a path to a CSV file", raw.line("fields"))
    out_dir = "out"
    if "output" in raw:
        out = raw["output"]
        _check_keys(out, {"dir"}, "output")
        out_dir = str(out.get("dir", out_dir))

    return ProblemSpec(layers, grid, regime, solver, gamma, thetas, fields_path, out_dir, laminate)


def load_config(path) -> ProblemSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
