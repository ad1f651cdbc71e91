"""Run configuration: TOML schema, validation, defaults and canonical emission.

A config has a top-level ``seed`` and the tables ``model``, ``grid``,
``solver``, ``scenario`` and ``output``. ``model`` and ``scenario`` are
required; the rest default. Unknown keys are rejected by name. The resolved
config carries every defaulted value, so emitting it and parsing the result
reproduces it exactly.

Scenario keys by ``scenario.name``:

``flatness``
    ``taus``, ``epsilons``, ``seeds``, ``mu`` (default ``lam / (16 n)``),
    ``margin``. Grids: ``grid.coarse_nodes`` calibrates, ``grid.nodes`` is
    checked; the box is ``[-3, 3]^n``.
``stability``
    ``gammas``, ``eps``, ``c_emp``, ``data``, ``data_scale`` on the box
    ``[grid.lower, grid.upper]^n`` with ``grid.nodes`` per axis.
``blowup``
    ``field``, ``center``, ``radii``, ``samples``; the field is sampled on
    the box with ``grid.nodes`` per axis.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import tomli
import tomli_w

from .errors import ConfigError
from .hamiltonian import AnisotropicQuadratic, HamiltonianModel, Quadratic, SeparablePower, mollify

# Closed-form data on coordinates of shape (..., n).
DATA = {
    "affine": lambda x: x[..., -1],
    "aronsson": lambda x: np.abs(x[..., 0]) ** (4 / 3) - np.abs(x[..., 1]) ** (4 / 3),
    "wave": lambda x: 0.8 * x[..., 0] + 0.3 * np.sin(2.0 * x[..., -1]),
}

_MODEL_KEYS = {
    "quadratic": {"family", "n", "lam", "Lam", "gamma", "order"},
    "anisotropic": {"family", "matrix", "gamma", "order"},
    "separable_power": {"family", "n", "alpha", "radius", "gamma", "order"},
}
_SCENARIO_DEFAULTS = {
    "flatness": {"taus": [0.1, 0.03, 0.01], "epsilons": [0.1, 0.05], "seeds": None, "mu": None, "margin": 2.0},
    "stability": {"gammas": [0.2, 0.1, 0.05], "eps": 0.05, "c_emp": 1.0, "data": "wave", "data_scale": 1.0},
    "blowup": {"field": "aronsson", "center": [1.0, 1.0], "radii": [0.2, 0.1, 0.05, 0.025, 0.0125], "samples": 21},
}
_GRID_DEFAULTS = {
    "flatness": {"nodes": 61, "coarse_nodes": 31},
    "stability": {"nodes": 41, "lower": -1.0, "upper": 1.0},
    "blowup": {"nodes": 2501, "lower": -1.25, "upper": 1.25},
}
_SOLVER_DEFAULTS = {"tolerance": 1e-9, "max_iterations": 500, "damping": 0.7, "newton_finish": True, "picard_patience": 5}
_OUTPUT_DEFAULTS = {"directory": "out", "formats": ["csv", "json"]}
_TOP_KEYS = {"seed", "model", "grid", "solver", "scenario", "output"}


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved configuration; ``data`` is the canonical nested dict."""

    data: dict

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def block(self, name: str) -> dict:
        return copy.deepcopy(self.data[name])

    @property
    def scenario(self) -> str:
        return self.data["scenario"]["name"]

    def to_toml(self) -> str:
        return emit_config(self)


def _reject_unknown(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{where}]" if where else f"unknown key '{key}'")


def _number(table: dict, key: str, where: str, positive=False, integer=False, lo=None, hi=None):
    v = table[key]
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        raise ConfigError(f"[{where}] {key} must be {'an integer' if integer else 'a number'}, got {v!r}")
    v = int(v) if integer else float(v)
    if not math.isfinite(v):
        raise ConfigError(f"[{where}] {key} must be finite")
    if positive and v <= 0:
        raise ConfigError(f"[{where}] {key} must be positive, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"[{where}] {key} must be >= {lo!r}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"[{where}] {key} must be <= {hi!r}, got {v!r}")
    table[key] = v
    return v


def _number_list(table: dict, key: str, where: str, positive=True, decreasing=False, integer=False):
    v = table[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"[{where}] {key} must be a non-empty list")
    out = []
    for item in v:
        tmp = {key: item}
        out.append(_number(tmp, key, where, positive=positive, integer=integer))
    if decreasing and any(b >= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"[{where}] {key} must be strictly decreasing")
    table[key] = out
    return out


def _resolve_model(model: dict) -> dict:
    if not isinstance(model, dict):
        raise ConfigError("[model] must be a table")
    family = model.get("family")
    if family not in _MODEL_KEYS:
        raise ConfigError(f"[model] family must be one of {sorted(_MODEL_KEYS)}, got {family!r}")
    _reject_unknown(model, _MODEL_KEYS[family], "model")
    m = dict(model)
    m.setdefault("gamma", 0.0)
    _number(m, "gamma", "model", lo=0.0)
    if "order" in m:
        _number(m, "order", "model", positive=True, integer=True)
    if family == "quadratic":
        m.setdefault("n", 2)
        m.setdefault("lam", 1.0)
        m.setdefault("Lam", 1.0)
        _number(m, "n", "model", integer=True, lo=1, hi=3)
        _number(m, "lam", "model", positive=True)
        _number(m, "Lam", "model", positive=True)
        if m["lam"] > m["Lam"]:
            raise ConfigError("[model] lam must not exceed Lam")
    elif family == "anisotropic":
        if "matrix" not in m:
            raise ConfigError("[model] missing key 'matrix'")
        A = m["matrix"]
        try:
            arr = np.asarray(A, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[model] matrix is not numeric: {exc}") from exc
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or not 1 <= arr.shape[0] <= 3:
            raise ConfigError("[model] matrix must be square with size 1 to 3")
        m["matrix"] = [[float(v) for v in row] for row in arr]
    else:
        m.setdefault("n", 2)
        m.setdefault("alpha", 4.0)
        m.setdefault("radius", 2.0)
        _number(m, "n", "model", integer=True, lo=1, hi=3)
        _number(m, "alpha", "model", lo=2.0)
        _number(m, "radius", "model", positive=True)
    return m


def build_model(model: dict) -> HamiltonianModel:
    """The (possibly mollified) Hamiltonian described by a resolved ``[model]`` table."""
    family = model["family"]
    if family == "quadratic":
        if model["lam"] == model["Lam"]:
            base = Quadratic(model["n"], model["lam"], model["Lam"])
        else:
            diag = np.diag(np.linspace(model["lam"], model["Lam"], model["n"]))
            base = AnisotropicQuadratic(diag)
    elif family == "anisotropic":
        base = AnisotropicQuadratic(np.asarray(model["matrix"]))
    else:
        base = SeparablePower(model["n"], model["alpha"], model["radius"])
    if model["gamma"] > 0:
        return mollify(base, model["gamma"], model.get("order"))
    return base


def parse_config(text: str) -> RunConfig:
    """Parse and fully resolve a TOML run config."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return resolve(raw)


def resolve(raw: dict) -> RunConfig:
    """Validate a nested dict and apply defaults."""
    raw = copy.deepcopy(raw)
    _reject_unknown(raw, _TOP_KEYS, "")
    for required in ("model", "scenario"):
        if required not in raw:
            raise ConfigError(f"missing required block [{required}]")
    out: dict = {}
    out["seed"] = raw.get("seed", 0)
    if isinstance(out["seed"], bool) or not isinstance(out["seed"], int) or not 0 <= out["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    model = _resolve_model(raw["model"])
    out["model"] = model
    n = model["n"] if "n" in model else len(model["matrix"])

    scen = raw["scenario"]
    if not isinstance(scen, dict):
        raise ConfigError("[scenario] must be a table")
    name = scen.get("name")
    if name not in _SCENARIO_DEFAULTS:
        raise ConfigError(f"[scenario] name must be one of {sorted(_SCENARIO_DEFAULTS)}, got {name!r}")
    defaults = _SCENARIO_DEFAULTS[name]
    _reject_unknown(scen, set(defaults) | {"name"}, "scenario")
    s = {"name": name, **copy.deepcopy(defaults), **{k: v for k, v in scen.items() if k != "name"}}
    lam = build_model(model).lam if name == "flatness" else None
    if name == "flatness":
        _number_list(s, "taus", "scenario", positive=False)
        if any(not 0 <= t < 1 for t in s["taus"]):
            raise ConfigError("[scenario] taus must lie in [0, 1)")
        _number_list(s, "epsilons", "scenario")
        if any(e > 1 for e in s["epsilons"]):
            raise ConfigError("[scenario] epsilons must lie in (0, 1]")
        if s["seeds"] is None:
            s["seeds"] = [out["seed"]]
        _number_list(s, "seeds", "scenario", positive=False, integer=True)
        if s["mu"] is None:
            s["mu"] = lam / (16.0 * n)
        _number(s, "mu", "scenario", positive=True)
        if s["mu"] >= lam / (8.0 * n):
            raise ConfigError(f"[scenario] mu must be below lam/(8n) = {lam / (8.0 * n)!r}")
        _number(s, "margin", "scenario", lo=1.0)
    elif name == "stability":
        _number_list(s, "gammas", "scenario", decreasing=True)
        _number(s, "eps", "scenario", positive=True, hi=1.0)
        _number(s, "c_emp", "scenario", positive=True)
        _number(s, "data_scale", "scenario", positive=True)
        if s["data"] not in DATA:
            raise ConfigError(f"[scenario] data must be one of {sorted(DATA)}, got {s['data']!r}")
    else:
        if s["field"] not in DATA:
            raise ConfigError(f"[scenario] field must be one of {sorted(DATA)}, got {s['field']!r}")
        _number_list(s, "center", "scenario", positive=False)
        if len(s["center"]) != n:
            raise ConfigError(f"[scenario] center must have {n} entries")
        _number_list(s, "radii", "scenario", decreasing=True)
        _number(s, "samples", "scenario", integer=True, lo=5)
    if name != "flatness" and n < 2 and s.get("data", s.get("field")) == "aronsson":
        raise ConfigError("aronsson data needs n >= 2")
    out["scenario"] = s

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("[grid] must be a table")
    _reject_unknown(grid, set(_GRID_DEFAULTS[name]), "grid")
    g = {**_GRID_DEFAULTS[name], **grid}
    _number(g, "nodes", "grid", integer=True, lo=3)
    if name == "flatness":
        _number(g, "coarse_nodes", "grid", integer=True, lo=3)
        if g["coarse_nodes"] >= g["nodes"]:
            raise ConfigError("[grid] coarse_nodes must be below nodes")
    else:
        _number(g, "lower", "grid")
        _number(g, "upper", "grid")
        if g["lower"] >= g["upper"]:
            raise ConfigError("[grid] lower must be below upper")
    out["grid"] = g

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("[solver] must be a table")
    _reject_unknown(solver, set(_SOLVER_DEFAULTS), "solver")
    sv = {**_SOLVER_DEFAULTS, **solver}
    _number(sv, "tolerance", "solver", positive=True)
    _number(sv, "max_iterations", "solver", integer=True, lo=1)
    _number(sv, "damping", "solver", positive=True, hi=1.0)
    _number(sv, "picard_patience", "solver", integer=True, lo=1)
    if not isinstance(sv["newton_finish"], bool):
        raise ConfigError("[solver] newton_finish must be a boolean")
    out["solver"] = sv

    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("[output] must be a table")
    _reject_unknown(output, set(_OUTPUT_DEFAULTS), "output")
    o = {**copy.deepcopy(_OUTPUT_DEFAULTS), **output}
    if not isinstance(o["directory"], str) or not o["directory"]:
        raise ConfigError("[output] directory must be a non-empty string")
    if not isinstance(o["formats"], list) or not set(o["formats"]) <= {"csv", "json"} or not o["formats"]:
        raise ConfigError("[output] formats must be a non-empty subset of ['csv', 'json']")
    o["formats"] = sorted(set(o["formats"]))
    out["output"] = o
    return RunConfig(out)


def emit_config(config: RunConfig) -> str:
    """Canonical TOML text of a resolved config (keys sorted, floats round-trip exact)."""

    def canon(v):
        if isinstance(v, dict):
            return {k: canon(v[k]) for k in sorted(v) if v[k] is not None}
        if isinstance(v, list):
            return [canon(x) for x in v]
        return v

    return tomli_w.dumps(canon(config.data))


def with_overrides(config: RunConfig, seed: int | None = None, directory: str | None = None) -> RunConfig:
    """Apply command-line overrides and re-resolve."""
    data = copy.deepcopy(config.data)
    if seed is not None:
        if data["scenario"].get("seeds") == [data["seed"]]:
            data["scenario"]["seeds"] = [seed]
        data["seed"] = seed
    if directory is not None:
        data["output"]["directory"] = directory
    return resolve(data)
