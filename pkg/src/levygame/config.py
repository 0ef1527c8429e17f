"""JSON problem configuration: schema, cross-field validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .info import InfoStructure, RegressionConfig
from .levy import LevyTriplet
from .paths import TimeGrid

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["levy", "dims", "grid", "mc", "problem"],
    "properties": {
        "levy": {
            "type": "object",
            "required": ["sigma"],
            "properties": {
                "mean_rate": _num,
                "sigma": {"type": "number", "minimum": 0},
                "jumps": {
                    "type": "object",
                    "required": ["type"],
                    "properties": {
                        "type": {"enum": ["atoms", "exponential", "none"]},
                        "sizes": {"type": "array", "items": _num},
                        "rates": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        "intensity": {"type": "number", "exclusiveMinimum": 0},
                        "rate": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "dims": {
            "type": "object",
            "required": ["n", "d", "m1", "m2"],
            "properties": {"n": _pos_int, "d": _pos_int, "m1": _pos_int, "m2": _pos_int, "K": _pos_int},
        },
        "grid": {
            "type": "object",
            "required": ["T", "steps"],
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0}, "steps": _pos_int},
        },
        "mc": {
            "type": "object",
            "required": ["paths", "seed"],
            "properties": {"paths": _pos_int, "seed": {"type": "integer", "minimum": 0}},
        },
        "info": {
            "type": "object",
            "properties": {"type": {"enum": ["full", "trivial", "delayed"]},
                           "delta": {"type": "number", "minimum": 0}},
        },
        "regression": {
            "type": "object",
            "properties": {"degree": {"type": "integer", "minimum": 0},
                           "ridge": {"type": "number", "minimum": 0}},
        },
        "problem": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["lq", "custom"]}, "name": {"type": "string"}},
        },
        "outputs": {
            "type": "object",
            "properties": {"directory": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["csv", "json"]}}},
        },
        "saddle": {
            "type": "object",
            "properties": {"epsilons": {"type": "array", "items": _num}, "n_se": {"type": "number"}},
        },
        "convergence": {
            "type": "object",
            "properties": {"steps_list": {"type": "array", "items": _pos_int, "minItems": 1},
                           "r": _num, "c": _num},
        },
    },
}

# base shape of each constant LQ coefficient, in terms of the dimensions
LQ_SHAPES = {
    "A": ("n", "n"), "B": ("d", "n", "n"), "C": ("K", "n", "n"), "D1": ("n", "m1"),
    "D2": ("n", "m2"), "E": ("n",), "F": ("d", "n"), "G": ("K", "n"), "M": ("n",),
    "N1": ("m1", "m1"), "N2": ("m2", "m2"),
}
LQ_REQUIRED = ("A", "D1", "D2", "M", "N1", "N2")


@dataclass
class ProblemConfig:
    raw: dict
    levy: LevyTriplet
    dims: dict
    grid: TimeGrid
    paths: int
    seed: int
    info: InfoStructure
    regression: RegressionConfig
    problem: dict
    out_dir: str = "out"
    formats: tuple = ("csv", "json")
    epsilons: tuple = (0.1, 0.2, 0.4)
    n_se: float = 3.0
    convergence: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return int(self.dims.get("K", 3))

    def config_hash(self) -> str:
        return _hash(self.raw)

    def family_hash(self) -> str:
        """Hash ignoring the seed, the step count and output settings."""
        r = copy.deepcopy(self.raw)
        r.get("mc", {}).pop("seed", None)
        r.get("grid", {}).pop("steps", None)
        r.pop("outputs", None)
        return _hash(r)

    def lq_arrays(self) -> dict:
        """LQ coefficients as float arrays, zeros for omitted optional ones."""
        dims = dict(self.dims, K=self.K)
        out = {}
        for name, base in LQ_SHAPES.items():
            if name in self.problem:
                out[name] = np.asarray(self.problem[name], dtype=float)
            else:
                out[name] = np.zeros(tuple(dims[b] for b in base))
        xi = self.problem.get("xi", {})
        n, d, K = dims["n"], dims["d"], self.K
        out["xi_const"] = np.asarray(xi.get("const", np.zeros(n)), dtype=float).reshape(n)
        out["xi_W"] = np.asarray(xi.get("W", np.zeros((n, d))), dtype=float).reshape(n, d)
        out["xi_H"] = np.asarray(xi.get("H", np.zeros((n, K))), dtype=float).reshape(n, K)
        return out


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _json_path(parts) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def _check_lq(problem, dims, steps, errors):
    for name in LQ_REQUIRED:
        if name not in problem:
            errors.append((f"problem.{name}", "required LQ coefficient missing"))
    for name, base in LQ_SHAPES.items():
        if name not in problem:
            continue
        try:
            arr = np.asarray(problem[name], dtype=float)
        except (TypeError, ValueError):
            errors.append((f"problem.{name}", "must be a numeric (nested) array"))
            continue
        want = tuple(dims[b] for b in base)
        if name == "M":
            ok = arr.shape == want
        else:
            ok = arr.shape == want or arr.shape == (steps,) + want
        if not ok:
            errors.append((f"problem.{name}",
                           f"shape {arr.shape} inconsistent with {want} "
                           f"({' x '.join(base)}) or ({steps}, ...) time-indexed"))
        elif not np.all(np.isfinite(arr)):
            errors.append((f"problem.{name}", "entries must be finite"))
    for name in ("N1", "N2"):
        if name in problem and not any(p == f"problem.{name}" for p, _ in errors):
            arr = np.asarray(problem[name], dtype=float)
            mats = arr.reshape((-1,) + arr.shape[-2:])
            if not np.allclose(mats, np.swapaxes(mats, 1, 2)):
                errors.append((f"problem.{name}", "must be symmetric"))
            elif np.linalg.eigvalsh(mats).min() <= 0:
                errors.append((f"problem.{name}", "must be positive definite"))
    xi = problem.get("xi", {})
    n, d, K = dims["n"], dims["d"], dims["K"]
    for key, want in (("const", (n,)), ("W", (n, d)), ("H", (n, K))):
        if key in xi and np.asarray(xi[key], dtype=float).shape != want:
            errors.append((f"problem.xi.{key}", f"expected shape {want}"))


def parse_config(raw: dict, seed=None, paths=None, steps=None) -> ProblemConfig:
    """Validate a config dict (after CLI overrides) and build a ProblemConfig."""
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw.setdefault("mc", {})["seed"] = int(seed)
    if paths is not None:
        raw.setdefault("mc", {})["paths"] = int(paths)
    if steps is not None:
        raw.setdefault("grid", {})["steps"] = int(steps)
    errors = []
    validator = jsonschema.Draft202012Validator(SCHEMA)
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        path = list(err.absolute_path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            path = path + [missing]
        errors.append((_json_path(path), err.message))
    if errors:
        raise ConfigError(errors)

    dims = dict(raw["dims"])
    dims.setdefault("K", 3)
    steps_ = raw["grid"]["steps"]
    try:
        levy = LevyTriplet.from_dict(raw["levy"])
    except (ValueError, KeyError) as e:
        errors.append(("levy", str(e)))
        levy = None
    problem = raw["problem"]
    if problem["kind"] == "lq":
        _check_lq(problem, dims, steps_, errors)
    elif "name" not in problem:
        errors.append(("problem.name", "custom problems must name a registered definition"))
    info = raw.get("info", {"type": "full"})
    if info.get("type") == "delayed" and "delta" not in info:
        errors.append(("info.delta", "delayed information needs a delay"))
    if errors:
        raise ConfigError(errors)

    outputs = raw.get("outputs", {})
    saddle = raw.get("saddle", {})
    return ProblemConfig(
        raw=raw, levy=levy, dims=dims, grid=TimeGrid(float(raw["grid"]["T"]), int(steps_)),
        paths=int(raw["mc"]["paths"]), seed=int(raw["mc"]["seed"]),
        info=InfoStructure.from_dict(info), regression=RegressionConfig.from_dict(raw.get("regression", {})),
        problem=problem, out_dir=outputs.get("directory", "out"),
        formats=tuple(outputs.get("formats", ("csv", "json"))),
        epsilons=tuple(float(e) for e in saddle.get("epsilons", (0.1, 0.2, 0.4))),
        n_se=float(saddle.get("n_se", 3.0)), convergence=dict(raw.get("convergence", {})),
    )


def load_config(path, **overrides) -> ProblemConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError([("<file>", f"cannot read {path}: {e}")]) from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("<file>", f"JSON parse error at line {e.lineno}: {e.msg}")]) from e
    return parse_config(raw, **overrides)
