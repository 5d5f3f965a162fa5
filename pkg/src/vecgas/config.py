"""Experiment configuration: YAML ingestion, named ensemble presets, set and
weight grammars, and assembly of the domain objects."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .core import (
    CallableWeight,
    Circle,
    CompactSetTuple,
    Disc,
    InteractionMatrix,
    Interval,
    MassVector,
    WeightTuple,
    ZeroWeight,
    angelesco_matrix,
    beta_matrix,
    build_component,
    make_degree_schedule,
    nikishin_matrix,
)
from .errors import ConfigError

PRESETS = ("angelesco", "nikishin", "beta")

_INTERVAL_RE = re.compile(r"^\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]$")
_ROUND_RE = re.compile(r"^(disc|circle)\(\s*([^,]+)\s*,\s*([^,]+)\s*,\s*([^,)]+)\s*\)$")


def parse_piece(text: str):
    text = text.strip()
    m = _INTERVAL_RE.match(text)
    if m:
        return Interval(float(m.group(1)), float(m.group(2)))
    m = _ROUND_RE.match(text)
    if m:
        kind = Disc if m.group(1) == "disc" else Circle
        return kind(float(m.group(2)), float(m.group(3)), float(m.group(4)))
    raise ConfigError(f"cannot parse set piece {text!r}")


def parse_sets(text: str):
    """Components split on ';', union pieces inside a component on '+'."""
    comps = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        comps.append([parse_piece(p) for p in part.split("+")])
    if not comps:
        raise ConfigError("no components in set description")
    return comps


_EXPR_GLOBALS = {
    "__builtins__": {},
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "cos": np.cos,
    "sin": np.sin,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "pi": np.pi,
    "e": np.e,
}


def weight_from_expression(expr: str) -> CallableWeight:
    """Weight from an expression in x = Re z, y = Im z (or z itself)."""
    expr = expr.strip()
    if expr in ("0", "0.0", "zero", ""):
        return ZeroWeight()
    code = compile(expr, "<weight>", "eval")
    for name in code.co_names:
        if name not in _EXPR_GLOBALS and name not in ("x", "y", "z"):
            raise ConfigError(f"unknown name {name!r} in weight expression")

    def fn(z):
        return eval(  # restricted namespace, validated names only
            code, _EXPR_GLOBALS, {"x": z.real, "y": z.imag, "z": z}
        )

    return CallableWeight(fn)


@dataclass
class ExperimentConfig:
    """Parsed, validated experiment description."""

    raw_text: str
    preset: str | None
    beta: float | None
    matrix: list | None
    r: list
    sets: list          # per component: list of pieces
    weights: list       # per component: expression strings
    resolution: int = 400
    solver_tol: float = 5e-3
    solver_max_iter: int = 20000
    nu: str = "quadrature"
    seed: int = 0
    draws: int = 200
    burn_in: int = 200
    thin: int = 2
    chains: int = 1
    out_dir: str = "out"
    extras: dict = field(default_factory=dict)

    @property
    def d(self):
        return len(self.sets)

    def interaction_matrix(self) -> InteractionMatrix:
        if self.matrix is not None:
            return InteractionMatrix(np.asarray(self.matrix, dtype=float))
        if self.preset == "angelesco":
            return angelesco_matrix(self.d)
        if self.preset == "nikishin":
            return nikishin_matrix(self.d)
        if self.preset == "beta":
            if self.d != 1:
                raise ConfigError("beta preset requires a single component")
            return beta_matrix(self.beta if self.beta is not None else 2.0)
        raise ConfigError(f"unknown preset {self.preset!r}")

    def mass_vector(self) -> MassVector:
        return MassVector(np.asarray(self.r, dtype=float))

    def set_tuple(self) -> CompactSetTuple:
        comps = tuple(
            build_component(pieces, self.resolution) for pieces in self.sets
        )
        return CompactSetTuple(comps)

    def weight_tuple(self) -> WeightTuple:
        if not self.weights:
            return WeightTuple.zero(self.d)
        if len(self.weights) != self.d:
            raise ConfigError("need one weight per component")
        return WeightTuple(tuple(weight_from_expression(w) for w in self.weights))

    def schedule(self, k_max: int):
        return make_degree_schedule(self.mass_vector(), k_max)


def _as_sets(value):
    if isinstance(value, str):
        return parse_sets(value)
    out = []
    for comp in value:
        if isinstance(comp, str):
            out.append([parse_piece(p) for p in comp.split("+")])
        else:
            out.append([parse_piece(p) for p in comp])
    return out


def config_from_dict(data: dict, raw_text: str = "") -> ExperimentConfig:
    problem = data.get("problem", {})
    grid = data.get("grid", {})
    solver = data.get("solver", {})
    ens = data.get("ensemble", {})
    output = data.get("output", {})

    preset = problem.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {PRESETS})")
    sets = problem.get("sets")
    if sets is None:
        raise ConfigError("problem.sets is required")
    sets = _as_sets(sets)
    r = problem.get("r", [1.0] * len(sets))
    if len(r) != len(sets):
        raise ConfigError("problem.r length must match the number of components")
    matrix = problem.get("matrix")
    if matrix is None and preset is None:
        raise ConfigError("give problem.matrix or problem.preset")
    weights = problem.get("weights", [])
    if isinstance(weights, str):
        weights = [w.strip() for w in weights.split(";")]
    return ExperimentConfig(
        raw_text=raw_text,
        preset=preset,
        beta=problem.get("beta"),
        matrix=matrix,
        r=list(r),
        sets=sets,
        weights=list(weights),
        resolution=int(grid.get("resolution", 400)),
        solver_tol=float(solver.get("tol", 5e-3)),
        solver_max_iter=int(solver.get("max_iter", 20000)),
        nu=str(ens.get("nu", "quadrature")),
        seed=int(ens.get("seed", 0)),
        draws=int(ens.get("draws", 200)),
        burn_in=int(ens.get("burn_in", 200)),
        thin=int(ens.get("thin", 2)),
        chains=int(ens.get("chains", 1)),
        out_dir=str(output.get("directory", "out")),
        extras={k: v for k, v in data.items()
                if k not in ("problem", "grid", "solver", "ensemble", "output")},
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    return config_from_dict(data, raw_text=text)
