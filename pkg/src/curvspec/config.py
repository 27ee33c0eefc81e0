"""Run configuration: TOML input, validation and state construction."""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import FlatTorusState, SphereState
from .expr import ExpressionError, evaluate
from .grid import GridState
from .mesh import MeshState, read_vertex_csv
from .params import FlowParams
from .types import CurvspecError, MeshError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(CurvspecError):
    """Invalid or incomplete configuration."""


COMMANDS = ("spectrum", "evolve", "verify", "check-hypotheses")
VERIFY_CHECKS = ("product-rule", "ibp", "cvx", "aav", "bochner", "reilly", "lprime", "bbf", "a9", "step-inequalities")

# allowed keys per table, with defaults
SCHEMA = {
    "": {"name": None, "command": None, "expect_exit": 0, "description": ""},
    "backend": {
        "kind": None,
        "n": None,
        "radius_sq": 1.0,
        "side_lengths": None,
        "resolution": [64, 64],
        "periods": [2 * math.pi, 2 * math.pi],
        "w": "0",
        "average": "weighted",
        "source": "icosphere",
        "level": 3,
        "radius": 1.0,
        "torus_resolution": [32, 32],
    },
    "flow": {"a": 0.0, "rho": 0.0, "c": 0.0, "use_average_term": False},
    "eta": {"kind": "zero", "expression": None, "path": None},
    "constants": None,  # free-form name -> number table
    "run": {"t_end": None, "dt": "auto", "m": 6, "overlap_threshold": 0.9, "safety": 0.1, "stride": 1},
    "verify": {
        "checks": [],
        "draws": 1,
        "kmax": 4,
        "amplitude": 1.0,
        "randomize": [],
        "w_amplitude": 0.2,
        "eta_amplitude": 0.3,
        "pairs": 3,
        "seed": 0,
        "delta": 1e-3,
        "deltas": [4e-3, 2e-3, 1e-3],
        "v": "cos(x)",
        "pair_index": 1,
        "A": 0.0,
        "break_c_sign": False,
    },
    "hypotheses": {"theorem": None, "A": 0.0, "K": "initial_min"},
    "tolerance": {
        "tier": "strict",
        "formula": None,
        "identity": 1e-7,
        "lprime": 1e-5,
        "bbf": 1e-4,
        "a9": 1e-6,
        "min_order": 1.8,
        "slice_checks": ["aaw", "measure", "gauss_bonnet"],
    },
    "output": {"dir": None},
}


@dataclass
class RunConfig:
    data: dict
    base_dir: Path

    def __getitem__(self, table):
        return self.data[table]

    @property
    def name(self) -> str:
        return self.data[""]["name"]

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.data.items() if k != ""}
        out.update(self.data[""])
        return out


def _merge(table: str, given: dict) -> dict:
    schema = SCHEMA[table]
    if schema is None:
        for k, v in given.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"constant {k!r} must be a number")
        return dict(given)
    unknown = set(given) - set(schema)
    if unknown:
        where = f"[{table}]" if table else "top level"
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    out = copy.deepcopy(schema)
    out.update(given)
    return out


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent, default_name=path.stem)


def parse_config(raw: dict, base_dir=".", default_name: str = "run") -> RunConfig:
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in raw.items() if isinstance(v, dict)}
    unknown = set(tables) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown table(s) {sorted(unknown)}")
    data = {"": _merge("", top)}
    for table in SCHEMA:
        if table:
            data[table] = _merge(table, tables.get(table, {}))
    if data[""]["name"] is None:
        data[""]["name"] = default_name
    cfg = RunConfig(data, Path(base_dir))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    cmd = cfg[""]["command"]
    if cmd is not None and cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; choose from {COMMANDS}")
    kind = cfg["backend"]["kind"]
    if kind not in ("sphere", "torus", "grid", "mesh"):
        raise ConfigError("backend.kind must be one of sphere, torus, grid, mesh")
    if kind in ("sphere", "torus") and cfg["backend"]["n"] is None:
        raise ConfigError(f"backend.n is required for the {kind} backend")
    if cfg["eta"]["kind"] not in ("zero", "expression", "csv"):
        raise ConfigError("eta.kind must be zero, expression or csv")
    if cfg["eta"]["kind"] == "expression" and not cfg["eta"]["expression"]:
        raise ConfigError("eta.expression is required when eta.kind = 'expression'")
    if cfg["eta"]["kind"] == "csv" and kind != "mesh":
        raise ConfigError("per-vertex eta files only apply to the mesh backend")
    if cfg["eta"]["kind"] != "zero" and kind in ("sphere", "torus"):
        raise ConfigError("homogeneous backends only support eta = 0")
    bad = set(cfg["verify"]["checks"]) - set(VERIFY_CHECKS)
    if bad:
        raise ConfigError(f"unknown verify checks {sorted(bad)}")
    bad = set(cfg["verify"]["randomize"]) - {"w", "eta"}
    if bad:
        raise ConfigError(f"verify.randomize accepts w and eta, got {sorted(bad)}")
    if cfg["verify"]["break_c_sign"] and cfg["flow"]["c"] == 0:
        raise ConfigError("verify.break_c_sign needs a nonzero flow.c")
    if cfg["tolerance"]["tier"] not in ("strict", "mesh"):
        raise ConfigError("tolerance.tier must be strict or mesh")
    run = cfg["run"]
    if run["dt"] != "auto" and not (isinstance(run["dt"], (int, float)) and run["dt"] > 0):
        raise ConfigError("run.dt must be positive or 'auto'")
    if not isinstance(run["m"], int) or run["m"] < 0:
        raise ConfigError("run.m must be a non-negative integer")
    if cfg[""]["command"] in ("evolve", "check-hypotheses") and run["t_end"] is None:
        raise ConfigError("run.t_end is required for time-dependent commands")
    theorem = cfg["hypotheses"]["theorem"]
    if theorem not in (None, "T2", "monn", "max_principle"):
        raise ConfigError("hypotheses.theorem must be T2, monn or max_principle")
    try:
        flow_params(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def dimension(cfg: RunConfig) -> int:
    b = cfg["backend"]
    if b["kind"] in ("sphere", "torus"):
        return int(b["n"])
    return int(b["n"] or 2)


def flow_params(cfg: RunConfig) -> FlowParams:
    f = cfg["flow"]
    return FlowParams(float(f["a"]), float(f["rho"]), float(f["c"]), dimension(cfg), bool(f["use_average_term"]))


def build_state(cfg: RunConfig):
    b, eta_cfg = cfg["backend"], cfg["eta"]
    constants = cfg["constants"]
    try:
        if b["kind"] == "sphere":
            return SphereState(int(b["n"]), float(b["radius_sq"]))
        if b["kind"] == "torus":
            lengths = b["side_lengths"] or [2 * math.pi] * int(b["n"])
            return FlatTorusState(int(b["n"]), tuple(lengths))
        eta_expr = eta_cfg["expression"] if eta_cfg["kind"] == "expression" else "0"
        if b["kind"] == "grid":
            return GridState.from_expressions(
                tuple(b["resolution"]), b["w"], eta_expr, tuple(b["periods"]), constants, b["average"]
            )
        if b["source"] == "icosphere":
            state = MeshState.icosphere(int(b["level"]), float(b["radius"]), average=b["average"])
        elif b["source"] == "torus":
            nx, ny = b["torus_resolution"]
            lx, ly = b["periods"]
            state = MeshState.flat_torus(int(nx), int(ny), lx, ly, average=b["average"])
        else:
            state = MeshState.load(cfg.base_dir / b["source"], average=b["average"])
        coords = mesh_coordinates(state, b)
        w = evaluate(b["w"], coords, constants)
        if eta_cfg["kind"] == "csv":
            eta = read_vertex_csv(cfg.base_dir / eta_cfg["path"], state.n_vertices)
        else:
            eta = evaluate(eta_expr, coords, constants)
        return state.with_fields(w=w, eta=eta)
    except (ExpressionError, MeshError, OSError) as exc:
        raise ConfigError(str(exc)) from None


def mesh_coordinates(state: MeshState, backend: dict) -> dict:
    """Expression variables on a mesh: chart coordinates for tori, positions otherwise."""
    if backend["source"] == "torus":
        nx, ny = backend["torus_resolution"]
        lx, ly = backend["periods"]
        idx = np.arange(state.n_vertices)
        return {"x": lx * (idx // ny) / nx, "y": ly * (idx % ny) / ny}
    V = state.vertices
    return {"x": V[:, 0], "y": V[:, 1], "z": V[:, 2]}
