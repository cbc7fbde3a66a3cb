"""Run configuration: JSON documents validated into a :class:`RunConfig`."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import Expression, ExpressionError, parse_expression
from .mesh import Mesh, MeshError, build_interval_mesh, build_rectangle_mesh, refine_uniform

COMMANDS = ("solve", "eigen", "constants", "certify", "convergence", "timeseries")
TOP_LEVEL = {"domain", "mesh", "weight", "rhs", "current", "command", "parameters", "output",
             "quad_degree"}
PARAMETERS = {
    "solve": set(),
    "eigen": {"k"},
    "constants": {"q", "seed"},
    "certify": set(),
    "convergence": {"exact", "levels"},
    "timeseries": {"times", "internal_force", "overrides"},
}
OVERRIDE_KEYS = {"index", "weight", "rhs", "current", "internal_force"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NodalData:
    """Weight or load given as 'index value' lines for the (refined) mesh nodes."""

    path: str
    values: np.ndarray


@dataclass
class RunConfig:
    domain: tuple
    mesh: dict
    weight: Expression | NodalData
    rhs: Expression | NodalData | None
    current: list[Expression]
    command: str
    parameters: dict
    output: str = "weightsl"
    quad_degree: int | None = None
    source_dir: Path = field(default=Path("."))

    def build_mesh(self) -> Mesh:
        elements = self.mesh["elements"]
        if len(self.domain) == 1:
            (a, b), = self.domain
            mesh = build_interval_mesh(a, b, elements[0])
        else:
            mesh = build_rectangle_mesh(self.domain[0], self.domain[1], elements[0], elements[1])
        for _ in range(self.mesh.get("refinements", 0)):
            mesh = refine_uniform(mesh)
        return mesh


def _expr(value, where: str) -> Expression:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected an expression string")
    try:
        return parse_expression(value)
    except ExpressionError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def read_nodal_file(path: Path) -> np.ndarray:
    """Whitespace-separated ``index value`` lines; indices must cover 0..N-1 once."""
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'index value'")
        try:
            idx, val = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if idx in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate index {idx}")
        pairs[idx] = val
    if sorted(pairs) != list(range(len(pairs))):
        raise ConfigError(f"{path}: indices must be 0..N-1")
    return np.array([pairs[i] for i in range(len(pairs))])


def _field(value, where: str, base: Path):
    if isinstance(value, dict):
        if set(value) != {"nodal_file"}:
            raise ConfigError(f"{where}: only the key 'nodal_file' is allowed")
        path = base / value["nodal_file"]
        try:
            return NodalData(str(path), read_nodal_file(path))
        except OSError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return _expr(value, where)


def _positive_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{where}: expected a positive integer")
    return value


def parse_config(doc: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in ("domain", "mesh", "weight", "command"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")

    command = doc["command"]
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")

    dom = doc["domain"]
    if not isinstance(dom, dict) or len(dom) != 1 or not set(dom) <= {"interval", "rectangle"}:
        raise ConfigError("domain: give exactly one of 'interval' or 'rectangle'")
    try:
        if "interval" in dom:
            a, b = (float(v) for v in dom["interval"])
            domain = ((a, b),)
        else:
            (x0, x1), (y0, y1) = ((float(p), float(q)) for p, q in dom["rectangle"])
            domain = ((x0, x1), (y0, y1))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"domain: malformed bounds ({exc})") from exc
    if any(lo >= hi for lo, hi in domain):
        raise ConfigError("domain: degenerate bounds")

    mesh_spec = doc["mesh"]
    if not isinstance(mesh_spec, dict) or not set(mesh_spec) <= {"elements", "refinements"} \
            or "elements" not in mesh_spec:
        raise ConfigError("mesh: expected {'elements': ..., 'refinements': ...}")
    elements = mesh_spec["elements"]
    elements = [elements] if isinstance(elements, int) and not isinstance(elements, bool) else elements
    if not isinstance(elements, list) or len(elements) != len(domain):
        raise ConfigError("mesh.elements: one count per domain dimension")
    elements = [_positive_int(e, "mesh.elements") for e in elements]
    refinements = mesh_spec.get("refinements", 0)
    if isinstance(refinements, bool) or not isinstance(refinements, int) or refinements < 0:
        raise ConfigError("mesh.refinements: expected a nonnegative integer")

    weight = _field(doc["weight"], "weight", base)
    rhs = _field(doc["rhs"], "rhs", base) if doc.get("rhs") is not None else None
    current = doc.get("current") or []
    if isinstance(current, str):
        current = [current]
    if not isinstance(current, list):
        raise ConfigError("current: expected a list of expressions")
    current = [_expr(c, f"current[{i}]") for i, c in enumerate(current)]

    params = doc.get("parameters") or {}
    if not isinstance(params, dict):
        raise ConfigError("parameters: expected an object")
    unknown = set(params) - PARAMETERS[command]
    if unknown:
        raise ConfigError(f"parameters: unknown keys for {command}: {', '.join(sorted(unknown))}")
    params = _check_parameters(command, dict(params), base)

    if command in ("solve", "convergence", "timeseries") and rhs is None:
        raise ConfigError(f"command {command!r} needs 'rhs'")

    quad = doc.get("quad_degree")
    if quad is not None:
        quad = _positive_int(quad, "quad_degree")
    output = doc.get("output", "weightsl")
    if not isinstance(output, str) or not output:
        raise ConfigError("output: expected a path prefix")

    cfg = RunConfig(domain, {"elements": elements, "refinements": refinements}, weight, rhs,
                    current, command, params, output, quad, base)
    try:
        mesh = cfg.build_mesh()
    except MeshError as exc:
        raise ConfigError(f"mesh: {exc}") from exc
    for name in ("weight", "rhs"):
        data = getattr(cfg, name)
        if isinstance(data, NodalData) and len(data.values) != mesh.num_nodes:
            raise ConfigError(f"{name}: nodal file has {len(data.values)} values, mesh has "
                              f"{mesh.num_nodes} nodes")
    return cfg


def _check_parameters(command: str, params: dict, base: Path) -> dict:
    if command == "eigen":
        params["k"] = _positive_int(params.get("k", 5), "parameters.k")
    elif command == "constants":
        qs = params.get("q", [2.0, 4.0 / 3.0])
        qs = qs if isinstance(qs, list) else [qs]
        try:
            qs = [float(q) for q in qs]
        except (TypeError, ValueError) as exc:
            raise ConfigError("parameters.q: expected numbers") from exc
        if any(not 1.0 <= q <= 16.0 for q in qs):
            raise ConfigError("parameters.q: exponents must lie in [1, 16]")
        params["q"] = qs
        seed = params.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("parameters.seed: expected an integer")
        params["seed"] = seed
    elif command == "convergence":
        if "exact" not in params:
            raise ConfigError("convergence needs parameters.exact (the exact solution)")
        params["exact"] = _expr(params["exact"], "parameters.exact")
        params["levels"] = _positive_int(params.get("levels", 4), "parameters.levels")
        if params["levels"] < 2:
            raise ConfigError("parameters.levels: need at least 2 levels")
    elif command == "timeseries":
        params["times"] = _times(params.get("times"))
        if params.get("internal_force") is not None:
            params["internal_force"] = _expr(params["internal_force"], "parameters.internal_force")
        overrides = params.get("overrides") or []
        if not isinstance(overrides, list):
            raise ConfigError("parameters.overrides: expected a list")
        checked = {}
        for i, ov in enumerate(overrides):
            where = f"parameters.overrides[{i}]"
            if not isinstance(ov, dict) or "index" not in ov or set(ov) - OVERRIDE_KEYS:
                raise ConfigError(f"{where}: expected 'index' plus weight/rhs/current/internal_force")
            idx = ov["index"]
            if isinstance(idx, bool) or not isinstance(idx, int) or not 0 <= idx < len(params["times"]):
                raise ConfigError(f"{where}.index: out of range")
            entry = {}
            for key in ("weight", "rhs", "internal_force"):
                if key in ov:
                    entry[key] = _field(ov[key], f"{where}.{key}", base)
            if "current" in ov:
                cur = ov["current"] if isinstance(ov["current"], list) else [ov["current"]]
                entry["current"] = [_expr(c, f"{where}.current") for c in cur]
            checked[idx] = entry
        params["overrides"] = checked
    return params


def _times(spec) -> list[float]:
    if isinstance(spec, list) and spec:
        try:
            return [float(t) for t in spec]
        except (TypeError, ValueError) as exc:
            raise ConfigError("parameters.times: expected numbers") from exc
    if isinstance(spec, dict) and set(spec) == {"start", "step", "count"}:
        count = _positive_int(spec["count"], "parameters.times.count")
        try:
            start, step = float(spec["start"]), float(spec["step"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("parameters.times: start/step must be numbers") from exc
        if step <= 0:
            raise ConfigError("parameters.times.step must be positive")
        return [start + i * step for i in range(count)]
    raise ConfigError("parameters.times: give a nonempty list or {start, step, count}")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, path.parent)
