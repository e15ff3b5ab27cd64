"""Scenario files, ground-truth polylines, and step traces.

Scenarios are TOML with every length/angle/pressure written as an
explicit quantity string ("1.5 mm", "80 GPa", "10 deg"); bare numbers
for dimensional fields are rejected so file units can never be
ambiguous.  Internally everything is metres, radians, pascals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .beam import BeamProperties
from .sim import (
    BevelSpec,
    InputError,
    NeedleSpec,
    Pose,
    SolverSettings,
    StepInputs,
    VInput,
)
from .tissue import Boundary, OgdenLayer, TissueDomain, TissueError

PRESETS = ("ph1", "ph2", "ph3", "chicken")

_LENGTH = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6}
_ANGLE = {"rad": 1.0, "deg": math.pi / 180.0}
_PRESSURE = {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9}

DEFAULT_THICKNESS = 0.040  # m, rest thickness when a layer omits it


class LoadError(ValueError):
    """Scenario/ground-truth parsing failure; message carries the field path."""


def _quantity(raw, units: dict, path: str) -> float:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raise LoadError(f"{path}: unit is required, write e.g. \"{raw} {next(iter(units))}\"")
    if not isinstance(raw, str):
        raise LoadError(f"{path}: expected a quantity string, got {raw!r}")
    parts = raw.split()
    if len(parts) != 2:
        raise LoadError(f"{path}: expected '<number> <unit>', got {raw!r}")
    try:
        value = float(parts[0])
    except ValueError:
        raise LoadError(f"{path}: cannot parse number in {raw!r}") from None
    if parts[1] not in units:
        raise LoadError(f"{path}: unknown unit {parts[1]!r}; known: {sorted(units)}")
    if not math.isfinite(value):
        raise LoadError(f"{path}: non-finite value in {raw!r}")
    return value * units[parts[1]]


def _length(raw, path):
    return _quantity(raw, _LENGTH, path)


def _angle(raw, path):
    return _quantity(raw, _ANGLE, path)


def _pressure(raw, path):
    return _quantity(raw, _PRESSURE, path)


def _number(raw, path) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise LoadError(f"{path}: expected a plain number, got {raw!r}")
    return float(raw)


def _point(raw, path) -> tuple[float, float]:
    if not (isinstance(raw, list) and len(raw) == 2):
        raise LoadError(f"{path}: expected [x, y] quantity strings")
    return (_length(raw[0], f"{path}[0]"), _length(raw[1], f"{path}[1]"))


def _boundary(raw, path) -> Boundary:
    if not (isinstance(raw, list) and len(raw) == 2):
        raise LoadError(f"{path}: expected [[x1,y1],[x2,y2]]")
    try:
        return Boundary(_point(raw[0], f"{path}[0]"), _point(raw[1], f"{path}[1]"))
    except TissueError as exc:
        raise LoadError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Scenario:
    needle: NeedleSpec
    domain: TissueDomain
    bevel: BevelSpec
    pose: Pose
    template_x: float | None = None
    settings: SolverSettings = SolverSettings()
    script: tuple[StepInputs, ...] = ()
    name: str | None = None


def _build_scenario(data: dict, name: str | None) -> Scenario:
    try:
        needle_tbl = data["needle"]
    except KeyError:
        raise LoadError("needle: table is required") from None
    for key in ("elastic_modulus", "outer_diameter", "inner_diameter",
                "length", "element_size"):
        if key not in needle_tbl:
            raise LoadError(f"needle.{key}: field is required")
    props = BeamProperties.from_tube(
        _pressure(needle_tbl["elastic_modulus"], "needle.elastic_modulus"),
        _length(needle_tbl["outer_diameter"], "needle.outer_diameter"),
        _length(needle_tbl["inner_diameter"], "needle.inner_diameter"))
    try:
        needle = NeedleSpec(_length(needle_tbl["length"], "needle.length"),
                            _length(needle_tbl["element_size"], "needle.element_size"),
                            props)
    except InputError as exc:
        raise LoadError(f"needle: {exc}") from exc

    bevel_tbl = needle_tbl.get("bevel", {})
    try:
        bevel = BevelSpec(
            _length(bevel_tbl["offset"], "needle.bevel.offset") if "offset" in bevel_tbl else 0.0,
            int(bevel_tbl.get("direction", 1)))
    except InputError as exc:
        raise LoadError(f"needle.bevel: {exc}") from exc

    pose_tbl = data.get("pose")
    if pose_tbl is None:
        raise LoadError("pose: table is required")
    base = _point(pose_tbl.get("base"), "pose.base")
    pose = Pose(base[0], base[1], _angle(pose_tbl.get("orientation", "0 rad"),
                                         "pose.orientation"))

    layers_raw = data.get("layers")
    if not layers_raw:
        raise LoadError("layers: at least one layer is required")
    layers = []
    for i, tbl in enumerate(layers_raw):
        path = f"layers[{i}]"
        if "mu" not in tbl or "alpha" not in tbl or "entry" not in tbl:
            raise LoadError(f"{path}: mu, alpha and entry are required")
        thickness = (_length(tbl["thickness"], f"{path}.thickness")
                     if "thickness" in tbl else DEFAULT_THICKNESS)
        try:
            layers.append(OgdenLayer(
                i,
                _pressure(tbl["mu"], f"{path}.mu"),
                _number(tbl["alpha"], f"{path}.alpha"),
                _number(tbl.get("gamma", 0.0), f"{path}.gamma"),
                thickness,
                _boundary(tbl["entry"], f"{path}.entry")))
        except TissueError as exc:
            raise LoadError(f"{path}: {exc}") from exc
    exit_boundary = None
    if "domain" in data and "exit" in data["domain"]:
        exit_boundary = _boundary(data["domain"]["exit"], "domain.exit")
    try:
        domain = TissueDomain(layers, exit_boundary)
    except TissueError as exc:
        raise LoadError(f"layers: {exc}") from exc

    template_x = None
    if "template" in data:
        template_x = _length(data["template"].get("x"), "template.x")

    solver_tbl = data.get("solver", {})
    settings = SolverSettings(
        relaxation=_number(solver_tbl.get("relaxation", 0.5), "solver.relaxation"),
        tolerance=(_length(solver_tbl["tolerance"], "solver.tolerance")
                   if "tolerance" in solver_tbl else 1e-7),
        max_iterations=int(solver_tbl.get("max_iterations", 50)),
        include_friction=bool(solver_tbl.get("friction", False)),
        lambda_min=_number(solver_tbl.get("lambda_min", 0.05), "solver.lambda_min"),
        constraint_spacing=(_length(solver_tbl["constraint_spacing"],
                                    "solver.constraint_spacing")
                            if "constraint_spacing" in solver_tbl else None))

    script = parse_script(data.get("script", []), "script")
    return Scenario(needle, domain, bevel, pose, template_x, settings, script, name)


def parse_script(raw: list, path: str = "script") -> tuple[StepInputs, ...]:
    steps = []
    for i, tbl in enumerate(raw):
        p = f"{path}[{i}]"
        advance = _length(tbl["advance"], f"{p}.advance") if "advance" in tbl else None
        vs = []
        for j, v in enumerate(tbl.get("v", [])):
            vp = f"{p}.v[{j}]"
            at = v.get("at")
            if isinstance(at, str):
                if at not in ("base", "template"):
                    raise LoadError(f"{vp}.at: unknown selector {at!r}")
            elif not isinstance(at, int):
                raise LoadError(f"{vp}.at: expected 'base', 'template' or a node index")
            vs.append(VInput(
                at,
                _length(v["deflection"], f"{vp}.deflection") if "deflection" in v else None,
                _angle(v["slope"], f"{vp}.slope") if "slope" in v else None))
        steps.append(StepInputs(v=tuple(vs), advance=advance))
    return tuple(steps)


def list_presets() -> tuple[str, ...]:
    return PRESETS


def _preset_text(name: str) -> str:
    return resources.files("needlesim").joinpath(f"presets/{name}.toml").read_text()


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise LoadError(f"invalid TOML: {exc}") from exc
    return _build_scenario(data, name)


def load_scenario(source) -> Scenario:
    """Load a scenario from a preset name or a TOML file path."""
    s = str(source)
    if s in PRESETS:
        return parse_scenario(_preset_text(s), name=s)
    path = Path(source)
    if not path.exists():
        raise LoadError(f"scenario not found: {source!r} "
                        f"(not a file, and presets are {PRESETS})")
    return parse_scenario(path.read_text(), name=path.stem)


def load_script(source) -> tuple[StepInputs, ...]:
    """Load an input script from a TOML file with [[script]] entries."""
    path = Path(source)
    if not path.exists():
        raise LoadError(f"script not found: {source!r}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise LoadError(f"invalid TOML: {exc}") from exc
    return parse_script(data.get("script", []), "script")


# --- serialization ----------------------------------------------------------

def _fmt(value: float, unit: str = "m") -> str:
    return f'"{value!r} {unit}"'


def _point_toml(p) -> str:
    return f"[{_fmt(p[0])}, {_fmt(p[1])}]"


def _boundary_toml(b: Boundary) -> str:
    return f"[{_point_toml(b.start)}, {_point_toml(b.end)}]"


def scenario_to_toml(s: Scenario) -> str:
    """Canonical TOML text (metres/radians/pascals) that parses back equal."""
    props = s.needle.properties
    if props.outer_diameter is not None:
        do, di = props.outer_diameter, props.inner_diameter
    else:
        # equivalent solid rod with the same second moment
        do, di = (64.0 * props.second_moment / math.pi) ** 0.25, 0.0
    lines = ["[needle]"]
    lines.append(f"elastic_modulus = {_fmt(props.elastic_modulus, 'Pa')}")
    lines.append(f"outer_diameter = {_fmt(do)}")
    lines.append(f"inner_diameter = {_fmt(di)}")
    lines.append(f"length = {_fmt(s.needle.length)}")
    lines.append(f"element_size = {_fmt(s.needle.element_size)}")
    lines.append("")
    lines.append("[needle.bevel]")
    lines.append(f"offset = {_fmt(s.bevel.offset)}")
    lines.append(f"direction = {s.bevel.direction}")
    lines.append("")
    lines.append("[pose]")
    lines.append(f"base = [{_fmt(s.pose.x)}, {_fmt(s.pose.y)}]")
    lines.append(f"orientation = {_fmt(s.pose.orientation, 'rad')}")
    if s.template_x is not None:
        lines.append("")
        lines.append("[template]")
        lines.append(f"x = {_fmt(s.template_x)}")
    cfg = s.settings
    lines.append("")
    lines.append("[solver]")
    lines.append(f"relaxation = {cfg.relaxation!r}")
    lines.append(f"tolerance = {_fmt(cfg.tolerance)}")
    lines.append(f"max_iterations = {cfg.max_iterations}")
    lines.append(f"friction = {'true' if cfg.include_friction else 'false'}")
    lines.append(f"lambda_min = {cfg.lambda_min!r}")
    if cfg.constraint_spacing is not None:
        lines.append(f"constraint_spacing = {_fmt(cfg.constraint_spacing)}")
    for layer in s.domain.layers:
        lines.append("")
        lines.append("[[layers]]")
        lines.append(f"mu = {_fmt(layer.mu, 'Pa')}")
        lines.append(f"alpha = {layer.alpha!r}")
        lines.append(f"gamma = {layer.gamma!r}")
        lines.append(f"thickness = {_fmt(layer.thickness)}")
        lines.append(f"entry = {_boundary_toml(layer.entry)}")
    if s.domain.exit_boundary is not None:
        lines.append("")
        lines.append("[domain]")
        lines.append(f"exit = {_boundary_toml(s.domain.exit_boundary)}")
    for step in s.script:
        lines.append("")
        lines.append("[[script]]")
        if step.advance is not None:
            lines.append(f"advance = {_fmt(step.advance)}")
        for v in step.v:
            lines.append("")
            lines.append("[[script.v]]")
            at = f'"{v.at}"' if isinstance(v.at, str) else str(v.at)
            lines.append(f"at = {at}")
            if v.deflection is not None:
                lines.append(f"deflection = {_fmt(v.deflection)}")
            if v.slope is not None:
                lines.append(f"slope = {_fmt(v.slope, 'rad')}")
    return "\n".join(lines) + "\n"


def save_scenario(s: Scenario, path):
    Path(path).write_text(scenario_to_toml(s))


# --- ground truth -----------------------------------------------------------

class GroundTruthPolyline:
    """Reconstructed needle polyline in the world frame, metres."""

    def __init__(self, points, source: str = ""):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise LoadError("ground truth needs at least two (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise LoadError("ground truth contains non-finite coordinates")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise LoadError("ground truth arc length is not strictly monotone "
                            "(duplicate consecutive points)")
        self.points = pts
        self.source = source

    def __len__(self):
        return self.points.shape[0]


def load_ground_truth(path) -> GroundTruthPolyline:
    """CSV with a 'unit=<mm|m>' header line, then an 'x,y' header and rows."""
    p = Path(path)
    if not p.exists():
        raise LoadError(f"ground truth not found: {path!r}")
    lines = [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("unit="):
        raise LoadError(f"{path}: first line must declare 'unit=mm' or 'unit=m'")
    unit = lines[0].split("=", 1)[1].strip()
    if unit not in ("mm", "m"):
        raise LoadError(f"{path}: unsupported unit {unit!r}")
    scale = 1e-3 if unit == "mm" else 1.0
    rows = lines[1:]
    if rows and rows[0].replace(" ", "") == "x,y":
        rows = rows[1:]
    pts = []
    for i, row in enumerate(rows):
        cells = row.split(",")
        if len(cells) != 2:
            raise LoadError(f"{path}: row {i}: expected two columns, got {row!r}")
        try:
            pts.append((float(cells[0]), float(cells[1])))
        except ValueError:
            raise LoadError(f"{path}: row {i}: cannot parse {row!r}") from None
    arr = np.asarray(pts, dtype=float) * scale
    if arr.size and not np.all(np.isfinite(arr)):
        raise LoadError(f"{path}: ground truth contains NaN/inf")
    return GroundTruthPolyline(arr, source=str(path))


def save_ground_truth(points, path, unit: str = "mm"):
    scale = {"mm": 1e3, "m": 1.0}[unit]
    pts = np.asarray(points, dtype=float) * scale
    lines = [f"unit={unit}", "x,y"]
    lines += [f"{float(x)!r},{float(y)!r}" for x, y in pts]
    Path(path).write_text("\n".join(lines) + "\n")


# --- traces -----------------------------------------------------------------

@dataclass
class SimTrace:
    """One JSON record per executed step."""

    steps: list = field(default_factory=list)

    def all_converged(self) -> bool:
        return all(s["convergence"]["converged"] for s in self.steps)


def trace_lines(trace: SimTrace) -> str:
    return "".join(json.dumps(step) + "\n" for step in trace.steps)


def save_trace(trace: SimTrace, path):
    Path(path).write_text(trace_lines(trace))


def load_trace(path) -> SimTrace:
    p = Path(path)
    steps = [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
    return SimTrace(steps=steps)
