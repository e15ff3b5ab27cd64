"""Interactive bevel-tip needle insertion stepping loop.

The needle starts as a rigid line in the world frame.  When the tip
reaches tissue, a constraint frame is anchored at the contact pose and
the needle becomes a beam meshed along that frame's x-axis.  Constraint
points are dropped behind the advancing tip with a bevel offset; tissue
springs (tangent-modulus stiffness, reference at the constraint
ordinate) pull the shaft toward them.  Each step runs a fixed-point
equilibrium of the beam problem, then a purely geometric axial
insertion or retraction.

Vertical inputs prescribe deflection/slope at a node (essential BCs in
the constraint frame; rigid offsets before contact).  Horizontal inputs
advance or retract; commands longer than one element are subdivided,
each sub-step running a full equilibrium pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .beam import (
    BeamMesh,
    BeamProperties,
    EssentialBC,
    FoundationPatch,
    assemble,
    evaluate,
    midpoint_values,
    solve,
)
from .frames import FramePair
from .tissue import (
    LAMBDA_MIN,
    TissueDomain,
    friction_factor,
    tangent_modulus,
)

_TOL = 1e-12


class SimError(RuntimeError):
    """Fatal stepping failure (singular system, exploded solution)."""


class InputError(ValueError):
    """Malformed or inadmissible control input."""


@dataclass(frozen=True)
class NeedleSpec:
    """Needle geometry and discretization."""

    length: float           # m
    element_size: float     # m
    properties: BeamProperties

    def __post_init__(self):
        if self.length <= 0 or self.element_size <= 0:
            raise InputError("needle length and element size must be positive")
        ratio = self.length / self.element_size
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise InputError(
                f"element size {self.element_size} does not divide length {self.length}")

    @property
    def n_elements(self) -> int:
        return round(self.length / self.element_size)


@dataclass(frozen=True)
class Pose:
    """Base position and axis orientation in the world frame."""

    x: float
    y: float
    orientation: float


@dataclass(frozen=True)
class BevelSpec:
    """Offset applied to constraint points created at the tip."""

    offset: float       # m, >= 0
    direction: int = 1  # +1 / -1, bevel face orientation

    def __post_init__(self):
        if self.offset < 0:
            raise InputError(f"bevel offset must be >= 0, got {self.offset}")
        if self.direction not in (-1, 1):
            raise InputError(f"bevel direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True)
class SolverSettings:
    relaxation: float = 0.5
    tolerance: float = 1e-7          # m, max deflection update
    max_iterations: int = 50
    include_friction: bool = False
    lambda_min: float = LAMBDA_MIN
    constraint_spacing: float | None = None  # default: one element length


@dataclass(frozen=True)
class VInput:
    """Prescribed deflection and/or slope at a station selector."""

    at: Union[str, int]              # "base" | "template" | node index
    deflection: float | None = None  # m
    slope: float | None = None       # rad


@dataclass(frozen=True)
class StepInputs:
    """One step's worth of control: V entries and an optional axial advance."""

    v: tuple[VInput, ...] = ()
    advance: float | None = None     # m, signed; None skips the axial phase

    def to_dict(self) -> dict:
        return {
            "v": [{"at": i.at, "deflection": i.deflection, "slope": i.slope}
                  for i in self.v],
            "advance": self.advance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepInputs":
        v = tuple(VInput(e["at"], e.get("deflection"), e.get("slope"))
                  for e in d.get("v", []))
        return cls(v=v, advance=d.get("advance"))


@dataclass
class ConstraintPoint:
    """Tissue anchor in the constraint frame, owned by one layer."""

    station: float
    ordinate: float
    layer_index: int
    creation_depth: float


@dataclass
class ConvergenceReport:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    clamp_events: int = 0
    # per-iteration max deflection update; diagnostic only, not serialized
    history: tuple = ()

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "clamp_events": self.clamp_events}


@dataclass
class _FreePose:
    """Rigid needle pose before tissue contact: anchor plus user offsets."""

    anchor_x: float
    anchor_y: float
    anchor_orientation: float
    lateral: float = 0.0
    rotation: float = 0.0
    advance: float = 0.0

    @property
    def angle(self) -> float:
        return self.anchor_orientation + self.rotation

    def base(self) -> np.ndarray:
        a = self.angle
        axis = np.array([math.cos(a), math.sin(a)])
        normal = np.array([-math.sin(a), math.cos(a)])
        return (np.array([self.anchor_x, self.anchor_y])
                + self.advance * axis + self.lateral * normal)

    def tip(self, length: float) -> np.ndarray:
        a = self.angle
        return self.base() + length * np.array([math.cos(a), math.sin(a)])


@dataclass
class SimState:
    step_count: int = 0
    frames: FramePair | None = None
    mesh: BeamMesh | None = None
    dofs: np.ndarray | None = None
    constraints: list[ConstraintPoint] = field(default_factory=list)
    free: _FreePose | None = None
    v_inputs: dict = field(default_factory=dict)
    report: ConvergenceReport = field(default_factory=ConvergenceReport)
    last_inputs: StepInputs = field(default_factory=StepInputs)

    @property
    def depth(self) -> float:
        """Insertion depth: tip station past the entry constraint."""
        return self.mesh.tip_station if self.mesh is not None else 0.0


class Simulator:
    """Owns one steppable needle/tissue state; steps strictly in sequence."""

    def __init__(self, needle: NeedleSpec, domain: TissueDomain, bevel: BevelSpec,
                 pose: Pose, template_x: float | None = None,
                 settings: SolverSettings = SolverSettings()):
        self.needle = needle
        self.domain = domain
        self.bevel = bevel
        self.template_x = template_x
        self.settings = settings
        self.state = SimState(
            free=_FreePose(pose.x, pose.y, pose.orientation),
            v_inputs={"base": (0.0, 0.0)},
        )
        if self._free_tip_inside():
            tip = self.state.free.tip(needle.length)
            self._make_contact(tip, self.state.free.angle)

    @classmethod
    def from_scenario(cls, scenario) -> "Simulator":
        return cls(scenario.needle, scenario.domain, scenario.bevel, scenario.pose,
                   scenario.template_x, scenario.settings)

    @property
    def spacing(self) -> float:
        return self.settings.constraint_spacing or self.needle.element_size

    # --- stepping ---------------------------------------------------------

    def step(self, inputs: StepInputs | None = None) -> ConvergenceReport:
        st = self.state
        inputs = inputs if inputs is not None else StepInputs()
        st.last_inputs = inputs
        if inputs.v:
            self._merge_v(inputs.v)
        if inputs.v or inputs.advance is not None:
            if st.frames is None:
                if inputs.v:
                    self._apply_free_v()
                if inputs.advance is not None:
                    if st.frames is None:
                        self._free_advance(inputs.advance)
                    else:
                        self._insert(inputs.advance)
            else:
                self._insert(inputs.advance)
        st.step_count += 1
        return st.report

    def run(self, script: Sequence[StepInputs]) -> list[dict]:
        """Execute a whole input script, returning one record per step."""
        records = []
        for inputs in script:
            self.step(inputs)
            records.append(self.snapshot())
        return records

    # --- V inputs ---------------------------------------------------------

    def _merge_v(self, entries: Sequence[VInput]):
        st = self.state
        for e in entries:
            if isinstance(e.at, str):
                if e.at not in ("base", "template"):
                    raise InputError(f"unknown station selector {e.at!r}")
                if e.at == "template" and self.template_x is None:
                    raise InputError("scenario defines no template")
                if st.frames is None and e.at == "template":
                    raise InputError("template input requires tissue contact")
            elif isinstance(e.at, int):
                if st.frames is None:
                    raise InputError("node-index inputs require tissue contact")
                if not 0 <= e.at < self.needle.n_elements + 1:
                    raise InputError(f"node index {e.at} outside the needle")
            else:
                raise InputError(f"invalid station selector {e.at!r}")
            if e.deflection is None and e.slope is None:
                st.v_inputs.pop(e.at, None)
            else:
                for v in (e.deflection, e.slope):
                    if v is not None and not math.isfinite(v):
                        raise InputError(f"non-finite prescribed value at {e.at!r}")
                st.v_inputs[e.at] = (e.deflection, e.slope)

    def _apply_free_v(self):
        st = self.state
        defl, slope = st.v_inputs.get("base", (0.0, 0.0))
        p0 = st.free.tip(self.needle.length)
        st.free.lateral = defl or 0.0
        st.free.rotation = slope or 0.0
        p1 = st.free.tip(self.needle.length)
        hit = self._crossing(p0, p1)
        if hit is not None:
            self._make_contact(hit, st.free.angle)

    def _collect_bcs(self) -> list[EssentialBC]:
        st = self.state
        bcs = []
        for key, (defl, slope) in st.v_inputs.items():
            if key == "base":
                node = 0
            elif key == "template":
                node = self._template_node()
            else:
                node = key
            bcs.append(EssentialBC(node, defl, slope))
        return bcs

    def _template_node(self) -> int:
        # the template is a vertical world line x = template_x; intersect it
        # with the beam frame's x-axis to find the station it pins
        st = self.state
        anchor = st.frames.local_to_world
        ca = math.cos(anchor.angle)
        if abs(ca) < 0.1:
            raise InputError("template is nearly perpendicular to the beam frame")
        station = (self.template_x - anchor.tx) / ca
        mesh = st.mesh
        node = round((station - mesh.base_station) / mesh.element_length)
        if not 0 <= node < mesh.n_nodes:
            raise InputError("template station lies outside the needle")
        return int(node)

    # --- contact ----------------------------------------------------------

    def _free_tip_inside(self) -> bool:
        tip = self.state.free.tip(self.needle.length)
        return self.domain.layer_at(tip) is not None

    def _crossing(self, p0, p1) -> Optional[np.ndarray]:
        """Entry-boundary crossing point of the tip path, if the move ends in tissue."""
        if self.domain.layer_at(p1) is None:
            return None
        entry = self.domain.entry_boundary
        s0 = entry.signed_distance(p0)
        s1 = entry.signed_distance(p1)
        if s0 >= 0:
            return np.asarray(p0, dtype=float)
        t = s0 / (s0 - s1)
        return np.asarray(p0) + t * (np.asarray(p1) - np.asarray(p0))

    def _make_contact(self, position, angle: float):
        st = self.state
        layer = self.domain.layer_at(position)
        if layer is None:
            # interpolated crossing points sit on the entry line and can fall a
            # rounding error short of it; nudge along the entry normal
            nudged = np.asarray(position, dtype=float) \
                + 1e-12 * self.domain.entry_boundary.normal
            layer = self.domain.layer_at(nudged)
        if layer is None:
            raise SimError("contact pose is outside every tissue layer")
        st.frames = FramePair.from_anchor(float(position[0]), float(position[1]), angle)
        st.mesh = BeamMesh(self.needle.n_elements, self.needle.element_size,
                           base_station=-self.needle.length)
        st.dofs = np.zeros(st.mesh.n_dofs)
        st.constraints = [ConstraintPoint(
            station=0.0,
            ordinate=self.bevel.direction * self.bevel.offset,
            layer_index=layer.index,
            creation_depth=0.0)]
        st.free = None
        # the current base pose is absorbed into the frame anchor
        if "base" in st.v_inputs:
            st.v_inputs["base"] = (0.0, 0.0)

    def _revert_to_free(self):
        st = self.state
        anchor = st.frames.local_to_world
        base = anchor.apply(np.array([st.mesh.base_station, float(st.dofs[0])]))
        angle = anchor.apply_angle(float(st.dofs[1]))
        st.free = _FreePose(float(base[0]), float(base[1]), angle)
        st.frames = None
        st.mesh = None
        st.dofs = None
        st.constraints = []
        if "base" in st.v_inputs:
            st.v_inputs["base"] = (0.0, 0.0)

    # --- axial motion -----------------------------------------------------

    def _free_advance(self, dh: float):
        st = self.state
        p0 = st.free.tip(self.needle.length)
        st.free.advance += dh
        p1 = st.free.tip(self.needle.length)
        if dh <= 0:
            return
        hit = self._crossing(p0, p1)
        if hit is not None:
            remainder = float(np.linalg.norm(p1 - hit))
            st.free.advance -= remainder  # tip parked at the crossing point
            self._make_contact(hit, st.free.angle)
            if remainder > _TOL:
                self._insert(remainder)

    def _insert(self, dh_total: float | None):
        """Equilibrium/advance cycles, one element length at a time."""
        if dh_total is None:
            self._equilibrium()
            return
        if not math.isfinite(dh_total):
            raise InputError(f"non-finite advance {dh_total}")
        h = self.needle.element_size
        remaining = dh_total
        while True:
            self._equilibrium()
            chunk = max(-h, min(h, remaining))
            reverted = self._advance_chunk(chunk)
            remaining -= chunk
            if reverted:
                if abs(remaining) > _TOL:
                    self._free_advance(remaining)
                return
            if abs(remaining) <= _TOL:
                return

    def _advance_chunk(self, dh: float) -> bool:
        """Shift the mesh axially; manage constraint lifecycle.  True on full retraction."""
        st = self.state
        st.mesh = st.mesh.shifted(dh)
        if dh > 0:
            tip = st.mesh.tip_station
            if tip - st.constraints[-1].station >= self.spacing - _TOL:
                u_tip = float(st.dofs[-2])
                tip_w = st.frames.local_to_world.apply(np.array([tip, u_tip]))
                layer = self.domain.layer_at(tip_w)
                if layer is not None:
                    st.constraints.append(ConstraintPoint(
                        station=tip,
                        ordinate=u_tip + self.bevel.direction * self.bevel.offset,
                        layer_index=layer.index,
                        creation_depth=tip))
        elif dh < 0:
            depth = st.mesh.tip_station
            st.constraints = [c for c in st.constraints
                              if c.creation_depth <= depth + _TOL]
            if depth < -_TOL:
                self._revert_to_free()
                return True
        return False

    # --- equilibrium ------------------------------------------------------

    def _element_foundation(self):
        """Constraint assignment for every element; returns active slice arrays."""
        st = self.state
        mids = st.mesh.midpoint_stations
        c_st = np.array([c.station for c in st.constraints])
        c_y = np.array([c.ordinate for c in st.constraints])
        c_layer = np.array([c.layer_index for c in st.constraints], dtype=int)
        pos = np.searchsorted(c_st, mids)
        left = np.clip(pos - 1, 0, len(c_st) - 1)
        right = np.clip(pos, 0, len(c_st) - 1)
        d_left = np.abs(mids - c_st[left])
        d_right = np.abs(c_st[right] - mids)
        assigned = np.where(d_right <= d_left, right, left)  # ties go deeper
        dist = np.minimum(d_left, d_right)
        active = (mids >= c_st[0] - _TOL) & (dist <= self.spacing + _TOL)
        idx = np.nonzero(active)[0]
        lay = c_layer[assigned[idx]]
        layers = self.domain.layers
        return (idx,
                c_y[assigned[idx]],
                np.array([layers[i].mu for i in lay]),
                np.array([layers[i].alpha for i in lay]),
                np.array([layers[i].gamma for i in lay]),
                np.array([layers[i].thickness for i in lay]))

    def _equilibrium(self):
        st = self.state
        cfg = self.settings
        elems, y_ref, mu, alpha, gamma, ti = self._element_foundation()
        bcs = self._collect_bcs()
        dofs = st.dofs
        lam_min = cfg.lambda_min
        clamps = 0
        converged = False
        delta = 0.0
        itr = 0
        history = []
        for itr in range(1, cfg.max_iterations + 1):
            u_mid, s_mid = midpoint_values(st.mesh, dofs)
            u_rel = u_mid[elems] - y_ref
            lam_raw = (ti - np.abs(u_rel)) / ti
            clamps += int(np.count_nonzero(lam_raw < lam_min))
            lam = np.clip(lam_raw, lam_min, 1.0)
            k = tangent_modulus(lam, mu, alpha, lam_min)
            if cfg.include_friction:
                k = k * friction_factor(s_mid[elems], gamma)
            patches = [FoundationPatch(int(e), float(kk), float(y))
                       for e, kk, y in zip(elems, k, y_ref)]
            system = assemble(st.mesh, self.needle.properties, patches, bcs)
            new = solve(system)
            if not np.all(np.isfinite(new)):
                raise SimError("equilibrium diverged to non-finite deflections")
            delta = float(np.max(np.abs(new[0::2] - dofs[0::2]))) if len(dofs) else 0.0
            history.append(delta)
            dofs = (1.0 - cfg.relaxation) * dofs + cfg.relaxation * new
            # relaxation applies to free DOFs only; prescribed ones hold exactly
            dofs[system.prescribed_dofs] = system.prescribed_values
            if delta <= cfg.tolerance:
                converged = True
                break
        st.dofs = dofs
        st.report = ConvergenceReport(iterations=itr, residual=delta,
                                      converged=converged, clamp_events=clamps,
                                      history=tuple(history))

    # --- views ------------------------------------------------------------

    def polyline(self) -> np.ndarray:
        """Needle shape in the world frame, one point per node."""
        st = self.state
        if st.frames is None:
            base = st.free.base()
            a = st.free.angle
            axis = np.array([math.cos(a), math.sin(a)])
            s = self.needle.element_size * np.arange(self.needle.n_elements + 1)
            return base[None, :] + s[:, None] * axis[None, :]
        pts = np.stack([st.mesh.node_stations, st.dofs[0::2]], axis=1)
        return st.frames.local_to_world.apply(pts)

    def tip_pose(self) -> tuple[float, float, float]:
        st = self.state
        if st.frames is None:
            tip = st.free.tip(self.needle.length)
            return (float(tip[0]), float(tip[1]), st.free.angle)
        tip = st.frames.local_to_world.apply(
            np.array([st.mesh.tip_station, float(st.dofs[-2])]))
        theta = st.frames.local_to_world.apply_angle(float(st.dofs[-1]))
        return (float(tip[0]), float(tip[1]), theta)

    def inserted_polyline(self) -> np.ndarray:
        """World-frame shape of the in-tissue part, entry point to tip."""
        st = self.state
        if st.frames is None or st.depth <= 0:
            raise SimError("no inserted needle segment to extract")
        n = max(2, int(round(st.depth / self.needle.element_size)) + 1)
        stations = np.linspace(0.0, st.depth, n)
        u, _ = evaluate(st.mesh, st.dofs, stations)
        return st.frames.local_to_world.apply(np.stack([stations, u], axis=1))

    def constraint_points_world(self) -> list[dict]:
        st = self.state
        out = []
        if st.frames is None:
            return out
        for c in st.constraints:
            w = st.frames.local_to_world.apply(np.array([c.station, c.ordinate]))
            out.append({"station": c.station, "ordinate": c.ordinate,
                        "layer": c.layer_index, "creation_depth": c.creation_depth,
                        "x": float(w[0]), "y": float(w[1])})
        return out

    def snapshot(self) -> dict:
        """Plain-dict view of the current state (meters, world frame)."""
        st = self.state
        tip = self.tip_pose()
        inserted = None
        if st.frames is not None and st.depth > 0:
            inserted = [[float(x), float(y)] for x, y in self.inserted_polyline()]
        return {
            "step": st.step_count,
            "contact": st.frames is not None,
            "depth": st.depth,
            "tip": [tip[0], tip[1], tip[2]],
            "polyline": [[float(x), float(y)] for x, y in self.polyline()],
            "inserted": inserted,
            "constraints": self.constraint_points_world(),
            "convergence": st.report.to_dict(),
            "inputs": st.last_inputs.to_dict(),
        }
