"""Wire models for the session service.

All lengths on the wire are millimetres; angles are radians.  The
conversion to/from the simulator's metres happens only here.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class CreateSessionRequest(BaseModel):
    preset: Optional[str] = None
    scenario: Optional[str] = Field(None, description="inline scenario TOML text")


class TipPose(BaseModel):
    x_mm: float
    y_mm: float
    theta_rad: float


class ConstraintOut(BaseModel):
    x_mm: float
    y_mm: float
    station_mm: float
    ordinate_mm: float
    layer: int
    creation_depth_mm: float


class LayerOut(BaseModel):
    index: int
    mu_pa: float
    alpha: float
    gamma: float
    thickness_mm: float
    entry_mm: list[list[float]]


class ConvergenceOut(BaseModel):
    iterations: int
    residual_m: float
    converged: bool
    clamp_events: int


class Snapshot(BaseModel):
    step: int
    contact: bool
    depth_mm: float
    tip: TipPose
    needle_mm: list[list[float]]
    constraints: list[ConstraintOut]
    layers: list[LayerOut]
    exit_mm: Optional[list[list[float]]] = None
    template_x_mm: Optional[float] = None
    convergence: ConvergenceOut
    inputs: dict


class CreateSessionResponse(BaseModel):
    session_id: str
    snapshot: Snapshot


class ScenarioList(BaseModel):
    presets: list[str]


class CommandMessage(BaseModel):
    seq: int
    cmd: Literal["load_scenario", "set_v_input", "advance", "retract",
                 "reset", "get_state", "set_bevel"]
    payload: dict = Field(default_factory=dict)


class SnapshotMessage(BaseModel):
    type: Literal["snapshot"] = "snapshot"
    seq: int
    step: int
    snapshot: Snapshot


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    detail: str
    expected_seq: Optional[int] = None


class GapMessage(BaseModel):
    type: Literal["gap"] = "gap"
    dropped: int


class HeartbeatMessage(BaseModel):
    type: Literal["heartbeat"] = "heartbeat"
    step: int


FeedMessage = Union[SnapshotMessage, ErrorMessage, GapMessage, HeartbeatMessage]
