"""Planar rigid transforms between the world frame and the beam frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlanarTransform:
    """SE(2) element: rotation by `angle` followed by translation."""

    angle: float
    tx: float = 0.0
    ty: float = 0.0

    def apply(self, points):
        """Transform one (2,) point or an (n, 2) array of points."""
        p = np.asarray(points, dtype=float)
        c, s = math.cos(self.angle), math.sin(self.angle)
        x, y = p[..., 0], p[..., 1]
        out = np.stack([c * x - s * y + self.tx, s * x + c * y + self.ty], axis=-1)
        return out

    def apply_angle(self, theta: float) -> float:
        return theta + self.angle

    def inverse(self) -> "PlanarTransform":
        c, s = math.cos(self.angle), math.sin(self.angle)
        return PlanarTransform(-self.angle,
                               -(c * self.tx + s * self.ty),
                               -(-s * self.tx + c * self.ty))

    def compose(self, other: "PlanarTransform") -> "PlanarTransform":
        """self applied after other: (self o other)(p) = self(other(p))."""
        t = self.apply(np.array([other.tx, other.ty]))
        return PlanarTransform(self.angle + other.angle, float(t[0]), float(t[1]))

    @property
    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class FramePair:
    """World <-> constraint-frame transforms anchored at the entry pose."""

    world_to_local: PlanarTransform
    local_to_world: PlanarTransform

    @classmethod
    def from_anchor(cls, x: float, y: float, theta: float) -> "FramePair":
        """Local frame with origin (x, y) and x-axis along theta."""
        fwd = PlanarTransform(theta, x, y)
        return cls(fwd.inverse(), fwd)

    @property
    def anchor(self) -> tuple[float, float, float]:
        t = self.local_to_world
        return (t.tx, t.ty, t.angle)
