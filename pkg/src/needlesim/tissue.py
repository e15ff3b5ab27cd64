"""Layered nonlinear tissue response for lateral needle loading.

Each layer is a one-term incompressible Ogden solid under unconfined
uniaxial compression; its tangent modulus sets the local spring
stiffness felt by the needle.  Layers occupy bands between straight
boundary lines in the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

LAMBDA_MIN = 0.05


class TissueError(ValueError):
    """Invalid layer parameters, geometry, or stretch input."""


@dataclass(frozen=True)
class Boundary:
    """Straight boundary line through two points.

    The tissue side (positive signed distance) lies 90 degrees clockwise
    from the start->end direction, so a boundary drawn bottom-to-top has
    its tissue on the +x side.  Membership tests use the infinite line;
    the endpoints bound the drawing/validation window.
    """

    start: tuple[float, float]
    end: tuple[float, float]

    def __post_init__(self):
        dx = self.end[0] - self.start[0]
        dy = self.end[1] - self.start[1]
        if math.hypot(dx, dy) <= 0.0:
            raise TissueError(f"degenerate boundary segment at {self.start}")

    @property
    def normal(self) -> np.ndarray:
        d = np.array([self.end[0] - self.start[0], self.end[1] - self.start[1]])
        n = np.array([d[1], -d[0]])
        return n / np.linalg.norm(n)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.start) + np.asarray(self.end))

    def signed_distance(self, point) -> float | np.ndarray:
        p = np.asarray(point, dtype=float)
        d = (p - np.asarray(self.start)) @ self.normal
        return float(d) if p.ndim == 1 else d


@dataclass(frozen=True)
class OgdenLayer:
    """One tissue layer: Ogden constants, friction and rest thickness."""

    index: int
    mu: float          # shear modulus, Pa
    alpha: float       # nonlinearity exponent
    gamma: float       # shaft friction coefficient
    thickness: float   # rest thickness used in the stretch ratio, m
    entry: Boundary

    def __post_init__(self):
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise TissueError(f"layer {self.index}: mu must be positive, got {self.mu}")
        if not (self.thickness > 0 and np.isfinite(self.thickness)):
            raise TissueError(
                f"layer {self.index}: thickness must be positive, got {self.thickness}")
        if not (0.0 <= self.gamma < 1.0):
            raise TissueError(
                f"layer {self.index}: gamma must be in [0, 1), got {self.gamma}")
        if not np.isfinite(self.alpha):
            raise TissueError(f"layer {self.index}: alpha must be finite")


class TissueDomain:
    """Ordered stack of layers along the insertion direction.

    Layer i occupies the band past its entry boundary and before the
    next layer's entry; the last layer extends to the optional exit
    boundary, or to a half-plane when none is given.  A point on a
    shared boundary belongs to the deeper layer.
    """

    def __init__(self, layers: Sequence[OgdenLayer], exit_boundary: Boundary | None = None):
        if len(layers) < 1:
            raise TissueError("domain needs at least one layer")
        if [l.index for l in layers] != list(range(len(layers))):
            raise TissueError("layer indices must be 0..n-1 in order")
        bounds = [l.entry for l in layers]
        if exit_boundary is not None:
            bounds = bounds + [exit_boundary]
        for i in range(1, len(bounds)):
            prev, cur = bounds[i - 1], bounds[i]
            if prev.signed_distance(cur.midpoint) <= 0:
                raise TissueError(
                    f"boundary {i} is not strictly past boundary {i - 1}: "
                    "layers must be ordered and disjoint along the insertion direction")
            if _segments_intersect(prev, cur):
                raise TissueError(f"boundaries {i - 1} and {i} intersect inside the window")
        self.layers = tuple(layers)
        self.exit_boundary = exit_boundary

    def __eq__(self, other):
        return (isinstance(other, TissueDomain)
                and self.layers == other.layers
                and self.exit_boundary == other.exit_boundary)

    def __repr__(self):
        return f"TissueDomain({list(self.layers)!r}, exit={self.exit_boundary!r})"

    @property
    def entry_boundary(self) -> Boundary:
        return self.layers[0].entry

    def layer_at(self, point) -> Optional[OgdenLayer]:
        """Deepest layer whose band contains the point, or None outside tissue."""
        if self.exit_boundary is not None and self.exit_boundary.signed_distance(point) >= 0:
            return None
        found = None
        for layer in self.layers:
            if layer.entry.signed_distance(point) >= 0:
                found = layer
            else:
                break
        return found


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_intersect(a: Boundary, b: Boundary) -> bool:
    """Proper intersection test between the two boundary segments."""
    p, r = np.asarray(a.start), np.asarray(a.end) - np.asarray(a.start)
    q, s = np.asarray(b.start), np.asarray(b.end) - np.asarray(b.start)
    denom = _cross2(r, s)
    if denom == 0:
        return False
    t = _cross2(q - p, s) / denom
    u = _cross2(q - p, r) / denom
    return 0 < t < 1 and 0 < u < 1


def stretch_ratio(u_rel, thickness: float, lambda_min: float = LAMBDA_MIN):
    """Compression stretch (thickness - |u|) / thickness, clamped to [lambda_min, 1].

    |u| enforces deformation in the compressive direction, so the ratio
    never exceeds one; the floor guards the modulus singularity at zero.
    """
    if thickness <= 0:
        raise TissueError(f"thickness must be positive, got {thickness}")
    lam = (thickness - np.abs(u_rel)) / thickness
    return np.clip(lam, lambda_min, 1.0)


def tangent_modulus(lam, mu: float, alpha: float, lambda_min: float = LAMBDA_MIN):
    """Tangent modulus 2 mu (lam^(alpha-1) + lam^(-alpha/2-1) / 2).

    Derivative of the uniaxial compression stress of a one-term
    incompressible Ogden material; positive on the admissible range and
    equal to 3 mu at lam = 1 for every alpha.  Callers clamp first:
    stretches below the floor are a domain error.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(mu <= 0):
        raise TissueError(f"mu must be positive, got {mu}")
    if np.any(lam < lambda_min - 1e-12) or np.any(lam > 1.0 + 1e-12):
        raise TissueError(f"stretch outside [{lambda_min}, 1]: clamp before calling")
    k = 2.0 * mu * (lam ** (alpha - 1.0) + 0.5 * lam ** (-alpha / 2.0 - 1.0))
    return float(k) if k.ndim == 0 else k


def friction_factor(slope, gamma: float):
    """Shaft-friction correction 1 - gamma sin^2(arctan(slope)).

    Uses the identity sin^2(arctan(s)) = s^2 / (1 + s^2).
    """
    s2 = np.square(slope)
    return 1.0 - gamma * s2 / (1.0 + s2)


def force_density(u_rel, slope, layer: OgdenLayer, include_friction: bool = False,
                  lambda_min: float = LAMBDA_MIN):
    """Lateral force per unit length exerted by the layer on the needle.

    The default drops the friction correction (gamma is small in
    water-rich tissue); pass include_friction=True for the full form.
    """
    lam = stretch_ratio(u_rel, layer.thickness, lambda_min)
    k = tangent_modulus(lam, layer.mu, layer.alpha, lambda_min)
    f = k * np.asarray(u_rel, dtype=float)
    if include_friction:
        f = f * friction_factor(slope, layer.gamma)
    return float(f) if np.ndim(f) == 0 else f
