"""Euler-Bernoulli beam bending kernel on a spring foundation.

Two-node elements with cubic Hermite interpolation and two degrees of
freedom per node (transverse deflection u, slope theta).  Foundation
patches attach a uniform spring bed to single elements, pulling the
deflection toward a reference ordinate.  The assembled system is
symmetric banded (half bandwidth 3) and is solved by banded Cholesky
with one or two iterative-refinement passes, the residual being
accumulated in extended precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

HALF_BANDWIDTH = 3

# Station comparisons tolerate accumulated float error from repeated shifts.
_STATION_TOL = 1e-12


class BeamError(ValueError):
    """Invalid beam geometry, properties or boundary conditions."""


class SingularSystemError(BeamError):
    """The assembled system has unconstrained rigid-body modes."""


class SolveError(RuntimeError):
    """Factorization failed; carries a conditioning diagnostic."""


@dataclass(frozen=True)
class BeamProperties:
    """Bending properties of the needle shaft."""

    elastic_modulus: float  # Pa
    second_moment: float    # m^4
    outer_diameter: float | None = None  # m, kept when built from tube geometry
    inner_diameter: float | None = None

    def __post_init__(self):
        if not (self.elastic_modulus > 0 and np.isfinite(self.elastic_modulus)):
            raise BeamError(f"elastic modulus must be positive, got {self.elastic_modulus}")
        if not (self.second_moment > 0 and np.isfinite(self.second_moment)):
            raise BeamError(f"second moment must be positive, got {self.second_moment}")

    @classmethod
    def from_tube(cls, elastic_modulus: float, outer_diameter: float,
                  inner_diameter: float) -> "BeamProperties":
        """Hollow circular section: I = pi (Do^4 - Di^4) / 64."""
        if not outer_diameter > inner_diameter >= 0:
            raise BeamError(
                f"need outer > inner >= 0, got Do={outer_diameter}, Di={inner_diameter}")
        second = np.pi * (outer_diameter**4 - inner_diameter**4) / 64.0
        return cls(elastic_modulus, second, outer_diameter, inner_diameter)

    @property
    def bending_stiffness(self) -> float:
        """EI in N m^2."""
        return self.elastic_modulus * self.second_moment


@dataclass(frozen=True)
class BeamMesh:
    """Uniformly spaced nodes along the beam axis.

    Stations are base_station + j*h, so spacing is constant by
    construction (the axial coordinate never stretches).
    """

    n_elements: int
    element_length: float           # h, m
    base_station: float = 0.0       # station of node 0, m

    def __post_init__(self):
        if self.n_elements < 1:
            raise BeamError(f"need at least one element, got {self.n_elements}")
        if not (self.element_length > 0 and np.isfinite(self.element_length)):
            raise BeamError(f"element length must be positive, got {self.element_length}")

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def tip_station(self) -> float:
        return self.base_station + self.n_elements * self.element_length

    @property
    def node_stations(self) -> np.ndarray:
        return self.base_station + self.element_length * np.arange(self.n_nodes)

    @property
    def midpoint_stations(self) -> np.ndarray:
        return self.base_station + self.element_length * (np.arange(self.n_elements) + 0.5)

    def shifted(self, dh: float) -> "BeamMesh":
        """Same mesh translated axially by dh (insertion/retraction)."""
        return BeamMesh(self.n_elements, self.element_length, self.base_station + dh)


@dataclass(frozen=True)
class FoundationPatch:
    """Uniform spring bed over one element pulling u toward y_ref."""

    element: int
    stiffness: float  # Pa, i.e. N/m of force per m of length per m of deflection
    y_ref: float      # m

    def __post_init__(self):
        if self.stiffness < 0 or not np.isfinite(self.stiffness):
            raise BeamError(f"foundation stiffness must be >= 0, got {self.stiffness}")


@dataclass(frozen=True)
class EssentialBC:
    """Prescribed deflection and/or slope at a node."""

    node: int
    deflection: float | None = None
    slope: float | None = None

    def __post_init__(self):
        if self.deflection is None and self.slope is None:
            raise BeamError(f"BC at node {self.node} prescribes nothing")
        for v in (self.deflection, self.slope):
            if v is not None and not np.isfinite(v):
                raise BeamError(f"BC at node {self.node} has non-finite value {v}")


def element_stiffness(ei: float, h: float) -> np.ndarray:
    """4x4 Hermite bending stiffness for one element.

    DOF order (u1, theta1, u2, theta2).  Symmetric, rank 2 (two
    rigid-body modes).  Zero EI is allowed and yields a zero matrix.
    """
    if h <= 0 or not np.isfinite(h):
        raise BeamError(f"element length must be positive, got {h}")
    if ei < 0 or not np.isfinite(ei):
        raise BeamError(f"bending stiffness must be >= 0, got {ei}")
    c = ei / h**3
    return c * np.array([
        [12.0, 6.0 * h, -12.0, 6.0 * h],
        [6.0 * h, 4.0 * h * h, -6.0 * h, 2.0 * h * h],
        [-12.0, -6.0 * h, 12.0, -6.0 * h],
        [6.0 * h, 2.0 * h * h, -6.0 * h, 4.0 * h * h],
    ])


# Consistent Galerkin treatment of the spring bed: stiffness from
# integral of k N N^T, load from k*y_ref * integral of N.
_FOUNDATION_PATTERN = np.array([
    [156.0, 22.0, 54.0, -13.0],
    [22.0, 4.0, 13.0, -3.0],
    [54.0, 13.0, 156.0, -22.0],
    [-13.0, -3.0, -22.0, 4.0],
])


def _foundation_matrix_unit(h: float) -> np.ndarray:
    """Foundation matrix for k = 1 (h/420 scaled Hermite mass pattern)."""
    hp = np.array([
        [1.0, h, 1.0, h],
        [h, h * h, h, h * h],
        [1.0, h, 1.0, h],
        [h, h * h, h, h * h],
    ])
    return (h / 420.0) * _FOUNDATION_PATTERN * hp


def _foundation_load_unit(h: float) -> np.ndarray:
    """Consistent nodal load for k*y_ref = 1 (integral of the Hermite basis)."""
    return np.array([h / 2.0, h * h / 12.0, h / 2.0, -h * h / 12.0])


def foundation_element_matrices(k: float, y_ref: float, h: float):
    """Stiffness contribution and load vector of one foundation patch."""
    if h <= 0 or not np.isfinite(h):
        raise BeamError(f"element length must be positive, got {h}")
    if k < 0 or not np.isfinite(k):
        raise BeamError(f"foundation stiffness must be >= 0, got {k}")
    return k * _foundation_matrix_unit(h), k * y_ref * _foundation_load_unit(h)


# --- banded assembly -------------------------------------------------------

_TRI_I, _TRI_J = np.triu_indices(4)
_TRI_ROWS = HALF_BANDWIDTH + _TRI_I - _TRI_J


@lru_cache(maxsize=16)
def _bending_band(n_elements: int, h: float, ei: float) -> np.ndarray:
    """Global bending matrix in LAPACK upper-banded form, cached and read-only."""
    n_dofs = 2 * (n_elements + 1)
    ab = np.zeros((HALF_BANDWIDTH + 1, n_dofs))
    ke_upper = element_stiffness(ei, h)[_TRI_I, _TRI_J]
    base = 2 * np.arange(n_elements)
    np.add.at(ab, (np.broadcast_to(_TRI_ROWS, (n_elements, 10)),
                   base[:, None] + _TRI_J[None, :]),
              np.broadcast_to(ke_upper, (n_elements, 10)))
    ab.setflags(write=False)
    return ab


def _band_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = A x for a symmetric matrix in upper-banded storage."""
    y = ab[HALF_BANDWIDTH] * x
    for d in range(1, HALF_BANDWIDTH + 1):
        y[:-d] += ab[HALF_BANDWIDTH - d, d:] * x[d:]
        y[d:] += ab[HALF_BANDWIDTH - d, d:] * x[:-d]
    return y


@dataclass
class LinearSystem:
    """Assembled beam problem: symmetric upper-banded matrix and RHS.

    Prescribed DOFs have been eliminated in place (unit diagonal, RHS
    carries the prescribed value), so the solution vector contains them
    directly.
    """

    band: np.ndarray
    rhs: np.ndarray
    prescribed_dofs: np.ndarray
    prescribed_values: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.rhs.shape[0]

    def residual(self, dofs: np.ndarray) -> float:
        """|A x - b| with the matvec accumulated in extended precision."""
        r = self.rhs.astype(np.longdouble) - _band_matvec(
            self.band.astype(np.longdouble), dofs.astype(np.longdouble))
        return float(np.linalg.norm(r.astype(np.float64)))


def _column_entries(ab: np.ndarray, j: int, n: int):
    """Nonzero (i, A[i,j]) pairs of column j of the symmetric banded matrix."""
    out = []
    for i in range(max(0, j - HALF_BANDWIDTH), min(n, j + HALF_BANDWIDTH + 1)):
        a = ab[HALF_BANDWIDTH + i - j, j] if i <= j else ab[HALF_BANDWIDTH + j - i, i]
        out.append((i, a))
    return out


def assemble(mesh: BeamMesh, props: BeamProperties,
             patches: Sequence[FoundationPatch] = (),
             bcs: Sequence[EssentialBC] = (),
             extra_loads: np.ndarray | None = None) -> LinearSystem:
    """Assemble the global banded system with BCs eliminated.

    Multiple patches on one element accumulate.  Raises
    SingularSystemError when fewer than two DOFs are prescribed and no
    patch carries positive stiffness (rigid-body modes would remain).
    """
    n = mesh.n_dofs
    ab = _bending_band(mesh.n_elements, mesh.element_length, props.bending_stiffness).copy()
    rhs = np.zeros(n)
    if extra_loads is not None:
        extra_loads = np.asarray(extra_loads, dtype=float)
        if extra_loads.shape != (n,):
            raise BeamError(f"extra_loads must have shape ({n},), got {extra_loads.shape}")
        rhs += extra_loads

    if len(patches) > 0:
        elems = np.array([p.element for p in patches], dtype=int)
        if np.any(elems < 0) or np.any(elems >= mesh.n_elements):
            raise BeamError("foundation patch references an element outside the mesh")
        ks = np.array([p.stiffness for p in patches])
        if np.any(ks < 0):
            raise BeamError("foundation stiffness must be >= 0")
        yr = np.array([p.y_ref for p in patches])
        h = mesh.element_length
        m_upper = _foundation_matrix_unit(h)[_TRI_I, _TRI_J]
        base = 2 * elems
        np.add.at(ab, (np.broadcast_to(_TRI_ROWS, (len(patches), 10)),
                       base[:, None] + _TRI_J[None, :]),
                  ks[:, None] * m_upper[None, :])
        np.add.at(rhs, base[:, None] + np.arange(4)[None, :],
                  (ks * yr)[:, None] * _foundation_load_unit(h)[None, :])
        any_spring = bool(np.any(ks > 0))
    else:
        any_spring = False

    # Resolve BCs to DOF indices, rejecting duplicates.
    dof_values: dict[int, float] = {}
    for bc in bcs:
        if not 0 <= bc.node < mesh.n_nodes:
            raise BeamError(f"BC references node {bc.node} outside the mesh")
        for off, val in ((0, bc.deflection), (1, bc.slope)):
            if val is None:
                continue
            dof = 2 * bc.node + off
            if dof in dof_values:
                raise BeamError(f"DOF {dof} prescribed twice")
            dof_values[dof] = float(val)

    if len(dof_values) < 2 and not any_spring:
        raise SingularSystemError(
            "beam has free rigid-body modes: fewer than two prescribed DOFs "
            "and no foundation stiffness")

    # Eliminate: move known columns to the RHS, blank row/column, unit diagonal.
    for j, v in dof_values.items():
        for i, a in _column_entries(ab, j, n):
            if i != j:
                rhs[i] -= a * v
    for j, v in dof_values.items():
        for i, _ in _column_entries(ab, j, n):
            if i <= j:
                ab[HALF_BANDWIDTH + i - j, j] = 0.0
            else:
                ab[HALF_BANDWIDTH + j - i, i] = 0.0
        ab[HALF_BANDWIDTH, j] = 1.0
        rhs[j] = v

    pres = np.array(sorted(dof_values), dtype=int)
    return LinearSystem(ab, rhs, pres, np.array([dof_values[j] for j in pres]))


def solve(system: LinearSystem, refine: bool = True) -> np.ndarray:
    """Direct banded Cholesky solve with extended-precision refinement.

    Refinement stops at |r| <= 1e-10 |b| or when it stagnates; the
    attainable floor on badly scaled systems is O(eps |A| |x|).
    """
    try:
        factor = cholesky_banded(system.band, lower=False)
    except np.linalg.LinAlgError as exc:
        diag = system.band[HALF_BANDWIDTH]
        raise SolveError(
            f"banded Cholesky failed ({exc}); diagonal range "
            f"[{diag.min():.3e}, {diag.max():.3e}]") from exc
    pivots = factor[HALF_BANDWIDTH]
    cond_est = (pivots.max() / pivots.min()) ** 2
    if not np.isfinite(cond_est) or cond_est > 1e14:
        raise SolveError(
            f"system is singular or severely ill-conditioned "
            f"(pivot-based condition estimate {cond_est:.3e})")
    x = cho_solve_banded((factor, False), system.rhs)
    if not np.all(np.isfinite(x)):
        raise SolveError("solution contains non-finite entries")
    if not refine:
        return x
    target = 1e-10 * np.linalg.norm(system.rhs)
    ab_ld = system.band.astype(np.longdouble)
    rhs_ld = system.rhs.astype(np.longdouble)
    prev = np.inf
    for _ in range(3):
        r = rhs_ld - _band_matvec(ab_ld, x.astype(np.longdouble))
        rn = float(np.linalg.norm(r.astype(np.float64)))
        if rn <= target or rn >= 0.5 * prev:
            break
        prev = rn
        x = x + cho_solve_banded((factor, False), r.astype(np.float64))
    return x


# --- Hermite interpolation --------------------------------------------------

def _shape_functions(xi: np.ndarray, h: float):
    """Cubic Hermite basis and its first derivative at local coordinate xi."""
    xi2 = xi * xi
    xi3 = xi2 * xi
    n = np.stack([
        1.0 - 3.0 * xi2 + 2.0 * xi3,
        h * (xi - 2.0 * xi2 + xi3),
        3.0 * xi2 - 2.0 * xi3,
        h * (xi3 - xi2),
    ])
    dn = np.stack([
        (-6.0 * xi + 6.0 * xi2) / h,
        1.0 - 4.0 * xi + 3.0 * xi2,
        (6.0 * xi - 6.0 * xi2) / h,
        3.0 * xi2 - 2.0 * xi,
    ])
    return n, dn


def evaluate(mesh: BeamMesh, dofs: np.ndarray, x):
    """Deflection and slope at station(s) x by Hermite interpolation.

    x may be a scalar or an array; values outside the beam raise BeamError.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    h = mesh.element_length
    lo = mesh.base_station
    hi = mesh.tip_station
    tol = max(abs(lo), abs(hi), h) * 1e-12 + _STATION_TOL
    if np.any(x_arr < lo - tol) or np.any(x_arr > hi + tol):
        raise BeamError(f"evaluation station outside beam [{lo}, {hi}]")
    e = np.clip(np.floor((x_arr - lo) / h).astype(int), 0, mesh.n_elements - 1)
    xi = (x_arr - (lo + e * h)) / h
    # snap points that land a rounding error short of a node onto that node
    near_end = xi >= 1.0 - 1e-12
    bump = near_end & (e < mesh.n_elements - 1)
    e = np.where(bump, e + 1, e)
    xi = np.where(bump, (x_arr - (lo + e * h)) / h, xi)
    xi = np.where(near_end & ~bump, 1.0, xi)
    n, dn = _shape_functions(xi, h)
    g = 2 * e
    d = np.asarray(dofs, dtype=float)
    vals = np.stack([d[g], d[g + 1], d[g + 2], d[g + 3]])
    u = np.sum(n * vals, axis=0)
    slope = np.sum(dn * vals, axis=0)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(u[0]), float(slope[0])
    return u, slope


def midpoint_values(mesh: BeamMesh, dofs: np.ndarray):
    """Deflection and slope at all element midpoints (closed-form, fast path)."""
    h = mesh.element_length
    u1 = dofs[0:-2:2]
    t1 = dofs[1:-2:2]
    u2 = dofs[2::2]
    t2 = dofs[3::2]
    u_mid = 0.5 * (u1 + u2) + (h / 8.0) * (t1 - t2)
    s_mid = 1.5 * (u2 - u1) / h - 0.25 * (t1 + t2)
    return u_mid, s_mid
