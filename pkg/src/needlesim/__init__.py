"""Interactive 2D bevel-tip needle insertion simulator.

A flexible needle is a Hermite-element beam; layered tissue acts on it
through nonlinear springs anchored to dynamically placed constraint
points, whose bevel offset steers the tip.  The package ships the
beam/tissue kernels, the stepping loop, scenario and trace I/O, shape
metrics with parameter fitting, a FastAPI session service, and a CLI.
"""

from .beam import BeamMesh, BeamProperties, EssentialBC, FoundationPatch
from .frames import FramePair, PlanarTransform
from .metrics import ErrorReport, build_report, summarize
from .scenario import (
    GroundTruthPolyline,
    Scenario,
    SimTrace,
    list_presets,
    load_ground_truth,
    load_scenario,
    load_trace,
    save_trace,
)
from .sim import (
    BevelSpec,
    ConstraintPoint,
    ConvergenceReport,
    NeedleSpec,
    Pose,
    SimState,
    Simulator,
    SolverSettings,
    StepInputs,
    VInput,
)
from .tissue import Boundary, OgdenLayer, TissueDomain
from .tuning import FitBounds, FitResult, fit_parameters

__version__ = "0.1.0"

__all__ = [
    "BeamMesh", "BeamProperties", "EssentialBC", "FoundationPatch",
    "FramePair", "PlanarTransform",
    "ErrorReport", "build_report", "summarize",
    "GroundTruthPolyline", "Scenario", "SimTrace", "list_presets",
    "load_ground_truth", "load_scenario", "load_trace", "save_trace",
    "BevelSpec", "ConstraintPoint", "ConvergenceReport", "NeedleSpec",
    "Pose", "SimState", "Simulator", "SolverSettings", "StepInputs", "VInput",
    "Boundary", "OgdenLayer", "TissueDomain",
    "FitBounds", "FitResult", "fit_parameters",
    "__version__",
]
