"""Derivative-free calibration of tissue parameters against needle shapes.

The objective is the mean in-plane error over one or more
(scenario, reconstructed-shape) pairs, each scenario re-simulated with
the candidate per-layer (mu, alpha) and bevel offset.  Nelder-Mead with
restarts handles the black-box simulation objective; mu is searched in
log10 space.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, minimize

from .metrics import build_report
from .scenario import GroundTruthPolyline, Scenario
from .sim import Simulator
from .tissue import OgdenLayer, TissueDomain

log = logging.getLogger(__name__)


class TuningError(ValueError):
    pass


@dataclass(frozen=True)
class FitBounds:
    log10_mu: tuple[float, float] = (2.0, 9.0)      # mu in [1e2, 1e9] Pa
    alpha: tuple[float, float] = (-3.0, 3.0)
    offset_mm: tuple[float, float] = (0.0, 0.5)     # bevel b in [0, 0.5] mm


@dataclass
class FitResult:
    mu: tuple[float, ...]        # per layer, Pa
    alpha: tuple[float, ...]     # per layer
    offset: float                # bevel b, m
    objective: float             # mean in-plane error, m
    iterations: int
    evaluations: int
    converged: bool
    history: tuple[float, ...]   # best-so-far objective at each accepted improvement


def apply_parameters(scenario: Scenario, mu: Sequence[float],
                     alpha: Sequence[float], offset: float) -> Scenario:
    """Scenario with per-layer (mu, alpha) and bevel offset replaced."""
    layers = [dataclasses.replace(l, mu=float(m), alpha=float(a))
              for l, m, a in zip(scenario.domain.layers, mu, alpha)]
    domain = TissueDomain(layers, scenario.domain.exit_boundary)
    bevel = dataclasses.replace(scenario.bevel, offset=float(offset))
    return dataclasses.replace(scenario, domain=domain, bevel=bevel)


def _pack(mu, alpha, offset) -> np.ndarray:
    x = []
    for m, a in zip(mu, alpha):
        x.extend([math.log10(m), a])
    x.append(offset * 1e3)  # millimetres, comparable scale to alpha
    return np.array(x)


def _unpack(x: np.ndarray):
    n = (len(x) - 1) // 2
    mu = tuple(10.0 ** x[2 * i] for i in range(n))
    alpha = tuple(float(x[2 * i + 1]) for i in range(n))
    return mu, alpha, float(x[-1]) * 1e-3


def fit_parameters(pairs: Sequence[tuple[Scenario, GroundTruthPolyline]],
                   bounds: FitBounds = FitBounds(),
                   seeds: Sequence[np.ndarray] | None = None,
                   restarts: int = 3,
                   maxiter: int = 400,
                   xatol: float = 1e-4,
                   fatol: float = 1e-9) -> FitResult:
    """Fit per-layer (mu, alpha) and the bevel offset to the given pairs.

    Seeds default to the first scenario's own parameters; each restart
    runs Nelder-Mead from the next seed (or from the best point found so
    far, deterministically perturbed).  Failed simulations score +inf.
    """
    if not pairs:
        raise TuningError("at least one (scenario, ground truth) pair is required")
    base = pairs[0][0]
    n_layers = len(base.domain.layers)
    for s, _ in pairs:
        if len(s.domain.layers) != n_layers:
            raise TuningError("all scenarios must share the layer count")
        if not s.script:
            raise TuningError(f"scenario {s.name!r} has no input script to replay")

    lo = np.array([bounds.log10_mu[0], bounds.alpha[0]] * n_layers + [bounds.offset_mm[0]])
    hi = np.array([bounds.log10_mu[1], bounds.alpha[1]] * n_layers + [bounds.offset_mm[1]])

    if seeds is None:
        seeds = [_pack([l.mu for l in base.domain.layers],
                       [l.alpha for l in base.domain.layers],
                       base.bevel.offset)]
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    for s in seeds:
        if s.shape != lo.shape:
            raise TuningError(f"seed has {s.shape} entries, expected {lo.shape}")
    seeds = [np.clip(s, lo, hi) for s in seeds]

    history: list[float] = []
    best = {"f": np.inf, "x": seeds[0]}
    evaluations = 0

    def objective(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        mu, alpha, offset = _unpack(np.clip(x, lo, hi))
        total = 0.0
        try:
            for scn, gt in pairs:
                sim = Simulator.from_scenario(apply_parameters(scn, mu, alpha, offset))
                sim.run(scn.script)
                report = build_report(sim.inserted_polyline(), gt.points, len(gt))
                total += report.mean_ipe
        except Exception as exc:
            log.warning("objective evaluation failed (%s); scoring +inf", exc)
            return np.inf
        f = total / len(pairs)
        if f < best["f"]:
            best["f"], best["x"] = f, np.array(x)
            history.append(f)
        return f

    iterations = 0
    converged = False
    for r in range(restarts):
        if r < len(seeds):
            x0 = seeds[r]
        else:
            # deterministic shrink toward the box centre for extra restarts
            x0 = np.clip(best["x"] + (0.5 ** r) * (0.5 * (lo + hi) - best["x"]), lo, hi)
        res = minimize(objective, x0, method="Nelder-Mead",
                       bounds=Bounds(lo, hi),
                       options={"maxiter": maxiter, "xatol": xatol,
                                "fatol": fatol, "adaptive": True})
        iterations += int(res.nit)
        converged = converged or bool(res.success)

    mu, alpha, offset = _unpack(np.clip(best["x"], lo, hi))
    return FitResult(mu=mu, alpha=alpha, offset=offset, objective=float(best["f"]),
                     iterations=iterations, evaluations=evaluations,
                     converged=converged, history=tuple(history))


def fitted_scenario(base: Scenario, result: FitResult) -> Scenario:
    """Base scenario with the fitted parameters substituted (script kept)."""
    return apply_parameters(base, result.mu, result.alpha, result.offset)
