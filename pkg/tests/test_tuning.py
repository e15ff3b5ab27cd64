import dataclasses

import numpy as np
import pytest

from helpers import DEFAULT_PROPS
from needlesim.scenario import GroundTruthPolyline, Scenario
from needlesim.sim import (
    BevelSpec,
    NeedleSpec,
    Pose,
    Simulator,
    SolverSettings,
    StepInputs,
)
from needlesim.tissue import Boundary, OgdenLayer, TissueDomain
from needlesim.tuning import (
    FitBounds,
    TuningError,
    _pack,
    apply_parameters,
    fit_parameters,
    fitted_scenario,
)


def small_scenario(mu=5e3, alpha=0.8, offset=0.12e-3, steps=15):
    needle = NeedleSpec(0.03, 1e-3, DEFAULT_PROPS)
    layer = OgdenLayer(0, mu, alpha, 0.0, 0.04, Boundary((0.0, -0.04), (0.0, 0.04)))
    script = tuple(StepInputs(advance=1e-3) for _ in range(steps)) + \
        (StepInputs(advance=0.0),)
    return Scenario(needle, TissueDomain([layer]), BevelSpec(offset, 1),
                    Pose(-0.03, 0.0, 0.0), script=script, name="small")


def synthetic_gt(scenario):
    sim = Simulator.from_scenario(scenario)
    sim.run(scenario.script)
    return GroundTruthPolyline(sim.inserted_polyline(), source="synthetic")


class TestApplyParameters:
    def test_replaces_values(self):
        s = small_scenario()
        s2 = apply_parameters(s, [1e4], [0.5], 0.2e-3)
        assert s2.domain.layers[0].mu == 1e4
        assert s2.domain.layers[0].alpha == 0.5
        assert s2.bevel.offset == 0.2e-3
        assert s2.script == s.script

    def test_keeps_geometry(self):
        s = small_scenario()
        s2 = apply_parameters(s, [1e4], [0.5], 0.2e-3)
        assert s2.domain.layers[0].entry == s.domain.layers[0].entry


class TestFit:
    def test_empty_pairs_rejected(self):
        with pytest.raises(TuningError):
            fit_parameters([])

    def test_missing_script_rejected(self):
        s = dataclasses.replace(small_scenario(), script=())
        with pytest.raises(TuningError):
            fit_parameters([(s, GroundTruthPolyline([[0, 0], [1, 0]]))])

    def test_bad_seed_shape_rejected(self):
        s = small_scenario()
        with pytest.raises(TuningError):
            fit_parameters([(s, synthetic_gt(s))], seeds=[np.zeros(7)])

    def test_self_consistency_recovery(self):
        # ground truth generated by the simulator itself; seeds perturbed
        truth = small_scenario(mu=5e3, alpha=0.8, offset=0.12e-3)
        gt = synthetic_gt(truth)
        seed = _pack([5e3 * 1.6], [0.4], 0.2e-3)
        result = fit_parameters([(truth, gt)], seeds=[seed], restarts=1, maxiter=250)
        assert result.objective < 0.05e-3
        fitted = fitted_scenario(truth, result)
        sim = Simulator.from_scenario(fitted)
        sim.run(fitted.script)
        from needlesim.metrics import build_report
        check = build_report(sim.inserted_polyline(), gt.points, len(gt))
        assert check.mean_ipe == pytest.approx(result.objective, rel=1e-9)

    def test_straight_insertion_forces_zero_offset(self):
        truth = small_scenario(offset=0.0)
        gt = synthetic_gt(truth)
        seed = _pack([5e3], [0.8], 0.1e-3)  # start with a wrong, nonzero bevel
        result = fit_parameters([(truth, gt)], seeds=[seed], restarts=1, maxiter=250)
        assert result.offset == pytest.approx(0.0, abs=2e-6)
        assert result.objective < 1e-6

    def test_history_monotone_decreasing(self):
        truth = small_scenario()
        gt = synthetic_gt(truth)
        seed = _pack([8e3], [0.3], 0.2e-3)
        result = fit_parameters([(truth, gt)], seeds=[seed], restarts=1, maxiter=120)
        hist = result.history
        assert len(hist) >= 1
        assert all(b < a for a, b in zip(hist, hist[1:]))
        assert hist[-1] == pytest.approx(result.objective)

    def test_deterministic(self):
        truth = small_scenario()
        gt = synthetic_gt(truth)
        seed = _pack([8e3], [0.3], 0.2e-3)
        r1 = fit_parameters([(truth, gt)], seeds=[seed], restarts=1, maxiter=60)
        r2 = fit_parameters([(truth, gt)], seeds=[seed], restarts=1, maxiter=60)
        assert r1.mu == r2.mu
        assert r1.alpha == r2.alpha
        assert r1.offset == r2.offset
        assert r1.objective == r2.objective

    def test_failed_simulation_scores_inf(self, caplog):
        truth = small_scenario()
        gt_bad = GroundTruthPolyline([[0.0, 0.0], [0.001, 0.0]])
        # a script that immediately retracts out of tissue makes
        # inserted_polyline fail inside the objective
        s = dataclasses.replace(truth, script=(StepInputs(advance=-5e-3),))
        result = fit_parameters([(s, gt_bad)], restarts=1, maxiter=5)
        assert result.objective == np.inf
