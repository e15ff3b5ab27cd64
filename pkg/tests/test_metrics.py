import math

import numpy as np
import pytest

from needlesim.metrics import (
    ErrorReport,
    MetricsError,
    build_report,
    correspond,
    edp,
    in_plane_errors,
    resample_by_arclength,
    summarize,
    tip_error,
)


def brute_force_pairs(sim, gt, k):
    """Independent re-implementation of arc-length correspondence."""
    def sample(pts, fracs):
        pts = np.asarray(pts, float)
        seg = np.sqrt(((np.diff(pts, axis=0)) ** 2).sum(axis=1))
        cum = np.concatenate([[0], np.cumsum(seg)])
        out = []
        for f in fracs:
            target = f * cum[-1]
            i = int(np.searchsorted(cum, target, side="right") - 1)
            i = min(i, len(seg) - 1)
            t = 0.0 if seg[i] == 0 else (target - cum[i]) / seg[i]
            out.append(pts[i] + t * (pts[i + 1] - pts[i]))
        return np.array(out)

    fr = [j / (k - 1) for j in range(k)]
    return sample(sim, fr), sample(gt, fr)


class TestCorrespond:
    def test_identical_curves_coincide(self):
        pts = np.array([[0, 0], [1, 0.5], [2, 0.2], [3.5, 1.0]])
        a, b = correspond(pts, pts, 7)
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_parallel_offset_lines(self):
        sim = np.array([[0.0, 0.001], [0.010, 0.001]])
        gt = np.array([[0.0, 0.0], [0.010, 0.0]])
        a, b = correspond(sim, gt, 5)
        d = in_plane_errors(a, b)
        np.testing.assert_allclose(d, 0.001, rtol=1e-12)

    def test_endpoints_preserved(self):
        pts = np.array([[0, 0], [1, 1], [3, 0]])
        r = resample_by_arclength(pts, 3)
        np.testing.assert_array_equal(r[0], pts[0])
        np.testing.assert_array_equal(r[-1], pts[-1])

    def test_k_defaults_to_gt_count(self):
        sim = np.array([[0, 0], [1, 0], [2, 0], [3, 0]])
        gt = np.array([[0, 0], [1, 0], [2, 0], [3, 0], [4, 0], [5, 0], [6, 0]])
        a, b = correspond(sim, gt)
        assert a.shape == b.shape == (7, 2)

    def test_degenerate_curve_rejected(self):
        with pytest.raises(MetricsError):
            resample_by_arclength(np.array([[1.0, 1.0]]), 3)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            sim = np.cumsum(rng.uniform(0.1, 1.0, size=(n, 2)), axis=0)
            gt = np.cumsum(rng.uniform(0.1, 1.0, size=(n + 3, 2)), axis=0)
            k = int(rng.integers(2, 15))
            a, b = correspond(sim, gt, k)
            a2, b2 = brute_force_pairs(sim, gt, k)
            np.testing.assert_allclose(a, a2, atol=1e-12)
            np.testing.assert_allclose(b, b2, atol=1e-12)


class TestTipError:
    def test_coincident_tips(self):
        pts = np.array([[0, 0], [1, 1]])
        assert tip_error(pts, pts) == 0.0

    def test_three_four_five(self):
        sim = np.array([[0, 0], [0.0, 0.0]]) * 0.0
        sim = np.array([[-1, 0], [0.0, 0.0]])
        gt = np.array([[-1, 0], [0.003, 0.004]])
        assert tip_error(sim, gt) == pytest.approx(0.005, rel=1e-12)

    def test_te_equals_last_ipe(self):
        rng = np.random.default_rng(5)
        sim = np.cumsum(rng.uniform(0.1, 1, size=(9, 2)), axis=0)
        gt = np.cumsum(rng.uniform(0.1, 1, size=(7, 2)), axis=0)
        a, b = correspond(sim, gt, 11)
        assert tip_error(a, b) == in_plane_errors(a, b)[-1]


class TestInPlaneErrors:
    def test_identical_zero(self):
        pts = np.array([[0, 0], [1, 2], [2, 1]])
        np.testing.assert_array_equal(in_plane_errors(pts, pts), 0.0)

    def test_brute_force_recomputation(self):
        rng = np.random.default_rng(23)
        a = rng.normal(size=(40, 2))
        b = rng.normal(size=(40, 2))
        expected = np.array([math.hypot(*(pa - pb)) for pa, pb in zip(a, b)])
        np.testing.assert_allclose(in_plane_errors(a, b), expected, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(MetricsError):
            in_plane_errors(np.zeros((3, 2)), np.zeros((4, 2)))


class TestEdp:
    def test_ten_percent(self):
        gt = np.array([[0, 0], [0.05, 0.005]])
        assert edp(0.5e-3, gt) == pytest.approx(10.0, rel=1e-12)

    def test_fifty_percent(self):
        gt = np.array([[0, 0], [1.0, 2.0]])
        assert edp(1.0, gt) == pytest.approx(50.0, rel=1e-12)

    def test_zero_deflection_undefined(self):
        gt = np.array([[0, 0], [1.0, 0.0]])
        assert edp(0.5, gt) is None


class TestInvariances:
    @staticmethod
    def rigid(points, angle, t):
        c, s = math.cos(angle), math.sin(angle)
        r = np.array([[c, -s], [s, c]])
        return points @ r.T + t

    def test_te_ipe_rigid_invariant(self):
        rng = np.random.default_rng(31)
        sim = np.cumsum(rng.uniform(0.1, 1, size=(8, 2)), axis=0)
        gt = np.cumsum(rng.uniform(0.1, 1, size=(6, 2)), axis=0)
        a, b = correspond(sim, gt, 9)
        te0, ipe0 = tip_error(a, b), in_plane_errors(a, b)
        for angle, t in [(0.7, np.array([3.0, -1.0])), (-2.1, np.array([0.0, 5.0]))]:
            a2, b2 = correspond(self.rigid(sim, angle, t), self.rigid(gt, angle, t), 9)
            assert tip_error(a2, b2) == pytest.approx(te0, abs=1e-12)
            np.testing.assert_allclose(in_plane_errors(a2, b2), ipe0, atol=1e-12)

    def test_edp_translation_and_y_flip_invariant(self):
        gt = np.array([[0, 0], [0.05, 0.004]])
        v = edp(1e-3, gt)
        assert edp(1e-3, gt + np.array([2.0, -3.0])) == pytest.approx(v, rel=1e-12)
        flip = gt * np.array([1.0, -1.0])
        assert edp(1e-3, flip) == pytest.approx(v, rel=1e-12)

    def test_edp_not_rotation_invariant(self):
        gt = np.array([[0, 0], [0.05, 0.004]])
        rot = self.rigid(gt, 0.5, np.zeros(2))
        assert edp(1e-3, rot) != pytest.approx(edp(1e-3, gt), rel=1e-6)


class TestSummarize:
    def test_single_report_passthrough(self):
        gt = np.array([[0, 0], [0.05, 0.003]])
        sim = gt + np.array([0.0, 1e-4])
        r = build_report(sim, gt, 5)
        s = summarize([r])
        assert s.median_ipe_avg == pytest.approx(r.median_ipe)
        assert s.ipe_mean == pytest.approx(r.mean_ipe)
        assert s.max_ipe_avg == pytest.approx(r.max_ipe)
        assert s.te_avg == pytest.approx(r.te)
        assert s.edp_avg == pytest.approx(r.edp)

    def test_two_identical_reports_zero_std(self):
        gt = np.array([[0, 0], [0.05, 0.003]])
        sim = gt + np.array([0.0, 2e-4])
        r1 = build_report(sim, gt, 7)
        r2 = build_report(sim, gt, 7)
        s = summarize([r1, r2])
        assert s.ipe_std == 0.0
        assert s.n_insertions == 2

    def test_three_reports_match_spreadsheet_recomputation(self):
        rng = np.random.default_rng(11)
        reports = []
        for _ in range(3):
            gt = np.cumsum(rng.uniform(0.1, 1, size=(6, 2)), axis=0)
            sim = gt + rng.normal(scale=0.01, size=gt.shape)
            reports.append(build_report(sim, gt))
        s = summarize(reports)
        medians = [float(np.median(r.ipe)) for r in reports]
        means = [float(np.mean(r.ipe)) for r in reports]
        maxima = [float(np.max(r.ipe)) for r in reports]
        tes = [float(r.ipe[-1]) for r in reports]
        assert s.median_ipe_avg == pytest.approx(sum(medians) / 3, rel=1e-12)
        assert s.ipe_mean == pytest.approx(sum(means) / 3, rel=1e-12)
        assert s.max_ipe_avg == pytest.approx(sum(maxima) / 3, rel=1e-12)
        pooled = np.concatenate([r.ipe for r in reports])
        assert s.median_ipe_pooled == pytest.approx(float(np.median(pooled)), rel=1e-12)
        assert s.te_avg == pytest.approx(sum(tes) / 3, rel=1e-12)

    def test_undefined_edp_counted(self):
        gt_flat = np.array([[0, 0], [1.0, 0.0]])
        gt_bent = np.array([[0, 0], [1.0, 0.5]])
        r1 = build_report(gt_flat + [0, 0.1], gt_flat)
        r2 = build_report(gt_bent, gt_bent)
        s = summarize([r1, r2])
        assert s.n_edp_undefined == 1

    def test_report_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            gt = np.cumsum(rng.uniform(0.1, 1, size=(8, 2)), axis=0)
            sim = gt + rng.normal(scale=0.05, size=gt.shape)
            r = build_report(sim, gt)
            assert r.max_ipe >= r.mean_ipe >= 0
            assert r.te == pytest.approx(r.ipe[-1])

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            summarize([])
