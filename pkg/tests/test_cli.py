import json
import socket
from pathlib import Path

import numpy as np
import pytest

from needlesim.cli import flush_traces, main
from needlesim.scenario import load_trace

SCENARIO = """
[needle]
elastic_modulus = "80 GPa"
outer_diameter = "1.27 mm"
inner_diameter = "1.0 mm"
length = "30 mm"
element_size = "1 mm"

[needle.bevel]
offset = "{offset} mm"
direction = 1

[pose]
base = ["-30 mm", "0 mm"]
orientation = "0 deg"

[[layers]]
mu = "5e3 Pa"
alpha = 1.0
entry = [["0 mm", "-40 mm"], ["0 mm", "40 mm"]]
"""

SCRIPT = '\n'.join(['[[script]]\nadvance = "1 mm"'] * 12 + ['[[script]]\nadvance = "0 mm"'])


@pytest.fixture
def files(tmp_path):
    scn = tmp_path / "scn.toml"
    scn.write_text(SCENARIO.format(offset="0.1"))
    script = tmp_path / "script.toml"
    script.write_text(SCRIPT)
    return tmp_path, scn, script


class TestRun:
    def test_empty_script_exit_zero(self, files):
        tmp, scn, _ = files
        out = tmp / "trace.ndjson"
        assert main(["run", "--scenario", str(scn), "--out", str(out)]) == 0
        assert load_trace(out).steps == []

    def test_straight_run_zero_deflection(self, files, tmp_path):
        tmp, _, script = files
        scn = tmp_path / "straight.toml"
        scn.write_text(SCENARIO.format(offset="0"))
        out = tmp / "trace.ndjson"
        assert main(["run", "--scenario", str(scn), "--script", str(script),
                     "--out", str(out)]) == 0
        trace = load_trace(out)
        final = trace.steps[-1]
        ys = [p[1] for p in final["polyline"]]
        assert max(abs(y) for y in ys) <= 1e-12

    def test_forced_iteration_cap_exits_two(self, files, tmp_path):
        tmp, _, script = files
        scn = tmp_path / "capped.toml"
        scn.write_text(SCENARIO.format(offset="0.1")
                       + '\n[solver]\nmax_iterations = 1\ntolerance = "1e-16 m"\n')
        out = tmp / "trace.ndjson"
        assert main(["run", "--scenario", str(scn), "--script", str(script),
                     "--out", str(out)]) == 2
        assert not load_trace(out).all_converged()

    def test_load_error_exits_one(self, tmp_path):
        assert main(["run", "--scenario", str(tmp_path / "missing.toml")]) == 1

    def test_double_script_source_exits_one(self, files, tmp_path):
        tmp, _, script = files
        scn = tmp_path / "embedded.toml"
        scn.write_text(SCENARIO.format(offset="0.1") + "\n" + SCRIPT)
        assert main(["run", "--scenario", str(scn), "--script", str(script)]) == 1

    def test_byte_identical_traces(self, files):
        tmp, scn, script = files
        t1, t2 = tmp / "a.ndjson", tmp / "b.ndjson"
        assert main(["run", "--scenario", str(scn), "--script", str(script),
                     "--out", str(t1)]) == 0
        assert main(["run", "--scenario", str(scn), "--script", str(script),
                     "--out", str(t2)]) == 0
        assert t1.read_bytes() == t2.read_bytes()

    def test_plot_emission(self, files):
        tmp, scn, script = files
        svg = tmp / "scene.svg"
        assert main(["run", "--scenario", str(scn), "--script", str(script),
                     "--plot", str(svg)]) == 0
        assert svg.exists() and svg.stat().st_size > 0
        assert b"<svg" in svg.read_bytes()[:500]

    def test_preset_runs(self, tmp_path):
        script = tmp_path / "s.toml"
        script.write_text('[[script]]\nadvance = "2 mm"')
        out = tmp_path / "t.ndjson"
        assert main(["run", "--scenario", "ph2", "--script", str(script),
                     "--out", str(out)]) == 0
        assert len(load_trace(out).steps) == 1


class TestEval:
    def run_and_gt(self, files):
        tmp, scn, script = files
        trace = tmp / "trace.ndjson"
        main(["run", "--scenario", str(scn), "--script", str(script),
              "--out", str(trace)])
        final = load_trace(trace).steps[-1]
        gt = tmp / "gt.csv"
        lines = ["unit=m", "x,y"] + [f"{x!r},{y!r}" for x, y in final["inserted"]]
        gt.write_text("\n".join(lines) + "\n")
        return trace, gt

    def test_sim_vs_itself_zero(self, files, capsys):
        tmp, scn, script = files
        trace, gt = self.run_and_gt(files)
        report = tmp / "report.csv"
        assert main(["eval", "--trace", str(trace), "--gt", str(gt),
                     "--out", str(report)]) == 0
        rows = report.read_text().splitlines()
        header = rows[0].split(",")
        first = rows[1].split(",")
        te = float(first[header.index("te_mm")])
        assert te <= 1e-9

    def test_trace_eval_matches_live_eval(self, files):
        tmp, scn, script = files
        trace, gt = self.run_and_gt(files)
        r1, r2 = tmp / "r1.csv", tmp / "r2.csv"
        assert main(["eval", "--trace", str(trace), "--gt", str(gt),
                     "--out", str(r1)]) == 0
        assert main(["eval", "--scenario", str(scn), "--script", str(script),
                     "--gt", str(gt), "--out", str(r2)]) == 0
        c1 = r1.read_text().splitlines()[1].split(",")[1:]
        c2 = r2.read_text().splitlines()[1].split(",")[1:]
        assert c1 == c2

    def test_parallel_offset_ipe(self, files, tmp_path):
        tmp, _, _ = files
        gt = tmp_path / "gt.csv"
        gt.write_text("unit=mm\nx,y\n0,0\n10,0\n")
        trace = tmp_path / "sim.csv"  # abused as a second gt source? no - build a trace
        # evaluate a synthetic straight "trace" against an offset line instead:
        # simplest honest path: live run with b=0 gives a straight needle at y=0
        scn = tmp_path / "straight.toml"
        scn.write_text(SCENARIO.format(offset="0"))
        script = tmp_path / "s.toml"
        script.write_text("\n".join(['[[script]]\nadvance = "1 mm"'] * 10
                                    + ['[[script]]\nadvance = "0 mm"']))
        gt_off = tmp_path / "gt_off.csv"
        gt_off.write_text("unit=mm\nx,y\n0,1\n10,1\n")
        report = tmp_path / "r.csv"
        assert main(["eval", "--scenario", str(scn), "--script", str(script),
                     "--gt", str(gt_off), "--out", str(report)]) == 0
        rows = report.read_text().splitlines()
        header = rows[0].split(",")
        vals = rows[1].split(",")
        assert float(vals[header.index("mean_ipe_mm")]) == pytest.approx(1.0, rel=1e-9)
        assert float(vals[header.index("max_ipe_mm")]) == pytest.approx(1.0, rel=1e-9)

    def test_both_sources_rejected(self, files):
        tmp, scn, _ = files
        trace, gt = self.run_and_gt(files)
        assert main(["eval", "--trace", str(trace), "--scenario", str(scn),
                     "--gt", str(gt), "--out", str(tmp / "x.csv")]) == 1


class TestTune:
    def test_empty_manifest_exits_one(self, tmp_path):
        manifest = tmp_path / "m.toml"
        manifest.write_text("restarts = 1\n")
        assert main(["tune", "--manifest", str(manifest),
                     "--out", str(tmp_path / "fit.toml")]) == 1

    def test_bounds_violation_exits_one(self, files, tmp_path):
        tmp, scn, script = files
        trace, gt = TestEval().run_and_gt(files)
        manifest = tmp_path / "m.toml"
        manifest.write_text(f"""
[[pairs]]
scenario = "{scn}"
gt = "{gt}"
[bounds]
alpha = [3.0, -3.0]
""")
        assert main(["tune", "--manifest", str(manifest),
                     "--out", str(tmp_path / "fit.toml")]) == 1

    def test_manifest_requires_script(self, files, tmp_path):
        tmp, scn, _ = files
        _, gt = TestEval().run_and_gt(files)
        manifest = tmp_path / "m.toml"
        manifest.write_text(f'[[pairs]]\nscenario = "{scn}"\ngt = "{gt}"\n')
        # scenario has no embedded script: tuning cannot replay it
        assert main(["tune", "--manifest", str(manifest),
                     "--out", str(tmp_path / "fit.toml")]) == 1

    def test_synthetic_fit_round_trip(self, files, tmp_path):
        tmp, _, _ = files
        scn = tmp_path / "embedded.toml"
        scn.write_text(SCENARIO.format(offset="0.1") + "\n" + SCRIPT)
        trace = tmp_path / "t.ndjson"
        main(["run", "--scenario", str(scn), "--out", str(trace)])
        final = load_trace(trace).steps[-1]
        gt = tmp_path / "gt.csv"
        lines = ["unit=m", "x,y"] + [f"{x!r},{y!r}" for x, y in final["inserted"]]
        gt.write_text("\n".join(lines) + "\n")
        manifest = tmp_path / "m.toml"
        manifest.write_text(
            f'[[pairs]]\nscenario = "{scn}"\ngt = "{gt}"\n'
            "restarts = 1\nmaxiter = 150\n")
        fit_out = tmp_path / "fit.toml"
        assert main(["tune", "--manifest", str(manifest), "--out", str(fit_out)]) == 0
        text = fit_out.read_text()
        assert "# fit:" in text
        from needlesim.scenario import parse_scenario
        fitted = parse_scenario(text)
        assert fitted.script  # reusable scenario keeps the script


class TestServe:
    def test_busy_port_exits_one(self):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            assert main(["serve", "--bind", f"127.0.0.1:{port}"]) == 1
        finally:
            blocker.close()

    def test_invalid_bind_exits_one(self):
        assert main(["serve", "--bind", "nonsense"]) == 1

    def test_bind_env_var_used(self, monkeypatch):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        monkeypatch.setenv("NEEDLE_SIM_BIND", f"127.0.0.1:{port}")
        try:
            assert main(["serve"]) == 1  # env-selected port is busy
        finally:
            blocker.close()

    def test_flush_traces(self, tmp_path):
        from needlesim.service.app import Session, create_app
        from needlesim.scenario import load_scenario

        app = create_app()
        session = Session("abc123", load_scenario("chicken"))
        session.trace.append({"step": 1, "convergence": {"converged": True}})
        app.state.sessions["abc123"] = session
        n = flush_traces(app, tmp_path / "traces")
        assert n == 1
        dumped = (tmp_path / "traces" / "abc123.ndjson").read_text()
        assert json.loads(dumped.splitlines()[0])["step"] == 1
