"""Command-line entry points: scripted runs, evaluation, fitting, serving."""

from __future__ import annotations

import argparse
import os
import socket
import sys
from pathlib import Path

from .metrics import build_report, summarize, write_report_csv
from .scenario import (
    LoadError,
    SimTrace,
    load_ground_truth,
    load_scenario,
    load_script,
    load_trace,
    save_trace,
    scenario_to_toml,
)
from .sim import InputError, SimError, Simulator
from .tuning import FitBounds, TuningError, fit_parameters, fitted_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NON_CONVERGED = 2

DEFAULT_BIND = "127.0.0.1:7070"


def _resolve_script(scenario, script_path):
    if script_path is not None and scenario.script:
        raise LoadError("scenario embeds a script and --script was given; "
                        "provide exactly one script source")
    if script_path is not None:
        return load_script(script_path)
    return scenario.script


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    script = _resolve_script(scenario, args.script)
    sim = Simulator.from_scenario(scenario)
    records = sim.run(script)
    trace = SimTrace(records)
    if args.out:
        save_trace(trace, args.out)
    if args.plot:
        emit_plot(sim, records, args.plot)
    if not trace.all_converged():
        print("warning: some steps did not converge", file=sys.stderr)
        return EXIT_NON_CONVERGED
    return EXIT_OK


def _curve_from_trace(trace: SimTrace):
    if not trace.steps:
        raise LoadError("trace is empty")
    last = trace.steps[-1]
    inserted = last.get("inserted")
    if not inserted:
        raise LoadError("final trace step has no inserted needle segment")
    return inserted


def cmd_eval(args) -> int:
    if (args.trace is None) == (args.scenario is None):
        print("eval: provide exactly one of --trace or --scenario", file=sys.stderr)
        return EXIT_ERROR
    gt = load_ground_truth(args.gt)
    if args.trace is not None:
        curve = _curve_from_trace(load_trace(args.trace))
        label = Path(args.trace).stem
    else:
        scenario = load_scenario(args.scenario)
        script = _resolve_script(scenario, args.script)
        sim = Simulator.from_scenario(scenario)
        sim.run(script)
        curve = sim.inserted_polyline()
        label = scenario.name or "live"
    report = build_report(curve, gt.points, len(gt), label=label)
    write_report_csv([report], summarize([report]), args.out)
    e = "undefined" if report.edp is None else f"{report.edp:.2f}%"
    print(f"TE {report.te * 1e3:.4f} mm | mean IPE {report.mean_ipe * 1e3:.4f} mm | "
          f"max IPE {report.max_ipe * 1e3:.4f} mm | EDP {e}")
    return EXIT_OK


def cmd_tune(args) -> int:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise LoadError(f"manifest not found: {args.manifest!r}")
    manifest = tomllib.loads(manifest_path.read_text())
    pairs_raw = manifest.get("pairs", [])
    if not pairs_raw:
        raise TuningError("manifest lists no (scenario, gt) pairs")
    base_dir = manifest_path.parent
    pairs = []
    for entry in pairs_raw:
        scn = load_scenario(_rel(entry["scenario"], base_dir))
        gt = load_ground_truth(_rel(entry["gt"], base_dir))
        pairs.append((scn, gt))
    bounds = FitBounds()
    if "bounds" in manifest:
        b = manifest["bounds"]
        bounds = FitBounds(
            log10_mu=tuple(b.get("log10_mu", bounds.log10_mu)),
            alpha=tuple(b.get("alpha", bounds.alpha)),
            offset_mm=tuple(b.get("offset_mm", bounds.offset_mm)))
        for name, (lo, hi) in (("log10_mu", bounds.log10_mu),
                               ("alpha", bounds.alpha),
                               ("offset_mm", bounds.offset_mm)):
            if not lo < hi:
                raise TuningError(f"manifest bounds.{name}: need lo < hi, got [{lo}, {hi}]")
    result = fit_parameters(pairs, bounds=bounds,
                            restarts=int(manifest.get("restarts", 3)),
                            maxiter=int(manifest.get("maxiter", 400)))
    out = fitted_scenario(pairs[0][0], result)
    text = scenario_to_toml(out)
    text += (f"\n# fit: objective {result.objective!r} m mean IPE, "
             f"{result.iterations} iterations, {result.evaluations} evaluations, "
             f"converged={result.converged}\n")
    Path(args.out).write_text(text)
    print(f"fitted mu {result.mu} alpha {result.alpha} "
          f"b {result.offset * 1e3:.4f} mm | objective {result.objective * 1e3:.4f} mm")
    return EXIT_OK


def _rel(path: str, base: Path):
    p = Path(path)
    if p.exists() or p.is_absolute() or str(p) in ("ph1", "ph2", "ph3", "chicken"):
        return path
    return base / p


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    bind = args.bind or os.environ.get("NEEDLE_SIM_BIND", DEFAULT_BIND)
    host, _, port_s = bind.rpartition(":")
    if not host or not port_s.isdigit():
        print(f"serve: invalid bind address {bind!r}, expected host:port", file=sys.stderr)
        return EXIT_ERROR
    port = int(port_s)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        print(f"serve: cannot bind {bind}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        probe.close()

    ui_dir = args.ui or (str(Path("frontend/dist")) if Path("frontend/dist").is_dir() else None)
    app = create_app(ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except KeyboardInterrupt:  # pragma: no cover - interactive shutdown
        pass
    finally:
        if args.trace_dir:
            flush_traces(app, args.trace_dir)
    return EXIT_OK


def flush_traces(app, trace_dir) -> int:
    """Dump every session's trace to <dir>/<session_id>.ndjson; returns count."""
    out = Path(trace_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for sid, session in getattr(app.state, "sessions", {}).items():
        save_trace(SimTrace(session.trace), out / f"{sid}.ndjson")
        n += 1
    return n


def emit_plot(sim: Simulator, records, path):
    """Static scene plot: layer bands, needle path, constraint points."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 5))
    mm = 1e3
    domain = sim.domain
    bounds = [l.entry for l in domain.layers]
    if domain.exit_boundary is not None:
        bounds = bounds + [domain.exit_boundary]
    colors = plt.cm.Pastel1.colors
    for i in range(len(bounds) - 1):
        a, b = bounds[i], bounds[i + 1]
        xs = [a.start[0] * mm, a.end[0] * mm, b.end[0] * mm, b.start[0] * mm]
        ys = [a.start[1] * mm, a.end[1] * mm, b.end[1] * mm, b.start[1] * mm]
        ax.fill(xs, ys, color=colors[i % len(colors)], alpha=0.6, zorder=0)
    for b in bounds:
        ax.plot([b.start[0] * mm, b.end[0] * mm], [b.start[1] * mm, b.end[1] * mm],
                color="grey", lw=0.8, zorder=1)
    stride = max(1, len(records) // 6)
    for rec in records[::stride]:
        poly = rec["polyline"]
        ax.plot([p[0] * mm for p in poly], [p[1] * mm for p in poly],
                color="steelblue", lw=0.6, alpha=0.4, zorder=2)
    poly = sim.polyline()
    ax.plot(poly[:, 0] * mm, poly[:, 1] * mm, color="navy", lw=1.6, zorder=3,
            label="needle")
    for c in sim.constraint_points_world():
        ax.plot(c["x"] * mm, c["y"] * mm, "x", color="tab:blue", ms=5, zorder=4)
    ax.plot(poly[0, 0] * mm, poly[0, 1] * mm, "o", color="black", ms=6, zorder=5,
            label="base")
    ax.plot(poly[-1, 0] * mm, poly[-1, 1] * mm, "o", color="red", ms=5, zorder=5,
            label="tip")
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="needlesim",
                                description="2D bevel-tip needle insertion simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scripted insertion")
    run_p.add_argument("--scenario", required=True, help="scenario file or preset name")
    run_p.add_argument("--script", help="input script TOML (if not embedded)")
    run_p.add_argument("--out", help="trace output path (ndjson)")
    run_p.add_argument("--plot", help="write a scene plot (svg/png)")
    run_p.set_defaults(func=cmd_run)

    eval_p = sub.add_parser("eval", help="score a run against a ground-truth shape")
    eval_p.add_argument("--trace", help="trace file from a previous run")
    eval_p.add_argument("--scenario", help="scenario to re-run live")
    eval_p.add_argument("--script", help="script for the live run")
    eval_p.add_argument("--gt", required=True, help="ground-truth CSV")
    eval_p.add_argument("--out", required=True, help="report CSV path")
    eval_p.set_defaults(func=cmd_eval)

    tune_p = sub.add_parser("tune", help="fit tissue parameters to ground truth")
    tune_p.add_argument("--manifest", required=True, help="dataset manifest TOML")
    tune_p.add_argument("--out", required=True, help="fitted scenario output path")
    tune_p.set_defaults(func=cmd_tune)

    serve_p = sub.add_parser("serve", help="run the interactive session service")
    serve_p.add_argument("--bind", help=f"host:port (default ${{NEEDLE_SIM_BIND}} "
                                        f"or {DEFAULT_BIND})")
    serve_p.add_argument("--ui", help="directory of built UI assets to serve at /ui")
    serve_p.add_argument("--trace-dir", help="flush session traces here on shutdown")
    serve_p.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LoadError, TuningError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SimError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint():  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
