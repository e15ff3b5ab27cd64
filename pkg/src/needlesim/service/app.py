"""Session host: one simulator per session, commands in, snapshots out.

Commands are applied strictly in client sequence order under a
per-session lock (single writer).  Every applied command produces
exactly one snapshot on each subscriber feed; slow consumers lose the
oldest entries past a 64-message buffer and see a gap marker instead.
"""

from __future__ import annotations

import asyncio
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from ..scenario import LoadError, Scenario, SimTrace, list_presets, load_scenario, \
    parse_scenario, trace_lines
from ..sim import InputError, SimError, Simulator, StepInputs, VInput
from ..sim import BevelSpec
from .models import (
    CommandMessage,
    ConstraintOut,
    ConvergenceOut,
    CreateSessionRequest,
    CreateSessionResponse,
    ErrorMessage,
    GapMessage,
    HeartbeatMessage,
    LayerOut,
    ScenarioList,
    Snapshot,
    SnapshotMessage,
    TipPose,
)

FEED_BUFFER = 64
MM = 1e3
# inbound mm -> m uses the same multiply-by-1e-3 as the scenario parser so a
# replayed script reproduces command floats bit-for-bit
MM_TO_M = 1e-3


class CommandError(Exception):
    def __init__(self, detail: str, expected_seq: int | None = None):
        super().__init__(detail)
        self.detail = detail
        self.expected_seq = expected_seq


class _Subscriber:
    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=FEED_BUFFER)
        self.dropped = 0

    def push(self, message):
        try:
            self.queue.put_nowait(message)
        except asyncio.QueueFull:
            try:
                self.queue.get_nowait()
            except asyncio.QueueEmpty:
                pass
            self.dropped += 1
            self.queue.put_nowait(message)


class Session:
    def __init__(self, session_id: str, scenario: Scenario):
        self.id = session_id
        self.scenario = scenario
        self.simulator = Simulator.from_scenario(scenario)
        self.expected_seq = 0
        self.command_log: list[dict] = []
        self.trace: list[dict] = []
        self.subscribers: list[_Subscriber] = []
        self.lock = asyncio.Lock()

    def snapshot(self) -> Snapshot:
        return build_snapshot(self.simulator)

    def broadcast(self, message):
        for sub in self.subscribers:
            sub.push(message)

    def apply(self, msg: CommandMessage) -> Snapshot:
        """Validate sequence, execute one command, record and return the snapshot."""
        if msg.seq != self.expected_seq:
            raise CommandError(
                f"out-of-order command: got seq {msg.seq}",
                expected_seq=self.expected_seq)
        sim = self.simulator
        cmd, payload = msg.cmd, msg.payload
        try:
            if cmd == "get_state":
                pass
            elif cmd == "reset":
                self.simulator = Simulator.from_scenario(self.scenario)
                self.trace.clear()
            elif cmd == "load_scenario":
                self.scenario = _resolve_scenario(payload)
                self.simulator = Simulator.from_scenario(self.scenario)
                self.trace.clear()
            elif cmd == "set_bevel":
                offset = float(payload["offset_mm"]) * MM_TO_M
                direction = int(payload.get("direction", sim.bevel.direction))
                sim.bevel = BevelSpec(offset, direction)
            elif cmd in ("advance", "retract"):
                dh = float(payload["dh_mm"]) * MM_TO_M
                if dh < 0:
                    raise CommandError(f"{cmd}: dh_mm must be >= 0")
                if cmd == "retract":
                    dh = -dh
                sim.step(StepInputs(advance=dh))
                self.trace.append(sim.snapshot())
            elif cmd == "set_v_input":
                v = VInput(
                    at=payload["at"],
                    deflection=(None if payload.get("deflection_mm") is None
                                else float(payload["deflection_mm"]) * MM_TO_M),
                    slope=(None if payload.get("slope_rad") is None
                           else float(payload["slope_rad"])))
                sim.step(StepInputs(v=(v,)))
                self.trace.append(sim.snapshot())
            else:  # pragma: no cover - schema forbids it
                raise CommandError(f"unknown command {cmd!r}")
        except CommandError:
            raise
        except (KeyError, TypeError, ValueError, LoadError, InputError) as exc:
            raise CommandError(f"{cmd}: {exc}") from exc
        except SimError as exc:
            raise CommandError(f"{cmd}: simulation failure: {exc}") from exc
        self.command_log.append({"seq": msg.seq, "cmd": cmd, "payload": payload})
        self.expected_seq += 1
        return self.snapshot()


def _resolve_scenario(payload: dict) -> Scenario:
    preset = payload.get("preset")
    inline = payload.get("scenario")
    if (preset is None) == (inline is None):
        raise CommandError("provide exactly one of 'preset' or 'scenario'")
    if preset is not None:
        if preset not in list_presets():
            raise CommandError(f"unknown preset {preset!r}; known: {list(list_presets())}")
        return load_scenario(preset)
    return parse_scenario(inline, name="inline")


def build_snapshot(sim: Simulator) -> Snapshot:
    raw = sim.snapshot()
    layers = [LayerOut(
        index=l.index, mu_pa=l.mu, alpha=l.alpha, gamma=l.gamma,
        thickness_mm=l.thickness * MM,
        entry_mm=[[l.entry.start[0] * MM, l.entry.start[1] * MM],
                  [l.entry.end[0] * MM, l.entry.end[1] * MM]])
        for l in sim.domain.layers]
    exit_mm = None
    if sim.domain.exit_boundary is not None:
        b = sim.domain.exit_boundary
        exit_mm = [[b.start[0] * MM, b.start[1] * MM], [b.end[0] * MM, b.end[1] * MM]]
    return Snapshot(
        step=raw["step"],
        contact=raw["contact"],
        depth_mm=raw["depth"] * MM,
        tip=TipPose(x_mm=raw["tip"][0] * MM, y_mm=raw["tip"][1] * MM,
                    theta_rad=raw["tip"][2]),
        needle_mm=[[x * MM, y * MM] for x, y in raw["polyline"]],
        constraints=[ConstraintOut(
            x_mm=c["x"] * MM, y_mm=c["y"] * MM, station_mm=c["station"] * MM,
            ordinate_mm=c["ordinate"] * MM, layer=c["layer"],
            creation_depth_mm=c["creation_depth"] * MM)
            for c in raw["constraints"]],
        layers=layers,
        exit_mm=exit_mm,
        template_x_mm=None if sim.template_x is None else sim.template_x * MM,
        convergence=ConvergenceOut(
            iterations=raw["convergence"]["iterations"],
            residual_m=raw["convergence"]["residual"],
            converged=raw["convergence"]["converged"],
            clamp_events=raw["convergence"]["clamp_events"]),
        inputs=raw["inputs"],
    )


def create_app(heartbeat_interval: float = 2.0, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="needlesim service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.heartbeat_interval = heartbeat_interval

    @app.get("/scenarios", response_model=ScenarioList)
    def scenarios():
        return ScenarioList(presets=list(list_presets()))

    @app.post("/sessions", response_model=CreateSessionResponse)
    def create_session(req: CreateSessionRequest):
        try:
            scenario = _resolve_scenario(req.model_dump(exclude_none=True))
        except CommandError as exc:
            raise HTTPException(status_code=400, detail=exc.detail) from exc
        except LoadError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        session = Session(uuid.uuid4().hex, scenario)
        sessions[session.id] = session
        return CreateSessionResponse(session_id=session.id, snapshot=session.snapshot())

    def _get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    @app.get("/sessions/{session_id}/trace")
    def download_trace(session_id: str):
        session = _get_session(session_id)
        return PlainTextResponse(trace_lines(SimTrace(session.trace)),
                                 media_type="application/x-ndjson")

    @app.websocket("/session/{session_id}")
    async def session_feed(ws: WebSocket, session_id: str):
        session = sessions.get(session_id)
        if session is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        sub = _Subscriber()
        session.subscribers.append(sub)
        # the latest state is replayed on (re)connect
        sub.push(SnapshotMessage(seq=session.expected_seq - 1,
                                 step=session.simulator.state.step_count,
                                 snapshot=session.snapshot()))

        async def sender():
            while True:
                message = await sub.queue.get()
                if sub.dropped:
                    await ws.send_text(GapMessage(dropped=sub.dropped).model_dump_json())
                    sub.dropped = 0
                await ws.send_text(message.model_dump_json())

        async def heartbeat():
            while True:
                await asyncio.sleep(app.state.heartbeat_interval)
                sub.push(HeartbeatMessage(step=session.simulator.state.step_count))

        send_task = asyncio.create_task(sender())
        beat_task = asyncio.create_task(heartbeat())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = CommandMessage.model_validate_json(text)
                except ValueError as exc:
                    sub.push(ErrorMessage(detail=f"malformed command: {exc}"))
                    continue
                async with session.lock:
                    try:
                        snapshot = session.apply(msg)
                    except CommandError as exc:
                        sub.push(ErrorMessage(detail=exc.detail,
                                              expected_seq=exc.expected_seq))
                        continue
                    session.broadcast(SnapshotMessage(
                        seq=msg.seq, step=snapshot.step, snapshot=snapshot))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            beat_task.cancel()
            if sub in session.subscribers:
                session.subscribers.remove(sub)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
