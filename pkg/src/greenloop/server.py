"""Operator API over a live facility.

One control thread per facility owns all zone state and steps the
simulation; API handlers are concurrent readers plus writers into a
bounded command queue the control thread drains between simulated
seconds. The loop never waits on the API: when the queue is full the
command is dropped with a logged warning and the caller gets an error.

Endpoints (all JSON):
  GET  /zones                                   zone directory
  GET  /zones/{zone}/state                      latest snapshot
  GET  /zones/{zone}/timeseries?series=&start=&end=&resolution=
  GET  /zones/{zone}/recommendations            inbox, newest state
  POST /zones/{zone}/recommendations/{rec_id}   {"decision": "accept"}
  GET  /zones/{zone}/guardrails
  PUT  /zones/{zone}/guardrails                 {"allowed": {...}, "prohibited": [...]}
  GET  /zones/{zone}/autonomy-level
  PUT  /zones/{zone}/autonomy-level             {"level": "L3"}
  GET  /zones/{zone}/action-log
  POST /zones/{zone}/undo                       {"entry_id": "act-0001"}
  POST /zones/{zone}/corrections                {"parameter": "t_night", "delta": -1.0}
  POST /twin-run                                {"scenario": ..., "recipe": ..., "hours": ...}
  GET  /zones/{zone}/stream                     server-sent snapshots, 1 Hz
"""

from __future__ import annotations

import dataclasses
import json
import logging
import queue
import threading
import time

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from greenloop import plantsim
from greenloop import recipe as recipe_mod
from greenloop.autonomy import (
    AutonomyLevel, Guardrails, NotLatest, Rejected, l4_gate, twin_run)
from greenloop.supervisor import (
    LoopConfig, RunReport, ZoneRuntime, build_report, default_recipe)
from greenloop.telemetry import TelemetryError

log = logging.getLogger("greenloop.server")

COMMAND_QUEUE_MAX = 64
STREAM_PERIOD_S = 1.0


class FacilityStopped(RuntimeError):
    """The control thread has exited; live commands are meaningless."""


class _Command:
    __slots__ = ("label", "fn", "done", "result", "error")

    def __init__(self, label, fn):
        self.label = label
        self.fn = fn
        self.done = threading.Event()
        self.result = None
        self.error = None


class Facility:
    """Control thread for one zone plus the operator command queue.

    `pace` is simulated seconds per wall second; 0 free-runs the
    simulation as fast as the CPU allows. `pattern_history` carries
    PatternObservation records from prior grow cycles; at L2+ they feed
    the recommendation inbox hourly, and at L3+ recommendations at or
    above `l3_confidence` are applied autonomously within guardrails.
    """

    def __init__(self, scenario, recipe=None, config: LoopConfig | None = None,
                 seed: int = 0, controller: str = "cascade",
                 hours: float | None = None, pace: float = 0.0,
                 pattern_history=None, total_cycles: int | None = None,
                 l3_confidence: float = 0.75, store=None, zone: str = "z1"):
        if isinstance(scenario, str):
            table = plantsim.builtin_scenarios()
            if scenario not in table:
                raise KeyError(f"unknown scenario {scenario!r}")
            scenario = table[scenario]
        self.scenario = scenario
        self.recipe = recipe or default_recipe()
        self.config = config or LoopConfig()
        self.store = store
        self.runtime = ZoneRuntime(scenario, self.recipe, self.config,
                                   seed=seed, controller=controller,
                                   store=store, zone=zone)
        duration = scenario.duration_s if hours is None else hours * 3600.0
        self.duration_s = min(duration, scenario.duration_s)
        self.pace = pace
        self.pattern_history = list(pattern_history or [])
        self.total_cycles = total_cycles
        self.l3_confidence = l3_confidence

        self.commands: queue.Queue[_Command] = queue.Queue(COMMAND_QUEUE_MAX)
        self.dropped_commands = 0
        self._snapshot: dict = {}
        self._snapshot_wall = 0.0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._next_scan_s = 0.0

    # --- lifecycle ------------------------------------------------------

    def start(self) -> "Facility":
        if self._thread is not None:
            raise RuntimeError("facility already started")
        self._thread = threading.Thread(
            target=self._run, name=f"facility-{self.zone}", daemon=True)
        self._thread.start()
        return self

    def stop(self, timeout: float = 10.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def zone(self) -> str:
        return self.runtime.zone

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def report(self) -> RunReport:
        """Report over the simulated span so far; call after the loop ends."""
        return build_report(self.runtime, self.scenario,
                            min(self.runtime.t, self.duration_s))

    # --- control thread ---------------------------------------------------

    def _run(self) -> None:
        rt = self.runtime
        try:
            rt.autotune()
            self._publish()
            next_wall = time.monotonic()
            while (not self._stop.is_set() and not rt.done
                   and rt.t < self.duration_s):
                self._drain()
                self._autonomy_scan()
                rt.step_second()
                # publish at inner-loop granularity; cheap at any pace
                if rt.t % 10.0 < 1.0:
                    self._publish()
                if self.pace > 0:
                    next_wall += 1.0 / self.pace
                    delay = next_wall - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                    else:
                        next_wall = time.monotonic()
        finally:
            self._publish()
            self._drain()

    def _publish(self) -> None:
        snap = self.runtime.snapshot()
        with self._lock:
            self._snapshot = snap
            self._snapshot_wall = time.time()

    def _drain(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            try:
                cmd.result = cmd.fn()
            except Exception as exc:   # handed back to the caller
                cmd.error = exc
            cmd.done.set()

    def _autonomy_scan(self) -> None:
        if self.runtime.t < self._next_scan_s:
            return
        self._next_scan_s = self.runtime.t + 3600.0
        self._scan_now()

    def _scan_now(self) -> None:
        engine = self.runtime.engine
        if engine.level < AutonomyLevel.L2 or not self.pattern_history:
            return
        engine.recommend(self.pattern_history, self.total_cycles)
        if engine.level < AutonomyLevel.L3:
            return
        for rec in list(engine.inbox.values()):
            if rec.state != "pending" or rec.confidence < self.l3_confidence:
                continue
            engine.decide(rec.id, "accepted")
            entry = engine.apply_l3(
                rec.parameter, rec.delta, reason=rec.rationale,
                confidence=rec.confidence, origin="l3-auto",
                timestamp=self.runtime.t)
            if isinstance(entry, Rejected):
                self.runtime.flags.append(
                    {"at_s": self.runtime.t,
                     "flag": f"l3-rejected:{entry.reason}"})

    # --- operator commands -------------------------------------------------

    def submit(self, label: str, fn, timeout: float = 5.0):
        """Run fn on the control thread; falls back inline once it exits."""
        if not self.running:
            # single-threaded again: the facility is inspectable after
            # the run ends, commands apply directly
            return fn()
        cmd = _Command(label, fn)
        try:
            self.commands.put_nowait(cmd)
        except queue.Full:
            self.dropped_commands += 1
            log.warning("command queue full, dropping %r", label)
            raise
        if not cmd.done.wait(timeout):
            raise TimeoutError(f"control loop did not pick up {label!r}")
        if cmd.error is not None:
            raise cmd.error
        return cmd.result

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._snapshot), self._snapshot_wall

    def decide_recommendation(self, rec_id: str, decision: str):
        """Control-thread body for an operator decision on one item."""
        engine = self.runtime.engine
        rec = engine.decide(rec_id, decision)
        entry = None
        if decision == "accepted":
            entry = engine.apply_l3(
                rec.parameter, rec.delta,
                reason=f"operator accepted {rec.id}: {rec.rationale}",
                confidence=rec.confidence, origin="operator",
                timestamp=self.runtime.t)
        return rec, entry


# --- transport -------------------------------------------------------------

_DECISIONS = {"accept": "accepted", "accepted": "accepted",
              "dismiss": "dismissed", "dismissed": "dismissed",
              "schedule": "scheduled", "scheduled": "scheduled"}

_LEVELS = {"L1": 1, "L2": 2, "L3": 3, "L4": 4}


def _submit(facility: Facility, label: str, fn):
    try:
        return facility.submit(label, fn)
    except queue.Full:
        raise HTTPException(503, "command queue full; command dropped")
    except TimeoutError as exc:
        raise HTTPException(504, str(exc))


def create_app(facility: Facility) -> FastAPI:
    app = FastAPI(title="greenloop", version="0.1.0")

    def _check_zone(zone: str) -> None:
        if zone != facility.zone:
            raise HTTPException(404, f"unknown zone {zone!r}")

    @app.get("/zones")
    def zones():
        return [{
            "zone": facility.zone,
            "scenario": facility.scenario.name,
            "controller": facility.runtime.controller,
            "autonomy_level": facility.runtime.engine.level.name,
            "running": facility.running,
        }]

    @app.get("/zones/{zone}/state")
    def state(zone: str):
        _check_zone(zone)
        snap, wall = facility.snapshot()
        if not snap:
            raise HTTPException(503, "no snapshot published yet")
        snap["wall_ts"] = wall
        snap["running"] = facility.running
        return snap

    @app.get("/zones/{zone}/timeseries")
    def timeseries(zone: str, series: str, start: float = 0.0,
                   end: float | None = None,
                   resolution: float | None = None):
        _check_zone(zone)
        if facility.store is None:
            raise HTTPException(404, "facility has no telemetry store")
        t1 = end if end is not None else facility.runtime.t + 1.0
        try:
            points = facility.store.query(series, start, t1, resolution)
        except KeyError as exc:
            raise HTTPException(404, str(exc))
        except TelemetryError as exc:
            raise HTTPException(422, str(exc))
        return {"series": series,
                "points": [{"t": p.timestamp, "value": p.value,
                            "quality": p.quality} for p in points]}

    @app.get("/zones/{zone}/recommendations")
    def recommendations(zone: str):
        _check_zone(zone)
        inbox = facility.runtime.engine.inbox
        return {"items": [dataclasses.asdict(r) for r in inbox.values()]}

    @app.post("/zones/{zone}/recommendations/{rec_id}")
    def decide(zone: str, rec_id: str, payload: dict = Body(...)):
        _check_zone(zone)
        decision = _DECISIONS.get(str(payload.get("decision", "")).lower())
        if decision is None:
            raise HTTPException(
                422, "decision must be accept, dismiss, or schedule")
        try:
            rec, entry = _submit(
                facility, f"decide {rec_id}",
                lambda: facility.decide_recommendation(rec_id, decision))
        except KeyError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(409, str(exc))
        out = {"recommendation": dataclasses.asdict(rec)}
        if isinstance(entry, Rejected):
            out["applied"] = False
            out["rejected"] = entry.reason
        elif entry is not None:
            out["applied"] = True
            out["action"] = dataclasses.asdict(entry)
        return out

    @app.get("/zones/{zone}/guardrails")
    def get_guardrails(zone: str):
        _check_zone(zone)
        g = facility.runtime.engine.guardrails
        return {"allowed": dict(g.allowed),
                "prohibited": sorted(g.prohibited)}

    @app.put("/zones/{zone}/guardrails")
    def put_guardrails(zone: str, payload: dict = Body(...)):
        _check_zone(zone)
        allowed = payload.get("allowed")
        prohibited = payload.get("prohibited", [])
        if not isinstance(allowed, dict) or not isinstance(prohibited, list):
            raise HTTPException(
                422, "payload needs allowed: {class: envelope} and "
                     "prohibited: [class, ...]")
        try:
            rails = Guardrails(allowed={str(k): float(v)
                                        for k, v in allowed.items()},
                               prohibited=frozenset(str(p)
                                                    for p in prohibited))
        except (TypeError, ValueError) as exc:
            raise HTTPException(422, f"invalid guardrails: {exc}")

        def apply():
            facility.runtime.engine.guardrails = rails
            return rails

        rails = _submit(facility, "guardrails", apply)
        return {"allowed": dict(rails.allowed),
                "prohibited": sorted(rails.prohibited)}

    @app.get("/zones/{zone}/autonomy-level")
    def get_level(zone: str):
        _check_zone(zone)
        engine = facility.runtime.engine
        return {"level": engine.level.name, "value": int(engine.level),
                "l4_gate_open": l4_gate(engine.cycle_history)}

    @app.put("/zones/{zone}/autonomy-level")
    def put_level(zone: str, payload: dict = Body(...)):
        _check_zone(zone)
        raw = payload.get("level")
        value = _LEVELS.get(str(raw).upper())
        if value is None:
            try:
                value = int(raw)
            except (TypeError, ValueError):
                raise HTTPException(422, f"unknown level {raw!r}")
        if value not in (1, 2, 3, 4):
            raise HTTPException(422, f"level {value} outside L1..L4")

        def apply():
            level = facility.runtime.engine.set_level(value)
            # a level raise may unlock pending bounded actions right away
            facility._scan_now()
            return level

        try:
            level = _submit(facility, "autonomy-level", apply)
        except ValueError as exc:    # the L4 gate
            raise HTTPException(409, str(exc))
        return {"level": level.name, "value": int(level)}

    @app.get("/zones/{zone}/action-log")
    def action_log(zone: str):
        _check_zone(zone)
        entries = list(facility.runtime.engine.log)
        return {"entries": [dataclasses.asdict(e) for e in entries]}

    @app.post("/zones/{zone}/undo")
    def undo(zone: str, payload: dict = Body(...)):
        _check_zone(zone)
        entry_id = payload.get("entry_id")
        if not isinstance(entry_id, str):
            raise HTTPException(422, "entry_id must be a string")
        engine = facility.runtime.engine
        try:
            entry = _submit(
                facility, f"undo {entry_id}",
                lambda: engine.undo(entry_id, timestamp=facility.runtime.t))
        except KeyError as exc:
            raise HTTPException(404, str(exc))
        except NotLatest as exc:
            raise HTTPException(409, str(exc))
        return {"action": dataclasses.asdict(entry)}

    @app.post("/zones/{zone}/corrections")
    def correct(zone: str, payload: dict = Body(...)):
        _check_zone(zone)
        parameter = payload.get("parameter")
        if not isinstance(parameter, str):
            raise HTTPException(422, "parameter must be a string")
        try:
            delta = float(payload.get("delta"))
        except (TypeError, ValueError):
            raise HTTPException(422, "delta must be a number")
        reason = str(payload.get("reason", "operator correction"))
        engine = facility.runtime.engine
        entry = _submit(
            facility, f"correct {parameter}",
            lambda: engine.apply_l3(parameter, delta, reason=reason,
                                    origin="operator",
                                    timestamp=facility.runtime.t))
        if isinstance(entry, Rejected):
            raise HTTPException(409, entry.reason)
        return {"action": dataclasses.asdict(entry)}

    @app.post("/twin-run")
    def twin(payload: dict = Body(default={})):
        scenario = payload.get("scenario", facility.scenario.name)
        seed = payload.get("seed", 0)
        hours = payload.get("hours")
        doc = payload.get("recipe")
        if doc is not None:
            try:
                recipe = recipe_mod.parse_recipe(doc)
            except recipe_mod.RecipeError as exc:
                raise HTTPException(422, f"invalid recipe: {exc}")
        else:
            recipe = facility.recipe
        try:
            report = twin_run(recipe, scenario, seed=int(seed),
                              hours=None if hours is None else float(hours))
        except KeyError as exc:
            raise HTTPException(404, str(exc))
        except (TypeError, ValueError) as exc:
            raise HTTPException(422, str(exc))
        return json.loads(report.to_json())

    @app.get("/zones/{zone}/stream")
    def stream(zone: str):
        _check_zone(zone)

        def events():
            while True:
                snap, wall = facility.snapshot()
                if snap:
                    snap["wall_ts"] = wall
                    yield f"data: {json.dumps(snap, sort_keys=True)}\n\n"
                if not facility.running:
                    return
                time.sleep(STREAM_PERIOD_S)

        return StreamingResponse(events(), media_type="text/event-stream")

    return app


def serve(facility: Facility, host: str = "127.0.0.1",
          port: int = 8800) -> None:
    """Run the API in the calling thread until interrupted."""
    import uvicorn

    app = create_app(facility)
    if not facility.running:
        facility.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        facility.stop()
