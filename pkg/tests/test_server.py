"""Operator API tests.

The facility under test is mostly left unstarted: Facility.submit falls
back to running commands inline once the control thread is gone, which
keeps endpoint behavior testable without timing games. One test drives
a genuinely live paced loop to cover the concurrent path end to end.
"""

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from greenloop.autonomy import PatternObservation
from greenloop.server import COMMAND_QUEUE_MAX, Facility, _Command, create_app
from greenloop.supervisor import LoopConfig, run_scenario
from greenloop.telemetry import TelemetryStore


def overshoot_history(cycles=20, magnitude=3.0):
    # 20 distinct supporting cycles put the confidence just above the
    # default autonomous-apply bar of 0.75
    return [PatternObservation("night_temp_overshoot", cycle=i,
                               magnitude=magnitude)
            for i in range(cycles)]


@pytest.fixture()
def idle():
    """Facility that never started: commands apply inline."""
    fac = Facility("step_disturbance", config=LoopConfig(autonomy_level=2),
                   pattern_history=overshoot_history(), hours=3)
    fac._publish()
    return fac


@pytest.fixture()
def client(idle):
    return TestClient(create_app(idle))


# --- directory and state ------------------------------------------------

def test_zone_directory(client):
    r = client.get("/zones")
    assert r.status_code == 200
    (entry,) = r.json()
    assert entry["zone"] == "z1"
    assert entry["scenario"] == "step_disturbance"
    assert entry["controller"] == "cascade"
    assert entry["autonomy_level"] == "L2"
    assert entry["running"] is False


def test_state_snapshot_fields(client):
    r = client.get("/zones/z1/state")
    assert r.status_code == 200
    snap = r.json()
    for key in ("sim_time_s", "t_air", "rh", "vpd", "t_setpoint",
                "rh_setpoint", "actuators", "wall_ts", "running"):
        assert key in snap
    assert snap["running"] is False
    assert snap["wall_ts"] > 0


def test_state_before_first_snapshot_is_503():
    fac = Facility("step_disturbance", hours=1)
    c = TestClient(create_app(fac))
    assert c.get("/zones/z1/state").status_code == 503


def test_unknown_zone_is_404(client):
    assert client.get("/zones/z9/state").status_code == 404
    assert client.get("/zones/z9/action-log").status_code == 404
    assert client.post("/zones/z9/undo",
                       json={"entry_id": "act-0001"}).status_code == 404


def test_unknown_scenario_name_raises():
    with pytest.raises(KeyError, match="atlantis"):
        Facility("atlantis")


# --- recommendations ------------------------------------------------------

def test_recommendation_accept_lands_in_action_log(client, idle):
    idle._scan_now()    # L2: fills the inbox, applies nothing by itself
    items = client.get("/zones/z1/recommendations").json()["items"]
    assert len(items) == 1
    rec = items[0]
    assert rec["state"] == "pending"
    assert rec["parameter"] == "t_night"
    assert rec["delta"] == pytest.approx(-3.0)
    assert idle.runtime.engine.log == []

    r = client.post(f"/zones/z1/recommendations/{rec['id']}",
                    json={"decision": "accept"})
    assert r.status_code == 200
    body = r.json()
    assert body["recommendation"]["state"] == "accepted"
    assert body["applied"] is True
    action = body["action"]
    # the -3.0 proposal lands clamped to the temperature envelope
    recipe = idle.runtime.engine.recipe_targets["t_night"]
    assert action["new_value"] == pytest.approx(recipe - 2.0)
    assert action["origin"] == "operator"
    assert rec["id"] in action["reason"]

    log = client.get("/zones/z1/action-log").json()["entries"]
    assert [e["id"] for e in log] == [action["id"]]


def test_decide_error_paths(client, idle):
    idle._scan_now()
    (rec_id,) = list(idle.runtime.engine.inbox)
    assert client.post(f"/zones/z1/recommendations/{rec_id}",
                       json={"decision": "burn"}).status_code == 422
    assert client.post("/zones/z1/recommendations/rec-9999",
                       json={"decision": "dismiss"}).status_code == 404
    assert client.post(f"/zones/z1/recommendations/{rec_id}",
                       json={"decision": "dismiss"}).status_code == 200
    # the item is settled; a second decision conflicts
    assert client.post(f"/zones/z1/recommendations/{rec_id}",
                       json={"decision": "accept"}).status_code == 409


# --- guardrails ----------------------------------------------------------

def test_guardrails_roundtrip(client, idle):
    before = client.get("/zones/z1/guardrails").json()
    assert before["allowed"]["temperature"] == pytest.approx(2.0)
    assert "photoperiod" in before["prohibited"]

    r = client.put("/zones/z1/guardrails",
                   json={"allowed": {"temperature": 0.5},
                         "prohibited": ["photoperiod", "stage_transition",
                                        "humidity"]})
    assert r.status_code == 200
    after = client.get("/zones/z1/guardrails").json()
    assert after["allowed"]["temperature"] == pytest.approx(0.5)
    assert "humidity" in after["prohibited"]
    assert idle.runtime.engine.guardrails.allowed["temperature"] == 0.5


def test_guardrails_reject_malformed(client, idle):
    assert client.put("/zones/z1/guardrails",
                      json={"allowed": [1, 2]}).status_code == 422
    assert client.put("/zones/z1/guardrails",
                      json={"allowed": {"temperature": "wide"}}
                      ).status_code == 422
    # a class cannot be allowed and prohibited at once
    assert client.put("/zones/z1/guardrails",
                      json={"allowed": {"humidity": 4.0},
                            "prohibited": ["humidity"]}).status_code == 422
    # the live rails are untouched by rejected payloads
    assert idle.runtime.engine.guardrails.allowed["temperature"] == 2.0


# --- autonomy level -------------------------------------------------------

def test_autonomy_level_roundtrip(client):
    level = client.get("/zones/z1/autonomy-level").json()
    assert level == {"level": "L2", "value": 2, "l4_gate_open": False}
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": "L3"}).json()["value"] == 3
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": 1}).json()["level"] == "L1"
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": "L9"}).status_code == 422


def test_l4_needs_documented_cycles(client, idle):
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": "L4"}).status_code == 409
    for i in range(3):
        idle.runtime.engine.record_cycle(f"cycle-{i}", outcome="nominal")
    assert client.get("/zones/z1/autonomy-level").json()["l4_gate_open"]
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": "L4"}).status_code == 200


# --- bounded autonomous action -------------------------------------------

def test_guardrail_edit_governs_next_autonomous_action(client, idle):
    r = client.put("/zones/z1/guardrails",
                   json={"allowed": {"temperature": 0.25, "humidity": 5.0},
                         "prohibited": ["photoperiod", "stage_transition"]})
    assert r.status_code == 200
    # raising the level triggers a scan, which applies the pending
    # pattern under the rails that exist at application time
    assert client.put("/zones/z1/autonomy-level",
                      json={"level": "L3"}).status_code == 200
    log = client.get("/zones/z1/action-log").json()["entries"]
    assert len(log) == 1
    entry = log[0]
    assert entry["origin"] == "l3-auto"
    recipe = idle.runtime.engine.recipe_targets["t_night"]
    assert entry["new_value"] == pytest.approx(recipe - 0.25)


# --- undo -----------------------------------------------------------------

def test_undo_latest_only(client, idle):
    idle._scan_now()
    (rec_id,) = list(idle.runtime.engine.inbox)
    action = client.post(f"/zones/z1/recommendations/{rec_id}",
                         json={"decision": "accept"}).json()["action"]
    r = client.post("/zones/z1/undo", json={"entry_id": action["id"]})
    assert r.status_code == 200
    inverse = r.json()["action"]
    assert inverse["undo_of"] == action["id"]
    assert inverse["new_value"] == pytest.approx(action["old_value"])
    assert idle.runtime.engine.current["t_night"] == pytest.approx(
        action["old_value"])
    # the inverse superseded the original on that parameter
    assert client.post("/zones/z1/undo",
                       json={"entry_id": action["id"]}).status_code == 409
    assert client.post("/zones/z1/undo",
                       json={"entry_id": "act-9999"}).status_code == 404
    assert client.post("/zones/z1/undo",
                       json={"entry_id": 7}).status_code == 422


# --- operator corrections ---------------------------------------------------

def test_correction_applies_within_envelope(client, idle):
    r = client.post("/zones/z1/corrections",
                    json={"parameter": "t_day", "delta": -0.5,
                          "reason": "canopy wilt"})
    assert r.status_code == 200
    action = r.json()["action"]
    assert action["origin"] == "operator"
    assert action["reason"] == "canopy wilt"
    recipe = idle.runtime.engine.recipe_targets["t_day"]
    assert action["new_value"] == pytest.approx(recipe - 0.5)
    # a second push in the same direction saturates at the envelope
    r = client.post("/zones/z1/corrections",
                    json={"parameter": "t_day", "delta": -9.0})
    assert r.json()["action"]["new_value"] == pytest.approx(recipe - 2.0)


def test_correction_rejections(client, idle):
    assert client.post("/zones/z1/corrections",
                       json={"parameter": "photoperiod_h", "delta": 1.0}
                       ).status_code == 409
    assert client.post("/zones/z1/corrections",
                       json={"parameter": "lunar_phase", "delta": 1.0}
                       ).status_code == 409
    assert client.post("/zones/z1/corrections",
                       json={"delta": 1.0}).status_code == 422
    assert client.post("/zones/z1/corrections",
                       json={"parameter": "t_day", "delta": "big"}
                       ).status_code == 422
    assert idle.runtime.engine.log == []


# --- timeseries ------------------------------------------------------------

def test_timeseries_endpoint(tmp_path):
    store = TelemetryStore(str(tmp_path))
    store.record("z1.t_air.fused",
                 [(float(t), 20.0 + 0.1 * t) for t in range(31)])
    fac = Facility("step_disturbance", hours=1, store=store)
    c = TestClient(create_app(fac))
    r = c.get("/zones/z1/timeseries",
              params={"series": "z1.t_air.fused", "start": 0, "end": 3600})
    assert r.status_code == 200
    body = r.json()
    assert body["series"] == "z1.t_air.fused"
    assert len(body["points"]) == 3
    assert body["points"][0]["quality"] == "ok"

    coarse = c.get("/zones/z1/timeseries",
                   params={"series": "z1.t_air.fused", "start": 0,
                           "end": 3600, "resolution": 30}).json()
    assert len(coarse["points"]) == 1
    assert c.get("/zones/z1/timeseries",
                 params={"series": "z9.nope", "start": 0}).status_code == 404
    assert c.get("/zones/z1/timeseries",
                 params={"series": "z1.t_air.fused", "start": 50,
                         "end": 10}).status_code == 422


def test_timeseries_without_store_is_404(client):
    assert client.get("/zones/z1/timeseries",
                      params={"series": "z1.t_air.fused"}).status_code == 404


# --- twin runs ---------------------------------------------------------------

def test_twin_run_detached_from_live_state(client, idle):
    t_before = idle.runtime.t
    r = client.post("/twin-run", json={"hours": 1, "seed": 3})
    assert r.status_code == 200
    report = r.json()
    assert report["scenario"] == "step_disturbance"
    assert report["hours"] == pytest.approx(1.0)
    assert report["total_kwh"] > 0
    assert idle.runtime.t == t_before
    assert idle.runtime.engine.log == []


def test_twin_run_validation(client):
    assert client.post("/twin-run",
                       json={"recipe": {"name": "x", "stages": []}}
                       ).status_code == 422
    assert client.post("/twin-run",
                       json={"scenario": "atlantis"}).status_code == 404


# --- snapshot stream ---------------------------------------------------------

def test_stream_sends_snapshot_events(client):
    with client.stream("GET", "/zones/z1/stream") as r:
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("text/event-stream")
        payload = b"".join(r.iter_raw()).decode()
    events = [json.loads(chunk[len("data:"):])
              for chunk in payload.strip().split("\n\n")]
    # not running: one event, then the stream closes
    assert len(events) == 1
    assert events[0]["zone"] == "z1"
    assert "t_air" in events[0]


# --- command queue bounds ------------------------------------------------

def test_full_queue_drops_commands(idle):
    block = threading.Event()
    worker = threading.Thread(target=block.wait, daemon=True)
    worker.start()
    idle._thread = worker    # alive, but never drains the queue
    try:
        for i in range(COMMAND_QUEUE_MAX):
            idle.commands.put_nowait(_Command(f"junk-{i}", lambda: None))
        client = TestClient(create_app(idle))
        r = client.post("/zones/z1/corrections",
                        json={"parameter": "t_day", "delta": 0.1})
        assert r.status_code == 503
        assert idle.dropped_commands == 1
        assert idle.runtime.engine.log == []

        # with room in the queue but nobody draining, submit times out
        idle.commands.get_nowait()
        with pytest.raises(TimeoutError):
            idle.submit("probe", lambda: None, timeout=0.05)
    finally:
        block.set()


# --- live control thread ------------------------------------------------

def test_live_guardrail_edit_governs_next_autonomous_action():
    fac = Facility("desert", config=LoopConfig(autonomy_level=2),
                   pattern_history=overshoot_history(), hours=24,
                   pace=1800.0)
    client = TestClient(create_app(fac))
    fac.start()
    try:
        deadline = time.monotonic() + 30.0
        while time.monotonic() < deadline:
            if client.get("/zones/z1/state").status_code == 200:
                break
            time.sleep(0.05)
        assert fac.running

        r = client.put("/zones/z1/guardrails",
                       json={"allowed": {"temperature": 0.5,
                                         "humidity": 5.0},
                             "prohibited": ["photoperiod",
                                            "stage_transition"]})
        assert r.status_code == 200
        assert client.put("/zones/z1/autonomy-level",
                          json={"level": "L3"}).status_code == 200
        log = client.get("/zones/z1/action-log").json()["entries"]
        assert len(log) >= 1
        entry = log[0]
        assert entry["origin"] == "l3-auto"
        recipe = fac.runtime.engine.recipe_targets["t_night"]
        assert entry["new_value"] == pytest.approx(recipe - 0.5)

        snap = client.get("/zones/z1/state").json()
        assert snap["running"] is True
        assert snap["autonomy_level"] in ("L2", "L3")
    finally:
        fac.stop()
    assert not fac.running


def test_report_matches_console_free_run():
    # a facility nobody talks to must reproduce the plain batch run
    fac = Facility("step_disturbance", seed=7, hours=3)
    fac.start()
    fac.join(120.0)
    batch = run_scenario("step_disturbance", seed=7, hours=3)
    assert fac.report().to_json() == batch.to_json()
