"""Telemetry store aggregation/persistence and transfer bundles."""

import json
import random

import pytest

from greenloop.telemetry import (
    BundleError, TelemetryError, TelemetryStore, export_bundle, load_bundle,
    match_bundle, save_bundle, series_id)


def _samples(t0, values, quality="ok"):
    return [(t0 + i, v, quality) for i, v in enumerate(values)]


def test_ten_samples_one_window(tmp_path):
    store = TelemetryStore(str(tmp_path))
    sid = series_id("z1", "t_air")
    pts = store.record(sid, _samples(0.0, [21.5] * 10))
    pts += store.record(sid, _samples(10.0, [22.0]))
    assert len(pts) == 1
    assert pts[0].timestamp == 0.0
    assert pts[0].value == 21.5
    assert pts[0].quality == "ok"


def test_window_mean(tmp_path):
    store = TelemetryStore(str(tmp_path))
    store.record("s", _samples(0.0, [float(v) for v in range(1, 11)]))
    pts = store.flush("s")
    assert pts[0].value == pytest.approx(5.5)


def test_worst_quality_wins(tmp_path):
    store = TelemetryStore(str(tmp_path))
    samples = _samples(0.0, [20.0] * 10)
    samples[3] = (3.0, 20.0, "suspect")
    store.record("s", samples)
    (pt,) = store.flush("s")
    assert pt.quality == "suspect"


def test_out_of_order_rejected(tmp_path):
    store = TelemetryStore(str(tmp_path))
    store.record("s", [(5.0, 1.0)])
    with pytest.raises(TelemetryError, match="out-of-order"):
        store.record("s", [(5.0, 1.0)])
    with pytest.raises(TelemetryError, match="out-of-order"):
        store.record("s", [(4.0, 1.0)])
    # other series unaffected
    store.record("other", [(1.0, 1.0)])


def test_round_trip_exact(tmp_path):
    store = TelemetryStore(str(tmp_path))
    rng = random.Random(3)
    values = [20.0 + rng.uniform(-1, 1) for _ in range(600)]
    store.record("s", _samples(0.0, values))
    store.flush()
    pts = store.query("s", 0.0, 600.0)
    assert len(pts) == 60
    for i, p in enumerate(pts):
        window = values[i * 10:(i + 1) * 10]
        assert p.value == pytest.approx(sum(window) / 10, abs=1e-12)
        assert p.timestamp == i * 10.0


def test_reaggregation_means_of_means(tmp_path):
    store = TelemetryStore(str(tmp_path))
    rng = random.Random(4)
    store.record("s", _samples(0.0, [rng.uniform(0, 5) for _ in range(360)]))
    store.flush()
    fine = store.query("s", 0.0, 360.0)
    coarse = store.query("s", 0.0, 360.0, resolution=60.0)
    assert len(coarse) == 6
    for j, p in enumerate(coarse):
        group = fine[j * 6:(j + 1) * 6]
        assert p.value == pytest.approx(
            sum(q.value for q in group) / 6, abs=1e-12)


def test_query_edges(tmp_path):
    store = TelemetryStore(str(tmp_path))
    store.record("s", _samples(0.0, [1.0] * 30))
    store.flush()
    assert store.query("s", 100.0, 200.0) == []
    assert [p.timestamp for p in store.query("s", 0.0, 20.0)] == [0.0, 10.0]
    with pytest.raises(KeyError):
        store.query("nope", 0.0, 10.0)
    with pytest.raises(TelemetryError):
        store.query("s", 10.0, 0.0)


def test_reopen_replays_identically(tmp_path):
    store = TelemetryStore(str(tmp_path))
    rng = random.Random(5)
    for sid in ("z1.t_air.fused", "z1.rh.fused"):
        store.record(sid, _samples(0.0, [rng.uniform(10, 30)
                                         for _ in range(300)]))
    store.flush()
    store.append_event("flag", {"sensor": "a"}, timestamp=50.0)
    before = {sid: store.query(sid, 0.0, 300.0) for sid in store.series()}

    reopened = TelemetryStore(str(tmp_path))
    assert reopened.series() == store.series()
    for sid, pts in before.items():
        assert reopened.query(sid, 0.0, 300.0) == pts
    assert reopened.events("flag")[0]["sensor"] == "a"
    # appends continue after the last persisted window
    with pytest.raises(TelemetryError):
        reopened.record("z1.rh.fused", [(290.0, 1.0)])
    reopened.record("z1.rh.fused", [(300.0, 1.0)])


def test_segment_files_are_append_only(tmp_path):
    store = TelemetryStore(str(tmp_path))
    store.record("s", _samples(0.0, [1.0] * 20))
    seg_dir = tmp_path / "series" / "s"
    first = (seg_dir / sorted(p.name for p in seg_dir.iterdir())[0]).read_text()
    store.record("s", _samples(20.0, [2.0] * 20))
    store.flush()
    again = (seg_dir / sorted(p.name for p in seg_dir.iterdir())[0]).read_text()
    assert again.startswith(first)


def test_config_store(tmp_path):
    store = TelemetryStore(str(tmp_path))
    assert store.get_config("autonomy_level", 1) == 1
    store.set_config("autonomy_level", 3)
    assert TelemetryStore(str(tmp_path)).get_config("autonomy_level") == 3


def _demo_bundle():
    return export_bundle(
        "facility-a",
        gains={"heater-15kw": {"kp": 1.2, "ki": 0.05, "kd": 4.0},
               "cooler-20kw": {"kp": 0.8, "ki": 0.03, "kd": 2.5}},
        tuner_weights={"heater-15kw": {"w1": [[0.1] * 7] * 3,
                                       "b1": [0.0, 0.0, 0.0],
                                       "w2": [[0.2] * 3] * 3,
                                       "b2": [0.0, 0.0, 0.0],
                                       "eta": 0.01,
                                       "deviation_scale": 1.0}},
        vpd_trajectories={"leafy-green": {"veg": {"day": 0.9, "night": 0.7}}},
        baselines={"t_air": [21.0] * 24},
        alpha_sets={"balanced": {"heater": 1.0, "cooler": 1.0}},
        exported_at=1700000000.0)


def test_bundle_round_trip(tmp_path):
    bundle = _demo_bundle()
    path = str(tmp_path / "bundle.json")
    save_bundle(bundle, path)
    loaded = load_bundle(path)
    assert loaded == bundle
    # human-inspectable: plain JSON with the payload visible
    doc = json.loads(open(path).read())
    assert doc["payload"]["gains"]["heater-15kw"]["kp"] == 1.2


def test_bundle_matching(tmp_path):
    bundle = _demo_bundle()
    matched, warnings = match_bundle(
        bundle, ["heater-15kw", "dehum-4lph"])
    assert set(matched) == {"heater-15kw"}
    assert "gains" in matched["heater-15kw"]
    assert "tuner_weights" in matched["heater-15kw"]
    assert any("dehum-4lph" in w for w in warnings)
    assert any("cooler-20kw" in w for w in warnings)

    matched, warnings = match_bundle(bundle, ["nothing-here"])
    assert matched == {}
    assert len(warnings) == 3


def test_bundle_schema_rejected(tmp_path):
    path = str(tmp_path / "bundle.json")
    save_bundle(_demo_bundle(), path)
    doc = json.loads(open(path).read())
    doc["schema"] = 99
    open(path, "w").write(json.dumps(doc))
    with pytest.raises(BundleError, match="schema"):
        load_bundle(path)


def test_bundle_truncation_rejected(tmp_path):
    path = str(tmp_path / "bundle.json")
    save_bundle(_demo_bundle(), path)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:len(raw) // 2])
    with pytest.raises(BundleError):
        load_bundle(path)


def test_bundle_detects_single_bit_flips(tmp_path):
    path = str(tmp_path / "bundle.json")
    save_bundle(_demo_bundle(), path)
    raw = open(path, "rb").read()
    rng = random.Random(99)
    corrupt = str(tmp_path / "corrupt.json")
    for _ in range(50):
        data = bytearray(raw)
        i = rng.randrange(len(data))
        data[i] ^= 1 << rng.randrange(8)
        if bytes(data) == raw:
            continue
        open(corrupt, "wb").write(bytes(data))
        try:
            loaded = load_bundle(corrupt)
        except BundleError:
            continue
        # a flip inside JSON whitespace or key ordering cannot survive
        # canonicalisation unnoticed unless the decoded payload is
        # genuinely unchanged
        assert loaded == load_bundle(path)
