"""Time-series persistence and transfer bundles.

Storage layout under one root directory:

    series/<quoted-series-id>/segment-00000.log   append-only text,
                                                  one "ts value quality"
                                                  line per 10 s point
    events.jsonl                                  append-only event log
    config.json                                   small key/value store

1 Hz samples are aggregated into 10 s windows (arithmetic mean, worst
quality wins) before hitting disk. Nothing ever rewrites a persisted
line, so history is replayable byte for byte.

A transfer bundle is one JSON document: {"schema": N, "payload": {...},
"checksum": sha256 hex of the canonical payload encoding}, where the
canonical encoding is json.dumps(payload, sort_keys=True,
separators=(",", ":")) in UTF-8. Any bit flip changes the checksum or
breaks the JSON and is rejected on load.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from urllib.parse import quote, unquote

WINDOW_S = 10.0
_SEGMENT_POINTS = 5000
_QUALITY_RANK = {"ok": 0, "suspect": 1, "excluded": 2}

BUNDLE_SCHEMA = 1


class TelemetryError(ValueError):
    pass


class BundleError(ValueError):
    """Transfer bundle unreadable: bad JSON, schema, or checksum."""


@dataclass(frozen=True)
class Point:
    series: str
    timestamp: float
    value: float
    quality: str = "ok"


def series_id(zone: str, parameter: str, sensor: str = "fused") -> str:
    return f"{zone}.{parameter}.{sensor}"


def _worst(a: str, b: str) -> str:
    return a if _QUALITY_RANK.get(a, 0) >= _QUALITY_RANK.get(b, 0) else b


class TelemetryStore:
    """Append-only store for one facility. Single writer per series."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(os.path.join(root, "series"), exist_ok=True)
        self._points: dict[str, list[Point]] = {}
        self._partial: dict[str, tuple[float, list[float], str]] = {}
        self._last_ts: dict[str, float] = {}
        self._open_segments: dict[str, tuple[str, int]] = {}
        self._load()

    # --- recording ---------------------------------------------------

    def record(self, series: str, samples) -> list[Point]:
        """Aggregate 1 Hz samples into 10 s mean points and persist them.

        Returns the points persisted by this call. The trailing partial
        window stays buffered until a later sample or flush() closes it.
        """
        persisted = []
        for sample in samples:
            ts, value = sample[0], sample[1]
            quality = sample[2] if len(sample) > 2 else "ok"
            last = self._last_ts.get(series)
            if last is not None and ts <= last:
                raise TelemetryError(
                    f"out-of-order sample for {series}: {ts} after {last}")
            self._last_ts[series] = ts

            window = math.floor(ts / WINDOW_S) * WINDOW_S
            partial = self._partial.get(series)
            if partial is not None and partial[0] != window:
                persisted.append(self._close_window(series))
                partial = None
            if partial is None:
                self._partial[series] = (window, [float(value)], quality)
            else:
                partial[1].append(float(value))
                self._partial[series] = (partial[0], partial[1],
                                         _worst(partial[2], quality))
        return persisted

    def flush(self, series: str | None = None) -> list[Point]:
        """Force-close trailing partial windows (end of run)."""
        keys = [series] if series is not None else list(self._partial)
        return [self._close_window(k) for k in keys if k in self._partial]

    def _close_window(self, series: str) -> Point:
        window, values, quality = self._partial.pop(series)
        point = Point(series, window, sum(values) / len(values), quality)
        self._points.setdefault(series, []).append(point)
        self._append_to_disk(point)
        return point

    def _append_to_disk(self, point: Point) -> None:
        series_dir = os.path.join(self.root, "series",
                                  quote(point.series, safe=""))
        os.makedirs(series_dir, exist_ok=True)
        path, count = self._open_segments.get(point.series, (None, 0))
        if path is None or count >= _SEGMENT_POINTS:
            existing = sorted(os.listdir(series_dir))
            path = os.path.join(series_dir,
                                f"segment-{len(existing):05d}.log")
            count = 0
        with open(path, "a") as f:
            f.write(f"{point.timestamp!r} {point.value!r} {point.quality}\n")
        self._open_segments[point.series] = (path, count + 1)

    def _load(self) -> None:
        base = os.path.join(self.root, "series")
        for name in sorted(os.listdir(base)):
            series = unquote(name)
            points = []
            series_dir = os.path.join(base, name)
            for seg in sorted(os.listdir(series_dir)):
                with open(os.path.join(series_dir, seg)) as f:
                    for line in f:
                        ts, value, quality = line.split()
                        points.append(Point(series, float(ts), float(value),
                                            quality))
            if points:
                self._points[series] = points
                self._last_ts[series] = points[-1].timestamp + WINDOW_S - 1.0

    # --- querying ----------------------------------------------------

    def series(self) -> list[str]:
        return sorted(self._points)

    def query(self, series: str, t0: float, t1: float,
              resolution: float | None = None) -> list[Point]:
        """Stored points with t0 <= ts < t1, optionally mean-aggregated
        to a coarser resolution. Gaps stay gaps."""
        if series not in self._points:
            raise KeyError(f"unknown series {series!r}")
        if t1 < t0:
            raise TelemetryError("query range is inverted")
        rows = [p for p in self._points[series] if t0 <= p.timestamp < t1]
        if resolution is None or resolution <= WINDOW_S:
            return rows
        bins: dict[float, tuple[list[float], str]] = {}
        for p in rows:
            b = math.floor(p.timestamp / resolution) * resolution
            if b in bins:
                bins[b][0].append(p.value)
                bins[b] = (bins[b][0], _worst(bins[b][1], p.quality))
            else:
                bins[b] = ([p.value], p.quality)
        return [Point(series, b, sum(vals) / len(vals), q)
                for b, (vals, q) in sorted(bins.items())]

    # --- events and config -------------------------------------------

    def append_event(self, kind: str, payload: dict,
                     timestamp: float | None = None) -> dict:
        event = {"kind": kind,
                 "timestamp": time.time() if timestamp is None else timestamp,
                 **payload}
        with open(os.path.join(self.root, "events.jsonl"), "a") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")
        return event

    def events(self, kind: str | None = None) -> list[dict]:
        path = os.path.join(self.root, "events.jsonl")
        if not os.path.exists(path):
            return []
        out = []
        with open(path) as f:
            for line in f:
                event = json.loads(line)
                if kind is None or event.get("kind") == kind:
                    out.append(event)
        return out

    def set_config(self, key: str, value) -> None:
        path = os.path.join(self.root, "config.json")
        doc = {}
        if os.path.exists(path):
            with open(path) as f:
                doc = json.load(f)
        doc[key] = value
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)

    def get_config(self, key: str, default=None):
        path = os.path.join(self.root, "config.json")
        if not os.path.exists(path):
            return default
        with open(path) as f:
            return json.load(f).get(key, default)


# --- transfer bundles -------------------------------------------------

@dataclass(frozen=True)
class TransferBundle:
    """Learned state worth carrying to a new facility."""

    gains: dict              # equipment model key -> GainSet fields
    tuner_weights: dict      # equipment model key -> weight snapshot
    vpd_trajectories: dict   # crop -> stage -> targets
    baselines: dict          # parameter -> hourly baseline values
    alpha_sets: dict         # named energy-cost coefficient sets
    facility_hash: str
    exported_at: float
    schema: int = BUNDLE_SCHEMA

    def payload(self) -> dict:
        return {
            "gains": self.gains,
            "tuner_weights": self.tuner_weights,
            "vpd_trajectories": self.vpd_trajectories,
            "baselines": self.baselines,
            "alpha_sets": self.alpha_sets,
            "facility_hash": self.facility_hash,
            "exported_at": self.exported_at,
        }


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def export_bundle(facility_id: str, gains: dict, tuner_weights: dict,
                  vpd_trajectories: dict | None = None,
                  baselines: dict | None = None,
                  alpha_sets: dict | None = None,
                  exported_at: float | None = None) -> TransferBundle:
    return TransferBundle(
        gains=gains, tuner_weights=tuner_weights,
        vpd_trajectories=vpd_trajectories or {},
        baselines=baselines or {}, alpha_sets=alpha_sets or {},
        facility_hash=hashlib.sha256(facility_id.encode()).hexdigest()[:16],
        exported_at=time.time() if exported_at is None else exported_at)


def save_bundle(bundle: TransferBundle, path: str) -> None:
    payload = bundle.payload()
    doc = {"schema": bundle.schema,
           "payload": payload,
           "checksum": hashlib.sha256(_canonical(payload)).hexdigest()}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_bundle(path: str) -> TransferBundle:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BundleError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != BUNDLE_SCHEMA:
        raise BundleError(f"unsupported bundle schema {doc.get('schema')!r}")
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise BundleError("bundle has no payload")
    digest = hashlib.sha256(_canonical(payload)).hexdigest()
    if digest != doc.get("checksum"):
        raise BundleError("bundle checksum mismatch")
    return TransferBundle(
        gains=payload.get("gains", {}),
        tuner_weights=payload.get("tuner_weights", {}),
        vpd_trajectories=payload.get("vpd_trajectories", {}),
        baselines=payload.get("baselines", {}),
        alpha_sets=payload.get("alpha_sets", {}),
        facility_hash=payload.get("facility_hash", ""),
        exported_at=payload.get("exported_at", 0.0))


def match_bundle(bundle: TransferBundle, equipment_keys: list[str]
                 ) -> tuple[dict, list[str]]:
    """Pick the bundle entries this facility can use.

    Returns ({key: {"gains":..., "tuner_weights":...}}, warnings). Keys
    in the bundle with no local equipment match are skipped with a
    warning, as are local keys the bundle does not cover.
    """
    matched = {}
    warnings = []
    for key in equipment_keys:
        entry = {}
        if key in bundle.gains:
            entry["gains"] = bundle.gains[key]
        if key in bundle.tuner_weights:
            entry["tuner_weights"] = bundle.tuner_weights[key]
        if entry:
            matched[key] = entry
        else:
            warnings.append(f"no bundle entry for equipment {key!r}; "
                            f"cold start")
    for key in set(bundle.gains) | set(bundle.tuner_weights):
        if key not in equipment_keys:
            warnings.append(f"bundle entry {key!r} matches no local "
                            f"equipment; ignored")
    return matched, warnings
