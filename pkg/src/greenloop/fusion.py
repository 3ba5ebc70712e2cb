"""Multi-sensor aggregation for one zone.

Co-located sensors are fused by median after a leave-one-out robust
z-score weeds out outliers. A stateful wrapper keeps excluded sensors
out of the control signal until they have behaved for a while.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

QUALITY_OK = "ok"
QUALITY_SUSPECT = "suspect"
QUALITY_EXCLUDED = "excluded"

# guards the MAD denominator when peers agree exactly
_EPS = 1e-6
_MAD_SCALE = 1.4826


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    kind: str
    value: float
    timestamp: float
    quality: str = QUALITY_OK


@dataclass(frozen=True)
class FusionResult:
    value: float
    contributing: tuple[str, ...]
    flagged: tuple[str, ...]


@dataclass(frozen=True)
class FlagEvent:
    sensor_id: str
    kind: str
    action: str  # "excluded" or "reinstated"
    timestamp: float
    score: float


def _robust_score(value: float, peers: list[float]) -> float:
    med = statistics.median(peers)
    mad = statistics.median(abs(p - med) for p in peers)
    return abs(value - med) / (_MAD_SCALE * mad + _EPS)


def _check_kinds(readings) -> None:
    if not readings:
        raise ValueError("no readings to fuse")
    kinds = {r.kind for r in readings}
    if len(kinds) > 1:
        raise ValueError(f"mixed parameter kinds: {sorted(kinds)}")


def fuse(readings: list[SensorReading], z_threshold: float = 2.5,
         disagreement_band: float = 1.0) -> FusionResult:
    """Fuse one window of co-located readings of the same parameter.

    Three or more sensors: leave-one-out robust z against the peers;
    scores above the threshold are flagged and excluded, the rest are
    fused by median. Two sensors cannot attribute blame: they fuse to
    the mean and are both marked when they disagree beyond the band.
    One sensor passes through.
    """
    _check_kinds(readings)
    if len(readings) == 1:
        r = readings[0]
        return FusionResult(r.value, (r.sensor_id,), ())
    if len(readings) == 2:
        a, b = readings
        mean = 0.5 * (a.value + b.value)
        flagged = ()
        if abs(a.value - b.value) > disagreement_band:
            flagged = (a.sensor_id, b.sensor_id)
        return FusionResult(mean, (a.sensor_id, b.sensor_id), flagged)

    flagged = []
    survivors = []
    for i, r in enumerate(readings):
        peers = [p.value for j, p in enumerate(readings) if j != i]
        if _robust_score(r.value, peers) > z_threshold:
            flagged.append(r)
        else:
            survivors.append(r)
    if not survivors:
        # pathological mutual disagreement: nothing can be attributed,
        # fall back to the plain median with everything flagged
        return FusionResult(statistics.median(r.value for r in readings),
                            (), tuple(r.sensor_id for r in readings))
    return FusionResult(statistics.median(r.value for r in survivors),
                        tuple(r.sensor_id for r in survivors),
                        tuple(r.sensor_id for r in flagged))


class ZoneFusion:
    """Per-zone fusion with exclusion memory.

    A sensor flagged by fuse() stops contributing immediately. While
    excluded it keeps being scored against the surviving consensus and
    re-enters only after a full hour of scores below the re-entry bar.
    """

    def __init__(self, z_threshold: float = 2.5,
                 disagreement_band: float = 1.0,
                 reentry_after_s: float = 3600.0,
                 reentry_score: float = 1.0):
        self.z_threshold = z_threshold
        self.disagreement_band = disagreement_band
        self.reentry_after_s = reentry_after_s
        self.reentry_score = reentry_score
        self._excluded: dict[str, float | None] = {}  # id -> calm since
        self._last_ts: dict[str, float] = {}

    def excluded_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._excluded))

    def step(self, readings: list[SensorReading]
             ) -> tuple[FusionResult, list[FlagEvent]]:
        _check_kinds(readings)
        for r in readings:
            last = self._last_ts.get(r.sensor_id)
            if last is not None and r.timestamp < last:
                raise ValueError(
                    f"timestamp went backwards for {r.sensor_id}")
            self._last_ts[r.sensor_id] = r.timestamp

        now = max(r.timestamp for r in readings)
        kind = readings[0].kind
        active = [r for r in readings if r.sensor_id not in self._excluded]
        benched = [r for r in readings if r.sensor_id in self._excluded]

        result = fuse(active, self.z_threshold,
                      self.disagreement_band) if active else fuse(readings)
        events = []
        if len(active) >= 3:
            for r in active:
                if r.sensor_id in result.flagged:
                    self._excluded[r.sensor_id] = None
                    peers = [p.value for p in active if p is not r]
                    events.append(FlagEvent(r.sensor_id, kind, "excluded",
                                            now, _robust_score(r.value, peers)))

        consensus = [r.value for r in active
                     if r.sensor_id in result.contributing]
        for r in benched:
            score = (_robust_score(r.value, consensus)
                     if consensus else float("inf"))
            calm_since = self._excluded[r.sensor_id]
            if score < self.reentry_score:
                if calm_since is None:
                    self._excluded[r.sensor_id] = r.timestamp
                elif r.timestamp - calm_since >= self.reentry_after_s:
                    del self._excluded[r.sensor_id]
                    events.append(FlagEvent(r.sensor_id, kind, "reinstated",
                                            now, score))
            else:
                self._excluded[r.sensor_id] = None
        return result, events
