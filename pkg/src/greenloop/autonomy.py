"""Progressive autonomy: watch, suggest, act within bounds, optimize.

The ladder has four rungs. L1 only raises alerts from anomaly
detection. L2 adds parameter-change recommendations with a confidence
score; the operator decides. L3 applies bounded corrections itself,
clamped to operator guardrails, every action logged and undoable. L4
unlocks whole-plan moves (load shifting, twin-run recipe trials) and is
gated on three documented grow cycles.

Everything an autonomous action touches flows through one audit log;
replaying the log from the initial values reconstructs current state
exactly, which the tests treat as an invariant.
"""

from __future__ import annotations

import enum
import math
import statistics
from collections import deque
from dataclasses import dataclass, field, replace

_MAD_SCALE = 1.4826
_EPS = 1e-6

PROHIBITED_REASON = "prohibited at L3"


class AutonomyLevel(enum.IntEnum):
    L1 = 1   # observe: anomaly alerts only
    L2 = 2   # recommend: operator decides
    L3 = 3   # act within guardrails, logged
    L4 = 4   # full optimization, gated on track record


class NotLatest(ValueError):
    """Undo target has been superseded by a newer action on its parameter."""


# --- guardrails --------------------------------------------------------

@dataclass
class Guardrails:
    """Operator-set envelope for autonomous corrections.

    allowed maps a parameter class to the largest |delta| from the
    recipe value the engine may apply on its own. prohibited classes
    can never be touched autonomously.
    """

    allowed: dict[str, float]
    prohibited: frozenset[str] = frozenset()

    def __post_init__(self):
        self.prohibited = frozenset(self.prohibited)
        for cls, delta in self.allowed.items():
            if delta < 0:
                raise ValueError(f"negative envelope for {cls!r}")
            if cls in self.prohibited:
                raise ValueError(f"{cls!r} is both allowed and prohibited")


def default_guardrails() -> Guardrails:
    return Guardrails(
        allowed={"temperature": 2.0, "humidity": 5.0,
                 "irrigation_volume": 20.0, "ec": 0.3},
        prohibited=frozenset({"photoperiod", "stage_transition"}))


_CLASS_PREFIXES = (
    ("photoperiod", "photoperiod"),
    ("stage", "stage_transition"),
    ("t_", "temperature"),
    ("temperature", "temperature"),
    ("rh", "humidity"),
    ("humidity", "humidity"),
    ("irrigation", "irrigation_volume"),
    ("ec", "ec"),
)


def guardrail_class(parameter: str) -> str | None:
    for prefix, cls in _CLASS_PREFIXES:
        if parameter.startswith(prefix):
            return cls
    return None


# --- audit log ---------------------------------------------------------

@dataclass(frozen=True)
class ActionLogEntry:
    id: str
    timestamp: float
    parameter: str
    old_value: float
    new_value: float
    reason: str
    confidence: float | None
    origin: str                 # l3-auto | operator | undo
    undo_of: str | None = None


@dataclass(frozen=True)
class Rejected:
    reason: str


def replay_log(initial: dict, log) -> dict:
    """Event-source the parameter values back from the audit log."""
    values = dict(initial)
    for entry in log:
        values[entry.parameter] = entry.new_value
    return values


# --- anomaly detection -------------------------------------------------

@dataclass(frozen=True)
class AnomalyEvent:
    category: str               # sensor_drift | equipment_degradation | environmental
    zone: str
    severity: float             # 0..1
    window: tuple[float, float]  # evidence interval, seconds
    description: str


@dataclass(frozen=True)
class ActiveFlag:
    sensor_id: str
    flagged_since_s: float


@dataclass(frozen=True)
class TelemetryWindow:
    """One detection pass worth of evidence, assembled by the caller."""

    zone: str
    now_s: float
    hour_of_day: int
    hourly: dict[str, float] = field(default_factory=dict)
    achievement: dict[str, list[tuple[float, float]]] = field(
        default_factory=dict)   # loop -> [(day, seconds to reach band)]
    flags: tuple[ActiveFlag, ...] = ()


class RollingBaseline:
    """Same-hour history of hourly aggregates over a trailing window.

    Warms up silently: scoring starts only once a series has a full
    day of aggregates, and a given hour slot needs two samples before
    it has any notion of spread.
    """

    def __init__(self, window_days: int = 14):
        self.window_days = window_days
        self._slots: dict[str, dict[int, deque]] = {}
        self._count: dict[str, int] = {}

    def add(self, series: str, hour_of_day: int, value: float) -> None:
        slots = self._slots.setdefault(series, {})
        slot = slots.setdefault(int(hour_of_day) % 24,
                                deque(maxlen=self.window_days))
        slot.append(float(value))
        self._count[series] = self._count.get(series, 0) + 1

    def ready(self, series: str) -> bool:
        return self._count.get(series, 0) >= 24

    def score(self, series: str, hour_of_day: int,
              value: float) -> float | None:
        """Robust z of value against the same-hour history."""
        slot = self._slots.get(series, {}).get(int(hour_of_day) % 24)
        if not slot or len(slot) < 2:
            return None
        med = statistics.median(slot)
        mad = statistics.median(abs(v - med) for v in slot)
        return abs(value - med) / (_MAD_SCALE * mad + _EPS)

    def medians(self, series: str) -> list:
        slots = self._slots.get(series, {})
        return [statistics.median(slots[h]) if h in slots and slots[h]
                else None for h in range(24)]

    def export(self) -> dict:
        return {series: self.medians(series) for series in self._slots}

    def seed(self, series: str, medians, spread: float = 0.5) -> None:
        """Prime a series from another facility's hourly medians."""
        for hour, med in enumerate(medians):
            if med is None:
                continue
            # three synthetic samples give the slot a nonzero MAD so
            # imported baselines flag offsets instead of everything
            for v in (med - spread, med, med + spread):
                self.add(series, hour, float(v))


def _slope_stats(points) -> tuple[float, float]:
    """OLS slope and its standard error for (x, y) pairs."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    n = len(xs)
    slope, intercept = statistics.linear_regression(xs, ys)
    mean_x = sum(xs) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    residual = sum((y - (slope * x + intercept)) ** 2
                   for x, y in zip(xs, ys))
    if n <= 2 or sxx <= 0:
        return slope, math.inf
    return slope, math.sqrt(residual / (n - 2) / sxx)


def detect_anomalies(window: TelemetryWindow,
                     baselines: RollingBaseline,
                     z_threshold: float = 3.0,
                     drift_after_s: float = 3600.0) -> list[AnomalyEvent]:
    """Score one evidence window against learned baselines.

    Environmental: hourly aggregate vs the same-hour baseline, robust z
    above threshold. Equipment degradation: setpoint achievement time
    trending up over at least a week, slope more than twice its standard
    error. Sensor drift: fusion exclusions that have persisted.
    """
    events = []
    hour_span = (window.now_s - 3600.0, window.now_s)

    for series in sorted(window.hourly):
        if not baselines.ready(series):
            continue
        z = baselines.score(series, window.hour_of_day,
                            window.hourly[series])
        if z is not None and z > z_threshold:
            events.append(AnomalyEvent(
                "environmental", window.zone, min(1.0, z / 10.0), hour_span,
                f"{series} hourly mean {window.hourly[series]:.2f} sits "
                f"{z:.1f} robust sigmas from its {window.hour_of_day:02d}:00 "
                f"baseline"))

    for loop in sorted(window.achievement):
        history = window.achievement[loop]
        if len(history) < 5:
            continue
        span_days = max(p[0] for p in history) - min(p[0] for p in history)
        if span_days < 7.0:
            continue
        slope, se = _slope_stats(history)
        if slope > 0 and slope > 2.0 * se:
            events.append(AnomalyEvent(
                "equipment_degradation", window.zone,
                min(1.0, slope / (2.0 * se) / 10.0),
                (window.now_s - span_days * 86400.0, window.now_s),
                f"{loop} setpoint achievement time rising "
                f"{slope:.1f} s/day over {span_days:.0f} days"))

    for flag in window.flags:
        held = window.now_s - flag.flagged_since_s
        if held > drift_after_s:
            events.append(AnomalyEvent(
                "sensor_drift", window.zone, min(1.0, held / 86400.0),
                (flag.flagged_since_s, window.now_s),
                f"sensor {flag.sensor_id} excluded by fusion for "
                f"{held / 3600.0:.1f} h"))

    return events


# --- recommendations ---------------------------------------------------

@dataclass(frozen=True)
class Recommendation:
    id: str
    pattern: str
    parameter: str
    delta: float
    rationale: str
    confidence: float
    evidence_count: int
    state: str = "pending"      # -> accepted | dismissed | scheduled


@dataclass(frozen=True)
class PatternObservation:
    """One grow cycle exhibiting a named recurring pattern."""

    pattern: str
    cycle: int
    magnitude: float            # size of the deviation, positive


@dataclass(frozen=True)
class ConfidenceModel:
    """logistic(a*ln(1+evidence) + b*consistency - c), all configurable."""

    a: float = 0.55
    b: float = 1.1
    c: float = 1.6

    def confidence(self, evidence: int, consistency: float) -> float:
        x = (self.a * math.log1p(evidence)
             + self.b * consistency - self.c)
        return 1.0 / (1.0 + math.exp(-x))


# pattern class -> (target parameter, delta sign, rationale)
PATTERN_RULES = {
    "night_temp_overshoot": (
        "t_night", -1.0,
        "night air repeatedly runs above target, narrowing the day-night "
        "differential; lower the night temperature"),
    "night_temp_undershoot": (
        "t_night", 1.0,
        "night air repeatedly falls below target; raise the night "
        "temperature"),
    "day_temp_overshoot": (
        "t_day", -1.0,
        "afternoon air repeatedly overshoots; lower the day temperature"),
    "day_rh_sag": (
        "rh_day", 1.0,
        "afternoon humidity repeatedly sags, spiking vapor pressure "
        "deficit; raise the day humidity floor"),
}


def build_recommendations(history, total_cycles: int | None = None,
                          penalties: dict | None = None,
                          model: ConfidenceModel | None = None,
                          floor: float = 0.5,
                          start_index: int = 1) -> list[Recommendation]:
    """Turn recurring pattern observations into parameter proposals.

    Evidence count is the number of distinct supporting cycles;
    consistency is the share of observed cycles supporting the pattern.
    A class's accumulated dismissal penalty is subtracted from raw
    confidence, and proposals below the emission floor are withheld.
    """
    model = model or ConfidenceModel()
    penalties = penalties or {}
    grouped: dict[str, list[PatternObservation]] = {}
    for obs in history:
        if obs.pattern in PATTERN_RULES:
            grouped.setdefault(obs.pattern, []).append(obs)

    out = []
    index = start_index
    for pattern in sorted(grouped):
        observations = grouped[pattern]
        cycles = {obs.cycle for obs in observations}
        evidence = len(cycles)
        if total_cycles:
            consistency = min(1.0, evidence / total_cycles)
        else:
            consistency = 1.0
        raw = model.confidence(evidence, consistency)
        confidence = max(0.0, raw - penalties.get(pattern, 0.0))
        if confidence < floor:
            continue
        parameter, sign, text = PATTERN_RULES[pattern]
        magnitude = statistics.median(abs(obs.magnitude)
                                      for obs in observations)
        out.append(Recommendation(
            id=f"rec-{index:04d}", pattern=pattern, parameter=parameter,
            delta=round(sign * magnitude, 2),
            rationale=f"{text}; seen in {evidence} analogous cycles",
            confidence=round(confidence, 4), evidence_count=evidence))
        index += 1
    return out


# --- cycle history and the L4 gate ------------------------------------

@dataclass(frozen=True)
class CycleRecord:
    label: str
    completed: bool
    outcome: str | None = None


def l4_gate(history) -> bool:
    """Full autonomy needs three finished cycles with recorded outcomes."""
    documented = sum(1 for c in history if c.completed and c.outcome)
    return documented >= 3


# --- load shifting -----------------------------------------------------

def load_shift_plan(forecast, tariff, t_band: tuple[float, float],
                    guardrails: Guardrails) -> dict[int, float]:
    """Bounded pre-cooling ahead of a peak-tariff cooling peak.

    Returns {hour of day: temperature offset} lowering the comfort
    floor during cheap hours whose outdoor forecast is already below
    the band, so the envelope does the cooling and the afternoon
    compressor load starts from colder thermal mass. Empty whenever the
    tariff is flat, no forecast cooling demand lands in peak hours, or
    temperature moves are not allowed.
    """
    points = list(forecast)
    if not points or points[-1].t_s - points[0].t_s < 24 * 3600.0 - 1e-9:
        raise ValueError("load shifting needs at least a 24 h forecast")
    lo, hi = min(tariff), max(tariff)
    if hi - lo < 1e-9:
        return {}
    peak_hours = {h for h in range(24) if tariff[h] > lo + 0.5 * (hi - lo)}
    cheap_hours = {h for h in range(24) if tariff[h] <= lo + 1e-9}

    t_low, t_high = t_band
    demand: dict[int, float] = {}
    outdoor: dict[int, float] = {}
    for p in points:
        h = int(p.t_s // 3600.0) % 24
        demand[h] = max(demand.get(h, -math.inf), p.t_out - t_high)
        outdoor[h] = min(outdoor.get(h, math.inf), p.t_out)
    if not any(demand.get(h, 0.0) > 0.0 for h in peak_hours):
        return {}

    depth = guardrails.allowed.get("temperature", 0.0)
    if "temperature" in guardrails.prohibited or depth <= 0.0:
        return {}
    depth = min(depth, 2.0)
    # only hours where outdoor air can pull the zone down for free
    return {h: -depth for h in sorted(cheap_hours)
            if outdoor.get(h, math.inf) < t_low - depth / 2.0}


# --- twin runs ---------------------------------------------------------

def twin_run(recipe, scenario, seed: int = 0, hours: float | None = None):
    """Trial a recipe variant against recorded weather, offline.

    Replays the named (or given) scenario through the simulator under
    the variant recipe and returns the run report. Live state is never
    touched; same inputs and seed give an identical report.
    """
    from greenloop import plantsim, supervisor
    if isinstance(scenario, str):
        table = plantsim.builtin_scenarios()
        if scenario not in table:
            raise KeyError(f"unknown scenario {scenario!r}")
        scenario = table[scenario]
    return supervisor.run_scenario(scenario, recipe=recipe, seed=seed,
                                   hours=hours)


# --- the engine --------------------------------------------------------

class AutonomyEngine:
    """Single writer for one facility's autonomy state.

    Holds the level, guardrails, recipe reference values, current
    values, recommendation inbox, dismissal feedback, and the
    append-only action log.
    """

    def __init__(self, recipe_targets: dict, guardrails: Guardrails | None = None,
                 level: AutonomyLevel = AutonomyLevel.L1,
                 model: ConfidenceModel | None = None,
                 emission_floor: float = 0.5,
                 dismissal_step: float = 0.1):
        self.level = AutonomyLevel(level)
        self.guardrails = guardrails or default_guardrails()
        self.recipe_targets = dict(recipe_targets)
        self.current = dict(recipe_targets)
        self.model = model or ConfidenceModel()
        self.emission_floor = emission_floor
        self.dismissal_step = dismissal_step
        self.log: list[ActionLogEntry] = []
        self.inbox: dict[str, Recommendation] = {}
        self.dismissals: dict[str, int] = {}
        self.cycle_history: list[CycleRecord] = []
        self._rec_index = 1
        self._act_index = 1

    # --- level ---------------------------------------------------------

    def set_level(self, level) -> AutonomyLevel:
        level = AutonomyLevel(level)
        if level == AutonomyLevel.L4 and not l4_gate(self.cycle_history):
            raise ValueError(
                "full autonomy needs three completed cycles with "
                "documented outcomes")
        self.level = level
        return self.level

    def record_cycle(self, label: str, outcome: str | None = None,
                     completed: bool = True) -> CycleRecord:
        record = CycleRecord(label, completed, outcome)
        self.cycle_history.append(record)
        return record

    # --- recommendations ------------------------------------------------

    def penalties(self) -> dict[str, float]:
        return {p: n * self.dismissal_step
                for p, n in self.dismissals.items()}

    def thresholds(self) -> dict[str, float]:
        """Effective emission bar per pattern class."""
        bars = {p: self.emission_floor + pen
                for p, pen in self.penalties().items()}
        return bars

    def recommend(self, history, total_cycles: int | None = None
                  ) -> list[Recommendation]:
        if self.level < AutonomyLevel.L2:
            return []
        # dismissals re-emit (their penalty decides), everything else is
        # either awaiting a decision or already acted on: repeating it
        # would only nag the operator
        blocked = {r.pattern for r in self.inbox.values()
                   if r.state != "dismissed"}
        recs = [r for r in build_recommendations(
                    history, total_cycles, self.penalties(), self.model,
                    self.emission_floor, self._rec_index)
                if r.pattern not in blocked]
        for rec in recs:
            self.inbox[rec.id] = rec
        if recs:
            self._rec_index = int(recs[-1].id.split("-")[1]) + 1
        return recs

    def decide(self, rec_id: str, decision: str) -> Recommendation:
        if rec_id not in self.inbox:
            raise KeyError(f"unknown recommendation {rec_id!r}")
        if decision not in ("accepted", "dismissed", "scheduled"):
            raise ValueError(f"unknown decision {decision!r}")
        rec = self.inbox[rec_id]
        if rec.state != "pending":
            raise ValueError(f"{rec_id} already {rec.state}")
        rec = replace(rec, state=decision)
        self.inbox[rec_id] = rec
        if decision == "dismissed":
            self.dismissals[rec.pattern] = \
                self.dismissals.get(rec.pattern, 0) + 1
        return rec

    # --- bounded autonomous action ---------------------------------------

    def apply_l3(self, parameter: str, delta: float, reason: str = "",
                 confidence: float | None = None, origin: str = "l3-auto",
                 timestamp: float = 0.0) -> ActionLogEntry | Rejected:
        """Clamp-and-apply one setpoint correction, or reject it.

        Out-of-envelope proposals are clamped to the recipe envelope
        rather than refused, preserving the corrective intent; only
        prohibited or uncovered parameters are rejected outright.
        """
        if origin == "l3-auto" and self.level < AutonomyLevel.L3:
            return Rejected(f"autonomy level {self.level.name} does not "
                            f"permit autonomous changes")
        cls = guardrail_class(parameter)
        if cls in self.guardrails.prohibited:
            return Rejected(PROHIBITED_REASON)
        if cls is None or cls not in self.guardrails.allowed:
            return Rejected(f"no guardrail envelope covers {parameter!r}")
        if parameter not in self.recipe_targets:
            return Rejected(f"unknown parameter {parameter!r}")

        recipe = self.recipe_targets[parameter]
        envelope = self.guardrails.allowed[cls]
        old = self.current[parameter]
        new = min(max(old + delta, recipe - envelope), recipe + envelope)
        entry = ActionLogEntry(
            id=f"act-{self._act_index:04d}", timestamp=timestamp,
            parameter=parameter, old_value=old, new_value=new,
            reason=reason, confidence=confidence, origin=origin)
        self._act_index += 1
        self.log.append(entry)
        self.current[parameter] = new
        return entry

    def undo(self, entry_id: str, timestamp: float = 0.0) -> ActionLogEntry:
        """Revert the latest action on a parameter by appending its inverse."""
        by_id = {e.id: e for e in self.log}
        if entry_id not in by_id:
            raise KeyError(f"unknown log entry {entry_id!r}")
        target = by_id[entry_id]
        for entry in reversed(self.log):
            if entry.parameter == target.parameter:
                if entry.id != entry_id:
                    raise NotLatest(
                        f"{entry_id} superseded by {entry.id} on "
                        f"{target.parameter}")
                break
        undo_entry = ActionLogEntry(
            id=f"act-{self._act_index:04d}", timestamp=timestamp,
            parameter=target.parameter, old_value=target.new_value,
            new_value=target.old_value,
            reason=f"undo of {entry_id}", confidence=None,
            origin="undo", undo_of=entry_id)
        self._act_index += 1
        self.log.append(undo_entry)
        self.current[target.parameter] = target.old_value
        return undo_entry
