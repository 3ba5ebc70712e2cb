"""Stage-based grow recipes.

A recipe is a list of stages, each holding day/night VPD targets,
temperature bounds, a photoperiod, and IF/THEN/ELSE rules. Rules are
comparisons with hysteresis combined by AND/OR; their actions override
setpoints or raise flags. Everything is validated at load time so rule
evaluation cannot fail mid-run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

KNOWN_POINTS = ("t_air", "rh", "vpd", "t_leaf", "abs_humidity",
                "t_out", "rh_out")
SETTABLE_PARAMETERS = ("vpd_target", "t_min", "t_max", "rh_min", "rh_max")
_COMPARISON_OPS = ("gt", "ge", "lt", "le")
_BOOLEAN_OPS = ("and", "or")


class CycleComplete(Exception):
    """The queried day lies past the end of the recipe."""


class RecipeError(ValueError):
    """Recipe document failed validation; .errors lists every problem."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class Action:
    kind: str  # "set" or "flag"
    parameter: str
    value: float | None = None


@dataclass(frozen=True)
class Condition:
    op: str
    point: str | None = None
    value: float | None = None
    hysteresis: float = 0.0
    args: tuple["Condition", ...] = ()


@dataclass(frozen=True)
class Rule:
    name: str
    when: Condition
    then: tuple[Action, ...] = ()
    otherwise: tuple[Action, ...] = ()
    priority: int = 0


@dataclass(frozen=True)
class Photoperiod:
    on_hour: float
    off_hour: float

    def is_day(self, hour: float) -> bool:
        """Lights-on test; night begins at the off-hour exactly."""
        h = hour % 24.0
        if self.on_hour <= self.off_hour:
            return self.on_hour <= h < self.off_hour
        return h >= self.on_hour or h < self.off_hour  # overnight span


@dataclass(frozen=True)
class Stage:
    name: str
    duration_days: int
    vpd_day: float
    vpd_night: float
    t_day: tuple[float, float]
    t_night: tuple[float, float]
    photoperiod: Photoperiod
    rules: tuple[Rule, ...] = ()


@dataclass(frozen=True)
class Recipe:
    name: str
    stages: tuple[Stage, ...]

    def total_days(self) -> int:
        return sum(s.duration_days for s in self.stages)


@dataclass(frozen=True)
class StageTargets:
    stage_index: int
    stage_name: str
    day: bool
    vpd_target: float
    t_min: float
    t_max: float


def active_targets(recipe: Recipe, day: int, hour: float) -> StageTargets:
    """Targets for the outer loop at (day number, hour of day)."""
    if day < 0:
        raise ValueError("day number must be nonnegative")
    if day >= recipe.total_days():
        raise CycleComplete(f"recipe {recipe.name!r} ended after "
                            f"{recipe.total_days()} days")
    acc = 0
    for i, stage in enumerate(recipe.stages):
        acc += stage.duration_days
        if day < acc:
            break
    is_day = stage.photoperiod.is_day(hour)
    lo, hi = stage.t_day if is_day else stage.t_night
    return StageTargets(
        stage_index=i, stage_name=stage.name, day=is_day,
        vpd_target=stage.vpd_day if is_day else stage.vpd_night,
        t_min=lo, t_max=hi)


def _leaf_truth(cond: Condition, x: float, was_true: bool) -> bool:
    v, h = cond.value, cond.hysteresis
    if cond.op == "gt":
        return x > v - h if was_true else x > v
    if cond.op == "ge":
        return x >= v - h if was_true else x >= v
    if cond.op == "lt":
        return x < v + h if was_true else x < v
    return x <= v + h if was_true else x <= v  # "le"


@dataclass(frozen=True)
class EvaluationResult:
    actions: tuple[Action, ...]   # one winning set per parameter, plus flags
    fired: tuple[str, ...]        # rule names whose condition held
    conflicts: tuple[str, ...]    # human-readable conflict notes


class RuleEngine:
    """Evaluates one rule set against snapshots, keeping hysteresis state.

    Every comparison node remembers whether it held on the previous
    snapshot; a node that became true stays true until the value leaves
    the hysteresis band. Boolean nodes always visit all children so the
    memory of a short-circuited branch cannot go stale.
    """

    def __init__(self, rules: tuple[Rule, ...]):
        self.rules = tuple(rules)
        self._memory: dict[tuple, bool] = {}

    def _eval(self, cond: Condition, snapshot: dict[str, float],
              key: tuple) -> bool:
        if cond.op in _BOOLEAN_OPS:
            results = [self._eval(c, snapshot, key + (i,))
                       for i, c in enumerate(cond.args)]
            return all(results) if cond.op == "and" else any(results)
        if cond.point not in snapshot:
            raise KeyError(f"snapshot is missing point {cond.point!r}")
        truth = _leaf_truth(cond, snapshot[cond.point],
                            self._memory.get(key, False))
        self._memory[key] = truth
        return truth

    def evaluate(self, snapshot: dict[str, float]) -> EvaluationResult:
        actions: list[tuple[int, int, Action]] = []  # (prio, order, action)
        fired = []
        for order, rule in enumerate(self.rules):
            held = self._eval(rule.when, snapshot, (order,))
            if held:
                fired.append(rule.name)
            for act in (rule.then if held else rule.otherwise):
                actions.append((rule.priority, order, act, rule.name))

        flags = []
        sets: dict[str, tuple[int, int, Action, str]] = {}
        conflicts = []
        for prio, order, act, rname in actions:
            if act.kind == "flag":
                if act.parameter not in flags:
                    flags.append(act.parameter)
                continue
            cur = sets.get(act.parameter)
            if cur is None:
                sets[act.parameter] = (prio, order, act, rname)
                continue
            # higher priority wins; ties go to the earlier declaration
            winner, loser = ((prio, order, act, rname), cur) \
                if (prio, -order) > (cur[0], -cur[1]) else \
                (cur, (prio, order, act, rname))
            sets[act.parameter] = winner
            conflicts.append(
                f"{act.parameter}: rule {loser[3]!r} (priority {loser[0]}) "
                f"overridden by rule {winner[3]!r} (priority {winner[0]})")

        ordered = sorted(sets.values(), key=lambda t: (-t[0], t[1]))
        out = tuple(a for _, _, a, _ in ordered) + tuple(
            Action("flag", f) for f in flags)
        return EvaluationResult(out, tuple(fired), tuple(conflicts))


def evaluate_rules(rules: tuple[Rule, ...],
                   snapshot: dict[str, float]) -> EvaluationResult:
    """One-shot evaluation with fresh hysteresis state."""
    return RuleEngine(rules).evaluate(snapshot)


# --- recipe documents -------------------------------------------------

def _parse_condition(node, path: str, errors: list[str]) -> Condition:
    if not isinstance(node, dict) or "op" not in node:
        errors.append(f"{path}: condition must be an object with an 'op'")
        return Condition("gt", "t_air", 0.0)
    op = node["op"]
    if op in _BOOLEAN_OPS:
        raw = node.get("args", [])
        if not isinstance(raw, list) or len(raw) < 2:
            errors.append(f"{path}: '{op}' needs at least 2 args")
            raw = raw if isinstance(raw, list) else []
        args = tuple(_parse_condition(c, f"{path}.args[{i}]", errors)
                     for i, c in enumerate(raw))
        return Condition(op, args=args)
    if op not in _COMPARISON_OPS:
        errors.append(f"{path}: unknown op {op!r}")
        return Condition("gt", "t_air", 0.0)
    point = node.get("point")
    if point not in KNOWN_POINTS:
        errors.append(f"{path}: unknown point {point!r}")
    try:
        value = float(node["value"])
    except (KeyError, TypeError, ValueError):
        errors.append(f"{path}: comparison needs a numeric 'value'")
        value = 0.0
    hyst = node.get("hysteresis", 0.0)
    if not isinstance(hyst, (int, float)) or hyst < 0:
        errors.append(f"{path}: hysteresis must be nonnegative")
        hyst = 0.0
    return Condition(op, point if point in KNOWN_POINTS else "t_air",
                     value, float(hyst))


def _parse_actions(raw, path: str, errors: list[str]) -> tuple[Action, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        errors.append(f"{path}: actions must be a list")
        return ()
    out = []
    for i, a in enumerate(raw):
        where = f"{path}[{i}]"
        if not isinstance(a, dict):
            errors.append(f"{where}: action must be an object")
        elif "flag" in a:
            out.append(Action("flag", str(a["flag"])))
        elif "set" in a:
            if a["set"] not in SETTABLE_PARAMETERS:
                errors.append(f"{where}: cannot set {a['set']!r}")
            elif not isinstance(a.get("value"), (int, float)):
                errors.append(f"{where}: 'set' needs a numeric 'value'")
            else:
                out.append(Action("set", a["set"], float(a["value"])))
        else:
            errors.append(f"{where}: action needs 'set' or 'flag'")
    return tuple(out)


def _parse_bounds(raw, path: str, errors: list[str]) -> tuple[float, float]:
    try:
        lo, hi = float(raw[0]), float(raw[1])
        if lo < hi:
            return (lo, hi)
        errors.append(f"{path}: bounds must satisfy min < max")
    except (TypeError, ValueError, IndexError, KeyError):
        errors.append(f"{path}: bounds must be [min, max]")
    return (0.0, 1.0)


def validate_recipe(doc) -> list[str]:
    """All validation problems in the document; empty means valid."""
    errors: list[str] = []
    _parse(doc, errors)
    return errors


def parse_recipe(doc) -> Recipe:
    errors: list[str] = []
    recipe = _parse(doc, errors)
    if errors:
        raise RecipeError(errors)
    return recipe


def _parse(doc, errors: list[str]) -> Recipe:
    if not isinstance(doc, dict):
        errors.append("recipe must be an object")
        return Recipe("invalid", ())
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        errors.append("recipe needs a nonempty 'name'")
        name = "unnamed"
    raw_stages = doc.get("stages")
    if not isinstance(raw_stages, list) or not raw_stages:
        errors.append("recipe needs a nonempty 'stages' list")
        raw_stages = []
    stages = []
    for i, s in enumerate(raw_stages):
        path = f"stages[{i}]"
        if not isinstance(s, dict):
            errors.append(f"{path}: stage must be an object")
            continue
        duration = s.get("duration_days")
        if not isinstance(duration, int) or duration <= 0:
            errors.append(f"{path}: duration_days must be a positive integer")
            duration = 1
        targets = {}
        for key in ("vpd_day", "vpd_night"):
            v = s.get(key)
            if not isinstance(v, (int, float)) or v <= 0:
                errors.append(f"{path}: {key} must be a positive number")
                v = 1.0
            targets[key] = float(v)
        photo = s.get("photoperiod", {})
        on = photo.get("on", 6.0) if isinstance(photo, dict) else 6.0
        off = photo.get("off", 22.0) if isinstance(photo, dict) else 22.0
        if not isinstance(photo, dict):
            errors.append(f"{path}: photoperiod must be {{on, off}}")
        for label, h in (("on", on), ("off", off)):
            if not isinstance(h, (int, float)) or not 0.0 <= h <= 24.0:
                errors.append(f"{path}: photoperiod {label}-hour must be "
                              f"in [0, 24]")
        rules = []
        for j, r in enumerate(s.get("rules", [])):
            rpath = f"{path}.rules[{j}]"
            if not isinstance(r, dict):
                errors.append(f"{rpath}: rule must be an object")
                continue
            prio = r.get("priority", 0)
            if not isinstance(prio, int):
                errors.append(f"{rpath}: priority must be an integer")
                prio = 0
            rules.append(Rule(
                name=str(r.get("name", f"rule{j}")),
                when=_parse_condition(r.get("when"), f"{rpath}.when", errors),
                then=_parse_actions(r.get("then"), f"{rpath}.then", errors),
                otherwise=_parse_actions(r.get("else"), f"{rpath}.else",
                                         errors),
                priority=prio))
        stages.append(Stage(
            name=str(s.get("name", f"stage{i + 1}")),
            duration_days=duration,
            vpd_day=targets["vpd_day"], vpd_night=targets["vpd_night"],
            t_day=_parse_bounds(s.get("t_day"), f"{path}.t_day", errors),
            t_night=_parse_bounds(s.get("t_night"), f"{path}.t_night",
                                  errors),
            photoperiod=Photoperiod(float(on) if isinstance(on, (int, float))
                                    else 6.0,
                                    float(off) if isinstance(off, (int, float))
                                    else 22.0),
            rules=tuple(rules)))
    return Recipe(name, tuple(stages))


def load_recipe(path: str) -> Recipe:
    with open(path) as f:
        return parse_recipe(json.load(f))


def save_recipe_example(path: str) -> None:
    """Write a small, valid example recipe document."""
    doc = {
        "name": "leafy-green",
        "stages": [
            {"name": "establish", "duration_days": 14,
             "vpd_day": 0.8, "vpd_night": 0.9,
             "t_day": [21.0, 26.0], "t_night": [18.0, 23.0],
             "photoperiod": {"on": 6, "off": 22},
             "rules": [
                 {"name": "heat spike guard", "priority": 10,
                  "when": {"op": "gt", "point": "t_air", "value": 30.0,
                           "hysteresis": 0.5},
                  "then": [{"set": "vpd_target", "value": 1.0},
                           {"flag": "heat_spike"}]},
             ]},
            {"name": "bulk", "duration_days": 28,
             "vpd_day": 1.0, "vpd_night": 1.1,
             "t_day": [22.0, 28.0], "t_night": [18.0, 24.0],
             "photoperiod": {"on": 6, "off": 24},
             "rules": []},
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
