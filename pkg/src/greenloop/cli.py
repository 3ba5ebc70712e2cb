"""Command-line entry points: run, validate-recipe, serve, bundles."""

from __future__ import annotations

import argparse
import json
import os
import sys

from greenloop import plantsim
from greenloop import recipe as recipe_mod
from greenloop import telemetry
from greenloop.supervisor import (
    LoopConfig, ZoneRuntime, default_recipe, equipment_keys,
    export_facility_bundle, run_scenario)

_LEVELS = {"L1": 1, "L2": 2, "L3": 3, "L4": 4}
_LEVEL_NAMES = ("L1", "L2", "L3", "L4")


def _scenario(name_or_path: str):
    table = plantsim.builtin_scenarios()
    if name_or_path in table:
        return table[name_or_path]
    if os.path.exists(name_or_path):
        scenario, _params = plantsim.load_scenario(name_or_path)
        return scenario
    raise SystemExit(f"error: no builtin scenario or file {name_or_path!r} "
                     f"(builtins: {', '.join(sorted(table))})")


def _recipe(path: str | None):
    if path is None:
        return default_recipe()
    try:
        return recipe_mod.load_recipe(path)
    except recipe_mod.RecipeError as exc:
        raise SystemExit(f"error: {exc}")


def _config(args) -> LoopConfig:
    return LoopConfig(autonomy_level=_LEVELS[args.autonomy.upper()])


def cmd_run(args) -> int:
    report = run_scenario(
        _scenario(args.scenario), controller=args.controller,
        config=_config(args), seed=args.seed, recipe=_recipe(args.recipe),
        hours=args.hours)
    if args.out:
        report.save(args.out)
    print(f"{report.scenario} {report.controller} seed={report.seed} "
          f"{report.hours:g}h: {report.total_kwh:.2f} kWh "
          f"(cost {report.tariff_cost:.2f}), vpd sigma "
          f"{report.vpd_sigma:.4f} kPa"
          + (f", recovery {report.recovery_s:g}s"
             if report.recovery_s is not None else ""))
    if args.out:
        print(f"report written to {args.out}")
    return 0


def cmd_validate_recipe(args) -> int:
    try:
        recipe = recipe_mod.load_recipe(args.file)
    except recipe_mod.RecipeError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"unreadable: {exc}", file=sys.stderr)
        return 1
    days = recipe.total_days()
    print(f"ok: {recipe.name!r}, {len(recipe.stages)} stages, {days} days")
    for stage in recipe.stages:
        print(f"  {stage.name}: {stage.duration_days}d, "
              f"vpd {stage.vpd_day:g}/{stage.vpd_night:g} kPa, "
              f"{len(stage.rules)} rules")
    return 0


def cmd_serve(args) -> int:
    from greenloop.server import Facility, serve

    host, _, port = args.listen.rpartition(":")
    store = telemetry.TelemetryStore(args.store) if args.store else None
    facility = Facility(
        _scenario(args.scenario), recipe=_recipe(args.recipe),
        config=_config(args), seed=args.seed, controller=args.controller,
        pace=args.pace, store=store)
    print(f"serving {facility.scenario.name} on {args.listen} "
          f"(pace {args.pace:g}x)")
    serve(facility, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_export_bundle(args) -> int:
    runtime = ZoneRuntime(_scenario(args.scenario), _recipe(args.recipe),
                          _config(args), seed=args.seed)
    runtime.autotune()
    runtime.run(args.hours * 3600.0 - runtime.t)
    bundle = export_facility_bundle(runtime, facility_id=args.facility_id)
    telemetry.save_bundle(bundle, args.out)
    print(f"bundle {bundle.facility_hash} written to {args.out} "
          f"({len(bundle.gains)} gain sets, "
          f"{len(bundle.tuner_weights)} tuner weight sets)")
    return 0


def cmd_import_bundle(args) -> int:
    try:
        bundle = telemetry.load_bundle(args.file)
    except telemetry.BundleError as exc:
        print(f"invalid bundle: {exc}", file=sys.stderr)
        return 1
    keys = equipment_keys(plantsim.default_bank())
    matched, warnings = telemetry.match_bundle(bundle, list(keys.values()))
    print(f"bundle {bundle.facility_hash} exported at "
          f"t={bundle.exported_at:g}s")
    for key in sorted(matched):
        parts = sorted(matched[key])
        print(f"  matched {key}: {', '.join(parts)}")
    for warning in warnings:
        print(f"  warning: {warning}")
    return 0 if matched else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="greenloop",
        description="closed-loop zone climate control against the built-in "
                    "simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and report")
    run_p.add_argument("--scenario", default="desert",
                       help="builtin name or scenario file")
    run_p.add_argument("--controller", default="cascade",
                       choices=("cascade", "baseline"))
    run_p.add_argument("--autonomy", default="L1",
                       choices=_LEVEL_NAMES)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--hours", type=float, default=None)
    run_p.add_argument("--recipe", default=None, help="recipe file")
    run_p.add_argument("--out", default=None, help="write the report here")
    run_p.set_defaults(fn=cmd_run)

    val_p = sub.add_parser("validate-recipe", help="check a recipe file")
    val_p.add_argument("file")
    val_p.set_defaults(fn=cmd_validate_recipe)

    serve_p = sub.add_parser("serve", help="run a facility with the API")
    serve_p.add_argument("--scenario", default="desert")
    serve_p.add_argument("--listen", default="127.0.0.1:8800")
    serve_p.add_argument("--controller", default="cascade",
                         choices=("cascade", "baseline"))
    serve_p.add_argument("--autonomy", default="L1", choices=_LEVEL_NAMES)
    serve_p.add_argument("--seed", type=int, default=0)
    serve_p.add_argument("--recipe", default=None)
    serve_p.add_argument("--pace", type=float, default=60.0,
                         help="simulated seconds per wall second; 0 = "
                              "free-run")
    serve_p.add_argument("--store", default=None,
                         help="telemetry directory (enables /timeseries)")
    serve_p.set_defaults(fn=cmd_serve)

    exp_p = sub.add_parser("export-bundle",
                           help="run a scenario, export what was learned")
    exp_p.add_argument("--scenario", default="desert")
    exp_p.add_argument("--autonomy", default="L1", choices=_LEVEL_NAMES)
    exp_p.add_argument("--seed", type=int, default=0)
    exp_p.add_argument("--hours", type=float, default=6.0)
    exp_p.add_argument("--recipe", default=None)
    exp_p.add_argument("--facility-id", default="sim")
    exp_p.add_argument("--out", required=True)
    exp_p.set_defaults(fn=cmd_export_bundle)

    imp_p = sub.add_parser("import-bundle",
                           help="validate a bundle against local equipment")
    imp_p.add_argument("file")
    imp_p.set_defaults(fn=cmd_import_bundle)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
