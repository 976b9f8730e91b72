"""
Command-line front end: generate scenarios, run campaigns, compare solvers
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .config import Settings, get_settings, validate_generation_params
from .errors import ConfigurationError
from .mission import SOLVERS, CampaignResult, run_campaign
from .presets import PRESET_ALIASES, PRESETS, ExperimentPreset, build_generation_params, get_preset
from .reporting import ReportWriter, aggregate_row
from .scenario import FixedScenarioStream, ScenarioStream, generate_scenario, load_scenario, save_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting"""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coalition", description="Coalition formation for resource-constrained UAV swarms")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def scale_flags(p):
        p.add_argument("--uavs", type=int, help="Number of UAVs")
        p.add_argument("--tasks", type=int, help="Number of tasks")
        p.add_argument("--resources", type=int, help="Resource types per UAV (default 5)")

    generate = sub.add_parser("generate", help="Write a random scenario file")
    scale_flags(generate)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", default="scenario.json", help="Scenario file to write")

    run = sub.add_parser("run", help="Run a campaign with one solver")
    scale_flags(run)
    run.add_argument("--preset", help="Named experiment (see 'presets list')")
    run.add_argument("--scenario", help="Replay a scenario file every mission")
    run.add_argument("--solver", default="moqga", choices=SOLVERS)
    run.add_argument("--missions", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="Output directory")

    compare = sub.add_parser("compare", help="Run several solvers on seed-matched scenarios")
    scale_flags(compare)
    compare.add_argument("--preset", help="Named experiment (see 'presets list')")
    compare.add_argument("--solver", action="append", choices=SOLVERS, help="Repeat for each solver")
    compare.add_argument("--seed", type=int, action="append", help="Repeat for each seed")
    compare.add_argument("--missions", type=int)
    compare.add_argument("--out", help="Output directory")

    presets = sub.add_parser("presets", help="Inspect experiment presets")
    presets_sub = presets.add_subparsers(dest="presets_command", parser_class=_Parser)
    presets_sub.required = True
    presets_sub.add_parser("list", help="List preset names")
    return parser


def _check_scale(settings: Settings, args) -> Dict[str, Any]:
    data = {
        "n_uavs": args.uavs,
        "n_tasks": args.tasks,
        "n_resources": args.resources if args.resources is not None else settings.n_resources,
        "region_side": settings.region_side,
        "speed": settings.uav_speed,
        "resource_range": settings.resource_range,
        "requirement_range": settings.requirement_range,
    }
    errors = validate_generation_params(data)
    if errors:
        raise ConfigurationError("; ".join(errors))
    return data


def _resolve_preset(settings: Settings, args) -> ExperimentPreset:
    """Preset named by --preset, or an ad-hoc one from --uavs/--tasks; flags win over preset values"""
    if getattr(args, "missions", None) is not None and args.missions < 1:
        raise ConfigurationError(f"--missions must be at least 1 (got {args.missions})")
    if args.preset:
        preset = get_preset(args.preset)
        update = {}
        if args.uavs is not None:
            update["n_uavs"] = args.uavs
        if args.tasks is not None:
            update["n_tasks"] = args.tasks
        if update:
            preset = preset.model_copy(update=update)
    else:
        if args.uavs is None or args.tasks is None:
            raise ConfigurationError("give --preset, or both --uavs and --tasks")
        preset = ExperimentPreset(
            name="custom",
            description="Command-line scale",
            n_uavs=args.uavs,
            n_tasks=args.tasks,
            missions=settings.missions,
        )
    args.uavs, args.tasks = preset.n_uavs, preset.n_tasks
    _check_scale(settings, args)
    return preset


def _metadata(settings: Settings, **fields) -> Dict[str, Any]:
    return {**fields, "settings": settings.provenance()}


def cmd_generate(args, settings: Settings) -> int:
    data = _check_scale(settings, args)
    params = build_generation_params(settings, data["n_uavs"], data["n_tasks"], data["n_resources"])
    scenario = generate_scenario(params, args.seed)
    path = save_scenario(scenario, args.out)
    print(f"✅ Scenario with {len(scenario.uavs)} UAVs and {len(scenario.tasks)} tasks written to {path}")
    return EXIT_OK


def _run_one(
    writer: ReportWriter,
    stream,
    preset: ExperimentPreset,
    settings: Settings,
    solver: str,
    seed: int,
    missions: Optional[int],
    prefix: str = "",
) -> CampaignResult:
    config = preset.campaign_config(settings, solver, seed, missions)
    reports_name = f"{prefix}reports.jsonl"
    writer.write_reports([], reports_name)
    result = run_campaign(stream, config, on_report=lambda report: writer.append_report(report, reports_name))
    n_uavs = len(stream.fleet)
    n_tasks = len(stream.scenario(0).tasks)
    writer.write_aggregates([aggregate_row(result, n_uavs, n_tasks)], f"{prefix}aggregates.csv")
    writer.write_reputation(result.ledger, f"{prefix}reputation.csv")
    writer.write_scatter(result.scatter, f"{prefix}scatter.csv")
    print(
        f"📊 {solver} (seed {seed}): {result.completed_pct:.1f}% tasks completed, "
        f"{result.mean_violations:.2f} mean violations"
    )
    return result


def cmd_run(args, settings: Settings) -> int:
    if args.missions is not None and args.missions < 1:
        raise ConfigurationError(f"--missions must be at least 1 (got {args.missions})")
    out = args.out or settings.output_directory
    if args.scenario:
        scenario = load_scenario(args.scenario)
        seed = args.seed if args.seed is not None else scenario.rng_seed
        stream = FixedScenarioStream(scenario)
        preset = ExperimentPreset(
            name=Path(args.scenario).stem,
            description=f"Replay of {args.scenario}",
            n_uavs=len(scenario.uavs),
            n_tasks=len(scenario.tasks),
            missions=settings.missions,
        )
        generation = {"scenario_file": str(args.scenario)}
    else:
        preset = _resolve_preset(settings, args)
        seed = args.seed if args.seed is not None else preset.seeds[0]
        params = preset.generation_params(settings, args.resources)
        stream = ScenarioStream(params, seed)
        generation = params.model_dump(mode="json")

    missions = args.missions or preset.missions
    writer = ReportWriter(
        out,
        _metadata(
            settings,
            command="run",
            preset=preset.name,
            solver=args.solver,
            seed=seed,
            missions=missions,
            generation=generation,
        ),
    )
    print(f"🚀 Running {args.solver} on {preset.name} ({preset.scale}, {missions} missions)")
    _run_one(writer, stream, preset, settings, args.solver, seed, missions)
    print(f"✅ Outputs written to {out}")
    return EXIT_OK


def cmd_compare(args, settings: Settings) -> int:
    preset = _resolve_preset(settings, args)
    solvers: List[str] = list(dict.fromkeys(args.solver or preset.solvers))
    if len(solvers) < 2:
        raise ConfigurationError("compare needs at least two solvers")
    seeds: List[int] = args.seed or list(preset.seeds)
    missions = args.missions or preset.missions
    out = args.out or settings.output_directory
    params = preset.generation_params(settings, args.resources)
    writer = ReportWriter(
        out,
        _metadata(
            settings,
            command="compare",
            preset=preset.name,
            solvers=solvers,
            seeds=seeds,
            missions=missions,
            generation=params.model_dump(mode="json"),
        ),
    )

    print(f"🚀 Comparing {', '.join(solvers)} on {preset.name} ({preset.scale}, seeds {seeds})")
    rows = []
    for solver in solvers:
        results = [
            _run_one(writer, ScenarioStream(params, seed), preset, settings, solver, seed, missions, f"{solver}-{seed}-")
            for seed in seeds
        ]
        rows.append(
            {
                "solver": solver,
                "n_uavs": preset.n_uavs,
                "n_tasks": preset.n_tasks,
                "completed_pct": round(float(np.mean([r.completed_pct for r in results])), 6),
                "mean_violations": round(float(np.mean([r.mean_violations for r in results])), 6),
                "mean_shortfall": round(float(np.mean([r.mean_shortfall for r in results])), 6),
                "seed": ";".join(str(seed) for seed in seeds),
            }
        )
    path = writer.write_aggregates(rows, "comparison.csv")
    print(f"✅ Comparison written to {path}")
    return EXIT_OK


def cmd_presets(args, settings: Settings) -> int:
    for preset in PRESETS.values():
        print(f"{preset.name:<20} {preset.scale:<8} {preset.missions:>3} missions  {', '.join(preset.solvers)}")
        print(f"{'':<20} {preset.description}")
        aliases = [alias for alias, target in PRESET_ALIASES.items() if target == preset.name]
        if aliases:
            print(f"{'':<20} also: {', '.join(aliases)}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "compare": cmd_compare,
    "presets": cmd_presets,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, settings)
    except (ConfigurationError, ValidationError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except Exception as e:
        logger.exception("Run failed")
        print(f"❌ Run failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
