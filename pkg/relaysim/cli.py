#!/usr/bin/env python3
"""
Command-line driver: simulate, analyze, verify, plot, list-scenarios

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from relaysim.errors import ConfigError, RelaySimError
from relaysim.runner import SimulationRunner
from relaysim.scenarios import PRESETS, ScenarioSpec, parse_config, preset, preset_names, refine

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaysim",
        description="Heat equation with a non-ideal relay: simulation and free-boundary verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a preset into a run directory
  python run_relay.py simulate --preset oscillator --out runs/osc

  # Diagnostics for a stored run, or for a fresh run of a preset
  python run_relay.py analyze --run runs/osc
  python run_relay.py analyze --preset nontransversal-1d

  # Property suite for one preset (all presets when none is given)
  python run_relay.py verify --preset transversal-1d --seed 7
        """
    )
    parser.add_argument('--settings', default=None,
                        help='Application settings file (default: $RELAY_CONFIG or relay_config.yaml)')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Scenario config file (YAML)')
    common.add_argument('--preset', help=f"Built-in scenario: {', '.join(PRESETS)}")
    common.add_argument('--out', help='Output directory')
    common.add_argument('--seed', type=int, default=0, help='Seed for randomized property tests (default: 0)')
    common.add_argument('--refine', type=int, default=0, metavar='K', help='Halve h and dt K times')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True
    sub.add_parser('simulate', parents=[common], help='Run a scenario to snapshots and a manifest')
    for name, text in (('analyze', 'Diagnostics report for a run'), ('plot', 'Space-time SVG and facet CSV')):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument('--run', help='Stored run directory to read instead of simulating')
        if name == 'plot':
            cmd.add_argument('--slices', type=int, nargs='+', help='Snapshot indices for 2D time slices')
    verify_cmd = sub.add_parser('verify', parents=[common], help='Run the property suite')
    verify_cmd.add_argument('--traces', type=int, default=1000, help='Random relay traces (default: 1000)')
    sub.add_parser('list-scenarios', help='List the built-in presets')
    return parser


def resolve_spec(args: argparse.Namespace, required: bool = True) -> Optional[ScenarioSpec]:
    """Scenario from --config or --preset with --refine applied"""
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"scenario config not found: {path}")
        spec = parse_config(path.read_text())
    elif args.preset:
        spec = preset(args.preset)
    elif required:
        raise ConfigError("a scenario is required: pass --config PATH or --preset NAME")
    else:
        return None
    return refine(spec, args.refine) if args.refine else spec


def _list_scenarios() -> int:
    print("\nBuilt-in scenarios:")
    print("=" * 80)
    for name in preset_names():
        spec = PRESETS[name]()
        print(f"  {name:<22} {spec.dim}D  {spec.description}")
    print("=" * 80)
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == 'list-scenarios':
        return _list_scenarios()

    runner = SimulationRunner(config_path=args.settings)

    if args.command == 'simulate':
        spec = resolve_spec(args)
        result, manifest = runner.simulate(spec, args.out, seed=args.seed, refine_level=args.refine)
        print(f"{spec.name}: {result.outcome} at t={result.u_hist.times[-1]:.6g} "
              f"({result.steps} steps, {len(result.events)} switch events)")
        print(f"  scenario hash {manifest.scenario_hash[:12]}, artifacts: {', '.join(manifest.artifacts)}")
        return EXIT_OK

    if args.command == 'analyze':
        spec = resolve_spec(args, required=args.run is None)
        output = runner.analyze(spec, args.out, run_dir=args.run)
        report = output.report
        print(f"{report.scenario}: outcome {report.outcome}, facets {report.facet_counts or 'n/a'}")
        for note in report.notes:
            print(f"  note: {note}")
        for path in output.files:
            print(f"  wrote {path}")
        return EXIT_OK

    if args.command == 'plot':
        spec = resolve_spec(args, required=args.run is None)
        for path in runner.plot(spec, args.out, run_dir=args.run, time_slices=args.slices):
            print(f"wrote {path}")
        return EXIT_OK

    if args.command == 'verify':
        spec = resolve_spec(args, required=False)
        specs: List[ScenarioSpec] = [spec] if spec is not None else [
            refine(preset(name), args.refine) for name in preset_names()
        ]
        report = runner.verify(specs, seed=args.seed, n_traces=args.traces, out_dir=args.out)
        for check in report.checks:
            mark = "PASS" if check.passed else ("FAIL" if check.gating else "note")
            print(f"  [{mark}] {check.name} ({check.violations} violation(s))")
        print(f"\n{len(report.failures)} failing check(s); seed {report.seed}")
        return EXIT_OK if report.passed else EXIT_VERIFY_FAILED

    raise ConfigError(f"unknown command '{args.command}'")


def cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"[ERROR] Configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RelaySimError, OSError, ValueError) as e:
        print(f"[ERROR] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
