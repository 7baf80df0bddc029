#!/usr/bin/env python3
"""
Simulation jobs
Runs scenarios to disk, analyzes and plots stored runs and drives the
verification suite, with logging and run metrics around every job
"""
from __future__ import annotations

import logging
import os
import time
import traceback
from dataclasses import dataclass, field, replace
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import yaml
from dotenv import load_dotenv

from relaysim import __version__
from relaysim.diagnostics import DiagnosticsReport, analyze, resolve_tolerances
from relaysim.errors import ConfigError
from relaysim.free_boundary import FreeBoundaryDecomposition
from relaysim.grid import SpaceTimeField
from relaysim.monitoring import RunMonitor
from relaysim.plotting import default_time_slices, emit_spacetime_svg
from relaysim.relay import SwitchEvent
from relaysim.scenarios import ScenarioSpec, emit_config, parse_config
from relaysim.solver import RunResult, run
from relaysim.storage import (
    EVENTS_FILE,
    MANIFEST_FILE,
    SNAPSHOT_FILE,
    RunManifest,
    output_lock,
    read_events_csv,
    read_snapshots,
    write_events_csv,
    write_snapshots,
)
from relaysim.verification import VerificationReport, verify

SCENARIO_FILE = "scenario.yaml"
REPORT_FILE = "report.yaml"
FACETS_FILE = "facets.csv"
FIGURE_FILE = "spacetime.svg"
VERIFY_FILE = "verify.yaml"
ERROR_OUTCOME = "error"

# every logger the package writes to
LOGGER_NAMES = ('SimulationRunner', 'RelaySolver', 'Diagnostics', 'Verification', 'Plotting')

DEFAULT_SETTINGS: Dict = {
    'logging': {
        'level': 'INFO',
        'file': 'relay_simulation.log',
        'max_bytes': 10485760,
        'backup_count': 5,
    },
    'monitoring': {
        'enable_metrics': True,
        'db_path': 'relay_metrics.db',
    },
    'output': {
        'root': 'runs',
        'workers': 1,
    },
}


@dataclass
class StoredRun:
    """A run directory read back from disk"""

    directory: Path
    spec: ScenarioSpec
    u_hist: SpaceTimeField
    h_hist: SpaceTimeField
    events: List[SwitchEvent]
    manifest: RunManifest


@dataclass
class AnalysisOutput:
    report: DiagnosticsReport
    decomp: Optional[FreeBoundaryDecomposition]
    files: List[Path] = field(default_factory=list)


def load_run(directory) -> StoredRun:
    directory = Path(directory)
    if not (directory / MANIFEST_FILE).exists():
        raise ConfigError(f"{directory} is not a run directory (no {MANIFEST_FILE})")
    spec = parse_config((directory / SCENARIO_FILE).read_text())
    u_hist, h_hist = read_snapshots(directory / SNAPSHOT_FILE)
    events = read_events_csv(directory / EVENTS_FILE)
    return StoredRun(directory, spec, u_hist, h_hist, events, RunManifest.read(directory / MANIFEST_FILE))


class SimulationRunner:
    """
    Executes simulate / analyze / plot / verify jobs for the CLI
    """

    def __init__(self, config_path: Optional[str] = None):
        """Initialize the runner with application settings"""
        load_dotenv()

        self.config = self._load_config(config_path)
        self.run_count: int = 0
        self.last_run_status: str = "Never run"

        self.monitor: Optional[RunMonitor] = None
        monitoring = self.config['monitoring']
        if monitoring.get('enable_metrics', True):
            self.monitor = RunMonitor(os.getenv('RELAY_METRICS_DB', monitoring.get('db_path', 'relay_metrics.db')))

        self._setup_logging()
        self.logger.debug("Simulation runner initialized")

    def _load_config(self, config_path: Optional[str]) -> Dict:
        """Load settings from YAML; the default file is optional, an explicit one is not"""
        explicit = config_path or os.getenv('RELAY_CONFIG')
        config_file = Path(explicit or 'relay_config.yaml')
        loaded: Dict = {}
        if config_file.exists():
            with open(config_file, 'r') as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ConfigError(f"settings file {config_file} must be a table")
        elif explicit:
            raise ConfigError(f"Configuration file not found: {config_file}")

        config = {section: dict(values) for section, values in DEFAULT_SETTINGS.items()}
        for section, values in loaded.items():
            if section in config and isinstance(values, dict):
                config[section].update(values)
            else:
                config[section] = values
        if os.getenv('RELAY_LOG_LEVEL'):
            config['logging']['level'] = os.getenv('RELAY_LOG_LEVEL')
        return config

    def _setup_logging(self):
        """Configure logging for the runner and the solver services"""
        log_config = self.config['logging']
        log_level = getattr(logging, str(log_config.get('level', 'INFO')).upper(), logging.INFO)
        log_file = log_config.get('file')

        self.logger = logging.getLogger('SimulationRunner')

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        handlers: List[logging.Handler] = []
        if log_file:
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=log_config.get('max_bytes', 10485760),
                backupCount=log_config.get('backup_count', 5)
            )
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            handlers.append(file_handler)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(log_level)
        console_handler.setFormatter(formatter)
        handlers.append(console_handler)

        for name in LOGGER_NAMES:
            logger = logging.getLogger(name)
            logger.setLevel(log_level)
            logger.propagate = False
            # one set of handlers per process, replaced when a new runner is built
            for old in [h for h in logger.handlers if getattr(h, '_relaysim', False)]:
                logger.removeHandler(old)
                old.close()
            for handler in handlers:
                handler._relaysim = True
                logger.addHandler(handler)

    @property
    def output_root(self) -> Path:
        return Path(self.config['output'].get('root', 'runs'))

    @property
    def workers(self) -> int:
        return int(self.config['output'].get('workers', 1))

    def _job(self, command: str, scenario: str, func: Callable[[], Tuple[object, Dict]]):
        """Run one job between banners, recording it in the metrics database"""
        self.run_count += 1
        job_id = f"{command.upper()}-{self.run_count}-{datetime.now().strftime('%Y%m%d-%H%M%S')}"

        self.logger.info("=" * 80)
        self.logger.info(f"Starting {command} job {job_id}: {scenario}")
        self.logger.info("=" * 80)

        start_time = time.time()
        monitor_run_id = self.monitor.start_run(scenario, command) if self.monitor else None
        try:
            value, stats = func()
            execution_time = time.time() - start_time
            self.logger.info(f"{command} job {job_id} completed in {execution_time:.2f} seconds")
            self.logger.info(f"Statistics: {stats}")
            self.last_run_status = "Success"
            if self.monitor and monitor_run_id:
                self.monitor.end_run(monitor_run_id, stats, status='success')
            return value
        except Exception as e:
            execution_time = time.time() - start_time
            self.logger.error(f"{command} job {job_id} failed after {execution_time:.2f} seconds")
            self.logger.error(f"Error: {str(e)}", exc_info=True)
            self.last_run_status = f"Failed: {str(e)}"
            if self.monitor and monitor_run_id:
                self.monitor.end_run(monitor_run_id, {'errors': 1}, status='failed', error_message=str(e))
                self.monitor.log_error(monitor_run_id, type(e).__name__, str(e), traceback.format_exc())
            raise
        finally:
            self.logger.info("=" * 80)
            self.logger.info(f"{command} job {job_id} finished")
            self.logger.info("=" * 80 + "\n")

    @staticmethod
    def _run_stats(result: RunResult) -> Dict:
        return {
            'outcome': result.outcome,
            'grid_points': result.u_hist.grid.size,
            'steps': result.steps,
            'event_steps': result.event_steps,
            'switch_events': len(result.events),
            'snapshots': len(result.u_hist),
            't_reached': float(result.u_hist.times[-1]),
        }

    def _simulate(self, spec: ScenarioSpec) -> RunResult:
        cfg = spec.solver
        if self.workers > 1 and cfg.workers == 1:
            cfg = replace(cfg, workers=self.workers)
        return run(cfg, spec)

    # -- jobs ----------------------------------------------------------------

    def simulate(self, spec: ScenarioSpec, out_dir=None, seed: Optional[int] = None,
                 refine_level: int = 0) -> Tuple[RunResult, RunManifest]:
        """Run spec and write snapshots, events, the resolved scenario and the manifest"""
        out = Path(out_dir) if out_dir else self.output_root / spec.name

        def _work():
            with output_lock(out):
                manifest = RunManifest(
                    scenario=spec.name,
                    scenario_hash=spec.scenario_hash(),
                    code_version=__version__,
                    outcome=ERROR_OUTCOME,
                    tolerances=_tolerances(spec),
                    seed=seed,
                    refine=refine_level,
                )
                (out / SCENARIO_FILE).write_text(emit_config(spec))
                try:
                    result = self._simulate(spec)
                except Exception:
                    manifest.artifacts = [SCENARIO_FILE, MANIFEST_FILE]
                    manifest.write(out / MANIFEST_FILE)
                    raise
                write_snapshots(result.u_hist, result.h_hist, out / SNAPSHOT_FILE)
                write_events_csv(result.events, result.u_hist.grid, out / EVENTS_FILE)
                manifest.outcome = result.outcome
                manifest.tolerances = _tolerances(spec, result)
                manifest.wall_time = result.wall_time
                manifest.steps = result.steps
                manifest.switch_events = len(result.events)
                manifest.snapshots = len(result.u_hist)
                manifest.underflow = result.underflow
                manifest.artifacts = [SCENARIO_FILE, SNAPSHOT_FILE, EVENTS_FILE, MANIFEST_FILE]
                manifest.write(out / MANIFEST_FILE)
            self.logger.info(f"Run written to {out}")
            return (result, manifest), self._run_stats(result)

        return self._job("simulate", spec.name, _work)

    def _histories(self, spec: Optional[ScenarioSpec], run_dir) -> Tuple[ScenarioSpec, SpaceTimeField, SpaceTimeField,
                                                                          Sequence[SwitchEvent], str]:
        if run_dir is not None:
            stored = load_run(run_dir)
            self.logger.info(f"Loaded {len(stored.u_hist)} snapshot(s) from {stored.directory}")
            return stored.spec, stored.u_hist, stored.h_hist, stored.events, stored.manifest.outcome
        if spec is None:
            raise ConfigError("need a scenario or a run directory")
        result = self._simulate(spec)
        return spec, result.u_hist, result.h_hist, result.events, result.outcome

    def analyze(self, spec: Optional[ScenarioSpec] = None, out_dir=None, run_dir=None) -> AnalysisOutput:
        """DiagnosticsReport for a stored run, or for a fresh in-memory run of spec"""
        name = spec.name if spec is not None else str(run_dir)

        def _work():
            resolved, u_hist, h_hist, events, outcome = self._histories(spec, run_dir)
            report, decomp = analyze(u_hist, h_hist, resolved.params, resolved.diagnostics, events, outcome,
                                     resolved.solver.event_tol, resolved.name)
            out = Path(out_dir) if out_dir else self.output_root / resolved.name / "analysis"
            out.mkdir(parents=True, exist_ok=True)
            files = [report.write_yaml(out / REPORT_FILE)]
            files.extend(report.write_csv_tables(out))
            if decomp is not None:
                files.append(decomp.write_csv(out / FACETS_FILE))
            if outcome == "dt_underflow":
                self.logger.info(f"{resolved.name}: run ended in dt underflow; reported as an observation")
            stats = {'outcome': outcome, 'grid_points': u_hist.grid.size, 'snapshots': len(u_hist),
                     'switch_events': len(events), 't_reached': float(u_hist.times[-1])}
            return AnalysisOutput(report, decomp, files), stats

        return self._job("analyze", name, _work)

    def plot(self, spec: Optional[ScenarioSpec] = None, out_dir=None, run_dir=None,
             time_slices: Optional[Sequence[int]] = None) -> List[Path]:
        """Space-time SVG and the facet table"""
        name = spec.name if spec is not None else str(run_dir)

        def _work():
            resolved, u_hist, h_hist, events, outcome = self._histories(spec, run_dir)
            _, decomp = analyze(u_hist, h_hist, resolved.params, resolved.diagnostics, events, outcome,
                                resolved.solver.event_tol, resolved.name)
            out = Path(out_dir) if out_dir else self.output_root / resolved.name / "analysis"
            out.mkdir(parents=True, exist_ok=True)
            slices = time_slices
            if u_hist.grid.dim == 2 and not slices:
                slices = default_time_slices(len(u_hist))
            files = [emit_spacetime_svg(u_hist, h_hist, decomp, out / FIGURE_FILE, p=resolved.params,
                                        time_slices=slices, title=resolved.name)]
            if decomp is not None:
                files.append(decomp.write_csv(out / FACETS_FILE))
            return files, {'outcome': outcome, 'snapshots': len(u_hist), 'grid_points': u_hist.grid.size}

        return self._job("plot", name, _work)

    def verify(self, specs: Sequence[ScenarioSpec], seed: int = 0, n_traces: int = 1000,
               out_dir=None) -> VerificationReport:
        name = ",".join(s.name for s in specs) or "relay"

        def _work():
            report = verify(specs, seed=seed, n_traces=n_traces)
            if out_dir:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                report.write_yaml(out / VERIFY_FILE)
            stats = {'outcome': 'passed' if report.passed else 'failed', 'errors': len(report.failures)}
            return report, stats

        return self._job("verify", name, _work)


def _tolerances(spec: ScenarioSpec, result: Optional[RunResult] = None) -> Dict:
    """Solver settings plus diagnostics tolerances, resolved against the run when there is one"""
    cfg = spec.solver
    diag = spec.diagnostics
    tolerances = {
        'dt_init': cfg.dt_init,
        'dt_min': cfg.dt_min,
        'event_tol': cfg.event_tol,
        'theta': cfg.theta,
        'max_inner_iters': cfg.max_inner_iters,
        'tol_u': diag.tol_u,
        'eps_grad': diag.eps_grad,
        'r_nbhd': diag.r_nbhd,
        'eps_margin': diag.eps_margin,
        'tol_dt': diag.tol_dt,
    }
    if result is not None:
        tolerances.update(resolve_tolerances(result.u_hist, spec.params, diag, cfg.event_tol))
    return tolerances
