"""
Simulation jobs: run directories, analysis output, settings and metrics
"""
import math
from dataclasses import replace

import pytest
import yaml

from relaysim.errors import ConfigError, LinearSolveFailure, OutputLocked
from relaysim.free_boundary import default_tol_u
from relaysim.monitoring import RunMonitor
from relaysim.runner import (
    ERROR_OUTCOME,
    FACETS_FILE,
    FIGURE_FILE,
    REPORT_FILE,
    SCENARIO_FILE,
    VERIFY_FILE,
    SimulationRunner,
    load_run,
)
from relaysim.scenarios import preset
from relaysim.storage import EVENTS_FILE, MANIFEST_FILE, SNAPSHOT_FILE, output_lock


@pytest.fixture
def runner(settings_file):
    return SimulationRunner(config_path=str(settings_file))


@pytest.fixture
def short_oscillator():
    spec = preset("oscillator")
    return replace(spec, solver=replace(spec.solver, t_end=1.0))


def test_settings_are_merged_with_defaults(runner, tmp_path):
    assert runner.config['logging']['level'] == 'WARNING'
    assert runner.config['logging']['backup_count'] == 5
    assert runner.output_root == tmp_path / "runs"
    assert runner.workers == 1
    assert runner.monitor is not None


def test_missing_explicit_settings_file(tmp_path, monkeypatch):
    monkeypatch.delenv("RELAY_CONFIG", raising=False)
    with pytest.raises(ConfigError):
        SimulationRunner(config_path=str(tmp_path / "absent.yaml"))


def test_environment_overrides(settings_file, tmp_path, monkeypatch):
    monkeypatch.setenv("RELAY_CONFIG", str(settings_file))
    monkeypatch.setenv("RELAY_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("RELAY_METRICS_DB", str(tmp_path / "other.db"))
    runner = SimulationRunner()
    assert runner.config['logging']['level'] == "DEBUG"
    assert runner.monitor.db_path == str(tmp_path / "other.db")


def test_simulate_writes_a_run_directory(runner, short_oscillator, tmp_path):
    result, manifest = runner.simulate(short_oscillator, seed=5)
    out = tmp_path / "runs" / "oscillator"
    for name in (SCENARIO_FILE, SNAPSHOT_FILE, EVENTS_FILE, MANIFEST_FILE):
        assert (out / name).exists()
    assert manifest.outcome == "completed"
    assert manifest.seed == 5
    assert manifest.scenario_hash == short_oscillator.scenario_hash()
    assert manifest.switch_events == len(result.events) == 11

    stored = load_run(out)
    assert stored.spec == short_oscillator
    assert stored.manifest == manifest
    assert stored.events == list(result.events)
    assert len(stored.u_hist) == len(result.u_hist)

    rows = RunMonitor(str(tmp_path / "metrics.db")).get_recent_runs()
    assert rows[0]['command'] == "simulate"
    assert rows[0]['status'] == "success"
    assert rows[0]['switch_events'] == 11


def test_manifest_records_resolved_tolerances(runner, short_oscillator, tmp_path):
    result, manifest = runner.simulate(short_oscillator)
    tolerances = manifest.tolerances
    assert all(value is not None for value in tolerances.values())
    h = result.u_hist.grid.h
    assert tolerances['eps_grad'] == pytest.approx(math.sqrt(h))
    assert tolerances['r_nbhd'] == pytest.approx(3 * h)
    assert tolerances['tol_dt'] == pytest.approx(10 * (h + max(result.u_hist.dts)))
    event_tol = short_oscillator.solver.event_tol
    assert tolerances['tol_u'] == pytest.approx(default_tol_u(result.u_hist, short_oscillator.params, event_tol))
    # u moves at unit speed in the oscillator
    assert tolerances['tol_u'] == pytest.approx(10 * event_tol, rel=0.05)

    stored = yaml.safe_load((tmp_path / "runs" / "oscillator" / MANIFEST_FILE).read_text())
    assert stored['tolerances']['eps_grad'] == pytest.approx(math.sqrt(h))


def test_configured_tolerances_are_kept(runner, short_oscillator):
    spec = replace(short_oscillator, diagnostics=replace(short_oscillator.diagnostics, eps_grad=0.2, tol_u=1e-3))
    _, manifest = runner.simulate(spec)
    assert manifest.tolerances['eps_grad'] == 0.2
    assert manifest.tolerances['tol_u'] == 1e-3


def test_simulate_refuses_a_locked_directory(runner, short_oscillator, tmp_path):
    out = tmp_path / "busy"
    with output_lock(out):
        with pytest.raises(OutputLocked):
            runner.simulate(short_oscillator, out)


def test_failed_simulation_leaves_a_manifest(runner, short_oscillator, tmp_path, monkeypatch):
    def failing(cfg, spec):
        raise LinearSolveFailure("singular system")

    monkeypatch.setattr("relaysim.runner.run", failing)
    out = tmp_path / "failed"
    with pytest.raises(LinearSolveFailure):
        runner.simulate(short_oscillator, out)
    manifest = yaml.safe_load((out / MANIFEST_FILE).read_text())
    assert manifest['outcome'] == ERROR_OUTCOME
    assert not (out / SNAPSHOT_FILE).exists()

    monitor = RunMonitor(str(tmp_path / "metrics.db"))
    assert monitor.get_recent_runs()[0]['status'] == "failed"
    assert monitor.get_error_summary()[0]['error_type'] == "LinearSolveFailure"
    assert runner.last_run_status.startswith("Failed")


def test_analyze_and_plot_a_stored_run(runner, short_oscillator, tmp_path):
    runner.simulate(short_oscillator)
    run_dir = tmp_path / "runs" / "oscillator"

    output = runner.analyze(run_dir=run_dir)
    analysis = run_dir / "analysis"
    names = sorted(p.name for p in output.files)
    assert names == sorted([REPORT_FILE, FACETS_FILE, "growth.csv", "dt_sign_violations.csv",
                            "transversality.csv", "monotone.csv"])
    assert all(p.parent == analysis for p in output.files)
    report = yaml.safe_load((analysis / REPORT_FILE).read_text())
    assert report['scenario'] == "oscillator"
    assert output.decomp is not None

    files = runner.plot(run_dir=run_dir)
    assert [p.name for p in files] == [FIGURE_FILE, FACETS_FILE]
    # the stored run is untouched
    assert not (run_dir / FIGURE_FILE).exists()


def test_analyze_without_a_scenario(runner):
    with pytest.raises(ConfigError):
        runner.analyze()


def test_load_run_needs_a_manifest(tmp_path):
    with pytest.raises(ConfigError):
        load_run(tmp_path)


def test_verify_writes_its_report(runner, short_oscillator, tmp_path):
    report = runner.verify([short_oscillator], seed=2, n_traces=20, out_dir=tmp_path / "verify")
    assert report.passed
    data = yaml.safe_load((tmp_path / "verify" / VERIFY_FILE).read_text())
    assert data['passed'] is True
    assert data['seed'] == 2
