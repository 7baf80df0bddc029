"""
Time integration: oscillator, event localization, residuals and convergence
"""
from dataclasses import replace

import numpy as np
import pytest

from relaysim.errors import BoundaryMismatch, DtUnderflow, InvalidInitialState
from relaysim.grid import DIRICHLET, BoundaryCondition, BoundaryData, Grid, ScalarField
from relaysim.relay import DOWN, UP, InputTrace, RelayParams, RelayState, trace_switches
from relaysim.scenarios import preset, refine
from relaysim.solver import (
    COMPLETED_RUN,
    DT_UNDERFLOW,
    RelaySolver,
    SolverConfig,
    initialize,
    residual,
    run,
    step,
)
from relaysim.storage import write_snapshots

P = RelayParams(0.0, 1.0)


def _oscillator_state(u0=0.5, n=11):
    grid = Grid.interval(0.0, 1.0, n)
    bd = BoundaryData.homogeneous_neumann(1)
    return initialize(ScalarField(grid, np.full(n, u0)), -1, bd, P), bd


# -- configuration and initial state ----------------------------------------

@pytest.mark.parametrize("kwargs", [
    {'t_end': 0.0},
    {'dt_init': 1e-3, 'dt_min': 1e-2},
    {'dt_min': 0.0},
    {'event_tol': 0.0},
    {'theta': 1.5},
    {'max_inner_iters': 0},
    {'snapshot_stride': 0},
    {'workers': 0},
    {'relay_mode': 'ideal'},
])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_initialize_rejects_inconsistent_relay():
    grid = Grid.interval(0.0, 1.0, 5)
    phi = ScalarField(grid, np.array([0.5, 0.5, 1.2, 0.5, 0.5]))
    with pytest.raises(InvalidInitialState) as info:
        initialize(phi, -1, BoundaryData.homogeneous_neumann(1), P)
    assert info.value.points == [2]


def test_initialize_rejects_dirichlet_mismatch():
    grid = Grid.interval(0.0, 1.0, 5, left=DIRICHLET)
    bd = BoundaryData.from_dict({"left": BoundaryCondition(DIRICHLET, 0.8)})
    phi = ScalarField(grid, np.full(5, 0.5))
    with pytest.raises(BoundaryMismatch):
        initialize(phi, -1, bd, P)
    state = initialize(ScalarField(grid, np.array([0.8, 0.5, 0.5, 0.5, 0.5])), -1, bd, P)
    assert state.t == 0.0


# -- single steps --------------------------------------------------------------

def test_step_without_switch_advances_by_dt():
    state, bd = _oscillator_state()
    new = step(state, SolverConfig(dt_init=1e-3, t_end=1.0), bd)
    assert new.t == pytest.approx(1e-3)
    np.testing.assert_allclose(new.u.values, 0.501, atol=1e-12)
    assert new.h.events == ()


def test_step_localizes_crossing_within_event_tol():
    state, bd = _oscillator_state()
    cfg = SolverConfig(dt_init=0.3, t_end=1.0, event_tol=1e-6)
    solver = RelaySolver(state.u.grid, bd, cfg)
    state = solver.step(state)
    assert state.t == pytest.approx(0.3)
    assert state.h.events == ()

    state = solver.step(state)
    assert 0.5 <= state.t <= 0.5 + 2e-6
    assert len(state.h.events) == 11
    assert all(ev.direction == UP for ev in state.h.events)
    assert all(abs(ev.time - 0.5) < 1e-9 for ev in state.h.events)
    assert all(ev.u_value >= 1.0 for ev in state.h.events)
    assert solver.stats['event_steps'] == 1
    assert solver.stats['bisections'] > 0


def test_factorizations_are_reused():
    state, bd = _oscillator_state()
    solver = RelaySolver(state.u.grid, bd, SolverConfig(dt_init=1e-2, t_end=0.2))
    for _ in range(10):
        state = solver.step(state)
    assert solver.stats['factorizations'] == 1


# -- oscillator ----------------------------------------------------------------

def test_oscillator_completes(oscillator_run):
    assert oscillator_run.outcome == COMPLETED_RUN
    assert oscillator_run.u_hist.times[-1] == pytest.approx(3.0)
    assert oscillator_run.underflow is None


def test_oscillator_stays_spatially_constant(oscillator_run):
    spread = np.ptp(oscillator_run.u_hist.values, axis=1)
    assert np.max(spread) < 1e-9


def test_oscillator_period(oscillator_run):
    ups = sorted(ev.time for ev in oscillator_run.events if ev.direction == UP)
    downs = sorted(ev.time for ev in oscillator_run.events if ev.direction == DOWN)
    assert len(ups) == 22 and len(downs) == 11
    assert ups[0] == pytest.approx(0.5, abs=1e-3)
    assert downs[0] == pytest.approx(1.5, abs=1e-3)
    period = ups[-1] - ups[0]
    assert period == pytest.approx(2.0, rel=1e-3)


def test_oscillator_switches_obey_the_switching_law(oscillator_run):
    assert oscillator_run.final_state.h.event_law_violations() == []
    for ev in oscillator_run.events:
        if ev.direction == UP:
            assert ev.u_value >= 1.0
        else:
            assert ev.u_value <= 0.0


def test_oscillator_snapshots_bracket_every_switch(oscillator_run):
    times = oscillator_run.u_hist.times
    for ev in oscillator_run.events:
        k = int(np.searchsorted(times, ev.time))
        assert 0 < k < len(times)
        assert oscillator_run.h_hist.values[k, ev.point] == ev.new_value
        assert oscillator_run.h_hist.values[k - 1, ev.point] == -ev.new_value


@pytest.mark.parametrize("name", ["oscillator", "transversal"])
def test_relay_replay_reproduces_the_event_log(name, request):
    spec = request.getfixturevalue(f"{name}_spec")
    result = request.getfixturevalue(f"{name}_run")
    u = result.u_hist.flat()
    h0 = result.h_hist.flat()[0]
    total = 0
    for point in range(u.shape[1]):
        trace = InputTrace.from_arrays(result.u_hist.times, u[:, point])
        replayed = trace_switches(trace, RelayState(int(h0[point])), spec.params)
        logged = sorted((ev.time, ev.direction) for ev in result.events if ev.point == point)
        assert [d for _, d in replayed] == [d for _, d in logged]
        for (t_replay, _), (t_log, _) in zip(replayed, logged):
            assert t_replay == pytest.approx(t_log, abs=spec.solver.event_tol)
        total += len(replayed)
    assert total == len(result.events) > 0


def test_snapshot_stride_thins_the_history(oscillator_spec):
    cfg = replace(oscillator_spec.solver, snapshot_stride=50, t_end=1.0)
    result = run(cfg, oscillator_spec)
    assert len(result.u_hist) < 40
    assert result.u_hist.times[0] == 0.0
    assert result.u_hist.times[-1] == pytest.approx(1.0)
    # the commit before and the commit of the switch are both kept
    k = int(np.searchsorted(result.u_hist.times, 0.5))
    assert result.u_hist.times[k] - result.u_hist.times[k - 1] <= 1e-3 + 1e-12


def test_runs_are_identical_for_any_worker_count(oscillator_spec, tmp_path):
    blobs = []
    for workers in (1, 2, 8):
        cfg = replace(oscillator_spec.solver, workers=workers)
        result = run(cfg, oscillator_spec)
        path = write_snapshots(result.u_hist, result.h_hist, tmp_path / f"w{workers}.rlyp")
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_step_raises_dt_underflow_for_an_unseparable_switch_back():
    # just switched up, and already within 1e-14 of alpha while falling
    grid = Grid.interval(0.0, 1.0, 5)
    bd = BoundaryData.homogeneous_neumann(1)
    state = initialize(ScalarField(grid, np.full(5, 1e-14)), 1, bd, P)
    state = replace(state, h=replace(state.h, last_switch=np.zeros(5)))
    with pytest.raises(DtUnderflow) as info:
        step(state, SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=1.0), bd)
    assert info.value.points == [0, 1, 2, 3, 4]
    assert info.value.time == 0.0
    assert info.value.dt < 1e-12


def test_run_reports_dt_underflow_as_an_outcome(oscillator_spec, monkeypatch):
    original = RelaySolver.step

    def stalling(self, state, dt=None):
        if state.t >= 0.1:
            raise DtUnderflow("stalled", time=state.t, dt=1e-13, points=[3])
        return original(self, state, dt)

    monkeypatch.setattr(RelaySolver, "step", stalling)
    result = run(replace(oscillator_spec.solver, t_end=1.0), oscillator_spec)
    assert result.outcome == DT_UNDERFLOW
    assert result.underflow['points'] == [3]
    assert result.underflow['time'] == pytest.approx(0.1, abs=2e-3)
    assert result.u_hist.times[-1] == pytest.approx(result.underflow['time'])


@pytest.mark.slow
def test_nontransversal_ends_in_underflow_or_completes():
    spec = preset("nontransversal-1d")
    result = run(spec.solver, spec)
    assert result.outcome in (COMPLETED_RUN, DT_UNDERFLOW)
    if result.outcome == DT_UNDERFLOW:
        assert result.underflow['points']
    assert result.final_state.h.event_law_violations() == []


@pytest.mark.slow
def test_band_scenario_stays_inside_the_band():
    spec = preset("band-2d")
    result = run(spec.solver, spec)
    p = spec.params
    assert result.u_hist.values.min() >= p.alpha - 1e-6
    assert result.u_hist.values.max() <= p.beta + 1e-6


# -- residual ------------------------------------------------------------------

def test_residual_vanishes_away_from_switches(oscillator_run):
    bd = BoundaryData.homogeneous_neumann(1)
    res = residual(oscillator_run.u_hist, oscillator_run.h_hist, bd, oscillator_run.events)
    values = res.values
    assert np.all(np.isnan(values[0])) and np.all(np.isnan(values[-1]))
    assert np.nanmax(values) < 1e-6


def test_residual_flags_a_corrupted_snapshot(oscillator_run):
    bd = BoundaryData.homogeneous_neumann(1)
    u_hist = oscillator_run.u_hist
    k = int(np.argmin(np.abs(u_hist.times - 1.0)))
    corrupted = u_hist.values.copy()
    corrupted[k, 5] += 0.1
    u_bad = replace(u_hist, values=corrupted)
    res = residual(u_bad, oscillator_run.h_hist, bd, oscillator_run.events)
    assert res.values[k, 5] > 1.0
    assert np.nanargmax(res.values) // u_hist.grid.size in (k - 1, k, k + 1)


def test_residual_without_event_log_excludes_phase_changes(oscillator_run):
    bd = BoundaryData.homogeneous_neumann(1)
    res = residual(oscillator_run.u_hist, oscillator_run.h_hist, bd)
    assert np.nanmax(res.values) < 1e-6


@pytest.mark.slow
def test_manufactured_residual_decays_under_refinement():
    spec = preset("manufactured-linear")
    peaks = []
    for k in (0, 1):
        fine = refine(spec, k)
        result = run(fine.solver, fine)
        res = residual(result.u_hist, result.h_hist, fine.boundary_data(), result.events)
        peaks.append(np.nanmax(res.values))
    assert peaks[0] / peaks[1] > 1.5


# -- convergence on the manufactured solution ----------------------------------

def _manufactured_error(spec):
    result = run(spec.solver, spec)
    grid = result.u_hist.grid
    t = float(result.u_hist.times[-1])
    exact = spec.reference(x=grid.axes[0], t=t)
    return result.u_hist.values[-1], float(np.max(np.abs(result.u_hist.values[-1] - exact)))


@pytest.mark.slow
def test_manufactured_spatial_order():
    spec = preset("manufactured-linear")
    errors = []
    for n in (11, 21, 41):
        level = replace(spec, counts=(n,), solver=replace(spec.solver, theta=0.5, dt_init=1e-4))
        errors.append(_manufactured_error(level)[1])
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.9)


@pytest.mark.slow
@pytest.mark.parametrize("theta, expected", [(1.0, 0.9), (0.5, 1.9)])
def test_manufactured_temporal_order(theta, expected):
    spec = preset("manufactured-linear")
    finals = []
    for dt in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        level = replace(spec, counts=(81,), solver=replace(spec.solver, theta=theta, dt_init=dt, dt_min=1e-12))
        finals.append(_manufactured_error(level)[0])
    diffs = [np.max(np.abs(a - b)) for a, b in zip(finals, finals[1:])]
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(orders >= expected)
