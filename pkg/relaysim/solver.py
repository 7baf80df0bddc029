#!/usr/bin/env python3
"""
Time integration of  Laplace(u) - du/dt = h[u]
Theta scheme with the relay frozen per substep and threshold crossings
localized by bisection
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from relaysim.errors import (
    BoundaryMismatch,
    DtUnderflow,
    LinearSolveFailure,
)
from relaysim.grid import (
    BoundaryData,
    Grid,
    ScalarField,
    SpaceTimeField,
    laplacian_apply,
    laplacian_matrix,
    time_derivative_all,
)
from relaysim.relay import (
    NON_IDEAL,
    RELAY_MODES,
    RelayField,
    RelayParams,
    SwitchEvent,
)

COMPLETED_RUN = "completed"
DT_UNDERFLOW = "dt_underflow"

BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    t_end: float = 1.0
    theta: float = 1.0
    event_tol: float = 1e-6
    max_inner_iters: int = 60
    snapshot_stride: int = 1
    relay_mode: str = NON_IDEAL
    workers: int = 1

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not 0 < self.dt_min <= self.dt_init:
            raise ValueError(f"need 0 < dt_min <= dt_init (dt_min={self.dt_min}, dt_init={self.dt_init})")
        if not self.event_tol > 0:
            raise ValueError(f"event_tol must be positive, got {self.event_tol}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.max_inner_iters < 1 or self.snapshot_stride < 1 or self.workers < 1:
            raise ValueError("max_inner_iters, snapshot_stride and workers must be >= 1")
        if self.relay_mode not in RELAY_MODES:
            raise ValueError(f"relay_mode must be one of {RELAY_MODES}, got {self.relay_mode}")


@dataclass(frozen=True)
class SimState:
    u: ScalarField
    h: RelayField
    t: float


@dataclass(frozen=True)
class ProblemSetup:
    """Everything a run needs: grid, thresholds, initial and boundary data"""

    grid: Grid
    params: RelayParams
    phi: ScalarField
    selector: np.ndarray
    boundary: BoundaryData
    name: str = "custom"


@dataclass
class RunResult:
    u_hist: SpaceTimeField
    h_hist: SpaceTimeField
    events: Tuple[SwitchEvent, ...]
    outcome: str
    steps: int = 0
    event_steps: int = 0
    wall_time: float = 0.0
    underflow: Optional[Dict] = None
    final_state: Optional[SimState] = None


def initialize(
    phi: ScalarField,
    h0_selector: Union[int, float, np.ndarray],
    bd: BoundaryData,
    p: RelayParams,
    mode: str = NON_IDEAL,
) -> SimState:
    """Validated state at t=0: u = phi and h = h0 chosen by the selector"""
    grid = phi.grid
    selector = np.broadcast_to(np.asarray(h0_selector, dtype=float), grid.shape).ravel()
    relay = RelayField.from_selector(phi.values.ravel(), selector, p, mode)

    mask = grid.dirichlet_mask()
    if mask.any():
        psi = bd.dirichlet_values(grid, 0.0)
        mismatch = np.abs(psi[mask] - phi.values[mask])
        if np.max(mismatch) > BOUNDARY_TOL:
            raise BoundaryMismatch(
                f"Dirichlet data differs from phi at t=0 by {np.max(mismatch):.3e} "
                f"(tolerance {BOUNDARY_TOL:g})"
            )
    return SimState(u=ScalarField(grid, phi.values, 0.0), h=relay, t=0.0)


class RelaySolver:
    """
    Integrates one problem on a fixed grid.

    Linear systems are factorized once per distinct substep length and reused.
    """

    def __init__(self, grid: Grid, bd: BoundaryData, cfg: SolverConfig):
        self.grid = grid
        self.bd = bd
        self.cfg = cfg
        self.logger = logging.getLogger('RelaySolver')

        self.lap = laplacian_matrix(grid)
        self.dirichlet = grid.dirichlet_mask().ravel()
        self._factor_cache: Dict[float, object] = {}

        self.stats = {
            'steps': 0,
            'event_steps': 0,
            'bisections': 0,
            'factorizations': 0,
        }

    def _factor(self, dt: float):
        cached = self._factor_cache.get(dt)
        if cached is not None:
            return cached
        n = self.grid.size
        system = (sps.identity(n, format="csr") - self.cfg.theta * dt * self.lap).tocsr()
        if self.grid.dim == 1:
            ab = np.zeros((3, n))
            ab[0, 1:] = system.diagonal(1)
            ab[1] = system.diagonal(0)
            ab[2, :-1] = system.diagonal(-1)
            factor = ("banded", ab)
        else:
            try:
                factor = ("lu", splu(system.tocsc()))
            except RuntimeError as exc:
                raise LinearSolveFailure(f"factorization failed for dt={dt:g}: {exc}") from exc
        if len(self._factor_cache) >= 8:
            self._factor_cache.pop(next(iter(self._factor_cache)))
        self._factor_cache[dt] = factor
        self.stats['factorizations'] += 1
        return factor

    def advance(self, u: np.ndarray, h: np.ndarray, t: float, dt: float) -> np.ndarray:
        """One theta step of length dt with the relay output h frozen"""
        theta = self.cfg.theta
        rhs = u - dt * h
        if theta < 1.0:
            rhs = rhs + dt * (1.0 - theta) * (self.lap @ u + self.bd.neumann_source(self.grid, t).ravel())
        if theta > 0.0:
            rhs = rhs + theta * dt * self.bd.neumann_source(self.grid, t + dt).ravel()
        if self.dirichlet.any():
            rhs[self.dirichlet] = self.bd.dirichlet_values(self.grid, t + dt).ravel()[self.dirichlet]

        kind, factor = self._factor(dt)
        try:
            if kind == "banded":
                out = scipy.linalg.solve_banded((1, 1), factor, rhs)
            else:
                out = factor.solve(rhs)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise LinearSolveFailure(f"linear solve failed at t={t:g}, dt={dt:g}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure(f"non-finite solution at t={t:g}, dt={dt:g}")
        return out

    def _crossing_times(self, relay: RelayField, mask: np.ndarray, t: float, t_new: float,
                        u_old: np.ndarray, u_new: np.ndarray) -> np.ndarray:
        """Per-point crossing time on the linear interpolant of the committed substep"""
        times = np.full(u_old.shape, t_new)
        targets = relay.targets(u_new)
        for i in np.flatnonzero(mask):
            threshold = relay.params.beta if targets[i] > relay.values[i] else relay.params.alpha
            ua, ub = u_old[i], u_new[i]
            if ub != ua:
                crossing = t + (threshold - ua) * (t_new - t) / (ub - ua)
                times[i] = min(max(crossing, t), t_new)
        return times

    def step(self, state: SimState, dt: Optional[float] = None) -> SimState:
        """
        Commit one substep.

        Points already past a threshold are latched at the current time first.
        If the frozen-relay step makes any point switch, the substep is
        bisected until the earliest crossing is bracketed within event_tol and
        only the substep up to the bracket end is committed.
        """
        cfg = self.cfg
        t = state.t
        u = state.u.values.ravel()
        relay = state.h

        immediate = relay.pending(u, cfg.workers)
        if immediate.any():
            relay = relay.latch(u, immediate, np.full(u.shape, t))
            self.logger.debug(f"t={t:.6g}: {int(immediate.sum())} point(s) latched at the current time")

        dt = min(cfg.dt_init if dt is None else dt, cfg.t_end - t)
        u_hi = self.advance(u, relay.values, t, dt)
        mask = relay.pending(u_hi, cfg.workers)
        self.stats['steps'] += 1

        if not mask.any():
            return SimState(ScalarField(self.grid, u_hi, t + dt), relay, t + dt)

        # a point that switched within the last bracket cannot switch back
        # unless the crossing separates from t; those must be resolved down to dt_min
        recent = np.nan_to_num(relay.last_switch, nan=-np.inf) >= t - 2.0 * cfg.event_tol
        lo, hi = 0.0, dt
        iterations = 0
        while hi - lo > cfg.event_tol or (lo == 0.0 and (mask & recent).any()):
            if hi < cfg.dt_min:
                points = np.flatnonzero(mask).tolist()
                raise DtUnderflow(
                    f"crossing at t={t:.9g} cannot be separated above dt_min={cfg.dt_min:g}",
                    time=t, dt=hi, points=points,
                )
            if iterations >= cfg.max_inner_iters:
                self.logger.warning(
                    f"t={t:.6g}: bisection stopped after {iterations} iterations "
                    f"with bracket [{lo:.3e}, {hi:.3e}]"
                )
                break
            mid = 0.5 * (lo + hi)
            u_mid = self.advance(u, relay.values, t, mid)
            mid_mask = relay.pending(u_mid, cfg.workers)
            if mid_mask.any():
                hi, u_hi, mask = mid, u_mid, mid_mask
            else:
                lo = mid
            iterations += 1
        self.stats['bisections'] += iterations
        self.stats['event_steps'] += 1

        # commit at the far end of the bracket so crossings that coincide up to
        # rounding are latched together
        end = min(lo + cfg.event_tol, dt)
        if end > hi and not (mask & recent).any():
            u_end = self.advance(u, relay.values, t, end)
            end_mask = relay.pending(u_end, cfg.workers)
            if end_mask.any():
                hi, u_hi, mask = end, u_end, end_mask

        t_new = t + hi
        times = self._crossing_times(relay, mask, t, t_new, u, u_hi)
        switched = relay.latch(u_hi, mask, times)
        self.logger.debug(
            f"t={t_new:.9g}: {int(mask.sum())} switch(es) committed after {iterations} bisection(s)"
        )
        return SimState(ScalarField(self.grid, u_hi, t_new), switched, t_new)


def step(state: SimState, cfg: SolverConfig, bd: BoundaryData) -> SimState:
    """Single committed substep from a fresh solver (see RelaySolver.step)"""
    return RelaySolver(state.u.grid, bd, cfg).step(state)


def _as_setup(scenario) -> ProblemSetup:
    if isinstance(scenario, ProblemSetup):
        return scenario
    return scenario.build()


def run(cfg: SolverConfig, scenario) -> RunResult:
    """
    Integrate from t=0 to t_end.

    Snapshots are taken at t=0, every snapshot_stride commits, at every commit
    that latches a switch (together with the commit just before it) and at the
    final time. A DtUnderflow ends the run with the dt_underflow outcome.
    """
    logger = logging.getLogger('RelaySolver')
    setup = _as_setup(scenario)
    started = time.perf_counter()

    state = initialize(setup.phi, setup.selector, setup.boundary, setup.params, cfg.relay_mode)
    solver = RelaySolver(setup.grid, setup.boundary, cfg)
    logger.info(
        f"Run '{setup.name}': dim={setup.grid.dim}, points={setup.grid.size}, "
        f"T={cfg.t_end}, dt={cfg.dt_init}, theta={cfg.theta}, mode={cfg.relay_mode}"
    )

    times: List[float] = [0.0]
    u_snaps: List[np.ndarray] = [state.u.values.copy()]
    h_snaps: List[np.ndarray] = [state.h.values.reshape(setup.grid.shape).copy()]
    previous: Optional[SimState] = None
    previous_recorded = True
    commits = 0
    outcome = COMPLETED_RUN
    underflow = None
    t_stop = cfg.t_end * (1.0 - 1e-12)

    def _record(s: SimState) -> None:
        if s.t > times[-1]:
            times.append(s.t)
            u_snaps.append(s.u.values.copy())
            h_snaps.append(s.h.values.reshape(setup.grid.shape).copy())

    while state.t < t_stop:
        try:
            new_state = solver.step(state)
        except DtUnderflow as exc:
            outcome = DT_UNDERFLOW
            underflow = {'time': exc.time, 'dt': exc.dt, 'points': exc.points, 'message': str(exc)}
            logger.warning(f"Run '{setup.name}' ended in dt underflow at t={exc.time:.9g}: {len(exc.points)} point(s)")
            break
        commits += 1
        switched = len(new_state.h.events) > len(state.h.events)
        if switched:
            if previous is not None and not previous_recorded:
                _record(previous)
            _record(new_state)
            previous_recorded = True
        elif commits % cfg.snapshot_stride == 0:
            _record(new_state)
            previous_recorded = True
        else:
            previous_recorded = False
        previous = new_state
        state = new_state

    _record(state)
    wall = time.perf_counter() - started
    logger.info(
        f"Run '{setup.name}' {outcome} at t={state.t:.6g}: {solver.stats['steps']} steps, "
        f"{len(state.h.events)} switch events, {wall:.2f}s"
    )
    u_hist = SpaceTimeField(setup.grid, np.array(times), np.stack(u_snaps))
    h_hist = SpaceTimeField(setup.grid, np.array(times), np.stack(h_snaps))
    return RunResult(
        u_hist=u_hist,
        h_hist=h_hist,
        events=state.h.events,
        outcome=outcome,
        steps=solver.stats['steps'],
        event_steps=solver.stats['event_steps'],
        wall_time=wall,
        underflow=underflow,
        final_state=state,
    )


def switch_window_mask(u_hist: SpaceTimeField, events: Sequence[SwitchEvent]) -> np.ndarray:
    """Snapshot/point pairs whose central time stencil straddles a switch at that point"""
    n = len(u_hist)
    mask = np.zeros((n, u_hist.grid.size), dtype=bool)
    times = u_hist.times
    for ev in events:
        # snapshots k with t[k-1] <= time <= t[k+1]
        first = int(np.searchsorted(times, ev.time, side="left")) - 1
        last = int(np.searchsorted(times, ev.time, side="right"))
        mask[max(first, 0):min(last + 1, n), ev.point] = True
    return mask


def residual(
    u_hist: SpaceTimeField,
    h_hist: SpaceTimeField,
    bd: BoundaryData,
    events: Optional[Sequence[SwitchEvent]] = None,
) -> SpaceTimeField:
    """
    Pointwise |Lap_h u - du/dt - h| on the stored snapshots.

    Entries are NaN where the value is not meaningful: the first and last
    snapshot, Dirichlet nodes and snapshots adjacent to a switch at that point.
    Without an event log, switches are read off changes of h.
    """
    grid = u_hist.grid
    n = len(u_hist)
    out = np.full((n, grid.size), np.nan)
    if n < 3:
        return SpaceTimeField(grid, u_hist.times, out)

    du = time_derivative_all(u_hist).flat()
    h = h_hist.flat()
    if events is None:
        changed = np.zeros_like(h, dtype=bool)
        jump = h[1:] != h[:-1]
        changed[1:] |= jump
        changed[:-1] |= jump
        excluded = changed.copy()
        excluded[1:] |= changed[:-1]
        excluded[:-1] |= changed[1:]
    else:
        excluded = switch_window_mask(u_hist, events)
    excluded[:, grid.dirichlet_mask().ravel()] = True

    for k in range(1, n - 1):
        lap = laplacian_apply(u_hist.snapshot(k), bd, float(u_hist.times[k])).values.ravel()
        row = np.abs(lap - du[k] - h[k])
        row[excluded[k]] = np.nan
        out[k] = row
    return SpaceTimeField(grid, u_hist.times, out)
