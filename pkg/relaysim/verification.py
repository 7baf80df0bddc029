#!/usr/bin/env python3
"""
Property suite behind `relaysim verify`
Relay laws over seeded random traces, and per-scenario solver and
free-boundary checks with the structural claims each preset is expected to meet
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from relaysim.diagnostics import (
    DiagnosticsReport,
    analyze,
    transversality_check,
)
from relaysim.free_boundary import default_eps_grad, default_tol_u
from relaysim.grid import SpaceTimeField
from relaysim.relay import (
    DOWN,
    UP,
    InputTrace,
    RelayParams,
    RelayState,
    relay_trace,
    trace_switches,
)
from relaysim.solver import DT_UNDERFLOW, RunResult, residual, run

logger = logging.getLogger('Verification')

TRACE_SAMPLES = 24
TIME_TOL = 1e-9

CLASSIFIED = "classified"
PHASE_ORDER = "phase_order"
DT_SIGN = "dt_sign"
TRANSVERSAL = "transversal"
GAMMA0_EMPTY = "gamma0_empty"
MONOTONE = "monotone"
SEPARATION = "separation"
BAND = "band"
REFERENCE = "reference"

# claims that gate `verify` for each preset; everything else is reported only
PRESET_CLAIMS: Dict[str, Tuple[str, ...]] = {
    "oscillator": (CLASSIFIED, PHASE_ORDER, DT_SIGN),
    "transversal-1d": (PHASE_ORDER, DT_SIGN, TRANSVERSAL, GAMMA0_EMPTY, MONOTONE, SEPARATION),
    "nontransversal-1d": (),
    "band-2d": (PHASE_ORDER,),
    "manufactured-linear": (REFERENCE,),
}
DEFAULT_CLAIMS: Tuple[str, ...] = (PHASE_ORDER,)
REFERENCE_TOL = 1e-2


@dataclass
class CheckResult:
    name: str
    passed: bool
    gating: bool = True
    violations: int = 0
    detail: Dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    seed: int
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if c.gating and not c.passed]

    def to_dict(self) -> Dict:
        return {
            'seed': self.seed,
            'passed': self.passed,
            'checks': [asdict(c) for c in self.checks],
        }

    def write_yaml(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, 'w') as f:
            yaml.safe_dump(_plain(self.to_dict()), f, sort_keys=False)
        return path


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and math.isinf(value):
        return str(value)
    return value


# -- relay laws on random traces ---------------------------------------------

def random_params(rng: np.random.Generator) -> RelayParams:
    alpha = float(rng.uniform(-1.0, 1.0))
    return RelayParams(alpha, alpha + float(rng.uniform(0.05, 2.0)))


def random_trace(rng: np.random.Generator, p: RelayParams, n: int = TRACE_SAMPLES) -> InputTrace:
    """Piecewise-linear input wandering over the band, hitting the thresholds exactly now and then"""
    times = np.cumsum(rng.uniform(0.01, 1.0, n))
    values = rng.uniform(p.alpha - p.width, p.beta + p.width, n)
    exact = rng.random(n)
    values = np.where(exact < 0.1, p.alpha, np.where(exact > 0.9, p.beta, values))
    return InputTrace.from_arrays(times, values)


def random_initial(rng: np.random.Generator, trace: InputTrace, p: RelayParams) -> RelayState:
    u0 = trace.samples[0][1]
    if u0 <= p.alpha:
        return RelayState(-1)
    if u0 >= p.beta:
        return RelayState(1)
    return RelayState(int(rng.choice([-1, 1])))


def _value_at(output: Sequence[Tuple[float, int]], t: float) -> int:
    value = output[0][1]
    for time, v in output:
        if time <= t + TIME_TOL * max(1.0, abs(t)):
            value = v
    return value


def switch_law_violations(trace: InputTrace, h0: RelayState, p: RelayParams) -> List[str]:
    """Directions alternate, switches sit on the matching threshold, the output follows f at every sample"""
    problems = []
    output = relay_trace(trace, h0, p)
    scale = TIME_TOL * max(1.0, abs(p.alpha), abs(p.beta))
    previous = h0.value
    for t, direction in trace_switches(trace, h0, p):
        if (direction == UP) == (previous == 1):
            problems.append(f"repeated {direction} switch at t={t!r}")
        level = p.beta if direction == UP else p.alpha
        if abs(trace.at(t) - level) > scale:
            problems.append(f"{direction} switch at t={t!r} with u={trace.at(t)!r}")
        previous = 1 if direction == UP else -1
    for t, u in trace.samples:
        value = _value_at(output, t)
        if (u >= p.beta and value != 1) or (u <= p.alpha and value != -1):
            problems.append(f"output {value:+d} at t={t!r} where u={u!r}")
    return problems


def prefix_causal(trace: InputTrace, h0: RelayState, p: RelayParams, m: int) -> bool:
    """Output on a prefix of the input equals the full output up to the prefix end"""
    prefix = InputTrace(trace.samples[:m + 1])
    t_end = trace.samples[m][0]
    head = relay_trace(prefix, h0, p)
    full = relay_trace(trace, h0, p)
    if full[:len(head)] != head:
        return False
    # anything the full input adds must come after the prefix ends
    return len(full) == len(head) or full[len(head)][0] >= t_end - TIME_TOL * max(1.0, abs(t_end))


def rate_independent(trace: InputTrace, h0: RelayState, p: RelayParams, new_times: np.ndarray) -> bool:
    """Monotone reparametrization of time moves the switches and nothing else"""
    old_times = trace.times
    warped = InputTrace.from_arrays(new_times, trace.values)
    original = trace_switches(trace, h0, p)
    moved = trace_switches(warped, h0, p)
    if [d for _, d in original] != [d for _, d in moved]:
        return False
    expected = np.interp([t for t, _ in original], old_times, new_times)
    actual = np.array([t for t, _ in moved])
    return bool(np.all(np.abs(expected - actual) <= TIME_TOL * max(1.0, float(new_times[-1]))))


def refinement_idempotent(trace: InputTrace, h0: RelayState, p: RelayParams) -> bool:
    """Inserting the midpoints of the interpolant leaves the switches unchanged"""
    times, values = trace.times, trace.values
    fine_t = np.empty(2 * times.size - 1)
    fine_u = np.empty(2 * values.size - 1)
    fine_t[0::2], fine_u[0::2] = times, values
    fine_t[1::2] = 0.5 * (times[1:] + times[:-1])
    fine_u[1::2] = 0.5 * (values[1:] + values[:-1])
    original = trace_switches(trace, h0, p)
    refined = trace_switches(InputTrace.from_arrays(fine_t, fine_u), h0, p)
    if [d for _, d in original] != [d for _, d in refined]:
        return False
    scale = TIME_TOL * max(1.0, float(times[-1]))
    return all(abs(a - b) <= scale for (a, _), (b, _) in zip(original, refined))


def relay_property_suite(n_traces: int = 1000, seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    failures: Dict[str, List] = {"switch_law": [], "prefix_causality": [], "rate_independence": [],
                                 "refinement_idempotence": []}
    switches = 0
    for i in range(n_traces):
        p = random_params(rng)
        trace = random_trace(rng, p)
        h0 = random_initial(rng, trace, p)
        switches += len(trace_switches(trace, h0, p))

        problems = switch_law_violations(trace, h0, p)
        if problems:
            failures["switch_law"].append({'trace': i, 'problems': problems[:3]})
        m = int(rng.integers(0, len(trace.samples)))
        if not prefix_causal(trace, h0, p, m):
            failures["prefix_causality"].append({'trace': i, 'prefix': m})
        new_times = np.cumsum(rng.uniform(0.01, 2.0, len(trace.samples)))
        if not rate_independent(trace, h0, p, new_times):
            failures["rate_independence"].append({'trace': i})
        if not refinement_idempotent(trace, h0, p):
            failures["refinement_idempotence"].append({'trace': i})

    logger.info(f"Relay suite: {n_traces} traces, {switches} switches, seed {seed}")
    return [
        CheckResult(
            name=f"relay.{name}",
            passed=not found,
            violations=len(found),
            detail={'traces': n_traces, 'switches': switches, 'examples': found[:5]},
        )
        for name, found in failures.items()
    ]


# -- scenario checks ---------------------------------------------------------

def reference_error(u_hist: SpaceTimeField, reference) -> float:
    """max |u - u_ref| over the stored snapshots"""
    grid = u_hist.grid
    mesh = grid.mesh()
    y = mesh[1] if grid.dim == 2 else 0.0
    worst = 0.0
    for k, t in enumerate(u_hist.times):
        exact = np.broadcast_to(reference(x=mesh[0], y=y, t=float(t)), grid.shape)
        worst = max(worst, float(np.max(np.abs(u_hist.values[k] - exact))))
    return worst


def scenario_checks(
    spec,
    result: Optional[RunResult] = None,
    report: Optional[DiagnosticsReport] = None,
    claims: Optional[Sequence[str]] = None,
) -> List[CheckResult]:
    """
    Run (or reuse) a simulation of spec and evaluate every check.

    Checks named in claims gate the verdict; the rest are reported only.
    """
    if result is None:
        result = run(spec.solver, spec)
    if claims is None:
        claims = PRESET_CLAIMS.get(spec.name)
    if claims is None:
        claims = DEFAULT_CLAIMS + ((TRANSVERSAL,) if initially_transversal(spec) else ())
    u_hist, h_hist = result.u_hist, result.h_hist
    grid = u_hist.grid
    prefix = spec.name
    if report is None:
        report, _ = analyze(u_hist, h_hist, spec.params, spec.diagnostics, result.events,
                            result.outcome, spec.solver.event_tol, spec.name)

    checks: List[CheckResult] = []

    def add(name: str, passed: bool, violations: int = 0, **detail) -> None:
        checks.append(CheckResult(f"{prefix}.{name}", bool(passed), name in claims, violations, detail))

    law = [ev for ev in result.events
           if (ev.direction == DOWN and ev.u_value > spec.params.alpha)
           or (ev.direction == UP and ev.u_value < spec.params.beta)]
    checks.append(CheckResult(f"{prefix}.event_law", not law, True, len(law),
                              {'events': len(result.events)}))
    checks.append(CheckResult(f"{prefix}.outcome", True, False, 0,
                              {'outcome': result.outcome, 'underflow': result.underflow,
                               'steps': result.steps, 't_reached': float(u_hist.times[-1])}))

    res = residual(u_hist, h_hist, spec.boundary_data(), result.events).values
    finite = res[np.isfinite(res)]
    checks.append(CheckResult(f"{prefix}.residual", True, False, 0,
                              {'max': float(np.max(finite)) if finite.size else None,
                               'mean': float(np.mean(finite)) if finite.size else None}))

    if report.facet_counts:
        unclassified = report.facet_counts.get('unclassified', 0)
        add(CLASSIFIED, unclassified == 0, unclassified, fraction=report.unclassified_fraction)
        add(PHASE_ORDER, report.phase_ordering_violations == 0, report.phase_ordering_violations)
        sign_violations = len(report.dt_sign.get('violations', []))
        add(DT_SIGN, sign_violations == 0, sign_violations,
            sup_abs_dudt=report.dt_sign.get('sup_abs_dudt'), tol_dt=report.dt_sign.get('tol_dt'))
        add(GAMMA0_EMPTY, report.gamma0_empty, report.gamma0_witnesses)
    if report.transversality is not None:
        add(TRANSVERSAL, not report.transversality, len(report.transversality))
    if report.monotone is not None:
        failed = [v.component for v in report.monotone if not v.passed]
        add(MONOTONE, not failed, len(failed), components=len(report.monotone))
    if report.separation is not None:
        add(SEPARATION, report.separation > 2.0 * grid.h, 0 if report.separation > 2.0 * grid.h else 1,
            delta=report.separation, two_h=2.0 * grid.h)
    add(BAND, report.band.get('within_band', False), 0 if report.band.get('within_band') else 1,
        u_min=report.band.get('u_min'), u_max=report.band.get('u_max'))
    if spec.reference is not None:
        error = reference_error(u_hist, spec.reference)
        add(REFERENCE, error <= REFERENCE_TOL, 0 if error <= REFERENCE_TOL else 1, max_error=error)
    if result.outcome == DT_UNDERFLOW:
        logger.info(f"{prefix}: run ended in dt underflow (reported, not a failure)")
    return checks


def initially_transversal(spec) -> bool:
    """Transversality of the initial data alone (1D)"""
    setup = spec.build()
    if setup.grid.dim != 1:
        return False
    times = np.array([0.0])
    u0 = SpaceTimeField(setup.grid, times, setup.phi.values[None, ...])
    h0 = SpaceTimeField(setup.grid, times, setup.selector.reshape((1,) + setup.grid.shape))
    tol = default_tol_u(u0, spec.params, spec.solver.event_tol)
    return not transversality_check(u0, h0, spec.params, tol, default_eps_grad(setup.grid))


def verify(specs: Sequence, seed: int = 0, n_traces: int = 1000) -> VerificationReport:
    report = VerificationReport(seed=seed)
    report.checks.extend(relay_property_suite(n_traces, seed))
    for spec in specs:
        logger.info(f"Verifying scenario '{spec.name}'")
        report.checks.extend(scenario_checks(spec))
    for check in report.failures:
        logger.warning(f"FAILED {check.name}: {check.violations} violation(s)")
    return report
