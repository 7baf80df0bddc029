#!/usr/bin/env python3
"""
Non-ideal relay operator h[u]
Exact scalar semantics, piecewise-linear trace evaluation and the
per-grid-point relay field used by the solver
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from relaysim.errors import InvalidInitialState, InvalidRelayParams

NON_IDEAL = "non_ideal"
COMPLETED = "completed"
RELAY_MODES = (NON_IDEAL, COMPLETED)

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class RelayParams:
    """Lower and upper switching thresholds"""

    alpha: float
    beta: float

    def __post_init__(self):
        if math.isnan(self.alpha) or math.isnan(self.beta):
            raise InvalidRelayParams("thresholds must be numbers")
        if not self.alpha < self.beta:
            raise InvalidRelayParams(
                f"alpha must be < beta (alpha={self.alpha}, beta={self.beta})"
            )

    @property
    def width(self) -> float:
        return self.beta - self.alpha

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.alpha + self.beta)


@dataclass(frozen=True)
class RelayState:
    value: int
    last_switch_time: Optional[float] = None


@dataclass(frozen=True)
class SwitchEvent:
    """One committed relay switch at a grid point"""

    point: int
    time: float
    direction: str
    u_value: float

    @property
    def new_value(self) -> int:
        return 1 if self.direction == UP else -1


@dataclass(frozen=True)
class InputTrace:
    """Samples (t, u) of one input, linearly interpolated in between"""

    samples: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("InputTrace needs at least one sample")
        times = [s[0] for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("InputTrace times must be strictly increasing")

    @classmethod
    def from_arrays(cls, times: Sequence[float], values: Sequence[float]) -> "InputTrace":
        return cls(tuple((float(t), float(u)) for t, u in zip(times, values)))

    @property
    def times(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


def f_multivalued(s: float, p: RelayParams) -> FrozenSet[int]:
    """Values the relay may take for input s"""
    if s <= p.alpha:
        return frozenset({-1})
    if s >= p.beta:
        return frozenset({1})
    return frozenset({-1, 1})


def relay_init(phi_value: float, selector: int, p: RelayParams) -> RelayState:
    """Initial relay state h0 = f(phi) with the selector choosing inside the band"""
    if selector not in f_multivalued(phi_value, p):
        raise InvalidInitialState(
            f"selector {selector:+d} is not admissible for phi={phi_value} "
            f"(alpha={p.alpha}, beta={p.beta})"
        )
    return RelayState(value=selector, last_switch_time=None)


def relay_step(prev: RelayState, u_new: float, t_new: float, p: RelayParams) -> RelayState:
    if u_new <= p.alpha:
        value = -1
    elif u_new >= p.beta:
        value = 1
    else:
        value = prev.value
    if value == prev.value:
        return prev
    return RelayState(value=value, last_switch_time=t_new)


def completed_relay_step(prev_value: float, u_new: float, p: RelayParams) -> float:
    """Completed relay with constant output inside the closed band"""
    if u_new <= p.alpha:
        return -1.0
    if u_new >= p.beta:
        return 1.0
    return prev_value


def relay_trace(trace: InputTrace, h0: RelayState, p: RelayParams) -> List[Tuple[float, int]]:
    """
    Evaluate the relay along a piecewise-linear input.

    Returns the right-continuous output as (t, value) pairs: the first pair is
    the initial state at the first sample time, every further pair is a switch
    at its exact crossing time on the interpolant.
    """
    t0, u0 = trace.samples[0]
    value = h0.value
    output: List[Tuple[float, int]] = [(t0, value)]

    opening = relay_step(h0, u0, t0, p)
    if opening.value != value:
        value = opening.value
        output.append((t0, value))

    for (ta, ua), (tb, ub) in zip(trace.samples, trace.samples[1:]):
        if value == -1 and ua < p.beta <= ub:
            crossing = ta + (p.beta - ua) * (tb - ta) / (ub - ua)
            value = 1
            output.append((crossing, value))
        elif value == 1 and ub <= p.alpha < ua:
            crossing = ta + (p.alpha - ua) * (tb - ta) / (ub - ua)
            value = -1
            output.append((crossing, value))
    return output


def trace_switches(trace: InputTrace, h0: RelayState, p: RelayParams) -> List[Tuple[float, str]]:
    """Switches of relay_trace as (time, direction)"""
    output = relay_trace(trace, h0, p)
    return [(t, UP if v == 1 else DOWN) for t, v in output[1:]]


def _split_apply(func: Callable[[slice], np.ndarray], size: int, workers: int) -> np.ndarray:
    """Evaluate func over contiguous point ranges and join the pieces in index order"""
    if workers <= 1 or size < 2 * workers:
        return func(slice(0, size))
    bounds = np.linspace(0, size, workers + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(func, chunks))
    return np.concatenate(parts)


@dataclass(frozen=True)
class RelayField:
    """
    Relay state at every grid point plus the committed switch log.

    Instances are immutable snapshots; `latch` returns a new field.
    """

    params: RelayParams
    values: np.ndarray
    last_switch: np.ndarray
    events: Tuple[SwitchEvent, ...] = field(default_factory=tuple)
    mode: str = NON_IDEAL

    @classmethod
    def from_selector(
        cls,
        phi_values: np.ndarray,
        selector_values: np.ndarray,
        params: RelayParams,
        mode: str = NON_IDEAL,
    ) -> "RelayField":
        phi = np.asarray(phi_values, dtype=float).ravel()
        sel = np.asarray(selector_values, dtype=float).ravel()
        if mode == NON_IDEAL:
            sel = np.where(sel >= 0, 1.0, -1.0)
            bad = ((phi <= params.alpha) & (sel != -1.0)) | ((phi >= params.beta) & (sel != 1.0))
        else:
            bad = (
                ((phi <= params.alpha) & (sel != -1.0))
                | ((phi >= params.beta) & (sel != 1.0))
                | (np.abs(sel) > 1.0)
            )
        if bad.any():
            points = np.flatnonzero(bad)
            first = int(points[0])
            raise InvalidInitialState(
                f"initial relay state contradicts f(phi) at {len(points)} point(s), "
                f"first at index {first} (phi={phi[first]}, selector={sel[first]:+g})",
                points=points.tolist(),
            )
        return cls(
            params=params,
            values=sel.copy(),
            last_switch=np.full(phi.shape, np.nan),
            events=tuple(),
            mode=mode,
        )

    @property
    def size(self) -> int:
        return int(self.values.size)

    def state(self, point: int) -> RelayState:
        last = self.last_switch[point]
        return RelayState(
            value=int(self.values[point]),
            last_switch_time=None if math.isnan(last) else float(last),
        )

    def targets(self, u_new: np.ndarray, workers: int = 1) -> np.ndarray:
        """Relay values after feeding u_new to every point"""
        u = np.asarray(u_new, dtype=float).ravel()
        alpha, beta = self.params.alpha, self.params.beta

        def _evaluate(chunk: slice) -> np.ndarray:
            prev = self.values[chunk]
            return np.where(u[chunk] <= alpha, -1.0, np.where(u[chunk] >= beta, 1.0, prev))

        return _split_apply(_evaluate, u.size, workers)

    def pending(self, u_new: np.ndarray, workers: int = 1) -> np.ndarray:
        """Mask of points whose relay would change for input u_new"""
        return self.targets(u_new, workers) != self.values

    def latch(self, u_new: np.ndarray, mask: np.ndarray, times: np.ndarray) -> "RelayField":
        """Commit switches at the masked points with their crossing times"""
        u = np.asarray(u_new, dtype=float).ravel()
        new_values = self.values.copy()
        new_last = self.last_switch.copy()
        targets = self.targets(u)
        points = np.flatnonzero(mask)
        order = sorted(points.tolist(), key=lambda i: (float(times[i]), i))
        added: List[SwitchEvent] = []
        for i in order:
            if targets[i] == new_values[i]:
                continue
            direction = UP if targets[i] > new_values[i] else DOWN
            new_values[i] = targets[i]
            new_last[i] = float(times[i])
            added.append(SwitchEvent(point=i, time=float(times[i]), direction=direction, u_value=float(u[i])))
        return replace(self, values=new_values, last_switch=new_last, events=self.events + tuple(added))

    def event_law_violations(self, tol_thresh: float = 0.0) -> List[SwitchEvent]:
        """Events whose recorded input breaks the switch-direction law"""
        alpha, beta = self.params.alpha, self.params.beta
        return [
            ev for ev in self.events
            if (ev.direction == DOWN and ev.u_value > alpha + tol_thresh)
            or (ev.direction == UP and ev.u_value < beta - tol_thresh)
        ]
