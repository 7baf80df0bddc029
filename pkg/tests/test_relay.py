"""
Relay operator: scalar switching law, trace evaluation and the relay field
"""
import math

import numpy as np
import pytest

from relaysim.errors import InvalidInitialState, InvalidRelayParams
from relaysim.relay import (
    DOWN,
    UP,
    InputTrace,
    RelayField,
    RelayParams,
    RelayState,
    SwitchEvent,
    completed_relay_step,
    f_multivalued,
    relay_init,
    relay_step,
    relay_trace,
    trace_switches,
)

P = RelayParams(0.0, 1.0)


# -- parameters and the multivalued graph --------------------------------------

def test_params_require_alpha_below_beta():
    with pytest.raises(InvalidRelayParams):
        RelayParams(1.0, 1.0)
    with pytest.raises(InvalidRelayParams):
        RelayParams(2.0, 1.0)
    with pytest.raises(InvalidRelayParams):
        RelayParams(math.nan, 1.0)


def test_params_width_and_midpoint():
    p = RelayParams(-0.5, 1.5)
    assert p.width == 2.0
    assert p.midpoint == 0.5


@pytest.mark.parametrize("s, expected", [
    (-1.0, {-1}),
    (0.0, {-1}),
    (0.5, {-1, 1}),
    (1.0, {1}),
    (3.0, {1}),
])
def test_f_multivalued_has_closed_thresholds(s, expected):
    assert f_multivalued(s, P) == frozenset(expected)


def test_relay_init_checks_selector():
    assert relay_init(0.5, 1, P).value == 1
    assert relay_init(0.5, -1, P).value == -1
    assert relay_init(-0.2, -1, P).last_switch_time is None
    with pytest.raises(InvalidInitialState):
        relay_init(2.0, -1, P)
    with pytest.raises(InvalidInitialState):
        relay_init(0.0, 1, P)


# -- single steps --------------------------------------------------------------

def test_relay_step_keeps_value_inside_band():
    prev = RelayState(value=-1)
    assert relay_step(prev, 0.99, 1.0, P) is prev
    prev = RelayState(value=1, last_switch_time=0.3)
    assert relay_step(prev, 0.01, 1.0, P) is prev


def test_relay_step_switches_on_reaching_threshold():
    up = relay_step(RelayState(value=-1), 1.0, 2.5, P)
    assert up == RelayState(value=1, last_switch_time=2.5)
    down = relay_step(up, 0.0, 3.0, P)
    assert down == RelayState(value=-1, last_switch_time=3.0)


def test_completed_relay_holds_intermediate_values():
    assert completed_relay_step(0.25, 0.5, P) == 0.25
    assert completed_relay_step(0.25, 1.2, P) == 1.0
    assert completed_relay_step(0.25, -0.1, P) == -1.0


# -- traces --------------------------------------------------------------------

def test_input_trace_validation_and_interpolation():
    with pytest.raises(ValueError):
        InputTrace(())
    with pytest.raises(ValueError):
        InputTrace(((0.0, 0.0), (0.0, 1.0)))
    trace = InputTrace.from_arrays([0.0, 1.0, 3.0], [0.0, 1.0, -1.0])
    assert trace.at(0.5) == pytest.approx(0.5)
    assert trace.at(2.0) == pytest.approx(0.0)
    assert trace.at(10.0) == pytest.approx(-1.0)


def test_relay_trace_reports_exact_crossing_times():
    trace = InputTrace(((0.0, 0.5), (1.0, 1.5), (2.0, -0.5)))
    output = relay_trace(trace, RelayState(value=-1), P)
    assert [v for _, v in output] == [-1, 1, -1]
    assert [t for t, _ in output] == pytest.approx([0.0, 0.5, 1.75])
    assert trace_switches(trace, RelayState(value=-1), P) == [
        (pytest.approx(0.5), UP),
        (pytest.approx(1.75), DOWN),
    ]


def test_relay_trace_opening_switch_for_inconsistent_start():
    trace = InputTrace(((0.0, 1.5), (1.0, 0.5)))
    output = relay_trace(trace, RelayState(value=-1), P)
    assert output == [(0.0, -1), (0.0, 1)]


def test_relay_trace_ignores_excursions_inside_band():
    trace = InputTrace.from_arrays(np.linspace(0.0, 4.0, 41), 0.5 + 0.4 * np.sin(np.linspace(0.0, 4.0, 41)))
    assert relay_trace(trace, RelayState(value=1), P) == [(0.0, 1)]


def test_relay_trace_is_rate_independent():
    times = np.array([0.0, 0.3, 1.0, 1.2, 2.0])
    values = np.array([0.2, 1.4, 0.6, -0.3, 1.1])
    h0 = RelayState(value=-1)
    slow = relay_trace(InputTrace.from_arrays(times, values), h0, P)
    warped = relay_trace(InputTrace.from_arrays(times ** 2 + times, values), h0, P)
    assert [v for _, v in slow] == [v for _, v in warped]
    for (ts, _), (tw, _) in zip(slow, warped):
        i = np.searchsorted(times, ts, side="right") - 1
        i = min(i, len(times) - 2)
        frac = (ts - times[i]) / (times[i + 1] - times[i])
        mapped = times[i] ** 2 + times[i] + frac * ((times[i + 1] ** 2 + times[i + 1]) - (times[i] ** 2 + times[i]))
        assert tw == pytest.approx(mapped)


# -- relay field ---------------------------------------------------------------

def test_field_from_selector_rejects_inadmissible_points():
    phi = np.array([-0.5, 0.5, 1.5, 1.2])
    with pytest.raises(InvalidInitialState) as info:
        RelayField.from_selector(phi, np.array([-1.0, 1.0, -1.0, -1.0]), P)
    assert info.value.points == [2, 3]


def test_field_from_selector_maps_sign():
    relay = RelayField.from_selector(np.array([0.5, 0.5, 0.5]), np.array([0.0, -0.2, 3.0]), P)
    assert relay.values.tolist() == [1.0, -1.0, 1.0]
    assert relay.state(1) == RelayState(value=-1, last_switch_time=None)
    assert relay.size == 3


def test_field_targets_do_not_depend_on_workers(rng):
    n = 1000
    phi = rng.uniform(0.05, 0.95, n)
    relay = RelayField.from_selector(phi, rng.choice([-1.0, 1.0], n), P)
    u = rng.uniform(-0.5, 1.5, n)
    reference = relay.targets(u, workers=1)
    for workers in (2, 3, 8):
        np.testing.assert_array_equal(relay.targets(u, workers=workers), reference)
    expected = np.where(u <= 0.0, -1.0, np.where(u >= 1.0, 1.0, relay.values))
    np.testing.assert_array_equal(reference, expected)


def test_field_latch_orders_events_by_time_then_index():
    relay = RelayField.from_selector(np.full(4, 0.5), np.array([-1.0, -1.0, 1.0, -1.0]), P)
    u = np.array([1.2, 1.0, -0.1, 0.5])
    mask = relay.pending(u)
    assert mask.tolist() == [True, True, True, False]
    times = np.array([0.7, 0.4, 0.4, 0.9])
    latched = relay.latch(u, mask, times)

    assert [(ev.point, ev.direction) for ev in latched.events] == [(1, UP), (2, DOWN), (0, UP)]
    assert latched.values.tolist() == [1.0, 1.0, -1.0, -1.0]
    assert latched.state(0) == RelayState(value=1, last_switch_time=0.7)
    assert latched.event_law_violations() == []
    # the field is immutable
    assert relay.values.tolist() == [-1.0, -1.0, 1.0, -1.0]
    assert relay.events == ()


def test_event_law_violations_flags_wrong_side_inputs():
    relay = RelayField(
        params=P,
        values=np.array([1.0, -1.0]),
        last_switch=np.array([0.1, 0.2]),
        events=(
            SwitchEvent(point=0, time=0.1, direction=UP, u_value=0.8),
            SwitchEvent(point=1, time=0.2, direction=DOWN, u_value=-1e-9),
        ),
    )
    bad = relay.event_law_violations()
    assert [ev.point for ev in bad] == [0]
    assert relay.event_law_violations(tol_thresh=0.25) == []
    assert bad[0].new_value == 1
