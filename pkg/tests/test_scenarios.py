"""
Scenario configs: parsing, defaults and provenance, emission, presets, refinement
"""
from dataclasses import replace

import numpy as np
import pytest

from relaysim.errors import ConfigError, SchemaError, SemanticError, UnknownPreset
from relaysim.expressions import Expression
from relaysim.grid import DIRICHLET, NEUMANN
from relaysim.relay import COMPLETED, RelayParams
from relaysim.scenarios import (
    DEFAULT,
    USER,
    emit_config,
    parse_config,
    preset,
    preset_names,
    refine,
    travelling_wave,
)

MINIMAL = """\
name: ramp
grid:
  extents: [[0.0, 2.0]]
  counts: [21]
relay:
  alpha: -0.5
  beta: 0.5
initial:
  phi: "0.25*x - 0.25"
solver:
  t_end: 0.5
"""


def test_minimal_config_fills_defaults():
    spec = parse_config(MINIMAL)
    assert spec.name == "ramp"
    assert spec.dim == 1
    assert spec.params == RelayParams(-0.5, 0.5)
    assert spec.counts == (21,)
    assert spec.solver.t_end == 0.5
    assert spec.solver.dt_init == 1e-3
    assert spec.solver.event_tol == pytest.approx(0.5e-6)
    assert spec.selector == Expression("-1.0")
    assert [(face, kind) for face, kind, _ in spec.boundary] == [("left", NEUMANN), ("right", NEUMANN)]
    assert spec.diagnostics.eps_margin == 0.1
    assert spec.reference is None


def test_provenance_records_user_and_default_fields():
    spec = parse_config(MINIMAL)
    assert spec.provenance["relay.alpha"] == USER
    assert spec.provenance["solver.t_end"] == USER
    assert spec.provenance["solver.dt_init"] == DEFAULT
    assert spec.provenance["initial.selector"] == DEFAULT
    assert spec.provenance["boundary.left.kind"] == DEFAULT


def test_full_config_two_dimensional():
    text = """\
name: square
description: heated square
grid:
  extents: [[0, 1], [0, 1]]
  counts: [11, 11]
relay:
  alpha: 0.0
  beta: 0.1
  mode: completed
initial:
  phi: 0.05
  selector: -1
boundary:
  left: {kind: dirichlet, value: 0.05}
  right: {kind: dirichlet, value: 0.05}
  bottom: {kind: neumann, value: "pwl(x, 0, 0, 1, 0.1)"}
solver:
  dt_init: 0.002
  theta: 0.5
  workers: 2
diagnostics:
  eps_grad: 0.2
  growth: false
  measure_tols: [0.1, 0.01]
"""
    spec = parse_config(text)
    assert spec.dim == 2
    assert spec.relay_mode == COMPLETED
    assert spec.solver.relay_mode == COMPLETED
    assert spec.solver.theta == 0.5 and spec.solver.workers == 2
    kinds = dict((face, kind) for face, kind, _ in spec.boundary)
    assert kinds == {"left": DIRICHLET, "right": DIRICHLET, "bottom": NEUMANN, "top": NEUMANN}
    assert spec.diagnostics.eps_grad == 0.2
    assert spec.diagnostics.growth is False
    assert spec.diagnostics.measure_tols == (0.1, 0.01)
    setup = spec.build()
    assert setup.grid.shape == (11, 11)
    assert setup.selector.shape == (11, 11)


def test_unknown_key_reports_its_line():
    text = MINIMAL.replace("  t_end: 0.5", "  t_end: 0.5\n  dt_max: 0.1")
    with pytest.raises(SchemaError) as info:
        parse_config(text)
    assert info.value.field == "solver.dt_max"
    assert info.value.line == 12


@pytest.mark.parametrize("text", [
    "",
    "- a\n- b\n",
    "grid: [1, 2",
    MINIMAL.replace("relay:\n  alpha: -0.5\n  beta: 0.5\n", ""),
    MINIMAL.replace("counts: [21]", "counts: [21, 5]"),
    MINIMAL.replace("counts: [21]", "counts: [2.5]"),
    MINIMAL.replace('phi: "0.25*x - 0.25"', 'phi: "z + 1"'),
    MINIMAL.replace("name: ramp", "name: ramp\nextra: 1"),
    MINIMAL.replace("t_end: 0.5", "t_end: soon"),
])
def test_schema_errors(text):
    with pytest.raises(SchemaError):
        parse_config(text)


@pytest.mark.parametrize("old, new", [
    ("alpha: -0.5", "alpha: 0.5"),
    ('phi: "0.25*x - 0.25"', 'phi: "x"'),
    ("t_end: 0.5", "t_end: 0.5\n  dt_init: 0.0"),
])
def test_semantic_errors(old, new):
    with pytest.raises(SemanticError):
        parse_config(MINIMAL.replace(old, new))


def test_dirichlet_data_must_match_phi():
    text = MINIMAL + "boundary:\n  left: {kind: dirichlet, value: 1.0}\n"
    with pytest.raises(SemanticError):
        parse_config(text)


def test_config_errors_share_a_base_class():
    with pytest.raises(ConfigError):
        parse_config("grid: 3")


# -- presets -------------------------------------------------------------------

def test_presets_are_listed_and_valid():
    names = preset_names()
    assert names == ["oscillator", "transversal-1d", "nontransversal-1d", "band-2d", "manufactured-linear"]
    for name in names:
        spec = preset(name)
        assert spec.name == name
        assert spec.description
        assert all(v == DEFAULT for v in spec.provenance.values())


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        preset("sawtooth")


@pytest.mark.parametrize("name", preset_names())
def test_emitted_config_parses_back_to_the_same_scenario(name):
    spec = preset(name)
    text = emit_config(spec)
    again = parse_config(text)
    assert again == spec
    assert emit_config(again) == text
    assert again.scenario_hash() == spec.scenario_hash()


def test_scenario_hash_tracks_content():
    spec = preset("oscillator")
    changed = replace(spec, solver=replace(spec.solver, t_end=4.0))
    assert changed.scenario_hash() != spec.scenario_hash()
    assert len(spec.scenario_hash()) == 64


def test_travelling_wave_profile():
    wave = Expression(travelling_wave())
    speed, start = 0.25, 0.855
    assert float(wave(x=start, t=0.0)) == pytest.approx(1.0)
    # linear with slope 1/speed behind the front
    assert float(wave(x=start - 0.1, t=0.0)) == pytest.approx(1.0 - 0.1 / speed)
    # the front moves left at the given speed
    assert float(wave(x=start - speed * 0.4, t=0.4)) == pytest.approx(1.0)

    # u_t = u_xx - h with h = +1 ahead of the front
    x, t, d = 0.95, 0.1, 1e-4
    u_t = (wave(x=x, t=t + d) - wave(x=x, t=t - d)) / (2 * d)
    u_xx = (wave(x=x + d, t=t) - 2 * wave(x=x, t=t) + wave(x=x - d, t=t)) / d ** 2
    assert float(u_t) == pytest.approx(float(u_xx) - 1.0, abs=1e-4)


def test_manufactured_reference_matches_phi():
    spec = preset("manufactured-linear")
    x = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(spec.reference(x=x, t=0.0), spec.phi(x=x), atol=1e-14)


# -- refinement ----------------------------------------------------------------

def test_refine_halves_spacing_and_step():
    spec = preset("band-2d")
    fine = refine(spec, 2)
    assert fine.counts == (81, 81)
    assert fine.solver.dt_init == pytest.approx(spec.solver.dt_init / 4)
    assert fine.grid().h == pytest.approx(spec.grid().h / 4)
    assert refine(spec, 0) is spec
    with pytest.raises(ConfigError):
        refine(spec, -1)
