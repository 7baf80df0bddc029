"""
Space-time SVG figures
"""
import numpy as np
import pytest

from relaysim.errors import DimensionUnsupported, IndexOutOfRange
from relaysim.free_boundary import decompose
from relaysim.grid import Grid, SpaceTimeField
from relaysim.plotting import default_time_slices, emit_spacetime_svg
from relaysim.relay import RelayParams


def _disc_histories(n=4):
    """A heated disc growing in the middle of the unit square"""
    grid = Grid(extents=((0.0, 1.0), (0.0, 1.0)), counts=(11, 11))
    X, Y = grid.mesh()
    r = np.hypot(X - 0.5, Y - 0.5)
    times = np.linspace(0.0, 0.3, n)
    u = np.stack([0.5 - r + t for t in times])
    h = np.where(u >= 0.2, 1.0, -1.0)
    return SpaceTimeField(grid, times, u), SpaceTimeField(grid, times, h)


def test_oscillator_figure_is_reproducible(oscillator_run, oscillator_spec, tmp_path):
    p = oscillator_spec.params
    decomp = decompose(oscillator_run.u_hist, oscillator_run.h_hist, p, 1e-5, 0.3)
    first = emit_spacetime_svg(oscillator_run.u_hist, oscillator_run.h_hist, decomp, tmp_path / "a.svg",
                               title="oscillator")
    second = emit_spacetime_svg(oscillator_run.u_hist, oscillator_run.h_hist, decomp, tmp_path / "b.svg",
                                title="oscillator")
    data = first.read_bytes()
    assert data.startswith(b"<?xml")
    assert b"<svg" in data
    assert data == second.read_bytes()


def test_figure_without_decomposition(transversal_run, transversal_spec, tmp_path):
    path = emit_spacetime_svg(transversal_run.u_hist, transversal_run.h_hist, None, tmp_path / "front.svg",
                              p=transversal_spec.params)
    assert path.stat().st_size > 0


def test_two_dimensional_slices(tmp_path):
    u_hist, h_hist = _disc_histories()
    p = RelayParams(0.0, 0.2)
    decomp = decompose(u_hist, h_hist, p, 1e-6, 0.3)
    path = emit_spacetime_svg(u_hist, h_hist, decomp, tmp_path / "disc.svg",
                              time_slices=default_time_slices(len(u_hist)))
    again = emit_spacetime_svg(u_hist, h_hist, decomp, tmp_path / "disc2.svg",
                               time_slices=default_time_slices(len(u_hist)))
    assert path.read_bytes() == again.read_bytes()


def test_two_dimensional_needs_time_slices(tmp_path):
    u_hist, h_hist = _disc_histories()
    with pytest.raises(DimensionUnsupported):
        emit_spacetime_svg(u_hist, h_hist, None, tmp_path / "x.svg")
    with pytest.raises(IndexOutOfRange):
        emit_spacetime_svg(u_hist, h_hist, None, tmp_path / "x.svg", time_slices=[0, 9])


def test_empty_history_is_rejected(tmp_path):
    empty = SpaceTimeField.empty(Grid.interval(0.0, 1.0, 5))
    with pytest.raises(ValueError):
        emit_spacetime_svg(empty, empty, None, tmp_path / "x.svg")


@pytest.mark.parametrize("n, count, expected", [
    (10, 3, [0, 4, 9]),
    (2, 3, [0, 1]),
    (1, 3, [0]),
    (0, 3, []),
    (5, 5, [0, 1, 2, 3, 4]),
])
def test_default_time_slices(n, count, expected):
    assert default_time_slices(n, count) == expected
