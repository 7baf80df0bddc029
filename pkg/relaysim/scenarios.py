#!/usr/bin/env python3
"""
Scenario specs: YAML parsing with defaults and provenance, canonical
emission, the built-in presets and grid/time refinement
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from relaysim.diagnostics import DiagnosticsConfig
from relaysim.errors import (
    BoundaryMismatch,
    ConfigError,
    InvalidInitialState,
    InvalidRelayParams,
    SchemaError,
    SemanticError,
    UnknownPreset,
)
from relaysim.expressions import Expression, as_expression
from relaysim.grid import (
    BC_KINDS,
    BoundaryCondition,
    BoundaryData,
    Grid,
    NEUMANN,
    ScalarField,
    face_names,
)
from relaysim.relay import NON_IDEAL, RELAY_MODES, RelayParams
from relaysim.solver import ProblemSetup, SolverConfig, initialize

USER = "user"
DEFAULT = "default"

SECTIONS = ("name", "description", "grid", "relay", "initial", "boundary", "solver", "diagnostics", "reference")
SOLVER_FIELDS = tuple(f.name for f in fields(SolverConfig) if f.name != "relay_mode")
DIAGNOSTICS_FIELDS = tuple(f.name for f in fields(DiagnosticsConfig))


@dataclass(frozen=True)
class ScenarioSpec:
    """
    One fully resolved problem: Grid, thresholds, phi, h0 selector, boundary
    data, solver settings and diagnostics tolerances.

    provenance maps dotted field names to 'user' or 'default' and takes no
    part in equality.
    """

    name: str
    extents: Tuple[Tuple[float, float], ...]
    counts: Tuple[int, ...]
    params: RelayParams
    phi: Expression
    selector: Expression
    boundary: Tuple[Tuple[str, str, Expression], ...]
    solver: SolverConfig
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    relay_mode: str = NON_IDEAL
    reference: Optional[Expression] = None
    description: str = ""
    provenance: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return len(self.extents)

    def grid(self) -> Grid:
        return Grid(
            extents=self.extents,
            counts=self.counts,
            bc=tuple((face, kind) for face, kind, _ in self.boundary),
        )

    def boundary_data(self) -> BoundaryData:
        return BoundaryData.from_dict({
            face: BoundaryCondition(kind, value) for face, kind, value in self.boundary
        })

    def build(self) -> ProblemSetup:
        """Sample phi and the selector on the grid"""
        grid = self.grid()
        mesh = grid.mesh()
        x = mesh[0]
        y = mesh[1] if grid.dim == 2 else 0.0
        phi = ScalarField(grid, self.phi(x=x, y=y, t=0.0), 0.0)
        raw = self.selector(x=x, y=y, t=0.0)
        if self.relay_mode == NON_IDEAL:
            selector = np.where(raw >= 0, 1.0, -1.0)
        else:
            selector = np.asarray(raw, dtype=float)
        return ProblemSetup(
            grid=grid,
            params=self.params,
            phi=phi,
            selector=selector,
            boundary=self.boundary_data(),
            name=self.name,
        )

    def validate(self) -> "ScenarioSpec":
        """Run the solver's initial checks; problems surface as SemanticError"""
        try:
            setup = self.build()
            initialize(setup.phi, setup.selector, setup.boundary, setup.params, self.relay_mode)
        except (InvalidInitialState, BoundaryMismatch) as exc:
            raise SemanticError(f"scenario '{self.name}': {exc}") from exc
        except ValueError as exc:
            raise SemanticError(f"scenario '{self.name}': {exc}") from exc
        return self

    def scenario_hash(self) -> str:
        return hashlib.sha256(emit_config(self).encode("utf-8")).hexdigest()


# -- parsing -----------------------------------------------------------------

def _node_lines(node: yaml.Node, prefix: str = "", out: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """Dotted key path -> 1-based line of its value"""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _node_lines(value, path, out)
    return out


class _Reader:
    """Typed access to the parsed document with provenance and line tracking"""

    def __init__(self, data: Dict, lines: Dict[str, int]):
        self.data = data
        self.lines = lines
        self.provenance: Dict[str, str] = {}

    def error(self, message: str, path: str) -> SchemaError:
        return SchemaError(message, field=path, line=self.lines.get(path))

    def section(self, name: str, required: bool = False) -> Dict:
        value = self.data.get(name)
        if value is None:
            if required:
                raise SchemaError(f"missing required section '{name}'", field=name)
            return {}
        if not isinstance(value, dict):
            raise self.error(f"section '{name}' must be a table", name)
        return value

    def check_keys(self, table: Dict, allowed, prefix: str) -> None:
        for key in table:
            if key not in allowed:
                path = f"{prefix}.{key}" if prefix else str(key)
                raise self.error(f"unknown key '{key}'", path)

    def get(self, table: Dict, key: str, path: str, default: Any, kind, required: bool = False):
        if key not in table or table[key] is None:
            if required:
                raise SchemaError(f"missing required field '{path}'", field=path)
            self.provenance[path] = DEFAULT
            return default
        self.provenance[path] = USER
        try:
            return kind(table[key])
        except SchemaError as exc:
            raise self.error(str(exc), path) from exc
        except (TypeError, ValueError) as exc:
            raise self.error(f"invalid value {table[key]!r}: {exc}", path) from exc


def _real(value) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", ".inf"):
            return math.inf
        if text in ("-inf", "-.inf"):
            return -math.inf
    return float(value)


def _integer(value) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError("expected an integer")
    return int(value)


def _boolean(value) -> bool:
    if not isinstance(value, bool):
        raise ValueError("expected true or false")
    return value


def _reals(value) -> Tuple[float, ...]:
    if not isinstance(value, (list, tuple)):
        raise ValueError("expected a list of numbers")
    return tuple(_real(v) for v in value)


def _optional_real(value) -> Optional[float]:
    return None if value is None else _real(value)


def _text(value) -> str:
    if not isinstance(value, str):
        raise ValueError("expected a string")
    return value


def parse_config(text: str) -> ScenarioSpec:
    """
    Parse a scenario document (grammar in docs/CONFIG.md).

    Missing optional fields take their documented defaults; every field's
    origin is recorded in ScenarioSpec.provenance.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SchemaError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from exc
    if data is None:
        raise SchemaError("empty scenario document")
    if not isinstance(data, dict):
        raise SchemaError("scenario document must be a table")
    reader = _Reader(data, _node_lines(root))
    reader.check_keys(data, SECTIONS, "")

    name = reader.get(data, "name", "name", "custom", _text)
    description = reader.get(data, "description", "description", "", _text)

    grid_t = reader.section("grid", required=True)
    reader.check_keys(grid_t, ("extents", "counts"), "grid")
    raw_extents = reader.get(grid_t, "extents", "grid.extents", None, list, required=True)
    try:
        extents = tuple(tuple(_reals(pair)) for pair in raw_extents)
    except (TypeError, ValueError) as exc:
        raise reader.error(f"extents must be [lo, hi] pairs: {exc}", "grid.extents") from exc
    if not extents or any(len(pair) != 2 for pair in extents):
        raise reader.error("extents must be a list of [lo, hi] pairs", "grid.extents")
    counts = reader.get(grid_t, "counts", "grid.counts", None, lambda v: tuple(_integer(c) for c in v), required=True)
    if len(counts) != len(extents):
        raise reader.error("counts and extents must have the same length", "grid.counts")
    dim = len(extents)
    if dim not in (1, 2):
        raise reader.error(f"dimension must be 1 or 2, got {dim}", "grid.extents")

    relay_t = reader.section("relay", required=True)
    reader.check_keys(relay_t, ("alpha", "beta", "mode"), "relay")
    alpha = reader.get(relay_t, "alpha", "relay.alpha", None, _real, required=True)
    beta = reader.get(relay_t, "beta", "relay.beta", None, _real, required=True)
    mode = reader.get(relay_t, "mode", "relay.mode", NON_IDEAL, _text)
    if mode not in RELAY_MODES:
        raise reader.error(f"mode must be one of {RELAY_MODES}", "relay.mode")
    try:
        params = RelayParams(alpha, beta)
    except InvalidRelayParams as exc:
        raise SemanticError(str(exc)) from exc

    initial_t = reader.section("initial", required=True)
    reader.check_keys(initial_t, ("phi", "selector"), "initial")
    phi = reader.get(initial_t, "phi", "initial.phi", None, as_expression, required=True)
    selector = reader.get(initial_t, "selector", "initial.selector", Expression("-1.0"), as_expression)

    boundary_t = reader.section("boundary")
    reader.check_keys(boundary_t, face_names(dim), "boundary")
    boundary = []
    for face in face_names(dim):
        entry = boundary_t.get(face) or {}
        path = f"boundary.{face}"
        if not isinstance(entry, dict):
            raise reader.error("boundary entries must be tables with kind and value", path)
        reader.check_keys(entry, ("kind", "value"), path)
        kind = reader.get(entry, "kind", f"{path}.kind", NEUMANN, _text)
        if kind not in BC_KINDS:
            raise reader.error(f"kind must be one of {BC_KINDS}", f"{path}.kind")
        value = reader.get(entry, "value", f"{path}.value", Expression("0.0"), as_expression)
        boundary.append((face, kind, value))

    solver_t = reader.section("solver")
    reader.check_keys(solver_t, SOLVER_FIELDS, "solver")
    t_end = reader.get(solver_t, "t_end", "solver.t_end", 1.0, _real)
    solver_kinds = {
        "dt_init": (1e-3, _real),
        "dt_min": (1e-12, _real),
        "theta": (1.0, _real),
        "event_tol": (1e-6 * t_end, _real),
        "max_inner_iters": (60, _integer),
        "snapshot_stride": (1, _integer),
        "workers": (1, _integer),
    }
    solver_values = {
        key: reader.get(solver_t, key, f"solver.{key}", default, kind)
        for key, (default, kind) in solver_kinds.items()
    }
    try:
        solver = SolverConfig(t_end=t_end, relay_mode=mode, **solver_values)
    except ValueError as exc:
        raise SemanticError(str(exc)) from exc

    diag_t = reader.section("diagnostics")
    reader.check_keys(diag_t, DIAGNOSTICS_FIELDS, "diagnostics")
    defaults = DiagnosticsConfig()
    diag_values = {}
    for f in fields(DiagnosticsConfig):
        default = getattr(defaults, f.name)
        if f.name in ("tol_u", "eps_grad", "r_nbhd", "tol_dt"):
            kind = _optional_real
        elif f.name == "growth_points":
            kind = _integer
        elif f.name == "measure_tols":
            kind = _reals
        elif isinstance(default, bool):
            kind = _boolean
        else:
            kind = _real
        diag_values[f.name] = reader.get(diag_t, f.name, f"diagnostics.{f.name}", default, kind)
    diagnostics = DiagnosticsConfig(**diag_values)

    ref_t = reader.section("reference")
    reader.check_keys(ref_t, ("u",), "reference")
    reference = reader.get(ref_t, "u", "reference.u", None, as_expression)

    spec = ScenarioSpec(
        name=name,
        extents=extents,
        counts=counts,
        params=params,
        phi=phi,
        selector=selector,
        boundary=tuple(boundary),
        solver=solver,
        diagnostics=diagnostics,
        relay_mode=mode,
        reference=reference,
        description=description,
        provenance=reader.provenance,
    )
    return spec.validate()


def _plain_number(value: float):
    return int(value) if isinstance(value, (int, np.integer)) else float(value)


def spec_to_dict(spec: ScenarioSpec) -> Dict:
    """Canonical nested tables, every field spelled out"""
    solver = spec.solver
    doc: Dict[str, Any] = {
        "name": spec.name,
        "description": spec.description,
        "grid": {
            "extents": [[float(lo), float(hi)] for lo, hi in spec.extents],
            "counts": [int(n) for n in spec.counts],
        },
        "relay": {
            "alpha": float(spec.params.alpha),
            "beta": float(spec.params.beta),
            "mode": spec.relay_mode,
        },
        "initial": {
            "phi": spec.phi.source,
            "selector": spec.selector.source,
        },
        "boundary": {
            face: {"kind": kind, "value": value.source} for face, kind, value in spec.boundary
        },
        "solver": {
            key: _plain_number(getattr(solver, key)) for key in SOLVER_FIELDS
        },
        "diagnostics": {},
    }
    for f in fields(DiagnosticsConfig):
        value = getattr(spec.diagnostics, f.name)
        if isinstance(value, tuple):
            value = [float(v) for v in value]
        elif isinstance(value, bool) or value is None:
            pass
        else:
            value = _plain_number(value)
        doc["diagnostics"][f.name] = value
    if spec.reference is not None:
        doc["reference"] = {"u": spec.reference.source}
    return doc


def emit_config(spec: ScenarioSpec) -> str:
    """Canonical YAML text; parse_config(emit_config(s)) == s"""
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)


# -- presets -----------------------------------------------------------------

TRAVELLING_SPEED = 0.25
TRAVELLING_START = 0.855


def travelling_wave(speed: float = TRAVELLING_SPEED, start: float = TRAVELLING_START, beta: float = 1.0) -> str:
    """
    Exact front u(x, t) = U(x - start + speed t) moving to the left.

    Behind the front U is linear with slope 1/speed (h = -1); ahead of it U
    solves U'' - speed U' = 1 (h = +1) and matches value and slope at the front.
    """
    xi = f"(x - {start!r} + {speed!r}*t)"
    ahead = f"max({xi}, 0.0)"
    return (
        f"{beta!r} + {xi}/{speed!r} "
        f"+ {2.0 / speed ** 2!r}*(exp({speed!r}*{ahead}) - 1.0 - {speed!r}*{ahead})"
    )


def _neumann(dim: int) -> Tuple[Tuple[str, str, Expression], ...]:
    return tuple((face, NEUMANN, Expression("0.0")) for face in face_names(dim))


def _dirichlet(dim: int, value: str) -> Tuple[Tuple[str, str, Expression], ...]:
    return tuple((face, "dirichlet", Expression(value)) for face in face_names(dim))


def _oscillator() -> ScenarioSpec:
    return ScenarioSpec(
        name="oscillator",
        description="Spatially constant relaxation oscillation: sawtooth u with period 2(beta - alpha)",
        extents=((0.0, 1.0),),
        counts=(11,),
        params=RelayParams(0.0, 1.0),
        phi=Expression("0.5"),
        selector=Expression("-1.0"),
        boundary=_neumann(1),
        solver=SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=3.0, event_tol=1e-6),
    )


def _transversal() -> ScenarioSpec:
    wave = travelling_wave()
    return ScenarioSpec(
        name="transversal-1d",
        description="Exact travelling beta front; transversal with an empty degenerate set",
        extents=((0.0, 1.0),),
        counts=(101,),
        params=RelayParams(0.0, 1.0),
        phi=Expression(wave),
        selector=Expression(f"x - {TRAVELLING_START!r}"),
        boundary=_dirichlet(1, wave),
        solver=SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=1.0, event_tol=1e-6),
        reference=Expression(wave),
    )


def _nontransversal() -> ScenarioSpec:
    phi = "1.0 - 4.0*(x - 0.5)**2"
    return ScenarioSpec(
        name="nontransversal-1d",
        description="phi touches beta with zero slope at x = 0.5 while h = -1 nearby",
        extents=((0.0, 1.0),),
        counts=(101,),
        params=RelayParams(0.0, 1.0),
        phi=Expression(phi),
        selector=Expression(f"({phi}) - 1.0"),
        boundary=_neumann(1),
        solver=SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=1.0, event_tol=1e-6),
    )


def _band_2d() -> ScenarioSpec:
    return ScenarioSpec(
        name="band-2d",
        description="Boundary data inside the band; confinement of u to [alpha, beta] is observed",
        extents=((0.0, 1.0), (0.0, 1.0)),
        counts=(21, 21),
        params=RelayParams(0.0, 0.1),
        phi=Expression("0.05 + 0.04*sin(pi*x)*sin(pi*y)"),
        selector=Expression("-1.0"),
        boundary=_dirichlet(2, "0.05"),
        solver=SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=0.05, event_tol=1e-7),
    )


def _manufactured() -> ScenarioSpec:
    exact = "exp(-pi**2*t)*sin(pi*x) + x**2/2"
    return ScenarioSpec(
        name="manufactured-linear",
        description="h fixed at +1 by far thresholds; exact solution for convergence studies",
        extents=((0.0, 1.0),),
        counts=(21,),
        params=RelayParams(-1e9, 1e9),
        phi=Expression("sin(pi*x) + x**2/2"),
        selector=Expression("1.0"),
        boundary=(("left", "dirichlet", Expression("0.0")), ("right", "dirichlet", Expression("0.5"))),
        solver=SolverConfig(dt_init=1e-3, dt_min=1e-12, t_end=0.1, event_tol=1e-7),
        reference=Expression(exact),
    )


PRESETS = {
    "oscillator": _oscillator,
    "transversal-1d": _transversal,
    "nontransversal-1d": _nontransversal,
    "band-2d": _band_2d,
    "manufactured-linear": _manufactured,
}


def preset_names() -> List[str]:
    return list(PRESETS)


def preset(name: str) -> ScenarioSpec:
    if name not in PRESETS:
        raise UnknownPreset(f"unknown preset '{name}'; available: {', '.join(PRESETS)}")
    spec = PRESETS[name]()
    provenance = {key: DEFAULT for key in _leaf_paths(spec_to_dict(spec))}
    return replace(spec, provenance=provenance).validate()


def _leaf_paths(doc: Dict, prefix: str = "") -> List[str]:
    paths = []
    for key, value in doc.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            paths.extend(_leaf_paths(value, path))
        else:
            paths.append(path)
    return paths


def refine(spec: ScenarioSpec, k: int) -> ScenarioSpec:
    """Halve the grid spacing and dt_init k times"""
    if k < 0:
        raise ConfigError(f"refinement level must be >= 0, got {k}")
    if k == 0:
        return spec
    counts = tuple((n - 1) * 2 ** k + 1 for n in spec.counts)
    dt_init = spec.solver.dt_init / 2 ** k
    solver = replace(spec.solver, dt_init=dt_init, dt_min=min(spec.solver.dt_min, dt_init))
    return replace(spec, counts=counts, solver=solver)
