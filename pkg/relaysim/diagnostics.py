#!/usr/bin/env python3
"""
Diagnostics over simulated histories
Growth exponents at degenerate free-boundary points, time-derivative sign
and bound laws, transversality, 1D monotone-curve structure and band probes
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from scipy import ndimage

from relaysim.errors import DimensionUnsupported, NonBinaryField, WindowTooSmall
from relaysim.free_boundary import (
    GAMMA_ALPHA,
    GAMMA_BETA,
    GAMMA_V,
    FreeBoundaryDecomposition,
    InterfaceFacet,
    PhaseLabeling,
    check_phase_ordering,
    classify_facets,
    default_eps_grad,
    default_tol_u,
    extract_phases,
    gradient_history,
    interior_cylinder_mask,
    level_set_separation,
    parabolic_distance,
    split_degeneracy,
)
from relaysim.grid import Grid, SpaceTimeField, hessian_norm, time_derivative_all
from relaysim.relay import RelayParams, SwitchEvent

logger = logging.getLogger('Diagnostics')

CYLINDER_SLACK = 1e-9
ZERO_FIELD = 1e-12


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Tolerances and toggles; None means the documented default"""

    tol_u: Optional[float] = None
    eps_grad: Optional[float] = None
    r_nbhd: Optional[float] = None
    eps_margin: float = 0.1
    tol_dt: Optional[float] = None
    growth_points: int = 3
    growth: bool = True
    transversality: bool = True
    monotone: bool = True
    separation: bool = True
    regularity: bool = True
    measure_tols: Tuple[float, ...] = (1e-1, 3e-2, 1e-2)


def default_tol_dt(u_hist: SpaceTimeField) -> float:
    """10 * (h + largest committed step)"""
    dt = float(np.max(u_hist.dts)) if len(u_hist) > 1 else 0.0
    return 10.0 * (u_hist.grid.h + dt)


def resolve_tolerances(
    u_hist: SpaceTimeField,
    p: RelayParams,
    config: DiagnosticsConfig = DiagnosticsConfig(),
    event_tol: float = 1e-6,
) -> Dict[str, float]:
    """Configured tolerances with every None replaced by its default for this history"""
    grid = u_hist.grid
    resolved = {
        'tol_u': config.tol_u if config.tol_u is not None else default_tol_u(u_hist, p, event_tol),
        'eps_grad': config.eps_grad if config.eps_grad is not None else default_eps_grad(grid),
        'r_nbhd': config.r_nbhd if config.r_nbhd is not None else 3.0 * grid.h,
        'tol_dt': config.tol_dt if config.tol_dt is not None else default_tol_dt(u_hist),
        'eps_margin': config.eps_margin,
        'event_tol': event_tol,
    }
    return {key: float(value) for key, value in resolved.items()}


@dataclass(frozen=True)
class GrowthFit:
    quantity: str
    center: Tuple[float, ...]
    threshold: float
    radii: Tuple[float, ...]
    sup_values: Tuple[float, ...]
    exponent: Optional[float]
    fit_residual: Optional[float]
    window: Tuple[float, float]
    rho0: float
    eps: float
    zero_field: bool = False


@dataclass(frozen=True)
class TransversalityViolation:
    snapshot: int
    point: int
    t: float
    x: float
    threshold: str
    u: float
    offending_points: Tuple[int, ...]


@dataclass(frozen=True)
class MonotoneVerdict:
    component: int
    sign: int
    left_pieces: int
    right_pieces: int
    passed: bool


# -- cylinders and windows ---------------------------------------------------

def parabolic_boundary_distance(z: Sequence[float], grid: Grid, t_start: float) -> float:
    """Distance of z = (t, x[, y]) to the parabolic boundary of the box over (t_start, .)"""
    z = np.asarray(z, dtype=float)
    space = min(
        min(z[1 + d] - lo, hi - z[1 + d]) for d, (lo, hi) in enumerate(grid.extents)
    )
    return max(0.0, min(space, math.sqrt(max(z[0] - t_start, 0.0))))


def admissible_window(
    u_hist: SpaceTimeField,
    z: Sequence[float],
    rho0: float,
    eps: float,
) -> Tuple[float, float]:
    """[2 max(h, sqrt(dt)), min(rho0, eps, sqrt(t_last - t0))]"""
    dt = float(np.max(u_hist.dts)) if len(u_hist) > 1 else 0.0
    lo = 2.0 * max(u_hist.grid.h, math.sqrt(dt))
    forward = math.sqrt(max(float(u_hist.times[-1]) - z[0], 0.0))
    return lo, min(rho0, eps, forward)


def cylinder_mask(u_hist: SpaceTimeField, z: Sequence[float], r: float) -> np.ndarray:
    """Closed discrete Q_r(z): |x - x0| <= r and |t - t0| <= r^2"""
    grid = u_hist.grid
    z = np.asarray(z, dtype=float)
    slack = 1.0 + CYLINDER_SLACK
    dist2 = np.zeros(grid.shape)
    for d, m in enumerate(grid.mesh()):
        dist2 = dist2 + (m - z[1 + d]) ** 2
    in_ball = dist2 <= (r * slack) ** 2
    in_time = np.abs(u_hist.times - z[0]) <= r * r * slack
    return in_time.reshape((-1,) + (1,) * grid.dim) & in_ball[None, ...]


def _fit(radii: np.ndarray, sups: np.ndarray) -> Tuple[Optional[float], Optional[float], bool]:
    positive = sups > ZERO_FIELD
    if positive.sum() < 3:
        return None, None, True
    x = np.log(radii[positive])
    y = np.log(sups[positive])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(np.sqrt(np.mean(resid ** 2))), False


def _growth(
    quantity: str,
    field_values: np.ndarray,
    u_hist: SpaceTimeField,
    z: Sequence[float],
    threshold: float,
    radii: Optional[Sequence[float]],
    gamma_v: Sequence,
    n_radii: int,
) -> GrowthFit:
    z = tuple(float(c) for c in z)
    rho0 = parabolic_distance(z, np.asarray(gamma_v, dtype=float).reshape(-1, u_hist.grid.dim + 1))
    eps = parabolic_boundary_distance(z, u_hist.grid, float(u_hist.times[0]))
    lo, hi = admissible_window(u_hist, z, rho0, eps)
    if radii is None:
        candidates = np.geomspace(lo, hi, n_radii) if hi > lo else np.zeros(0)
    else:
        candidates = np.asarray(sorted(radii), dtype=float)
    tol = CYLINDER_SLACK * max(hi, 1.0)
    admissible = candidates[(candidates >= lo - tol) & (candidates <= hi + tol)]
    if admissible.size < 3:
        raise WindowTooSmall(
            f"{admissible.size} admissible radii in [{lo:.4g}, {hi:.4g}] at z={z} "
            f"(rho0={rho0:.4g}, eps={eps:.4g})"
        )
    sups = np.array([
        float(np.max(field_values[cylinder_mask(u_hist, z, r)])) for r in admissible
    ])
    exponent, residual, zero = _fit(admissible, sups)
    return GrowthFit(
        quantity=quantity,
        center=z,
        threshold=threshold,
        radii=tuple(float(r) for r in admissible),
        sup_values=tuple(float(s) for s in sups),
        exponent=exponent,
        fit_residual=residual,
        window=(lo, hi),
        rho0=rho0,
        eps=eps,
        zero_field=zero,
    )


def growth_exponent_u(
    u_hist: SpaceTimeField,
    z0: Sequence[float],
    threshold: float,
    radii: Optional[Sequence[float]] = None,
    gamma_v: Sequence = (),
    n_radii: int = 8,
) -> GrowthFit:
    """
    Log-log slope of sup over Q_r(z0) of |u - threshold|.

    gamma_v holds (t, x[, y]) points of the vertical free boundary; they bound
    the window through the parabolic distance.
    """
    values = np.abs(u_hist.values - threshold)
    return _growth("u", values, u_hist, z0, threshold, radii, gamma_v, n_radii)


def growth_exponent_grad(
    u_hist: SpaceTimeField,
    z0: Sequence[float],
    threshold: float,
    radii: Optional[Sequence[float]] = None,
    gamma_v: Sequence = (),
    n_radii: int = 8,
) -> GrowthFit:
    """Log-log slope of sup over Q_r(z0) of |Du|; a vanishing gradient sets zero_field"""
    values = gradient_history(u_hist).values
    return _growth("grad", values, u_hist, z0, threshold, radii, gamma_v, n_radii)


# -- time derivative on the nondegenerate free boundary ----------------------

def _near_gamma_v(decomp: FreeBoundaryDecomposition, collar: int) -> np.ndarray:
    """Cells within the collar (in snapshot and grid index) of any gamma_v facet"""
    shape = (decomp.times.size,) + decomp.grid.shape
    mask = np.zeros(shape, dtype=bool)
    for f in decomp.by_class(GAMMA_V):
        for k, point in (f.cell_a, f.cell_b):
            mask[(k,) + np.unravel_index(point, decomp.grid.shape)] = True
    if collar > 0 and mask.any():
        mask = ndimage.binary_dilation(mask, structure=np.ones((3,) * len(shape), dtype=bool), iterations=collar)
    return mask


def dt_sign_and_bound_check(
    u_hist: SpaceTimeField,
    decomp: FreeBoundaryDecomposition,
    tol_dt: Optional[float] = None,
    collar: int = 2,
) -> Dict:
    """
    du/dt <= tol on nondegenerate gamma_alpha facets and >= -tol on
    nondegenerate gamma_beta facets, away from gamma_v and its collar.

    Also reports sup|du/dt| over those facets.
    """
    grid = u_hist.grid
    if tol_dt is None:
        tol_dt = default_tol_dt(u_hist)
    excluded = _near_gamma_v(decomp, collar)

    checked = 0
    sup_dt = 0.0
    violations = []
    for f in decomp.nondegenerate_facets():
        k, point = f.anchor
        if excluded[(k,) + np.unravel_index(point, grid.shape)]:
            continue
        checked += 1
        sup_dt = max(sup_dt, abs(f.dudt_at_facet))
        if f.facet_class == GAMMA_ALPHA and f.dudt_at_facet > tol_dt:
            violations.append(_facet_row(f))
        elif f.facet_class == GAMMA_BETA and f.dudt_at_facet < -tol_dt:
            violations.append(_facet_row(f))
    return {
        'tol_dt': tol_dt,
        'collar_cells': collar,
        'facets_checked': checked,
        'sup_abs_dudt': sup_dt,
        'violations': violations,
    }


def sup_dt_stability(coarse_sup: float, fine_sup: float) -> float:
    """Relative change of sup|du/dt| between a run and its refinement"""
    if coarse_sup == 0.0 and fine_sup == 0.0:
        return 0.0
    return abs(fine_sup - coarse_sup) / max(abs(coarse_sup), abs(fine_sup))


def _facet_row(f: InterfaceFacet) -> Dict:
    return {
        'class': f.facet_class,
        'orientation': f.orientation,
        'center': [float(c) for c in f.center],
        'u': f.u_at_facet,
        'grad': f.grad_at_facet,
        'dudt': f.dudt_at_facet,
    }


# -- transversality (1D) -----------------------------------------------------

def transversality_check(
    u_hist: SpaceTimeField,
    h_hist: SpaceTimeField,
    p: RelayParams,
    tol_u: float,
    eps_grad: float,
    r_nbhd: Optional[float] = None,
) -> List[TransversalityViolation]:
    """
    Wherever u has reached alpha (alpha - tol_u <= u <= alpha) with
    |u_x| <= eps_grad, h must be -1 on the whole neighbourhood of radius
    r_nbhd; dually u in [beta, beta + tol_u] needs h = +1 there.
    Boundary nodes are not tested.
    """
    grid = u_hist.grid
    if grid.dim != 1:
        raise DimensionUnsupported(f"transversality check is 1D only, got dim={grid.dim}")
    if r_nbhd is None:
        r_nbhd = 3.0 * grid.h
    x = grid.axes[0]
    reach = int(math.floor(r_nbhd / grid.h * (1.0 + CYLINDER_SLACK)))
    slope = np.abs(gradient_history(u_hist).values) if len(u_hist) else np.zeros((0, x.size))
    n = x.size

    violations: List[TransversalityViolation] = []
    for k in range(len(u_hist)):
        u = u_hist.values[k]
        h = h_hist.values[k]
        flat = slope[k] <= eps_grad
        checks = (
            ("alpha", (u >= p.alpha - tol_u) & (u <= p.alpha), -1.0),
            ("beta", (u >= p.beta) & (u <= p.beta + tol_u), 1.0),
        )
        for name, touched, required in checks:
            for i in np.flatnonzero(touched & flat):
                if i == 0 or i == n - 1:
                    continue
                lo, hi = max(0, i - reach), min(n, i + reach + 1)
                bad = lo + np.flatnonzero(h[lo:hi] != required)
                if bad.size:
                    violations.append(TransversalityViolation(
                        snapshot=k,
                        point=int(i),
                        t=float(u_hist.times[k]),
                        x=float(x[i]),
                        threshold=name,
                        u=float(u[i]),
                        offending_points=tuple(int(j) for j in bad),
                    ))
    return violations


# -- monotone structure of the phases (1D) -----------------------------------

def count_monotone_pieces(values: Sequence[float], tol: float) -> int:
    """
    Maximal monotone pieces of a sequence; reversals of size <= tol are ignored.
    """
    values = [float(v) for v in values]
    if len(values) < 2:
        return 1 if values else 0
    pieces = 1
    direction = 0
    extreme = values[0]
    for v in values[1:]:
        if direction == 0:
            if abs(v - extreme) > tol:
                direction = 1 if v > extreme else -1
                extreme = v
            continue
        if (v - extreme) * direction >= 0:
            extreme = v
        elif abs(v - extreme) > tol:
            pieces += 1
            direction = -direction
            extreme = v
    return pieces


def monotone_curve_check(phases: PhaseLabeling, tol: Optional[float] = None) -> List[MonotoneVerdict]:
    """
    Trace the left and right edge x(t) of every phase component over time and
    require each edge to split into at most two monotone pieces. Edge samples
    lying on the domain boundary are not free boundary and are skipped.

    Works on the phase labelling rather than the facet decomposition: the
    edges are component boundaries and need no facet classes.
    """
    grid = phases.grid
    if grid.dim != 1:
        raise DimensionUnsupported(f"monotone curve check is 1D only, got dim={grid.dim}")
    if tol is None:
        tol = grid.h
    x = grid.axes[0]
    n = x.size

    verdicts = []
    for component in range(phases.n_components):
        mask = phases.component_mask(component)
        left, right = [], []
        for k in range(mask.shape[0]):
            where = np.flatnonzero(mask[k])
            if where.size == 0:
                continue
            if where[0] > 0:
                left.append(x[where[0]])
            if where[-1] < n - 1:
                right.append(x[where[-1]])
        lp = count_monotone_pieces(left, tol)
        rp = count_monotone_pieces(right, tol)
        verdicts.append(MonotoneVerdict(
            component=component,
            sign=int(phases.component_signs[component]),
            left_pieces=lp,
            right_pieces=rp,
            passed=lp <= 2 and rp <= 2,
        ))
    return verdicts


def gamma0_empty_check(decomp: FreeBoundaryDecomposition) -> Tuple[bool, List[InterfaceFacet]]:
    """True iff no facet outside gamma_v is degenerate"""
    witnesses = [f for f in decomp.degenerate_facets() if f.facet_class != GAMMA_V]
    return (not witnesses), witnesses


# -- exploratory probes ------------------------------------------------------

def band_confinement_probe(
    u_hist: SpaceTimeField,
    p: RelayParams,
    events: Sequence[SwitchEvent] = (),
    outcome: str = "completed",
    tol: float = 1e-6,
) -> Dict:
    """Range of u against [alpha, beta], switch activity and the run outcome; report only"""
    u_min = float(np.min(u_hist.values)) if len(u_hist) else math.nan
    u_max = float(np.max(u_hist.values)) if len(u_hist) else math.nan
    times = [ev.time for ev in events]
    duration = float(u_hist.times[-1] - u_hist.times[0]) if len(u_hist) > 1 else 0.0
    return {
        'u_min': u_min,
        'u_max': u_max,
        'tolerance': tol,
        'within_band': bool(u_min >= p.alpha - tol and u_max <= p.beta + tol),
        'switch_events': len(times),
        'first_switch': min(times) if times else None,
        'last_switch': max(times) if times else None,
        'switch_rate': len(times) / duration if duration > 0 else 0.0,
        'outcome': outcome,
        'dt_underflow': outcome == "dt_underflow",
    }


def regularity_bound_probe(
    u_hist: SpaceTimeField,
    decomp: FreeBoundaryDecomposition,
    margin_cells: int = 2,
    eps_margin: float = 0.0,
) -> Dict:
    """
    max of |du/dt| + |D^2 u| over cells at least margin_cells away from every
    facet cell and inside the interior cylinder of size eps_margin.
    """
    grid = u_hist.grid
    if len(u_hist) < 3:
        return {'cells': 0, 'bound': None, 'margin_cells': margin_cells}
    dudt = np.abs(time_derivative_all(u_hist).values)
    d2 = np.stack([hessian_norm(u_hist.snapshot(k)) for k in range(len(u_hist))])
    total = dudt + d2

    near = np.zeros(total.shape, dtype=bool)
    for f in decomp.facets:
        for k, point in (f.cell_a, f.cell_b):
            near[(k,) + np.unravel_index(point, grid.shape)] = True
    if near.any() and margin_cells > 0:
        near = ndimage.binary_dilation(near, structure=np.ones((3,) * near.ndim, dtype=bool), iterations=margin_cells)
    keep = ~near & ~grid.boundary_mask()[None, ...]
    keep[0] = keep[-1] = False
    if eps_margin > 0:
        keep &= interior_cylinder_mask(u_hist, eps_margin)
    if not keep.any():
        return {'cells': 0, 'bound': None, 'margin_cells': margin_cells}
    return {
        'cells': int(keep.sum()),
        'bound': float(np.max(total[keep])),
        'sup_abs_dudt': float(np.max(dudt[keep])),
        'sup_hessian': float(np.max(d2[keep])),
        'margin_cells': margin_cells,
    }


def level_set_measure_fraction(
    u_hist: SpaceTimeField,
    p: RelayParams,
    tols: Sequence[float],
) -> Dict:
    """
    Fraction of space-time cells within tol of each threshold, per tol, and
    the log-log slope of fraction against tol (about 1 for a null level set).
    """
    out: Dict = {'tols': [float(t) for t in tols]}
    values = u_hist.values
    for name, level in (("alpha", p.alpha), ("beta", p.beta)):
        fractions = [float(np.mean(np.abs(values - level) <= t)) if values.size else 0.0 for t in tols]
        out[f'{name}_fractions'] = fractions
        positive = [(t, f) for t, f in zip(tols, fractions) if f > 0]
        if len(positive) >= 2:
            slope = np.polyfit(np.log([t for t, _ in positive]), np.log([f for _, f in positive]), 1)[0]
            out[f'{name}_slope'] = float(slope)
        else:
            out[f'{name}_slope'] = None
    return out


# -- report ------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    scenario: str
    tolerances: Dict
    sup_abs_u: float
    outcome: str
    facet_counts: Dict = field(default_factory=dict)
    unclassified_fraction: float = 0.0
    phase_ordering_violations: int = 0
    growth_u: List[GrowthFit] = field(default_factory=list)
    growth_grad: List[GrowthFit] = field(default_factory=list)
    growth_skipped: List[str] = field(default_factory=list)
    dt_sign: Dict = field(default_factory=dict)
    separation: Optional[float] = None
    transversality: Optional[List[TransversalityViolation]] = None
    monotone: Optional[List[MonotoneVerdict]] = None
    gamma0_empty: bool = True
    gamma0_witnesses: int = 0
    band: Dict = field(default_factory=dict)
    regularity: Dict = field(default_factory=dict)
    measure: Dict = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['transversality_violations'] = None if self.transversality is None else len(self.transversality)
        data['monotone_passed'] = None if self.monotone is None else all(v.passed for v in self.monotone)
        return _plain(data)

    def write_yaml(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, default_flow_style=None)
        return path

    def write_csv_tables(self, directory: Union[str, Path]) -> List[Path]:
        """growth.csv, dt_sign_violations.csv, transversality.csv and monotone.csv"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []

        rows = []
        for fit in self.growth_u + self.growth_grad:
            for r, s in zip(fit.radii, fit.sup_values):
                rows.append({
                    'quantity': fit.quantity,
                    'center': ' '.join(repr(c) for c in fit.center),
                    'radius': repr(r),
                    'sup': repr(s),
                    'exponent': '' if fit.exponent is None else repr(fit.exponent),
                })
        written.append(_write_csv(directory / 'growth.csv', ['quantity', 'center', 'radius', 'sup', 'exponent'], rows))

        rows = [
            {**v, 'center': ' '.join(repr(c) for c in v['center'])}
            for v in self.dt_sign.get('violations', [])
        ]
        written.append(_write_csv(
            directory / 'dt_sign_violations.csv',
            ['class', 'orientation', 'center', 'u', 'grad', 'dudt'], rows,
        ))

        rows = [
            {'snapshot': v.snapshot, 'point': v.point, 't': repr(v.t), 'x': repr(v.x),
             'threshold': v.threshold, 'u': repr(v.u),
             'offending_points': ' '.join(str(j) for j in v.offending_points)}
            for v in (self.transversality or [])
        ]
        written.append(_write_csv(
            directory / 'transversality.csv',
            ['snapshot', 'point', 't', 'x', 'threshold', 'u', 'offending_points'], rows,
        ))

        rows = [asdict(v) for v in (self.monotone or [])]
        written.append(_write_csv(
            directory / 'monotone.csv',
            ['component', 'sign', 'left_pieces', 'right_pieces', 'passed'], rows,
        ))
        return written


def _write_csv(path: Path, columns: List[str], rows: List[Dict]) -> Path:
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    return path


def _plain(value):
    """numpy scalars and tuples to YAML-safe builtins"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def analyze(
    u_hist: SpaceTimeField,
    h_hist: SpaceTimeField,
    p: RelayParams,
    config: DiagnosticsConfig = DiagnosticsConfig(),
    events: Sequence[SwitchEvent] = (),
    outcome: str = "completed",
    event_tol: float = 1e-6,
    scenario: str = "custom",
) -> Tuple[DiagnosticsReport, Optional[FreeBoundaryDecomposition]]:
    """Every diagnostic that applies to the histories, assembled in a fixed order"""
    grid = u_hist.grid
    tolerances = resolve_tolerances(u_hist, p, config, event_tol)
    tol_u = tolerances['tol_u']
    eps_grad = tolerances['eps_grad']
    r_nbhd = tolerances['r_nbhd']
    report = DiagnosticsReport(
        scenario=scenario,
        tolerances=tolerances,
        sup_abs_u=float(np.max(np.abs(u_hist.values))) if len(u_hist) else 0.0,
        outcome=outcome,
    )
    report.band = band_confinement_probe(u_hist, p, events, outcome)
    if len(u_hist) < 2:
        report.notes.append("fewer than two snapshots; free-boundary diagnostics skipped")
        return report, None

    try:
        phases = extract_phases(h_hist)
    except NonBinaryField as exc:
        report.notes.append(f"free boundary not extracted: {exc}")
        logger.warning(f"{scenario}: free boundary not extracted: {exc}")
        return report, None
    decomp = classify_facets(phases, u_hist, p, tol_u)
    decomp = split_degeneracy(decomp, gradient_history(u_hist), eps_grad)

    report.facet_counts = decomp.counts()
    report.unclassified_fraction = decomp.unclassified_fraction
    report.phase_ordering_violations = len(check_phase_ordering(decomp))
    report.dt_sign = dt_sign_and_bound_check(u_hist, decomp, tolerances['tol_dt'])
    empty, witnesses = gamma0_empty_check(decomp)
    report.gamma0_empty = empty
    report.gamma0_witnesses = len(witnesses)

    if config.growth:
        gamma_v = [f.center for f in decomp.by_class(GAMMA_V)]
        candidates = [f for f in decomp.degenerate_facets() if f.facet_class != GAMMA_V]
        # deepest points of the parabolic interior first
        candidates.sort(key=lambda f: -parabolic_boundary_distance(f.anchor_z, grid, float(u_hist.times[0])))
        for f in candidates[:max(config.growth_points, 0)]:
            threshold = p.alpha if f.facet_class == GAMMA_ALPHA else p.beta
            for fit_fn, bucket in ((growth_exponent_u, report.growth_u), (growth_exponent_grad, report.growth_grad)):
                try:
                    bucket.append(fit_fn(u_hist, f.anchor_z, threshold, gamma_v=gamma_v))
                except WindowTooSmall as exc:
                    report.growth_skipped.append(str(exc))

    if config.separation:
        report.separation = level_set_separation(u_hist, p, config.eps_margin, tol_u)

    if grid.dim == 1:
        if config.transversality:
            report.transversality = transversality_check(u_hist, h_hist, p, tol_u, eps_grad, r_nbhd)
        if config.monotone:
            report.monotone = monotone_curve_check(phases)
    else:
        report.notes.append("transversality and monotone-curve checks are 1D only")

    if config.regularity:
        report.regularity = regularity_bound_probe(u_hist, decomp, eps_margin=config.eps_margin)
    report.measure = level_set_measure_fraction(u_hist, p, config.measure_tols)
    return report, decomp
