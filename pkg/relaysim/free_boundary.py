#!/usr/bin/env python3
"""
Free boundary extraction
Phases of h, the interface between them and its classification into the
threshold parts, the vertical part and the degenerate subset
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from relaysim.errors import NonBinaryField
from relaysim.grid import Grid, SpaceTimeField, time_derivative_all
from relaysim.relay import RelayParams

PLUS = 1
MINUS = -1

TIME_LIKE = "time_like"
SPACE_LIKE = "space_like"

GAMMA_ALPHA = "gamma_alpha"
GAMMA_BETA = "gamma_beta"
GAMMA_V = "gamma_v"
UNCLASSIFIED = "unclassified"
FACET_CLASSES = (GAMMA_ALPHA, GAMMA_BETA, GAMMA_V, UNCLASSIFIED)

DEGENERATE = "degenerate"
NONDEGENERATE = "nondegenerate"
NOT_APPLICABLE = "not_applicable"

FACET_CSV_COLUMNS = (
    "orientation", "class", "degeneracy", "t", "x", "y",
    "u", "grad", "dudt", "snapshot_a", "point_a", "snapshot_b", "point_b",
)


@dataclass(frozen=True)
class PhaseLabeling:
    """
    Sign of h on every space-time cell and the face-connected components.

    labels and components have shape (snapshots,) + grid.shape.
    """

    grid: Grid
    times: np.ndarray
    labels: np.ndarray
    components: np.ndarray
    component_signs: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.component_signs.size)

    def component_ids(self, sign: int) -> List[int]:
        return [int(c) for c in np.flatnonzero(self.component_signs == sign)]

    @property
    def n_plus(self) -> int:
        return len(self.component_ids(PLUS))

    @property
    def n_minus(self) -> int:
        return len(self.component_ids(MINUS))

    def component_mask(self, component: int) -> np.ndarray:
        return self.components == component


@dataclass(frozen=True)
class InterfaceFacet:
    """
    Face between two adjacent space-time cells with opposite h.

    Cells are (snapshot, flat point) pairs; cell_a has the lower index along
    the facet axis (axis 0 is time). The anchor is the cell of the pair that
    lies nearer the facet's threshold, anchor_z its (t, x[, y]) coordinates.
    """

    cell_a: Tuple[int, int]
    cell_b: Tuple[int, int]
    orientation: str
    axis: int
    center: Tuple[float, ...]
    u_at_facet: float
    grad_at_facet: float
    dudt_at_facet: float
    label_a: int
    label_b: int
    anchor: Tuple[int, int]
    anchor_z: Tuple[float, ...]
    facet_class: str = UNCLASSIFIED
    degeneracy: str = NOT_APPLICABLE

    @property
    def is_threshold(self) -> bool:
        return self.facet_class in (GAMMA_ALPHA, GAMMA_BETA)


@dataclass(frozen=True)
class FreeBoundaryDecomposition:
    grid: Grid
    times: np.ndarray
    params: RelayParams
    tol_u: float
    facets: Tuple[InterfaceFacet, ...]
    eps_grad: Optional[float] = None

    def __len__(self) -> int:
        return len(self.facets)

    def by_class(self, facet_class: str) -> List[InterfaceFacet]:
        return [f for f in self.facets if f.facet_class == facet_class]

    def counts(self) -> Dict[str, int]:
        out = {name: 0 for name in FACET_CLASSES}
        out.update({TIME_LIKE: 0, SPACE_LIKE: 0, DEGENERATE: 0, NONDEGENERATE: 0})
        for f in self.facets:
            out[f.facet_class] += 1
            out[f.orientation] += 1
            if f.degeneracy != NOT_APPLICABLE:
                out[f.degeneracy] += 1
        out["total"] = len(self.facets)
        return out

    @property
    def unclassified_fraction(self) -> float:
        if not self.facets:
            return 0.0
        return len(self.by_class(UNCLASSIFIED)) / len(self.facets)

    def threshold_facets(self) -> List[InterfaceFacet]:
        return [f for f in self.facets if f.is_threshold]

    def degenerate_facets(self) -> List[InterfaceFacet]:
        return [f for f in self.facets if f.degeneracy == DEGENERATE]

    def nondegenerate_facets(self) -> List[InterfaceFacet]:
        return [f for f in self.facets if f.degeneracy == NONDEGENERATE]

    def to_rows(self) -> List[Dict]:
        rows = []
        for f in self.facets:
            t, x = f.center[0], f.center[1]
            y = f.center[2] if len(f.center) > 2 else ""
            rows.append({
                "orientation": f.orientation,
                "class": f.facet_class,
                "degeneracy": f.degeneracy,
                "t": repr(t),
                "x": repr(x),
                "y": repr(y) if y != "" else "",
                "u": repr(f.u_at_facet),
                "grad": repr(f.grad_at_facet),
                "dudt": repr(f.dudt_at_facet),
                "snapshot_a": f.cell_a[0],
                "point_a": f.cell_a[1],
                "snapshot_b": f.cell_b[0],
                "point_b": f.cell_b[1],
            })
        return rows

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One facet per row, columns FACET_CSV_COLUMNS"""
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=FACET_CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.to_rows())
        return path


def read_facets_csv(path: Union[str, Path]) -> List[Dict]:
    """Facet rows as written by FreeBoundaryDecomposition.write_csv"""
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _neighbour_pairs(shape: Tuple[int, ...], axis: int) -> Tuple[Tuple, Tuple]:
    lo = [slice(None)] * len(shape)
    hi = [slice(None)] * len(shape)
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def extract_phases(h_hist: SpaceTimeField) -> PhaseLabeling:
    """Label cells by the sign of h and split each phase into face-connected components"""
    values = h_hist.values
    if values.size and not np.all((values == 1.0) | (values == -1.0)):
        raise NonBinaryField("phase extraction needs h in {-1, +1}; completed-relay histories are not binary")

    labels = np.where(values > 0, PLUS, MINUS).astype(np.int8)
    n = labels.size
    if n == 0:
        return PhaseLabeling(h_hist.grid, h_hist.times, labels, np.zeros(labels.shape, dtype=int), np.zeros(0, dtype=int))

    index = np.arange(n).reshape(labels.shape)
    rows, cols = [], []
    for axis in range(labels.ndim):
        lo, hi = _neighbour_pairs(labels.shape, axis)
        same = labels[lo] == labels[hi]
        rows.append(index[lo][same])
        cols.append(index[hi][same])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sps.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    count, components = connected_components(graph, directed=False)

    _, first = np.unique(components, return_index=True)
    signs = labels.ravel()[first].astype(int)
    return PhaseLabeling(
        grid=h_hist.grid,
        times=h_hist.times,
        labels=labels,
        components=components.reshape(labels.shape),
        component_signs=signs,
    )


def gradient_history(u_hist: SpaceTimeField) -> SpaceTimeField:
    """|Du| on every snapshot"""
    grid = u_hist.grid
    if len(u_hist) == 0:
        return u_hist
    parts = np.gradient(u_hist.values, *grid.spacing, axis=tuple(range(1, grid.dim + 1)))
    if grid.dim == 1:
        parts = [parts]
    magnitude = np.sqrt(sum(p * p for p in parts))
    return SpaceTimeField(grid, u_hist.times, magnitude)


def default_tol_u(u_hist: SpaceTimeField, p: RelayParams, event_tol: float) -> float:
    """max(10 * event_tol * max|du/dt|, 1e-6 * (beta - alpha))"""
    floor = 1e-6 * p.width if math.isfinite(p.width) else 1e-6
    if len(u_hist) < 2:
        return floor
    rate = float(np.max(np.abs(time_derivative_all(u_hist).values)))
    return max(10.0 * event_tol * rate, floor)


def default_eps_grad(grid: Grid) -> float:
    return math.sqrt(grid.h)


def _classify(ua: np.ndarray, ub: np.ndarray, p: RelayParams, tol: float, time_like: bool) -> np.ndarray:
    dist_a = np.minimum(np.abs(ua - p.alpha), np.abs(ub - p.alpha))
    dist_b = np.minimum(np.abs(ua - p.beta), np.abs(ub - p.beta))
    if time_like:
        near_alpha = dist_a <= tol
        near_beta = dist_b <= tol
        inside = np.zeros(ua.shape, dtype=bool)
    else:
        lo = np.minimum(ua, ub)
        hi = np.maximum(ua, ub)
        near_alpha = (lo - tol <= p.alpha) & (p.alpha <= hi + tol)
        near_beta = (lo - tol <= p.beta) & (p.beta <= hi + tol)
        inside = (lo > p.alpha + tol) & (hi < p.beta - tol)

    out = np.full(ua.shape, UNCLASSIFIED, dtype=object)
    out[inside] = GAMMA_V
    out[near_beta] = GAMMA_BETA
    out[near_alpha & (~near_beta | (dist_a <= dist_b))] = GAMMA_ALPHA
    return out


def classify_facets(
    phases: PhaseLabeling,
    u_hist: SpaceTimeField,
    p: RelayParams,
    tol_u: float,
) -> FreeBoundaryDecomposition:
    """
    Collect every face between cells of opposite phase and classify it.

    Time-like facets at the alpha level set are gamma_alpha and at the beta
    level set gamma_beta. Space-like facets whose two values bracket a
    threshold (within tol_u) are the risers of a moving threshold front and
    take that threshold's class. Space-like facets with u strictly inside the
    band on both sides are gamma_v. Everything else is unclassified.
    """
    grid = u_hist.grid
    labels = phases.labels
    if labels.shape != u_hist.values.shape:
        raise ValueError("phase labeling and u history are not aligned")
    if labels.size == 0:
        return FreeBoundaryDecomposition(grid, u_hist.times, p, tol_u, tuple())

    values = u_hist.values
    grad = gradient_history(u_hist).values
    if len(u_hist) >= 2:
        dudt = time_derivative_all(u_hist).values
    else:
        dudt = np.zeros_like(values)
    times = u_hist.times
    axes = grid.axes
    flat_index = np.arange(grid.size).reshape(grid.shape)

    def _coords(k: int, idx: Tuple[int, ...]) -> Tuple[float, ...]:
        return (float(times[k]),) + tuple(float(axes[d][idx[d]]) for d in range(grid.dim))

    facets: List[InterfaceFacet] = []
    for axis in range(labels.ndim):
        lo, hi = _neighbour_pairs(labels.shape, axis)
        differ = labels[lo] != labels[hi]
        if not differ.any():
            continue
        cells = np.argwhere(differ)
        ua = values[lo][differ]
        ub = values[hi][differ]
        classes = _classify(ua, ub, p, tol_u, time_like=(axis == 0))

        for j, cell in enumerate(cells):
            a = tuple(int(c) for c in cell)
            b = list(a)
            b[axis] += 1
            b = tuple(b)
            cls = classes[j]
            if cls == GAMMA_ALPHA:
                use_b = abs(ub[j] - p.alpha) <= abs(ua[j] - p.alpha)
            elif cls == GAMMA_BETA:
                use_b = abs(ub[j] - p.beta) <= abs(ua[j] - p.beta)
            else:
                use_b = True
            anchor = b if use_b else a
            if axis == 0:
                rate = (ub[j] - ua[j]) / (times[b[0]] - times[a[0]])
            else:
                rate = float(dudt[anchor])
            ca = _coords(a[0], a[1:])
            cb = _coords(b[0], b[1:])
            facets.append(InterfaceFacet(
                cell_a=(a[0], int(flat_index[a[1:]])),
                cell_b=(b[0], int(flat_index[b[1:]])),
                orientation=TIME_LIKE if axis == 0 else SPACE_LIKE,
                axis=axis,
                center=tuple(0.5 * (x + y) for x, y in zip(ca, cb)),
                u_at_facet=float(values[anchor]),
                grad_at_facet=float(grad[anchor]),
                dudt_at_facet=float(rate),
                label_a=int(labels[a]),
                label_b=int(labels[b]),
                anchor=(anchor[0], int(flat_index[anchor[1:]])),
                anchor_z=_coords(anchor[0], anchor[1:]),
                facet_class=cls,
            ))
    return FreeBoundaryDecomposition(grid, times, p, tol_u, tuple(facets))


def check_phase_ordering(decomp: FreeBoundaryDecomposition) -> List[InterfaceFacet]:
    """
    Time-like threshold facets whose phase flip runs against the switching law.

    Crossing gamma_alpha forward in time must go from the plus phase to the
    minus phase, crossing gamma_beta the reverse.
    """
    violations = []
    for f in decomp.facets:
        if f.orientation != TIME_LIKE:
            continue
        if f.facet_class == GAMMA_ALPHA and not (f.label_a == PLUS and f.label_b == MINUS):
            violations.append(f)
        elif f.facet_class == GAMMA_BETA and not (f.label_a == MINUS and f.label_b == PLUS):
            violations.append(f)
    return violations


def split_degeneracy(
    decomp: FreeBoundaryDecomposition,
    grad: Optional[SpaceTimeField],
    eps_grad: float,
) -> FreeBoundaryDecomposition:
    """Mark threshold facets degenerate iff |Du| at the facet is <= eps_grad"""
    grad_flat = grad.flat() if grad is not None else None
    facets = []
    for f in decomp.facets:
        if not f.is_threshold:
            facets.append(replace(f, degeneracy=NOT_APPLICABLE))
            continue
        value = float(grad_flat[f.anchor]) if grad_flat is not None else f.grad_at_facet
        label = DEGENERATE if value <= eps_grad else NONDEGENERATE
        facets.append(replace(f, grad_at_facet=value, degeneracy=label))
    return replace(decomp, facets=tuple(facets), eps_grad=eps_grad)


def interior_cylinder_mask(u_hist: SpaceTimeField, eps_margin: float) -> np.ndarray:
    """Cells at space distance >= eps from the boundary and with t >= eps^2"""
    grid = u_hist.grid
    mask = np.ones(grid.shape, dtype=bool)
    for d, (lo, hi) in enumerate(grid.extents):
        axis = grid.axes[d]
        keep = (axis - lo >= eps_margin - 1e-12) & (hi - axis >= eps_margin - 1e-12)
        shape = [1] * grid.dim
        shape[d] = axis.size
        mask = mask & keep.reshape(shape)
    in_time = u_hist.times >= eps_margin ** 2 - 1e-15
    return in_time.reshape((-1,) + (1,) * grid.dim) & mask[None, ...]


def level_set_points(
    u_hist: SpaceTimeField,
    level: float,
    tol_u: float = 0.0,
    mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Space-time points of the discrete level set {u = level}.

    Nodes with |u - level| <= tol_u plus the linearly interpolated crossing on
    every space or time edge where u - level changes sign. Rows are (t, x[, y]).
    """
    grid = u_hist.grid
    values = u_hist.values - level
    if values.size == 0 or not math.isfinite(level):
        return np.zeros((0, grid.dim + 1))
    coords = np.meshgrid(u_hist.times, *grid.axes, indexing="ij")
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)

    pieces = []
    on_level = (np.abs(values) <= tol_u) & mask
    if on_level.any():
        pieces.append(np.stack([c[on_level] for c in coords], axis=1))
    for axis in range(values.ndim):
        lo, hi = _neighbour_pairs(values.shape, axis)
        va, vb = values[lo], values[hi]
        crossing = (np.sign(va) * np.sign(vb) < 0) & mask[lo] & mask[hi]
        if not crossing.any():
            continue
        weight = va[crossing] / (va[crossing] - vb[crossing])
        points = [c[lo][crossing] + weight * (c[hi][crossing] - c[lo][crossing]) for c in coords]
        pieces.append(np.stack(points, axis=1))
    if not pieces:
        return np.zeros((0, grid.dim + 1))
    return np.concatenate(pieces)


def level_set_separation(
    u_hist: SpaceTimeField,
    p: RelayParams,
    eps_margin: float,
    tol_u: float = 0.0,
) -> float:
    """
    Smallest space-time distance between the alpha and beta level sets inside
    the interior cylinder. math.inf when either set is empty there.
    """
    mask = interior_cylinder_mask(u_hist, eps_margin)
    at_alpha = level_set_points(u_hist, p.alpha, tol_u, mask)
    at_beta = level_set_points(u_hist, p.beta, tol_u, mask)
    if at_alpha.shape[0] == 0 or at_beta.shape[0] == 0:
        return math.inf
    distances, _ = cKDTree(at_beta).query(at_alpha, k=1)
    return float(np.min(distances))


def facet_points(facets: Iterable[InterfaceFacet]) -> np.ndarray:
    """Facet centers as rows (t, x[, y])"""
    rows = [f.center for f in facets]
    if not rows:
        return np.zeros((0, 2))
    return np.array(rows, dtype=float)


def parabolic_distance(z: Sequence[float], facets: Union[np.ndarray, Iterable[InterfaceFacet]]) -> float:
    """
    Largest rho such that the backward half cylinder
    {|x - x0| < rho} x (t0 - rho^2, t0] misses the set.

    z and the set points are (t, x[, y]). A point (t, x) with t <= t0 enters
    the cylinder once rho exceeds max(|x - x0|, sqrt(t0 - t)), so the
    supremum is the minimum of that quantity over the set.
    """
    points = facets if isinstance(facets, np.ndarray) else facet_points(facets)
    if points.shape[0] == 0:
        return math.inf
    z = np.asarray(z, dtype=float)
    earlier = points[:, 0] <= z[0]
    if not earlier.any():
        return math.inf
    past = points[earlier]
    space = np.sqrt(np.sum((past[:, 1:] - z[1:]) ** 2, axis=1))
    time = np.sqrt(z[0] - past[:, 0])
    return float(np.min(np.maximum(space, time)))


def decompose(
    u_hist: SpaceTimeField,
    h_hist: SpaceTimeField,
    p: RelayParams,
    tol_u: float,
    eps_grad: float,
) -> FreeBoundaryDecomposition:
    """extract_phases, classify_facets and split_degeneracy in one call"""
    phases = extract_phases(h_hist)
    decomp = classify_facets(phases, u_hist, p, tol_u)
    return split_degeneracy(decomp, gradient_history(u_hist), eps_grad)
