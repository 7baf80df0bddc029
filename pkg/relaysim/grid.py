#!/usr/bin/env python3
"""
Grids, fields and finite-difference operators
Vertex-centered boxes in 1D/2D with Dirichlet or Neumann faces
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps

from relaysim.errors import IndexOutOfRange
from relaysim.expressions import Expression, as_expression

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
BC_KINDS = (DIRICHLET, NEUMANN)

# face name -> (axis, side); side 0 is the low end of the axis
FACES: Dict[int, Tuple[Tuple[str, int, int], ...]] = {
    1: (("left", 0, 0), ("right", 0, 1)),
    2: (("left", 0, 0), ("right", 0, 1), ("bottom", 1, 0), ("top", 1, 1)),
}


def face_names(dim: int) -> List[str]:
    return [name for name, _, _ in FACES[dim]]


@dataclass(frozen=True)
class Grid:
    """Box discretization: nodes include the boundary"""

    extents: Tuple[Tuple[float, float], ...]
    counts: Tuple[int, ...]
    bc: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if len(self.extents) not in FACES:
            raise ValueError(f"only 1D and 2D grids are supported, got dim={len(self.extents)}")
        if len(self.counts) != len(self.extents):
            raise ValueError("extents and counts must have the same length")
        for (lo, hi), n in zip(self.extents, self.counts):
            if not hi > lo:
                raise ValueError(f"empty extent [{lo}, {hi}]")
            if int(n) < 3:
                raise ValueError(f"need at least 3 points per axis, got {n}")
        kinds = dict(self.bc)
        if not kinds:
            kinds = {name: NEUMANN for name in face_names(self.dim)}
        for name in face_names(self.dim):
            kind = kinds.get(name, NEUMANN)
            if kind not in BC_KINDS:
                raise ValueError(f"unknown boundary kind '{kind}' on face '{name}'")
            kinds[name] = kind
        object.__setattr__(self, "bc", tuple((name, kinds[name]) for name in face_names(self.dim)))
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        object.__setattr__(self, "extents", tuple((float(lo), float(hi)) for lo, hi in self.extents))

    @classmethod
    def interval(cls, lo: float, hi: float, n: int, left: str = NEUMANN, right: str = NEUMANN) -> "Grid":
        return cls(extents=((lo, hi),), counts=(n,), bc=(("left", left), ("right", right)))

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.extents, self.counts))

    @property
    def h(self) -> float:
        return max(self.spacing)

    def bc_kind(self, face: str) -> str:
        return dict(self.bc)[face]

    @property
    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.extents, self.counts)]

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (size, dim) in row-major order"""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def face_slice(self, face: str) -> Tuple:
        for name, axis, side in FACES[self.dim]:
            if name == face:
                index = [slice(None)] * self.dim
                index[axis] = 0 if side == 0 else -1
                return tuple(index)
        raise KeyError(face)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for name in face_names(self.dim):
            mask[self.face_slice(name)] = True
        return mask

    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for name, kind in self.bc:
            if kind == DIRICHLET:
                mask[self.face_slice(name)] = True
        return mask

    def cell_weights(self) -> np.ndarray:
        """Trapezoid control volumes (half cells on faces)"""
        weights = np.ones(self.shape)
        for axis, h in enumerate(self.spacing):
            w = np.full(self.counts[axis], h)
            w[0] = w[-1] = 0.5 * h
            shape = [1] * self.dim
            shape[axis] = self.counts[axis]
            weights = weights * w.reshape(shape)
        return weights

    def refined(self) -> "Grid":
        """Halve the spacing on every axis"""
        return Grid(extents=self.extents, counts=tuple(2 * n - 1 for n in self.counts), bc=self.bc)


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    value: Expression = field(default_factory=lambda: Expression("0.0"))

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind '{self.kind}'")
        object.__setattr__(self, "value", as_expression(self.value))


@dataclass(frozen=True)
class BoundaryData:
    """Boundary condition per face: u = psi1 or du/dn = psi2"""

    faces: Tuple[Tuple[str, BoundaryCondition], ...]

    @classmethod
    def from_dict(cls, faces: Dict[str, BoundaryCondition]) -> "BoundaryData":
        return cls(tuple(sorted(faces.items())))

    @classmethod
    def homogeneous_neumann(cls, dim: int) -> "BoundaryData":
        return cls.from_dict({name: BoundaryCondition(NEUMANN) for name in face_names(dim)})

    def condition(self, face: str) -> BoundaryCondition:
        return dict(self.faces).get(face, BoundaryCondition(NEUMANN))

    def kinds(self) -> Dict[str, str]:
        return {name: bc.kind for name, bc in self.faces}

    def matches(self, grid: Grid) -> bool:
        return all(self.condition(name).kind == kind for name, kind in grid.bc)

    def face_values(self, grid: Grid, face: str, t: float) -> np.ndarray:
        index = grid.face_slice(face)
        coords = [m[index] for m in grid.mesh()]
        x = coords[0]
        y = coords[1] if grid.dim == 2 else 0.0
        return self.condition(face).value(x=x, y=y, t=t)

    def dirichlet_values(self, grid: Grid, t: float) -> np.ndarray:
        """Prescribed values on Dirichlet nodes, NaN elsewhere"""
        out = np.full(grid.shape, np.nan)
        for name, kind in grid.bc:
            if kind == DIRICHLET:
                out[grid.face_slice(name)] = self.face_values(grid, name, t)
        return out

    def neumann_source(self, grid: Grid, t: float) -> np.ndarray:
        """Ghost-point flux terms 2*psi2/h added on Neumann nodes"""
        out = np.zeros(grid.shape)
        for name, axis, _ in FACES[grid.dim]:
            if grid.bc_kind(name) == NEUMANN:
                out[grid.face_slice(name)] += 2.0 * self.face_values(grid, name, t) / grid.spacing[axis]
        out[grid.dirichlet_mask()] = 0.0
        return out


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("ScalarField values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpaceTimeField:
    """Snapshots of one quantity on a shared grid, time stamps strictly increasing"""

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).reshape((times.size,) + self.grid.shape)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls, grid: Grid) -> "SpaceTimeField":
        return cls(grid=grid, times=np.zeros(0), values=np.zeros((0,) + grid.shape))

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[ScalarField]) -> "SpaceTimeField":
        if not snapshots:
            raise ValueError("need at least one snapshot")
        grid = snapshots[0].grid
        if any(s.grid != grid for s in snapshots):
            raise ValueError("all snapshots must share one grid")
        return cls(
            grid=grid,
            times=np.array([s.time for s in snapshots]),
            values=np.stack([s.values for s in snapshots]),
        )

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    def snapshot(self, k: int) -> ScalarField:
        if not 0 <= k < len(self):
            raise IndexOutOfRange(f"snapshot {k} outside [0, {len(self) - 1}]")
        return ScalarField(self.grid, self.values[k], float(self.times[k]))

    def flat(self) -> np.ndarray:
        """Values reshaped to (snapshots, points)"""
        return self.values.reshape(len(self), self.grid.size)

    def mirrored(self) -> "SpaceTimeField":
        """Same data with time reversed (t -> t_last + t_first - t)"""
        if len(self) == 0:
            return self
        times = self.times[-1] + self.times[0] - self.times[::-1]
        return SpaceTimeField(self.grid, times, self.values[::-1].copy())


def _axis_operator(n: int, h: float, lo_kind: str, hi_kind: str) -> sps.spmatrix:
    lower = np.ones(n - 1)
    upper = np.ones(n - 1)
    if lo_kind == NEUMANN:
        upper[0] = 2.0
    if hi_kind == NEUMANN:
        lower[-1] = 2.0
    return sps.diags([lower, np.full(n, -2.0), upper], [-1, 0, 1], format="csr") / (h * h)


def laplacian_matrix(grid: Grid) -> sps.csr_matrix:
    """
    Second-order Laplacian on all nodes (row-major order).

    Neumann rows use ghost reflection (the flux enters through
    BoundaryData.neumann_source); Dirichlet rows are zero.
    """
    ops = []
    for axis in range(grid.dim):
        lo = grid.bc_kind(FACES[grid.dim][2 * axis][0])
        hi = grid.bc_kind(FACES[grid.dim][2 * axis + 1][0])
        ops.append(_axis_operator(grid.counts[axis], grid.spacing[axis], lo, hi))
    if grid.dim == 1:
        lap = ops[0]
    else:
        nx, ny = grid.counts
        lap = sps.kron(ops[0], sps.identity(ny)) + sps.kron(sps.identity(nx), ops[1])
    keep = (~grid.dirichlet_mask()).ravel().astype(float)
    return (sps.diags(keep) @ lap).tocsr()


def _extrapolate_dirichlet(grid: Grid, lap: np.ndarray) -> None:
    for name, axis, side in FACES[grid.dim]:
        if grid.bc_kind(name) != DIRICHLET:
            continue
        moved = np.moveaxis(lap, axis, 0)
        if side == 0:
            moved[0] = 2.0 * moved[1] - moved[2]
        else:
            moved[-1] = 2.0 * moved[-2] - moved[-3]


def laplacian_apply(f: ScalarField, bd: BoundaryData, t: float) -> ScalarField:
    """
    Discrete Laplacian of f at time t.

    Dirichlet nodes take psi1(., t) before the stencil is applied and report
    the Laplacian linearly extrapolated from the interior.
    """
    grid = f.grid
    u = f.values.copy()
    mask = grid.dirichlet_mask()
    if mask.any():
        u[mask] = bd.dirichlet_values(grid, t)[mask]
    lap = (laplacian_matrix(grid) @ u.ravel()).reshape(grid.shape) + bd.neumann_source(grid, t)
    _extrapolate_dirichlet(grid, lap)
    return ScalarField(grid, lap, t)


def gradient(f: ScalarField) -> List[np.ndarray]:
    """Central differences inside, one-sided on the boundary"""
    parts = np.gradient(f.values, *f.grid.spacing)
    return [parts] if f.grid.dim == 1 else list(parts)


def gradient_magnitude(f: ScalarField) -> ScalarField:
    parts = gradient(f)
    return ScalarField(f.grid, np.sqrt(sum(p * p for p in parts)), f.time)


def time_derivative(field: SpaceTimeField, k: int) -> ScalarField:
    """d/dt at snapshot k on the logged (possibly nonuniform) time stamps"""
    n = len(field)
    if n < 2:
        raise IndexOutOfRange("time derivative needs at least two snapshots")
    if not 0 <= k < n:
        raise IndexOutOfRange(f"snapshot {k} outside [0, {n - 1}]")
    t, u = field.times, field.values
    if k == 0:
        du = (u[1] - u[0]) / (t[1] - t[0])
    elif k == n - 1:
        du = (u[k] - u[k - 1]) / (t[k] - t[k - 1])
    else:
        h1 = t[k] - t[k - 1]
        h2 = t[k + 1] - t[k]
        du = (
            -h2 / (h1 * (h1 + h2)) * u[k - 1]
            + (h2 - h1) / (h1 * h2) * u[k]
            + h1 / (h2 * (h1 + h2)) * u[k + 1]
        )
    return ScalarField(field.grid, du, float(t[k]))


def time_derivative_all(field: SpaceTimeField) -> SpaceTimeField:
    if len(field) < 2:
        raise IndexOutOfRange("time derivative needs at least two snapshots")
    du = np.gradient(field.values, field.times, axis=0)
    return SpaceTimeField(field.grid, field.times, du)


def second_derivatives(f: ScalarField) -> Dict[str, ScalarField]:
    """
    Compact second differences per axis ('xx', 'yy') and the mixed 'xy' in 2D.

    Boundary nodes copy the adjacent interior value.
    """
    names = ("xx", "yy")
    out: Dict[str, ScalarField] = {}
    for axis, h in enumerate(f.grid.spacing):
        u = np.moveaxis(f.values, axis, 0)
        d2 = np.empty_like(u)
        d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
        d2[0] = d2[1]
        d2[-1] = d2[-2]
        out[names[axis]] = ScalarField(f.grid, np.moveaxis(d2, 0, axis), f.time)
    if f.grid.dim == 2:
        hx, hy = f.grid.spacing
        mixed = np.gradient(np.gradient(f.values, hx, axis=0), hy, axis=1)
        out["xy"] = ScalarField(f.grid, mixed, f.time)
    return out


def hessian_norm(f: ScalarField) -> np.ndarray:
    """Frobenius norm of the discrete D^2 u"""
    parts = second_derivatives(f)
    total = parts["xx"].values ** 2
    if f.grid.dim == 2:
        total = total + parts["yy"].values ** 2 + 2.0 * parts["xy"].values ** 2
    return np.sqrt(total)


def weighted_total(f: ScalarField) -> float:
    """Cell-volume weighted grid sum, compensated and in fixed order"""
    return math.fsum((f.values * f.grid.cell_weights()).ravel().tolist())
