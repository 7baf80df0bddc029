#!/usr/bin/env python3
"""
Run artifacts on disk
Binary snapshot container, switch-event CSV, run manifest and the output lock
"""
from __future__ import annotations

import csv
import os
import struct
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from relaysim.errors import CorruptFile, OutputLocked
from relaysim.grid import DIRICHLET, NEUMANN, Grid, SpaceTimeField, face_names
from relaysim.relay import DOWN, UP, SwitchEvent

MAGIC = b"RLYPB1"
H_SIGNED = 0
H_QUANTIZED = 1
QUANT = 127.0

SNAPSHOT_FILE = "snapshots.rlyp"
EVENTS_FILE = "events.csv"
MANIFEST_FILE = "manifest.yaml"
LOCK_FILE = ".relaysim.lock"

EVENT_COLUMNS = ("point", "time", "direction", "u_value", "x", "y")

_BC_CODES = {NEUMANN: 0, DIRICHLET: 1}
_BC_NAMES = {v: k for k, v in _BC_CODES.items()}


def _header(grid: Grid, n_snapshots: int, h_encoding: int) -> bytes:
    parts = [MAGIC, struct.pack("<BB", grid.dim, h_encoding)]
    for (lo, hi), n in zip(grid.extents, grid.counts):
        parts.append(struct.pack("<ddI", lo, hi, n))
    parts.append(bytes(_BC_CODES[kind] for _, kind in grid.bc))
    parts.append(struct.pack("<Q", n_snapshots))
    return b"".join(parts)


def write_snapshots(u_hist: SpaceTimeField, h_hist: SpaceTimeField, path: Union[str, Path]) -> Path:
    """
    Header: magic, dim, h encoding, per-axis (lo, hi, count), one boundary
    kind byte per face, snapshot count. Then per snapshot t (float64), u
    row-major (float64) and h (int8). Everything little-endian.
    """
    path = Path(path)
    if u_hist.grid != h_hist.grid or not np.array_equal(u_hist.times, h_hist.times):
        raise ValueError("u and h histories are not aligned")
    h_values = h_hist.flat()
    binary = bool(np.all((h_values == 1.0) | (h_values == -1.0)))
    encoding = H_SIGNED if binary else H_QUANTIZED
    if binary:
        h_bytes = h_values.astype(np.int8)
    else:
        h_bytes = np.clip(np.rint(h_values * QUANT), -QUANT, QUANT).astype(np.int8)

    u_values = u_hist.flat().astype("<f8")
    with open(path, "wb") as f:
        f.write(_header(u_hist.grid, len(u_hist), encoding))
        for k in range(len(u_hist)):
            f.write(struct.pack("<d", float(u_hist.times[k])))
            f.write(u_values[k].tobytes())
            f.write(h_bytes[k].tobytes())
    return path


def read_snapshots(path: Union[str, Path]) -> Tuple[SpaceTimeField, SpaceTimeField]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 2 or data[:len(MAGIC)] != MAGIC:
        raise CorruptFile(f"{path}: not a snapshot container (bad magic)")
    offset = len(MAGIC)
    dim, encoding = struct.unpack_from("<BB", data, offset)
    offset += 2
    if dim not in (1, 2) or encoding not in (H_SIGNED, H_QUANTIZED):
        raise CorruptFile(f"{path}: bad header (dim={dim}, encoding={encoding})")

    axis_size = struct.calcsize("<ddI")
    if len(data) < offset + dim * axis_size + 2 * dim + 8:
        raise CorruptFile(f"{path}: truncated header")
    extents, counts = [], []
    for _ in range(dim):
        lo, hi, n = struct.unpack_from("<ddI", data, offset)
        offset += axis_size
        extents.append((lo, hi))
        counts.append(n)
    faces = face_names(dim)
    try:
        bc = tuple((name, _BC_NAMES[code]) for name, code in zip(faces, data[offset:offset + len(faces)]))
    except KeyError as exc:
        raise CorruptFile(f"{path}: unknown boundary code") from exc
    offset += len(faces)
    (n_snapshots,) = struct.unpack_from("<Q", data, offset)
    offset += 8

    try:
        grid = Grid(extents=tuple(extents), counts=tuple(counts), bc=bc)
    except ValueError as exc:
        raise CorruptFile(f"{path}: bad grid in header: {exc}") from exc
    record = 8 + 9 * grid.size
    if len(data) != offset + n_snapshots * record:
        raise CorruptFile(
            f"{path}: expected {n_snapshots} snapshot(s) of {record} bytes, "
            f"found {len(data) - offset} bytes"
        )
    if n_snapshots == 0:
        return SpaceTimeField.empty(grid), SpaceTimeField.empty(grid)

    times = np.empty(n_snapshots)
    u = np.empty((n_snapshots, grid.size))
    h = np.empty((n_snapshots, grid.size))
    for k in range(n_snapshots):
        (times[k],) = struct.unpack_from("<d", data, offset)
        offset += 8
        u[k] = np.frombuffer(data, dtype="<f8", count=grid.size, offset=offset)
        offset += 8 * grid.size
        raw = np.frombuffer(data, dtype=np.int8, count=grid.size, offset=offset).astype(float)
        h[k] = raw if encoding == H_SIGNED else raw / QUANT
        offset += grid.size
    try:
        return SpaceTimeField(grid, times, u), SpaceTimeField(grid, times, h)
    except ValueError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc


def write_events_csv(events: Sequence[SwitchEvent], grid: Grid, path: Union[str, Path]) -> Path:
    path = Path(path)
    coords = grid.coordinates()
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=EVENT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for ev in events:
            writer.writerow({
                "point": ev.point,
                "time": repr(ev.time),
                "direction": ev.direction,
                "u_value": repr(ev.u_value),
                "x": repr(float(coords[ev.point, 0])),
                "y": repr(float(coords[ev.point, 1])) if grid.dim == 2 else "",
            })
    return path


def read_events_csv(path: Union[str, Path]) -> List[SwitchEvent]:
    events = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["direction"] not in (UP, DOWN):
                raise CorruptFile(f"{path}: bad direction '{row['direction']}'")
            events.append(SwitchEvent(
                point=int(row["point"]),
                time=float(row["time"]),
                direction=row["direction"],
                u_value=float(row["u_value"]),
            ))
    return events


@dataclass
class RunManifest:
    """What produced a run directory and what it contains"""

    scenario: str
    scenario_hash: str
    code_version: str
    outcome: str
    tolerances: Dict = field(default_factory=dict)
    wall_time: float = 0.0
    seed: Optional[int] = None
    refine: int = 0
    steps: int = 0
    switch_events: int = 0
    snapshots: int = 0
    underflow: Optional[Dict] = None
    artifacts: List[str] = field(default_factory=list)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            yaml.safe_dump(asdict(self), f, sort_keys=False)
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        with open(path) as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict):
            raise CorruptFile(f"{path}: manifest is not a table")
        try:
            return cls(**data)
        except TypeError as exc:
            raise CorruptFile(f"{path}: {exc}") from exc


@contextmanager
def output_lock(directory: Union[str, Path]) -> Iterator[Path]:
    """Exclusive writer lock on a run directory"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise OutputLocked(f"{directory} is being written by another simulation ({lock} exists)") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)
