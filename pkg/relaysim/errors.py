"""
Exception hierarchy for RelaySim
"""
from __future__ import annotations

from typing import List, Optional, Sequence


class RelaySimError(Exception):
    """Base class for every error raised by the package"""


class InvalidRelayParams(RelaySimError):
    """Thresholds do not satisfy alpha < beta"""


class InvalidInitialState(RelaySimError):
    """Initial relay selector contradicts the multivalued relay function"""

    def __init__(self, message: str, points: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.points: List[int] = list(points or [])


class BoundaryMismatch(RelaySimError):
    """Dirichlet data at t=0 does not match the initial profile"""


class IndexOutOfRange(RelaySimError, IndexError):
    """Snapshot index outside the stored history"""


class DtUnderflow(RelaySimError):
    """Event bisection could not separate a crossing from the current time"""

    def __init__(self, message: str, time: float, dt: float, points: Sequence[int]):
        super().__init__(message)
        self.time = time
        self.dt = dt
        self.points: List[int] = list(points)


class LinearSolveFailure(RelaySimError):
    """The implicit step produced a singular or non-finite solve"""


class NonBinaryField(RelaySimError):
    """Phase extraction needs h in {-1, +1}"""


class WindowTooSmall(RelaySimError):
    """Fewer than three admissible radii for a growth fit"""


class DimensionUnsupported(RelaySimError):
    """Operation is only defined for a different spatial dimension"""


class ConfigError(RelaySimError):
    """Base class for scenario configuration problems"""


class SchemaError(ConfigError):
    """Config text does not follow the documented schema"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.field = field
        self.line = line


class SemanticError(ConfigError):
    """Config is well formed but describes an invalid problem"""


class UnknownPreset(ConfigError):
    """No preset registered under the requested name"""


class CorruptFile(RelaySimError):
    """Snapshot container is truncated or has a bad header"""


class OutputLocked(RelaySimError):
    """Another simulation is writing the output directory"""
