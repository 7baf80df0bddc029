"""
RelaySim: heat equation with a non-ideal relay source and free-boundary diagnostics
"""
__version__ = "0.3.0"

from .relay import RelayParams
from .solver import SolverConfig, run
from .scenarios import ScenarioSpec, parse_config, preset

__all__ = ['RelayParams', 'SolverConfig', 'run', 'ScenarioSpec', 'parse_config', 'preset', '__version__']
