"""Real-time dynamics of spin-boson chains by inchworm tables, chain summation and transfer tensors."""

__version__ = "0.1.0"

from . import backend  # noqa: E402
from .bath import CorrelationTable, SpectralDensity, bstar  # noqa: E402
from .contour import ContourGrid  # noqa: E402
from .inchworm import PropagatorTable, Truncation, solve_tables  # noqa: E402
from .model import (ChainConfig, CouplingSpec, CouplingTerm, SpinBosonUnit,  # noqa: E402
                    SpinParams)
from .summation import ChainState, ChainTables, evolve, observable  # noqa: E402
from .tensornet import CompressionPolicy, TensorTrain  # noqa: E402

__all__ = [
    "backend", "CorrelationTable", "SpectralDensity", "bstar", "ContourGrid", "PropagatorTable",
    "Truncation", "solve_tables", "ChainConfig", "CouplingSpec", "CouplingTerm", "SpinBosonUnit",
    "SpinParams", "ChainState", "ChainTables", "evolve", "observable", "CompressionPolicy",
    "TensorTrain",
]
