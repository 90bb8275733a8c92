"""Local and nonlocal decoherence rates of an atom in a spatial superposition."""

from decoh.core_types import AtomModel, Channel, ConstantPath, PathPair, RateReport, SampledPath, validate_atom
from decoh.errors import DecohError

__all__ = [
    "AtomModel",
    "Channel",
    "ConstantPath",
    "DecohError",
    "PathPair",
    "RateReport",
    "SampledPath",
    "validate_atom",
]
