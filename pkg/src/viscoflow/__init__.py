"""Viscous damage-plasticity simulator and vanishing-viscosity limit analysis."""

from .material import MaterialModel
from .discretization import DiscreteSpace, LoadingProgram, State, StructuredMesh
from .energy import Problem

__all__ = [
    "MaterialModel",
    "DiscreteSpace",
    "LoadingProgram",
    "State",
    "StructuredMesh",
    "Problem",
]

__version__ = "0.1.0"
