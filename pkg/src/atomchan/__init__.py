"""Gridless multidimensional MIMO channel estimation with the atomic norm."""

from .channel import SparseChannel, atom_matrix, composite_model, draw_channel
from .geometry import (
    DimensionVector,
    SensingMatrix,
    compose_sensing,
    reconstruction_degree,
    steering_vector,
)
from .measurement import MeasurementOperator, Observation, build_operator, generate_pilots, observe
from .mlt import MLTGenerator, from_atoms, project_to_mlt, realize
from .solver import ANProblem, SolveReport, SolverConfig, extract_frequencies, solve
from .vandermonde import DecompositionError, VandermondeDecomposition, decompose

__all__ = [
    "ANProblem",
    "DecompositionError",
    "DimensionVector",
    "MLTGenerator",
    "MeasurementOperator",
    "Observation",
    "SensingMatrix",
    "SolveReport",
    "SolverConfig",
    "SparseChannel",
    "VandermondeDecomposition",
    "atom_matrix",
    "build_operator",
    "compose_sensing",
    "composite_model",
    "decompose",
    "draw_channel",
    "extract_frequencies",
    "from_atoms",
    "generate_pilots",
    "observe",
    "project_to_mlt",
    "realize",
    "reconstruction_degree",
    "solve",
    "steering_vector",
]
