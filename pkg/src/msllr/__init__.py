"""Manifold-structured locally low-rank reconstruction for MR fingerprinting."""

from .dictionary import (Dictionary, ParameterGrid, SubspaceBasis, build_default_grid, build_dictionary,
                         compute_subspace_basis, match, project_fingerprints)
from .phantom import TISSUES, ParameterMaps, generate_phantom, synthesize_mrf_data
from .sequence import PulseSequence, generate_fisp_schedule, load_schedule, simulate_fingerprints
from .acquisition import AcquisitionOperator, Trajectory, make_pseudo_radial_masks, make_vds_spiral
from .solver import DivergenceError, SolverConfig, reconstruct, reconstruct_llr, zero_filled
from .metrics import nmse, snr

__all__ = [
    "Dictionary", "ParameterGrid", "SubspaceBasis", "build_default_grid", "build_dictionary",
    "compute_subspace_basis", "match", "project_fingerprints", "TISSUES", "ParameterMaps",
    "generate_phantom", "synthesize_mrf_data", "PulseSequence", "generate_fisp_schedule",
    "load_schedule", "simulate_fingerprints", "AcquisitionOperator", "Trajectory",
    "make_pseudo_radial_masks", "make_vds_spiral", "DivergenceError", "SolverConfig",
    "reconstruct", "reconstruct_llr", "zero_filled", "nmse", "snr",
]
