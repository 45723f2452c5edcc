"""Reconstruction of continuously heterogeneous 3-D objects ("hyper-volumes").

A hyper-volume is a density that depends on a scalar parameter ``t`` in
[0, 1].  It is represented in Fourier space on concentric shells, each
expanded in spherical harmonics, with every coefficient a short expansion in
an orthonormal basis over ``t``.  Unknown per-image orientations and ``t``
values are recovered jointly with the volume by template matching and
stochastic gradient descent with frequency marching.
"""

from .hypervolume import HyperVolumeCoeffs, ShellGrid, instance_at, synthesize_grid
from .parambasis import BasisKind, ParamBasisSpec, eval_param_basis
from .phantom import GaussianBlobPhantom, load_preset, phantom_projection_image, phantom_to_hypervolume
from .reconstruct import MarchingSchedule, ReconConfig, Stage, reconstruct, solve_known_assignments
from .sphharm import Rotation, sph_harm, wigner_D

__version__ = "0.1.0"

__all__ = [
    "BasisKind",
    "GaussianBlobPhantom",
    "HyperVolumeCoeffs",
    "MarchingSchedule",
    "ParamBasisSpec",
    "ReconConfig",
    "Rotation",
    "ShellGrid",
    "Stage",
    "eval_param_basis",
    "instance_at",
    "load_preset",
    "phantom_projection_image",
    "phantom_to_hypervolume",
    "reconstruct",
    "solve_known_assignments",
    "sph_harm",
    "synthesize_grid",
    "wigner_D",
]
