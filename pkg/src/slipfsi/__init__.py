"""Rigid disk in a viscous incompressible fluid with Navier slip."""

import os as _os

__version__ = "0.1.0"

# BLAS pools read these once at load time, so set them before numpy is imported
_n = _os.environ.get("SLIPFSI_THREADS", "")
if _n.isdigit() and int(_n) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _n)

from ._kernels import BACKEND  # noqa: E402
from .config import SimConfig, parse_config, serialize_config  # noqa: E402
from .coupling import BodyForce, step_newton_euler, step_transformed_newton_euler, surface_force  # noqa: E402
from .errors import (  # noqa: E402
    CFLError,
    CheckpointError,
    ConfigError,
    InvalidInputError,
    ProximityError,
    SlipFSIError,
    SolverError,
)
from .grid import AnnulusGrid, GridField, boundary_quadrature, build_annulus_grid  # noqa: E402
from .io import checkpoint, restore, simulate  # noqa: E402
from .kinematics import RigidState, body_inertia, relative_angular_velocity, step_rigid  # noqa: E402
from .solver import FlowState, initial_triple, initialize_state, run, step  # noqa: E402
from .transform import TransformAtlas, flat_atlas, initial_atlas, rigid_atlas  # noqa: E402

__all__ = [
    "BACKEND", "SimConfig", "parse_config", "serialize_config",
    "BodyForce", "step_newton_euler", "step_transformed_newton_euler", "surface_force",
    "CFLError", "CheckpointError", "ConfigError", "InvalidInputError", "ProximityError",
    "SlipFSIError", "SolverError",
    "AnnulusGrid", "GridField", "boundary_quadrature", "build_annulus_grid",
    "checkpoint", "restore", "simulate",
    "RigidState", "body_inertia", "relative_angular_velocity", "step_rigid",
    "FlowState", "initial_triple", "initialize_state", "run", "step",
    "TransformAtlas", "flat_atlas", "initial_atlas", "rigid_atlas",
]
