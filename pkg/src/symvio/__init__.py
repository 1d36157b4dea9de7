"""Equivariant visual-inertial odometry: geometry, filter backend, tooling.

The public surface re-exports the pieces most users need; the submodules stay
importable for everything else.
"""

from .core import (
    GRAVITY,
    BearingSet,
    ImuInput,
    VisGroupElement,
    VisState,
    dynamics,
    frame_change,
    group_action,
    lift,
    measure,
    transporter,
)
from .chart import Origin, coord_injection, coord_projection, local_coords, state_from_coords
from .errors import (
    ChartDomainError,
    ConfigError,
    CutLocusError,
    DivergenceError,
    ExceptionSetError,
    GainConfigError,
    GeometryError,
    LandmarkMismatchError,
    ParseError,
)
from .filter import (
    FilterState,
    GainConfig,
    UpdateReport,
    add_landmark,
    initial_state,
    propagate,
    remove_landmark,
    state_estimate,
    update,
    update_with_report,
)
from .groups import SE3, SE23, SOT3, Rot3, YawTranslation
from .sim import NoiseSpec, SimSample, TrajectorySpec, generate_world, sample_particles

__version__ = "0.1.0"

__all__ = [
    "GRAVITY",
    "BearingSet",
    "ImuInput",
    "VisGroupElement",
    "VisState",
    "dynamics",
    "frame_change",
    "group_action",
    "lift",
    "measure",
    "transporter",
    "Origin",
    "coord_injection",
    "coord_projection",
    "local_coords",
    "state_from_coords",
    "ChartDomainError",
    "ConfigError",
    "CutLocusError",
    "DivergenceError",
    "ExceptionSetError",
    "GainConfigError",
    "GeometryError",
    "LandmarkMismatchError",
    "ParseError",
    "FilterState",
    "GainConfig",
    "UpdateReport",
    "add_landmark",
    "initial_state",
    "propagate",
    "remove_landmark",
    "state_estimate",
    "update",
    "update_with_report",
    "SE3",
    "SE23",
    "SOT3",
    "Rot3",
    "YawTranslation",
    "NoiseSpec",
    "SimSample",
    "TrajectorySpec",
    "generate_world",
    "sample_particles",
    "__version__",
]
