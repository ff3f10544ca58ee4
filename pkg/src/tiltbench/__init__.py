"""tiltbench: closed-loop tilt control workbench for a soft-fabric surface.

A four-actuator module tilts a deformable fabric sheet to roll, slide, or
drag objects toward target positions. This package provides the tilt-to-
actuator geometric transform, two linear feedback policies (manhattan and
euclidean), a mass-spring fabric plant with penalty contact, a trial runner,
and a grid evaluation harness with a CLI front end.
"""

from .controller import (
    DEFAULT_EUCLIDEAN_GAINS,
    DEFAULT_MANHATTAN_GAINS,
    EUCLIDEAN,
    MANHATTAN,
    ControllerConfig,
    ControllerState,
    ErrorVector,
    compute_error,
    controller_init,
    controller_step,
    euclidean_config,
    euclidean_step,
    manhattan_config,
    manhattan_step,
    sample_noise,
)
from .evaluation import (
    GridDiff,
    GridSpec,
    SuccessGrid,
    classify_regions,
    diff_grids,
    improvement_summary,
    run_grid,
)
from .geometry import (
    ActuatorCommand,
    DegeneratePlaneError,
    ModuleGeometry,
    SurfaceNormal,
    TiltCommand,
    actuator_commands,
    euclidean_normal,
    manhattan_normal,
    plane_height_at,
)
from .pid import PidGains, PidState, pid_reset, pid_step
from .plant import (
    APPROXIMATE_PRESETS,
    ConfigurationError,
    FabricConfig,
    FabricState,
    OBJECT_PRESETS,
    ObjectSpec,
    ObjectState,
    Plant,
    SimulationDivergedError,
)
from .trial import (
    FELL_OFF,
    SUCCESS,
    TIMEOUT,
    TOPPLED,
    Sample,
    TrialConfig,
    TrialRecord,
    read_record_json,
    read_samples_csv,
    run_trial,
    write_record,
)

__version__ = "0.1.0"

__all__ = [
    "APPROXIMATE_PRESETS",
    "ActuatorCommand",
    "ConfigurationError",
    "ControllerConfig",
    "ControllerState",
    "DEFAULT_EUCLIDEAN_GAINS",
    "DEFAULT_MANHATTAN_GAINS",
    "DegeneratePlaneError",
    "ErrorVector",
    "EUCLIDEAN",
    "FELL_OFF",
    "FabricConfig",
    "FabricState",
    "GridDiff",
    "GridSpec",
    "MANHATTAN",
    "ModuleGeometry",
    "OBJECT_PRESETS",
    "ObjectSpec",
    "ObjectState",
    "PidGains",
    "PidState",
    "Plant",
    "SUCCESS",
    "Sample",
    "SimulationDivergedError",
    "SuccessGrid",
    "SurfaceNormal",
    "TIMEOUT",
    "TOPPLED",
    "TiltCommand",
    "TrialConfig",
    "TrialRecord",
    "actuator_commands",
    "classify_regions",
    "compute_error",
    "controller_init",
    "controller_step",
    "diff_grids",
    "euclidean_config",
    "euclidean_normal",
    "euclidean_step",
    "improvement_summary",
    "manhattan_config",
    "manhattan_normal",
    "manhattan_step",
    "pid_reset",
    "pid_step",
    "plane_height_at",
    "read_record_json",
    "read_samples_csv",
    "run_grid",
    "run_trial",
    "sample_noise",
    "write_record",
]
