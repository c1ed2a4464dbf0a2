"""Distributed Bayesian grid localization for RSSI-based static sensor networks.

A node's location is a probability mass function over the cells of a square
grid. Landmarks advertise known positions; unknown nodes refine their pmfs
from shadowed path loss samples exchanged on flood/reply routing traffic,
and finally report the most probable cell.
"""

from .channel import (
    ABOVE_CANOPY_MODEL,
    BELOW_CANOPY_MODEL,
    CanopyMode,
    LikelihoodTable,
    PathLossModel,
    build_likelihood,
    connectivity_distance,
    likelihood,
    mean_path_loss,
    preset_model,
    sample_path_loss,
)
from .codec import EncodedPmf, decode, encode
from .config import ScenarioConfig, build_scenario, load_config, preset, preset_names
from .deployment import (
    ConnectivityGraph,
    Node,
    NodeRole,
    Scenario,
    build_connectivity,
    degree_stats,
    place_grid,
    place_landmarks,
    place_random,
    scaled_range,
)
from .engine import (
    FloodEvent,
    RoundRecord,
    SampleRecord,
    SimState,
    advertise_landmarks,
    decide,
    init_state,
    rrep_return,
    rreq_flood,
    run,
    update_posterior,
)
from .errors import (
    CodecCapacityError,
    CodecDecodeError,
    ConfigError,
    DomainError,
    EmptyDeploymentError,
    GridlocError,
    InvalidCellError,
    NoCoverageError,
    OutOfFieldError,
)
from .experiment import ExperimentPlan, dump_heatmap, run_experiment
from .grid import GridField, LocationPmf, delta_pmf, uniform_pmf
from .metrics import TrialResult, coverage_check, localization_error, two_drms

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
