"""Waveguide-to-ion-chain light delivery modeling and crosstalk metrology.

The package splits into solvers (mode_solver, taper, ion_chain,
design_solver), the imaging chain (fields, beam_train), slit-scan
metrology (slit_scan), and the scenario pipeline + CLI on top.  The
most common entry points are re-exported here; specialized helpers stay
in their modules.
"""

from .config import (
    DB_CONVENTION,
    DEFAULT_CONFIG,
    GlobalConfig,
    db_from_ratio,
    load_config,
    ratio_from_db,
    save_config,
)
from .errors import ComputationError, StageError, ValidationError
from .fields import ScalarField2D, gaussian_field, mode_field_diameter
from .mode_solver import (
    CoreRect,
    GuidedMode,
    SimulationGrid,
    WaveguideGeometry,
    count_guided_modes,
    single_mode_cutoff_width,
    solve_layout,
    solve_modes,
)
from .taper import TaperProfile, adiabaticity_check, facet_mode, mfd_vs_width
from .ion_chain import IonChain, IonChainSpec, equilibrium_positions, physical_positions
from .beam_train import (
    ChannelLayout,
    ImagingSystemSpec,
    compose_facet_field,
    crosstalk_matrix,
    image_field,
)
from .design_solver import DesignParameters, check_pitch_ratio, solve_design
from .slit_scan import (
    CrosstalkReport,
    Profile1D,
    ScanTrace,
    deconvolve,
    extract_crosstalk,
    simulate_scan,
    stitch_scans,
)
from .pipeline import (
    ScenarioConfig,
    load_scenario,
    run_delivery_scenario,
    run_metrology_scenario,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "DB_CONVENTION",
    "DEFAULT_CONFIG",
    "GlobalConfig",
    "db_from_ratio",
    "ratio_from_db",
    "load_config",
    "save_config",
    "ComputationError",
    "StageError",
    "ValidationError",
    "ScalarField2D",
    "gaussian_field",
    "mode_field_diameter",
    "CoreRect",
    "GuidedMode",
    "SimulationGrid",
    "WaveguideGeometry",
    "count_guided_modes",
    "single_mode_cutoff_width",
    "solve_layout",
    "solve_modes",
    "TaperProfile",
    "adiabaticity_check",
    "facet_mode",
    "mfd_vs_width",
    "IonChain",
    "IonChainSpec",
    "equilibrium_positions",
    "physical_positions",
    "ChannelLayout",
    "ImagingSystemSpec",
    "compose_facet_field",
    "crosstalk_matrix",
    "image_field",
    "DesignParameters",
    "check_pitch_ratio",
    "solve_design",
    "CrosstalkReport",
    "Profile1D",
    "ScanTrace",
    "deconvolve",
    "extract_crosstalk",
    "simulate_scan",
    "stitch_scans",
    "ScenarioConfig",
    "load_scenario",
    "run_delivery_scenario",
    "run_metrology_scenario",
    "run_scenario",
    "__version__",
]
