"""Global configuration: material defaults, tolerances, conventions.

Everything a solver treats as "the default" lives here rather than as a
literal at the point of use, so a single JSON file can retarget the whole
toolkit (different wavelength stack, different tolerances) without code
changes.  All lengths are meters, frequencies Hz, angles radians.

The decibel convention is fixed project-wide: dB values are
10*log10(intensity ratio).  Field-amplitude ratios are never expressed
in dB anywhere in this package.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from . import constants
from .errors import ValidationError

DB_CONVENTION = "10log10-intensity"


def db_from_ratio(ratio: float) -> float:
    """Intensity ratio -> dB.  Zero and negative ratios map to -inf."""
    if ratio <= 0.0:
        return -math.inf
    return 10.0 * math.log10(ratio)


def ratio_from_db(db: float) -> float:
    """dB -> intensity ratio."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class MaterialIndex:
    """Refractive index of a material, tagged with its quoted wavelength."""

    name: str
    n: float
    wavelength: float


@dataclass(frozen=True)
class GlobalConfig:
    """Toolkit-wide defaults.  See module docstring for unit conventions."""

    # default design stack
    wavelength: float = 650e-9
    core_index: float = 1.94            # silicon nitride core at 650 nm
    clad_index: float = 1.457           # thermal oxide cladding at 650 nm
    core_thickness: float = 150e-9
    core_width: float = 500e-9

    # mode solver
    grid_resolution: float = 10e-9      # transverse grid step, both axes
    clad_margin: float = 2e-6           # min cladding between core and boundary
    max_modes: int = 4
    neff_self_check_tol: float = 1e-3   # fundamental n_eff drift on grid doubling
    cutoff_search_lo: float = 50e-9
    cutoff_search_hi: float = 5e-6
    cutoff_width_tol: float = 5e-9

    # taper
    taper_tip_width: float = 125e-9     # quoted tip width; 100 nm also circulates
    taper_length: float = 100e-6
    taper_segments: int = 64
    taper_safety_factor: float = 4.0    # calibration of the half-angle bound

    # ion chain
    n_ions: int = 8
    ion_mass: float = constants.m_ba138
    axial_frequency: float = 34e3       # axial secular frequency (Hz)
    newton_residual_tol: float = 1e-10
    newton_max_iter: int = 200
    max_ions: int = 50

    # imaging
    sampling_factor: float = 4.0        # require dx <= wavelength / (factor * NA)
    edge_power_tol: float = 1e-6        # max power clipped at grid edges
    coherent_sum: bool = False          # facet channels add in intensity by default
    pitch_band: tuple[float, float] = (5.0, 10.0)

    # slit-scan metrology
    slit_width: float = 5e-6
    slit_height: float = 1.6e-3         # aperture height, metadata only
    scan_step: float = 1e-6
    modulation_frequency: float = 28.1e3    # lock-in reference, metadata only
    scan_range: float = 10e-3           # single-scan travel
    scan_overlap: float = 2e-3          # overlap between stitched segments
    deconvolution_iterations: int = 500
    deconvolution_residual_tol: float = 1e-6
    stitch_peak_fraction: float = 0.5   # overlap samples >= fraction*peak join the fit
    window_points: int = 1000
    peak_search_steps: int = 3          # hint neighborhood for peak detection
    fiber_exclusion_radius: float = 10e-6

    # quoted loss figures carried as metadata, not computed here
    propagation_loss_db_per_cm: float = 1.7
    bend_loss_db_per_90deg: float = 0.1

    seed: int = 12345
    output_format: str = "json"         # default CLI emission: "json" or "csv"

    def material_indices(self) -> tuple[MaterialIndex, MaterialIndex]:
        """Core and cladding indices tagged with the design wavelength."""
        return (
            MaterialIndex("core", self.core_index, self.wavelength),
            MaterialIndex("cladding", self.clad_index, self.wavelength),
        )

    def replace(self, **changes) -> "GlobalConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pitch_band"] = list(self.pitch_band)
        d["db_convention"] = DB_CONVENTION
        return d


DEFAULT_CONFIG = GlobalConfig()

_FIELD_NAMES = {f.name for f in dataclasses.fields(GlobalConfig)}


def config_from_dict(data: dict) -> GlobalConfig:
    """Build a GlobalConfig from a plain dict, rejecting unknown keys."""
    data = dict(data)
    data.pop("db_convention", None)
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    if "pitch_band" in data:
        lo, hi = data["pitch_band"]
        data["pitch_band"] = (float(lo), float(hi))
    return GlobalConfig(**data)


def load_config(path) -> GlobalConfig:
    """Load a JSON config file; absent keys keep their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: GlobalConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
