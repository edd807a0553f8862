"""Inverse-taper spot-size converter model.

Narrowing the core below its confinement optimum pushes the fundamental
mode out into the cladding and enlarges its field diameter; the taper
trades propagation length for that expansion.  This module sweeps the
fundamental mode against local width and applies a local half-angle
adiabaticity bound: at every station the taper half-angle theta =
|dw/dz|/2 must stay below alpha * (n_eff - n_clad) * w / wavelength,
i.e. the width must change slowly compared to the local beat length
between the fundamental and the cladding continuum.  alpha is a
calibration constant (config default) chosen so a known-good gentle
taper passes with margin while a 100x steeper one fails.

The output facet is treated as an ideal emitter of the fundamental mode
at the final width; no facet reflection model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import InvalidGeometryError, ModeNotGuidedError
from .fields import mode_field_diameter
from .mode_solver import GuidedMode, WaveguideGeometry, grid_for, solve_modes

# taper solves default to a wider margin than plain mode solves: the tip
# mode is weakly guided and needs room to decay
TAPER_MARGIN = 3e-6


@dataclass(frozen=True)
class TaperProfile:
    """Linear in-plane width taper at constant thickness."""

    start_width: float
    end_width: float
    length: float
    shape: str = "linear"
    n_segments: int = 64

    def __post_init__(self):
        if not (self.start_width > self.end_width > 0):
            raise InvalidGeometryError("need start_width > end_width > 0")
        if not self.length > 0:
            raise InvalidGeometryError("taper length must be positive")
        if self.n_segments < 8:
            raise InvalidGeometryError("need at least 8 segments")
        if self.shape != "linear":
            raise InvalidGeometryError(f"unsupported taper shape {self.shape!r}")

    def width_at(self, z: float) -> float:
        """Local width at position z in [0, length] (z=0 is the wide end)."""
        f = min(max(z / self.length, 0.0), 1.0)
        return self.start_width + (self.end_width - self.start_width) * f

    def segment_positions(self) -> np.ndarray:
        """Segment-center coordinates along the taper."""
        return (np.arange(self.n_segments) + 0.5) * self.length / self.n_segments


@dataclass(frozen=True)
class ModeFieldDiameter:
    """1/e^2 intensity full widths through the field maximum."""

    mfd_x: float
    mfd_y: float

    def __post_init__(self):
        if not (self.mfd_x > 0 and self.mfd_y > 0):
            raise InvalidGeometryError("mode field diameters must be positive")


@dataclass(frozen=True)
class AdiabaticityResult:
    passed: bool
    worst_ratio: float
    worst_position: float       # z of the worst segment (m)
    positions: tuple            # per-segment z
    ratios: tuple               # per-segment theta / bound


@lru_cache(maxsize=512)
def _fundamental_summary(geom: WaveguideGeometry, resolution: float, margin: float):
    """(n_eff, mfd_x, mfd_y) of the fundamental TE mode; cached per width."""
    grid = grid_for(geom, resolution=resolution, margin=margin)
    modes = solve_modes(geom, grid=grid, polarization="TE", max_modes=1, margin=margin)
    if not modes:
        raise ModeNotGuidedError(
            f"no guided TE mode at width {geom.core_width * 1e9:.0f} nm on this grid"
        )
    m = modes[0]
    mfd_x, mfd_y = mode_field_diameter(m.field)
    return m.n_eff, mfd_x, mfd_y


def _at_width(geom: WaveguideGeometry, width: float) -> WaveguideGeometry:
    return WaveguideGeometry(width, geom.core_thickness, geom.core_index,
                             geom.clad_index, geom.wavelength)


def mfd_vs_width(
    geom: WaveguideGeometry,
    width: float,
    resolution: float | None = None,
    margin: float = TAPER_MARGIN,
) -> ModeFieldDiameter:
    """Mode field diameter of the fundamental TE mode at the given width.

    `geom` supplies thickness, indices and wavelength; its own width is
    ignored.  Raises ModeNotGuidedError when the mode is not guided at
    this width on this grid.
    """
    if width < 50e-9:
        raise InvalidGeometryError("width below 50 nm is outside the supported range")
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    _, mfd_x, mfd_y = _fundamental_summary(_at_width(geom, width), res, margin)
    return ModeFieldDiameter(mfd_x, mfd_y)


def adiabaticity_check(
    profile: TaperProfile,
    geom: WaveguideGeometry,
    resolution: float | None = None,
    margin: float = TAPER_MARGIN,
    alpha: float | None = None,
) -> AdiabaticityResult:
    """Local half-angle adiabaticity test over the taper.

    Solves the fundamental mode at every segment-center width and forms
    ratio = theta / (alpha * (n_eff - n_clad) * w_local / wavelength).
    Passes when every ratio is <= 1.  For the linear shape theta is
    |start - end| / (2 * length) everywhere, so the worst segment is the
    tip, and halving the taper length doubles every ratio exactly.
    """
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    a = alpha if alpha is not None else DEFAULT_CONFIG.taper_safety_factor
    theta = abs(profile.start_width - profile.end_width) / (2.0 * profile.length)
    positions = profile.segment_positions()
    ratios = []
    for z in positions:
        w = profile.width_at(z)
        n_eff, _, _ = _fundamental_summary(_at_width(geom, w), res, margin)
        bound = a * (n_eff - geom.clad_index) * w / geom.wavelength
        ratios.append(theta / bound if bound > 0 else math.inf)
    worst = int(np.argmax(ratios))
    return AdiabaticityResult(
        passed=bool(ratios[worst] <= 1.0),
        worst_ratio=float(ratios[worst]),
        worst_position=float(positions[worst]),
        positions=tuple(float(z) for z in positions),
        ratios=tuple(float(r) for r in ratios),
    )


def facet_mode(
    profile: TaperProfile,
    geom: WaveguideGeometry,
    resolution: float | None = None,
    margin: float = TAPER_MARGIN,
) -> GuidedMode:
    """Fundamental TE mode at the taper end width (the emitted field)."""
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    tip = _at_width(geom, profile.end_width)
    grid = grid_for(tip, resolution=res, margin=margin)
    modes = solve_modes(tip, grid=grid, polarization="TE", max_modes=1, margin=margin)
    if not modes:
        raise ModeNotGuidedError(
            f"no guided TE mode at tip width {profile.end_width * 1e9:.0f} nm"
        )
    return modes[0]


def sweep_widths(
    geom: WaveguideGeometry,
    widths,
    resolution: float | None = None,
    margin: float = TAPER_MARGIN,
):
    """Rows of (width, mfd_x, mfd_y, n_eff) for each width."""
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    rows = []
    for w in widths:
        n_eff, mfd_x, mfd_y = _fundamental_summary(_at_width(geom, float(w)), res, margin)
        rows.append((float(w), mfd_x, mfd_y, n_eff))
    return rows


def write_sweep_csv(rows, path) -> None:
    """Write sweep_widths output with header width_m,mfd_x_m,mfd_y_m,n_eff."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["width_m", "mfd_x_m", "mfd_y_m", "n_eff"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
