"""Facet-to-ion-plane beam propagation and crosstalk accounting.

The delivery optic is modeled as an ideal 4f relay: forward spatial
Fourier transform, hard circular pupil at spatial frequency NA/lambda,
inverse transform, then a coordinate magnification x -> M*x with the
amplitude rescaled so power is conserved apart from pupil clipping.
Facet channels are translated copies of one solved mode; separate
outputs carry no stable mutual phase at measurement timescales, so they
add in intensity by default.

Crosstalk between addressing channels is scored per channel: with only
channel i lit, the power landing in a disc around target j relative to
the disc around target i, in dB (10*log10 of the intensity ratio).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, db_from_ratio
from .errors import (
    GridOverflowError,
    SamplingError,
    TargetOutsideGridError,
    ValidationError,
)
from .fields import ScalarField2D

IMAGING_MODELS = ("ideal-4f-with-pupil",)


@dataclass(frozen=True)
class ImagingSystemSpec:
    """Magnification magnitude and object-side numerical aperture."""

    magnification: float
    numerical_aperture: float
    model: str = "ideal-4f-with-pupil"

    def __post_init__(self):
        if not self.magnification > 0:
            raise ValidationError("magnification must be positive")
        if not 0 < self.numerical_aperture <= 1:
            raise ValidationError("numerical aperture must be in (0, 1]")
        if self.model not in IMAGING_MODELS:
            raise ValidationError(f"unknown imaging model {self.model!r}")


@dataclass(frozen=True)
class ChannelLayout:
    """Shared facet mode replicated at a set of lateral positions."""

    channel_positions: tuple
    per_channel_field: ScalarField2D
    per_channel_power: tuple

    def __post_init__(self):
        pos = np.asarray(self.channel_positions, dtype=float)
        if pos.size == 0:
            raise ValidationError("need at least one channel")
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValidationError("channel positions must be strictly increasing")
        if len(self.per_channel_power) != pos.size:
            raise ValidationError("one power per channel required")
        if any(p < 0 for p in self.per_channel_power):
            raise ValidationError("channel powers must be non-negative")


def default_integration_radius(wavelength: float, numerical_aperture: float) -> float:
    """Diffraction-limited disc radius lambda / (2 NA) used for crosstalk scoring."""
    return wavelength / (2.0 * numerical_aperture)


def _check_sampling(field: ScalarField2D, numerical_aperture: float,
                    sampling_factor: float | None = None) -> None:
    factor = sampling_factor if sampling_factor is not None else DEFAULT_CONFIG.sampling_factor
    limit = field.wavelength / (factor * numerical_aperture)
    if field.dx > limit or field.dy > limit:
        raise SamplingError(
            f"grid step ({field.dx:.3e}, {field.dy:.3e}) m exceeds "
            f"wavelength / ({factor:g} * NA) = {limit:.3e} m; pupil not resolvable"
        )


def compose_facet_field(
    layout: ChannelLayout,
    coherent: bool | None = None,
    half_width: float | None = None,
    edge_power_tol: float | None = None,
) -> ScalarField2D:
    """Place every channel's mode copy on one grid and sum.

    The output grid keeps the mode's sample steps; its x axis spans all
    translated copies (channel centers snap to the nearest grid cell).
    Incoherent summation (the default) adds intensities and stores the
    square-root amplitude, so `intensity()` and `power()` of the result
    are the per-channel sums.  Pass `half_width` to force a narrower
    grid; a copy clipping more than `edge_power_tol` of its power then
    raises GridOverflowError.
    """
    if coherent is None:
        coherent = DEFAULT_CONFIG.coherent_sum
    tol = edge_power_tol if edge_power_tol is not None else DEFAULT_CONFIG.edge_power_tol
    mode = layout.per_channel_field
    dx, dy = mode.dx, mode.dy
    mode_power = mode.power()
    if mode_power <= 0:
        raise ValidationError("channel mode must carry non-zero power")

    offsets = [int(round(p / dx)) for p in layout.channel_positions]
    if half_width is None:
        lo = min(offsets) * dx + mode.origin[0]
        hi = max(offsets) * dx + mode.origin[0] + (mode.nx - 1) * dx
    else:
        lo, hi = -half_width, half_width
    nx = int(round((hi - lo) / dx)) + 1
    x0 = lo
    acc = np.zeros((mode.ny, nx), dtype=complex if coherent else float)

    cell_power = np.abs(mode.samples) ** 2 * dx * dy
    for off, power in zip(offsets, layout.per_channel_power):
        start = int(round((off * dx + mode.origin[0] - x0) / dx))
        src_lo = max(0, -start)
        src_hi = min(mode.nx, nx - start)
        clipped = mode_power - float(np.sum(cell_power[:, src_lo:src_hi]))
        if clipped > tol * mode_power:
            raise GridOverflowError(
                f"channel at offset {off * dx:.3e} m clips "
                f"{clipped / mode_power:.2e} of its power at the grid edge"
            )
        if src_lo >= src_hi:
            continue
        scale = power / mode_power
        block = mode.samples[:, src_lo:src_hi]
        if coherent:
            acc[:, start + src_lo:start + src_hi] += np.sqrt(scale) * block
        else:
            acc[:, start + src_lo:start + src_hi] += scale * np.abs(block) ** 2

    samples = acc if coherent else np.sqrt(acc)
    return ScalarField2D(samples=samples.astype(complex), dx=dx, dy=dy,
                         origin=(x0, mode.origin[1]), wavelength=mode.wavelength)


def image_field(field: ScalarField2D, sys: ImagingSystemSpec,
                sampling_factor: float | None = None) -> ScalarField2D:
    """Relay a field through the ideal 4f system to the image plane.

    Spatial frequencies beyond NA/lambda are cut by the pupil; the
    surviving field is rescaled to image coordinates x -> M*x with
    amplitude /M so the output power equals the input power minus the
    pupil loss.  Raises SamplingError when the grid cannot represent
    the pupil (step above lambda / (sampling_factor * NA)).
    """
    _check_sampling(field, sys.numerical_aperture, sampling_factor)
    spectrum = np.fft.fft2(field.samples)
    fx = np.fft.fftfreq(field.nx, field.dx)
    fy = np.fft.fftfreq(field.ny, field.dy)
    f_cut = sys.numerical_aperture / field.wavelength
    mask = fx[None, :] ** 2 + fy[:, None] ** 2 <= f_cut**2
    clipped = np.fft.ifft2(spectrum * mask)
    m = sys.magnification
    return ScalarField2D(
        samples=clipped / m,
        dx=field.dx * m,
        dy=field.dy * m,
        origin=(field.origin[0] * m, field.origin[1] * m),
        wavelength=field.wavelength,
    )


def _disc_power(field: ScalarField2D, target, radius: float) -> float:
    tx, ty = target
    x = field.x()
    y = field.y()
    if not (x[0] <= tx <= x[-1] and y[0] <= ty <= y[-1]):
        raise TargetOutsideGridError(
            f"target ({tx:.3e}, {ty:.3e}) m outside grid "
            f"x [{x[0]:.3e}, {x[-1]:.3e}], y [{y[0]:.3e}, {y[-1]:.3e}]"
        )
    mask = (x[None, :] - tx) ** 2 + (y[:, None] - ty) ** 2 <= radius**2
    return float(np.sum(field.intensity()[mask]) * field.dx * field.dy)


def crosstalk_matrix(intensities, targets, integration_radius: float) -> np.ndarray:
    """Per-channel disc-power crosstalk in dB.

    `intensities` is one field per target (the plane produced with only
    that channel lit) or a single field reused for every row.  Entry
    (i, j) is 10*log10(P_j / P_i) with P_k the intensity of plane i
    integrated over a disc of the given radius around target k; the
    diagonal is exactly 0 dB, and the whole matrix is unchanged by any
    uniform intensity rescaling.
    """
    targets = list(targets)
    if isinstance(intensities, ScalarField2D):
        planes = [intensities] * len(targets)
    else:
        planes = list(intensities)
        if len(planes) != len(targets):
            raise ValidationError("need exactly one intensity plane per target")
    if not targets:
        raise ValidationError("need at least one target")
    cell = max(max(p.dx, p.dy) for p in planes)
    if integration_radius < cell:
        raise ValidationError(
            f"integration radius {integration_radius:.3e} m smaller than one "
            f"grid cell ({cell:.3e} m)"
        )
    n = len(targets)
    out = np.zeros((n, n))
    for i, plane in enumerate(planes):
        powers = [_disc_power(plane, t, integration_radius) for t in targets]
        for j in range(n):
            if j != i:
                out[i, j] = db_from_ratio(powers[j] / powers[i]) if powers[i] > 0 else np.inf
    return out


def plane_summary(intensities, targets, integration_radius: float) -> dict:
    """JSON-ready summary: per-channel peak position/power plus the dB matrix."""
    targets = list(targets)
    planes = ([intensities] * len(targets)
              if isinstance(intensities, ScalarField2D) else list(intensities))
    peaks = []
    powers = []
    for plane in planes:
        px, py = plane.peak_position()
        peaks.append([px, py])
        powers.append(_disc_power(plane, (px, py), integration_radius))
    matrix = crosstalk_matrix(intensities, targets, integration_radius)
    return {
        "peak_positions_m": peaks,
        "peak_powers_w": powers,
        "crosstalk_db": [[float(v) for v in row] for row in matrix],
    }


def write_plane_summary_json(path, intensities, targets, integration_radius: float) -> None:
    summary = plane_summary(intensities, targets, integration_radius)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
