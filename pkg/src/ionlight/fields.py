"""Sampled transverse fields on uniform rectangular grids.

ScalarField2D is the exchange type between the mode solver, the imaging
model and the metrology simulation: a complex scalar amplitude sampled
on a uniform grid, together with the physical step sizes, the location
of the first sample and the vacuum wavelength.  Intensity planes reuse
the same container with real non-negative samples.

Conventions: samples[iy, ix], x = origin_x + ix*dx, y = origin_y + iy*dy.
Power means sum(|samples|^2)*dx*dy; no impedance factors anywhere, the
toolkit only ever uses power ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridOverflowError, ValidationError


@dataclass(frozen=True)
class ScalarField2D:
    """Complex scalar field on a uniform grid.

    Parameters
    ----------
    samples : ndarray, shape (ny, nx)
        Field amplitude (or intensity, for detector-plane data).
    dx, dy : float
        Grid steps in meters, both > 0.
    origin : tuple of float
        (x, y) of samples[0, 0] in meters.
    wavelength : float
        Vacuum wavelength in meters.
    """

    samples: np.ndarray
    dx: float
    dy: float
    origin: tuple[float, float]
    wavelength: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.size == 0:
            raise ValidationError("samples must be a non-empty 2D array")
        if not (self.dx > 0 and self.dy > 0):
            raise ValidationError("grid steps must be positive")
        if not self.wavelength > 0:
            raise ValidationError("wavelength must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def nx(self) -> int:
        return self.samples.shape[1]

    @property
    def ny(self) -> int:
        return self.samples.shape[0]

    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    def y(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.ny)

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dx * self.dy)

    def normalized(self, power: float = 1.0) -> "ScalarField2D":
        """Copy scaled to the given total power."""
        p = self.power()
        if p <= 0.0:
            raise ValidationError("cannot normalize a zero field")
        return replace(self, samples=self.samples * np.sqrt(power / p))

    def peak_position(self) -> tuple[float, float]:
        """(x, y) of the sample with maximum intensity."""
        iy, ix = np.unravel_index(int(np.argmax(self.intensity())), self.samples.shape)
        return (self.origin[0] + ix * self.dx, self.origin[1] + iy * self.dy)


def _e2_full_width(coord: np.ndarray, profile: np.ndarray) -> float:
    # full width where profile falls to peak/e^2, linearly interpolated
    ipk = int(np.argmax(profile))
    peak = profile[ipk]
    if peak <= 0.0:
        raise ValidationError("profile has no positive peak")
    thr = peak / np.e**2

    def crossing(idx_range):
        prev = ipk
        for i in idx_range:
            if profile[i] < thr:
                # linear interpolation between samples i and prev
                f = (profile[prev] - thr) / (profile[prev] - profile[i])
                return coord[prev] + f * (coord[i] - coord[prev])
            prev = i
        raise GridOverflowError(
            "field does not fall to 1/e^2 of its peak inside the grid"
        )

    right = crossing(range(ipk + 1, len(profile)))
    left = crossing(range(ipk - 1, -1, -1))
    return float(right - left)


def mode_field_diameter(field: ScalarField2D) -> tuple[float, float]:
    """1/e^2 intensity full widths (x, y) through the intensity maximum.

    Raises GridOverflowError if the intensity does not drop below
    peak/e^2 before a grid edge (mode too large for the window).
    """
    inten = field.intensity()
    iy, ix = np.unravel_index(int(np.argmax(inten)), inten.shape)
    mfd_x = _e2_full_width(field.x(), inten[iy, :])
    mfd_y = _e2_full_width(field.y(), inten[:, ix])
    return (mfd_x, mfd_y)


def gaussian_field(
    waist_x: float,
    waist_y: float,
    dx: float,
    dy: float,
    nx: int,
    ny: int,
    wavelength: float,
    center: tuple[float, float] = (0.0, 0.0),
    power: float = 1.0,
) -> ScalarField2D:
    """Normalized Gaussian test field; waists are 1/e^2 intensity radii."""
    x0 = center[0] - dx * (nx - 1) / 2.0
    y0 = center[1] - dy * (ny - 1) / 2.0
    x = x0 + dx * np.arange(nx)
    y = y0 + dy * np.arange(ny)
    xx, yy = np.meshgrid(x - center[0], y - center[1])
    amp = np.exp(-(xx / waist_x) ** 2 - (yy / waist_y) ** 2)
    f = ScalarField2D(amp.astype(complex), dx, dy, (x0, y0), wavelength)
    return f.normalized(power)


def resample_field(field: ScalarField2D, target: ScalarField2D) -> ScalarField2D:
    """Bilinearly resample `field` onto the grid of `target` (zero outside)."""
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(
        (field.y(), field.x()),
        field.samples,
        bounds_error=False,
        fill_value=0.0,
    )
    xx, yy = np.meshgrid(target.x(), target.y())
    vals = interp(np.stack([yy.ravel(), xx.ravel()], axis=-1)).reshape(xx.shape)
    return replace(target, samples=vals)


# --- delimited I/O ---------------------------------------------------------

def write_field_csv(field: ScalarField2D, path) -> None:
    """Write complex samples as rows of x_m, y_m, field_re, field_im."""
    x = field.x()
    y = field.y()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "field_re", "field_im"])
        for iy in range(field.ny):
            for ix in range(field.nx):
                s = field.samples[iy, ix]
                w.writerow([repr(float(x[ix])), repr(float(y[iy])),
                            repr(float(np.real(s))), repr(float(np.imag(s)))])


def write_intensity_csv(field: ScalarField2D, path) -> None:
    """Write |samples|^2 as rows of x_m, y_m, intensity."""
    x = field.x()
    y = field.y()
    inten = field.intensity()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "intensity"])
        for iy in range(field.ny):
            for ix in range(field.nx):
                w.writerow([repr(float(x[ix])), repr(float(y[iy])),
                            repr(float(inten[iy, ix]))])


def _grid_from_columns(x: np.ndarray, y: np.ndarray):
    nx = int(np.argmax(x[1:] == x[0]) + 1) if len(x) > 1 and np.any(x[1:] == x[0]) else len(x)
    if len(x) % nx != 0:
        raise ValidationError("field CSV rows do not form a complete grid")
    ny = len(x) // nx
    xs = x[:nx]
    ys = y[::nx]
    dx = xs[1] - xs[0] if nx > 1 else 1.0
    dy = ys[1] - ys[0] if ny > 1 else 1.0
    if nx > 1 and not np.allclose(np.diff(xs), dx, rtol=1e-9, atol=0):
        raise ValidationError("non-uniform x spacing in field CSV")
    if ny > 1 and not np.allclose(np.diff(ys), dy, rtol=1e-9, atol=0):
        raise ValidationError("non-uniform y spacing in field CSV")
    return nx, ny, float(dx), float(dy), (float(xs[0]), float(ys[0]))


def read_field_csv(path, wavelength: float) -> ScalarField2D:
    """Read a field CSV written by write_field_csv (or the intensity variant)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] == 4:
        vals = data[:, 2] + 1j * data[:, 3]
    elif data.shape[1] == 3:
        vals = data[:, 2].astype(complex)
    else:
        raise ValidationError("expected 3 or 4 columns in field CSV")
    nx, ny, dx, dy, origin = _grid_from_columns(data[:, 0], data[:, 1])
    return ScalarField2D(vals.reshape(ny, nx), dx, dy, origin, wavelength)
