"""Scanning-slit profilometry: simulation, deconvolution, stitching, extraction.

A slit of finite width dragged across an intensity profile measures the
profile convolved with a unit-area top-hat.  This module provides the
forward simulation (with an optional synthetic noise floor), a
nonnegativity-preserving multiplicative deconvolution against the same
kernel, stitching of overlapping scan segments with a log-intensity
gain fit over the shared peak, and the crosstalk figure of merit: the
mean of a fixed-size sample window centered between two peaks relative
to the first peak's height, in dB, with the standard error of the
window mean propagated into the dB value.

All dB figures are 10*log10 of intensity ratios.  Positions are meters
internally; the CSV interchange format uses micrometers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DEFAULT_CONFIG, db_from_ratio
from .errors import (
    InsufficientOverlapError,
    NoPeakInOverlapError,
    PeakNotFoundError,
    RegionOverlapError,
    SamplingError,
    ValidationError,
    WindowTooSmallError,
)

_STEP_RTOL = 1e-6       # relative tolerance on uniform-step and lattice checks


def _as_uniform_positions(positions) -> tuple[np.ndarray, float]:
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or pos.size < 2:
        raise ValidationError("need at least two samples")
    steps = np.diff(pos)
    step = float(steps[0])
    if step <= 0 or np.max(np.abs(steps - step)) > _STEP_RTOL * step:
        raise ValidationError("positions must be strictly increasing with uniform step")
    return pos, step


@dataclass(frozen=True)
class Profile1D:
    """Uniformly sampled nonnegative intensity profile."""

    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pos, _ = _as_uniform_positions(self.positions)
        val = np.asarray(self.values, dtype=float)
        if val.shape != pos.shape:
            raise ValidationError("positions and values must have matching shape")
        if np.any(val < 0):
            raise ValidationError("intensity values must be non-negative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", val)

    @property
    def step(self) -> float:
        return float(self.positions[1] - self.positions[0])

    def integral(self) -> float:
        return float(np.sum(self.values) * self.step)


@dataclass(frozen=True)
class ScanTrace(Profile1D):
    """Slit-convolved profile plus the acquisition metadata."""

    slit_width: float = DEFAULT_CONFIG.slit_width
    slit_height: float = DEFAULT_CONFIG.slit_height     # metadata only
    noise_floor: float | None = None

    def __post_init__(self):
        super().__post_init__()
        if not self.slit_width > 0:
            raise ValidationError("slit width must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic-trace noise: flat additive floor plus proportional jitter."""

    floor_db: float | None = None       # additive floor, dB relative to trace peak
    proportional_sigma: float = 0.0     # 1-sigma fractional multiplicative noise
    seed: int | None = None

    def apply(self, values: np.ndarray) -> tuple[np.ndarray, float | None]:
        out = values.astype(float, copy=True)
        floor = None
        if self.floor_db is not None:
            floor = float(np.max(out)) * 10.0 ** (self.floor_db / 10.0)
            out += floor
        if self.proportional_sigma > 0:
            seed = self.seed if self.seed is not None else DEFAULT_CONFIG.seed
            rng = np.random.default_rng(seed)
            out *= 1.0 + self.proportional_sigma * rng.standard_normal(out.shape)
        return np.clip(out, 0.0, None), floor


@dataclass(frozen=True)
class CrosstalkReport:
    """Windowed pedestal-to-peak ratio in dB with its standard error."""

    value_db: float
    uncertainty_db: float
    peak_position: float
    window: tuple
    n_window_points: int
    floor_limited: bool = False

    def __post_init__(self):
        if not self.uncertainty_db >= 0:
            raise ValidationError("uncertainty must be non-negative")
        if not self.window[0] < self.window[1]:
            raise ValidationError("window bounds must be ordered")

    def as_dict(self) -> dict:
        return {
            "value_db": self.value_db,
            "uncertainty_db": self.uncertainty_db,
            "peak_position_m": self.peak_position,
            "window_m": list(self.window),
            "n_window_points": self.n_window_points,
            "floor_limited": self.floor_limited,
        }


def _top_hat_kernel(width: float, step: float) -> np.ndarray:
    n = max(1, int(round(width / step)))
    return np.full(n, 1.0 / n)


def simulate_scan(
    profile: Profile1D,
    slit_width: float | None = None,
    step: float | None = None,
    noise: NoiseModel | None = None,
    slit_height: float | None = None,
) -> ScanTrace:
    """Convolve a profile with the unit-area slit kernel and resample.

    The profile must be sampled at least 4x finer than the slit width
    (SamplingError otherwise).  The unit-sum discrete kernel preserves
    the profile integral exactly on the fine grid; when the scan step is
    an integer multiple of the profile step the resampling hits fine
    grid nodes exactly.
    """
    width = slit_width if slit_width is not None else DEFAULT_CONFIG.slit_width
    scan_step = step if step is not None else DEFAULT_CONFIG.scan_step
    height = slit_height if slit_height is not None else DEFAULT_CONFIG.slit_height
    fine = profile.step
    if fine > width / 4.0:
        raise SamplingError(
            f"profile step {fine:.3e} m too coarse for a {width:.3e} m slit; "
            "need at least 4 samples per slit width"
        )
    kernel = _top_hat_kernel(width, fine)
    full = np.convolve(profile.values, kernel, mode="full")
    start = profile.positions[0] - (len(kernel) - 1) / 2.0 * fine
    fine_positions = start + np.arange(full.size) * fine

    n_out = int(math.floor((fine_positions[-1] - fine_positions[0]) / scan_step)) + 1
    out_positions = fine_positions[0] + np.arange(n_out) * scan_step
    out_values = np.interp(out_positions, fine_positions, full)

    floor = None
    if noise is not None:
        out_values, floor = noise.apply(out_values)
    return ScanTrace(
        positions=out_positions,
        values=np.clip(out_values, 0.0, None),
        slit_width=width,
        slit_height=height,
        noise_floor=floor,
    )


@dataclass(frozen=True)
class DeconvolutionResult:
    """Recovered profile plus convergence metadata."""

    profile: Profile1D
    converged: bool
    relative_residual: float
    iterations: int


def _forward(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Slit convolution with edge replication, so flat signals stay flat."""
    n = len(kernel)
    left = n // 2
    padded = np.pad(values, (left, n - 1 - left), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def deconvolve(
    trace: ScanTrace,
    iterations: int | None = None,
    residual_tol: float | None = None,
) -> DeconvolutionResult:
    """Invert the slit convolution with a multiplicative update.

    Starting from the trace itself, each iteration multiplies the
    estimate by the kernel-correlated ratio of measured to re-convolved
    values, which keeps every sample non-negative.  Iteration stops when
    re-convolving the estimate matches the trace to the relative L2
    tolerance; hitting the iteration cap first is reported through
    `converged=False` rather than an exception, so partial results stay
    inspectable.
    """
    cap = iterations if iterations is not None else DEFAULT_CONFIG.deconvolution_iterations
    tol = (residual_tol if residual_tol is not None
           else DEFAULT_CONFIG.deconvolution_residual_tol)
    kernel = _top_hat_kernel(trace.slit_width, trace.step)
    data = trace.values
    norm = float(np.linalg.norm(data))
    if norm == 0.0:
        profile = Profile1D(trace.positions, np.zeros_like(data))
        return DeconvolutionResult(profile, True, 0.0, 0)

    estimate = data.astype(float, copy=True)
    iterations_done = 0
    while True:
        model = _forward(estimate, kernel)
        residual = float(np.linalg.norm(model - data)) / norm
        if residual < tol or iterations_done >= cap:
            break
        ratio = np.divide(data, model, out=np.ones_like(data), where=model > 0)
        estimate *= _forward(ratio, kernel[::-1])
        iterations_done += 1
    profile = Profile1D(trace.positions, np.clip(estimate, 0.0, None))
    return DeconvolutionResult(profile, residual < tol, residual, iterations_done)


def _interior_peak_index(values: np.ndarray) -> int | None:
    """Index of the largest interior local maximum, or None."""
    if values.size < 3:
        return None
    interior = values[1:-1]
    candidates = np.nonzero(
        (interior >= values[:-2]) & (interior >= values[2:])
        & ((interior > values[:-2]) | (interior > values[2:]))
    )[0] + 1
    if candidates.size == 0:
        return None
    return int(candidates[np.argmax(values[candidates])])


def stitch_scans(scans, min_overlap: float | None = None,
                 peak_fraction: float | None = None) -> Profile1D:
    """Merge overlapping scan segments onto the first segment's scale.

    Consecutive segments must share at least `min_overlap` of position
    range (InsufficientOverlapError) containing an interior local
    maximum (NoPeakInOverlapError).  The follower is rescaled by the
    gain minimizing the squared log-intensity mismatch over the overlap
    samples at or above `peak_fraction` of the overlap peak; for
    noise-free scalar-scaled duplicates that gain is exact.  Overlapping
    samples are averaged after gain correction.
    """
    scans = list(scans)
    if not scans:
        raise ValidationError("need at least one scan")
    overlap_req = min_overlap if min_overlap is not None else DEFAULT_CONFIG.scan_overlap
    fraction = (peak_fraction if peak_fraction is not None
                else DEFAULT_CONFIG.stitch_peak_fraction)

    base = scans[0]
    step = base.step
    positions = np.array(base.positions, dtype=float)
    values = np.array(base.values, dtype=float)
    weights = np.ones_like(values)

    for scan in scans[1:]:
        if abs(scan.step - step) > _STEP_RTOL * step:
            raise ValidationError("all scans must share the same step")
        offset = (scan.positions[0] - positions[0]) / step
        if abs(offset - round(offset)) > _STEP_RTOL:
            raise ValidationError("scan grids are not aligned to a common lattice")

        lo = max(positions[0], scan.positions[0])
        hi = min(positions[-1], scan.positions[-1])
        if hi - lo < overlap_req - _STEP_RTOL * step:
            raise InsufficientOverlapError(
                f"overlap {max(hi - lo, 0):.3e} m is below the required "
                f"{overlap_req:.3e} m"
            )
        sel_a = (positions >= lo - _STEP_RTOL * step) & (positions <= hi + _STEP_RTOL * step)
        sel_b = (scan.positions >= lo - _STEP_RTOL * step) \
            & (scan.positions <= hi + _STEP_RTOL * step)
        a = values[sel_a]
        b = np.asarray(scan.values)[sel_b]
        n = min(a.size, b.size)
        a, b = a[:n], b[:n]
        if _interior_peak_index(a) is None and _interior_peak_index(b) is None:
            raise NoPeakInOverlapError("no interior peak inside the overlap region")
        region = (a >= fraction * np.max(a)) & (a > 0) & (b > 0)
        if not np.any(region):
            raise NoPeakInOverlapError("no usable peak samples inside the overlap")
        gain = float(np.exp(np.mean(np.log(a[region]) - np.log(b[region]))))

        new_lo = min(positions[0], scan.positions[0])
        new_hi = max(positions[-1], scan.positions[-1])
        n_new = int(round((new_hi - new_lo) / step)) + 1
        new_positions = new_lo + np.arange(n_new) * step
        new_values = np.zeros(n_new)
        new_weights = np.zeros(n_new)
        for pos, val, wt in (
            (positions, values, weights),
            (np.asarray(scan.positions), gain * np.asarray(scan.values),
             np.ones(len(scan.positions))),
        ):
            start = int(round((pos[0] - new_lo) / step))
            new_values[start:start + len(val)] += val * wt
            new_weights[start:start + len(val)] += wt
        positions = new_positions
        values = new_values / np.maximum(new_weights, 1.0)
        weights = np.minimum(new_weights, 1.0)

    return Profile1D(positions, np.clip(values, 0.0, None))


def _refine_peak(positions: np.ndarray, values: np.ndarray, hint: float,
                 search_steps: int | None = None) -> tuple[float, float]:
    """Locate a local maximum near the hint; parabolic sub-step refinement.

    Returns (position, height).  Raises PeakNotFoundError when no local
    maximum lies within +/- search_steps samples of the hint.
    """
    steps = search_steps if search_steps is not None else DEFAULT_CONFIG.peak_search_steps
    center = int(round((hint - positions[0]) / (positions[1] - positions[0])))
    if center < 0 or center >= values.size:
        raise PeakNotFoundError(f"peak hint {hint:.3e} m outside the profile")
    best = None
    for j in range(max(1, center - steps), min(values.size - 1, center + steps + 1)):
        if values[j] >= values[j - 1] and values[j] >= values[j + 1] \
                and (values[j] > values[j - 1] or values[j] > values[j + 1]):
            if best is None or values[j] > values[best]:
                best = j
    if best is None:
        raise PeakNotFoundError(
            f"no local maximum within {steps} steps of {hint:.3e} m"
        )
    vm, v0, vp = values[best - 1], values[best], values[best + 1]
    curvature = vm - 2.0 * v0 + vp
    if curvature < 0:
        frac = 0.5 * (vm - vp) / curvature
        height = v0 - 0.25 * (vm - vp) * frac
    else:
        frac, height = 0.0, v0
    step = positions[1] - positions[0]
    return float(positions[best] + frac * step), float(height)


def extract_crosstalk(
    profile: Profile1D,
    peak_a: float,
    peak_b: float,
    n_points: int | None = None,
    noise_floor: float | None = None,
    search_steps: int | None = None,
) -> CrosstalkReport:
    """Windowed crosstalk between two resolved peaks, in dB.

    The window of `n_points` samples is centered midway between the two
    refined peak positions and must lie strictly between them
    (WindowTooSmallError otherwise).  value_db compares the window mean
    to the first peak's height; uncertainty_db is the standard error of
    the window mean expressed in dB.  When the window mean does not
    exceed a configured noise floor the report is marked floor_limited
    and the floor takes the mean's place.
    """
    count = n_points if n_points is not None else DEFAULT_CONFIG.window_points
    if count < 2:
        raise ValidationError("window needs at least 2 points")
    positions = profile.positions
    values = profile.values
    pos_a, height_a = _refine_peak(positions, values, peak_a, search_steps)
    pos_b, _ = _refine_peak(positions, values, peak_b, search_steps)
    if math.isclose(pos_a, pos_b):
        raise ValidationError("the two peaks coincide")

    step = profile.step
    center = 0.5 * (pos_a + pos_b)
    half_span = count * step / 2.0
    lo_lim, hi_lim = min(pos_a, pos_b), max(pos_a, pos_b)
    if center - half_span <= lo_lim or center + half_span >= hi_lim:
        raise WindowTooSmallError(
            f"{count} points at step {step:.3e} m do not fit strictly "
            f"between peaks {lo_lim:.3e} and {hi_lim:.3e} m"
        )
    sel = np.nonzero((positions > center - half_span) & (positions < center + half_span))[0]
    if sel.size < count:
        raise WindowTooSmallError(
            f"only {sel.size} of {count} window samples available between the peaks"
        )
    trim = (sel.size - count) // 2
    sel = sel[trim:trim + count]
    window = values[sel]
    mean = float(np.mean(window))
    se = float(np.std(window, ddof=1) / math.sqrt(window.size))

    floor_limited = False
    if mean <= 0 or (noise_floor is not None and mean <= noise_floor):
        if noise_floor is not None and noise_floor > 0:
            mean = noise_floor
            floor_limited = True
            se = math.inf
        elif mean <= 0:
            return CrosstalkReport(
                value_db=-math.inf,
                uncertainty_db=math.inf,
                peak_position=pos_a,
                window=(float(positions[sel[0]]), float(positions[sel[-1]])),
                n_window_points=int(window.size),
                floor_limited=True,
            )
    value_db = db_from_ratio(mean / height_a)
    uncertainty_db = math.inf if not math.isfinite(se) or mean <= 0 \
        else 10.0 / math.log(10.0) * se / mean
    return CrosstalkReport(
        value_db=value_db,
        uncertainty_db=uncertainty_db,
        peak_position=pos_a,
        window=(float(positions[sel[0]]), float(positions[sel[-1]])),
        n_window_points=int(window.size),
        floor_limited=floor_limited,
    )


def fiber_scan_background_ratio(
    plane,
    peak: tuple[float, float],
    background_region: tuple[float, float, float, float],
    exclusion_radius: float | None = None,
) -> float:
    """Mean background intensity over peak intensity, in dB, no deconvolution.

    `background_region` is (x_min, x_max, y_min, y_max) and must keep at
    least `exclusion_radius` away from the peak (RegionOverlapError).
    A zero background returns -inf, i.e. below the measurement floor.
    """
    radius = (exclusion_radius if exclusion_radius is not None
              else DEFAULT_CONFIG.fiber_exclusion_radius)
    x_min, x_max, y_min, y_max = background_region
    if not (x_min < x_max and y_min < y_max):
        raise ValidationError("background region must have positive extent")
    px, py = peak
    nearest_x = min(max(px, x_min), x_max)
    nearest_y = min(max(py, y_min), y_max)
    if math.hypot(nearest_x - px, nearest_y - py) < radius:
        raise RegionOverlapError(
            f"background region comes within {radius:.3e} m of the peak"
        )
    x = plane.x()
    y = plane.y()
    sel_x = (x >= x_min) & (x <= x_max)
    sel_y = (y >= y_min) & (y <= y_max)
    if not (np.any(sel_x) and np.any(sel_y)):
        raise ValidationError("background region contains no grid samples")
    intensity = plane.intensity()
    background = float(np.mean(intensity[np.ix_(sel_y, sel_x)]))
    ix = int(np.argmin(np.abs(x - px)))
    iy = int(np.argmin(np.abs(y - py)))
    peak_value = float(intensity[iy, ix])
    if peak_value <= 0:
        raise ValidationError("peak intensity is zero at the given position")
    return db_from_ratio(background / peak_value)


# ---------------------------------------------------------------------------
# file interchange


def _sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_trace(trace: ScanTrace, csv_path) -> None:
    """Write a trace as position_um,intensity CSV plus a JSON sidecar."""
    path = Path(csv_path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["position_um", "intensity"])
        for p, v in zip(trace.positions, trace.values):
            w.writerow([repr(float(p) * 1e6), repr(float(v))])
    sidecar = {
        "slit_width_um": trace.slit_width * 1e6,
        "step_um": trace.step * 1e6,
        "slit_height_mm": trace.slit_height * 1e3,
        "modulation_hz": DEFAULT_CONFIG.modulation_frequency,
    }
    if trace.noise_floor is not None:
        sidecar["noise_floor"] = trace.noise_floor
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace(csv_path) -> ScanTrace:
    """Read a trace CSV and its JSON sidecar written by `write_trace`."""
    path = Path(csv_path)
    positions = []
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["position_um", "intensity"]:
            raise ValidationError(f"unexpected trace header {header!r}")
        for row in reader:
            positions.append(float(row[0]) * 1e-6)
            values.append(float(row[1]))
    sidecar_file = _sidecar_path(path)
    if not sidecar_file.exists():
        raise ValidationError(f"missing sidecar {sidecar_file}")
    with open(sidecar_file, encoding="utf-8") as fh:
        sidecar = json.load(fh)
    return ScanTrace(
        positions=np.asarray(positions),
        values=np.asarray(values),
        slit_width=sidecar["slit_width_um"] * 1e-6,
        slit_height=sidecar.get("slit_height_mm", DEFAULT_CONFIG.slit_height * 1e3) * 1e-3,
        noise_floor=sidecar.get("noise_floor"),
    )


def write_profile_csv(profile: Profile1D, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["position_um", "intensity"])
        for p, v in zip(profile.positions, profile.values):
            w.writerow([repr(float(p) * 1e6), repr(float(v))])


def read_profile_csv(path) -> Profile1D:
    positions = []
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["position_um", "intensity"]:
            raise ValidationError(f"unexpected profile header {header!r}")
        for row in reader:
            positions.append(float(row[0]) * 1e-6)
            values.append(float(row[1]))
    return Profile1D(np.asarray(positions), np.asarray(values))


def write_report_json(report: CrosstalkReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
