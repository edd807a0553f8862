"""End-to-end scenario runner.

Two workflows are chained out of the building-block modules:

* delivery — solve the ion chain, lay the facet channels out at the
  chain positions scaled by the pitch factor, relay them through the
  ideal imaging model, and score per-ion crosstalk at the chain
  positions.
* metrology — build (or load) an image-plane intensity profile, slice
  it into overlapping slit-scan segments with per-segment gain drift,
  stitch, deconvolve, and extract the windowed crosstalk figure.

Every stage failure is re-raised as StageError naming exactly one
stage.  Artifacts (JSON report, CSV data, PNG figures) go into a
content-addressed subdirectory of the configured output directory: the
name is a hash of the effective configuration, so re-running the same
scenario overwrites its own directory and different configurations
never collide.  Reports contain no timestamps or absolute paths, which
makes repeated runs byte-identical under fixed seeds.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beam_train import (
    ChannelLayout,
    ImagingSystemSpec,
    compose_facet_field,
    crosstalk_matrix,
    default_integration_radius,
    image_field,
)
from .config import DEFAULT_CONFIG, GlobalConfig, config_from_dict
from .errors import StageError, ValidationError
from .fields import ScalarField2D, gaussian_field, mode_field_diameter, write_intensity_csv
from .ion_chain import IonChain, IonChainSpec, physical_positions, write_chain_csv
from .mode_solver import WaveguideGeometry
from .slit_scan import (
    CrosstalkReport,
    NoiseModel,
    Profile1D,
    ScanTrace,
    deconvolve,
    extract_crosstalk,
    read_trace,
    simulate_scan,
    stitch_scans,
    write_profile_csv,
    write_trace,
)
from .taper import TaperProfile, facet_mode
from . import plotting

SCENARIOS = ("delivery", "metrology")

# stage names in dispatch order; the CLI maps each to exit code 10+index
STAGES = (
    "config",
    "ion-chain",
    "facet-mode",
    "layout",
    "compose",
    "imaging",
    "crosstalk",
    "truth",
    "scan",
    "stitch",
    "deconvolve",
    "extract",
    "artifacts",
)


def stage_exit_code(stage: str) -> int:
    return 10 + STAGES.index(stage)


@contextmanager
def _stage(name: str):
    assert name in STAGES
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _require_keys(mapping: dict, allowed, label: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown {label} key(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class DeliverySettings:
    """Delivery-scenario knobs (SI units internally)."""

    n_channels: int = 8
    pitch_factor: float = 5.0           # chip positions = ion positions * factor
    positions: tuple | None = None      # explicit chip-plane positions (m)
    chip_spot_radius: float = 10.695e-6     # 1/e^2 intensity radius at the facet plane
    numerical_aperture: float = 0.1     # object-side NA of the relay
    magnification: float | None = None  # default: 1 / pitch_factor
    grid_step: float = 1e-6             # facet-plane sample step
    grid_margin_spots: float = 4.0      # grid half-extent around spots, in spot radii
    solve_facet_mode: bool = True       # solve and report the taper tip mode
    facet_resolution: float = 20e-9
    target_db: float = -50.0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValidationError("need at least one channel")
        if not self.pitch_factor > 0:
            raise ValidationError("pitch factor must be positive")
        if not (self.chip_spot_radius > 0 and self.grid_step > 0):
            raise ValidationError("spot radius and grid step must be positive")
        if self.positions is not None and self.magnification is None:
            raise ValidationError(
                "explicit channel positions require an explicit magnification"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "DeliverySettings":
        _require_keys(d, {
            "n_channels", "pitch_factor", "positions_um", "chip_spot_radius_um",
            "numerical_aperture", "magnification", "grid_step_um",
            "grid_margin_spots", "solve_facet_mode", "facet_resolution_nm",
            "target_db",
        }, "delivery")
        kw: dict = {}
        if "n_channels" in d:
            kw["n_channels"] = int(d["n_channels"])
        if "pitch_factor" in d:
            kw["pitch_factor"] = float(d["pitch_factor"])
        if d.get("positions_um") is not None:
            kw["positions"] = tuple(float(v) * 1e-6 for v in d["positions_um"])
        if "chip_spot_radius_um" in d:
            kw["chip_spot_radius"] = float(d["chip_spot_radius_um"]) * 1e-6
        if "numerical_aperture" in d:
            kw["numerical_aperture"] = float(d["numerical_aperture"])
        if d.get("magnification") is not None:
            kw["magnification"] = float(d["magnification"])
        if "grid_step_um" in d:
            kw["grid_step"] = float(d["grid_step_um"]) * 1e-6
        if "grid_margin_spots" in d:
            kw["grid_margin_spots"] = float(d["grid_margin_spots"])
        if "solve_facet_mode" in d:
            kw["solve_facet_mode"] = bool(d["solve_facet_mode"])
        if "facet_resolution_nm" in d:
            kw["facet_resolution"] = float(d["facet_resolution_nm"]) * 1e-9
        if "target_db" in d:
            kw["target_db"] = float(d["target_db"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "pitch_factor": self.pitch_factor,
            "positions_um": (None if self.positions is None
                             else [p * 1e6 for p in self.positions]),
            "chip_spot_radius_um": self.chip_spot_radius * 1e6,
            "numerical_aperture": self.numerical_aperture,
            "magnification": self.magnification,
            "grid_step_um": self.grid_step * 1e6,
            "grid_margin_spots": self.grid_margin_spots,
            "solve_facet_mode": self.solve_facet_mode,
            "facet_resolution_nm": self.facet_resolution * 1e9,
            "target_db": self.target_db,
        }


METROLOGY_SOURCES = ("synthetic", "delivery", "traces")


@dataclass(frozen=True)
class MetrologySettings:
    """Metrology-scenario knobs.

    Chip-plane quantities (separation, spot radius, pedestal margin) are
    mapped through `scan_magnification` to the physically scanned plane.
    """

    source: str = "synthetic"
    separation: float = 73.4e-6         # chip-equivalent peak separation
    scan_magnification: float = 50.0
    spot_radius: float = 4e-6           # chip-equivalent 1/e^2 radius
    peak_heights: tuple = (1.0, 1.0)
    pedestal_db: float | None = -50.8   # injected flat pedestal, None disables
    pedestal_margin: float = 6e-6       # chip-equivalent setback from each peak
    span_margin: float = 2.5e-3         # physical margin beyond each peak
    n_segments: int | None = None       # None: auto from segment_range
    segment_gain: float = 0.79          # per-segment multiplicative drift
    segment_range: float = 10e-3
    overlap: float = 2e-3
    noise_floor_db: float | None = None
    proportional_sigma: float = 0.0
    window_points: int = 1000
    numerical_floor_db: float = -120.0
    trace_files: tuple = ()
    peak_hints: tuple | None = None     # physical-plane hints for non-synthetic runs

    def __post_init__(self):
        if self.source not in METROLOGY_SOURCES:
            raise ValidationError(
                f"metrology source must be one of {METROLOGY_SOURCES}"
            )
        if not (self.separation > 0 and self.spot_radius > 0):
            raise ValidationError("separation and spot radius must be positive")
        if not self.scan_magnification > 0:
            raise ValidationError("scan magnification must be positive")
        if len(self.peak_heights) != 2 or any(h <= 0 for h in self.peak_heights):
            raise ValidationError("need two positive peak heights")
        if self.n_segments is not None and self.n_segments < 1:
            raise ValidationError("n_segments must be at least 1")
        if not self.segment_range > self.overlap >= 0:
            raise ValidationError("need segment_range > overlap >= 0")
        if self.source == "traces" and not self.trace_files:
            raise ValidationError("traces source requires trace_files")
        if self.source == "traces" and self.peak_hints is None:
            raise ValidationError("traces source requires peak_hints")

    @classmethod
    def from_dict(cls, d: dict) -> "MetrologySettings":
        _require_keys(d, {
            "source", "separation_um", "scan_magnification", "spot_radius_um",
            "peak_heights", "pedestal_db", "pedestal_margin_um",
            "span_margin_mm", "n_segments", "segment_gain", "segment_range_mm",
            "overlap_mm", "noise_floor_db", "proportional_sigma",
            "window_points", "numerical_floor_db", "trace_files",
            "peak_hints_mm",
        }, "metrology")
        kw: dict = {}
        if "source" in d:
            kw["source"] = str(d["source"])
        if "separation_um" in d:
            kw["separation"] = float(d["separation_um"]) * 1e-6
        if "scan_magnification" in d:
            kw["scan_magnification"] = float(d["scan_magnification"])
        if "spot_radius_um" in d:
            kw["spot_radius"] = float(d["spot_radius_um"]) * 1e-6
        if "peak_heights" in d:
            kw["peak_heights"] = tuple(float(v) for v in d["peak_heights"])
        if "pedestal_db" in d:
            kw["pedestal_db"] = (None if d["pedestal_db"] is None
                                 else float(d["pedestal_db"]))
        if "pedestal_margin_um" in d:
            kw["pedestal_margin"] = float(d["pedestal_margin_um"]) * 1e-6
        if "span_margin_mm" in d:
            kw["span_margin"] = float(d["span_margin_mm"]) * 1e-3
        if d.get("n_segments") is not None:
            kw["n_segments"] = int(d["n_segments"])
        if "segment_gain" in d:
            kw["segment_gain"] = float(d["segment_gain"])
        if "segment_range_mm" in d:
            kw["segment_range"] = float(d["segment_range_mm"]) * 1e-3
        if "overlap_mm" in d:
            kw["overlap"] = float(d["overlap_mm"]) * 1e-3
        if "noise_floor_db" in d:
            kw["noise_floor_db"] = (None if d["noise_floor_db"] is None
                                    else float(d["noise_floor_db"]))
        if "proportional_sigma" in d:
            kw["proportional_sigma"] = float(d["proportional_sigma"])
        if "window_points" in d:
            kw["window_points"] = int(d["window_points"])
        if "numerical_floor_db" in d:
            kw["numerical_floor_db"] = float(d["numerical_floor_db"])
        if "trace_files" in d:
            kw["trace_files"] = tuple(str(p) for p in d["trace_files"])
        if d.get("peak_hints_mm") is not None:
            kw["peak_hints"] = tuple(float(v) * 1e-3 for v in d["peak_hints_mm"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "separation_um": self.separation * 1e6,
            "scan_magnification": self.scan_magnification,
            "spot_radius_um": self.spot_radius * 1e6,
            "peak_heights": list(self.peak_heights),
            "pedestal_db": self.pedestal_db,
            "pedestal_margin_um": self.pedestal_margin * 1e6,
            "span_margin_mm": self.span_margin * 1e3,
            "n_segments": self.n_segments,
            "segment_gain": self.segment_gain,
            "segment_range_mm": self.segment_range * 1e3,
            "overlap_mm": self.overlap * 1e3,
            "noise_floor_db": self.noise_floor_db,
            "proportional_sigma": self.proportional_sigma,
            "window_points": self.window_points,
            "numerical_floor_db": self.numerical_floor_db,
            "trace_files": list(self.trace_files),
            "peak_hints_mm": (None if self.peak_hints is None
                              else [v * 1e3 for v in self.peak_hints]),
        }


@dataclass(frozen=True)
class ScenarioConfig:
    """A complete scenario: which workflow, global defaults, and its knobs."""

    scenario: str
    config: GlobalConfig = DEFAULT_CONFIG
    delivery: DeliverySettings = DeliverySettings()
    metrology: MetrologySettings = MetrologySettings()
    output_dir: str = "runs"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"scenario must be one of {SCENARIOS}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        with _stage("config"):
            _require_keys(d, {"scenario", "config", "delivery", "metrology",
                              "output_dir"}, "scenario")
            if "scenario" not in d:
                raise ValidationError("scenario config must name a scenario")
            return cls(
                scenario=str(d["scenario"]),
                config=config_from_dict(d.get("config", {})),
                delivery=DeliverySettings.from_dict(d.get("delivery", {})),
                metrology=MetrologySettings.from_dict(d.get("metrology", {})),
                output_dir=str(d.get("output_dir", "runs")),
            )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config.to_dict(),
            "delivery": self.delivery.to_dict(),
            "metrology": self.metrology.to_dict(),
            "output_dir": self.output_dir,
        }

    def content_hash(self) -> str:
        """Hash of everything that affects results (the output base path
        deliberately excluded, so relocating output keeps run identity)."""
        payload = self.to_dict()
        payload.pop("output_dir")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / f"run-{self.content_hash()}"


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# delivery


@dataclass(frozen=True)
class DeliveryResult:
    chain: IonChain
    ion_plane_intensity: ScalarField2D
    per_channel_planes: tuple
    crosstalk: np.ndarray
    report: dict
    output_dir: Path | None


def _nearest_neighbor_max(matrix: np.ndarray) -> float | None:
    n = matrix.shape[0]
    if n < 2:
        return None
    entries = [matrix[i, j] for i in range(n) for j in (i - 1, i + 1)
               if 0 <= j < n]
    return float(max(entries))


def run_delivery_scenario(cfg: ScenarioConfig,
                          write_artifacts: bool = True) -> DeliveryResult:
    gc = cfg.config
    d = cfg.delivery

    with _stage("ion-chain"):
        chain = physical_positions(
            IonChainSpec(d.n_channels, gc.ion_mass, gc.axial_frequency),
            residual_tol=gc.newton_residual_tol,
            max_iter=gc.newton_max_iter,
        )

    facet_info = None
    if d.solve_facet_mode:
        with _stage("facet-mode"):
            geom = WaveguideGeometry(gc.core_width, gc.core_thickness,
                                     gc.core_index, gc.clad_index, gc.wavelength)
            profile = TaperProfile(gc.core_width, gc.taper_tip_width,
                                   gc.taper_length, n_segments=gc.taper_segments)
            tip = facet_mode(profile, geom, resolution=d.facet_resolution)
            mfd_x, mfd_y = mode_field_diameter(tip.field)
            facet_info = {
                "n_eff": tip.n_eff,
                "mfd_x_um": mfd_x * 1e6,
                "mfd_y_um": mfd_y * 1e6,
                "tip_width_nm": gc.taper_tip_width * 1e9,
            }

    with _stage("layout"):
        if d.positions is not None:
            positions = d.positions
            magnification = d.magnification
        else:
            positions = tuple(x * d.pitch_factor for x in chain.positions)
            magnification = (d.magnification if d.magnification is not None
                             else 1.0 / d.pitch_factor)
        w = d.chip_spot_radius
        step = d.grid_step
        half_patch = d.grid_margin_spots * w
        n_patch = 2 * int(round(half_patch / step)) + 1
        mode = gaussian_field(w, w, step, step, n_patch, n_patch,
                              gc.wavelength, power=1.0)
        layout = ChannelLayout(positions, mode, (1.0,) * len(positions))
        half_width = max(abs(p) for p in positions) + half_patch

    with _stage("compose"):
        single = [
            compose_facet_field(
                ChannelLayout((p,), mode, (1.0,)),
                half_width=half_width,
                edge_power_tol=gc.edge_power_tol,
            )
            for p in positions
        ]

    with _stage("imaging"):
        sys = ImagingSystemSpec(magnification, d.numerical_aperture)
        planes = tuple(image_field(f, sys, gc.sampling_factor) for f in single)
        total = np.zeros_like(planes[0].intensity())
        for plane in planes:
            total += plane.intensity()
        composite = ScalarField2D(
            samples=np.sqrt(total).astype(complex),
            dx=planes[0].dx, dy=planes[0].dy,
            origin=planes[0].origin, wavelength=planes[0].wavelength,
        )

    with _stage("crosstalk"):
        targets = [(x, 0.0) for x in chain.positions] if d.positions is None \
            else [(p * magnification, 0.0) for p in positions]
        radius = default_integration_radius(
            gc.wavelength, d.numerical_aperture / magnification)
        matrix = crosstalk_matrix(planes, targets, radius)
        nn_max = _nearest_neighbor_max(matrix)
        passed = nn_max is None or nn_max <= d.target_db

    report = {
        "scenario": "delivery",
        "config_hash": cfg.content_hash(),
        "chain": {
            "n_ions": chain.n_ions,
            "length_scale_um": chain.length_scale * 1e6,
            "positions_um": [x * 1e6 for x in chain.positions],
            "min_gap_um": chain.min_gap() * 1e6 if chain.n_ions > 1 else None,
        },
        "facet_mode": facet_info,
        "layout": {
            "positions_um": [p * 1e6 for p in positions],
            "pitch_factor": d.pitch_factor if d.positions is None else None,
            "chip_spot_radius_um": w * 1e6,
        },
        "imaging": {
            "magnification": magnification,
            "numerical_aperture": d.numerical_aperture,
            "integration_radius_um": radius * 1e6,
        },
        "crosstalk_db": [[float(v) for v in row] for row in matrix],
        "nearest_neighbor_max_db": nn_max,
        "target_db": d.target_db,
        "passed": bool(passed),
    }

    out_dir = None
    if write_artifacts:
        with _stage("artifacts"):
            out_dir = cfg.run_dir()
            out_dir.mkdir(parents=True, exist_ok=True)
            write_chain_csv(chain, out_dir / "ion_chain.csv")
            write_intensity_csv(composite, out_dir / "ion_plane_intensity.csv")
            np.savetxt(out_dir / "crosstalk_db.csv", matrix, delimiter=",",
                       header=",".join(f"ch{i}" for i in range(len(targets))),
                       comments="")
            plotting.save_intensity_map(
                composite, out_dir / "ion_plane.png", targets=targets,
                title="simulated ion-plane intensity")
            plotting.save_crosstalk_heatmap(
                matrix, out_dir / "crosstalk.png", target_db=d.target_db)
            report["artifacts"] = [
                "ion_chain.csv", "ion_plane_intensity.csv", "crosstalk_db.csv",
                "ion_plane.png", "crosstalk.png", "report.json",
            ]
            _write_json(out_dir / "report.json", report)

    return DeliveryResult(
        chain=chain,
        ion_plane_intensity=composite,
        per_channel_planes=planes,
        crosstalk=matrix,
        report=report,
        output_dir=out_dir,
    )


# ---------------------------------------------------------------------------
# metrology


def plan_segments(lo: float, hi: float, step: float,
                  n_segments: int | None = None,
                  segment_range: float | None = None,
                  overlap: float | None = None) -> list:
    """Split [lo, hi] into overlapping scan segments on the step lattice.

    With `n_segments` unset, the count is the smallest that covers the
    span with ranges of `segment_range`; boundaries are snapped to the
    scan-step lattice anchored at `lo` so all segment traces share one
    sample lattice.
    """
    rng = segment_range if segment_range is not None else DEFAULT_CONFIG.scan_range
    ovl = overlap if overlap is not None else DEFAULT_CONFIG.scan_overlap
    span = hi - lo
    if span <= 0:
        raise ValidationError("segment span must be positive")
    if not rng > ovl >= 0:
        raise ValidationError("need segment_range > overlap >= 0")
    n = n_segments
    if n is None:
        n = max(1, math.ceil((span - ovl) / (rng - ovl)))
    if n == 1:
        return [(lo, hi)]

    def snap(v: float) -> float:
        return lo + round((v - lo) / step) * step

    seg_len = (span + (n - 1) * ovl) / n
    segments = []
    for i in range(n):
        start = snap(lo + i * (seg_len - ovl))
        end = hi if i == n - 1 else snap(start + seg_len)
        segments.append((start, end))
    return segments


@dataclass(frozen=True)
class MetrologyResult:
    report: CrosstalkReport
    composite: Profile1D
    recovered: Profile1D
    traces: tuple
    report_dict: dict
    output_dir: Path | None


def _synthetic_truth(cfg: ScenarioConfig):
    """Fine-grid image-plane profile with two spots and an optional pedestal."""
    gc = cfg.config
    m = cfg.metrology
    mag = m.scan_magnification
    sep = m.separation * mag
    w = m.spot_radius * mag
    margin = m.pedestal_margin * mag
    peaks = (-sep / 2.0, sep / 2.0)
    fine = gc.scan_step / 8.0
    lo = math.floor((peaks[0] - m.span_margin) / gc.scan_step) * gc.scan_step
    hi = math.ceil((peaks[1] + m.span_margin) / gc.scan_step) * gc.scan_step
    x = lo + np.arange(int(round((hi - lo) / fine)) + 1) * fine
    v = (m.peak_heights[0] * np.exp(-2.0 * (x - peaks[0]) ** 2 / w**2)
         + m.peak_heights[1] * np.exp(-2.0 * (x - peaks[1]) ** 2 / w**2))
    if m.pedestal_db is not None:
        pedestal = max(m.peak_heights) * 10.0 ** (m.pedestal_db / 10.0)
        v = v + pedestal * ((x > peaks[0] + margin) & (x < peaks[1] - margin))
    return Profile1D(x, v), peaks


def _delivery_truth(cfg: ScenarioConfig):
    """Transversely integrated ion-plane intensity from the delivery chain."""
    result = run_delivery_scenario(cfg, write_artifacts=False)
    plane = result.ion_plane_intensity
    values = plane.intensity().sum(axis=0) * plane.dy
    profile = Profile1D(plane.x(), values)
    hints = cfg.metrology.peak_hints
    if hints is None:
        mid = result.chain.n_ions // 2
        hints = (result.chain.positions[mid - 1], result.chain.positions[mid])
    return profile, tuple(hints)


def run_metrology_scenario(cfg: ScenarioConfig,
                           write_artifacts: bool = True) -> MetrologyResult:
    gc = cfg.config
    m = cfg.metrology

    traces: list[ScanTrace] = []
    segments = []
    if m.source == "traces":
        with _stage("scan"):
            traces = [read_trace(p) for p in m.trace_files]
            hints = m.peak_hints
    else:
        with _stage("truth"):
            if m.source == "synthetic":
                truth, hints = _synthetic_truth(cfg)
            else:
                truth, hints = _delivery_truth(cfg)
        with _stage("scan"):
            x = truth.positions
            segments = plan_segments(float(x[0]), float(x[-1]), gc.scan_step,
                                     m.n_segments, m.segment_range, m.overlap)
            # The slit senses the true signal beyond each segment's travel
            # range, so simulate with a one-slit-width guard band (an
            # integer number of scan steps, keeping segment lattices
            # congruent) and trim the trace back to the segment.
            guard = math.ceil(gc.slit_width / gc.scan_step) * gc.scan_step
            for i, (lo, hi) in enumerate(segments):
                glo = max(float(x[0]), lo - guard)
                ghi = min(float(x[-1]), hi + guard)
                sel = (x >= glo - 1e-12) & (x <= ghi + 1e-12)
                seg = Profile1D(x[sel], truth.values[sel])
                noise = None
                if m.noise_floor_db is not None or m.proportional_sigma > 0:
                    noise = NoiseModel(m.noise_floor_db, m.proportional_sigma,
                                       seed=gc.seed + i)
                trace = simulate_scan(seg, gc.slit_width, gc.scan_step, noise)
                keep = ((trace.positions >= lo - 1e-12)
                        & (trace.positions <= hi + 1e-12))
                drift = m.segment_gain**i
                trace = dataclasses.replace(
                    trace,
                    positions=trace.positions[keep],
                    values=trace.values[keep] * drift,
                    noise_floor=(None if trace.noise_floor is None
                                 else trace.noise_floor * drift),
                )
                traces.append(trace)

    with _stage("stitch"):
        if len(traces) == 1:
            composite = Profile1D(traces[0].positions, traces[0].values)
        else:
            min_overlap = max(m.overlap - 4.0 * gc.scan_step, gc.scan_step)
            composite = stitch_scans(traces, min_overlap=min_overlap,
                                     peak_fraction=gc.stitch_peak_fraction)
        composite_trace = ScanTrace(
            positions=composite.positions, values=composite.values,
            slit_width=traces[0].slit_width, slit_height=traces[0].slit_height,
            noise_floor=traces[0].noise_floor,
        )

    with _stage("deconvolve"):
        dres = deconvolve(composite_trace, gc.deconvolution_iterations,
                          gc.deconvolution_residual_tol)
        recovered = dres.profile

    with _stage("extract"):
        floors = [t.noise_floor for t in traces if t.noise_floor is not None]
        numerical_floor = float(np.max(recovered.values)) \
            * 10.0 ** (m.numerical_floor_db / 10.0)
        noise_floor = max([numerical_floor, *floors])
        report = extract_crosstalk(
            recovered, hints[0], hints[1], m.window_points,
            noise_floor=noise_floor, search_steps=gc.peak_search_steps,
        )

    report_dict = {
        "scenario": "metrology",
        "config_hash": cfg.content_hash(),
        "source": m.source,
        "crosstalk": report.as_dict(),
        "deconvolution": {
            "converged": dres.converged,
            "relative_residual": dres.relative_residual,
            "iterations": dres.iterations,
        },
        "n_segments": len(traces),
        "segments_mm": [[lo * 1e3, hi * 1e3] for lo, hi in segments],
        "peak_hints_mm": [h * 1e3 for h in hints],
    }

    out_dir = None
    if write_artifacts:
        with _stage("artifacts"):
            out_dir = cfg.run_dir()
            out_dir.mkdir(parents=True, exist_ok=True)
            artifact_names = []
            for i, trace in enumerate(traces):
                name = f"segment_{i}.csv"
                write_trace(trace, out_dir / name)
                artifact_names += [name, f"segment_{i}.json"]
            write_profile_csv(composite, out_dir / "composite_profile.csv")
            write_profile_csv(recovered, out_dir / "recovered_profile.csv")
            plotting.save_profile_plot(
                out_dir / "metrology.png",
                [("stitched trace", composite), ("deconvolved", recovered)],
                window=report.window,
                peaks=hints,
                title="slit-scan metrology chain",
            )
            artifact_names += ["composite_profile.csv", "recovered_profile.csv",
                               "metrology.png", "report.json"]
            report_dict["artifacts"] = artifact_names
            _write_json(out_dir / "report.json", report_dict)

    return MetrologyResult(
        report=report,
        composite=composite,
        recovered=recovered,
        traces=tuple(traces),
        report_dict=report_dict,
        output_dir=out_dir,
    )


def run_scenario(cfg: ScenarioConfig, write_artifacts: bool = True):
    """Dispatch to the configured scenario."""
    if cfg.scenario == "delivery":
        return run_delivery_scenario(cfg, write_artifacts)
    return run_metrology_scenario(cfg, write_artifacts)
