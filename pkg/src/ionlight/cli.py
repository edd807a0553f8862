"""Command-line surface for the toolkit.

Every module operation is reachable as a subcommand; results go to
stdout as JSON or CSV while bulk data (fields, traces, profiles) moves
through CSV files named by options.  Quantities accept unit suffixes
(``500nm``, ``73.4um``, ``34khz``, ``138amu``); bare numbers are base
SI.  Errors print one machine-parsable line to stderr of the form
``ionlight: error: <kind>: <message>`` and exit with 2 (usage), 3
(validation), 4 (computation), 5 (I/O), or 10+ for a named pipeline
stage.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import sys

import click

from . import __version__
from .beam_train import (
    ImagingSystemSpec,
    crosstalk_matrix,
    default_integration_radius,
    image_field,
)
from .config import DEFAULT_CONFIG, GlobalConfig, load_config
from .design_solver import solve_design
from .errors import ComputationError, StageError, ValidationError
from .fields import read_field_csv, write_field_csv
from .ion_chain import IonChainSpec, physical_positions
from .mode_solver import WaveguideGeometry, single_mode_cutoff_width, solve_modes
from .pipeline import (
    MetrologyResult,
    ScenarioConfig,
    run_scenario,
    stage_exit_code,
)
from .slit_scan import (
    NoiseModel,
    ScanTrace,
    deconvolve,
    extract_crosstalk,
    read_profile_csv,
    read_trace,
    simulate_scan,
    stitch_scans,
    write_profile_csv,
    write_trace,
)
from .taper import TaperProfile, adiabaticity_check, sweep_widths, write_sweep_csv
from .units import parse_length, parse_quantity
from .constants import amu

# exit codes; stage failures map to 10 + index into pipeline.STAGES
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_COMPUTATION = 4
EXIT_IO = 5


class _QuantityType(click.ParamType):
    """Float with an optional unit suffix (nm/um/mm/cm/m/hz/khz/mhz/ghz/amu/kg)."""

    name = "quantity"
    parser = staticmethod(parse_quantity)

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float)):
            return float(value)
        try:
            return self.parser(value)
        except ValidationError as exc:
            self.fail(str(exc), param, ctx)


class _LengthType(_QuantityType):
    name = "length"
    parser = staticmethod(parse_length)


QUANTITY = _QuantityType()
LENGTH = _LengthType()


def _emit_json(payload) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def _emit_csv(header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    click.echo(buf.getvalue(), nl=False)


def _fmt(gc: GlobalConfig, fmt: str | None) -> str:
    return fmt if fmt is not None else gc.output_format


_FORMAT_OPTION = click.option(
    "--format", "fmt", type=click.Choice(["json", "csv"]), default=None,
    help="Output format (default from the global config).")


def _geometry(gc: GlobalConfig, width=None, thickness=None, core_index=None,
              clad_index=None, wavelength=None) -> WaveguideGeometry:
    return WaveguideGeometry(
        core_width=width if width is not None else gc.core_width,
        core_thickness=thickness if thickness is not None else gc.core_thickness,
        core_index=core_index if core_index is not None else gc.core_index,
        clad_index=clad_index if clad_index is not None else gc.clad_index,
        wavelength=wavelength if wavelength is not None else gc.wavelength,
    )


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, "--version", prog_name="ionlight")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file overriding the global defaults.")
@click.pass_context
def cli(ctx, config_path):
    """Waveguide, ion-chain, imaging, and slit-scan metrology toolkit."""
    ctx.obj = load_config(config_path) if config_path else DEFAULT_CONFIG


_GEOMETRY_OPTIONS = [
    click.option("--width", type=LENGTH, default=None,
                 help="Core width, e.g. 500nm."),
    click.option("--thickness", type=LENGTH, default=None,
                 help="Core thickness, e.g. 150nm."),
    click.option("--core-index", type=float, default=None),
    click.option("--clad-index", type=float, default=None),
    click.option("--wavelength", type=LENGTH, default=None,
                 help="Vacuum wavelength, e.g. 650nm."),
]


def _with(options):
    def wrap(f):
        for option in reversed(options):
            f = option(f)
        return f
    return wrap


@cli.command()
@_with(_GEOMETRY_OPTIONS)
@click.option("--resolution", type=LENGTH, default=None,
              help="Grid step (default from config).")
@click.option("--polarization", type=click.Choice(["TE", "TM"]), default="TE")
@click.option("--max-modes", type=int, default=None)
@click.option("--self-check", is_flag=True,
              help="Re-solve on a halved grid and verify n_eff agreement.")
@_FORMAT_OPTION
@click.pass_obj
def modes(gc, width, thickness, core_index, clad_index, wavelength,
          resolution, polarization, max_modes, self_check, fmt):
    """Solve the guided modes of the rectangular waveguide."""
    geom = _geometry(gc, width, thickness, core_index, clad_index, wavelength)
    found = solve_modes(geom, polarization=polarization, max_modes=max_modes,
                        resolution=resolution, self_check=self_check)
    if _fmt(gc, fmt) == "csv":
        _emit_csv(["index", "polarization", "n_eff"],
                  [[m.mode_index, m.polarization, repr(m.n_eff)] for m in found])
    else:
        _emit_json({
            "count": len(found),
            "modes": [{"index": m.mode_index, "polarization": m.polarization,
                       "n_eff": m.n_eff} for m in found],
        })


@cli.command()
@_with(_GEOMETRY_OPTIONS)
@click.option("--resolution", type=LENGTH, default="25nm",
              help="Grid step for the bisection solves (default 25nm; "
                   "tighten for publication-grade numbers).")
@click.option("--polarization", type=click.Choice(["TE", "TM"]), default="TE")
@click.option("--search-lo", type=LENGTH, default=None)
@click.option("--search-hi", type=LENGTH, default=None)
@click.option("--width-tol", type=LENGTH, default=None)
@_FORMAT_OPTION
@click.pass_obj
def cutoff(gc, width, thickness, core_index, clad_index, wavelength,
           resolution, polarization, search_lo, search_hi, width_tol, fmt):
    """Find the largest single-mode core width by bisection."""
    geom = _geometry(gc, width, thickness, core_index, clad_index, wavelength)
    value = single_mode_cutoff_width(
        geom, polarization=polarization, resolution=resolution,
        search_lo=search_lo, search_hi=search_hi, width_tol=width_tol)
    if _fmt(gc, fmt) == "csv":
        _emit_csv(["cutoff_width_m"], [[repr(value)]])
    else:
        _emit_json({"cutoff_width_m": value, "cutoff_width_nm": value * 1e9,
                    "polarization": polarization})


@cli.command()
@_with(_GEOMETRY_OPTIONS)
@click.option("--tip-width", type=LENGTH, default=None,
              help="End width of the taper (default from config).")
@click.option("--length", "taper_length", type=LENGTH, default=None,
              help="Taper length (default from config).")
@click.option("--segments", type=int, default=16,
              help="Evaluation points along the taper.")
@click.option("--alpha", type=float, default=None,
              help="Adiabaticity safety factor (default from config).")
@click.option("--resolution", type=LENGTH, default="25nm",
              help="Grid step per width solve (default 25nm).")
@click.option("--sweep-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the width -> MFD sweep CSV here.")
@_FORMAT_OPTION
@click.pass_obj
def taper(gc, width, thickness, core_index, clad_index, wavelength, tip_width,
          taper_length, segments, alpha, resolution, sweep_out, fmt):
    """Check taper adiabaticity and optionally sweep mode size vs width."""
    geom = _geometry(gc, width, thickness, core_index, clad_index, wavelength)
    profile = TaperProfile(
        start_width=geom.core_width,
        end_width=tip_width if tip_width is not None else gc.taper_tip_width,
        length=taper_length if taper_length is not None else gc.taper_length,
        n_segments=segments,
    )
    result = adiabaticity_check(profile, geom, resolution=resolution,
                                alpha=alpha)
    if sweep_out is not None:
        rows = sweep_widths(geom, [profile.width_at(z) for z in
                                   profile.segment_positions()],
                            resolution=resolution)
        write_sweep_csv(rows, sweep_out)
    if _fmt(gc, fmt) == "csv":
        _emit_csv(["passed", "worst_ratio", "worst_position_m"],
                  [[int(result.passed), repr(result.worst_ratio),
                    repr(result.worst_position)]])
    else:
        _emit_json({"passed": result.passed,
                    "worst_ratio": result.worst_ratio,
                    "worst_position_m": result.worst_position,
                    "n_checked": len(result.positions)})


@cli.command()
@click.option("--n", "n_ions", type=int, default=None,
              help="Number of ions (default from config).")
@click.option("--mass-amu", type=float, default=None,
              help="Ion mass in atomic mass units.")
@click.option("--axial-khz", type=float, default=None,
              help="Axial secular frequency in kHz.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default=None, help="Write the CSV here instead of stdout.")
@click.pass_obj
def ionchain(gc, n_ions, mass_amu, axial_khz, out_path):
    """Equilibrium ion positions as CSV (index, scaled u, x in meters)."""
    spec = IonChainSpec(
        n_ions=n_ions if n_ions is not None else gc.n_ions,
        mass=mass_amu * amu if mass_amu is not None else gc.ion_mass,
        axial_frequency=(axial_khz * 1e3 if axial_khz is not None
                         else gc.axial_frequency),
    )
    chain = physical_positions(spec, residual_tol=gc.newton_residual_tol,
                               max_iter=gc.newton_max_iter)
    rows = [[i, repr(u), repr(x)] for i, (u, x) in
            enumerate(zip(chain.dimensionless_positions, chain.positions))]
    if out_path is not None:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "u", "x_m"])
            w.writerows(rows)
    else:
        _emit_csv(["index", "u", "x_m"], rows)


@cli.command()
@click.option("--set", "assignments", multiple=True, metavar="NAME=VALUE",
              help="Known parameter, e.g. --set s_c=73.4um --set M=0.187. "
                   "Repeat exactly three times.")
@click.option("--wavelength", type=LENGTH, default=None,
              help="Vacuum wavelength (default from config).")
@_FORMAT_OPTION
@click.pass_obj
def design(gc, assignments, wavelength, fmt):
    """Complete the 7-parameter optical design from three known values."""
    known = {}
    for item in assignments:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ValidationError(f"expected NAME=VALUE, got {item!r}")
        known[name.strip()] = parse_quantity(value)
    params = solve_design(
        known, wavelength if wavelength is not None else gc.wavelength)
    payload = params.as_dict()
    if _fmt(gc, fmt) == "csv":
        _emit_csv(["parameter", "value"],
                  [[k, repr(v)] for k, v in sorted(payload.items())])
    else:
        _emit_json(payload)


@cli.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Input field CSV (x_m,y_m,field_re,field_im).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              required=True, help="Output field CSV at the image plane.")
@click.option("--magnification", type=float, required=True)
@click.option("--na", type=float, required=True,
              help="Object-side numerical aperture of the relay.")
@click.option("--wavelength", type=LENGTH, default=None,
              help="Wavelength of the stored field (default from config).")
@click.option("--sampling-factor", type=float, default=None)
@click.pass_obj
def image(gc, in_path, out_path, magnification, na, wavelength,
          sampling_factor):
    """Relay a sampled field through the hard-pupil 4f imaging model."""
    wl = wavelength if wavelength is not None else gc.wavelength
    field = read_field_csv(in_path, wl)
    sys_spec = ImagingSystemSpec(magnification, na)
    out = image_field(field, sys_spec, sampling_factor)
    write_field_csv(out, out_path)
    _emit_json({
        "power_in_w": field.power(),
        "power_out_w": out.power(),
        "dx_m": out.dx, "dy_m": out.dy, "nx": out.nx, "ny": out.ny,
    })


def _parse_point(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValidationError(f"expected X,Y (two comma-separated lengths), "
                              f"got {text!r}")
    return (parse_length(parts[0]), parse_length(parts[1]))


@cli.command()
@click.option("--in", "in_paths", type=click.Path(exists=True, dir_okay=False),
              multiple=True, required=True,
              help="Intensity/field CSV; one composite plane or one per target.")
@click.option("--target", "targets", multiple=True, required=True,
              metavar="X,Y", help="Evaluation point, e.g. --target 10um,0.")
@click.option("--radius", type=LENGTH, default=None,
              help="Disc integration radius (default wavelength/(2*NA)).")
@click.option("--na", type=float, default=None,
              help="Numerical aperture used for the default radius.")
@click.option("--wavelength", type=LENGTH, default=None)
@_FORMAT_OPTION
@click.pass_obj
def crosstalk(gc, in_paths, targets, radius, na, wavelength, fmt):
    """Disc-integrated crosstalk matrix in dB over the given targets."""
    wl = wavelength if wavelength is not None else gc.wavelength
    if radius is None:
        if na is None:
            raise ValidationError("give either --radius or --na")
        radius = default_integration_radius(wl, na)
    fields = [read_field_csv(p, wl) for p in in_paths]
    points = [_parse_point(t) for t in targets]
    matrix = crosstalk_matrix(fields[0] if len(fields) == 1 else fields,
                              points, radius)
    if _fmt(gc, fmt) == "csv":
        _emit_csv([f"ch{j}" for j in range(matrix.shape[1])],
                  [[repr(float(v)) for v in row] for row in matrix])
    else:
        _emit_json({"crosstalk_db": [[float(v) for v in row] for row in matrix],
                    "integration_radius_m": radius})


@cli.group()
def slitscan():
    """Slit-scan metrology: simulate, deconvolve, stitch, extract."""


@slitscan.command()
@click.option("--profile", "profile_path",
              type=click.Path(exists=True, dir_okay=False), required=True,
              help="Finely sampled truth profile CSV (position_um,intensity).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              required=True, help="Trace CSV (a JSON sidecar is written too).")
@click.option("--slit-width", type=LENGTH, default=None)
@click.option("--step", type=LENGTH, default=None, help="Scan step.")
@click.option("--floor-db", type=float, default=None,
              help="Additive noise floor relative to the trace peak.")
@click.option("--sigma", type=float, default=0.0,
              help="Proportional 1-sigma noise fraction.")
@click.option("--seed", type=int, default=None)
@click.pass_obj
def simulate(gc, profile_path, out_path, slit_width, step, floor_db, sigma,
             seed):
    """Convolve a profile with the slit and sample it on the scan lattice."""
    profile = read_profile_csv(profile_path)
    noise = None
    if floor_db is not None or sigma > 0:
        noise = NoiseModel(floor_db, sigma,
                           seed=seed if seed is not None else gc.seed)
    trace = simulate_scan(profile, slit_width, step, noise)
    write_trace(trace, out_path)
    _emit_json({"n_samples": trace.positions.size,
                "step_m": trace.step,
                "noise_floor": trace.noise_floor})


@slitscan.command("deconvolve")
@click.option("--trace", "trace_path",
              type=click.Path(exists=True, dir_okay=False), required=True,
              help="Trace CSV written by simulate/stitch (sidecar required).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              required=True, help="Deconvolved profile CSV.")
@click.option("--iterations", type=int, default=None)
@click.option("--tol", type=float, default=None,
              help="Relative residual stopping tolerance.")
@click.pass_obj
def deconvolve_cmd(gc, trace_path, out_path, iterations, tol):
    """Invert the slit convolution; reports convergence honestly."""
    trace = read_trace(trace_path)
    result = deconvolve(trace, iterations, tol)
    write_profile_csv(result.profile, out_path)
    _emit_json({"converged": result.converged,
                "relative_residual": result.relative_residual,
                "iterations": result.iterations})


@slitscan.command()
@click.argument("traces", type=click.Path(exists=True, dir_okay=False),
                nargs=-1, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              required=True,
              help="Stitched trace CSV (+ sidecar), ready for deconvolve.")
@click.option("--min-overlap", type=LENGTH, default=None)
@click.option("--peak-fraction", type=float, default=None)
@click.pass_obj
def stitch(gc, traces, out_path, min_overlap, peak_fraction):
    """Merge overlapping scan segments onto the first segment's scale."""
    loaded = [read_trace(p) for p in traces]
    if len(loaded) < 2:
        raise ValidationError("stitching needs at least two traces")
    merged = stitch_scans(loaded, min_overlap=min_overlap,
                          peak_fraction=peak_fraction)
    out_trace = ScanTrace(positions=merged.positions, values=merged.values,
                          slit_width=loaded[0].slit_width,
                          slit_height=loaded[0].slit_height,
                          noise_floor=loaded[0].noise_floor)
    write_trace(out_trace, out_path)
    _emit_json({"n_samples": merged.positions.size,
                "span_m": [float(merged.positions[0]),
                           float(merged.positions[-1])]})


@slitscan.command()
@click.option("--profile", "profile_path",
              type=click.Path(exists=True, dir_okay=False), required=True,
              help="Deconvolved profile CSV.")
@click.option("--peak-a", type=LENGTH, required=True,
              help="Position hint of the reference peak.")
@click.option("--peak-b", type=LENGTH, required=True)
@click.option("--points", type=int, default=None,
              help="Window sample count (default from config).")
@click.option("--noise-floor", type=float, default=None,
              help="Absolute intensity floor for floor-limited flagging.")
@click.option("--search-steps", type=int, default=None)
@_FORMAT_OPTION
@click.pass_obj
def extract(gc, profile_path, peak_a, peak_b, points, noise_floor,
            search_steps, fmt):
    """Windowed crosstalk between two resolved peaks, in dB."""
    profile = read_profile_csv(profile_path)
    report = extract_crosstalk(profile, peak_a, peak_b, points,
                               noise_floor=noise_floor,
                               search_steps=search_steps)
    payload = report.as_dict()
    if _fmt(gc, fmt) == "csv":
        keys = sorted(payload)
        _emit_csv(keys, [[payload[k] if not isinstance(payload[k], list)
                          else " ".join(map(repr, payload[k]))
                          for k in keys]])
    else:
        _emit_json(payload)


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def run(gc, scenario):
    """Run a delivery or metrology scenario from a JSON file.

    Artifacts land in a content-addressed subdirectory of the scenario's
    output_dir.  A failing stage exits with 10 plus the stage's index in
    the pipeline stage list; the stage name is in the diagnostic line.
    """
    with open(scenario, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON in {scenario}: {exc}") from exc
    cfg = ScenarioConfig.from_dict(data)
    if "config" not in data and gc is not DEFAULT_CONFIG:
        cfg = dataclasses.replace(cfg, config=gc)
    result = run_scenario(cfg)
    payload = (result.report_dict if isinstance(result, MetrologyResult)
               else result.report)
    _emit_json(payload)


def _diagnostic(kind: str, message) -> None:
    text = " ".join(str(message).split())
    click.echo(f"ionlight: error: {kind}: {text}", err=True)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:        # --help / --version
        return exc.exit_code
    except click.UsageError as exc:
        _diagnostic("usage", exc.format_message())
        return EXIT_USAGE
    except click.ClickException as exc:
        _diagnostic("usage", exc.format_message())
        return exc.exit_code
    except click.exceptions.Abort:
        _diagnostic("aborted", "interrupted")
        return 130
    except StageError as exc:
        _diagnostic(f"stage:{exc.stage}", exc)
        return stage_exit_code(exc.stage)
    except ValidationError as exc:
        _diagnostic("validation", exc)
        return EXIT_VALIDATION
    except ComputationError as exc:
        _diagnostic("computation", exc)
        return EXIT_COMPUTATION
    except OSError as exc:
        _diagnostic("io", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
