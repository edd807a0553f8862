"""Slit-scan metrology: convolution, stitching, deconvolution, extraction."""

import math

import numpy as np
import pytest

from ionlight.errors import (
    InsufficientOverlapError,
    NoPeakInOverlapError,
    PeakNotFoundError,
    RegionOverlapError,
    SamplingError,
    ValidationError,
    WindowTooSmallError,
)
from ionlight.fields import ScalarField2D
from ionlight.slit_scan import (
    CrosstalkReport,
    NoiseModel,
    Profile1D,
    ScanTrace,
    deconvolve,
    extract_crosstalk,
    fiber_scan_background_ratio,
    read_profile_csv,
    read_trace,
    simulate_scan,
    stitch_scans,
    write_profile_csv,
    write_report_json,
    write_trace,
)
from oracles import slit_average

SLIT = 5e-6
STEP = 1e-6
PEAK_D = 1.835e-3          # peak half-spacing on the magnified scan plane
PEDESTAL_DB = -50.8


def _two_peak_profile(pedestal=10 ** (PEDESTAL_DB / 10.0)):
    x = np.arange(-5e-3, 5e-3 + 0.25e-6, 0.5e-6)
    w = 100e-6
    vals = (np.exp(-2 * (x - PEAK_D) ** 2 / w**2)
            + np.exp(-2 * (x + PEAK_D) ** 2 / w**2)
            + pedestal * (np.abs(x) <= 1.2e-3))
    return Profile1D(x, vals)


def _narrow_spike_trace():
    x = np.arange(-20e-6, 20e-6 + 0.05e-6, 0.1e-6)
    return simulate_scan(Profile1D(x, np.exp(-2 * x**2 / (0.5e-6) ** 2)),
                         slit_width=SLIT, step=STEP)


@pytest.fixture(scope="module")
def reference_trace():
    return simulate_scan(_two_peak_profile(), slit_width=SLIT, step=STEP)


# --- containers -----------------------------------------------------------

def test_profile_validation():
    with pytest.raises(ValidationError):
        Profile1D(np.array([0.0, 1.0, 3.0]), np.ones(3))       # non-uniform
    with pytest.raises(ValidationError):
        Profile1D(np.array([0.0, 1.0]), np.array([1.0, -0.5]))  # negative
    with pytest.raises(ValidationError):
        Profile1D(np.array([0.0, 1.0]), np.ones(3))             # shape mismatch
    with pytest.raises(ValidationError):
        ScanTrace(np.array([0.0, 1e-6]), np.ones(2), slit_width=0.0)


def test_profile_integral_is_riemann_sum():
    p = Profile1D(np.arange(5) * 1e-6, np.array([1.0, 2.0, 3.0, 2.0, 1.0]))
    assert p.integral() == pytest.approx(9.0 * 1e-6, rel=1e-12)
    assert p.step == pytest.approx(1e-6)


# --- slit convolution -----------------------------------------------------

def test_narrow_feature_becomes_a_top_hat():
    tr = _narrow_spike_trace()
    peak = float(np.max(tr.values))
    above10 = tr.positions[tr.values >= 0.1 * peak]
    above90 = tr.positions[tr.values >= 0.9 * peak]
    # width at 10% equals the slit width; the 10-90% edge spans ~one step
    assert above10[-1] - above10[0] == pytest.approx(SLIT, abs=1.5 * STEP)
    edge = ((above10[-1] - above10[0]) - (above90[-1] - above90[0])) / 2.0
    assert edge <= 1.5 * STEP


def test_top_hat_plateau_is_integral_over_slit():
    x = np.arange(-20e-6, 20e-6 + 0.05e-6, 0.1e-6)
    profile = Profile1D(x, np.exp(-2 * x**2 / (0.5e-6) ** 2))
    tr = simulate_scan(profile, slit_width=SLIT, step=STEP)
    assert float(np.max(tr.values)) == pytest.approx(profile.integral() / SLIT,
                                                     rel=1e-3)
    assert tr.integral() == pytest.approx(profile.integral(), rel=1e-9)


def test_uniform_profile_stays_uniform():
    x = np.arange(0, 200e-6 + 0.25e-6, 0.5e-6)
    tr = simulate_scan(Profile1D(x, np.full_like(x, 3.0)), slit_width=SLIT, step=STEP)
    inner = (tr.positions > x[0] + 10e-6) & (tr.positions < x[-1] - 10e-6)
    assert np.max(np.abs(tr.values[inner] - 3.0)) < 1e-12


def test_pedestal_survives_the_slit(reference_trace):
    profile = _two_peak_profile()
    i_mid = int(np.argmin(np.abs(reference_trace.positions)))
    expected = slit_average(profile.positions, profile.values,
                            float(reference_trace.positions[i_mid]), SLIT)
    ratio_db = 10 * math.log10(reference_trace.values[i_mid] / expected)
    assert abs(ratio_db) < 0.5


def test_coarse_profile_rejected():
    x = np.arange(0, 100e-6, 2e-6)   # only 2.5 samples per slit
    with pytest.raises(SamplingError):
        simulate_scan(Profile1D(x, np.ones_like(x)), slit_width=SLIT, step=STEP)


def test_noise_floor_recorded_and_deterministic():
    x = np.arange(-20e-6, 20e-6 + 0.05e-6, 0.1e-6)
    profile = Profile1D(x, np.exp(-2 * x**2 / (2e-6) ** 2))
    noise = NoiseModel(floor_db=-60.0, proportional_sigma=0.01, seed=7)
    tr1 = simulate_scan(profile, slit_width=SLIT, step=STEP, noise=noise)
    tr2 = simulate_scan(profile, slit_width=SLIT, step=STEP, noise=noise)
    assert np.array_equal(tr1.values, tr2.values)
    clean = simulate_scan(profile, slit_width=SLIT, step=STEP)
    assert tr1.noise_floor == pytest.approx(1e-6 * float(np.max(clean.values)), rel=1e-9)
    other = simulate_scan(profile, slit_width=SLIT, step=STEP,
                          noise=NoiseModel(floor_db=-60.0, proportional_sigma=0.01, seed=8))
    assert not np.array_equal(tr1.values, other.values)


# --- deconvolution --------------------------------------------------------

def test_deconvolution_round_trip(reference_trace):
    dec = deconvolve(reference_trace)
    assert dec.converged
    assert dec.relative_residual < 1e-6
    # peak heights recovered within 2%
    for d in (-PEAK_D, PEAK_D):
        i = int(np.argmin(np.abs(dec.profile.positions - d)))
        j = int(np.argmin(np.abs(reference_trace.positions - d)))
        assert dec.profile.values[i] == pytest.approx(1.0, rel=0.02)
        assert dec.profile.values[i] >= reference_trace.values[j]


def test_top_hat_deconvolves_to_a_spike():
    dec = deconvolve(_narrow_spike_trace())
    assert dec.converged
    v = dec.profile.values
    assert int(np.sum(v >= 0.5 * np.max(v))) <= 2


def test_constant_trace_is_a_fixed_point():
    x = np.arange(0, 100e-6, 1e-6)
    tr = ScanTrace(x, np.full_like(x, 2.0), slit_width=SLIT)
    dec = deconvolve(tr)
    assert dec.converged
    assert dec.iterations == 0
    assert np.allclose(dec.profile.values, 2.0, rtol=1e-12)


def test_zero_trace_deconvolves_to_zero():
    x = np.arange(0, 100e-6, 1e-6)
    dec = deconvolve(ScanTrace(x, np.zeros_like(x), slit_width=SLIT))
    assert dec.converged and dec.iterations == 0
    assert np.all(dec.profile.values == 0.0)


def test_iteration_cap_reports_non_convergence():
    dec = deconvolve(_narrow_spike_trace(), iterations=3, residual_tol=1e-14)
    assert not dec.converged
    assert dec.iterations == 3
    assert dec.relative_residual > 1e-14
    assert np.all(dec.profile.values >= 0.0)


# --- stitching ------------------------------------------------------------

def _segments(trace, gains=(1.0, 0.79, 0.79**2)):
    def cut(lo, hi, gain):
        m = (trace.positions >= lo) & (trace.positions <= hi)
        return ScanTrace(trace.positions[m], gain * trace.values[m],
                         slit_width=trace.slit_width)
    return [cut(-5.1e-3, -0.95e-3, gains[0]),
            cut(-3.0e-3, 2.25e-3, gains[1]),
            cut(-0.05e-3, 5.1e-3, gains[2])]


def test_stitch_recovers_attenuated_segments(reference_trace):
    stitched = stitch_scans(_segments(reference_trace))
    # gains are exact for scalar-scaled duplicates: the stitched curve
    # equals the unsplit trace on the first segment's scale
    idx = np.round((stitched.positions - reference_trace.positions[0])
                   / STEP).astype(int)
    valid = (idx >= 0) & (idx < len(reference_trace.positions))
    dev = np.abs(stitched.values[valid] - reference_trace.values[idx[valid]])
    assert float(np.max(dev)) < 1e-12 * float(np.max(reference_trace.values))


def test_stitch_duplicate_is_identity(reference_trace):
    stitched = stitch_scans([reference_trace, reference_trace])
    assert np.allclose(stitched.values, reference_trace.values, rtol=1e-12)
    assert np.allclose(stitched.positions, reference_trace.positions)


def test_disjoint_segments_rejected(reference_trace):
    segs = _segments(reference_trace)
    with pytest.raises(InsufficientOverlapError):
        stitch_scans([segs[0], ScanTrace(segs[2].positions + 10e-3, segs[2].values,
                                         slit_width=SLIT)])


def test_flat_overlap_rejected():
    x = np.arange(0, 10e-3, STEP)
    flat = np.ones_like(x)
    a = ScanTrace(x[x <= 6e-3], flat[x <= 6e-3], slit_width=SLIT)
    b = ScanTrace(x[x >= 3e-3], flat[x >= 3e-3], slit_width=SLIT)
    with pytest.raises(NoPeakInOverlapError):
        stitch_scans([a, b])


def test_mismatched_grids_rejected(reference_trace):
    shifted = ScanTrace(reference_trace.positions + 0.4e-6, reference_trace.values,
                        slit_width=SLIT)
    with pytest.raises(ValidationError):
        stitch_scans([reference_trace, shifted])


# --- extraction -----------------------------------------------------------

def test_full_chain_recovers_the_pedestal(reference_trace):
    stitched = stitch_scans(_segments(reference_trace))
    dec = deconvolve(ScanTrace(stitched.positions, stitched.values, slit_width=SLIT))
    assert dec.converged
    rep = extract_crosstalk(dec.profile, -PEAK_D, PEAK_D, n_points=1000)
    assert rep.value_db == pytest.approx(PEDESTAL_DB, abs=0.01)
    assert rep.n_window_points == 1000
    assert not rep.floor_limited
    assert rep.uncertainty_db >= 0.0


def test_known_ratio_is_exact():
    rep = extract_crosstalk(_two_peak_profile(pedestal=0.1), -PEAK_D, PEAK_D,
                            n_points=1000)
    assert rep.value_db == pytest.approx(-10.0, abs=1e-3)


def test_uncertainty_matches_window_statistics():
    profile = _two_peak_profile(pedestal=0.1)
    rng = np.random.default_rng(42)
    noisy = Profile1D(profile.positions,
                      profile.values * (1.0 + 0.01 * rng.standard_normal(
                          profile.values.shape)))
    rep = extract_crosstalk(noisy, -PEAK_D, PEAK_D, n_points=1000)
    sel = (noisy.positions >= rep.window[0]) & (noisy.positions <= rep.window[1])
    window = noisy.values[sel]
    assert window.size == 1000
    mean = float(np.mean(window))
    se = float(np.std(window, ddof=1) / math.sqrt(window.size))
    assert rep.uncertainty_db == pytest.approx(10.0 / math.log(10.0) * se / mean,
                                               rel=1e-9)


def test_floor_limited_report():
    rep = extract_crosstalk(_two_peak_profile(), -PEAK_D, PEAK_D,
                            n_points=1000, noise_floor=1e-4)
    assert rep.floor_limited
    assert rep.value_db == pytest.approx(-40.0, abs=0.1)
    assert math.isinf(rep.uncertainty_db)


def test_zero_pedestal_reports_below_floor():
    # triangular peaks over exact zeros: the window mean is exactly zero
    x = np.arange(-5e-3, 5e-3 + 0.5e-6, 1e-6)
    vals = np.zeros_like(x)
    for d in (-PEAK_D, PEAK_D):
        i = int(np.argmin(np.abs(x - d)))
        vals[i - 1:i + 2] = (0.5, 1.0, 0.5)
    rep = extract_crosstalk(Profile1D(x, vals), -PEAK_D, PEAK_D, n_points=801)
    assert rep.value_db == -math.inf
    assert rep.floor_limited


def test_window_must_fit_between_peaks():
    # 8000 points at the 0.5 um profile step span 4 mm, more than the
    # 3.67 mm peak separation
    with pytest.raises(WindowTooSmallError):
        extract_crosstalk(_two_peak_profile(), -PEAK_D, PEAK_D, n_points=8000)


def test_peak_hint_must_find_a_maximum():
    with pytest.raises(PeakNotFoundError):
        extract_crosstalk(_two_peak_profile(), 0.0, PEAK_D, n_points=100)


def test_coinciding_peaks_rejected():
    with pytest.raises(ValidationError):
        extract_crosstalk(_two_peak_profile(), PEAK_D, PEAK_D, n_points=100)


def test_report_validation():
    with pytest.raises(ValidationError):
        CrosstalkReport(-50.0, -1.0, 0.0, (0.0, 1.0), 10)
    with pytest.raises(ValidationError):
        CrosstalkReport(-50.0, 0.1, 0.0, (1.0, 0.0), 10)


# --- fiber-coupled background scan ----------------------------------------

def _fiber_plane(background=10 ** (-6.06), cutoff=None):
    x = np.arange(-40e-6, 40e-6 + 0.05e-6, 0.1e-6)
    xx, yy = np.meshgrid(x, x)
    inten = np.exp(-2 * (xx**2 + yy**2) / (2e-6) ** 2)
    if cutoff is not None:
        inten = np.where(np.hypot(xx, yy) < cutoff, inten, 0.0)
    inten = inten + background
    return ScalarField2D(np.sqrt(inten).astype(complex), 0.1e-6, 0.1e-6,
                         (x[0], x[0]), 650e-9)


def test_fiber_background_ratio():
    r = fiber_scan_background_ratio(_fiber_plane(), (0.0, 0.0),
                                    (20e-6, 39e-6, -10e-6, 10e-6))
    assert r == pytest.approx(-60.6, abs=0.05)


def test_fiber_region_too_close_rejected():
    with pytest.raises(RegionOverlapError):
        fiber_scan_background_ratio(_fiber_plane(), (0.0, 0.0),
                                    (5e-6, 39e-6, -10e-6, 10e-6))


def test_fiber_zero_background_is_below_floor():
    plane = _fiber_plane(background=0.0, cutoff=10e-6)
    r = fiber_scan_background_ratio(plane, (0.0, 0.0), (20e-6, 39e-6, -10e-6, 10e-6))
    assert r == -math.inf


def test_fiber_region_validation():
    with pytest.raises(ValidationError):
        fiber_scan_background_ratio(_fiber_plane(), (0.0, 0.0),
                                    (39e-6, 20e-6, -10e-6, 10e-6))  # inverted


# --- file interchange -----------------------------------------------------

def test_trace_round_trip_with_sidecar(tmp_path, reference_trace):
    path = tmp_path / "trace.csv"
    write_trace(reference_trace, path)
    assert (tmp_path / "trace.json").exists()
    back = read_trace(path)
    assert np.allclose(back.positions, reference_trace.positions, atol=1e-18)
    assert np.array_equal(back.values, reference_trace.values)
    assert back.slit_width == pytest.approx(reference_trace.slit_width)
    assert back.noise_floor is None


def test_trace_noise_floor_survives_round_trip(tmp_path):
    x = np.arange(0, 100e-6, 1e-6)
    tr = ScanTrace(x, np.ones_like(x), slit_width=SLIT, noise_floor=1e-7)
    path = tmp_path / "t.csv"
    write_trace(tr, path)
    assert read_trace(path).noise_floor == pytest.approx(1e-7)


def test_missing_sidecar_rejected(tmp_path, reference_trace):
    path = tmp_path / "trace.csv"
    write_trace(reference_trace, path)
    (tmp_path / "trace.json").unlink()
    with pytest.raises(ValidationError):
        read_trace(path)


def test_profile_csv_round_trip(tmp_path):
    p = _two_peak_profile()
    path = tmp_path / "profile.csv"
    write_profile_csv(p, path)
    back = read_profile_csv(path)
    assert np.allclose(back.positions, p.positions, atol=1e-18)
    assert np.array_equal(back.values, p.values)


def test_report_json_fields(tmp_path):
    import json
    rep = extract_crosstalk(_two_peak_profile(pedestal=0.1), -PEAK_D, PEAK_D,
                            n_points=1000)
    path = tmp_path / "report.json"
    write_report_json(rep, path)
    data = json.loads(path.read_text())
    assert set(data) == {"value_db", "uncertainty_db", "peak_position_m",
                         "window_m", "n_window_points", "floor_limited"}
    assert data["value_db"] == pytest.approx(rep.value_db)
