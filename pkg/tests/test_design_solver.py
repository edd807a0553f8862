"""Log-space design completion: worked values, subset classification, symmetry."""

import itertools
import math

import numpy as np
import pytest

from ionlight.design_solver import (
    PARAMETER_NAMES,
    DesignParameters,
    canonical_name,
    check_pitch_ratio,
    solve_design,
)
from ionlight.errors import (
    InconsistentKnownsError,
    OutOfRangeError,
    UnderdeterminedError,
    ValidationError,
)
from ionlight.ion_chain import IonChain

LAM = 650e-9

# independent classification route: the four relations as float rows over
# log parameters, ordered like PARAMETER_NAMES; a 3-subset pins the whole
# design exactly when adding its three unit rows reaches full rank
_RELATION_ROWS = np.array(
    [
        [0, -1, 0, 0, 1, 0, -1],   # spacing_qubit / (M * spacing_chip) = 1
        [-1, 0, 0, 1, 0, 0, -1],   # spot_qubit / (M * spot_chip) = 1
        [1, 0, 1, 0, 0, 0, 0],     # na_chip * spot_chip = wavelength / pi
        [0, 0, 0, 1, 0, 1, 0],     # na_qubit * spot_qubit = wavelength / pi
    ],
    dtype=float,
)


def _rank_solvable(subset) -> bool:
    unit = np.zeros((3, 7))
    for r, name in enumerate(subset):
        unit[r, PARAMETER_NAMES.index(name)] = 1.0
    return np.linalg.matrix_rank(np.vstack([_RELATION_ROWS, unit])) == 7


def _base_design() -> DesignParameters:
    return solve_design({"magnification": 0.25, "spacing_chip": 80e-6,
                         "spot_chip": 10e-6}, LAM)


# --- worked example -------------------------------------------------------

def test_worked_example_completion():
    d = solve_design({"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}, LAM)
    assert d.spot_chip == pytest.approx(2e-6 / 0.187, rel=1e-9)
    assert d.spacing_qubit == pytest.approx(0.187 * 73.4e-6, rel=1e-9)
    assert d.na_qubit == pytest.approx(LAM / (math.pi * 2e-6), rel=1e-9)
    assert d.na_chip == pytest.approx(0.187 * LAM / (math.pi * 2e-6), rel=1e-9)
    assert d.na_qubit == pytest.approx(0.10345, abs=1e-5)
    assert d.spacing_chip == pytest.approx(73.4e-6, rel=1e-12)
    assert d.magnification == pytest.approx(0.187, rel=1e-12)


def test_equal_spots_force_unit_magnification():
    d = solve_design({"w_c": 5e-6, "w_q": 5e-6, "s_c": 50e-6}, LAM)
    assert d.magnification == pytest.approx(1.0, rel=1e-9)
    assert d.spacing_qubit == pytest.approx(50e-6, rel=1e-9)
    assert d.na_chip == pytest.approx(d.na_qubit, rel=1e-9)


def test_known_values_round_trip_exactly():
    knowns = {"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}
    d = solve_design(knowns, LAM)
    for name, value in knowns.items():
        assert getattr(d, canonical_name(name)) == pytest.approx(value, rel=1e-9)


# --- full subset classification -------------------------------------------

def test_all_35_subsets_classified_by_rank():
    base = _base_design().as_dict()
    solvable_count = 0
    for subset in itertools.combinations(PARAMETER_NAMES, 3):
        known = {name: base[name] for name in subset}
        if _rank_solvable(subset):
            solvable_count += 1
            d = solve_design(known, LAM)
            for name in PARAMETER_NAMES:
                assert getattr(d, name) == pytest.approx(base[name], rel=1e-9), (
                    f"{subset} -> {name}")
        else:
            with pytest.raises(UnderdeterminedError):
                solve_design(known, LAM)
    assert solvable_count == 20


def test_dependent_but_contradictory_values_rejected():
    # na_chip is already implied by spot_chip; a wrong value is a
    # contradiction rather than an underdetermination
    with pytest.raises(InconsistentKnownsError):
        solve_design({"w_c": 10e-6, "na_c": 0.5, "M": 0.25}, LAM)


def test_dependent_consistent_values_underdetermined():
    na = LAM / (math.pi * 10e-6)
    with pytest.raises(UnderdeterminedError):
        solve_design({"w_c": 10e-6, "na_c": na, "M": 0.25}, LAM)


# --- symmetries -----------------------------------------------------------

def test_chip_qubit_roles_swap_under_inverse_magnification():
    d1 = solve_design({"w_c": 8e-6, "s_c": 60e-6, "M": 0.2}, LAM)
    d2 = solve_design({"w_q": 8e-6, "s_q": 60e-6, "M": 5.0}, LAM)
    assert d2.spot_chip == pytest.approx(d1.spot_qubit, rel=1e-9)
    assert d2.spacing_chip == pytest.approx(d1.spacing_qubit, rel=1e-9)
    assert d2.na_chip == pytest.approx(d1.na_qubit, rel=1e-9)
    assert d2.spot_qubit == pytest.approx(d1.spot_chip, rel=1e-9)
    assert d2.na_qubit == pytest.approx(d1.na_chip, rel=1e-9)


def test_wavelength_scales_only_the_apertures():
    knowns = {"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}
    d1 = solve_design(knowns, LAM)
    d2 = solve_design(knowns, 2 * LAM)
    assert d2.spot_chip == pytest.approx(d1.spot_chip, rel=1e-9)
    assert d2.spacing_qubit == pytest.approx(d1.spacing_qubit, rel=1e-9)
    assert d2.na_chip == pytest.approx(2 * d1.na_chip, rel=1e-9)
    assert d2.na_qubit == pytest.approx(2 * d1.na_qubit, rel=1e-9)


# --- argument validation --------------------------------------------------

def test_aliases_and_canonical_names():
    assert canonical_name("w_c") == "spot_chip"
    assert canonical_name(" NA_Q ") == "na_qubit"
    assert canonical_name("magnification") == "magnification"
    with pytest.raises(ValidationError):
        canonical_name("waist")


def test_exactly_three_knowns_required():
    with pytest.raises(ValidationError):
        solve_design({"M": 0.2, "s_c": 73.4e-6}, LAM)
    with pytest.raises(ValidationError):
        solve_design({"M": 0.2, "s_c": 73.4e-6, "w_q": 2e-6, "w_c": 1e-5}, LAM)


def test_duplicate_via_alias_rejected():
    with pytest.raises(ValidationError):
        solve_design({"w_c": 1e-5, "spot_chip": 1e-5, "M": 0.2}, LAM)


def test_positive_values_required():
    with pytest.raises(ValidationError):
        solve_design({"M": -0.2, "s_c": 73.4e-6, "w_q": 2e-6}, LAM)
    with pytest.raises(ValidationError):
        solve_design({"M": 0.2, "s_c": 73.4e-6, "w_q": 2e-6}, 0.0)


def test_solved_aperture_above_one_rejected():
    # a 0.1 um spot would need NA ~ 2
    with pytest.raises(OutOfRangeError):
        solve_design({"w_q": 0.1e-6, "M": 1.0, "s_c": 10e-6}, LAM)


def test_direct_construction_enforces_relations():
    d = _base_design()
    with pytest.raises(ValidationError):
        DesignParameters(**{**d.as_dict(), "spacing_qubit": d.spacing_qubit * 1.01})
    with pytest.raises(OutOfRangeError):
        DesignParameters(**{**d.as_dict(), "spot_chip": -1.0})


def test_as_dict_lists_all_parameters():
    d = _base_design()
    assert set(d.as_dict()) == set(PARAMETER_NAMES) | {"wavelength"}


# --- pitch-band check -----------------------------------------------------

def _two_ion_chain(gap: float) -> IonChain:
    return IonChain(length_scale=1e-5,
                    dimensionless_positions=(-0.5, 0.5),
                    positions=(-gap / 2, gap / 2))


def test_pitch_ratio_at_band_edge():
    d = solve_design({"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}, LAM)
    check = check_pitch_ratio(d, _two_ion_chain(73.4e-6 / 5.0))
    assert check.ratio == pytest.approx(5.0, rel=1e-12)
    assert check.in_band


def test_pitch_ratio_outside_band():
    d = solve_design({"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}, LAM)
    assert not check_pitch_ratio(d, _two_ion_chain(73.4e-6)).in_band        # ratio 1
    assert not check_pitch_ratio(d, _two_ion_chain(73.4e-6 / 12.0)).in_band  # ratio 12


def test_pitch_band_override():
    d = solve_design({"M": 0.187, "s_c": 73.4e-6, "w_q": 2e-6}, LAM)
    check = check_pitch_ratio(d, _two_ion_chain(73.4e-6), band=(0.5, 2.0))
    assert check.in_band
