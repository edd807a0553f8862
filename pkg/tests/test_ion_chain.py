"""Linear-trap ion chain equilibria: closed forms, oracle cross-checks, scaling."""

import csv
import math

import numpy as np
import pytest

from ionlight.config import DEFAULT_CONFIG
from ionlight.constants import m_ba138
from ionlight.errors import ValidationError
from ionlight.ion_chain import (
    IonChain,
    IonChainSpec,
    equilibrium_positions,
    length_scale,
    physical_positions,
    potential_energy,
    spec_from_config,
    write_chain_csv,
)
from oracles import chain_positions_minimized, chain_potential, ion_length_scale

SPEC = IonChainSpec(8, m_ba138, 34e3)


# --- closed-form small chains ---------------------------------------------

def test_single_ion_sits_at_the_origin():
    assert equilibrium_positions(1) == pytest.approx([0.0], abs=1e-15)


def test_two_ions_sit_at_quarter_cube_root():
    # balance of trap force u and Coulomb force 1/(2u)^2 gives u = (1/4)^(1/3)
    u = equilibrium_positions(2)
    root = 0.25 ** (1.0 / 3.0)
    assert u == pytest.approx([-root, root], abs=1e-10)
    assert root == pytest.approx(0.62996052, abs=1e-8)


def test_three_ion_outer_positions():
    # known closed form: outer ions at (5/4)^(1/3)
    u = equilibrium_positions(3)
    outer = 1.25 ** (1.0 / 3.0)
    assert u[1] == pytest.approx(0.0, abs=1e-12)
    assert u == pytest.approx([-outer, 0.0, outer], abs=1e-10)
    assert outer == pytest.approx(1.07721735, abs=1e-8)


# --- agreement with an independent minimizer ------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_matches_direct_energy_minimization(n):
    u = equilibrium_positions(n)
    ref = chain_positions_minimized(n)
    assert np.max(np.abs(u - ref)) < 1e-6
    assert potential_energy(u) == pytest.approx(chain_potential(ref), rel=1e-10)


def test_equilibrium_is_a_local_minimum():
    u = equilibrium_positions(8)
    e0 = potential_energy(u)
    rng = np.random.default_rng(12345)
    for _ in range(100):
        assert potential_energy(u + 1e-4 * rng.normal(size=8)) > e0


def test_force_residual_below_tolerance():
    for n in (2, 5, 8, 12):
        u = equilibrium_positions(n)
        du = u[:, None] - u[None, :]
        np.fill_diagonal(du, np.inf)
        res = u - np.sum(np.sign(du) / du**2, axis=1)
        assert np.max(np.abs(res)) < 1e-10


# --- structural invariants ------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 7, 8, 15])
def test_chain_shape_invariants(n):
    u = equilibrium_positions(n)
    assert np.all(np.diff(u) > 0)
    assert float(np.sum(u)) == pytest.approx(0.0, abs=1e-12)
    assert u == pytest.approx(-u[::-1], abs=1e-12)


@pytest.mark.parametrize("n", [4, 8, 15])
def test_gaps_grow_from_the_center_outward(n):
    g = np.diff(equilibrium_positions(n))
    half = g[len(g) // 2:]
    assert np.all(np.diff(half) > 0)
    assert np.min(g) == pytest.approx(half[0])


def test_solver_is_deterministic():
    a = equilibrium_positions(10)
    b = equilibrium_positions(10)
    assert np.array_equal(a, b)


def test_ion_count_bounds_enforced():
    with pytest.raises(ValidationError):
        equilibrium_positions(0)
    with pytest.raises(ValidationError):
        equilibrium_positions(DEFAULT_CONFIG.max_ions + 1)


# --- physical scaling -----------------------------------------------------

def test_length_scale_for_heavy_ion_trap():
    l = length_scale(SPEC)
    assert l == pytest.approx(28.0525e-6, rel=1e-4)
    assert l == pytest.approx(ion_length_scale(m_ba138, 34e3), rel=1e-12)


def test_length_scale_frequency_and_mass_scaling():
    base = length_scale(SPEC)
    double_f = length_scale(IonChainSpec(8, m_ba138, 68e3))
    double_m = length_scale(IonChainSpec(8, 2 * m_ba138, 34e3))
    assert double_f == pytest.approx(base * 4.0 ** (-1.0 / 3.0), rel=1e-12)
    assert double_m == pytest.approx(base * 2.0 ** (-1.0 / 3.0), rel=1e-12)


def test_two_ion_physical_separation():
    chain = physical_positions(IonChainSpec(2, m_ba138, 34e3))
    sep = chain.positions[1] - chain.positions[0]
    assert sep == pytest.approx(2 * 0.62996052 * chain.length_scale, rel=1e-7)


def test_eight_ion_minimum_gap():
    chain = physical_positions(SPEC)
    assert chain.n_ions == 8
    assert chain.min_gap() == pytest.approx(17.8426e-6, rel=0.02)
    assert chain.min_gap() == pytest.approx(float(np.min(chain.gaps())))


def test_dimensionless_solution_independent_of_trap():
    a = physical_positions(IonChainSpec(8, m_ba138, 34e3))
    b = physical_positions(IonChainSpec(8, m_ba138, 100e3))
    assert a.dimensionless_positions == b.dimensionless_positions
    ratio = length_scale(IonChainSpec(8, m_ba138, 100e3)) / a.length_scale
    assert np.asarray(b.positions) == pytest.approx(ratio * np.asarray(a.positions),
                                                    rel=1e-12)


def test_spec_from_config_uses_defaults():
    spec = spec_from_config(DEFAULT_CONFIG)
    assert spec.n_ions == 8
    assert spec.mass == pytest.approx(m_ba138)
    assert spec.axial_frequency == pytest.approx(34e3)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_ions=0), dict(mass=0.0), dict(axial_frequency=-1.0), dict(charge=0.0)],
)
def test_invalid_spec_rejected(kwargs):
    base = dict(n_ions=8, mass=m_ba138, axial_frequency=34e3)
    base.update(kwargs)
    with pytest.raises(ValidationError):
        IonChainSpec(**base)


def test_chain_container_rejects_malformed_input():
    with pytest.raises(ValidationError):
        IonChain(1e-6, (0.0, 1.0), (0.0, 1e-6))  # not centered
    with pytest.raises(ValidationError):
        IonChain(1e-6, (1.0, -1.0), (1e-6, -1e-6))  # not increasing


def test_chain_csv_round_trip(tmp_path):
    chain = physical_positions(SPEC)
    path = tmp_path / "chain.csv"
    write_chain_csv(chain, path)
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        assert next(rd) == ["index", "u", "x_m"]
        rows = list(rd)
    assert len(rows) == 8
    for i, row in enumerate(rows):
        assert int(row[0]) == i
        assert float(row[1]) == chain.dimensionless_positions[i]
        assert float(row[2]) == chain.positions[i]


def test_potential_energy_matches_oracle_on_arbitrary_points():
    u = [-1.3, -0.2, 0.5, 1.0]
    assert potential_energy(u) == pytest.approx(chain_potential(u), rel=1e-12)
