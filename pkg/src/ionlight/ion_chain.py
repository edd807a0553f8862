"""Equilibrium geometry of a trapped-ion chain in a harmonic axial well.

N ions in a common harmonic potential arrange themselves where the trap
force balances the mutual Coulomb repulsion.  In units of the length
scale l = (q^2 / (4 pi eps0 m omega_z^2))^(1/3) the shape of the chain
depends only on N, so the dimensionless positions are solved once and
scaled by l to physical coordinates.  The chain is unequally spaced:
gaps grow from the center outward, which is what any addressing array
has to reproduce.

Positions minimize V(u) = sum u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|;
the solver drives the gradient (force balance) to a max-norm residual
below a configurable tolerance via damped Newton iteration from an
equally spaced seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, GlobalConfig
from .constants import ech, eps0
from .errors import ConvergenceError, ValidationError

# relative tolerance for the structural checks on a constructed chain;
# the solver meets these to machine precision, so this only guards
# against hand-built inconsistent instances
_SHAPE_RTOL = 1e-9


@dataclass(frozen=True)
class IonChainSpec:
    """Trap and species parameters that set the chain's length scale."""

    n_ions: int
    mass: float
    axial_frequency: float      # secular frequency in Hz (omega_z / 2 pi)
    charge: float = ech

    def __post_init__(self):
        if not 1 <= self.n_ions <= DEFAULT_CONFIG.max_ions:
            raise ValidationError(
                f"n_ions must be in [1, {DEFAULT_CONFIG.max_ions}], got {self.n_ions}"
            )
        if not self.mass > 0:
            raise ValidationError("ion mass must be positive")
        if not self.axial_frequency > 0:
            raise ValidationError("axial frequency must be positive")
        if not self.charge > 0:
            raise ValidationError("ion charge must be positive")


@dataclass(frozen=True)
class IonChain:
    """Solved chain: length scale plus dimensionless and physical positions."""

    length_scale: float
    dimensionless_positions: tuple
    positions: tuple            # meters, centered on the trap axis origin

    def __post_init__(self):
        n = len(self.positions)
        if n != len(self.dimensionless_positions) or n == 0:
            raise ValidationError("position lists must be non-empty and equal length")
        x = np.asarray(self.positions)
        if n > 1 and not np.all(np.diff(x) > 0):
            raise ValidationError("positions must be strictly increasing")
        if abs(float(np.sum(x))) > 1e-12 * self.length_scale * max(n, 1):
            raise ValidationError("positions must be centered on zero")
        if np.max(np.abs(x + x[::-1])) > _SHAPE_RTOL * self.length_scale:
            raise ValidationError("positions must be mirror symmetric")
        if n >= 3:
            g = np.diff(x)
            mid = (len(g) - 1) // 2
            if np.min(g) < g[mid] * (1.0 - _SHAPE_RTOL):
                raise ValidationError("central gap must be the smallest")

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def gaps(self) -> np.ndarray:
        """Physical nearest-neighbor gaps, in meters."""
        return np.diff(np.asarray(self.positions))

    def min_gap(self) -> float:
        """Smallest nearest-neighbor gap (the central one for N >= 3)."""
        if self.n_ions < 2:
            raise ValidationError("min_gap needs at least two ions")
        return float(np.min(self.gaps()))


def spec_from_config(config: GlobalConfig) -> IonChainSpec:
    """Build the chain spec from the global configuration."""
    return IonChainSpec(config.n_ions, config.ion_mass, config.axial_frequency)


def length_scale(spec: IonChainSpec) -> float:
    """Coulomb-vs-trap length scale l = (q^2 / (4 pi eps0 m omega_z^2))^(1/3)."""
    omega = 2.0 * math.pi * spec.axial_frequency
    return (spec.charge**2 / (4.0 * math.pi * eps0 * spec.mass * omega**2)) ** (1.0 / 3.0)


def potential_energy(u) -> float:
    """Dimensionless chain energy V(u) = sum u_i^2/2 + sum_{i<j} 1/|u_i - u_j|."""
    u = np.asarray(u, dtype=float)
    du = np.abs(u[:, None] - u[None, :])
    iu = np.triu_indices(len(u), k=1)
    return float(0.5 * np.sum(u**2) + np.sum(1.0 / du[iu]))


def _force_residual(u: np.ndarray) -> np.ndarray:
    """Gradient of V: residual of the force-balance system (zero at equilibrium)."""
    du = u[:, None] - u[None, :]
    np.fill_diagonal(du, np.inf)
    return u - np.sum(np.sign(du) / du**2, axis=1)


def _jacobian(u: np.ndarray) -> np.ndarray:
    du = u[:, None] - u[None, :]
    np.fill_diagonal(du, np.inf)
    inv3 = 1.0 / np.abs(du) ** 3
    jac = -2.0 * inv3
    jac[np.diag_indices_from(jac)] = 1.0 + 2.0 * np.sum(inv3, axis=1)
    return jac


def equilibrium_positions(
    n_ions: int,
    residual_tol: float | None = None,
    max_iter: int | None = None,
) -> np.ndarray:
    """Dimensionless equilibrium positions of an N-ion chain, ascending.

    Damped Newton iteration on the force-balance system, seeded from an
    equally spaced chain spanning [-(N-1)/2, (N-1)/2] scaled by 0.6.
    Each iterate is symmetrized, so the mirror symmetry of the solution
    is exact by construction.  Deterministic: repeated calls return
    identical arrays.

    Raises
    ------
    ConvergenceError
        If the residual max-norm does not drop below `residual_tol`
        within `max_iter` iterations.
    """
    if not 1 <= n_ions <= DEFAULT_CONFIG.max_ions:
        raise ValidationError(
            f"n_ions must be in [1, {DEFAULT_CONFIG.max_ions}], got {n_ions}"
        )
    tol = residual_tol if residual_tol is not None else DEFAULT_CONFIG.newton_residual_tol
    cap = max_iter if max_iter is not None else DEFAULT_CONFIG.newton_max_iter

    u = 0.6 * np.linspace(-(n_ions - 1) / 2.0, (n_ions - 1) / 2.0, n_ions)
    res = _force_residual(u)
    for _ in range(cap):
        err = float(np.max(np.abs(res)))
        if err < tol:
            return u
        step = np.linalg.solve(_jacobian(u), -res)
        for damping in range(40):
            trial = u + step * 0.5**damping
            trial = 0.5 * (trial - trial[::-1])
            trial_res = _force_residual(trial)
            if float(np.max(np.abs(trial_res))) < err:
                u, res = trial, trial_res
                break
        else:
            raise ConvergenceError(
                f"line search stalled at residual {err:.3e} for N = {n_ions}"
            )
    raise ConvergenceError(
        f"force residual {float(np.max(np.abs(res))):.3e} after {cap} iterations "
        f"for N = {n_ions} (tolerance {tol:.1e})"
    )


def physical_positions(
    spec: IonChainSpec,
    residual_tol: float | None = None,
    max_iter: int | None = None,
) -> IonChain:
    """Solve the chain and scale to physical coordinates."""
    u = equilibrium_positions(spec.n_ions, residual_tol, max_iter)
    scale = length_scale(spec)
    return IonChain(
        length_scale=scale,
        dimensionless_positions=tuple(float(v) for v in u),
        positions=tuple(float(v) for v in scale * u),
    )


def write_chain_csv(chain: IonChain, path) -> None:
    """Write the chain as CSV with header index,u,x_m."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "u", "x_m"])
        for i, (u, x) in enumerate(zip(chain.dimensionless_positions, chain.positions)):
            w.writerow([i, repr(u), repr(x)])
