"""Independent reference implementations used to cross-check the package.

Everything here deliberately takes a different computational route from
the library code: transcendental dispersion roots instead of
finite-difference eigensolves, generic quasi-Newton minimization instead
of the damped force-balance Newton, quadrature instead of discrete
kernels, closed forms where they exist.  Tests compare the two routes;
nothing in this module imports solver internals.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq, minimize

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19     # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS = 1.66053906660e-27         # kg


# ---------------------------------------------------------------------------
# symmetric-slab waveguide dispersion (1D, transcendental)


def slab_te_neff(n_core: float, n_clad: float, thickness: float,
                 wavelength: float, mode_index: int = 0) -> float:
    """TE effective index of a symmetric slab from the dispersion relation.

    Solves k_x * t = m*pi + 2*atan(gamma / k_x) by bisection, with
    k_x = k0*sqrt(n_core^2 - n_eff^2) and gamma = k0*sqrt(n_eff^2 - n_clad^2).
    """
    k0 = 2.0 * math.pi / wavelength

    def residual(n_eff: float) -> float:
        kx = k0 * math.sqrt(max(n_core**2 - n_eff**2, 0.0))
        gamma = k0 * math.sqrt(max(n_eff**2 - n_clad**2, 0.0))
        if kx == 0.0:
            return -mode_index * math.pi - 2.0 * math.atan2(gamma, kx)
        return kx * thickness - mode_index * math.pi - 2.0 * math.atan(gamma / kx)

    lo, hi = n_clad + 1e-12, n_core - 1e-12
    if residual(lo) < 0.0:
        raise ValueError(f"slab mode {mode_index} is not guided at this thickness")
    return brentq(residual, lo, hi, xtol=1e-14)


def slab_tm_neff(n_core: float, n_clad: float, thickness: float,
                 wavelength: float, mode_index: int = 0) -> float:
    """TM effective index of a symmetric slab from the dispersion relation.

    Same as the TE branch except the interface matching weights gamma by
    the permittivity ratio: k_x * t = m*pi + 2*atan(w * gamma / k_x) with
    w = (n_core / n_clad)^2 (continuity of u and u'/eps).
    """
    k0 = 2.0 * math.pi / wavelength
    weight = (n_core / n_clad) ** 2

    def residual(n_eff: float) -> float:
        kx = k0 * math.sqrt(max(n_core**2 - n_eff**2, 0.0))
        gamma = k0 * math.sqrt(max(n_eff**2 - n_clad**2, 0.0))
        if kx == 0.0:
            return -mode_index * math.pi - 2.0 * math.atan2(weight * gamma, kx)
        return (kx * thickness - mode_index * math.pi
                - 2.0 * math.atan(weight * gamma / kx))

    lo, hi = n_clad + 1e-12, n_core - 1e-12
    if residual(lo) < 0.0:
        raise ValueError(f"slab mode {mode_index} is not guided at this thickness")
    return brentq(residual, lo, hi, xtol=1e-14)


def slab_mode_count(n_core: float, n_clad: float, thickness: float,
                    wavelength: float) -> int:
    """Number of guided slab modes per polarization (V-parameter count)."""
    v = (2.0 * math.pi / wavelength) * thickness \
        * math.sqrt(n_core**2 - n_clad**2)
    return int(v / math.pi) + 1


def slab_second_mode_cutoff(n_core: float, n_clad: float,
                            wavelength: float) -> float:
    """Slab thickness at which the second guided mode appears."""
    return wavelength / (2.0 * math.sqrt(n_core**2 - n_clad**2))


def two_slab_supermode_splitting(n_core: float, n_clad: float, width: float,
                                 gap: float, wavelength: float,
                                 tm: bool = False) -> float:
    """n_even - n_odd for two identical parallel slabs, from the 5-layer
    characteristic equation reduced by mirror symmetry at mid-gap.

    With ``tm=True`` the interface matching enforces continuity of u'/eps
    (gamma weighted by the permittivity ratio); the decay rate inside the
    gap is unchanged.  The fundamental supermode pair brackets the
    isolated-slab index, so both roots are located by expanding a bracket
    outward from that index rather than scanning the whole guided window
    (which would pick up higher-order supermode pairs for multimode slabs).
    """
    k0 = 2.0 * math.pi / wavelength
    weight = (n_core / n_clad) ** 2 if tm else 1.0

    def residual(n_eff: float, even: bool) -> float:
        kx = k0 * math.sqrt(max(n_core**2 - n_eff**2, 1e-30))
        gamma = k0 * math.sqrt(max(n_eff**2 - n_clad**2, 1e-30))
        half = max(0.5 * gap * gamma, 1e-12)
        # gap field is cosh (even) / sinh (odd); normalize by its value at
        # the inner core edge so large gap*gamma cannot overflow
        slope = weight * gamma * (math.tanh(half) if even else 1.0 / math.tanh(half))
        q = slope / kx
        # u, u' propagated across the core must match the outer decay
        num = -kx * math.sin(kx * width) + q * kx * math.cos(kx * width)
        den = math.cos(kx * width) + q * math.sin(kx * width)
        return num + weight * gamma * den

    def root_near(n0: float, even: bool) -> float:
        f0 = residual(n0, even)
        limit = 0.9 * ((n_core - n0) if even else (n0 - n_clad))
        step = 1e-12
        while step < limit:
            n1 = n0 + step if even else n0 - step
            f1 = residual(n1, even)
            if f0 * f1 <= 0.0:
                lo, hi = sorted((n0, n1))
                return brentq(lambda n: residual(n, even), lo, hi, xtol=1e-15)
            step *= 2.0
        raise ValueError("no supermode root bracketed near the slab index")

    if tm:
        n0 = slab_tm_neff(n_core, n_clad, width, wavelength)
    else:
        n0 = slab_te_neff(n_core, n_clad, width, wavelength)
    return root_near(n0, True) - root_near(n0, False)


# ---------------------------------------------------------------------------
# ion chain via generic minimization


def chain_potential(u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    energy = 0.5 * float(np.sum(u**2))
    for i in range(u.size):
        for j in range(i + 1, u.size):
            energy += 1.0 / abs(u[i] - u[j])
    return energy


def _chain_gradient(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    grad = u.copy()
    for i in range(u.size):
        for j in range(u.size):
            if i == j:
                continue
            d = u[i] - u[j]
            grad[i] -= math.copysign(1.0, d) / d**2
    return grad

def chain_positions_minimized(n: int) -> np.ndarray:
    """Dimensionless equilibrium positions from BFGS on the potential.

    The true minimizer is mirror symmetric; averaging the sorted result
    with its negated reverse removes the minimizer's asymmetric error
    component without touching the symmetric part.
    """
    if n == 1:
        return np.zeros(1)
    seed = 0.9 * np.linspace(-(n - 1) / 2.0, (n - 1) / 2.0, n)
    res = minimize(chain_potential, seed, jac=_chain_gradient, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 10_000})
    out = np.sort(res.x)
    return 0.5 * (out - out[::-1])


def ion_length_scale(mass_kg: float, axial_freq_hz: float,
                     charge: float = ELEMENTARY_CHARGE) -> float:
    omega = 2.0 * math.pi * axial_freq_hz
    return (charge**2 / (4.0 * math.pi * VACUUM_PERMITTIVITY
                         * mass_kg * omega**2)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# Gaussian optics closed forms


def gaussian_disc_power_centered(waist: float, radius: float) -> float:
    """Power fraction of a unit-power symmetric Gaussian inside a centered
    disc (closed form)."""
    return 1.0 - math.exp(-2.0 * radius**2 / waist**2)


def gaussian_intensity(waist: float, power: float = 1.0):
    """Unit-power 2D Gaussian intensity function (1/e^2 radius `waist`)."""
    peak = 2.0 * power / (math.pi * waist**2)

    def fn(x, y):
        return peak * np.exp(-2.0 * (x**2 + y**2) / waist**2)

    return fn


def disc_power_quadrature(intensity_fn, center, radius: float,
                          n_radial: int = 400, n_angular: int = 400) -> float:
    """Disc integral of an intensity function on a fine polar grid."""
    r_edges = np.linspace(0.0, radius, n_radial + 1)
    r_mid = 0.5 * (r_edges[:-1] + r_edges[1:])
    theta = (np.arange(n_angular) + 0.5) * (2.0 * math.pi / n_angular)
    rr, tt = np.meshgrid(r_mid, theta, indexing="ij")
    x = center[0] + rr * np.cos(tt)
    y = center[1] + rr * np.sin(tt)
    dr = radius / n_radial
    dtheta = 2.0 * math.pi / n_angular
    return float(np.sum(intensity_fn(x, y) * rr) * dr * dtheta)


def gaussian_second_moment_waist(x: np.ndarray, intensity: np.ndarray) -> float:
    """1/e^2 radius from the intensity second moment (w = 2*sqrt(<x^2>))."""
    x = np.asarray(x, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    total = np.sum(intensity)
    mean = np.sum(x * intensity) / total
    var = np.sum((x - mean) ** 2 * intensity) / total
    return 2.0 * math.sqrt(var)


# ---------------------------------------------------------------------------
# slit-scan quadrature route


def slit_average(positions: np.ndarray, values: np.ndarray, center: float,
                 width: float, oversample: int = 10) -> float:
    """Mean of a sampled profile over [center-width/2, center+width/2] by
    trapezoid quadrature on a linearly interpolated fine grid."""
    lo, hi = center - width / 2.0, center + width / 2.0
    n = max(2, int(round((hi - lo) / (positions[1] - positions[0]))) * oversample)
    fine = np.linspace(lo, hi, n + 1)
    interp = np.interp(fine, positions, values)
    return float(np.trapezoid(interp, fine) / width)
