"""Spot/spacing/NA design-space solver for the two-plane delivery layout.

Seven parameters describe the layout: spot radius, channel spacing and
numerical aperture at the chip facet and at the qubit plane, plus the
relay magnification.  Four relations tie them together —

    spacing_qubit = M * spacing_chip
    spot_qubit    = M * spot_chip
    na_chip       = wavelength / (pi * spot_chip)
    na_qubit      = wavelength / (pi * spot_qubit)

— so choosing any three independent parameters fixes the rest.  (The
NA-vs-spot constant pi comes from the Gaussian far-field divergence
with the 1/e^2 intensity radius; na_qubit = na_chip / M then follows as
a derived identity.)  All four relations are monomials, hence linear in
the logarithms of the parameters; the solver therefore works on the
log-space linear system with exact rational elimination, which makes
"these three choices are dependent" an exact decision rather than a
numeric-threshold one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .config import DEFAULT_CONFIG
from .errors import (
    InconsistentKnownsError,
    OutOfRangeError,
    UnderdeterminedError,
    ValidationError,
)

PARAMETER_NAMES = (
    "spot_chip",
    "spacing_chip",
    "na_chip",
    "spot_qubit",
    "spacing_qubit",
    "na_qubit",
    "magnification",
)

_ALIASES = {
    "w_c": "spot_chip",
    "s_c": "spacing_chip",
    "na_c": "na_chip",
    "w_q": "spot_qubit",
    "s_q": "spacing_qubit",
    "na_q": "na_qubit",
    "m": "magnification",
}

# tolerance in log space (~relative in linear space) for deciding that
# supplied values contradict a constraint the chosen names already imply
_LOG_TOL = 1e-9

CONSISTENCY_RTOL = 1e-9


def canonical_name(name: str) -> str:
    """Map a parameter name or its short alias to the canonical field name."""
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in PARAMETER_NAMES:
        raise ValidationError(
            f"unknown design parameter {name!r}; choose from "
            f"{', '.join(PARAMETER_NAMES)} or aliases {', '.join(_ALIASES)}"
        )
    return key


@dataclass(frozen=True)
class DesignParameters:
    """A complete design point; consistency of the four relations is enforced."""

    spot_chip: float
    spacing_chip: float
    na_chip: float
    spot_qubit: float
    spacing_qubit: float
    na_qubit: float
    magnification: float
    wavelength: float

    def __post_init__(self):
        for name in PARAMETER_NAMES + ("wavelength",):
            if not getattr(self, name) > 0:
                raise OutOfRangeError(f"{name} must be positive")
        for name in ("na_chip", "na_qubit"):
            if getattr(self, name) > 1:
                raise OutOfRangeError(f"{name} must be <= 1")
        checks = (
            ("spacing_qubit", self.spacing_qubit, self.magnification * self.spacing_chip),
            ("spot_qubit", self.spot_qubit, self.magnification * self.spot_chip),
            ("na_chip", self.na_chip, self.wavelength / (math.pi * self.spot_chip)),
            ("na_qubit", self.na_qubit, self.wavelength / (math.pi * self.spot_qubit)),
        )
        for name, actual, expected in checks:
            if not math.isclose(actual, expected, rel_tol=CONSISTENCY_RTOL):
                raise ValidationError(
                    f"inconsistent design: {name} = {actual:.9e} but the "
                    f"relations require {expected:.9e}"
                )

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAMETER_NAMES + ("wavelength",)}


def _constraint_rows(wavelength: float):
    """Four relations as (coefficients over log-parameters, rhs) rows."""
    idx = {name: i for i, name in enumerate(PARAMETER_NAMES)}
    log_na_scale = math.log(wavelength / math.pi)

    def row(coeffs, rhs):
        out = [Fraction(0)] * len(PARAMETER_NAMES)
        for name, c in coeffs.items():
            out[idx[name]] = Fraction(c)
        return out, rhs

    return [
        row({"spacing_qubit": 1, "spacing_chip": -1, "magnification": -1}, 0.0),
        row({"spot_qubit": 1, "spot_chip": -1, "magnification": -1}, 0.0),
        row({"na_chip": 1, "spot_chip": 1}, log_na_scale),
        row({"na_qubit": 1, "spot_qubit": 1}, log_na_scale),
    ]


def solve_design(known: dict, wavelength: float) -> DesignParameters:
    """Complete the design from exactly three known parameter values.

    `known` maps parameter names (canonical or alias) to positive
    values.  Raises UnderdeterminedError when the three names are
    dependent under the relations (their values alone cannot pin all
    seven parameters), InconsistentKnownsError when the supplied values
    contradict a relation among themselves, and OutOfRangeError when a
    solved value leaves the physical range (e.g. an NA above 1).
    """
    if not wavelength > 0:
        raise ValidationError("wavelength must be positive")
    resolved = {}
    for name, value in known.items():
        key = canonical_name(name)
        if key in resolved:
            raise ValidationError(f"parameter {key} supplied more than once")
        if not value > 0:
            raise ValidationError(f"{key} must be positive, got {value!r}")
        resolved[key] = float(value)
    if len(resolved) != 3:
        raise ValidationError(f"exactly 3 known parameters required, got {len(resolved)}")

    idx = {name: i for i, name in enumerate(PARAMETER_NAMES)}
    rows = _constraint_rows(wavelength)
    for name, value in sorted(resolved.items()):
        coeffs = [Fraction(0)] * len(PARAMETER_NAMES)
        coeffs[idx[name]] = Fraction(1)
        rows.append((coeffs, math.log(value)))

    # rational Gaussian elimination; rank decisions are exact because
    # every coefficient is a Fraction
    n = len(PARAMETER_NAMES)
    pivots = []
    for col in range(n):
        pivot = next(
            (r for r in range(len(rows)) if r not in {p for p, _ in pivots}
             and rows[r][0][col] != 0),
            None,
        )
    # (columns without a pivot are left free and detected below)
        if pivot is None:
            continue
        pivots.append((pivot, col))
        pc, pb = rows[pivot]
        for r in range(len(rows)):
            if r == pivot or rows[r][0][col] == 0:
                continue
            factor = rows[r][0][col] / pc[col]
            rows[r] = (
                [a - factor * b for a, b in zip(rows[r][0], pc)],
                rows[r][1] - float(factor) * pb,
            )

    pivot_rows = {p for p, _ in pivots}
    for r, (coeffs, rhs) in enumerate(rows):
        if r not in pivot_rows and all(c == 0 for c in coeffs) and abs(rhs) > _LOG_TOL:
            raise InconsistentKnownsError(
                "the supplied values contradict the design relations "
                f"(log-space residual {rhs:.3e})"
            )
    if len(pivots) < n:
        free = [PARAMETER_NAMES[c] for c in range(n)
                if c not in {col for _, col in pivots}]
        raise UnderdeterminedError(
            "the three knowns are dependent under the design relations; "
            f"unresolved parameter(s): {', '.join(free)}"
        )

    log_values = [0.0] * n
    for pivot, col in pivots:
        coeffs, rhs = rows[pivot]
        log_values[col] = rhs / float(coeffs[col])

    values = {}
    for name, lv in zip(PARAMETER_NAMES, log_values):
        v = math.exp(lv)
        if not math.isfinite(v) or v <= 0:
            raise OutOfRangeError(f"solved {name} is out of range")
        values[name] = v
    if values["na_chip"] > 1 or values["na_qubit"] > 1:
        bad = "na_chip" if values["na_chip"] > 1 else "na_qubit"
        raise OutOfRangeError(f"solved {bad} = {values[bad]:.4g} exceeds 1")
    return DesignParameters(wavelength=wavelength, **values)


@dataclass(frozen=True)
class PitchCheck:
    ratio: float
    in_band: bool


def check_pitch_ratio(params: DesignParameters, chain, band=None) -> PitchCheck:
    """Chip spacing over the chain's minimum gap, checked against the band.

    The chip pitch is deliberately several times the ion pitch so the
    demagnifying relay can match both; the band (default 5-10) encodes
    that rule of thumb.
    """
    lo, hi = band if band is not None else DEFAULT_CONFIG.pitch_band
    ratio = params.spacing_chip / chain.min_gap()
    return PitchCheck(ratio=float(ratio), in_band=bool(lo <= ratio <= hi))
