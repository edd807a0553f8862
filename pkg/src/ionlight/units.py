"""Parsing of unit-suffixed quantities for the command line.

Accepted forms: a bare float (already in base SI units) or a float with
an immediate suffix, e.g. ``650nm``, ``73.4um``, ``34khz``, ``138amu``.
Suffix matching is case-insensitive.  Everything converts to base SI
(meters, hertz, kilograms).
"""

from __future__ import annotations

import re

from .constants import amu
from .errors import ValidationError

# suffix -> multiplier into base SI units
_SUFFIXES = {
    "nm": 1e-9,
    "um": 1e-6,
    "mm": 1e-3,
    "cm": 1e-2,
    "m": 1.0,
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
    "amu": amu,
    "kg": 1.0,
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]*)\s*$")


def parse_quantity(text: str) -> float:
    """Parse ``"73.4um"`` and friends into base SI units.

    Raises ValidationError on malformed input or an unknown suffix.
    """
    m = _QUANTITY_RE.match(str(text))
    if not m:
        raise ValidationError(f"cannot parse quantity {text!r}")
    value = float(m.group(1))
    suffix = m.group(2).lower()
    if not suffix:
        return value
    try:
        return value * _SUFFIXES[suffix]
    except KeyError:
        raise ValidationError(
            f"unknown unit suffix {m.group(2)!r} in {text!r}; "
            f"known: {', '.join(sorted(_SUFFIXES))}"
        ) from None


def parse_length(text: str) -> float:
    """Parse a quantity expected to be a length; rejects frequency/mass suffixes."""
    m = _QUANTITY_RE.match(str(text))
    if m and m.group(2).lower() in ("hz", "khz", "mhz", "ghz", "amu", "kg"):
        raise ValidationError(f"expected a length, got {text!r}")
    return parse_quantity(text)


__all__ = ["parse_quantity", "parse_length"]
