"""Physical constants used across the toolkit.

All values are CODATA 2018.  Every module takes its constants from this
table so that unit conventions cannot drift between solvers.
"""

ech = 1.602176634e-19       # elementary charge (C), exact
eps0 = 8.8541878128e-12     # vacuum permittivity (F/m)
amu = 1.66053906660e-27     # atomic mass constant (kg)
c0 = 299792458.0            # speed of light in vacuum (m/s), exact

m_ba138 = 137.905247 * amu  # barium-138 atomic mass (AME); electron deficit negligible

__all__ = ["ech", "eps0", "amu", "c0", "m_ba138"]
