"""Finite-difference eigenmode solver for rectangular dielectric waveguides.

The transverse Helmholtz operator is discretized on a uniform grid with a
5-point stencil acting on the dominant electric field component.  Along
the axis of that component the neighbor coefficients are dielectric
weighted so that eps*E stays continuous across core sidewalls; along the
other axis plain central differences apply.  Cell permittivities are
exact area averages of the core rectangles over each cell, so interface
positions are honored below the grid step.

Polarization naming: TE means dominant E along x (the width axis), TM
dominant E along y (the thickness axis).  The domain boundary is
zero-field (Dirichlet); solutions are only trusted when the grid leaves
enough cladding margin for the mode to decay, which solve-time checks
enforce.

Eigenvalues are beta^2; a mode counts as guided when
n_clad < n_eff = sqrt(beta^2)/k0 < n_core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, splu

from .config import DEFAULT_CONFIG
from .errors import (
    ComputationError,
    CutoffNotFoundError,
    GridTooCoarseError,
    InvalidGeometryError,
    ModeNotGuidedError,
)
from .fields import ScalarField2D

POLARIZATIONS = ("TE", "TM")


@dataclass(frozen=True)
class WaveguideGeometry:
    """Rectangular core in uniform cladding, fully etched, symmetric clad."""

    core_width: float
    core_thickness: float
    core_index: float
    clad_index: float
    wavelength: float

    def __post_init__(self):
        if not (self.core_width > 0 and self.core_thickness > 0):
            raise InvalidGeometryError("core dimensions must be positive")
        if not self.wavelength > 0:
            raise InvalidGeometryError("wavelength must be positive")
        if not self.clad_index >= 1.0:
            raise InvalidGeometryError("cladding index must be >= 1")
        if not self.core_index >= self.clad_index:
            raise InvalidGeometryError("core index must not be below cladding index")


@dataclass(frozen=True)
class CoreRect:
    """One high-index rectangle of a (possibly composite) cross-section."""

    center_x: float
    center_y: float
    width: float
    height: float
    index: float


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform cell-centered grid over [-x_extent/2, x_extent/2] x likewise in y."""

    x_extent: float
    y_extent: float
    dx: float
    dy: float

    def __post_init__(self):
        if not (self.x_extent > 0 and self.y_extent > 0):
            raise InvalidGeometryError("grid extents must be positive")
        if not (0 < self.dx <= self.x_extent and 0 < self.dy <= self.y_extent):
            raise InvalidGeometryError("grid steps must be positive and fit the extents")

    @property
    def nx(self) -> int:
        return max(1, round(self.x_extent / self.dx))

    @property
    def ny(self) -> int:
        return max(1, round(self.y_extent / self.dy))

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx - self.x_extent / 2.0

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy - self.y_extent / 2.0


@dataclass(frozen=True)
class GuidedMode:
    """One guided eigenmode: effective index plus normalized field."""

    n_eff: float
    polarization: str
    mode_index: int
    field: ScalarField2D


def grid_for(
    geom: WaveguideGeometry,
    resolution: float | None = None,
    margin: float | None = None,
    dx: float | None = None,
    dy: float | None = None,
) -> SimulationGrid:
    """Grid enclosing the core with `margin` of cladding on every side."""
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    mar = margin if margin is not None else DEFAULT_CONFIG.clad_margin
    return SimulationGrid(
        x_extent=geom.core_width + 2.0 * mar,
        y_extent=geom.core_thickness + 2.0 * mar,
        dx=dx if dx is not None else res,
        dy=dy if dy is not None else res,
    )


def _overlap_fraction(lo: np.ndarray, hi: np.ndarray, a: float, b: float) -> np.ndarray:
    # fraction of each [lo, hi) cell covered by [a, b]
    return np.clip((np.minimum(hi, b) - np.maximum(lo, a)) / (hi - lo), 0.0, 1.0)


def _check_margin(rects, grid: SimulationGrid, margin: float) -> None:
    for r in rects:
        if (abs(r.center_x) + r.width / 2.0 + margin > grid.x_extent / 2.0 + 1e-15
                or abs(r.center_y) + r.height / 2.0 + margin > grid.y_extent / 2.0 + 1e-15):
            raise InvalidGeometryError(
                f"grid must leave at least {margin:g} m of cladding around every core"
            )


def _eps_grid(rects, clad_index: float, grid: SimulationGrid) -> np.ndarray:
    """Cellwise permittivity, area-averaged over core rectangles."""
    xc = grid.x_centers()
    yc = grid.y_centers()
    xlo, xhi = xc - grid.dx / 2.0, xc + grid.dx / 2.0
    ylo, yhi = yc - grid.dy / 2.0, yc + grid.dy / 2.0
    eps = np.full((grid.ny, grid.nx), clad_index**2)
    for r in rects:
        fx = _overlap_fraction(xlo, xhi, r.center_x - r.width / 2.0,
                               r.center_x + r.width / 2.0)
        fy = _overlap_fraction(ylo, yhi, r.center_y - r.height / 2.0,
                               r.center_y + r.height / 2.0)
        frac = np.outer(fy, fx)
        eps += (r.index**2 - clad_index**2) * frac
    return eps


def _assemble(eps: np.ndarray, grid: SimulationGrid, k0: float, polarization: str):
    """Sparse operator A with A phi = beta^2 phi on the flattened grid."""
    ny, nx = eps.shape
    hx2 = grid.dx**2
    hy2 = grid.dy**2
    pad = np.pad(eps, 1, mode="edge")
    ep = eps
    ee = pad[1:-1, 2:]
    ew = pad[1:-1, :-2]
    en = pad[2:, 1:-1]
    es = pad[:-2, 1:-1]

    if polarization == "TE":
        # continuity of eps*E across x-facing interfaces
        den = (ep + ee) * (ep + 3.0 * ew) + (ep + ew) * (ep + 3.0 * ee)
        ae = 8.0 * (ep + ew) * ee / (hx2 * den)
        aw = 8.0 * (ep + ee) * ew / (hx2 * den)
        an = np.full_like(ep, 1.0 / hy2)
        as_ = np.full_like(ep, 1.0 / hy2)
        apd = ep * k0**2 - an - as_ - ae * ep / ee - aw * ep / ew
    elif polarization == "TM":
        den = (ep + en) * (ep + 3.0 * es) + (ep + es) * (ep + 3.0 * en)
        an = 8.0 * (ep + es) * en / (hy2 * den)
        as_ = 8.0 * (ep + en) * es / (hy2 * den)
        ae = np.full_like(ep, 1.0 / hx2)
        aw = np.full_like(ep, 1.0 / hx2)
        apd = ep * k0**2 - ae - aw - an * ep / en - as_ * ep / es
    else:
        raise InvalidGeometryError(f"polarization must be one of {POLARIZATIONS}")

    idx = np.arange(nx * ny).reshape(ny, nx)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [apd.ravel()]
    # east/west neighbors (x axis), dropped at Dirichlet boundaries
    rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel()); vals.append(ae[:, :-1].ravel())
    rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel()); vals.append(aw[:, 1:].ravel())
    # north/south neighbors (y axis)
    rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel()); vals.append(an[:-1, :].ravel())
    rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel()); vals.append(as_[1:, :].ravel())

    a = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    )
    return a.tocsc()


def _realify(vec: np.ndarray) -> np.ndarray:
    # rotate out the arbitrary global phase, fix the sign at the peak
    peak = vec[np.argmax(np.abs(vec))]
    if peak != 0:
        vec = vec * np.conj(peak / abs(peak))
    vec = np.real(vec)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return vec


def solve_layout(
    rects,
    clad_index: float,
    wavelength: float,
    grid: SimulationGrid,
    polarization: str = "TE",
    max_modes: int | None = None,
    margin: float | None = None,
) -> list[GuidedMode]:
    """Guided modes of an arbitrary arrangement of core rectangles.

    This is the solver core behind `solve_modes` and
    `coupled_pair_crosstalk`: any list of `CoreRect`s inside an explicit
    `SimulationGrid` window, for example off-center cores, asymmetric
    cladding budgets, or cores that deliberately touch the window wall
    (a Dirichlet wall doubles as the symmetry plane of a mirrored
    structure; pass ``margin=0`` to permit the contact).

    Modes are returned sorted by decreasing effective index, keeping
    only the guided window clad_index < n_eff < max core index.
    """
    if max_modes is None:
        max_modes = DEFAULT_CONFIG.max_modes
    if margin is None:
        margin = DEFAULT_CONFIG.clad_margin
    _check_margin(rects, grid, margin)
    k0 = 2.0 * math.pi / wavelength
    n_max = max(r.index for r in rects)
    eps = _eps_grid(rects, clad_index, grid)
    a = _assemble(eps, grid, k0, polarization)

    k = min(max_modes + 2, a.shape[0] - 2)
    sigma = (k0 * n_max) ** 2 * 1.0005
    # manual shift-invert: factor once, let ARPACK work on (A - sigma I)^-1;
    # sigma sits just above the spectrum so the guided cluster maps to the
    # largest-magnitude eigenvalues of the inverse
    shifted = (a - sigma * sparse.identity(a.shape[0], format="csc")).tocsc()
    try:
        lu = splu(shifted, permc_spec="MMD_AT_PLUS_A",
                  diag_pivot_thresh=0.001, options=dict(SymmetricMode=True))
        op = LinearOperator(a.shape, matvec=lu.solve, dtype=np.float64)
        ncv = min(a.shape[0], max(2 * k + 4, 14))
        w, v = eigs(op, k=k, which="LM", ncv=ncv, tol=1e-10)
    except ArpackNoConvergence as exc:
        raise ComputationError(f"eigensolver did not converge: {exc}") from exc
    except RuntimeError as exc:
        raise ComputationError(f"eigensolver failed: {exc}") from exc
    w = sigma + 1.0 / w

    order = np.argsort(-np.real(w))
    modes: list[GuidedMode] = []
    x0 = -grid.x_extent / 2.0 + grid.dx / 2.0
    y0 = -grid.y_extent / 2.0 + grid.dy / 2.0
    for i in order:
        lam = float(np.real(w[i]))
        if lam <= 0:
            continue
        n_eff = math.sqrt(lam) / k0
        if not (clad_index < n_eff < n_max):
            continue
        if len(modes) >= max_modes:
            break
        samples = _realify(v[:, i]).reshape(grid.ny, grid.nx)
        norm = math.sqrt(np.sum(samples**2) * grid.dx * grid.dy)
        field = ScalarField2D(
            (samples / norm).astype(complex), grid.dx, grid.dy, (x0, y0), wavelength
        )
        modes.append(GuidedMode(n_eff, polarization, len(modes), field))
    return modes


def solve_modes(
    geom: WaveguideGeometry,
    grid: SimulationGrid | None = None,
    polarization: str = "TE",
    max_modes: int | None = None,
    resolution: float | None = None,
    margin: float | None = None,
    self_check: bool = False,
    self_check_tol: float | None = None,
) -> list[GuidedMode]:
    """Guided modes of a single rectangular waveguide, descending n_eff.

    Parameters
    ----------
    geom : WaveguideGeometry
    grid : SimulationGrid, optional
        Built from `resolution`/`margin` when omitted.
    polarization : str
        "TE" (dominant E along width) or "TM" (along thickness).
    max_modes : int, optional
        Cap on returned modes (default from config).
    self_check : bool
        Re-solve at doubled resolution; raise GridTooCoarseError when the
        fundamental n_eff moves more than `self_check_tol`.

    Returns an empty list when nothing is guided (for example at zero
    index contrast, where the guided window is empty).
    """
    mar = margin if margin is not None else DEFAULT_CONFIG.clad_margin
    if grid is None:
        grid = grid_for(geom, resolution=resolution, margin=mar)
    nmodes = max_modes if max_modes is not None else DEFAULT_CONFIG.max_modes
    rects = [CoreRect(0.0, 0.0, geom.core_width, geom.core_thickness, geom.core_index)]
    modes = solve_layout(rects, geom.clad_index, geom.wavelength, grid,
                         polarization, nmodes, mar)
    if self_check and modes:
        tol = self_check_tol if self_check_tol is not None else DEFAULT_CONFIG.neff_self_check_tol
        fine = SimulationGrid(grid.x_extent, grid.y_extent, grid.dx / 2.0, grid.dy / 2.0)
        ref = solve_layout(rects, geom.clad_index, geom.wavelength, fine,
                           polarization, 1, mar)
        if not ref or abs(ref[0].n_eff - modes[0].n_eff) > tol:
            drift = abs(ref[0].n_eff - modes[0].n_eff) if ref else math.inf
            raise GridTooCoarseError(
                f"fundamental n_eff moved {drift:.2e} on grid doubling (tol {tol:g})"
            )
    return modes


def count_guided_modes(
    geom: WaveguideGeometry,
    grid: SimulationGrid | None = None,
    polarization: str = "TE",
    max_modes: int | None = None,
    resolution: float | None = None,
    margin: float | None = None,
) -> int:
    """Number of guided modes for the geometry (possibly 0)."""
    return len(solve_modes(geom, grid=grid, polarization=polarization,
                           max_modes=max_modes, resolution=resolution, margin=margin))


def single_mode_cutoff_width(
    geom: WaveguideGeometry,
    polarization: str = "TE",
    resolution: float | None = None,
    margin: float | None = None,
    search_lo: float | None = None,
    search_hi: float | None = None,
    width_tol: float | None = None,
) -> float:
    """Core width at which a second guided mode appears, by bisection.

    The thickness, indices and wavelength are taken from `geom`; its
    width is ignored.  Raises CutoffNotFoundError when the search
    interval does not bracket the transition.
    """
    cfg = DEFAULT_CONFIG
    lo = search_lo if search_lo is not None else cfg.cutoff_search_lo
    hi = search_hi if search_hi is not None else cfg.cutoff_search_hi
    tol = width_tol if width_tol is not None else cfg.cutoff_width_tol
    if not (0 < lo < hi):
        raise InvalidGeometryError("need 0 < search_lo < search_hi")

    def n_guided(width: float) -> int:
        g = WaveguideGeometry(width, geom.core_thickness, geom.core_index,
                              geom.clad_index, geom.wavelength)
        return count_guided_modes(g, polarization=polarization,
                                  resolution=resolution, margin=margin, max_modes=3)

    if n_guided(lo) >= 2:
        raise CutoffNotFoundError(f"already multimode at search_lo = {lo:g} m")
    if n_guided(hi) < 2:
        raise CutoffNotFoundError(f"still single-mode at search_hi = {hi:g} m")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if n_guided(mid) >= 2:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CoupledPairResult:
    """Supermode splitting of two identical parallel cores."""

    n_even: float
    n_odd: float
    kappa: float                # coupling coefficient (1/m)
    separation: float           # edge-to-edge gap (m)
    interaction_length: float
    crossover_power: float      # fraction coupled after the interaction length


def coupled_pair_crosstalk(
    geom: WaveguideGeometry,
    separation: float,
    interaction_length: float,
    polarization: str = "TE",
    resolution: float | None = None,
    margin: float | None = None,
    grid: SimulationGrid | None = None,
) -> CoupledPairResult:
    """Evanescent power transfer between two identical parallel waveguides.

    Solves the composite two-core cross-section for its even/odd
    supermodes and converts the splitting to a coupling coefficient
    kappa = pi * (n_even - n_odd) / wavelength; the power crossed over
    after the interaction length is sin^2(kappa * L).

    An explicit `grid` overrides the automatically sized window, for
    example to stretch the cladding budget anisotropically.
    """
    if separation <= 0:
        raise InvalidGeometryError("separation must be positive")
    if interaction_length < 0:
        raise InvalidGeometryError("interaction length must be non-negative")
    mar = margin if margin is not None else DEFAULT_CONFIG.clad_margin
    res = resolution if resolution is not None else DEFAULT_CONFIG.grid_resolution
    pitch = separation + geom.core_width
    rects = [
        CoreRect(-pitch / 2.0, 0.0, geom.core_width, geom.core_thickness, geom.core_index),
        CoreRect(+pitch / 2.0, 0.0, geom.core_width, geom.core_thickness, geom.core_index),
    ]
    if grid is None:
        grid = SimulationGrid(
            x_extent=2.0 * geom.core_width + separation + 2.0 * mar,
            y_extent=geom.core_thickness + 2.0 * mar,
            dx=res,
            dy=res,
        )
    modes = solve_layout(rects, geom.clad_index, geom.wavelength, grid,
                         polarization, 2, mar)
    if len(modes) < 2:
        raise ModeNotGuidedError(
            "coupled pair did not yield two guided supermodes on this grid"
        )
    n_even, n_odd = modes[0].n_eff, modes[1].n_eff
    kappa = math.pi * max(n_even - n_odd, 0.0) / geom.wavelength
    return CoupledPairResult(
        n_even=n_even,
        n_odd=n_odd,
        kappa=kappa,
        separation=separation,
        interaction_length=interaction_length,
        crossover_power=math.sin(kappa * interaction_length) ** 2,
    )
