"""Figure rendering for scenario reports.

Every helper writes a PNG next to the delimited data it illustrates and
returns the path.  The Agg backend is selected lazily so importing the
package never requires a display.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_intensity_map(field, path, targets=None, title="intensity") -> str:
    """Render a 2D intensity plane with optional target markers."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    x = field.x() * 1e6
    y = field.y() * 1e6
    data = field.intensity()
    peak = data.max()
    floor = peak * 1e-12 if peak > 0 else 1.0
    from matplotlib.colors import LogNorm

    im = ax.imshow(
        np.maximum(data, floor),
        extent=(x[0], x[-1], y[0], y[-1]),
        origin="lower",
        aspect="auto",
        norm=LogNorm(vmin=floor, vmax=peak if peak > 0 else 1.0),
        cmap="inferno",
    )
    if targets is not None:
        tx = [t[0] * 1e6 for t in targets]
        ty = [t[1] * 1e6 for t in targets]
        ax.plot(tx, ty, "w+", markersize=8, markeredgewidth=1.2)
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="intensity (a.u.)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_crosstalk_heatmap(matrix, path, target_db=None) -> str:
    """Render a dB crosstalk matrix with per-cell annotations."""
    plt = _pyplot()
    m = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    finite = m[np.isfinite(m) & (m != 0)]
    vmin = float(finite.min()) if finite.size else -100.0
    shown = np.where(np.isfinite(m), m, vmin)
    im = ax.imshow(shown, cmap="viridis", vmin=vmin, vmax=0.0)
    n = m.shape[0]
    if n <= 12:
        for i in range(n):
            for j in range(n):
                label = "0" if i == j else f"{m[i, j]:.0f}"
                ax.text(j, i, label, ha="center", va="center", fontsize=7,
                        color="white")
    title = "channel crosstalk (dB)"
    if target_db is not None:
        title += f", target <= {target_db:g} dB"
    ax.set_title(title)
    ax.set_xlabel("observed channel")
    ax.set_ylabel("lit channel")
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_profile_plot(path, curves, window=None, peaks=None,
                      title="scan profile") -> str:
    """Render 1D profiles on a log intensity scale.

    `curves` is an iterable of (label, profile) pairs; `window` marks the
    averaging region and `peaks` the detected peak positions.
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    floor = None
    for label, profile in curves:
        values = np.asarray(profile.values, dtype=float)
        top = values.max() if values.size else 1.0
        low = top * 1e-14 if top > 0 else 1.0
        floor = low if floor is None else min(floor, low)
        ax.semilogy(np.asarray(profile.positions) * 1e3,
                    np.maximum(values, low), label=label)
    if window is not None:
        ax.axvspan(window[0] * 1e3, window[1] * 1e3, color="0.85",
                   label="averaging window")
    if peaks is not None:
        for p in peaks:
            ax.axvline(p * 1e3, color="k", linestyle=":", linewidth=0.8)
    ax.set_xlabel("position (mm)")
    ax.set_ylabel("intensity (a.u.)")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_taper_sweep_plot(path, rows, title="taper mode size vs width") -> str:
    """Render mode-field diameters and n_eff against local core width."""
    plt = _pyplot()
    rows = list(rows)
    widths = np.array([r[0] for r in rows]) * 1e9
    mfd_x = np.array([r[1] for r in rows]) * 1e6
    mfd_y = np.array([r[2] for r in rows]) * 1e6
    neff = np.array([r[3] for r in rows])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(widths, mfd_x, "o-", label="MFD x")
    ax1.plot(widths, mfd_y, "s-", label="MFD y")
    ax1.set_ylabel("mode field diameter (um)")
    ax1.legend()
    ax1.set_title(title)
    ax2.plot(widths, neff, "o-", color="C2")
    ax2.set_ylabel("effective index")
    ax2.set_xlabel("core width (nm)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
