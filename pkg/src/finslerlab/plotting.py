"""PNG figures for the CLI report path (matplotlib, non-interactive backend)."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
PALETTE = ("#08589e", "#d95f0e", "#2b8cbe", "#7bccc4", "#636363")

STYLE = {
    "figure.figsize": (5.0, 5.0 * GOLDEN),
    "figure.dpi": 150,
    "savefig.dpi": 150,
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "axes.prop_cycle": matplotlib.cycler(color=PALETTE),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "mathtext.fontset": "stix",
    "svg.hashsalt": "finslerlab",
}


@contextmanager
def _figure(path, **kw):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(**kw)
        try:
            yield fig, ax
            fig.tight_layout()
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, metadata={"Software": None})
        finally:
            plt.close(fig)


def field_map(path, grid, values, title: str, label: str):
    """Heat map of a 2-D node field (3-D fields show the x3 = 0 slice)."""
    vals = np.asarray(values).reshape(grid.shape)
    if grid.n == 3:
        vals = vals[..., 0]
    with _figure(path) as (fig, ax):
        im = ax.imshow(vals.T, origin="lower", extent=(0, grid.L, 0, grid.L), cmap="viridis", aspect="equal")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label=label, shrink=0.9)
    return path


def curvature_map(path, table, grid):
    """Minimum of Ric_N over sampled directions at each node."""
    D = len(table.F) // grid.size
    vals = np.min(table.ricN.reshape(grid.size, D), axis=1)
    return field_map(path, grid, vals, "min over directions of $\\mathrm{Ric}_N$", "$\\mathrm{Ric}_N$")


def mass_plot(path, traj):
    t = np.asarray(traj.t)
    mass = np.array([traj.mass(k) for k in range(len(traj))])
    drift = mass / mass[0] - 1.0
    with _figure(path, nrows=2, sharex=True) as (fig, axes):
        axes[0].plot(t, [np.min(u) for u in traj.u], label="min $u$")
        axes[0].plot(t, [np.max(u) for u in traj.u], label="max $u$")
        axes[0].legend()
        axes[1].plot(t, drift, color=PALETTE[4])
        axes[1].set_ylabel("relative mass drift")
        axes[1].set_xlabel("$t$")
    return path


def bounds_plot(path, flow):
    rows = np.array([[r[0], r[1], r[2], r[3] if r[3] is not None else np.nan, r[4] if r[4] is not None else np.nan]
                     for r in flow.bounds_table()], dtype=float)
    with _figure(path) as (fig, ax):
        for j, name in enumerate(("$K_1$", "$K_2$", "$K_3$", "$K_4$"), start=1):
            ax.plot(rows[:, 0], rows[:, j], marker="o" if len(rows) < 20 else None, label=name)
        ax.set_xlabel("$t$")
        ax.set_ylabel("curvature bound")
        ax.legend(ncol=4)
    return path


def margin_plot(path, report):
    """Per-time worst margin against the tolerance budget."""
    t = np.array([r[0] for r in report.rows])
    m = np.array([r[-1] for r in report.rows])
    with _figure(path) as (fig, ax):
        ax.plot(t, m, marker=".", linestyle="-", label="worst margin")
        ax.axhline(report.tol_budget, color=PALETTE[1], linestyle="--", label="budget")
        ax.set_yscale("symlog", linthresh=max(abs(report.tol_budget), 1e-6))
        ax.set_xlabel("$t$")
        ax.set_ylabel("margin")
        ax.set_title(report.name)
        ax.legend()
    return path


def harnack_plot(path, report):
    gap = np.array([r[1] - r[0] for r in report.rows])
    m = np.array([r[-1] for r in report.rows])
    with _figure(path) as (fig, ax):
        ax.scatter(gap, m, s=8)
        ax.axhline(report.tol_budget, color=PALETTE[1], linestyle="--", label="budget")
        ax.set_xlabel("$t - s$")
        ax.set_ylabel("log margin")
        ax.set_title(report.name)
        ax.legend()
    return path
