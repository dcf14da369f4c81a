"""Static figures written next to the data files."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

if TYPE_CHECKING:
    from collections.abc import Sequence

    from matplotlib.figure import Figure

    from zkcollide.interaction import InteractionTable
    from zkcollide.modulation import ModulationRecord
    from zkcollide.z_dynamics import PhasePortrait, ZTrajectory

logger = logging.getLogger(__name__)

DPI = 150


def _save(fig: Figure, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    logger.info(f"figure written to {path}")
    return path


def plot_collision(
    records: Sequence[ModulationRecord], reference: ZTrajectory | None, path: Path | str
) -> Path:
    """z(t) against Z(t), mu(t) against Z'(t) and |eps(t)|_H1, one panel each."""
    t = np.array([r.t for r in records])
    z = np.array([r.gamma.z for r in records])
    mu = np.array([r.gamma.mu for r in records])
    eps = np.array([r.eps_h1 for r in records])
    fig, (ax_z, ax_mu, ax_eps) = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
    ax_z.plot(t, z, label="z = z1 - z2")
    ax_mu.plot(t, mu, label="mu = mu1 - mu2")
    if reference is not None:
        inside = np.abs(t) <= reference.t_end
        z_ref, zdot_ref = reference.state_at(t[inside])
        ax_z.plot(t[inside], z_ref, "--", label="Z")
        ax_mu.plot(t[inside], zdot_ref, "--", label="Z'")
    ax_eps.semilogy(t, np.maximum(eps, np.finfo(float).tiny))
    ax_z.set_ylabel("separation")
    ax_mu.set_ylabel("relative speed")
    ax_eps.set_ylabel("|eps|_H1")
    ax_eps.set_xlabel("t")
    ax_z.legend()
    ax_mu.legend()
    return _save(fig, path)


def plot_phase_portrait(portrait: PhasePortrait, path: Path | str) -> Path:
    fig, ax = plt.subplots(figsize=(7, 6))
    y0, y1 = np.meshgrid(portrait.y0, portrait.y1, indexing="ij")
    ax.contour(y0, y1, portrait.h, levels=30, linewidths=0.5, colors="0.6")
    ax.contour(y0, y1, portrait.h, levels=[0.5 * portrait.separatrix_level], colors="k")
    for label, orbit in portrait.orbits.items():
        ax.plot(orbit[1], orbit[2], label=label)
    ax.set_xlim(portrait.y0[0], portrait.y0[-1])
    ax.set_ylim(portrait.y1[0], portrait.y1[-1])
    ax.set_xlabel("Z")
    ax.set_ylabel("Z'")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_interaction_plateau(table: InteractionTable, path: Path | str) -> Path:
    """G sqrt(z) e^z and F sqrt(z) e^z over the table."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(table.z_values, table.normalized_g, label="G sqrt(z) e^z")
    ax.plot(table.z_values, table.normalized_f, label="F sqrt(z) e^z")
    if table.c_int is not None:
        ax.axhline(table.c_int, color="k", linestyle=":", label="c_int")
    ax.set_xlabel("z")
    ax.legend()
    return _save(fig, path)
