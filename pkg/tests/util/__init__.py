"""Small analytic fields shared by the tests."""

import numpy as np

from zkcollide.spectral import Field2D, Grid2D

__all__ = ["gaussian", "SMALL_GRID"]

SMALL_GRID = Grid2D(Lx=8.0, Ly=8.0, Nx=128, Ny=128)


def gaussian(grid: Grid2D, center: tuple[float, float] = (0.0, 0.0), width: float = 1.0) -> Field2D:
    """exp(-|x - center|^2 / width^2)."""
    return Field2D.from_function(
        grid, lambda x, y: np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / width**2)
    )
