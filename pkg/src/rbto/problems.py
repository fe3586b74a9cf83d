"""Benchmark grid presets: MBB half-beam and L-shaped bracket."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError
from .fea import StructuredGrid


def mbb_grid(nx: int = 60, ny: int = 20, load: float = 1.0) -> tuple[StructuredGrid, int]:
    """Symmetric half of the MBB beam.

    The symmetry edge (x = 0) carries zero horizontal displacement, the outer
    bottom corner rides a vertical roller, and the unit midspan load is
    applied downward at the top symmetry corner (the classical 88-line
    half-model convention). Returns (grid, constrained y-DOF of the load
    application point).
    """

    ndof = 2 * (nx + 1) * (ny + 1)
    fixed = [2 * (0 * (ny + 1) + iy) for iy in range(ny + 1)]  # x-DOFs on symmetry edge
    fixed.append(2 * (nx * (ny + 1) + 0) + 1)  # y-DOF at outer bottom corner
    loads = np.zeros(ndof)
    load_dof = 2 * (0 * (ny + 1) + ny) + 1  # y-DOF of top symmetry corner
    loads[load_dof] = -abs(load)
    grid = StructuredGrid(nx=nx, ny=ny, fixed_dofs=np.array(fixed), loads=loads)
    return grid, load_dof


def lbeam_grid(
    n: int = 60, load: float = 1.0, passive_quadrant: str = "upper-right"
) -> tuple[StructuredGrid, int]:
    """L-shaped bracket on an n x n grid with one passive quarter.

    With the default upper-right quarter passive, the topmost remaining edge
    (top of the vertical arm) is fully fixed and a unit load points downward
    at the midpoint of the rightmost edge of the horizontal arm. Returns
    (grid, constrained y-DOF of the load application point).
    """
    if n % 2:
        raise InvalidParameterError("L-domain grid size must be even")
    half = n // 2
    ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    quadrants = {
        "upper-right": (ex >= half) & (ey >= half),
        "upper-left": (ex < half) & (ey >= half),
        "lower-right": (ex >= half) & (ey < half),
        "lower-left": (ex < half) & (ey < half),
    }
    if passive_quadrant not in quadrants:
        raise InvalidParameterError(f"unknown quadrant {passive_quadrant!r}")
    if passive_quadrant != "upper-right":
        raise InvalidParameterError(
            "only the upper-right passive quadrant preset carries supports/loads"
        )
    active = ~quadrants[passive_quadrant].ravel()

    ndof = 2 * (n + 1) * (n + 1)
    fixed = []
    for ix in range(half + 1):  # top edge of the remaining column
        node = ix * (n + 1) + n
        fixed.extend([2 * node, 2 * node + 1])
    loads = np.zeros(ndof)
    load_node = n * (n + 1) + half // 2  # midpoint of the lower-arm right edge
    load_dof = 2 * load_node + 1
    loads[load_dof] = -abs(load)
    grid = StructuredGrid(
        nx=n, ny=n, fixed_dofs=np.array(fixed), loads=loads, active_mask=active
    )
    return grid, load_dof
