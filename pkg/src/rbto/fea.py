"""Bilinear quadrilateral plane-stress FEA on structured grids.

Elements are unit squares with unit thickness. Nodes are numbered
column-major: node (ix, iy) -> ix*(ny+1) + iy, with two DOFs per node
(2*node for x, 2*node + 1 for y). Elements follow the same convention:
element (ex, ey) -> ex*ny + ey, centroid at (ex + 0.5, ey + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InvalidParameterError,
    NumericError,
    StateMismatchError,
    StructuralSingularityError,
)


def element_stiffness(poisson_ratio: float) -> np.ndarray:
    """8x8 stiffness of a unit-square plane-stress Q4 element with E = 1.

    Closed form of the exactly integrated bilinear element (2x2 Gauss is
    exact here since the integrand is bi-quadratic). Element DOFs are
    ordered counterclockwise from the lower-left node: (x1, y1, ..., x4, y4).
    Scaling by any modulus E is multiplicative.
    """
    nu = float(poisson_ratio)
    if not 0.0 < nu < 0.5:
        raise InvalidParameterError(f"poisson_ratio must be in (0, 0.5), got {nu}")
    k = np.array(
        [
            1 / 2 - nu / 6,
            1 / 8 + nu / 8,
            -1 / 4 - nu / 12,
            -1 / 8 + 3 * nu / 8,
            -1 / 4 + nu / 12,
            -1 / 8 - nu / 8,
            nu / 6,
            1 / 8 - 3 * nu / 8,
        ]
    )
    idx = np.array(
        [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ]
    )
    return k[idx] / (1 - nu**2)


@dataclass
class StructuredGrid:
    """Rectangular Q4 mesh with supports, loads, and an active-element mask.

    ``active_mask`` marks design elements; inactive (passive) elements are
    held at the minimum density and never enter the design-variable set.
    """

    nx: int
    ny: int
    fixed_dofs: np.ndarray
    loads: np.ndarray
    active_mask: np.ndarray | None = None

    # derived connectivity, filled in __post_init__
    edof: np.ndarray = field(init=False, repr=False)
    centroids: np.ndarray = field(init=False, repr=False)
    free_dofs: np.ndarray = field(init=False, repr=False)
    active_ids: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvalidParameterError("nx and ny must be >= 1")
        nel = self.nx * self.ny
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        self.loads = np.asarray(self.loads, dtype=float)
        if self.active_mask is None:
            self.active_mask = np.ones(nel, dtype=bool)
        self.active_mask = np.asarray(self.active_mask, dtype=bool)
        if self.active_mask.shape != (nel,):
            raise InvalidParameterError("active_mask must have one entry per element")
        if self.loads.shape != (self.ndof,):
            raise InvalidParameterError(
                f"loads must have length {self.ndof}, got {self.loads.shape}"
            )
        if self.fixed_dofs.size and (
            self.fixed_dofs[0] < 0 or self.fixed_dofs[-1] >= self.ndof
        ):
            raise InvalidParameterError("fixed_dofs out of range")

        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        ex, ey = ex.ravel(), ey.ravel()
        n1 = ex * (self.ny + 1) + ey
        n2 = (ex + 1) * (self.ny + 1) + ey
        n3 = n2 + 1
        n4 = n1 + 1
        self.edof = np.stack(
            [2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1],
            axis=1,
        )
        self.centroids = np.stack([ex + 0.5, ey + 0.5], axis=1)
        self.free_dofs = np.setdiff1d(np.arange(self.ndof), self.fixed_dofs)
        self.active_ids = np.flatnonzero(self.active_mask)

        # assembly scatter map, restricted to free DOFs
        dof_map = -np.ones(self.ndof, dtype=np.int64)
        dof_map[self.free_dofs] = np.arange(self.free_dofs.size)
        rows = np.repeat(self.edof, 8, axis=1).ravel()
        cols = np.tile(self.edof, (1, 8)).ravel()
        mi, mj = dof_map[rows], dof_map[cols]
        self._keep = (mi >= 0) & (mj >= 0)
        self._rows_free = mi[self._keep]
        self._cols_free = mj[self._keep]

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def ndof(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_active(self) -> int:
        return int(self.active_ids.size)

    def node_id(self, ix: int, iy: int) -> int:
        if not (0 <= ix <= self.nx and 0 <= iy <= self.ny):
            raise InvalidParameterError(f"node ({ix}, {iy}) outside grid")
        return ix * (self.ny + 1) + iy

    def dof_ids(self, ix: int, iy: int) -> tuple[int, int]:
        """(x-DOF, y-DOF) indices of node (ix, iy)."""
        n = self.node_id(ix, iy)
        return 2 * n, 2 * n + 1


@dataclass
class ElasticitySpec:
    """Poisson ratio plus the per-element Young's modulus vector."""

    poisson_ratio: float
    modulus: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.poisson_ratio < 0.5:
            raise InvalidParameterError(
                f"poisson_ratio must be in (0, 0.5), got {self.poisson_ratio}"
            )
        self.modulus = np.asarray(self.modulus, dtype=float)
        if np.any(self.modulus <= 0) or not np.all(np.isfinite(self.modulus)):
            raise InvalidParameterError("all element moduli must be positive and finite")

    @classmethod
    def uniform(cls, poisson_ratio: float, modulus: float, n_elements: int) -> "ElasticitySpec":
        return cls(poisson_ratio, np.full(n_elements, float(modulus)))


@dataclass
class DisplacementSolution:
    """Nodal displacements plus the retained factorization for adjoint reuse."""

    u: np.ndarray
    lu: spla.SuperLU
    grid: StructuredGrid
    scale: np.ndarray  # per-element stiffness multiplier rho^p * E used in assembly

    def displacement_at(self, dof: int) -> float:
        if not 0 <= dof < self.u.size:
            raise InvalidParameterError(f"dof index {dof} out of range")
        return float(self.u[dof])


def _element_scale(
    grid: StructuredGrid, densities, spec: ElasticitySpec, penal: float
) -> np.ndarray:
    """Full-grid stiffness multipliers rho^p * E_e; passive elements at rho_min."""
    rho = np.asarray(getattr(densities, "physical", densities), dtype=float)
    if rho.shape != (grid.n_active,):
        raise InvalidParameterError(
            f"density vector must cover the {grid.n_active} active elements, got {rho.shape}"
        )
    rho_min = float(getattr(densities, "rho_min", RHO_MIN))
    if np.any(rho < rho_min - 1e-12) or np.any(rho > 1.0 + 1e-12):
        raise InvalidParameterError("densities must lie within [rho_min, 1]")
    if spec.modulus.shape != (grid.n_elements,):
        raise InvalidParameterError(
            f"modulus vector must have length {grid.n_elements}, got {spec.modulus.shape}"
        )
    full = np.full(grid.n_elements, rho_min)
    full[grid.active_ids] = rho
    return full**penal * spec.modulus


RHO_MIN = 0.001


def assemble_solve(
    grid: StructuredGrid,
    densities,
    spec: ElasticitySpec,
    penal: float = 3.0,
) -> DisplacementSolution:
    """Assemble K(rho) with element modulus rho^p * E_e and solve K u = f.

    Fixed DOFs are eliminated (reduced system), so they carry exactly zero
    displacement. The factorization is retained on the returned solution for
    adjoint back-substitutions.
    """
    if grid.fixed_dofs.size == 0:
        raise StructuralSingularityError("grid has no fixed DOFs; rigid-body modes remain")
    scale = _element_scale(grid, densities, spec, penal)
    ke = element_stiffness(spec.poisson_ratio)
    data = (ke.ravel()[None, :] * scale[:, None]).ravel()[grid._keep]
    nfree = grid.free_dofs.size
    k_red = sp.coo_matrix(
        (data, (grid._rows_free, grid._cols_free)), shape=(nfree, nfree)
    ).tocsc()
    try:
        lu = spla.splu(k_red, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:  # exactly singular factorization
        raise StructuralSingularityError(f"stiffness factorization failed: {exc}") from exc
    f_free = grid.loads[grid.free_dofs]
    u_free = lu.solve(f_free)
    if not np.all(np.isfinite(u_free)):
        raise NumericError("non-finite displacements; system is singular or ill-scaled")
    residual = np.linalg.norm(k_red @ u_free - f_free)
    if residual > 1e-8 * np.linalg.norm(f_free):
        raise StructuralSingularityError(
            f"solve residual {residual:.2e} exceeds contract; constraints likely "
            "leave a rigid-body mode"
        )
    u = np.zeros(grid.ndof)
    u[grid.free_dofs] = u_free
    return DisplacementSolution(u=u, lu=lu, grid=grid, scale=scale)


def displacement_at(sol: DisplacementSolution, dof: int) -> float:
    """Signed nodal displacement at a DOF (callers take magnitudes themselves)."""
    return sol.displacement_at(dof)


def adjoint_gradient(
    grid: StructuredGrid,
    densities,
    spec: ElasticitySpec,
    penal: float,
    sol: DisplacementSolution,
    dof: int,
) -> np.ndarray:
    """d u_dof / d rho_e for every active element, via one adjoint solve.

    Solves K lam = e_dof reusing the retained factorization, then
    d u_dof / d rho_e = -lam_e^T (p rho^(p-1) E_e K0) u_e.
    """
    if sol.grid is not grid:
        raise StateMismatchError("solution was computed for a different grid")
    scale = _element_scale(grid, densities, spec, penal)
    if not np.array_equal(scale, sol.scale):
        raise StateMismatchError("solution does not match the given densities/spec/penal")
    if not 0 <= dof < grid.ndof:
        raise InvalidParameterError(f"dof index {dof} out of range")

    rhs = np.zeros(grid.free_dofs.size)
    where = np.searchsorted(grid.free_dofs, dof)
    if where >= grid.free_dofs.size or grid.free_dofs[where] != dof:
        # fixed DOF: displacement identically zero, gradient vanishes
        return np.zeros(grid.n_active)
    rhs[where] = 1.0
    lam = np.zeros(grid.ndof)
    lam[grid.free_dofs] = sol.lu.solve(rhs)

    ke = element_stiffness(spec.poisson_ratio)
    act = grid.active_ids
    u_e = sol.u[grid.edof[act]]
    lam_e = lam[grid.edof[act]]
    rho = np.asarray(getattr(densities, "physical", densities), dtype=float)
    dscale = penal * rho ** (penal - 1) * spec.modulus[act]
    # per-element lam^T K0 u via one einsum over the active set
    quad = np.einsum("ei,ij,ej->e", lam_e, ke, u_e)
    return -dscale * quad
