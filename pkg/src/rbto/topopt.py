"""SIMP topology optimization: density filtering and the MMA-driven
volume-minimization loop under displacement constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import fea
from .errors import InvalidParameterError
from .fea import RHO_MIN, ElasticitySpec, StructuredGrid
from .mma import MmaState, mma_step

DTO_MAX_ITER = 400


@dataclass
class FilterKernel:
    """Row-normalized linear-decay density filter over the active elements.

    Weights w_ij = max(0, r_min - dist(centroid_i, centroid_j)), restricted
    to active elements and normalized so each row sums to 1.
    """

    rmin: float
    weights: sp.csr_matrix
    n_active: int

    @classmethod
    def build(cls, grid: StructuredGrid, rmin: float) -> "FilterKernel":
        if rmin <= 0:
            raise InvalidParameterError(f"rmin must be positive, got {rmin}")
        pts = grid.centroids[grid.active_ids]
        tree = cKDTree(pts)
        dist = tree.sparse_distance_matrix(tree, max_distance=rmin, output_type="coo_matrix")
        w = np.maximum(0.0, rmin - dist.data)
        mat = sp.coo_matrix((w, (dist.row, dist.col)), shape=dist.shape).tocsr()
        rowsum = np.asarray(mat.sum(axis=1)).ravel()
        inv = sp.diags(1.0 / rowsum)
        return cls(rmin=float(rmin), weights=(inv @ mat).tocsr(), n_active=pts.shape[0])

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Physical densities rho = W rho_tilde."""
        raw = np.asarray(raw, float)
        if raw.shape != (self.n_active,):
            raise InvalidParameterError(
                f"raw density vector must have length {self.n_active}, got {raw.shape}"
            )
        return self.weights @ raw

    def chain_gradient(self, grad_physical: np.ndarray) -> np.ndarray:
        """Pull a gradient w.r.t. physical densities back to the raw variables."""
        grad_physical = np.asarray(grad_physical, float)
        if grad_physical.shape != (self.n_active,):
            raise InvalidParameterError(
                f"gradient vector must have length {self.n_active}, got {grad_physical.shape}"
            )
        return self.weights.T @ grad_physical


def apply_filter(kernel: FilterKernel, raw: np.ndarray) -> np.ndarray:
    return kernel.apply(raw)


def chain_gradient(kernel: FilterKernel, grad_physical: np.ndarray) -> np.ndarray:
    return kernel.chain_gradient(grad_physical)


@dataclass
class DensityField:
    """Raw design densities and their filtered physical counterpart."""

    raw: np.ndarray
    physical: np.ndarray
    rho_min: float = RHO_MIN

    def __post_init__(self):
        self.raw = np.asarray(self.raw, float)
        self.physical = np.asarray(self.physical, float)
        eps = 1e-12
        for name, v in (("raw", self.raw), ("physical", self.physical)):
            if np.any(v < self.rho_min - eps) or np.any(v > 1.0 + eps):
                raise InvalidParameterError(f"{name} densities outside [rho_min, 1]")

    @classmethod
    def from_raw(cls, raw: np.ndarray, kernel: FilterKernel, rho_min: float = RHO_MIN):
        return cls(raw=np.asarray(raw, float), physical=kernel.apply(raw), rho_min=rho_min)

    @property
    def volume_fraction(self) -> float:
        return float(np.mean(self.physical))


@dataclass
class DtoProblem:
    """Deterministic volume minimization under displacement-magnitude limits.

    ``modulus`` is either one per-element field shared by all constraints
    (shape (n_elements,)) or one field per constraint (m, n_elements), as
    produced by the outer reliability loop.
    """

    grid: StructuredGrid
    modulus: np.ndarray
    constraints: list[tuple[int, float]]  # (dof, allowable |u|)
    poisson_ratio: float = 0.3
    penal: float = 3.0
    rmin: float = 1.5
    d_max: float = 0.001
    max_iter: int = DTO_MAX_ITER
    rho_min: float = RHO_MIN

    def __post_init__(self):
        self.modulus = np.asarray(self.modulus, dtype=float)
        if self.modulus.ndim == 1:
            self.modulus = self.modulus[None, :]
        m = len(self.constraints)
        if self.modulus.shape[0] == 1 and m > 1:
            self.modulus = np.repeat(self.modulus, m, axis=0)
        if self.modulus.shape != (m, self.grid.n_elements):
            raise InvalidParameterError(
                "modulus must be (n_elements,) or (n_constraints, n_elements)"
            )
        if self.penal < 1:
            raise InvalidParameterError("penal must be >= 1")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be >= 1")
        for dof, u_max in self.constraints:
            if u_max <= 0:
                raise InvalidParameterError(f"allowable displacement must be > 0, got {u_max}")
            if not 0 <= dof < self.grid.ndof:
                raise InvalidParameterError(f"constraint dof {dof} out of range")


@dataclass
class DtoResult:
    densities: DensityField
    history: list[dict] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def volume_fraction(self) -> float:
        return self.densities.volume_fraction


def _evaluate(problem: DtoProblem, kernel: FilterKernel, raw: np.ndarray):
    """FEA values and raw-space gradients of the objective and constraints."""
    grid = problem.grid
    phys = kernel.apply(raw)
    densities = DensityField(raw=raw, physical=phys, rho_min=problem.rho_min)

    n_act = grid.n_active
    vf = float(np.mean(phys))
    dvf = kernel.chain_gradient(np.full(n_act, 1.0 / n_act))

    m = len(problem.constraints)
    g = np.empty(m)
    dg = np.empty((m, n_act))
    u_signed = np.empty(m)

    # one solve per distinct modulus field; all constraints share it when equal
    sols = {}
    for j, (dof, u_max) in enumerate(problem.constraints):
        key = problem.modulus[j].tobytes()
        if key not in sols:
            spec = ElasticitySpec(problem.poisson_ratio, problem.modulus[j])
            sols[key] = (fea.assemble_solve(grid, densities, spec, problem.penal), spec)
        sol, spec = sols[key]
        u = fea.displacement_at(sol, dof)
        u_signed[j] = u
        sign = 1.0 if u >= 0 else -1.0
        g[j] = abs(u) / u_max - 1.0
        grad_phys = sign * fea.adjoint_gradient(grid, densities, spec, problem.penal, sol, dof)
        dg[j] = kernel.chain_gradient(grad_phys) / u_max

    return densities, vf, dvf, g, dg, u_signed


def run_dto(
    problem: DtoProblem,
    start: np.ndarray | float = 0.5,
    kernel: FilterKernel | None = None,
) -> DtoResult:
    """Minimize volume fraction s.t. |u_dof| <= u0 for each constraint.

    Terminates when the largest raw-density change between consecutive
    iterations drops below ``d_max`` or the iteration cap is reached (the
    latter returns a result flagged non-converged).
    """
    grid = problem.grid
    if kernel is None:
        kernel = FilterKernel.build(grid, problem.rmin)
    n = grid.n_active
    if np.isscalar(start):
        x = np.full(n, float(start))
    else:
        x = np.asarray(start, float).copy()
        if x.shape != (n,):
            raise InvalidParameterError(f"start vector must have length {n}")
    x = np.clip(x, problem.rho_min, 1.0)

    xmin = np.full(n, problem.rho_min)
    xmax = np.ones(n)
    state = MmaState(n=n)
    history: list[dict] = []
    converged = False
    it = 0

    for it in range(1, problem.max_iter + 1):
        densities, vf, dvf, g, dg, u_signed = _evaluate(problem, kernel, x)
        history.append(
            {
                "iteration": it,
                "volume_fraction": vf,
                "constraints": g.tolist(),
                "displacements": u_signed.tolist(),
            }
        )
        xnew = mma_step(state, x, vf, dvf, g, dg, xmin, xmax)
        change = float(np.max(np.abs(xnew - x)))
        x = xnew
        if change < problem.d_max:
            converged = True
            break

    densities, vf, _, g, _, u_signed = _evaluate(problem, kernel, x)
    history.append(
        {
            "iteration": it + 1,
            "volume_fraction": vf,
            "constraints": g.tolist(),
            "displacements": u_signed.tolist(),
            "final": True,
        }
    )
    return DtoResult(densities=densities, history=history, converged=converged, iterations=it)
