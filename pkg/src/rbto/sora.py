"""Sequential Optimization and Reliability Assessment driver.

Each loop freezes the modulus field at the previous most probable point,
runs deterministic topology optimization, rebuilds one displacement
surrogate per constraint from collocation FEA solves, and relocates the
MPPs by inverse reliability analysis. The loop stops once the MPPs of two
consecutive loops agree in the infinity norm.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import chaos, fea, randfield, reliability
from .errors import InvalidParameterError
from .fea import ElasticitySpec, StructuredGrid
from .randfield import KLBasis, ModulusMarginal
from .topopt import DensityField, DtoProblem, DtoResult, FilterKernel, run_dto


@dataclass
class ReliabilityConstraint:
    """One probabilistic displacement limit: (response DOF, allowable, target beta)."""

    dof: int
    u_max: float
    beta: float

    def __post_init__(self):
        if self.u_max <= 0:
            raise InvalidParameterError("allowable displacement must be > 0")
        if self.beta < 0:
            raise InvalidParameterError("target reliability index must be >= 0")


@dataclass
class RbtoProblem:
    """Full RBTO problem definition for one grid preset."""

    grid: StructuredGrid
    marginal: ModulusMarginal
    constraints: list[ReliabilityConstraint]
    l1: float = 0.6
    l2: float = 0.6
    kl_terms: int = 2
    corr_length_mode: str = "absolute"
    kl_rescale_pointwise_variance: bool = False
    pce_degree: int = 3
    colloc_count: int = 17
    poisson_ratio: float = 0.3
    penal: float = 3.0
    rmin: float = 1.5
    dto_tol: float = 0.001
    dto_max_iter: int = 400
    sora_tol: float = 0.001
    sora_max: int = 20
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if not self.constraints:
            raise InvalidParameterError("need at least one reliability constraint")
        dofs = [c.dof for c in self.constraints]
        if len(set(dofs)) != len(dofs):
            raise InvalidParameterError("constraint DOFs must be distinct")
        if self.kl_terms < 1:
            raise InvalidParameterError("kl_terms must be >= 1")
        if self.sora_max < 1:
            raise InvalidParameterError("sora_max must be >= 1")

    def kl_basis(self) -> KLBasis:
        return randfield.basis_for_grid(
            self.grid.nx,
            self.grid.ny,
            self.l1,
            self.l2,
            truncation=self.kl_terms,
            corr_length_mode=self.corr_length_mode,
            rescale_pointwise_variance=self.kl_rescale_pointwise_variance,
        )


@dataclass
class SoraLoopRecord:
    loop: int
    volume_fraction: float
    dto_iterations: int
    dto_converged: bool
    dto_reused: bool
    mpps: list[np.ndarray]
    g_at_mpp: list[float]
    hmv_iterations: list[int]
    mpp_movement: float
    elapsed_s: float


@dataclass
class SoraState:
    """Loop counter, current design, per-constraint MPPs, and history."""

    loop: int = 0
    densities: DensityField | None = None
    mpps: list[np.ndarray] = field(default_factory=list)
    records: list[SoraLoopRecord] = field(default_factory=list)


@dataclass
class SoraResult:
    densities: DensityField
    state: SoraState
    converged: bool
    surrogates: list[chaos.ChaosSurrogate]
    basis: KLBasis

    @property
    def volume_fraction(self) -> float:
        return self.densities.volume_fraction


def realize_modulus(basis: KLBasis, marginal: ModulusMarginal, xi: np.ndarray) -> np.ndarray:
    """Per-element Young's modulus at the KL coordinates xi (deterministic)."""
    return randfield.field_to_modulus(randfield.sample_field(basis, xi), marginal)


def design_fingerprint(densities: DensityField) -> str:
    return hashlib.sha256(np.ascontiguousarray(densities.physical).tobytes()).hexdigest()[:16]


def collocation_responses(
    grid: StructuredGrid,
    densities: DensityField,
    basis: KLBasis,
    marginal: ModulusMarginal,
    points: np.ndarray,
    dofs: list[int],
    poisson_ratio: float,
    penal: float,
) -> np.ndarray:
    """|u_dof| at each collocation point; shape (n_points, n_dofs).

    One FEA solve per collocation point, shared across all response DOFs.
    """
    out = np.empty((points.shape[0], len(dofs)))
    for j, xi in enumerate(points):
        modulus = realize_modulus(basis, marginal, xi)
        spec = ElasticitySpec(poisson_ratio, modulus)
        sol = fea.assemble_solve(grid, densities, spec, penal)
        for c, dof in enumerate(dofs):
            out[j, c] = abs(fea.displacement_at(sol, dof))
    return out


def run_sora(problem: RbtoProblem) -> SoraResult:
    """Run the SORA loop chain to MPP stabilization.

    Loop 1 starts the deterministic optimization from a uniform half-density
    design and the modulus field at the mean point; later loops warm-start
    from the previous optimum. When the realized fields of a loop match the
    previous loop exactly, the deterministic solve is reused (determinism
    makes re-running it pure waste).
    """
    grid = problem.grid
    basis = problem.kl_basis()
    hermite = chaos.hermite_terms(problem.kl_terms, problem.pce_degree)
    colloc = chaos.collocation_points(hermite, problem.colloc_count)
    kernel = FilterKernel.build(grid, problem.rmin)

    m = len(problem.constraints)
    xi_prev = [np.zeros(problem.kl_terms) for _ in range(m)]
    state = SoraState()
    start = 0.5
    fields_prev: np.ndarray | None = None
    dto_result: DtoResult | None = None
    surrogates: list[chaos.ChaosSurrogate] = []
    converged = False

    for k in range(1, problem.sora_max + 1):
        t0 = time.perf_counter()
        fields = np.stack([realize_modulus(basis, problem.marginal, xi) for xi in xi_prev])

        reused = (
            dto_result is not None
            and fields_prev is not None
            and np.array_equal(fields, fields_prev)
        )
        if not reused:
            dto_problem = DtoProblem(
                grid=grid,
                modulus=fields,
                constraints=[(c.dof, c.u_max) for c in problem.constraints],
                poisson_ratio=problem.poisson_ratio,
                penal=problem.penal,
                rmin=problem.rmin,
                d_max=problem.dto_tol,
                max_iter=problem.dto_max_iter,
            )
            dto_result = run_dto(dto_problem, start=start, kernel=kernel)
        fields_prev = fields
        densities = dto_result.densities
        if problem.warm_start:
            start = densities.raw.copy()

        fingerprint = design_fingerprint(densities)
        responses = collocation_responses(
            grid,
            densities,
            basis,
            problem.marginal,
            colloc.points,
            [c.dof for c in problem.constraints],
            problem.poisson_ratio,
            problem.penal,
        )
        surrogates = []
        xi_new: list[np.ndarray] = []
        g_values: list[float] = []
        hmv_iters: list[int] = []
        for c, constraint in enumerate(problem.constraints):
            surrogate = chaos.fit(
                colloc,
                responses[:, c],
                hermite,
                dof=constraint.dof,
                design_hash=fingerprint,
            )
            surrogates.append(surrogate)
            limit_state = reliability.LimitState(surrogate, constraint.u_max)
            mpp = reliability.hmv_search(limit_state, constraint.beta, psi0=xi_prev[c])
            xi_new.append(mpp.xi)
            g_values.append(mpp.g_value)
            hmv_iters.append(mpp.iterations)

        movement = max(
            float(np.max(np.abs(xi_new[c] - xi_prev[c]))) for c in range(m)
        )
        state.loop = k
        state.densities = densities
        state.mpps = xi_new
        state.records.append(
            SoraLoopRecord(
                loop=k,
                volume_fraction=densities.volume_fraction,
                dto_iterations=dto_result.iterations,
                dto_converged=dto_result.converged,
                dto_reused=reused,
                mpps=[x.copy() for x in xi_new],
                g_at_mpp=g_values,
                hmv_iterations=hmv_iters,
                mpp_movement=movement,
                elapsed_s=time.perf_counter() - t0,
            )
        )
        xi_prev = xi_new
        if k >= 2 and movement < problem.sora_tol:
            converged = True
            break

    return SoraResult(
        densities=state.densities,
        state=state,
        converged=converged,
        surrogates=surrogates,
        basis=basis,
    )
