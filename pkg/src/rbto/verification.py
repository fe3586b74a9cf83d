"""Latin-hypercube Monte Carlo on the true FEA model or the chaos surrogate.

Produces failure probabilities, displacement moments, and empirical CDFs for
a fixed converged design. Full-FEA sampling is embarrassingly parallel; the
chunked reduction order is fixed so results are identical for any worker
count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import chaos, fea
from .chaos import ChaosSurrogate
from .errors import InvalidParameterError, NumericError, StateMismatchError
from .fea import ElasticitySpec, StructuredGrid
from .randfield import KLBasis, ModulusMarginal
from .sora import design_fingerprint, realize_modulus
from .topopt import DensityField

SOURCES = ("full-fea", "surrogate")


def lhs_sample(count: int, dim: int, seed: int) -> np.ndarray:
    """Latin-hypercube standard-normal sample, one stratum per sample per dim.

    Uniform strata are jittered within themselves, independently permuted
    across dimensions, then mapped through the inverse normal CDF. Fully
    deterministic in the seed.
    """
    if count < 1 or dim < 1:
        raise InvalidParameterError("count and dim must be >= 1")
    rng = np.random.default_rng(seed)
    u = np.empty((count, dim))
    for d in range(dim):
        strata = rng.permutation(count)
        u[:, d] = (strata + rng.random(count)) / count
    return ndtri(u)


@dataclass
class McsReport:
    """Per-sample displacement store with derived failure statistics."""

    source: str
    count: int
    seed: int
    dof: int
    u_max: float
    displacements: np.ndarray  # sample order, NaN marks invalid samples
    p_f: float
    mean: float
    std: float
    n_invalid: int
    design_hash: str

    def cdf_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted displacements with empirical CDF values (i+1)/n_valid."""
        valid = np.sort(self.displacements[~np.isnan(self.displacements)])
        return valid, np.arange(1, valid.size + 1) / valid.size

    def tail_points(self, k: int = 10) -> tuple[np.ndarray, np.ndarray]:
        """The k largest displacements (the failure tail of the CDF)."""
        x, f = self.cdf_points()
        return x[-k:], f[-k:]


# module-level context for forked workers
_CTX: dict = {}


def _init_worker(grid, physical, rho_min, basis, marginal, poisson_ratio, penal):
    _CTX["grid"] = grid
    _CTX["densities"] = DensityField(raw=physical, physical=physical, rho_min=rho_min)
    _CTX["basis"] = basis
    _CTX["marginal"] = marginal
    _CTX["poisson_ratio"] = poisson_ratio
    _CTX["penal"] = penal


def _fea_chunk(args) -> np.ndarray:
    samples, dof = args
    grid = _CTX["grid"]
    densities = _CTX["densities"]
    out = np.empty(samples.shape[0])
    for i, xi in enumerate(samples):
        modulus = realize_modulus(_CTX["basis"], _CTX["marginal"], xi)
        try:
            sol = fea.assemble_solve(
                grid, densities, ElasticitySpec(_CTX["poisson_ratio"], modulus), _CTX["penal"]
            )
            out[i] = abs(fea.displacement_at(sol, dof))
        except (NumericError, fea.StructuralSingularityError):
            out[i] = np.nan
    return out


def run_mcs(
    grid: StructuredGrid,
    densities: DensityField,
    basis: KLBasis,
    marginal: ModulusMarginal,
    constraint: tuple[int, float],
    count: int,
    seed: int,
    source: str = "full-fea",
    poisson_ratio: float = 0.3,
    penal: float = 3.0,
    surrogate: ChaosSurrogate | None = None,
    workers: int | None = None,
) -> McsReport:
    """LHS Monte Carlo of |u_dof| for a fixed design.

    ``source`` selects one full FEA solve per sample or evaluation of the
    fitted chaos surrogate. Invalid FEA samples are excluded and counted; more
    than 0.1% invalid aborts the report.
    """
    dof, u_max = int(constraint[0]), float(constraint[1])
    if u_max < 0:
        raise InvalidParameterError("allowable displacement must be >= 0")
    if source not in SOURCES:
        raise InvalidParameterError(f"source must be one of {SOURCES}, got {source!r}")
    samples = lhs_sample(count, basis.truncation, seed)

    if source == "surrogate":
        if surrogate is None:
            raise InvalidParameterError("surrogate source requires a fitted surrogate")
        disp = np.abs(chaos.evaluate_batch(surrogate, samples))
    else:
        if workers is None:
            workers = int(os.environ.get("RBTO_MCS_WORKERS", str(os.cpu_count() or 1)))
        workers = max(1, min(workers, os.cpu_count() or 1))
        init_args = (
            grid,
            densities.physical,
            densities.rho_min,
            basis,
            marginal,
            poisson_ratio,
            penal,
        )
        chunk = max(250, count // (8 * workers) + 1)
        bounds = [(i, min(i + chunk, count)) for i in range(0, count, chunk)]
        if workers == 1:
            _init_worker(*init_args)
            parts = [_fea_chunk((samples[i0:i1], dof)) for i0, i1 in bounds]
        else:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker, initargs=init_args
            ) as pool:
                parts = list(pool.map(_fea_chunk, [(samples[i0:i1], dof) for i0, i1 in bounds]))
        disp = np.concatenate(parts)

    invalid = np.isnan(disp)
    n_invalid = int(invalid.sum())
    if n_invalid > 0.001 * count:
        raise NumericError(f"{n_invalid} of {count} samples failed; aborting report")
    valid = disp[~invalid]
    return McsReport(
        source=source,
        count=count,
        seed=seed,
        dof=dof,
        u_max=u_max,
        displacements=disp,
        p_f=float(np.mean(valid > u_max)),
        mean=float(np.mean(valid)),
        std=float(np.std(valid, ddof=1)),
        n_invalid=n_invalid,
        design_hash=design_fingerprint(densities),
    )


@dataclass
class ReportComparison:
    delta_mean: float
    delta_std: float
    delta_p_f: float
    rel_mean: float
    rel_std: float
    rel_p_f: float
    max_cdf_gap: float


def compare_reports(a: McsReport, b: McsReport) -> ReportComparison:
    """Componentwise gaps between two reports of the same design/constraint."""
    if (a.design_hash, a.dof, a.u_max) != (b.design_hash, b.dof, b.u_max):
        raise StateMismatchError("reports cover different designs or constraints")

    xa, fa = a.cdf_points()
    xb, fb = b.cdf_points()
    grid_pts = np.concatenate([xa, xb])
    fa_on = np.searchsorted(xa, grid_pts, side="right") / xa.size
    fb_on = np.searchsorted(xb, grid_pts, side="right") / xb.size
    gap = float(np.max(np.abs(fa_on - fb_on)))

    def rel(d, ref):
        return abs(d) / abs(ref) if ref != 0 else (0.0 if d == 0 else float("inf"))

    return ReportComparison(
        delta_mean=a.mean - b.mean,
        delta_std=a.std - b.std,
        delta_p_f=a.p_f - b.p_f,
        rel_mean=rel(a.mean - b.mean, b.mean),
        rel_std=rel(a.std - b.std, b.std),
        rel_p_f=rel(a.p_f - b.p_f, b.p_f) if b.p_f else 0.0,
        max_cdf_gap=gap,
    )
