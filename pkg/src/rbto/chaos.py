"""Stochastic response surface: probabilists' Hermite basis, density-ranked
collocation points, least-squares fitting, and analytic evaluation/gradients."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.polynomial.hermite_e import hermegauss

from .errors import IllPosedFitError, InvalidParameterError


def _multi_indices(n: int, p: int) -> list[tuple[int, ...]]:
    """Basis exponents ordered by degree: pure powers by variable, then mixed."""
    out: list[tuple[int, ...]] = [(0,) * n]
    for d in range(1, p + 1):
        pure = []
        for var in range(n):
            idx = [0] * n
            idx[var] = d
            pure.append(tuple(idx))
        mixed = sorted(
            idx
            for idx in itertools.product(range(d + 1), repeat=n)
            if sum(idx) == d and max(idx) < d
        )
        out.extend(pure)
        out.extend(mixed)
    return out


def _herme_val(k: int, x: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite He_k via the three-term recurrence."""
    x = np.asarray(x, float)
    if k == 0:
        return np.ones_like(x)
    prev, cur = np.ones_like(x), x.copy()
    for j in range(1, k):
        prev, cur = cur, x * cur - j * prev
    return cur


@dataclass
class HermiteBasis:
    """Multidimensional probabilists' Hermite basis of degree p in n variables."""

    n: int
    p: int
    indices: list[tuple[int, ...]]

    @property
    def n_terms(self) -> int:
        return len(self.indices)

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        """Rows are basis-term values at each point; points shape (m, n)."""
        points = np.atleast_2d(np.asarray(points, float))
        if points.shape[1] != self.n:
            raise InvalidParameterError(
                f"points must have {self.n} columns, got {points.shape[1]}"
            )
        cols = []
        for idx in self.indices:
            term = np.ones(points.shape[0])
            for var, k in enumerate(idx):
                if k:
                    term = term * _herme_val(k, points[:, var])
            cols.append(term)
        return np.stack(cols, axis=1)

    def gradient_matrix(self, point: np.ndarray) -> np.ndarray:
        """(n_terms, n) array of d(term)/d(alpha_var) at one point; He_k' = k He_{k-1}."""
        point = np.asarray(point, float)
        vals = [[_herme_val(k, point[var : var + 1])[0] for k in range(self.p + 1)] for var in range(self.n)]
        grad = np.zeros((self.n_terms, self.n))
        for t, idx in enumerate(self.indices):
            for var in range(self.n):
                k = idx[var]
                if k == 0:
                    continue
                g = k * vals[var][k - 1]
                for other in range(self.n):
                    if other != var and idx[other]:
                        g *= vals[other][idx[other]]
                grad[t, var] = g
        return grad

    def norms_squared(self) -> np.ndarray:
        """Gaussian L2 norms ||term||^2 = prod k_i! for each basis term."""
        return np.array([math.prod(math.factorial(k) for k in idx) for idx in self.indices], float)


def hermite_terms(n: int, p: int) -> HermiteBasis:
    """Hermite product basis; for n=2, p=3 the ten classical terms in order."""
    if n < 1 or p < 1:
        raise InvalidParameterError("need n >= 1 and p >= 1")
    return HermiteBasis(n=n, p=p, indices=_multi_indices(n, p))


@dataclass
class CollocationSet:
    """Standard-normal-space evaluation points for surrogate regression."""

    points: np.ndarray  # (count, n)

    @property
    def count(self) -> int:
        return self.points.shape[0]


def collocation_points(basis: HermiteBasis, count: int = 17) -> CollocationSet:
    """Density-ranked tensor-root collocation points.

    Candidates are the n-fold tensor product of {0} and the roots of the
    degree-(p+1) probabilists' Hermite polynomial, ranked by descending
    standard-normal joint density (ties broken by lexicographic coordinate
    order); the top ``count`` are kept.
    """
    if count < basis.n_terms:
        raise InvalidParameterError(
            f"count must be at least the {basis.n_terms} basis terms, got {count}"
        )
    roots = hermegauss(basis.p + 1)[0]
    axis = np.sort(np.concatenate([[0.0], roots]))
    pool = np.array(list(itertools.product(axis, repeat=basis.n)))
    if count > pool.shape[0]:
        raise InvalidParameterError(
            f"count {count} exceeds the candidate pool of {pool.shape[0]} points"
        )
    r2 = np.sum(pool**2, axis=1)
    # lexsort: last key is primary, so order by density then coordinates
    order = np.lexsort(tuple(pool[:, v] for v in reversed(range(basis.n))) + (r2,))
    return CollocationSet(points=pool[order[:count]])


@dataclass
class ChaosSurrogate:
    """Fitted Hermite expansion of one scalar structural response."""

    basis: HermiteBasis
    coefficients: np.ndarray
    residual_norm: float
    dof: int | None = None
    design_hash: str | None = None


def fit(
    points: CollocationSet,
    responses: np.ndarray,
    basis: HermiteBasis,
    dof: int | None = None,
    design_hash: str | None = None,
) -> ChaosSurrogate:
    """Least-squares coefficients of V a = z over the collocation points."""
    z = np.asarray(responses, float)
    if z.shape != (points.count,):
        raise InvalidParameterError(
            f"responses must align with the {points.count} points, got {z.shape}"
        )
    v = basis.design_matrix(points.points)
    coef, _, rank, _ = np.linalg.lstsq(v, z, rcond=None)
    if rank < basis.n_terms:
        _, _, piv = scipy.linalg.qr(v, pivoting=True)
        bad = sorted(int(c) for c in piv[rank:])
        names = [basis.indices[c] for c in bad]
        raise IllPosedFitError(
            f"design matrix rank {rank} < {basis.n_terms} terms; "
            f"unresolvable columns {bad} (exponents {names})",
            columns=bad,
        )
    residual = float(np.linalg.norm(v @ coef - z))
    return ChaosSurrogate(
        basis=basis,
        coefficients=coef,
        residual_norm=residual,
        dof=dof,
        design_hash=design_hash,
    )


def evaluate(surrogate: ChaosSurrogate, xi: np.ndarray) -> float:
    """Surrogate value at one standard-normal point."""
    row = surrogate.basis.design_matrix(np.asarray(xi, float)[None, :])
    return float(row[0] @ surrogate.coefficients)


def evaluate_batch(surrogate: ChaosSurrogate, xi: np.ndarray) -> np.ndarray:
    """Surrogate values at many points, shape (m, n) -> (m,)."""
    return surrogate.basis.design_matrix(xi) @ surrogate.coefficients


def gradient(surrogate: ChaosSurrogate, xi: np.ndarray) -> np.ndarray:
    """Exact analytic gradient of the expansion at one point."""
    xi = np.asarray(xi, float)
    if xi.shape != (surrogate.basis.n,):
        raise InvalidParameterError(f"xi must have length {surrogate.basis.n}")
    return surrogate.coefficients @ surrogate.basis.gradient_matrix(xi)


def surrogate_mean(surrogate: ChaosSurrogate) -> float:
    """Mean under standard-normal inputs: the constant coefficient."""
    return float(surrogate.coefficients[0])


def surrogate_std(surrogate: ChaosSurrogate) -> float:
    """Standard deviation from coefficients and the known Hermite norms."""
    norms = surrogate.basis.norms_squared()
    var = float(np.sum(surrogate.coefficients[1:] ** 2 * norms[1:]))
    return math.sqrt(var)
