"""Karhunen-Loeve discretization of the Gaussian modulus field.

The zero-mean, unit-variance field has the separable exponential covariance
exp(-|dx|/l1) * exp(-|dy|/l2), so 2-D eigenpairs are products of 1-D
Nystrom eigenpairs computed at element midpoints. Field values map to
Young's modulus through the standard normal CDF and a uniform marginal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import InvalidParameterError, NumericError


@dataclass
class Covariance1D:
    """Exponential covariance exp(-|x1-x2|/l) on [0, L], collocated at n midpoints."""

    corr_length: float
    domain_length: float
    n: int

    def __post_init__(self):
        if self.corr_length <= 0 or self.domain_length <= 0:
            raise InvalidParameterError("correlation and domain lengths must be positive")
        if self.n < 2:
            raise InvalidParameterError("need at least two collocation abscissae")

    @property
    def abscissae(self) -> np.ndarray:
        h = self.domain_length / self.n
        return (np.arange(self.n) + 0.5) * h


def kl_1d(cov: Covariance1D) -> tuple[np.ndarray, np.ndarray]:
    """All n Nystrom eigenpairs of the 1-D kernel, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with eigenvectors[:, k] holding the
    k-th eigenfunction at the midpoints, normalized to sum(e^2) * h = 1 and
    sign-fixed so the largest-magnitude component is positive.
    """
    x = cov.abscissae
    h = cov.domain_length / cov.n
    kernel = np.exp(-np.abs(x[:, None] - x[None, :]) / cov.corr_length)
    try:
        vals, vecs = scipy.linalg.eigh(h * kernel)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"1-D KL eigensolve failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order] / np.sqrt(h)  # orthonormal under midpoint weights
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0
    return vals, vecs


@dataclass
class KLBasis:
    """Truncated 2-D KL basis evaluated at the element centroids.

    ``modes[k]`` holds sqrt-eigenvalue-free eigenfunction values for every
    grid element (column-major element order). ``pair_indices[k]`` records
    which (i, j) product of 1-D modes produced the k-th 2-D mode. The mean
    field is identically zero. When ``pointwise_scale`` is set, sampled
    fields are rescaled to unit pointwise variance.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray  # (M, n_elements)
    pair_indices: list[tuple[int, int]]
    mean: float = 0.0
    pointwise_scale: np.ndarray | None = None
    _full_trace: float = field(default=0.0, repr=False)

    @property
    def truncation(self) -> int:
        return int(self.eigenvalues.size)


def kl_product(
    kx: tuple[np.ndarray, np.ndarray],
    ky: tuple[np.ndarray, np.ndarray],
    truncation: int,
    rescale_pointwise_variance: bool = False,
) -> KLBasis:
    """Top-``truncation`` product eigenpairs of the separable 2-D kernel.

    ``kx``/``ky`` are kl_1d outputs for the two directions. Product
    eigenvalues are sorted descending with ties broken by the (i, j)
    index pair; the resulting 2-D modes are column-major over elements
    (element (ex, ey) -> ex*ny + ey).
    """
    vals_x, vecs_x = kx
    vals_y, vecs_y = ky
    nx, ny = vecs_x.shape[0], vecs_y.shape[0]
    if not 1 <= truncation <= nx * ny:
        raise InvalidParameterError(
            f"truncation must be in [1, {nx * ny}], got {truncation}"
        )
    prod = np.multiply.outer(vals_x, vals_y)  # (nx, ny)
    flat = prod.ravel()
    pairs = [(i, j) for i in range(nx) for j in range(ny)]
    order = sorted(range(flat.size), key=lambda k: (-flat[k], pairs[k]))
    keep = order[:truncation]

    eigenvalues = flat[keep]
    if eigenvalues[-1] <= 0:
        raise NumericError("retained product eigenvalue not strictly positive")
    modes = np.empty((truncation, nx * ny))
    kept_pairs = []
    for row, k in enumerate(keep):
        i, j = pairs[k]
        kept_pairs.append((i, j))
        modes[row] = np.multiply.outer(vecs_x[:, i], vecs_y[:, j]).ravel()

    scale = None
    if rescale_pointwise_variance:
        var = np.einsum("k,ke->e", eigenvalues, modes**2)
        scale = 1.0 / np.sqrt(var)
    return KLBasis(
        eigenvalues=eigenvalues,
        modes=modes,
        pair_indices=kept_pairs,
        pointwise_scale=scale,
        _full_trace=float(flat.sum()),
    )


def basis_for_grid(
    nx: int,
    ny: int,
    l1: float,
    l2: float,
    truncation: int = 2,
    corr_length_mode: str = "absolute",
    rescale_pointwise_variance: bool = False,
) -> KLBasis:
    """KL basis on an nx-by-ny unit-element grid.

    ``corr_length_mode`` selects whether l1/l2 are in element units
    ("absolute") or fractions of the domain side ("relative").
    """
    if corr_length_mode == "absolute":
        lx, ly = l1, l2
    elif corr_length_mode == "relative":
        lx, ly = l1 * nx, l2 * ny
    else:
        raise InvalidParameterError(
            f"corr_length_mode must be 'absolute' or 'relative', got {corr_length_mode!r}"
        )
    kx = kl_1d(Covariance1D(lx, float(nx), nx))
    ky = kl_1d(Covariance1D(ly, float(ny), ny))
    return kl_product(kx, ky, truncation, rescale_pointwise_variance)


def sample_field(basis: KLBasis, xi: np.ndarray) -> np.ndarray:
    """Field realization y(x_c) = sum_i sqrt(lambda_i) xi_i e_i(x_c)."""
    xi = np.asarray(xi, float)
    if xi.shape != (basis.truncation,):
        raise InvalidParameterError(
            f"xi must have length {basis.truncation}, got {xi.shape}"
        )
    y = (np.sqrt(basis.eigenvalues) * xi) @ basis.modes
    if basis.pointwise_scale is not None:
        y = y * basis.pointwise_scale
    return y


@dataclass
class ModulusMarginal:
    """Uniform marginal of the Young's modulus, bounds 0 < a < b."""

    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise InvalidParameterError(f"need 0 < a < b, got a={self.a}, b={self.b}")

    @property
    def mean(self) -> float:
        return 0.5 * (self.a + self.b)


def field_to_modulus(y: np.ndarray, marginal: ModulusMarginal) -> np.ndarray:
    """Elementwise E = a + (b - a) * Phi(y), kept strictly inside (a, b).

    Phi saturates in double precision for |y| beyond ~8, so the result is
    clamped one ulp inside the bounds to preserve the open-interval contract.
    """
    e = marginal.a + (marginal.b - marginal.a) * ndtr(np.asarray(y, float))
    return np.clip(
        e, np.nextafter(marginal.a, marginal.b), np.nextafter(marginal.b, marginal.a)
    )
