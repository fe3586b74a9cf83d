"""KL expansion and marginal-transform tests.

The eigen-oracle here is a hand-coded cyclic Jacobi rotation solver,
independent of the LAPACK path used by the implementation.
"""

import numpy as np
import pytest
from scipy.special import ndtr

from rbto.errors import InvalidParameterError
from rbto.randfield import (
    Covariance1D,
    ModulusMarginal,
    basis_for_grid,
    field_to_modulus,
    kl_1d,
    kl_product,
    sample_field,
)


def jacobi_eigh(a, sweeps=60, tol=1e-14):
    """Hand-coded cyclic Jacobi eigen-solver for symmetric matrices (oracle)."""
    a = np.array(a, float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-30:
                    continue
                theta = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


class TestKl1d:
    @pytest.mark.parametrize("l,L,n", [(0.6, 3.0, 3), (0.6, 60.0, 60), (2.5, 10.0, 25), (36.0, 60.0, 60)])
    def test_trace_identity(self, l, L, n):
        vals, _ = kl_1d(Covariance1D(l, L, n))
        assert vals.sum() == pytest.approx(L, abs=1e-8)

    def test_matches_jacobi_oracle_3x3(self):
        cov = Covariance1D(0.6, 3.0, 3)
        vals, vecs = kl_1d(cov)
        x = cov.abscissae
        h = 1.0
        mat = h * np.exp(-np.abs(x[:, None] - x[None, :]) / 0.6)
        oracle_vals, oracle_vecs = jacobi_eigh(mat)
        np.testing.assert_allclose(vals, oracle_vals, atol=1e-10)
        for k in range(3):
            ov = oracle_vecs[:, k] / np.sqrt(h)
            if ov[np.argmax(np.abs(ov))] < 0:
                ov = -ov
            np.testing.assert_allclose(vecs[:, k], ov, atol=1e-10)

    def test_first_eigenvector_positive_and_symmetric(self):
        vals, vecs = kl_1d(Covariance1D(0.8, 10.0, 40))
        e1 = vecs[:, 0]
        assert np.all(e1 > 0)  # no sign change
        np.testing.assert_allclose(e1, e1[::-1], atol=1e-6)

    def test_discrete_orthonormality(self):
        cov = Covariance1D(1.3, 7.0, 21)
        _, vecs = kl_1d(cov)
        h = 7.0 / 21
        gram = vecs.T @ vecs * h
        np.testing.assert_allclose(gram, np.eye(21), atol=1e-8)

    def test_eigenvalues_sorted_positive(self):
        vals, _ = kl_1d(Covariance1D(0.6, 20.0, 20))
        assert np.all(np.diff(vals) <= 1e-12)
        assert vals.min() > 0

    def test_invalid_parameters(self):
        with pytest.raises(InvalidParameterError):
            Covariance1D(-1.0, 3.0, 3)
        with pytest.raises(InvalidParameterError):
            Covariance1D(0.5, 3.0, 1)


def full_product_spectrum(kx, ky):
    """Enumeration oracle: every product eigenpair, sorted descending."""
    vals_x, _ = kx
    vals_y, _ = ky
    out = [
        (vals_x[i] * vals_y[j], i, j)
        for i in range(len(vals_x))
        for j in range(len(vals_y))
    ]
    return sorted(out, key=lambda t: (-t[0], t[1], t[2]))


class TestKlProduct:
    def test_top_eigenvalue_is_product_of_maxima(self):
        kx = kl_1d(Covariance1D(0.6, 6.0, 6))
        ky = kl_1d(Covariance1D(0.9, 4.0, 4))
        basis = kl_product(kx, ky, 1)
        assert basis.eigenvalues[0] == kx[0][0] * ky[0][0]

    def test_mbb_top_two_match_enumeration_oracle(self):
        kx = kl_1d(Covariance1D(0.6, 60.0, 60))
        ky = kl_1d(Covariance1D(0.6, 20.0, 20))
        basis = kl_product(kx, ky, 2)
        oracle = full_product_spectrum(kx, ky)
        for k in range(2):
            assert basis.eigenvalues[k] == pytest.approx(oracle[k][0], rel=1e-12)
            assert basis.pair_indices[k] == (oracle[k][1], oracle[k][2])

    def test_retained_modes_orthonormal(self):
        kx = kl_1d(Covariance1D(0.7, 8.0, 8))
        ky = kl_1d(Covariance1D(0.7, 5.0, 5))
        basis = kl_product(kx, ky, 6)
        h2 = (8.0 / 8) * (5.0 / 5)
        gram = basis.modes @ basis.modes.T * h2
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-8)

    def test_full_spectrum_reconstructs_kernel(self):
        nx, ny = 8, 6
        kx = kl_1d(Covariance1D(1.1, float(nx), nx))
        ky = kl_1d(Covariance1D(0.8, float(ny), ny))
        basis = kl_product(kx, ky, nx * ny)
        recon = np.einsum("k,ke,kf->ef", basis.eigenvalues, basis.modes, basis.modes)
        xs = (np.arange(nx) + 0.5)
        ys = (np.arange(ny) + 0.5)
        pts = np.array([(x, y) for x in xs for y in ys])
        dx = np.abs(pts[:, None, 0] - pts[None, :, 0])
        dy = np.abs(pts[:, None, 1] - pts[None, :, 1])
        kernel = np.exp(-dx / 1.1) * np.exp(-dy / 0.8)
        np.testing.assert_allclose(recon, kernel, atol=1e-6)

    def test_truncation_energy_monotone(self):
        kx = kl_1d(Covariance1D(0.6, 10.0, 10))
        ky = kl_1d(Covariance1D(0.6, 10.0, 10))
        sums = [kl_product(kx, ky, m).eigenvalues.sum() for m in (1, 2, 5, 20, 100)]
        assert all(s1 <= s2 + 1e-12 for s1, s2 in zip(sums, sums[1:]))
        assert sums[-1] <= 10.0 * 10.0 + 1e-8  # bounded by the 2-D trace

    def test_truncation_bounds(self):
        kx = kl_1d(Covariance1D(0.6, 3.0, 3))
        with pytest.raises(InvalidParameterError):
            kl_product(kx, kx, 0)
        with pytest.raises(InvalidParameterError):
            kl_product(kx, kx, 10)


class TestSampleField:
    def _basis(self):
        return basis_for_grid(6, 4, 0.9, 0.9, truncation=3)

    def test_zero_xi_gives_zero_field(self):
        basis = self._basis()
        np.testing.assert_array_equal(sample_field(basis, np.zeros(3)), np.zeros(24))

    def test_linearity(self):
        basis = self._basis()
        rng = np.random.default_rng(2)
        x1, x2 = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(
            sample_field(basis, x1 + x2),
            sample_field(basis, x1) + sample_field(basis, x2),
            rtol=1e-12,
            atol=1e-15,
        )

    def test_monte_carlo_pointwise_variance(self):
        basis = self._basis()
        rng = np.random.default_rng(7)
        n = 100_000
        draws = rng.standard_normal((n, 3))
        fields = (np.sqrt(basis.eigenvalues) * draws) @ basis.modes
        emp_var = fields.var(axis=0, ddof=1)
        expect = np.einsum("k,ke->e", basis.eigenvalues, basis.modes**2)
        # var of the sample variance of a normal: 2 sigma^4 / (n-1)
        se = np.sqrt(2.0 / (n - 1)) * expect
        assert np.all(np.abs(emp_var - expect) < 3 * se)

    def test_rescale_gives_unit_pointwise_variance(self):
        basis = basis_for_grid(6, 4, 0.9, 0.9, truncation=3, rescale_pointwise_variance=True)
        var = np.einsum(
            "k,ke->e", basis.eigenvalues, (basis.modes * basis.pointwise_scale[None, :]) ** 2
        )
        np.testing.assert_allclose(var, 1.0, rtol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            sample_field(self._basis(), np.zeros(5))

    def test_corr_length_modes(self):
        absolute = basis_for_grid(10, 10, 0.6, 0.6, 2, "absolute")
        relative = basis_for_grid(10, 10, 0.6, 0.6, 2, "relative")
        assert relative.eigenvalues[0] > absolute.eigenvalues[0]
        with pytest.raises(InvalidParameterError):
            basis_for_grid(10, 10, 0.6, 0.6, 2, "diagonal")


class TestFieldToModulus:
    def test_zero_field_gives_midpoint(self):
        marg = ModulusMarginal(1.0, 1.5)
        np.testing.assert_allclose(field_to_modulus(np.zeros(5), marg), 1.25)

    def test_limits_and_open_interval(self):
        marg = ModulusMarginal(1.0, 1.5)
        e = field_to_modulus(np.array([-40.0, -1.0, 0.0, 1.0, 40.0]), marg)
        assert np.all(e > 1.0) and np.all(e < 1.5)
        assert e[-1] == pytest.approx(1.5, abs=1e-12)

    def test_phi_one_value(self):
        marg = ModulusMarginal(1.0, 1.5)
        e = field_to_modulus(np.array([1.0]), marg)[0]
        assert e == pytest.approx(1.0 + 0.5 * ndtr(1.0), abs=1e-12)
        assert round(e, 4) == 1.4207

    def test_strictly_increasing_preserves_order(self):
        marg = ModulusMarginal(0.5, 2.0)
        y = np.random.default_rng(3).normal(size=50)
        e = field_to_modulus(y, marg)
        assert np.array_equal(np.argsort(y), np.argsort(e))

    def test_invalid_marginal(self):
        with pytest.raises(InvalidParameterError):
            ModulusMarginal(1.5, 1.0)
        with pytest.raises(InvalidParameterError):
            ModulusMarginal(0.0, 1.0)
