"""Hermite surrogate tests: basis terms, collocation ranking, fit, gradients."""

import math

import numpy as np
import pytest

from rbto import chaos
from rbto.chaos import (
    collocation_points,
    evaluate,
    evaluate_batch,
    fit,
    gradient,
    hermite_terms,
    surrogate_mean,
    surrogate_std,
)
from rbto.errors import IllPosedFitError, InvalidParameterError

N2P3_INDICES = [
    (0, 0),
    (1, 0), (0, 1),
    (2, 0), (0, 2), (1, 1),
    (3, 0), (0, 3), (1, 2), (2, 1),
]


class TestHermiteTerms:
    def test_n2p3_exact_listing(self):
        basis = hermite_terms(2, 3)
        assert basis.indices == N2P3_INDICES
        assert basis.n_terms == 10

    @pytest.mark.parametrize("n,p", [(1, 3), (2, 2), (2, 3), (3, 3), (4, 2)])
    def test_term_count(self, n, p):
        assert hermite_terms(n, p).n_terms == math.comb(n + p, p)

    def test_constant_first(self):
        basis = hermite_terms(3, 2)
        np.testing.assert_array_equal(
            basis.design_matrix(np.random.default_rng(0).normal(size=(4, 3)))[:, 0],
            np.ones(4),
        )

    def test_quadratic_term_value(self):
        """He_2(2) = 2^2 - 1 = 3."""
        basis = hermite_terms(2, 3)
        row = basis.design_matrix(np.array([[2.0, 0.0]]))[0]
        assert row[N2P3_INDICES.index((2, 0))] == pytest.approx(3.0, abs=1e-14)

    def test_cubic_term_value(self):
        """He_3(1) = 1 - 3 = -2."""
        basis = hermite_terms(2, 3)
        row = basis.design_matrix(np.array([[1.0, 0.0]]))[0]
        assert row[N2P3_INDICES.index((3, 0))] == pytest.approx(-2.0, abs=1e-14)

    def test_explicit_polynomials(self):
        basis = hermite_terms(2, 3)
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(50, 2))
        a1, a2 = pts[:, 0], pts[:, 1]
        expected = np.stack(
            [
                np.ones(50), a1, a2, a1**2 - 1, a2**2 - 1, a1 * a2,
                a1**3 - 3 * a1, a2**3 - 3 * a2, a1 * a2**2 - a1, a1**2 * a2 - a2,
            ],
            axis=1,
        )
        np.testing.assert_allclose(basis.design_matrix(pts), expected, atol=1e-12)

    def test_monte_carlo_orthogonality(self):
        basis = hermite_terms(2, 3)
        rng = np.random.default_rng(12)
        draws = rng.standard_normal((1_000_000, 2))
        v = basis.design_matrix(draws)
        for i in range(basis.n_terms):
            for j in range(i + 1, basis.n_terms):
                prod = v[:, i] * v[:, j]
                se = prod.std(ddof=1) / math.sqrt(prod.size)
                assert abs(prod.mean()) < 3 * se + 1e-12

    def test_invalid_args(self):
        with pytest.raises(InvalidParameterError):
            hermite_terms(0, 3)
        with pytest.raises(InvalidParameterError):
            hermite_terms(2, 0)


def he4_roots_oracle():
    """Roots of He_4(x) = x^4 - 6x^2 + 3 via the quadratic formula."""
    s = math.sqrt(6.0)
    return sorted([-math.sqrt(3 + s), -math.sqrt(3 - s), math.sqrt(3 - s), math.sqrt(3 + s)])


def ranked_pool_oracle(n, axis, count):
    """Enumeration oracle: all tensor points sorted by (radius^2, lex coords)."""
    import itertools

    pts = sorted(
        itertools.product(axis, repeat=n),
        key=lambda p: (sum(c * c for c in p),) + tuple(p),
    )
    return np.array(pts[:count])


class TestCollocationPoints:
    def test_1d_abscissae(self):
        basis = hermite_terms(2, 3)
        pts = collocation_points(basis, 25).points
        axis = np.unique(pts)
        expect = sorted(he4_roots_oracle() + [0.0])
        np.testing.assert_allclose(axis, expect, atol=1e-12)
        assert expect[3] == pytest.approx(0.7420, abs=5e-5)
        assert expect[4] == pytest.approx(2.3344, abs=5e-5)

    def test_pool_size_and_origin_first(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        np.testing.assert_array_equal(cs.points[0], [0.0, 0.0])
        full = collocation_points(basis, 25)
        assert full.count == 25
        with pytest.raises(InvalidParameterError):
            collocation_points(basis, 26)
        with pytest.raises(InvalidParameterError):
            collocation_points(basis, 9)

    def test_matches_enumeration_oracle(self):
        basis = hermite_terms(2, 3)
        axis = sorted(he4_roots_oracle() + [0.0])
        for count in (10, 13, 17, 25):
            got = collocation_points(basis, count).points
            np.testing.assert_allclose(got, ranked_pool_oracle(2, axis, count), atol=1e-12)

    def test_swap_closure_within_complete_tie_classes(self):
        """Classes kept whole are closed under (x, y) -> (y, x)."""
        basis = hermite_terms(2, 3)
        pts = collocation_points(basis, 13).points  # 13 = whole classes only
        keys = {tuple(np.round(p, 10)) for p in pts}
        for x, y in keys:
            assert (y, x) in keys

    def test_split_tie_class_is_lexicographic(self):
        basis = hermite_terms(2, 3)
        pts = collocation_points(basis, 17).points
        tail = pts[13:]
        r2 = np.sum(tail**2, axis=1)
        np.testing.assert_allclose(r2, r2[0], rtol=1e-12)  # all from one tie class
        ordered = sorted(map(tuple, tail))
        assert [tuple(p) for p in tail] == ordered


class TestFit:
    def test_exact_recovery_in_span(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        a1, a2 = cs.points[:, 0], cs.points[:, 1]
        z = 2 + 3 * a1 - a2 + 0.5 * a1 * a2
        surr = fit(cs, z, basis)
        expect = np.zeros(10)
        expect[0], expect[1], expect[2], expect[5] = 2.0, 3.0, -1.0, 0.5
        np.testing.assert_allclose(surr.coefficients, expect, atol=1e-8)
        assert surr.residual_norm <= 1e-8

    def test_constant_responses(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        surr = fit(cs, np.full(17, 4.25), basis)
        assert surr.coefficients[0] == pytest.approx(4.25, abs=1e-12)
        np.testing.assert_allclose(surr.coefficients[1:], 0.0, atol=1e-10)

    def test_out_of_span_residual_and_stability(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        z = cs.points[:, 0] ** 4
        surr = fit(cs, z, basis)
        assert surr.residual_norm > 1e-3
        # adding independent points changes coefficients below the residual scale
        rng = np.random.default_rng(8)
        extra = rng.normal(size=(8, 2))
        pts2 = chaos.CollocationSet(points=np.vstack([cs.points, extra]))
        z2 = pts2.points[:, 0] ** 4
        surr2 = fit(pts2, z2, basis)
        assert np.abs(surr2.coefficients - surr.coefficients).max() < surr.residual_norm

    def test_rank_deficiency_names_columns(self):
        basis = hermite_terms(2, 3)
        pts = chaos.CollocationSet(points=np.zeros((12, 2)))  # one repeated point
        with pytest.raises(IllPosedFitError) as err:
            fit(pts, np.zeros(12), basis)
        assert len(err.value.columns) == 9

    def test_misaligned_responses(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        with pytest.raises(InvalidParameterError):
            fit(cs, np.zeros(5), basis)

    def test_eval_reproduces_fit_within_residual(self):
        basis = hermite_terms(2, 3)
        cs = collocation_points(basis, 17)
        rng = np.random.default_rng(3)
        z = rng.normal(size=17)
        surr = fit(cs, z, basis)
        back = evaluate_batch(surr, cs.points)
        assert np.linalg.norm(back - z) <= surr.residual_norm + 1e-12


class TestEvalGrad:
    def test_pure_linear_surrogate(self):
        basis = hermite_terms(2, 3)
        coef = np.zeros(10)
        coef[1] = 1.0
        surr = chaos.ChaosSurrogate(basis=basis, coefficients=coef, residual_norm=0.0)
        xi = np.array([0.37, -1.2])
        assert evaluate(surr, xi) == pytest.approx(0.37)
        np.testing.assert_allclose(gradient(surr, xi), [1.0, 0.0], atol=1e-14)

    def test_eval_at_zero_identity(self):
        """At the origin only the constant and the centered squares contribute."""
        basis = hermite_terms(2, 3)
        rng = np.random.default_rng(10)
        coef = rng.normal(size=10)
        surr = chaos.ChaosSurrogate(basis=basis, coefficients=coef, residual_norm=0.0)
        assert evaluate(surr, np.zeros(2)) == pytest.approx(
            coef[0] - coef[3] - coef[4], rel=1e-12
        )

    def test_gradient_matches_fd_twenty_random(self):
        rng = np.random.default_rng(17)
        basis = hermite_terms(2, 3)
        for _ in range(20):
            coef = rng.normal(size=10)
            surr = chaos.ChaosSurrogate(basis=basis, coefficients=coef, residual_norm=0.0)
            xi = rng.normal(size=2)
            g = gradient(surr, xi)
            step = 1e-6
            for v in range(2):
                up, dn = xi.copy(), xi.copy()
                up[v] += step
                dn[v] -= step
                fd = (evaluate(surr, up) - evaluate(surr, dn)) / (2 * step)
                assert abs(g[v] - fd) / max(abs(fd), 1e-8) < 1e-7


class TestMoments:
    def test_norms_match_spec_listing(self):
        basis = hermite_terms(2, 3)
        np.testing.assert_array_equal(
            basis.norms_squared(), [1, 1, 1, 2, 2, 1, 6, 6, 2, 2]
        )

    def test_mean_and_std_against_monte_carlo(self):
        basis = hermite_terms(2, 3)
        rng = np.random.default_rng(23)
        coef = rng.normal(size=10)
        surr = chaos.ChaosSurrogate(basis=basis, coefficients=coef, residual_norm=0.0)
        draws = rng.standard_normal((1_000_000, 2))
        vals = evaluate_batch(surr, draws)
        se_mean = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - surrogate_mean(surr)) < 3 * se_mean
        # sample std vs analytic within 3 SE (normal-theory SE of the std)
        analytic = surrogate_std(surr)
        # fourth-moment-based SE of the sample standard deviation
        m4 = np.mean((vals - vals.mean()) ** 4)
        var_of_var = (m4 - vals.var(ddof=1) ** 2) / vals.size
        se_std = 0.5 * math.sqrt(max(var_of_var, 1e-30)) / vals.std(ddof=1)
        assert abs(vals.std(ddof=1) - analytic) < 3 * se_std
