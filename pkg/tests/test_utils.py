"""Unit tests for the shared numerical helpers"""

import numpy as np
import numpy.testing as npt
import pytest


class TestFitting:
    """Power-law and exponential fits"""

    def test_exact_power_law(self):
        from blayer_verify.utils.fitting import loglog_fit

        x = np.logspace(-3, 0, 20)
        fit = loglog_fit(x, 3.0 * x ** -0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-10)
        assert fit.constant == pytest.approx(3.0, rel=1e-8)
        assert fit.ci_low == pytest.approx(-0.5, abs=1e-8)
        assert fit.ci_high == pytest.approx(-0.5, abs=1e-8)
        assert fit.points == 20
        assert not fit.unreliable

    def test_unusable_points_dropped(self):
        from blayer_verify.utils.fitting import loglog_fit

        x = np.array([0.0, 1.0, 2.0, 4.0, np.nan])
        y = np.array([1.0, 1.0, 4.0, 16.0, 1.0])
        fit = loglog_fit(x, y)
        assert fit.points == 3
        assert fit.slope == pytest.approx(2.0)

    def test_window(self):
        from blayer_verify.utils.fitting import loglog_fit

        x = np.logspace(0, 2, 30)
        y = np.where(x < 10.0, x, x ** 2 / 10.0)
        fit = loglog_fit(x, y, window=(10.0, 100.0))
        assert fit.slope == pytest.approx(2.0, abs=1e-10)
        assert fit.window == (10.0, 100.0)

    def test_degenerate_fit_is_unreliable(self):
        from blayer_verify.utils.fitting import loglog_fit

        fit = loglog_fit([1.0], [2.0])
        assert fit.unreliable
        assert np.isnan(fit.slope)

    def test_bootstrap_is_seeded(self):
        """Identical noisy inputs give identical intervals"""
        from blayer_verify.utils.fitting import loglog_fit

        rng = np.random.default_rng(7)
        x = np.logspace(0, 1, 15)
        y = x ** -1.0 * np.exp(0.05 * rng.normal(size=x.size))
        a, b = loglog_fit(x, y), loglog_fit(x, y)
        assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)
        assert a.ci_low <= a.slope <= a.ci_high

    def test_scoped_seed(self):
        from blayer_verify.utils.fitting import bootstrap_seed, loglog_fit

        rng = np.random.default_rng(3)
        x = np.logspace(0, 1, 15)
        y = x ** -0.5 * np.exp(0.05 * rng.normal(size=x.size))
        with bootstrap_seed(11):
            scoped = loglog_fit(x, y)
        explicit = loglog_fit(x, y, seed=11)
        assert (scoped.ci_low, scoped.ci_high) == (explicit.ci_low, explicit.ci_high)
        default = loglog_fit(x, y)
        assert default == loglog_fit(x, y)

    def test_oscillation_flagged(self):
        from blayer_verify.utils.fitting import loglog_fit

        x = np.linspace(1.0, 1.2, 40)
        y = 2.0 + np.sin(60.0 * x)
        assert loglog_fit(x, y, check_trend=True).unreliable

    def test_exponential_rate(self):
        from blayer_verify.utils.fitting import fit_exponential_rate

        x = np.linspace(0.0, 5.0, 11)
        theta, C = fit_exponential_rate(x, 2.0 * np.exp(-0.7 * x))
        assert theta == pytest.approx(0.7)
        assert C == pytest.approx(2.0)

    def test_envelope_constant(self):
        from blayer_verify.utils.fitting import envelope_constant

        assert envelope_constant([1.0, 2.0], [0.5, 3.0]) == pytest.approx(1.5)
        assert envelope_constant([0.0, -1.0], [1.0, 1.0]) == 0.0

    def test_spearman(self):
        from blayer_verify.utils.fitting import spearman

        assert spearman([1, 2, 3], [10, 20, 40]) == pytest.approx(1.0)
        assert np.isnan(spearman([1, 1, 1], [1, 2, 3]))


class TestLinalg:
    """Invariant subspaces and exterior powers"""

    def test_ordered_schur_selects_stable(self):
        from blayer_verify.utils.linalg import ordered_schur, stable_mask

        split = ordered_schur(np.diag([1.0, -2.0, 3.0]), stable_mask)
        assert split.k == 1
        npt.assert_allclose(np.abs(split.basis[:, 0]), [0.0, 1.0, 0.0], atol=1e-12)
        npt.assert_allclose(split.selected_block, [[-2.0]], atol=1e-12)

    def test_spectral_projector_non_normal(self):
        """The projector is oblique: it kills the other eigenvector, not its orthogonal complement"""
        from blayer_verify.utils.linalg import spectral_projector, stable_mask

        A = np.array([[-1.0, 5.0], [0.0, 2.0]])
        P = spectral_projector(A, stable_mask)
        npt.assert_allclose(P @ P, P, atol=1e-12)
        npt.assert_allclose(P @ A, A @ P, atol=1e-12)
        npt.assert_allclose(P @ [1.0, 0.0], [1.0, 0.0], atol=1e-12)
        npt.assert_allclose(P @ [5.0, 3.0], [0.0, 0.0], atol=1e-12)

    def test_block_diagonalizer(self):
        from blayer_verify.utils.linalg import block_diagonalizer, ordered_schur

        rng = np.random.default_rng(1)
        A = rng.normal(size=(4, 4))
        split = ordered_schur(A, lambda w: np.real(w) < np.median(np.real(w)))
        V, V_inv = block_diagonalizer(split)
        D = V_inv @ A @ V
        k = split.k
        npt.assert_allclose(V_inv @ V, np.eye(4), atol=1e-10)
        npt.assert_allclose(D[:k, k:], 0.0, atol=1e-10)
        npt.assert_allclose(D[k:, :k], 0.0, atol=1e-10)

    def test_left_annihilator(self):
        from blayer_verify.utils.linalg import left_annihilator

        basis = np.array([[1.0], [1j], [0.0]])
        L = left_annihilator(basis)
        assert L.shape == (2, 3)
        npt.assert_allclose(L @ basis, 0.0, atol=1e-12)

    def test_match_eigenvalues(self):
        from blayer_verify.utils.linalg import match_eigenvalues

        npt.assert_array_equal(match_eigenvalues(np.array([1.0, 2.0]), np.array([2.1, 0.9])), [1, 0])

    def test_continued_mask_follows_crossing(self):
        """A selected eigenvalue stays selected after it crosses into Re > 0"""
        import scipy.linalg as sla
        from blayer_verify.utils.linalg import continued_mask, stable_mask

        path = [np.diag([-1.0, 2.0]), np.diag([-0.2, 2.1]), np.diag([0.5, 2.2])]
        mask = continued_mask(path, stable_mask)
        w = sla.eigvals(path[-1])
        npt.assert_allclose(w[mask], [0.5])

    def test_cluster_values(self):
        from blayer_verify.utils.linalg import cluster_values

        groups = cluster_values(np.array([5.0, 1e-9, 0.0, 5.0 + 1e-9]), 1e-6)
        assert groups == [[1, 2], [0, 3]]

    def test_numerical_rank(self):
        from blayer_verify.utils.linalg import numerical_rank

        assert numerical_rank(np.diag([1.0, 1e-14]), 1e-10) == 1

    @pytest.mark.parametrize("N,k", [(3, 1), (4, 2), (3, 3)])
    def test_compound_spectrum(self, N, k):
        """Eigenvalues of the additive compound are sums of k distinct eigenvalues"""
        import itertools
        from blayer_verify.utils.linalg import binomial, compound_matrix, compound_stencil

        lam = np.arange(1.0, N + 1.0)
        rng = np.random.default_rng(3)
        S = rng.normal(size=(N, N)) + 3.0 * np.eye(N)
        G = S @ np.diag(lam) @ np.linalg.inv(S)
        stencil = compound_stencil(N, k)
        M = compound_matrix(G, stencil)
        assert M.shape == (binomial(N, k), binomial(N, k))
        expected = sorted(sum(c) for c in itertools.combinations(lam, k))
        npt.assert_allclose(sorted(np.linalg.eigvals(M).real), expected, atol=1e-8)

    def test_wedge_pairing_is_cauchy_binet(self):
        from blayer_verify.utils.linalg import compound_stencil, plucker, wedge_pairing

        rng = np.random.default_rng(5)
        Psi = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        Gamma = rng.normal(size=(2, 4))
        stencil = compound_stencil(4, 2)
        value = wedge_pairing(Gamma, plucker(Psi, stencil), stencil)
        assert value == pytest.approx(np.linalg.det(Gamma @ Psi))

    def test_real_subspace(self):
        from blayer_verify.utils.linalg import real_subspace

        basis = np.array([[1.0, 1.0], [1j, -1j], [0.0, 0.0]]) / np.sqrt(2.0)
        Q, C = real_subspace(basis)
        assert Q.shape == (3, 2)
        assert C.shape == (3, 1)
        npt.assert_allclose(np.abs(C[:, 0]), [0.0, 0.0, 1.0], atol=1e-12)


class TestQuadrature:
    """Grids, rules and norms"""

    def test_stretched_grid(self):
        from blayer_verify.utils.quadrature import stretched_grid

        x = stretched_grid(10.0, 50, 3.0)
        assert x[0] == 0.0
        assert x[-1] == pytest.approx(10.0)
        assert np.all(np.diff(x) > 0)
        assert np.diff(x)[0] < np.diff(x)[-1]
        npt.assert_allclose(stretched_grid(2.0, 4, 0.0), [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_gauss_panels_exact_for_cubics(self):
        from blayer_verify.utils.quadrature import gauss_panels

        x, w = gauss_panels(np.array([0.0, 1.0, 2.0]), 4)
        assert np.sum(w * x ** 3) == pytest.approx(4.0)

    def test_graded_breaks(self):
        from blayer_verify.utils.quadrature import graded_breaks

        npt.assert_allclose(graded_breaks(1.0, 3, 0.1), [0.0, 0.01, 0.1, 1.0])

    def test_symmetric_graded_rule(self):
        from blayer_verify.utils.quadrature import symmetric_graded_rule

        x, w = symmetric_graded_rule(1.0, 4, 6)
        npt.assert_allclose(x, -x[::-1])
        assert np.sum(w * x ** 2) == pytest.approx(2.0 / 3.0)

    def test_norms(self):
        from blayer_verify.utils.quadrature import l1_norm, l2_norm, linf_norm, lp_interpolated

        x = np.linspace(0.0, 1.0, 2001)
        u = np.column_stack((3.0 * np.ones_like(x), 4.0 * np.ones_like(x)))
        assert l1_norm(x, u) == pytest.approx(5.0)
        assert l2_norm(x, u) == pytest.approx(5.0)
        assert linf_norm(u) == pytest.approx(5.0)
        assert linf_norm(np.zeros(0)) == 0.0
        assert lp_interpolated(2.0, 7.0, np.inf) == 7.0
        assert lp_interpolated(2.0, 7.0, 2.0) == pytest.approx(2.0)

    def test_phi_functions(self):
        from blayer_verify.utils.quadrature import phi1, phi2

        z = np.array([0.0, 1e-6, 1.0, -2.0])
        npt.assert_allclose(phi1(z), [1.0, 1.0 + 5e-7, np.e - 1.0, (np.exp(-2.0) - 1.0) / -2.0], rtol=1e-10)
        npt.assert_allclose(phi2(z), [0.5, 0.5 + 1e-6 / 6.0, np.e - 2.0, (np.exp(-2.0) + 1.0) / 4.0], rtol=1e-10)


class TestWinding:
    """Argument-principle counting"""

    def test_winding_number_of_circle(self):
        from blayer_verify.utils.winding import winding_number

        t = np.linspace(0.0, 2.0 * np.pi, 50, endpoint=False)
        assert winding_number(np.exp(2j * t)) == pytest.approx(2.0)

    @pytest.mark.parametrize("zero,count", [(1.0, 1), (-1.0, 0), (0.5 + 0.5j, 1), (3.0, 0)])
    def test_half_disk_counts_zeros(self, zero, count):
        from blayer_verify.utils.winding import adaptive_winding, half_disk_path

        result = adaptive_winding(half_disk_path(2.0), lambda z: z - zero, 128)
        assert result.resolved
        assert result.rounded == count

    def test_half_disk_path_is_closed_on_contour(self):
        from blayer_verify.utils.winding import half_disk_path

        path = half_disk_path(2.0, offset=0.1, inner=0.5)
        z = path(np.linspace(0.0, 1.0, 400, endpoint=False))
        assert np.all(np.real(z) >= 0.1 - 1e-12)
        r = np.abs(z - 0.1)
        assert np.all(r <= 2.0 + 1e-12)
        assert np.all(r >= 0.5 - 1e-12)
        assert path(np.array([0.0]))[0] == pytest.approx(0.1 - 2.0j)

    def test_refinement_resolves_coarse_loop(self):
        """A loop sampled too coarsely is bisected until the phase steps are small"""
        from blayer_verify.utils.winding import adaptive_winding

        result = adaptive_winding(lambda s: np.exp(2j * np.pi * s), lambda z: z ** 3, 8, refinements=4)
        assert result.refinements_used >= 1
        assert result.rounded == 3
        assert result.resolved


class TestParallelMap:
    """Order-preserving maps"""

    @pytest.mark.parametrize("workers", [1, 3])
    def test_order_preserved(self, workers):
        from blayer_verify.utils.parallel import parallel_map

        assert parallel_map(lambda x: x * x, range(10), workers=workers) == [x * x for x in range(10)]

    def test_workers_from_settings(self):
        from blayer_verify.utils.parallel import parallel_map

        assert parallel_map(str, [1, 2]) == ["1", "2"]
