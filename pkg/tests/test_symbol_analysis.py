"""Unit tests for the low-frequency symbol: H₀, the H/P splitting and glancing blocks"""

import numpy as np
import numpy.testing as npt
import pytest


class TestGlancingModel:
    """Model block iμ + J + a e_ν e₁ᵀ and its root fan"""

    @pytest.mark.parametrize("nu,alpha_exp,beta_exp", [(2, 0.0, -0.5), (3, -1.0 / 3.0, -2.0 / 3.0)])
    def test_bound_parameters(self, nu, alpha_exp, beta_exp):
        from blayer_verify.core.symbol_analysis import bound_parameters

        sigma = 1e-3
        alpha, beta = bound_parameters(nu, sigma)
        assert alpha == pytest.approx(sigma ** alpha_exp)
        assert beta == pytest.approx(sigma ** beta_exp)

    def test_square_root_fan(self):
        from blayer_verify.core.symbol_analysis import model_glancing_block

        sigma = 1e-2
        w = np.linalg.eigvals(model_glancing_block(2, 0.0, 1.0, sigma))
        npt.assert_allclose(sorted(np.imag(w)), [-0.1, 0.1], atol=1e-12)
        npt.assert_allclose(np.real(w), 0.0, atol=1e-12)

    @pytest.mark.parametrize("nu", [2, 3])
    def test_model_block_matches_fan(self, nu):
        """The fan prediction is exact on the model block"""
        from blayer_verify.core.symbol_analysis import glancing_expansion_check, model_glancing_block

        mu, q = 0.7, 1.5
        result = glancing_expansion_check(
            lambda s: np.linalg.eigvals(model_glancing_block(nu, mu, q, s)), [1e-2, 1e-3, 1e-4], mu, q, nu)
        assert np.max(result.errors) < 1e-6
        assert np.all(result.margins > 0)


class TestDiagonalizer:
    """T_Hg on the model glancing block"""

    def test_companion_vandermonde(self):
        """For ν = 2, ‖T⁻¹‖ = √((1 + σ)/(2σ)) with unit columns"""
        from blayer_verify.core.symbol_analysis import build_T_Hg, model_glancing_block

        sigma = 1e-4
        g = build_T_Hg(model_glancing_block(2, 0.0, 1.0, sigma), sigma, 1.0)
        assert g.companion
        assert g.residual < 1e-10
        assert g.norm_T_inv * np.sqrt(sigma) == pytest.approx(np.sqrt((1.0 + sigma) / 2.0), rel=1e-6)
        assert g.beta == pytest.approx(100.0)
        assert g.alpha == pytest.approx(1.0)

    def test_q_zero_refused(self):
        from blayer_verify.core.symbol_analysis import build_T_Hg, model_glancing_block
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            build_T_Hg(model_glancing_block(2, 0.0, 0.0, 1e-3), 1e-3, 0.0)

    def test_sigma_must_be_positive(self):
        from blayer_verify.core.symbol_analysis import build_T_Hg, model_glancing_block
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            build_T_Hg(model_glancing_block(2, 0.0, 1.0, 0.0), 0.0, 1.0)

    @pytest.mark.parametrize("nu", [2, 3])
    def test_inverse_growth_rate(self, nu):
        """‖T⁻¹‖ grows like σ^{−1 + 1/ν}"""
        from blayer_verify.core.symbol_analysis import T_bound_sweep

        sweep = T_bound_sweep(nu, 1.0, [2.0 ** -m for m in range(6, 15)])
        assert sweep["slope_T_inv"].slope == pytest.approx(-1.0 + 1.0 / nu, abs=0.05)
        assert sweep["C_T"] <= np.sqrt(nu) + 1e-9
        assert sweep["beta_over_alpha2_min"] >= 1.0 - 1e-12


class TestGlancingCoefficient:
    """q at the acoustic glancing points of subsonic isentropic NS"""

    def test_q_and_order(self, ns2d_subsonic):
        """λ = u₁ξ₁ ∓ |ξ| at ξ* = (±1/2, ±√3/2): ∂²λ = ∓3/4 and |∇̃λ| = √3/2"""
        from blayer_verify.core.hypothesis_audit import find_glancing_points
        from blayer_verify.core.symbol_analysis import q_coefficient

        system, endstate = ns2d_subsonic
        points = find_glancing_points(system, endstate)[0]
        assert len(points) == 4
        for point in points:
            coef = q_coefficient(system, endstate, point)
            assert coef.order == 2
            assert abs(coef.normal_derivative) == pytest.approx(0.75, rel=1e-3)
            assert coef.q == pytest.approx(4.0 / np.sqrt(3.0), rel=1e-3)
            assert abs(coef.a) == pytest.approx(coef.q)
            assert coef.constant == pytest.approx(2.0 / 0.75, rel=1e-3)

    def test_fan_expansion_converges(self, ns2d_subsonic):
        from blayer_verify.configs.constants import GLANCING_FAN_TOL
        from blayer_verify.core.hypothesis_audit import find_glancing_points
        from blayer_verify.core.symbol_analysis import (
            glancing_expansion_check,
            glancing_fan_eigenvalues,
            q_coefficient,
        )

        system, endstate = ns2d_subsonic
        point = find_glancing_points(system, endstate)[0][0]
        coef = q_coefficient(system, endstate, point)
        fn = glancing_fan_eigenvalues(system, endstate, point, coef)
        result = glancing_expansion_check(fn, [1e-3, 1e-4, 1e-5], float(point.xi[0]), coef.a, coef.order)
        finest = result.errors[int(np.argmin(result.sigmas))]
        assert finest <= GLANCING_FAN_TOL
        assert result.decreasing


class TestGlancingBlock:
    """T_Hg on the acoustic glancing block of H₀ itself"""

    @pytest.fixture
    def acoustic(self, ns2d_subsonic):
        from blayer_verify.core.hypothesis_audit import find_glancing_points
        from blayer_verify.core.symbol_analysis import q_coefficient

        system, endstate = ns2d_subsonic
        points = find_glancing_points(system, endstate)[0]
        return system, endstate, [(p, q_coefficient(system, endstate, p)) for p in points]

    def test_block_carries_the_fan(self, acoustic):
        from blayer_verify.core.symbol_analysis import glancing_block_matrix, glancing_fan_eigenvalues

        system, endstate, points = acoustic
        for point, coef in points:
            Q = glancing_block_matrix(system, endstate, point, coef, 1e-3)
            assert Q.shape == (2, 2)
            fan = glancing_fan_eigenvalues(system, endstate, point, coef)(1e-3)
            for w in np.linalg.eigvals(Q):
                assert np.min(np.abs(fan - w)) < 1e-9

    def test_block_is_not_in_companion_form(self, acoustic):
        from blayer_verify.core.symbol_analysis import build_T_Hg, glancing_block_matrix

        system, endstate, points = acoustic
        point, coef = points[0]
        g = build_T_Hg(glancing_block_matrix(system, endstate, point, coef, 1e-4), 1e-4, coef.q)
        assert not g.companion
        assert g.residual < 1e-8

    def test_inverse_growth_rate(self, acoustic):
        """The eigenvector diagonalizer of the true block grows like σ^{−1/2}, as on the model"""
        from blayer_verify.core.symbol_analysis import glancing_T_sweep

        system, endstate, points = acoustic
        sigmas = [2.0 ** -m for m in range(8, 17)]
        for point, coef in points:
            sweep = glancing_T_sweep(system, endstate, point, coef, sigmas)
            assert sweep["slope_T_inv"].slope == pytest.approx(-0.5, abs=0.1)
            assert np.isfinite(sweep["C_T"])

    def test_flat_point_refused(self, counterexample):
        from blayer_verify.core.hypothesis_audit import find_glancing_points
        from blayer_verify.core.symbol_analysis import glancing_T_sweep, q_coefficient
        from blayer_verify.errors import RejectedInputError

        system, endstate = counterexample
        flat = [p for p in find_glancing_points(system, endstate)[0] if p.tangential_norm < 1e-6]
        assert flat
        coef = q_coefficient(system, endstate, flat[0])
        with pytest.raises(RejectedInputError):
            glancing_T_sweep(system, endstate, flat[0], coef, [1e-3, 1e-4])


class TestLimitSymbol:
    """H₀ = −(A¹₊)⁻¹(λ A⁰₊ + Σ iξ_j A^j₊)"""

    def test_decoupled_system_closed_form(self, diag_system):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.symbol_analysis import limit_symbol_H0

        system, endstate = diag_system
        lam, xi = 0.5 + 0.2j, 0.3
        H0 = limit_symbol_H0(system, endstate, FrequencyPoint.make([xi], lam))
        expected = -np.diag([1.0 / 2.0, 1.0]) @ (lam * np.eye(2) + 1j * xi * np.diag([0.5, -0.5]))
        npt.assert_allclose(H0, expected, atol=1e-14)

    def test_symmetric_coordinates_are_similar(self, ns2d):
        """Both coordinate choices share a characteristic polynomial"""
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.symbol_analysis import limit_symbol_H0

        system, endstate = ns2d
        fp = FrequencyPoint.make([0.4], 0.3 + 0.1j)
        Hc = limit_symbol_H0(system, endstate, fp, coordinates="conservative")
        Hs = limit_symbol_H0(system, endstate, fp, coordinates="symmetric")
        npt.assert_allclose(np.poly(Hc), np.poly(Hs), atol=1e-10)

    def test_unknown_coordinates(self, ns2d):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.symbol_analysis import limit_symbol_H0
        from blayer_verify.errors import RejectedInputError

        system, endstate = ns2d
        with pytest.raises(RejectedInputError):
            limit_symbol_H0(system, endstate, FrequencyPoint.make([0.4], 0.3), coordinates="polar")


class TestSplitting:
    """H/P block decomposition of G₊ at low frequency"""

    def test_rho_out_of_range(self, diag_system):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.symbol_analysis import split_HP
        from blayer_verify.errors import RejectedInputError

        system, endstate = diag_system
        with pytest.raises(RejectedInputError):
            split_HP(system, endstate, FrequencyPoint.make([0.0], 0.5))

    def test_block_dimensions_and_rates(self, diag_system):
        from blayer_verify.core.symbol_analysis import base_direction, hp_splitting_check
        from blayer_verify.core.verdicts import Verdict

        system, endstate = diag_system
        check, decs = hp_splitting_check(system, endstate, base_direction(2), [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
        assert check.verdict is Verdict.PASS
        assert (check.measured["dim_H"], check.measured["dim_P"]) == (2, 1)
        assert len(decs) == 5
        assert decs[-1].H_error < decs[0].H_error

    def test_hyperbolic_system_not_applicable(self, counterexample):
        from blayer_verify.core.symbol_analysis import base_direction, hp_splitting_check
        from blayer_verify.core.verdicts import Verdict

        system, endstate = counterexample
        check, decs = hp_splitting_check(system, endstate, base_direction(2), [1e-2])
        assert check.verdict is Verdict.NOT_APPLICABLE
        assert decs == []

    def test_base_direction_is_unit(self):
        from blayer_verify.core.symbol_analysis import base_direction

        for d in (1, 2, 3):
            fp = base_direction(d)
            assert fp.rho == pytest.approx(1.0)
            assert fp.gamma == pytest.approx(0.8 if d > 1 else 1.0)


class TestClassification:
    def test_decoupled_system_is_elliptic(self, diag_system):
        """Ĥ ≈ −diag(½, 1)(γ̂ + iξ̂ diag(½, −½)) has both real parts negative"""
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.symbol_analysis import classify_blocks

        system, endstate = diag_system
        blocks = classify_blocks(system, endstate, FrequencyPoint.make([0.6e-3], 0.8e-3))
        assert sorted(b.kind for b in blocks) == ["elliptic-", "elliptic-"]
        assert sorted(i for b in blocks for i in b.members) == [0, 1]
        assert all(b.size == 1 and not b.jordan for b in blocks)
        real = sorted(float(np.real(b.eigenvalues[0])) for b in blocks)
        npt.assert_allclose(real, [-0.8, -0.4], atol=1e-2)


class TestRunSymbol:
    """Module run"""

    def test_decoupled_system(self, diag_system):
        import json
        from blayer_verify.core.symbol_analysis import run_symbol
        from blayer_verify.core.verdicts import Verdict

        system, endstate = diag_system
        report = run_symbol(system, endstate)
        assert report.checks["hp-splitting"].verdict is Verdict.PASS
        assert report.checks["block-classification"].verdict is Verdict.PASS
        for name in ("glancing-block", "glancing-expansion", "glancing-diagonalizer"):
            assert report.checks[name].verdict is Verdict.NOT_APPLICABLE
        assert report.verdict is Verdict.PASS
        json.dumps(report.to_dict(), allow_nan=False)

    def test_counterexample_refuses_flat_points(self, counterexample):
        """Two of the four glancing points have q = 0 and get no diagonalizer"""
        from blayer_verify.core.symbol_analysis import run_symbol
        from blayer_verify.core.verdicts import Verdict

        system, endstate = counterexample
        report = run_symbol(system, endstate)
        assert report.checks["hp-splitting"].verdict is Verdict.NOT_APPLICABLE
        assert report.checks["block-classification"].verdict is Verdict.NOT_APPLICABLE
        verdicts = report.checks["glancing-diagonalizer"].measured["verdicts"]
        assert len(verdicts) == 4
        assert verdicts.count("not-applicable") == 2
        assert len(report.glancing) == 4

    def test_subsonic_diagonalizer_uses_own_block(self, ns2d_subsonic):
        from blayer_verify.configs.settings import SymbolSection
        from blayer_verify.core.symbol_analysis import run_symbol

        system, endstate = ns2d_subsonic
        report = run_symbol(system, endstate, SymbolSection(sigma_exponents=list(range(8, 17))))
        assert len(report.glancing) == 4
        for point in report.glancing:
            block = point["diagonalizer_report"]["block"]
            assert block["slope_T_inv"]["slope"] == pytest.approx(-0.5, abs=0.1)
