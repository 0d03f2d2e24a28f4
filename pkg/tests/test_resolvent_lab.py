"""Unit tests for the resolvent solver and its bound checks"""

import numpy as np
import numpy.testing as npt
import pytest


@pytest.fixture
def transport_layer(transport1d):
    from blayer_verify.core.profile_solver import constant_profile

    system, endstate = transport1d
    return system, endstate, constant_profile(system, endstate, length=10.0, nodes=60)


class TestContour:
    """λ(ξ̃, k) = ik − θ₁(k² + |ξ̃|²)"""

    def test_contour_lambda(self):
        from blayer_verify.core.resolvent_lab import contour_lambda

        lam = contour_lambda([0.3], 0.1, theta1=0.05)
        assert lam == pytest.approx(-0.005 + 0.1j)

    def test_sweep_radii(self):
        from blayer_verify.configs.settings import Contour, ResolventSection
        from blayer_verify.core.resolvent_lab import contour_sweep

        section = ResolventSection(sweep_points=5)
        contour = Contour(theta1=0.05)
        points = contour_sweep(2, section, contour)
        npt.assert_allclose([fp.rho for fp in points], np.geomspace(section.rho_floor, section.rho_max, 5),
                            rtol=1e-10)
        for fp in points:
            assert fp.gamma == pytest.approx(-0.05 * (fp.tau ** 2 + fp.xi_norm ** 2))
            assert fp.tau / fp.xi[0] == pytest.approx(0.6 / 0.8)


class TestForcing:
    """The forcing family"""

    @pytest.mark.parametrize("name", ["exp-0", "exp-x", "sine"])
    def test_rejected_names(self, name):
        from blayer_verify.core.resolvent_lab import make_forcing
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            make_forcing(name, 2)

    def test_vector_size(self):
        from blayer_verify.core.resolvent_lab import make_forcing
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            make_forcing("bump", 3, vector=[1.0, 0.0])

    def test_bump_is_compactly_supported(self):
        from blayer_verify.core.resolvent_lab import make_forcing

        f = make_forcing("bump", 1)
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        values = f.value(x)[:, 0]
        npt.assert_array_equal(values[[0, 1, 3, 4]], 0.0)
        assert values[2] == pytest.approx(1.0)

    def test_linear_combination(self):
        from blayer_verify.core.resolvent_lab import make_forcing

        f = make_forcing("exp-1", 1) + 2.0 * make_forcing("exp-2", 1)
        x = np.array([0.0, 1.0])
        npt.assert_allclose(f.value(x)[:, 0], np.exp(-x) + 2.0 * np.exp(-2.0 * x))
        npt.assert_allclose(f.derivative(x)[:, 0], -np.exp(-x) - 4.0 * np.exp(-2.0 * x))

    def test_from_samples_vanishes_outside(self):
        from blayer_verify.core.resolvent_lab import Forcing

        x = np.linspace(0.0, 2.0, 21)
        f = Forcing.from_samples("samples", x, np.sin(x)[:, None])
        npt.assert_allclose(f.value(np.array([1.0]))[0, 0], np.sin(1.0), atol=1e-5)
        assert f.value(np.array([3.0]))[0, 0] == 0.0


class TestSolveResolvent:
    """(L_ξ̃ − λ)U = f on the half-line"""

    def test_scalar_closed_form(self, transport_layer):
        """νu'' − au' − λu = e^{−x}, u(0) = 0 has u = C(e^{−x} − e^{μx}) with C = 1/(ν + a − λ)"""
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent, sobolev_ratio

        system, _, profile = transport_layer
        lam = 0.5
        field = solve_resolvent(system, profile, FrequencyPoint.make([], lam), make_forcing("exp-1", 1),
                                modes=False)
        mu = (1.0 - np.sqrt(1.0 + 4.0 * lam)) / 2.0
        exact = (np.exp(-field.x) - np.exp(mu * field.x)) / (2.0 - lam)
        npt.assert_allclose(field.U[:, 0], exact, atol=1e-6)
        assert abs(field.trace[0]) < 1e-10
        assert field.residual < 1e-8
        assert sobolev_ratio(field) <= 1.0
        assert field.norms["U"]["Linf"] == pytest.approx(np.max(np.abs(exact)), rel=1e-4)

    def test_beta_out_of_range(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent
        from blayer_verify.errors import RejectedInputError

        system, _, profile = transport_layer
        with pytest.raises(RejectedInputError):
            solve_resolvent(system, profile, FrequencyPoint.make([], 0.5), make_forcing("exp-1", 1), beta=2)

    def test_zero_forcing_gives_zero(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent

        system, _, profile = transport_layer
        field = solve_resolvent(system, profile, FrequencyPoint.make([], 0.5), make_forcing("zero", 1),
                                modes=False)
        assert field.norms["U"]["Linf"] == 0.0

    def test_tail_continues_solution(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent

        system, _, profile = transport_layer
        field = solve_resolvent(system, profile, FrequencyPoint.make([], 0.5), make_forcing("exp-1", 1),
                                modes=False)
        npt.assert_allclose(field.extend(np.array([0.0]))[0], field.U[-1], atol=1e-10)


RHOS = np.geomspace(1e-4, 1e-1, 4)


def _field(rho, z_inf=1.0, z_two=1.0, trace=None):
    """A solved field reduced to the norms the sweep checks read"""
    from blayer_verify.core.evans_engine import FrequencyPoint
    from blayer_verify.core.resolvent_lab import ResolventField

    fp = FrequencyPoint.make([0.8 * rho], 0.6j * rho)
    x = np.array([0.0, 1.0])
    U = np.zeros((2, 1))
    unit = {"L1": 1.0, "L2": 1.0, "Linf": 1.0}
    norms = {"U": dict(unit), "Up": dict(unit), "f": dict(unit), "g": dict(unit),
             "Z": {"L1": 1.0, "L2": z_two, "Linf": z_inf}}
    if trace is None:
        return ResolventField(fp, 0, "bump", x, U, U, np.zeros((2, 2)), U, norms, 1.0, 0.0)
    Z = np.zeros((2, 2), dtype=complex)
    Z[0, 0] = trace
    norms.update(u_H={"L2": 0.0}, u_P={"L2": 0.0})
    return ResolventField(fp, 0, "bump", x, U, U, np.zeros((2, 2)), U, norms, 1.0, 0.0,
                          Z=Z, fZ=np.zeros((2, 2)), pairing={"H": 1.0, "P": 0.0})


class TestSweepChecks:
    """Exponent checks on exact power laws in ρ"""

    def test_basic_bounds_at_the_limit(self):
        from blayer_verify.core.resolvent_lab import verify_basic_bounds
        from blayer_verify.core.verdicts import Verdict

        result = verify_basic_bounds([_field(r, 1.0 / r, r ** -1.5) for r in RHOS])
        assert result.verdict is Verdict.PASS
        assert result.measured["Z_Linf"]["bump|beta=0"]["slope"] == pytest.approx(-1.0)
        assert result.measured["Z_L2"]["bump|beta=0"]["slope"] == pytest.approx(-1.5)

    def test_basic_bounds_violated(self):
        from blayer_verify.core.resolvent_lab import verify_basic_bounds
        from blayer_verify.core.verdicts import Verdict

        result = verify_basic_bounds([_field(r, r ** -1.5, r ** -1.5) for r in RHOS])
        assert result.verdict is Verdict.FAIL
        assert result.measured["Z_Linf"]["bump|beta=0"]["surplus"] == pytest.approx(-0.5)

    def test_too_few_fields(self):
        from blayer_verify.core.resolvent_lab import verify_basic_bounds
        from blayer_verify.core.verdicts import Verdict

        assert verify_basic_bounds([_field(0.01)]).verdict is Verdict.INDETERMINATE

    def test_refined_bounds_without_modes(self):
        from blayer_verify.core.resolvent_lab import verify_refined_bounds
        from blayer_verify.core.verdicts import Verdict

        result = verify_refined_bounds([_field(r) for r in RHOS])
        assert result.verdict is Verdict.INDETERMINATE
        assert result.measured["with_modes"] == 0
        assert result.measured["sobolev_max"] == pytest.approx(0.5)
        assert "note" in result.measured

    def test_maximal_estimate_bounded(self):
        from blayer_verify.core.resolvent_lab import maximal_estimate_ratio, verify_maximal_estimate
        from blayer_verify.core.verdicts import Verdict

        fields = [_field(r, trace=1.0) for r in RHOS]
        assert maximal_estimate_ratio(fields[0]) == pytest.approx(1.0)
        result = verify_maximal_estimate(fields)
        assert result.verdict is Verdict.PASS
        assert result.measured["fields"] == 4

    def test_maximal_estimate_growing(self):
        """A trace growing like ρ^{−1/2} makes the ratio grow like ρ^{−1}"""
        from blayer_verify.core.resolvent_lab import verify_maximal_estimate
        from blayer_verify.core.verdicts import Verdict

        result = verify_maximal_estimate([_field(r, trace=r ** -0.5) for r in RHOS])
        assert result.verdict is Verdict.FAIL
        assert result.measured["max_ratio"] == pytest.approx(1e4)

    def test_maximal_estimate_needs_split(self):
        from blayer_verify.core.resolvent_lab import maximal_estimate_ratio, verify_maximal_estimate
        from blayer_verify.core.verdicts import Verdict

        assert maximal_estimate_ratio(_field(0.01)) is None
        assert verify_maximal_estimate([_field(r) for r in RHOS]).verdict is Verdict.INDETERMINATE


class TestWholeLineSplit:
    """U = V + U₁ for a β = 1 forcing"""

    def test_split_reproduces_direct_solve(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import kk_split, make_forcing, resolvent_grid

        system, _, profile = transport_layer
        x = resolvent_grid(profile, nodes=800)
        split = kk_split(system, profile, FrequencyPoint.make([], 0.5), make_forcing("exp-1", 1), grid=x)
        assert split.consistency < 1e-5
        assert all(split.triangle.values())
        assert split.V.shape == split.U1.shape == split.U.shape == (x.size, 1)
        assert split.norms["V"]["Linf"] > 0.0


class TestBranchWeight:
    """γ₂ and the branch data"""

    def test_no_branches(self):
        from blayer_verify.core.resolvent_lab import BranchData, gamma2

        assert gamma2(0.1, 0.3, BranchData()) == 1.0

    def test_square_root_branch(self):
        from blayer_verify.core.resolvent_lab import BranchData, gamma2

        rho, tau = 0.01, 0.0
        assert gamma2(rho, tau, BranchData((0.0,), (2,))) == pytest.approx(1.0 + rho ** -0.5)

    @pytest.mark.parametrize("eta,s", [((0.0,), ()), ((0.0,), (1,))])
    def test_invalid_branch_data(self, eta, s):
        from blayer_verify.core.resolvent_lab import BranchData
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            BranchData(eta, s)

    def test_one_dimensional_has_no_branches(self, transport1d):
        from blayer_verify.core.resolvent_lab import extract_branch_data

        system, endstate = transport1d
        assert extract_branch_data(system, endstate, []).eta == ()

    def test_subsonic_acoustic_branches(self, ns2d_subsonic):
        """Both acoustic branches glance over ξ̃ = √3/2 with square-root order"""
        from blayer_verify.core.resolvent_lab import extract_branch_data

        system, endstate = ns2d_subsonic
        data = extract_branch_data(system, endstate, [np.sqrt(3.0) / 2.0])
        npt.assert_allclose(sorted(data.eta), [-0.75, 0.75], atol=1e-6)
        assert data.s == (2, 2)


class TestBlockEnergy:
    """|U|²_∞ + θ|U|²₂ against |F|²₁ on one constant block"""

    def test_growing_block(self):
        """U' = U + e^{−z} decays as −e^{−z}/2: ratio (1/4 + 1/8)/1"""
        from blayer_verify.core.resolvent_lab import block_energy_estimate
        from blayer_verify.core.verdicts import Verdict

        result = block_energy_estimate(np.array([[1.0]]), lambda z: np.exp(-np.asarray(z))[:, None])
        assert result.verdict is Verdict.PASS
        assert result.measured["theta"] == pytest.approx(1.0)
        assert result.measured["ratio"] == pytest.approx(0.375, rel=1e-3)

    def test_decaying_block_counts_trace(self):
        from blayer_verify.core.resolvent_lab import block_energy_estimate

        result = block_energy_estimate(np.array([[-1.0]]), lambda z: np.zeros((np.size(z), 1)),
                                       U0=np.array([1.0]))
        assert result.measured["sign"] == "negative"
        assert result.measured["ratio"] == pytest.approx(1.5, rel=1e-3)

    def test_mixed_spectrum_not_applicable(self):
        from blayer_verify.core.resolvent_lab import block_energy_estimate
        from blayer_verify.core.verdicts import Verdict

        result = block_energy_estimate(np.diag([1.0, -1.0]), lambda z: np.zeros((np.size(z), 2)))
        assert result.verdict is Verdict.NOT_APPLICABLE


class TestKernel:
    """Whole-line kernel check"""

    def test_needs_small_viscous_model(self, ns2d, counterexample):
        from blayer_verify.core.resolvent_lab import green_kernel_1d_check
        from blayer_verify.errors import RejectedInputError

        for system, endstate in (ns2d, counterexample):
            with pytest.raises(RejectedInputError):
                green_kernel_1d_check(system, endstate)

    def test_kernel_jump(self):
        """∂_yG jumps by 1/ν across x = y"""
        from blayer_verify.core.resolvent_lab import scalar_kernel_derivative

        a, nu, lam = 1.0, 2.0, 0.3 + 0.1j
        left, right = scalar_kernel_derivative(a, nu, lam, np.array([-1e-12, 1e-12]), 0.0)
        assert abs((left - right) - 1.0 / nu) < 1e-9


class TestLpModes:
    def test_unknown_mode(self):
        from blayer_verify.core.resolvent_lab import verify_lp_bounds
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            verify_lp_bounds([], mode="H5")

    def test_h4_needs_branches(self):
        from blayer_verify.core.resolvent_lab import verify_lp_bounds
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            verify_lp_bounds([], mode="H4")


@pytest.mark.slow
class TestRunResolvent:
    def test_report_shape(self, transport_layer):
        import json
        from blayer_verify.configs.settings import parse_config
        from blayer_verify.core.resolvent_lab import run_resolvent_lab

        system, endstate, profile = transport_layer
        config = parse_config({"system": {"name": "transport-parabolic", "params": {"d": 1}},
                               "resolvent": {"sweep_points": 4, "nodes": 800}})
        report = run_resolvent_lab(system, endstate, profile, config)
        assert {"maximal-estimate", "basic-bounds", "refined-bounds", "lp-bounds", "whole-line-split",
                "green-kernel-1d", "block-energy-estimate", "evans-consistency"} <= set(report.checks)
        json.dumps(report.to_dict(), allow_nan=False)


@pytest.fixture
def diag_layer(diag_system):
    from blayer_verify.core.profile_solver import constant_profile

    system, endstate = diag_system
    return system, endstate, constant_profile(system, endstate, length=10.0, nodes=60)


class TestDecoupledClosedForm:
    """The transport and convection-diffusion components solve separately"""

    @pytest.mark.parametrize("j", [0, 1])
    def test_exponential_forcing(self, diag_layer, j):
        """
        At ξ̃ = 0, λ = 1:  −2u₁' − u₁ = e^{−x} gives u₁ = e^{−x} − e^{−x/2},
        u₂'' − u₂' − u₂ = e^{−x} gives u₂ = e^{−x} − e^{μx} with μ = (1 − √5)/2.
        """
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent

        system, _, profile = diag_layer
        vector = np.eye(2)[j]
        field = solve_resolvent(system, profile, FrequencyPoint.make([0.0], 1.0),
                                make_forcing("exp-1", 2, vector=vector), modes=False)
        x = field.x
        decay = -0.5 if j == 0 else (1.0 - np.sqrt(5.0)) / 2.0
        npt.assert_allclose(field.U[:, j], np.exp(-x) - np.exp(decay * x), atol=1e-8)
        npt.assert_allclose(field.U[:, 1 - j], 0.0, atol=1e-10)
        assert np.max(np.abs(field.trace)) < 1e-10


class TestResolventStructure:
    """Linearity, scaling and the solver's residual contract"""

    def test_linear_in_forcing(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent

        system, _, profile = transport_layer
        fp = FrequencyPoint.make([], 0.3 + 0.4j)
        f, g = make_forcing("exp-1", 1), make_forcing("gaussian", 1)
        a, b = 2.0, 1.0 - 3.0j
        Uf = solve_resolvent(system, profile, fp, f, modes=False).U
        Ug = solve_resolvent(system, profile, fp, g, modes=False).U
        U = solve_resolvent(system, profile, fp, a * f + b * g, modes=False).U
        scale = np.max(np.abs(U))
        npt.assert_allclose(U, a * Uf + b * Ug, atol=1e-10 * scale)

    def test_maximal_ratio_is_scale_free(self, diag_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, maximal_estimate_ratio, solve_resolvent

        system, _, profile = diag_layer
        fp = FrequencyPoint.make([0.03], 0.005 + 0.04j)
        f = make_forcing("exp-1", 2)
        one = solve_resolvent(system, profile, fp, f)
        two = solve_resolvent(system, profile, fp, 2.0 * f)
        assert one.Z is not None and two.Z is not None
        assert maximal_estimate_ratio(two) == pytest.approx(maximal_estimate_ratio(one), rel=1e-10)

    def test_residual_contract(self, transport_layer):
        """Twenty random (λ, f): the collocation system and νU'' − aU' − λU = f both hold"""
        from scipy.interpolate import make_interp_spline
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import make_forcing, solve_resolvent
        from blayer_verify.utils.quadrature import l2_norm

        system, _, profile = transport_layer
        rng = np.random.default_rng(7)
        names = ["exp-1", "exp-2", "gaussian", "bump"]
        for _ in range(20):
            lam = complex(rng.uniform(0.05, 1.0), rng.uniform(-1.0, 1.0))
            first, second = rng.choice(names, size=2, replace=False)
            c = complex(rng.normal(), rng.normal())
            forcing = make_forcing(str(first), 1) + c * make_forcing(str(second), 1)
            field = solve_resolvent(system, profile, FrequencyPoint.make([], lam), forcing, modes=False)
            assert field.residual <= 1e-8
            x = field.x
            Upp = (make_interp_spline(x, field.Up[:, 0].real, k=5).derivative()(x)
                   + 1j * make_interp_spline(x, field.Up[:, 0].imag, k=5).derivative()(x))
            defect = Upp - field.Up[:, 0] - lam * field.U[:, 0] - forcing.value(x)[:, 0]
            bound = l2_norm(x, field.f) + l2_norm(x, field.U)
            assert l2_norm(x, defect[:, None]) <= 1e-5 * bound


class TestModeProjectors:
    """The projectors of a mode split form a resolution of the identity"""

    @pytest.mark.parametrize("fixture", ["diag_system", "ns2d"])
    def test_resolution_of_identity(self, request, fixture):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import mode_split

        system, endstate = request.getfixturevalue(fixture)
        split = mode_split(system, endstate, FrequencyPoint.make([0.03], 0.005 + 0.04j))
        projectors = list(split.projectors.values())
        N = system.n + system.r
        npt.assert_allclose(sum(projectors), np.eye(N), atol=1e-10)
        for i, P in enumerate(projectors):
            npt.assert_allclose(P @ P, P, atol=1e-10)
            for Q in projectors[i + 1:]:
                npt.assert_allclose(P @ Q, 0.0, atol=1e-10)
                npt.assert_allclose(Q @ P, 0.0, atol=1e-10)


class TestWholeLineSplitBounds:
    def test_zero_forcing(self, transport_layer):
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import kk_split, make_forcing, resolvent_grid

        system, _, profile = transport_layer
        x = resolvent_grid(profile, nodes=400)
        split = kk_split(system, profile, FrequencyPoint.make([], 0.5), make_forcing("zero", 1), grid=x)
        npt.assert_array_equal(split.V, 0.0)
        npt.assert_array_equal(split.U1, 0.0)
        assert split.consistency == 0.0

    @pytest.mark.parametrize("name", ["exp-1", "gaussian"])
    def test_triangle_inequality(self, transport_layer, name):
        """|U|_p ≤ |V|_p + |U₁|_p up to the split's consistency defect"""
        from blayer_verify.core.evans_engine import FrequencyPoint
        from blayer_verify.core.resolvent_lab import kk_split, make_forcing, resolvent_grid
        from blayer_verify.utils.quadrature import l2_norm, linf_norm

        system, _, profile = transport_layer
        x = resolvent_grid(profile, nodes=800)
        split = kk_split(system, profile, FrequencyPoint.make([], 0.3 + 0.2j), make_forcing(name, 1), grid=x)
        slack = 1e-4
        for norm in (lambda u: l2_norm(x, u), linf_norm):
            assert norm(split.U) <= (norm(split.V) + norm(split.U1)) * (1.0 + slack)


@pytest.mark.slow
class TestNavierStokesLayer:
    """Resolvent sweep on the subsonic inflow layer"""

    def test_low_frequency_sweep(self, ns1d_layer):
        from blayer_verify.configs.settings import ResolventSection
        from blayer_verify.core.resolvent_lab import contour_sweep, make_forcing, solve_resolvent
        from blayer_verify.utils.fitting import loglog_fit

        system, _, profile = ns1d_layer
        section = ResolventSection(rho_floor=1e-3, rho_max=1e-1, sweep_points=4)
        fields = [solve_resolvent(system, profile, fp, make_forcing("exp-1", 2), modes=False)
                  for fp in contour_sweep(1, section)]
        for f in fields:
            assert f.residual <= 1e-8
            assert np.all(np.isfinite(f.U))
        rho = np.array([f.rho for f in fields])
        sup = np.array([f.norms["U"]["Linf"] for f in fields])
        assert np.all(sup > 0.0)
        assert loglog_fit(rho, sup, samples=200, seed=0).slope >= -1.1
