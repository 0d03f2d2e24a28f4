"""Unit tests for boundary-layer profiles"""

import json

import numpy as np
import numpy.testing as npt
import pytest


@pytest.fixture
def outflow_transport():
    """Scalar u_t − u_x = u_xx: the layer Ū = h e^{−x₁} exists for any trace h"""
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("transport-parabolic", {"d": 1, "a": -1.0})


class TestConstantProfile:
    """The trivial layer Ū ≡ U₊"""

    def test_constant(self, constant_ns_profile, ns2d):
        _, endstate = ns2d
        prof = constant_ns_profile
        assert prof.is_constant
        assert prof.amplitude == 0.0
        assert prof.length == pytest.approx(20.0)
        assert prof.x.size == 121
        npt.assert_allclose(prof.state(5.0), endstate.U, rtol=1e-12)
        npt.assert_array_equal(prof.state(50.0), endstate.U)
        npt.assert_allclose(prof.slope(5.0), 0.0, atol=1e-14)

    def test_boundary_data_equal_to_endstate(self, ns2d):
        """Data equal to W̃(U₊) short-circuits to the constant layer"""
        from blayer_verify.core.profile_solver import solve_profile

        system, endstate = ns2d
        prof = solve_profile(system, endstate, system.to_w(endstate.U), length=10.0, nodes=50)
        assert prof.is_constant
        assert prof.meta["constant"] is True


class TestSolveProfile:
    """Collocation with amplitude continuation"""

    def test_outflow_exponential_layer(self, outflow_transport):
        from blayer_verify.core.profile_solver import solve_profile

        system, endstate = outflow_transport
        prof = solve_profile(system, endstate, np.array([0.5]))
        npt.assert_allclose(prof.U[:, 0], 0.5 * np.exp(-prof.x), atol=1e-6)
        npt.assert_allclose(prof.Up[:, 0], -0.5 * np.exp(-prof.x), atol=1e-5)
        assert prof.amplitude == pytest.approx(0.5, rel=1e-6)
        assert prof.theta == pytest.approx(1.0, rel=1e-2)
        assert prof.residual < 1e-6
        assert prof.meta["stable_directions"] == 1

    def test_inflow_transport_has_no_layer(self, transport1d):
        """Inflow scalar transport only admits the constant layer"""
        from blayer_verify.core.profile_solver import solve_profile
        from blayer_verify.errors import NoProfileFoundError

        system, endstate = transport1d
        with pytest.raises(NoProfileFoundError):
            solve_profile(system, endstate, np.array([0.5]))

    def test_hyperbolic_system_rejected(self, counterexample):
        from blayer_verify.core.profile_solver import solve_profile
        from blayer_verify.errors import RejectedInputError

        system, endstate = counterexample
        with pytest.raises(RejectedInputError):
            solve_profile(system, endstate, np.zeros(2))

    def test_wrong_boundary_data_size(self, ns2d):
        from blayer_verify.core.profile_solver import solve_profile
        from blayer_verify.errors import RejectedInputError

        system, endstate = ns2d
        with pytest.raises(RejectedInputError):
            solve_profile(system, endstate, np.zeros(4))

    def test_amplitude_homotopy(self, outflow_transport):
        from blayer_verify.core.profile_solver import amplitude_homotopy

        system, endstate = outflow_transport
        profiles = amplitude_homotopy(system, endstate, np.array([0.4]), [0.5, 1.0])
        assert [p.amplitude for p in profiles] == pytest.approx([0.2, 0.4], rel=1e-6)


class TestDerivatives:
    """Spline derivatives of the profile"""

    def test_orders(self, outflow_transport):
        from blayer_verify.core.profile_solver import profile_derivatives, solve_profile

        system, endstate = outflow_transport
        prof = solve_profile(system, endstate, np.array([0.5]))
        d2 = profile_derivatives(prof, 2)
        inner = prof.x < 10.0
        npt.assert_allclose(d2[inner, 0], 0.5 * np.exp(-prof.x[inner]), atol=1e-4)

    def test_constant_profile_derivatives_vanish(self, constant_ns_profile):
        from blayer_verify.core.profile_solver import profile_derivatives

        npt.assert_array_equal(profile_derivatives(constant_ns_profile, 1), 0.0)

    def test_order_out_of_range(self, constant_ns_profile):
        from blayer_verify.core.profile_solver import profile_derivatives
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            profile_derivatives(constant_ns_profile, 3)


class TestProfileFiles:
    """CSV export with the hash sidecar and import"""

    def test_export_writes_sidecar(self, constant_ns_profile, tmp_path):
        from blayer_verify.core.profile_solver import export_profile

        path = export_profile(constant_ns_profile, tmp_path / "profile.csv", section_hash="abc123")
        meta = json.loads((tmp_path / "profile.json").read_text(encoding="utf-8"))
        assert meta["section_hash"] == "abc123"
        assert meta["nodes"] == constant_ns_profile.x.size
        assert path.read_text(encoding="utf-8").splitlines()[0] == "x1,U1,U2,U3,dU1,dU2,dU3"

    def test_import_restores_grid(self, outflow_transport, tmp_path):
        from blayer_verify.core.profile_solver import export_profile, import_profile, solve_profile

        system, endstate = outflow_transport
        prof = solve_profile(system, endstate, np.array([0.5]))
        export_profile(prof, tmp_path / "profile.csv", section_hash="h")
        back = import_profile(tmp_path / "profile.csv", system, endstate)
        npt.assert_array_equal(back.x, prof.x)
        npt.assert_array_equal(back.U, prof.U)
        assert back.meta["section_hash"] == "h"
        assert back.theta == pytest.approx(prof.theta)

    def test_import_wrong_columns(self, ns2d, tmp_path):
        from blayer_verify.core.profile_solver import import_profile
        from blayer_verify.errors import RejectedInputError

        system, _ = ns2d
        path = tmp_path / "bad.csv"
        path.write_text("x1,U1\n0,1\n1,1\n", encoding="utf-8")
        with pytest.raises(RejectedInputError):
            import_profile(path, system)

    def test_import_grid_must_start_at_zero(self, transport1d, tmp_path):
        from blayer_verify.core.profile_solver import import_profile
        from blayer_verify.errors import RejectedInputError

        system, _ = transport1d
        path = tmp_path / "shifted.csv"
        path.write_text("x1,U1,dU1\n1,0,0\n2,0,0\n", encoding="utf-8")
        with pytest.raises(RejectedInputError):
            import_profile(path, system)


class TestNavierStokesLayer:
    """The subsonic inflow layer U₊ = (1, 1/2), u(0) = 0.47"""

    def test_matches_scalar_ode(self, ns1d_layer):
        """With m = ρu fixed the layer solves ν u' = m u + κ(m/u)^γ − m u₊ − κρ₊^γ"""
        from scipy.integrate import solve_ivp

        _, _, prof = ns1d_layer
        gamma, m = 5.0 / 3.0, 0.5
        ivp = solve_ivp(lambda _x, u: m * u + (m / u) ** gamma - 1.25, (0.0, prof.length), [0.47],
                        method="DOP853", t_eval=prof.x, rtol=1e-12, atol=1e-14)
        assert ivp.success
        npt.assert_allclose(prof.U[:, 1] / prof.U[:, 0], ivp.y[0], atol=1e-8)

    def test_first_integral_is_constant(self, ns1d_layer):
        _, _, prof = ns1d_layer
        npt.assert_allclose(prof.U[:, 1], 0.5, atol=1e-10)
        assert prof.meta["first_integral_residual"] <= 1e-10

    def test_trace_and_decay_rate(self, ns1d_layer):
        """θ = γκ m^γ u₊^{−γ−1} − m = 17/6 for ν = 1"""
        _, _, prof = ns1d_layer
        npt.assert_allclose(prof.U[0], [0.5 / 0.47, 0.5], atol=1e-9)
        assert prof.amplitude == pytest.approx(0.5 / 0.47 - 1.0, rel=1e-6)
        assert prof.theta == pytest.approx(17.0 / 6.0, rel=5e-2)

    def test_reported_residual_is_nodewise(self, ns1d_layer):
        from blayer_verify.core.profile_solver import steady_residual

        system, _, prof = ns1d_layer
        nodewise = steady_residual(system, prof)
        assert nodewise.shape == prof.x.shape
        assert nodewise.max() <= 1e-9
        assert prof.meta["steady_residual"] == pytest.approx(nodewise.max(), abs=1e-15)
        assert prof.residual == max(prof.meta["collocation_residual"], prof.meta["steady_residual"])

    def test_spline_derivative_matches_solver_slope(self, ns1d_layer):
        from blayer_verify.core.profile_solver import profile_derivatives, steady_residual

        system, _, prof = ns1d_layer
        npt.assert_allclose(profile_derivatives(prof, 1), prof.Up, atol=1e-6)
        assert steady_residual(system, prof, derivative="spline").max() <= 1e-6
        assert prof.meta["spline_residual"] <= 1e-6

    def test_unknown_derivative_source(self, ns1d_layer):
        from blayer_verify.core.profile_solver import steady_residual
        from blayer_verify.errors import RejectedInputError

        system, _, prof = ns1d_layer
        with pytest.raises(RejectedInputError):
            steady_residual(system, prof, derivative="chebyshev")


class TestRefinement:
    """Interpolation order under grid doubling"""

    def test_ns_layer_order(self, ns1d_layer):
        from blayer_verify.core.profile_solver import refinement_check
        from blayer_verify.core.verdicts import Verdict

        system, endstate, _ = ns1d_layer
        result = refinement_check(system, endstate, np.array([0.5 / 0.47, 0.47]))
        assert result.verdict is Verdict.PASS
        assert result.measured["orders"]
        assert min(result.measured["orders"]) >= 2.0
        assert result.measured["errors"][0] > result.measured["errors"][1]

    def test_exact_exponential_layer(self, outflow_transport):
        from blayer_verify.core.profile_solver import refinement_check
        from blayer_verify.core.verdicts import Verdict

        system, endstate = outflow_transport
        result = refinement_check(system, endstate, np.array([0.5]), nodes=(8, 16, 32, 64))
        assert result.verdict is Verdict.PASS
        assert min(result.measured["orders"]) >= 2.0
        assert len(result.measured["errors"]) == 3

    def test_constant_layer_has_no_error(self, ns2d):
        from blayer_verify.core.profile_solver import refinement_check
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        result = refinement_check(system, endstate, system.to_w(endstate.U), length=10.0)
        assert result.verdict is Verdict.PASS
        assert result.measured["errors"] == [0.0, 0.0]
        assert result.measured["orders"] == []
        assert result.note

    def test_grids_must_double(self, outflow_transport):
        from blayer_verify.core.profile_solver import refinement_check
        from blayer_verify.errors import RejectedInputError

        system, endstate = outflow_transport
        with pytest.raises(RejectedInputError):
            refinement_check(system, endstate, np.array([0.5]), nodes=(8, 12))
