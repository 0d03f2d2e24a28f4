"""Unit tests for symbol branches and the structural audits"""

import numpy as np
import numpy.testing as npt
import pytest


def _sound_speed(params, rho=1.0):
    return np.sqrt(params["kappa"] * params["gamma"] * rho ** (params["gamma"] - 1.0))


class TestBranches:
    """Sorted eigenvalue branches of Σ ξ_j dF^j"""

    def test_multiplicity_pattern(self):
        from blayer_verify.core.branches import multiplicity_pattern, sorted_eigenvalues

        w = sorted_eigenvalues(np.diag([2.0, 1.0, 1.0]))
        npt.assert_allclose(w, [1.0, 1.0, 2.0])
        assert multiplicity_pattern(w, 1e-12) == (2, 1)

    def test_ns_branch_gradient(self, ns2d):
        """∇λ = u ± c ξ/|ξ| for the acoustic branches and u for the middle one"""
        from blayer_verify.core.branches import branch_gradient

        system, endstate = ns2d
        c = _sound_speed(system.params)
        xi = np.array([1.0, 0.0])
        npt.assert_allclose(branch_gradient(endstate.dF, xi, [0]), [2.0 - c, 0.0], atol=1e-8)
        npt.assert_allclose(branch_gradient(endstate.dF, xi, [1]), [2.0, 0.0], atol=1e-8)
        npt.assert_allclose(branch_gradient(endstate.dF, xi, [2]), [2.0 + c, 0.0], atol=1e-8)

    def test_cluster_derivatives_of_double_eigenvalue(self):
        """A double eigenvalue splits along e₁ with the restricted perturbation's eigenvalues"""
        from blayer_verify.core.branches import cluster_derivatives

        jacs = np.array([np.diag([1.0, 2.0]), 3.0 * np.eye(2)])
        d = cluster_derivatives(jacs, np.array([0.0, 1.0]), [0, 1], axis=0)
        npt.assert_allclose(sorted(np.real(d)), [1.0, 2.0], atol=1e-12)

    def test_normal_derivative_sign(self, ns2d, counterexample):
        from blayer_verify.core.branches import normal_derivative_sign

        _, endstate = ns2d
        assert normal_derivative_sign(endstate.dF, np.array([1.0, 0.0]), [1]) == 1
        _, endstate = counterexample
        # A1 has a zero diagonal, so the normal derivative vanishes at ξ = e₂
        assert normal_derivative_sign(endstate.dF, np.array([0.0, 1.0]), [0]) == 0


class TestSphere:
    """Deterministic sphere samples"""

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_points_on_sphere(self, d):
        from blayer_verify.configs.settings import SpherePlan
        from blayer_verify.core.hypothesis_audit import sphere_points

        pts = sphere_points(d, SpherePlan(samples_per_dim=100))
        assert pts.shape[1] == d
        npt.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)

    def test_samples_avoid_axes(self):
        from blayer_verify.configs.settings import SpherePlan
        from blayer_verify.core.hypothesis_audit import sphere_points

        pts = sphere_points(2, SpherePlan(samples_per_dim=100))
        assert len(pts) == 200
        assert np.min(np.abs(pts)) > 0.0

    def test_deterministic(self):
        from blayer_verify.configs.settings import SpherePlan
        from blayer_verify.core.hypothesis_audit import sphere_points

        plan = SpherePlan(samples_per_dim=120)
        npt.assert_array_equal(sphere_points(3, plan), sphere_points(3, plan))


class TestStructureAudit:
    """Symmetrizer, coupling and parabolicity"""

    def test_ns_passes(self, ns2d):
        from blayer_verify.core.hypothesis_audit import audit_structure
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        checks = audit_structure(system, endstate)
        assert {k: v.verdict for k, v in checks.items()} == {
            "A1": Verdict.PASS, "A2": Verdict.PASS, "A3": Verdict.PASS}
        assert checks["A3"].measured["theta"] == pytest.approx(1.0)

    def test_decoupled_transport_fails_coupling(self, diag_system):
        """The first component of the diagonal system never sees the viscosity"""
        from blayer_verify.core.hypothesis_audit import audit_structure
        from blayer_verify.core.verdicts import Verdict

        system, endstate = diag_system
        checks = audit_structure(system, endstate)
        assert checks["A1"].verdict is Verdict.PASS
        assert checks["A2"].verdict is Verdict.FAIL
        assert checks["A2"].witness is not None

    def test_hyperbolic_only(self, counterexample):
        from blayer_verify.core.hypothesis_audit import audit_structure
        from blayer_verify.core.verdicts import Verdict

        system, endstate = counterexample
        checks = audit_structure(system, endstate)
        assert checks["A1"].verdict is Verdict.PASS
        assert checks["A2"].verdict is Verdict.NOT_APPLICABLE
        assert checks["A3"].verdict is Verdict.NOT_APPLICABLE


class TestNoncharacteristic:
    """(H1) and (H2) at the endstate"""

    def test_a_star_is_normal_velocity(self, ns2d):
        """For isentropic NS the reduced convection coefficient is u₁"""
        from blayer_verify.core.hypothesis_audit import a_star

        system, endstate = ns2d
        npt.assert_allclose(a_star(system, endstate.U), [[2.0]], atol=1e-12)

    def test_inflow(self, ns2d):
        from blayer_verify.core.hypothesis_audit import audit_H1, layer_direction
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        h1 = audit_H1(system, endstate)
        assert h1.verdict is Verdict.PASS
        assert layer_direction(h1) == "inflow"
        assert h1.measured["theta1"] == pytest.approx(2.0)

    def test_outflow(self):
        from blayer_verify.core.hypothesis_audit import audit_H1, layer_direction
        from blayer_verify.core.model_core import catalog_get

        system, endstate = catalog_get("isentropic-ns-2d", endstate=[1.0, -2.0, 0.0])
        assert layer_direction(audit_H1(system, endstate)) == "outflow"

    def test_characteristic_boundary_fails(self):
        from blayer_verify.core.hypothesis_audit import audit_H1
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.core.verdicts import Verdict

        system, endstate = catalog_get("isentropic-ns-2d", endstate=[1.0, 0.0, 0.5])
        h1 = audit_H1(system, endstate)
        assert h1.verdict is Verdict.FAIL
        assert h1.witness is not None

    def test_scalar_direction_from_drift(self, transport1d):
        from blayer_verify.core.hypothesis_audit import audit_H1, layer_direction
        from blayer_verify.core.verdicts import Verdict

        system, endstate = transport1d
        h1 = audit_H1(system, endstate)
        assert h1.verdict is Verdict.NOT_APPLICABLE
        assert layer_direction(h1) == "inflow"

    def test_h2_distinct_nonzero(self, ns2d):
        from blayer_verify.core.hypothesis_audit import audit_H2
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        c = _sound_speed(system.params)
        h2 = audit_H2(system, endstate)
        assert h2.verdict is Verdict.PASS
        npt.assert_allclose(np.real(h2.measured["eigenvalues"]), [2.0 - c, 2.0, 2.0 + c])

    def test_h2_sonic_endstate_fails(self):
        """u₁ = c puts a zero eigenvalue into dF¹"""
        from blayer_verify.core.hypothesis_audit import audit_H2
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.core.verdicts import Verdict

        system, endstate = catalog_get("isentropic-ns-2d", {"gamma": 2.0, "kappa": 0.5}, [1.0, 1.0, 0.0])
        h2 = audit_H2(system, endstate)
        assert h2.verdict is Verdict.FAIL
        assert abs(h2.witness["closest_to_zero"]) < 1e-12


class TestMultiplicity:
    """(H3) and (H3')"""

    def test_ns_constant_multiplicity(self, ns2d):
        from blayer_verify.core.hypothesis_audit import audit_H3
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        result = audit_H3(system, endstate)
        assert result.h3.verdict is Verdict.PASS
        assert result.h3prime.verdict is Verdict.PASS
        assert result.constant_clusters == ((0,), (1,), (2,))

    def test_crossing_branches_are_totally_nonglancing(self, diag_system):
        """2ξ₁ + ξ₂/2 and ξ₁ − ξ₂/2 cross on ξ₁ + ξ₂ = 0 with both normal speeds positive"""
        from blayer_verify.core.hypothesis_audit import audit_H3
        from blayer_verify.core.verdicts import Verdict

        system, endstate = diag_system
        result = audit_H3(system, endstate)
        assert result.h3.verdict is Verdict.FAIL
        assert result.h3prime.verdict is Verdict.PASS
        assert result.h3prime.measured["mode"] == "totally nonglancing"
        xi = np.asarray(result.crossings[0]["xi"])
        assert abs(xi[0] + xi[1]) < 1e-6
        assert all(c["normal_sign"] == 1 for c in result.crossings)


class TestGlancing:
    """(H4') and glancing-point search"""

    def test_supersonic_has_no_glancing_points(self, ns2d):
        from blayer_verify.core.hypothesis_audit import audit_H4prime
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        result, points = audit_H4prime(system, endstate)
        assert result.verdict is Verdict.PASS
        assert points == []

    def test_subsonic_acoustic_glancing(self, ns2d_subsonic):
        """With c = 1 and u₁ = 1/2 the acoustic branches glance where ξ₁/|ξ| = ±1/2"""
        from blayer_verify.core.hypothesis_audit import audit_H4prime
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d_subsonic
        result, points = audit_H4prime(system, endstate)
        assert result.verdict is Verdict.PASS
        assert len(points) == 4
        for p in points:
            assert abs(abs(p.xi[0]) - 0.5) < 1e-8
            assert p.tangential_norm == pytest.approx(np.sqrt(3.0) / 2.0, rel=1e-6)

    def test_counterexample_fails(self, counterexample):
        """The small branch of the counterexample is flat in ξ₂ at its glancing point"""
        from blayer_verify.core.hypothesis_audit import audit_H4prime
        from blayer_verify.core.verdicts import Verdict

        system, endstate = counterexample
        result, points = audit_H4prime(system, endstate)
        assert result.verdict is Verdict.FAIL
        assert result.witness["residual"] <= 1e-6
        assert abs(result.witness["xi"][0]) < 1e-8

    def test_one_dimensional_not_applicable(self):
        from blayer_verify.core.hypothesis_audit import audit_H4prime
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.core.verdicts import Verdict

        system, endstate = catalog_get("isentropic-ns-1d")
        result, points = audit_H4prime(system, endstate)
        assert result.verdict is Verdict.NOT_APPLICABLE


class TestRunAudit:
    """Full audit report"""

    def test_ns_report(self, ns2d):
        import json
        from blayer_verify.core.hypothesis_audit import run_audit
        from blayer_verify.core.verdicts import Verdict

        system, endstate = ns2d
        report = run_audit(system, endstate)
        assert report.verdict is Verdict.PASS
        assert report.direction == "inflow"
        assert set(report.checks) == {"A1", "A2", "A3", "H1", "H2", "H3", "H3prime", "H4prime"}
        json.dumps(report.to_dict(), allow_nan=False)

    def test_counterexample_report_fails(self, counterexample):
        from blayer_verify.core.hypothesis_audit import run_audit
        from blayer_verify.core.verdicts import Verdict

        system, endstate = counterexample
        report = run_audit(system, endstate)
        assert report.verdict is Verdict.FAIL
        assert report.checks["H4prime"].verdict is Verdict.FAIL
        assert report.checks["H1"].verdict is Verdict.NOT_APPLICABLE


class TestHomogeneity:
    """The symbol is homogeneous of degree one, so the audit cannot depend on the sphere radius"""

    @pytest.mark.parametrize("fixture", ["ns2d", "ns2d_subsonic", "counterexample"])
    def test_radius_one_and_two_agree(self, request, fixture):
        from blayer_verify.configs.settings import SpherePlan
        from blayer_verify.core.hypothesis_audit import run_audit

        system, endstate = request.getfixturevalue(fixture)
        unit = run_audit(system, endstate)
        double = run_audit(system, endstate, SpherePlan(radius=2.0))
        assert {k: c.verdict for k, c in double.checks.items()} == {k: c.verdict for k, c in unit.checks.items()}
        assert double.direction == unit.direction
        assert len(double.glancing) == len(unit.glancing)
        for p in double.glancing:
            assert np.linalg.norm(p.xi) == pytest.approx(2.0, rel=1e-12)
            match = min((q for q in unit.glancing if q.branch == p.branch),
                        key=lambda q: np.linalg.norm(p.xi / 2.0 - q.xi))
            npt.assert_allclose(p.xi / 2.0, match.xi, atol=1e-6)
            assert p.value == pytest.approx(2.0 * match.value, abs=1e-6)
            if match.tangential_norm > unit.checks["H4prime"].measured["gradient_tol"]:
                assert p.tangential_norm == pytest.approx(match.tangential_norm, rel=1e-6)
            else:
                assert p.tangential_norm <= double.checks["H4prime"].measured["gradient_tol"]
