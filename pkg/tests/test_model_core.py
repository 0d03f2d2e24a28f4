"""Unit tests for the system model and the bundled catalog"""

import numpy as np
import numpy.testing as npt
import pytest


class TestCatalog:
    """Registry lookups"""

    def test_known_systems(self):
        from blayer_verify.configs.systems_registry import list_available_systems

        names = list_available_systems()
        for name in ("isentropic-ns-1d", "isentropic-ns-2d", "isentropic-ns-3d",
                     "counterexample-A1", "const-coeff-diag", "transport-parabolic"):
            assert name in names

    def test_unknown_system(self):
        """Unknown names raise an error that is both a schema error and a KeyError"""
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.errors import ConfigSchemaError, UnknownSystemError

        with pytest.raises(UnknownSystemError) as info:
            catalog_get("euler-9d")
        assert isinstance(info.value, KeyError)
        assert isinstance(info.value, ConfigSchemaError)
        assert "euler-9d" in str(info.value)

    def test_unknown_parameter(self):
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.errors import ConfigSchemaError

        with pytest.raises(ConfigSchemaError):
            catalog_get("isentropic-ns-2d", {"mach": 2.0})

    def test_ns_dimensions(self, ns2d):
        system, endstate = ns2d
        assert (system.d, system.n, system.r, system.n_hyp) == (2, 3, 2, 1)
        npt.assert_allclose(endstate.U, [1.0, 2.0, 0.0])
        assert endstate.dF.shape == (2, 3, 3)
        assert endstate.B.shape == (2, 2, 3, 3)

    def test_counterexample_is_hyperbolic_only(self, counterexample):
        system, endstate = counterexample
        assert system.hyperbolic_only
        assert system.r == 0
        npt.assert_allclose(endstate.B, 0.0)


class TestEndstate:
    """Endstate construction and domain checks"""

    def test_wrong_shape(self):
        from blayer_verify.core.model_core import Endstate, catalog_get
        from blayer_verify.errors import RejectedInputError

        system, _ = catalog_get("isentropic-ns-2d")
        with pytest.raises(RejectedInputError):
            Endstate.at(system, np.array([1.0, 2.0]))

    def test_nonpositive_density(self):
        from blayer_verify.core.model_core import catalog_get
        from blayer_verify.errors import RejectedInputError

        with pytest.raises(RejectedInputError):
            catalog_get("isentropic-ns-2d", endstate=[-1.0, 0.0, 0.0])

    def test_non_finite_state(self, ns2d):
        from blayer_verify.errors import RejectedInputError

        system, _ = ns2d
        with pytest.raises(RejectedInputError):
            system.check_domain(np.array([np.nan, 0.0, 0.0]))


class TestDerivatives:
    """Jacobians and batched evaluators"""

    def test_ns_jacobian_matches_finite_differences(self, ns2d):
        from blayer_verify.core.model_core import fd_jacobian, jacobians

        system, _ = ns2d
        U = np.array([1.3, 0.7, -0.4])
        exact = jacobians(system, U)
        approx = fd_jacobian(system.flux, U)
        npt.assert_allclose(exact, approx, atol=1e-7)

    @pytest.mark.parametrize("name,params", [
        ("isentropic-ns-1d", None),
        ("isentropic-ns-2d", None),
        ("isentropic-ns-3d", {"gamma": 1.4, "eta": 0.5}),
    ])
    def test_analytic_jacobians_on_random_states(self, name, params):
        from blayer_verify.core.model_core import catalog_get, fd_jacobian, jacobians

        system, _ = catalog_get(name, params)
        rng = np.random.default_rng(11)
        for _ in range(100):
            U = np.concatenate(([rng.uniform(0.5, 3.0)], rng.normal(size=system.d)))
            exact = jacobians(system, U)
            approx = fd_jacobian(system.flux, U)
            scale = 1.0 + np.max(np.abs(exact))
            npt.assert_allclose(exact, approx, rtol=1e-6, atol=1e-6 * scale)

    def test_single_axis_jacobian(self, ns2d):
        """Axes are numbered from 1, the boundary normal"""
        from blayer_verify.core.model_core import jacobian, jacobians
        from blayer_verify.errors import RejectedInputError

        system, _ = ns2d
        U = np.array([1.3, 0.7, -0.4])
        npt.assert_array_equal(jacobian(system, 1, U), jacobians(system, U)[0])
        npt.assert_array_equal(jacobian(system, 2, U), jacobians(system, U)[1])
        for j in (0, 3):
            with pytest.raises(RejectedInputError):
                jacobian(system, j, U)

    def test_flux_field_matches_pointwise(self, ns2d):
        """The vectorized flux agrees with the per-state flux"""
        system, _ = ns2d
        rng = np.random.default_rng(0)
        V = np.column_stack((1.0 + rng.random(6), rng.normal(size=(6, 2)))).reshape(2, 3, 3)
        batched = system.flux_on(V)
        assert batched.shape == (2, 3, 2, 3)
        for idx in np.ndindex(2, 3):
            npt.assert_allclose(batched[idx], system.flux(V[idx]), rtol=1e-13)

    def test_viscosity_field_matches_pointwise(self, ns2d):
        system, _ = ns2d
        V = np.array([[1.5, 0.3, -0.2], [0.8, -1.0, 0.5]])
        batched = system.viscosity_on(V)
        for i in range(2):
            npt.assert_allclose(batched[i], system.viscosity_at(V[i]), rtol=1e-13)

    def test_linear_flux_field(self, diag_system):
        system, _ = diag_system
        V = np.array([[1.0, 2.0], [0.5, -1.0]])
        npt.assert_allclose(system.flux_on(V), np.array([system.flux(v) for v in V]))

    def test_hyperbolic_viscosity_is_zero(self, counterexample):
        system, _ = counterexample
        assert not np.any(system.viscosity_on(np.ones((4, 2))))

    def test_symbol(self):
        from blayer_verify.core.model_core import symbol

        jacs = np.array([np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])])
        npt.assert_allclose(symbol(jacs, [2.0, 3.0]), [[2.0, 3.0], [3.0, 2.0]])

    def test_directional_derivative_zero_direction(self):
        from blayer_verify.core.model_core import directional_derivative

        out = directional_derivative(lambda u: u ** 2, np.array([1.0, 2.0]), np.zeros(2))
        npt.assert_array_equal(out, 0.0)


class TestStructure:
    """Block-structure invariants"""

    @pytest.mark.parametrize("name", ["isentropic-ns-2d", "const-coeff-diag", "counterexample-A1"])
    def test_catalog_structure_holds(self, name):
        from blayer_verify.core.model_core import catalog_get, check_block_structure

        system, endstate = catalog_get(name)
        assert check_block_structure(system, endstate.U) == []

    def test_ns_symmetrizer(self, ns2d):
        from blayer_verify.core.model_core import is_symmetric, symmetry_residual

        system, endstate = ns2d
        assert symmetry_residual(system, endstate.U) == 0.0
        assert is_symmetric(system, endstate.U)

    def test_hyperbolic_rows_in_viscosity_flagged(self):
        from blayer_verify.core.model_core import check_block_structure, linear_system

        B = np.zeros((1, 1, 2, 2))
        B[0, 0, 0, 0] = 1.0
        system = linear_system("bad", [np.diag([1.0, 2.0])], B, r=1)
        assert check_block_structure(system, np.zeros(2))
