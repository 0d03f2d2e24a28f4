"""
systems_registry — Catalog of bundled conservation laws.

Run configs reference a system by short name (e.g. "isentropic-ns-2d").
The registry resolves each name into a ``SystemModel`` built from the
config's parameter overrides, plus a default endstate.

Adding a new system:
    1. Write a builder:  ``_build_<name>(params) -> SystemModel``
    2. Register it:  ``SYSTEM_REGISTRY["<name>"] = (_build_<name>, DEFAULTS)``
"""

from __future__ import annotations

import logging
from functools import partial
from typing import Any, Callable

import numpy as np

from blayer_verify.core.model_core import (
    Endstate,
    SymmetrizedForm,
    SystemModel,
    check_block_structure,
    linear_system,
)
from blayer_verify.errors import ConfigSchemaError, RejectedInputError, UnknownSystemError

logger = logging.getLogger(__name__)

SystemBuilder = Callable[[dict[str, Any]], SystemModel]


# ─── Isentropic Navier–Stokes ─────────────────────────────────

NS_DEFAULTS: dict[str, float] = {"gamma": 5.0 / 3.0, "kappa": 1.0, "nu": 1.0, "eta": 0.0}


def _viscous_tensor(d: int, nu: float, eta: float) -> np.ndarray:
    """b^{jk}_{il} = ν δ_jk δ_il + η δ_ij δ_kl, shape (d, d, d, d)."""
    I = np.eye(d)
    return nu * np.einsum("jk,il->jkil", I, I) + eta * np.einsum("ij,kl->jkil", I, I)


def _build_isentropic_ns(params: dict[str, Any], *, d: int) -> SystemModel:
    gamma = float(params["gamma"])
    kappa = float(params["kappa"])
    nu = float(params["nu"])
    eta = float(params["eta"])
    n = d + 1
    b = _viscous_tensor(d, nu, eta)

    def pressure(rho):
        return kappa * rho ** gamma

    def dpressure(rho):
        return kappa * gamma * rho ** (gamma - 1.0)

    def flux(U):
        rho, m = U[0], U[1:]
        u = m / rho
        F = np.empty((d, n))
        for j in range(d):
            F[j, 0] = m[j]
            F[j, 1:] = m[j] * u
            F[j, 1 + j] += pressure(rho)
        return F

    def flux_jacobian(U):
        rho, m = U[0], U[1:]
        u = m / rho
        J = np.zeros((d, n, n))
        for j in range(d):
            J[j, 0, 1 + j] = 1.0
            J[j, 1:, 0] = -u[j] * u
            J[j, 1 + j, 0] += dpressure(rho)
            J[j, 1:, 1:] = u[j] * np.eye(d)
            J[j, 1:, 1 + j] += u
        return J

    def viscosity(U):
        rho, u = U[0], U[1:] / U[0]
        B = np.zeros((d, d, n, n))
        B[:, :, 1:, 1:] = b / rho
        B[:, :, 1:, 0] = -np.einsum("jkil,l->jki", b, u) / rho
        return B

    def flux_field(V):
        rho, m = V[..., 0], V[..., 1:]
        u = m / rho[..., None]
        F = np.empty(V.shape[:-1] + (d, n))
        F[..., 0] = m
        F[..., 1:] = m[..., :, None] * u[..., None, :]
        idx = np.arange(d)
        F[..., idx, 1 + idx] += pressure(rho)[..., None]
        return F

    def viscosity_field(V):
        rho, u = V[..., 0], V[..., 1:] / V[..., :1]
        B = np.zeros(V.shape[:-1] + (d, d, n, n))
        inv = 1.0 / rho[..., None, None, None, None]
        B[..., 1:, 1:] = b * inv
        B[..., 1:, 0] = -np.einsum("jkil,...l->...jki", b, u) * inv[..., 0]
        return B

    def to_w(U):
        U = np.asarray(U, dtype=float)
        return np.concatenate(([U[0]], U[1:] / U[0]))

    def from_w(W):
        W = np.asarray(W, dtype=float)
        return np.concatenate(([W[0]], W[0] * W[1:]))

    def a0(W):
        rho = W[0]
        return np.diag(np.concatenate(([dpressure(rho) / rho], rho * np.ones(d))))

    def a(W):
        rho, u = W[0], W[1:]
        cp = dpressure(rho)
        A = np.zeros((d, n, n))
        for j in range(d):
            A[j, 0, 0] = cp * u[j] / rho
            A[j, 0, 1 + j] = cp
            A[j, 1 + j, 0] = cp
            A[j, 1:, 1:] = rho * u[j] * np.eye(d)
        return A

    def b_sym(W):
        B = np.zeros((d, d, n, n))
        B[:, :, 1:, 1:] = b
        return B

    def domain_check(U):
        if U[0] <= 0.0:
            return f"nonpositive density ρ = {U[0]}"
        return None

    default = np.zeros(n)
    default[0] = 1.0
    default[1] = 2.0
    return SystemModel(
        name=f"isentropic-ns-{d}d",
        d=d,
        n=n,
        r=d,
        flux=flux,
        viscosity=viscosity,
        flux_jacobian=flux_jacobian,
        flux_field=flux_field,
        viscosity_field=viscosity_field,
        symmetrized=SymmetrizedForm(to_w=to_w, from_w=from_w, a0=a0, a=a, b=b_sym),
        domain_check=domain_check,
        params={"gamma": gamma, "kappa": kappa, "nu": nu, "eta": eta},
        default_endstate=tuple(default),
    )


# ─── Constant-coefficient entries ─────────────────────────────

A1_DEFAULTS: dict[str, float] = {}


def _build_counterexample_a1(params: dict[str, Any]) -> SystemModel:
    """Symmetric, non-commuting pair whose small branch has a degenerate glancing point."""
    A1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    A2 = np.array([[0.0, 0.0], [0.0, 1.0]])
    return linear_system("counterexample-A1", [A1, A2])


DIAG_DEFAULTS: dict[str, float] = {"a1": 2.0, "a2": 1.0, "c1": 0.5, "c2": -0.5, "nu": 1.0}


def _build_const_coeff_diag(params: dict[str, Any]) -> SystemModel:
    """Decoupled transport + convection-diffusion pair with closed-form resolvent."""
    A1 = np.diag([params["a1"], params["a2"]])
    A2 = np.diag([params["c1"], params["c2"]])
    B = np.zeros((2, 2, 2, 2))
    B[0, 0, 1, 1] = B[1, 1, 1, 1] = params["nu"]
    return linear_system("const-coeff-diag", [A1, A2], B, r=1, params=dict(params))


TRANSPORT_DEFAULTS: dict[str, float] = {"a": 1.0, "a_tilde": 0.5, "nu": 1.0, "d": 2}


def _build_transport_parabolic(params: dict[str, Any]) -> SystemModel:
    """Scalar u_t + a u_{x₁} + ã·∇̃u = ν Δu."""
    d = int(params["d"])
    if d < 1:
        raise ConfigSchemaError("transport-parabolic: d must be ≥ 1", path="system.params.d")
    A = np.zeros((d, 1, 1))
    A[0, 0, 0] = params["a"]
    A[1:, 0, 0] = params["a_tilde"]
    B = np.zeros((d, d, 1, 1))
    for j in range(d):
        B[j, j, 0, 0] = params["nu"]
    return linear_system("transport-parabolic", A, B, r=1, params=dict(params))


# ─── Registry ─────────────────────────────────────────────────
# Map of short name → (builder, default parameters).

SYSTEM_REGISTRY: dict[str, tuple[SystemBuilder, dict[str, Any]]] = {
    "isentropic-ns-1d": (partial(_build_isentropic_ns, d=1), NS_DEFAULTS),
    "isentropic-ns-2d": (partial(_build_isentropic_ns, d=2), NS_DEFAULTS),
    "isentropic-ns-3d": (partial(_build_isentropic_ns, d=3), NS_DEFAULTS),
    "counterexample-A1": (_build_counterexample_a1, A1_DEFAULTS),
    "const-coeff-diag": (_build_const_coeff_diag, DIAG_DEFAULTS),
    "transport-parabolic": (_build_transport_parabolic, TRANSPORT_DEFAULTS),
}


# ─── Public API ───────────────────────────────────────────────

def build_system(name: str, params: dict[str, Any] | None = None) -> SystemModel:
    """Instantiate a registered system with parameter overrides."""
    entry = SYSTEM_REGISTRY.get(name)
    if entry is None:
        logger.error("Unknown system '%s'. Known systems: %s", name, list(SYSTEM_REGISTRY))
        raise UnknownSystemError(
            f"unknown system '{name}'; known: {', '.join(SYSTEM_REGISTRY)}", name=name
        )
    builder, defaults = entry
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigSchemaError(
            f"{name}: unknown parameter '{unknown[0]}'", path=f"system.params.{unknown[0]}"
        )
    return builder({**defaults, **params})


def catalog_get(
    name: str,
    params: dict[str, Any] | None = None,
    endstate: Any = None,
) -> tuple[SystemModel, Endstate]:
    """Return the model and its endstate; the block structure is audited on load."""
    system = build_system(name, params)
    U = np.asarray(system.default_endstate if endstate is None else endstate, dtype=float)
    problems = check_block_structure(system, U)
    if problems:
        raise RejectedInputError(f"{name}: {'; '.join(problems)}", problems=problems)
    state = Endstate.at(system, U)
    logger.debug("Catalog system %s (d=%d, n=%d, r=%d) at U₊=%s", name, system.d, system.n, system.r, U)
    return system, state


def list_available_systems() -> list[str]:
    """Return the names of all registered systems."""
    return list(SYSTEM_REGISTRY)
