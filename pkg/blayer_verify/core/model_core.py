"""
model_core — Hyperbolic-parabolic systems and their Jacobians.

A ``SystemModel`` bundles the conservative form

    U_t + Σ_j F^j(U)_{x_j} = Σ_{j,k} (B^{jk}(U) U_{x_k})_{x_j},     U ∈ Rⁿ,

with the partially symmetric form in the triangular coordinates W̃(U).
B^{jk} has r nonzero bottom rows; the top n − r (hyperbolic) rows vanish.

Arrays follow one convention throughout the package:
    flux(U)        → (d, n)
    jacobians      → (d, n, n)          index 0 is the normal direction x₁
    viscosity(U)   → (d, d, n, n)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from blayer_verify.configs.constants import FD_STEP_SCALE, SYMMETRY_TOL
from blayer_verify.errors import RejectedInputError

logger = logging.getLogger(__name__)

Array = np.ndarray


# ─── Data structures ──────────────────────────────────────────

@dataclass(frozen=True)
class SymmetrizedForm:
    """Ã⁰(W̃) W̃_t + Σ Ã^j W̃_{x_j} = Σ (B̃^{jk} W̃_{x_k})_{x_j} + g̃."""

    to_w: Callable[[Array], Array]
    from_w: Callable[[Array], Array]
    a0: Callable[[Array], Array]                  # (n, n)
    a: Callable[[Array], Array]                   # (d, n, n)
    b: Callable[[Array], Array]                   # (d, d, n, n)
    source: Callable[[Array, Array], Array] | None = None


@dataclass(frozen=True)
class SystemModel:
    """Immutable description of a conservation law; all evaluators are pure."""

    name: str
    d: int
    n: int
    r: int
    flux: Callable[[Array], Array]
    viscosity: Callable[[Array], Array] | None = None
    flux_jacobian: Callable[[Array], Array] | None = None
    symmetrized: SymmetrizedForm | None = None
    domain_check: Callable[[Array], str | None] | None = None
    hyperbolic_only: bool = False
    params: dict[str, Any] = field(default_factory=dict)
    default_endstate: tuple[float, ...] = ()
    # batched evaluators over (..., n) state arrays; optional
    flux_field: Callable[[Array], Array] | None = None          # → (..., d, n)
    viscosity_field: Callable[[Array], Array] | None = None     # → (..., d, d, n, n)

    @property
    def n_hyp(self) -> int:
        """Size n − r of the hyperbolic block."""
        return self.n - self.r

    def check_domain(self, U: Array) -> None:
        if not np.all(np.isfinite(U)):
            raise RejectedInputError(f"{self.name}: non-finite state {U}", state=np.asarray(U).tolist())
        if self.domain_check is not None:
            problem = self.domain_check(np.asarray(U))
            if problem:
                raise RejectedInputError(f"{self.name}: {problem}", state=np.asarray(U).tolist())

    def viscosity_at(self, U: Array) -> Array:
        if self.viscosity is None:
            return np.zeros((self.d, self.d, self.n, self.n))
        return np.asarray(self.viscosity(U), dtype=float)

    def flux_on(self, V: Array) -> Array:
        """F(V) for every state of a (..., n) array, shape (..., d, n)."""
        V = np.asarray(V, dtype=float)
        if self.flux_field is not None:
            return np.asarray(self.flux_field(V), dtype=float)
        flat = V.reshape(-1, self.n)
        out = np.array([self.flux(u) for u in flat], dtype=float)
        return out.reshape(V.shape[:-1] + (self.d, self.n))

    def viscosity_on(self, V: Array) -> Array:
        """B(V) for every state of a (..., n) array, shape (..., d, d, n, n)."""
        V = np.asarray(V, dtype=float)
        shape = V.shape[:-1] + (self.d, self.d, self.n, self.n)
        if self.viscosity is None:
            return np.zeros(shape)
        if self.viscosity_field is not None:
            return np.broadcast_to(self.viscosity_field(V), shape)
        flat = V.reshape(-1, self.n)
        return np.array([self.viscosity_at(u) for u in flat]).reshape(shape)

    def to_w(self, U: Array) -> Array:
        return self.symmetrized.to_w(U) if self.symmetrized else np.asarray(U, dtype=float)

    def from_w(self, W: Array) -> Array:
        return self.symmetrized.from_w(W) if self.symmetrized else np.asarray(W, dtype=float)


@dataclass(frozen=True)
class Endstate:
    """U₊ with the coefficients every module evaluates at +∞."""

    U: Array
    W: Array
    dF: Array                      # (d, n, n)
    B: Array                       # (d, d, n, n)
    A0_sym: Array | None = None
    A_sym: Array | None = None     # (d, n, n)
    B_sym: Array | None = None

    @classmethod
    def at(cls, system: SystemModel, U: Array) -> "Endstate":
        U = np.asarray(U, dtype=float)
        if U.shape != (system.n,):
            raise RejectedInputError(
                f"{system.name}: endstate must have {system.n} components, got {U.shape}"
            )
        system.check_domain(U)
        W = system.to_w(U)
        sym = system.symmetrized
        return cls(
            U=U,
            W=W,
            dF=jacobians(system, U),
            B=system.viscosity_at(U),
            A0_sym=None if sym is None else np.asarray(sym.a0(W), dtype=float),
            A_sym=None if sym is None else np.asarray(sym.a(W), dtype=float),
            B_sym=None if sym is None else np.asarray(sym.b(W), dtype=float),
        )


# ─── Differentiation ──────────────────────────────────────────

def fd_step(U: Array) -> float:
    """h = ε_mach^{1/3} · (1 + |U|)."""
    return FD_STEP_SCALE * (1.0 + float(np.linalg.norm(U)))


def fd_jacobian(fun: Callable[[Array], Array], U: Array) -> Array:
    """Central-difference Jacobian of ``fun`` at ``U``; output axes first, input last."""
    U = np.asarray(U, dtype=float)
    h = fd_step(U)
    cols = []
    for i in range(U.size):
        e = np.zeros_like(U)
        e[i] = h
        cols.append((np.asarray(fun(U + e)) - np.asarray(fun(U - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def directional_derivative(fun: Callable[[Array], Array], U: Array, V: Array) -> Array:
    """d/ds fun(U + sV) at s = 0 by central differences."""
    V = np.asarray(V)
    scale = float(np.linalg.norm(V))
    if scale == 0.0:
        return np.zeros_like(np.asarray(fun(U)), dtype=float)
    h = fd_step(U) / scale
    return (np.asarray(fun(U + h * V)) - np.asarray(fun(U - h * V))) / (2.0 * h)


def jacobians(system: SystemModel, U: Array) -> Array:
    """All flux Jacobians dF^j(U), shape (d, n, n)."""
    U = np.asarray(U, dtype=float)
    system.check_domain(U)
    if system.flux_jacobian is not None:
        return np.asarray(system.flux_jacobian(U), dtype=float)
    return fd_jacobian(system.flux, U)


def jacobian(system: SystemModel, j: int, U: Array) -> Array:
    """dF^j(U) for the axis j = 1..d (j = 1 is the boundary normal)."""
    if not 1 <= j <= system.d:
        raise RejectedInputError(f"axis {j} outside 1..{system.d}")
    return jacobians(system, U)[j - 1]


def viscosity_derivative(system: SystemModel, U: Array, V: Array) -> Array:
    """dB^{jk}(U)[V], shape (d, d, n, n)."""
    if system.viscosity is None:
        return np.zeros((system.d, system.d, system.n, system.n))
    return directional_derivative(system.viscosity_at, U, V)


def w_jacobian(system: SystemModel, U: Array) -> Array:
    """dW̃/dU at U."""
    if system.symmetrized is None:
        return np.eye(system.n)
    return fd_jacobian(system.to_w, U)


def symbol(jacs: Array, xi: Array) -> Array:
    """Σ_j ξ_j A^j for a (d, n, n) stack."""
    return np.tensordot(np.asarray(xi, dtype=float), jacs, axes=(0, 0))


def viscous_symbol(B: Array, xi: Array) -> Array:
    """Σ_{j,k} ξ_j ξ_k B^{jk}."""
    xi = np.asarray(xi, dtype=float)
    return np.einsum("j,k,jkab->ab", xi, xi, B)


# ─── Structural checks ────────────────────────────────────────

def check_block_structure(system: SystemModel, U: Array) -> list[str]:
    """Return the list of violated structural invariants at ``U`` (empty when all hold)."""
    problems: list[str] = []
    m = system.n_hyp
    B = system.viscosity_at(U)
    if m and np.max(np.abs(B[:, :, :m, :]), initial=0.0) > 0.0:
        problems.append("B^{jk} has nonzero hyperbolic rows")
    sym = system.symmetrized
    if sym is None:
        return problems
    W = sym.to_w(U)
    Bs = np.asarray(sym.b(W))
    if m and (np.max(np.abs(Bs[:, :, :m, :]), initial=0.0) > 0.0
              or np.max(np.abs(Bs[:, :, :, :m]), initial=0.0) > 0.0):
        problems.append("B̃^{jk} is not of the form diag(0, b̃)")
    if m:
        dW = fd_jacobian(sym.to_w, U)
        if np.max(np.abs(dW[:m, m:]), initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(dW))):
            problems.append("W̃ is not triangular: w̃^I depends on u^II")
    back = sym.from_w(W)
    if np.max(np.abs(back - U)) > 1e-10 * (1.0 + np.max(np.abs(U))):
        problems.append("W̃ inverse does not round-trip")
    return problems


def symmetry_residual(system: SystemModel, U: Array) -> float:
    """max |Ã − Ãᵀ| over Ã⁰ and all Ã^j at W̃(U); NaN without a symmetrized form."""
    sym = system.symmetrized
    if sym is None:
        return float("nan")
    W = sym.to_w(U)
    mats = [np.asarray(sym.a0(W))] + list(np.asarray(sym.a(W)))
    return float(max(np.max(np.abs(A - A.T)) for A in mats))


def is_symmetric(system: SystemModel, U: Array) -> bool:
    return symmetry_residual(system, U) <= SYMMETRY_TOL


# ─── Constant-coefficient builder ─────────────────────────────

def linear_system(
    name: str,
    A: list[Array] | Array,
    B: Array | None = None,
    r: int | None = None,
    *,
    params: dict[str, Any] | None = None,
) -> SystemModel:
    """
    Constant-coefficient system F^j(U) = A_j U, optional constant viscosity.

    Without ``B`` the model is flagged hyperbolic-only.  The symmetrized form
    is the identity change of variables with Ã⁰ = I.
    """
    A = np.asarray(A, dtype=float)
    d, n, _ = A.shape
    hyperbolic_only = B is None
    Bc = np.zeros((d, d, n, n)) if B is None else np.asarray(B, dtype=float)
    r = 0 if hyperbolic_only else (r if r is not None else n)

    sym = SymmetrizedForm(
        to_w=lambda U: np.asarray(U, dtype=float).copy(),
        from_w=lambda W: np.asarray(W, dtype=float).copy(),
        a0=lambda W: np.eye(n),
        a=lambda W: A.copy(),
        b=lambda W: Bc.copy(),
    )
    return SystemModel(
        name=name,
        d=d,
        n=n,
        r=r,
        flux=lambda U: A @ np.asarray(U, dtype=float),
        viscosity=None if hyperbolic_only else (lambda U: Bc.copy()),
        flux_jacobian=lambda U: A.copy(),
        symmetrized=sym,
        hyperbolic_only=hyperbolic_only,
        params=dict(params or {}),
        default_endstate=tuple(np.zeros(n)),
        flux_field=lambda V: np.einsum("jab,...b->...ja", A, V),
        viscosity_field=None if hyperbolic_only else (lambda V: Bc),
    )


def catalog_get(name: str, params: dict[str, Any] | None = None,
                endstate: Array | None = None) -> tuple[SystemModel, Endstate]:
    """Look up a bundled system and build its endstate (default or supplied)."""
    from blayer_verify.configs.systems_registry import catalog_get as _registry_get

    return _registry_get(name, params=params, endstate=endstate)


__all__ = [
    "SymmetrizedForm",
    "SystemModel",
    "Endstate",
    "fd_jacobian",
    "directional_derivative",
    "jacobians",
    "jacobian",
    "viscosity_derivative",
    "w_jacobian",
    "symbol",
    "viscous_symbol",
    "check_block_structure",
    "symmetry_residual",
    "is_symmetric",
    "linear_system",
    "catalog_get",
]
