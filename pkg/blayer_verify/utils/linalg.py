"""
linalg — Invariant subspaces, spectral projectors and exterior powers.

Eigenvalue selection goes through ordered complex Schur forms, so the
returned bases are orthonormal and well defined even at Jordan blocks.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

Array = np.ndarray


# ─── Ordered Schur forms ──────────────────────────────────────

@dataclass(frozen=True)
class SchurSplit:
    """A = Z T Zᴴ with the k selected eigenvalues leading the diagonal of T."""

    T: Array
    Z: Array
    k: int

    @property
    def basis(self) -> Array:
        """Orthonormal basis of the selected invariant subspace."""
        return self.Z[:, : self.k]

    @property
    def complement(self) -> Array:
        """Orthonormal basis of the orthogonal complement of the selected subspace."""
        return self.Z[:, self.k:]

    @property
    def selected_block(self) -> Array:
        return self.T[: self.k, : self.k]

    @property
    def remaining_block(self) -> Array:
        return self.T[self.k:, self.k:]


def ordered_schur(A: Array, mask: Array | Callable[[Array], Array]) -> SchurSplit:
    """
    Complex Schur form with a chosen eigenvalue set first.

    ``mask`` is either a boolean array aligned with ``scipy.linalg.eigvals(A)``
    or a predicate applied to that array.
    """
    A = np.asarray(A, dtype=complex)
    w = sla.eigvals(A)
    selected = np.asarray(mask(w) if callable(mask) else mask, dtype=bool)

    def pick(x):
        return bool(selected[np.argmin(np.abs(w - x))])

    T, Z, sdim = sla.schur(A, output="complex", sort=pick)
    expected = int(selected.sum())
    if sdim != expected:
        logger.debug("Schur reordering selected %d of %d requested eigenvalues", sdim, expected)
    return SchurSplit(T=T, Z=Z, k=int(sdim))


def decoupling(split: SchurSplit) -> Array:
    """Y with T₁₁Y − YT₂₂ = −T₁₂, so S = [[I, Y], [0, I]] block-diagonalizes T."""
    k = split.k
    T = split.T
    if k in (0, T.shape[0]):
        return np.zeros((k, T.shape[0] - k), dtype=complex)
    return sla.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])


def block_diagonalizer(split: SchurSplit) -> tuple[Array, Array]:
    """V and V⁻¹ with V⁻¹ A V = diag(T₁₁, T₂₂)."""
    k = split.k
    N = split.T.shape[0]
    Y = decoupling(split)
    S = np.eye(N, dtype=complex)
    S_inv = np.eye(N, dtype=complex)
    S[:k, k:] = Y
    S_inv[:k, k:] = -Y
    V = split.Z @ S
    V_inv = S_inv @ split.Z.conj().T
    return V, V_inv


def spectral_projector(A: Array, mask: Array | Callable[[Array], Array]) -> Array:
    """Projector onto the selected invariant subspace along its complement."""
    split = ordered_schur(A, mask)
    V, V_inv = block_diagonalizer(split)
    return V[:, : split.k] @ V_inv[: split.k, :]


def stable_mask(w: Array) -> Array:
    return np.real(w) < 0.0


def left_annihilator(basis: Array) -> Array:
    """Rows with orthonormal conjugates that annihilate span(basis)."""
    N = basis.shape[0]
    if basis.shape[1] == 0:
        return np.eye(N, dtype=complex)
    return sla.null_space(np.asarray(basis).conj().T).conj().T


# ─── Eigenvalue tracking and clustering ───────────────────────

def match_eigenvalues(previous: Array, current: Array) -> Array:
    """Permutation p with current[p[i]] the continuation of previous[i]."""
    cost = np.abs(np.asarray(previous)[:, None] - np.asarray(current)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)]


def continued_mask(matrices: Sequence[Array], initial: Array | Callable[[Array], Array]) -> Array:
    """
    Follow a selected eigenvalue set along a path of matrices.

    Returns the boolean mask (aligned with ``eigvals`` of the last matrix)
    of the eigenvalues that continue the initially selected ones.
    """
    w = sla.eigvals(np.asarray(matrices[0], dtype=complex))
    selected = np.asarray(initial(w) if callable(initial) else initial, dtype=bool)
    for A in matrices[1:]:
        w_next = sla.eigvals(np.asarray(A, dtype=complex))
        perm = match_eigenvalues(w, w_next)
        new_sel = np.zeros_like(selected)
        new_sel[perm] = selected
        w, selected = w_next, new_sel
    return selected


def cluster_values(values: Array, tol: float) -> list[list[int]]:
    """
    Group (possibly complex) values whose chained distances are ≤ tol.

    Groups are returned sorted by the real part of their mean, then imaginary.
    """
    values = np.asarray(values)
    n = values.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = [sorted(g) for g in groups.values()]
    out.sort(key=lambda g: (float(np.mean(np.real(values[g]))), float(np.mean(np.imag(values[g])))))
    return out


def numerical_rank(M: Array, tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


# ─── Exterior powers ──────────────────────────────────────────

@dataclass(frozen=True)
class CompoundStencil:
    """Index bookkeeping of the k-th additive compound of an N×N matrix."""

    N: int
    k: int
    combos: tuple[tuple[int, ...], ...]
    rows: Array
    cols: Array
    src_i: Array
    src_j: Array
    signs: Array

    @property
    def size(self) -> int:
        return len(self.combos)


def _sorted_with_sign(idx: list[int]) -> tuple[tuple[int, ...], int]:
    sign = 1
    arr = list(idx)
    for a in range(len(arr)):
        for b in range(len(arr) - 1 - a):
            if arr[b] > arr[b + 1]:
                arr[b], arr[b + 1] = arr[b + 1], arr[b]
                sign = -sign
    return tuple(arr), sign


def compound_stencil(N: int, k: int) -> CompoundStencil:
    """
    Precompute the sparse pattern of G^{(k)}: for every basis k-vector e_J and
    slot p, G e_{j_p} replaces e_{j_p}, contributing G[i, j_p] to e_{J with j_p→i}.
    """
    combos = tuple(itertools.combinations(range(N), k))
    index = {J: a for a, J in enumerate(combos)}
    rows, cols, si, sj, sg = [], [], [], [], []
    for b, J in enumerate(combos):
        for p, jp in enumerate(J):
            others = set(J) - {jp}
            for i in range(N):
                if i in others:
                    continue
                new = list(J)
                new[p] = i
                key, sign = _sorted_with_sign(new)
                rows.append(index[key])
                cols.append(b)
                si.append(i)
                sj.append(jp)
                sg.append(sign)
    return CompoundStencil(
        N=N,
        k=k,
        combos=combos,
        rows=np.array(rows, dtype=int),
        cols=np.array(cols, dtype=int),
        src_i=np.array(si, dtype=int),
        src_j=np.array(sj, dtype=int),
        signs=np.array(sg, dtype=float),
    )


def compound_matrix(G: Array, stencil: CompoundStencil) -> Array:
    """Additive k-th compound G^{(k)} acting on Λᵏ(C^N)."""
    M = np.zeros((stencil.size, stencil.size), dtype=np.result_type(G, float))
    np.add.at(M, (stencil.rows, stencil.cols), stencil.signs * G[stencil.src_i, stencil.src_j])
    return M


def plucker(basis: Array, stencil: CompoundStencil) -> Array:
    """Plücker coordinates of span(basis): all k×k row minors in stencil order."""
    return np.array([np.linalg.det(basis[list(J), :]) for J in stencil.combos])


def wedge_pairing(Gamma: Array, psi: Array, stencil: CompoundStencil) -> complex:
    """det(Γ Ψ) by Cauchy–Binet from the Plücker coordinates ψ of Ψ."""
    minors = np.array([np.linalg.det(Gamma[:, list(J)]) for J in stencil.combos])
    return complex(minors @ psi)


def binomial(N: int, k: int) -> int:
    return comb(N, k)


def real_subspace(basis: Array) -> tuple[Array, Array]:
    """
    Real orthonormal bases of a conjugation-invariant subspace and of its
    orthogonal complement.
    """
    N = basis.shape[0]
    if basis.shape[1] == 0:
        return np.zeros((N, 0)), np.eye(N)
    P = np.real(basis @ basis.conj().T)
    Q = sla.orth(P)
    return Q, sla.null_space(Q.T)
