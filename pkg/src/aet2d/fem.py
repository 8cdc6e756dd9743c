"""P1 finite-element assembly and constrained Neumann solves.

Conventions used throughout the package:

* conductivity is piecewise linear in the vertices and enters element
  integrals through its per-triangle vertex average;
* pure-Neumann systems are closed with a single Lagrange multiplier
  enforcing the zero-mean constraint (bordered symmetric system, direct
  sparse factorization);
* the second-order block of the weighted Sobolev inner product uses the
  lumped-mass discrete Laplacian surrogate, which is the standard
  spectrally equivalent stand-in for P1 elements.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .mesh import BoundaryArc, Mesh, accessible_boundary_edges

# Default admissibility floor for conductivities.
DEFAULT_SIGMA_FLOOR = 0.1

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class SolverError(RuntimeError):
    """A linear solve failed to reach its residual tolerance."""


class CompatibilityWarning(UserWarning):
    """Neumann load with a nonzero total flux; the solver projects it out."""


@dataclass
class NodalField:
    """Piecewise-linear scalar field given by one coefficient per vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.num_vertices,):
            raise ValueError(
                f"expected {self.mesh.num_vertices} coefficients, "
                f"got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "NodalField":
        return cls(mesh, np.full(mesh.num_vertices, float(value)))


@dataclass(frozen=True)
class InnerProductSpec:
    """Domain-space inner product: L2, H2, or weighted H2.

    ``H2`` is the weighted form with all weights 1; ``L2`` keeps only the
    zeroth-order block (the Gram matrix degenerates to the mass matrix).
    """

    mode: str
    beta0: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0

    _MODES = ("L2", "H2", "H2_beta")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise ValueError(f"mode must be one of {self._MODES}, got {self.mode!r}")
        if min(self.beta0, self.beta1, self.beta2) <= 0.0:
            raise ValueError("inner-product weights must be positive")

    @classmethod
    def l2(cls) -> "InnerProductSpec":
        return cls("L2")

    @classmethod
    def h2(cls) -> "InnerProductSpec":
        return cls("H2")

    @classmethod
    def h2_beta(cls, beta0=1.0, beta1=1e-3, beta2=1e-6) -> "InnerProductSpec":
        return cls("H2_beta", beta0, beta1, beta2)


def sigma_on_triangles(mesh: Mesh, sigma_values: np.ndarray) -> np.ndarray:
    """Per-triangle conductivity as the vertex average."""
    return sigma_values[mesh.triangles].mean(axis=1)


def _scatter_symmetric(mesh: Mesh, local: np.ndarray) -> sparse.csr_matrix:
    t = mesh.triangles
    rows = np.broadcast_to(t[:, :, None], local.shape)
    cols = np.broadcast_to(t[:, None, :], local.shape)
    v = mesh.num_vertices
    return sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(v, v)
    ).tocsr()


def assemble_stiffness(
    mesh: Mesh,
    sigma: NodalField,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> sparse.csr_matrix:
    """Stiffness matrix K(sigma)_ij = sum_T sigma_T int_T grad(phi_i).grad(phi_j).

    The conductivity must stay at or above ``sigma_floor`` everywhere;
    K is symmetric positive semidefinite with the constants as kernel.
    """
    smin = float(np.min(sigma.values))
    if smin < sigma_floor:
        raise ValueError(
            f"conductivity below admissibility floor: min {smin} < {sigma_floor}"
        )
    sig_t = sigma_on_triangles(mesh, sigma.values)
    return _scatter_symmetric(mesh, sig_t[:, None, None] * mesh.local_stiffness)


def unit_stiffness(mesh: Mesh) -> sparse.csr_matrix:
    """Stiffness matrix for unit conductivity (no admissibility check)."""
    return _scatter_symmetric(mesh, mesh.local_stiffness)


_MASS_BASE = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: Mesh) -> sparse.csr_matrix:
    """Mass matrix M_ij = int phi_i phi_j (exact for P1 x P1)."""
    local = mesh.triangle_areas[:, None, None] * _MASS_BASE
    return _scatter_symmetric(mesh, local)


def assemble_weighted_mass(mesh: Mesh, tri_weights: np.ndarray) -> sparse.csr_matrix:
    """Mass matrix weighted by a piecewise-constant factor c_T."""
    local = (tri_weights * mesh.triangle_areas)[:, None, None] * _MASS_BASE
    return _scatter_symmetric(mesh, local)


def assemble_boundary_load(
    mesh: Mesh,
    g: Callable[[np.ndarray], np.ndarray],
    arc: BoundaryArc,
) -> np.ndarray:
    """Load vector b_i = int_{Gamma(alpha)} g phi_i ds (2-point Gauss per edge).

    ``g`` is evaluated at the polar angle of each quadrature point. Emits
    ``CompatibilityWarning`` when the total flux fails to vanish relative
    to the load norm; the zero-mean solver projects such loads anyway.
    """
    b = np.zeros(mesh.num_vertices)
    idx = accessible_boundary_edges(mesh, arc)
    if idx.size:
        edges = mesh.boundary_edges[idx]
        p0 = mesh.vertices[edges[:, 0]]
        p1 = mesh.vertices[edges[:, 1]]
        lengths = np.linalg.norm(p1 - p0, axis=1)
        for t in _GAUSS2:
            pts = p0 + t * (p1 - p0)
            theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
            vals = np.asarray(g(theta)) * lengths / 2.0
            np.add.at(b, edges[:, 0], (1.0 - t) * vals)
            np.add.at(b, edges[:, 1], t * vals)
    total = abs(b.sum())
    norm = np.linalg.norm(b)
    if norm > 0.0 and total > 1e-8 * norm:
        warnings.warn(
            f"boundary load has nonzero total flux ({total:.3e} vs |b|={norm:.3e})",
            CompatibilityWarning,
            stacklevel=2,
        )
    return b


class ZeroMeanSolver:
    """Direct solver for K u = b subject to int u = 0.

    Bordered symmetric system with the weighted mean as the constraint
    row; factorized once, then reused for many right-hand sides (pass a
    2D array to solve several simultaneously).
    """

    def __init__(self, K: sparse.spmatrix, mesh: Mesh, mass: sparse.spmatrix | None = None):
        m = assemble_mass(mesh) if mass is None else mass
        self.mean_row = np.asarray(m.sum(axis=1)).ravel()
        n = K.shape[0]
        bordered = sparse.bmat(
            [[K, self.mean_row[:, None]], [self.mean_row[None, :], None]],
            format="csc",
        )
        self._lu = splu(bordered)
        self._n = n

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve for one RHS (V,) or a stack of them (V, k)."""
        u, _ = self.solve_with_multiplier(b)
        return u

    def solve_with_multiplier(self, b: np.ndarray):
        b = np.asarray(b, dtype=np.float64)
        single = b.ndim == 1
        cols = b.reshape(self._n, -1)
        rhs = np.vstack([cols, np.zeros((1, cols.shape[1]))])
        x = self._lu.solve(rhs)
        u, lam = x[: self._n], x[self._n]
        if single:
            return u[:, 0], float(lam[0])
        return u, lam


def solve_neumann_zero_mean(
    K: sparse.spmatrix, b: np.ndarray, mesh: Mesh
) -> NodalField:
    """Solve the pure-Neumann system with the zero-mean constraint.

    Raises ``SolverError`` if the residual of the bordered system exceeds
    1e-10 relative to the load.
    """
    solver = ZeroMeanSolver(K, mesh)
    u, lam = solver.solve_with_multiplier(b)
    resid = np.linalg.norm(K @ u + lam * solver.mean_row - b)
    bnorm = np.linalg.norm(b)
    if bnorm > 0.0 and resid > 1e-10 * bnorm:
        raise SolverError(
            f"Neumann solve residual {resid:.3e} exceeds 1e-10 * |b| = {1e-10 * bnorm:.3e}"
        )
    return NodalField(mesh, u)


def gram_matrix(mesh: Mesh, spec: InnerProductSpec) -> sparse.csr_matrix:
    """Gram matrix of the selected domain inner product.

    L2: the mass matrix. H2 / H2_beta: beta0*M + beta1*K1 + beta2*G2 with
    K1 the unit-conductivity stiffness and G2 = L^T M L the discrete
    Laplacian surrogate (L = lumped-mass inverse times K1); symmetric
    positive definite for positive weights.
    """
    m = assemble_mass(mesh)
    if spec.mode == "L2":
        return m
    k1 = unit_stiffness(mesh)
    lump_inv = sparse.diags(1.0 / np.asarray(m.sum(axis=1)).ravel())
    lap = lump_inv @ k1
    g2 = (lap.T @ m @ lap).tocsr()
    g = (spec.beta0 * m + spec.beta1 * k1 + spec.beta2 * g2).tocsr()
    return ((g + g.T) * 0.5).tocsr()


class GramSolver:
    """Factorized Gram matrix of a domain inner product.

    Provides the embedding-adjoint solve (G x = M w), the plain dual
    solve (G x = y, for right-hand sides that are already functionals),
    and the induced norm. Build once per (mesh, spec) and reuse.
    """

    def __init__(self, mesh: Mesh, spec: InnerProductSpec):
        self.mesh = mesh
        self.spec = spec
        self.mass = assemble_mass(mesh)
        self.gram = self.mass if spec.mode == "L2" else gram_matrix(mesh, spec)
        self._lu = splu(self.gram.tocsc())

    def solve_dual(self, y: np.ndarray) -> np.ndarray:
        return self._lu.solve(y)

    def embedding_adjoint(self, w: np.ndarray) -> np.ndarray:
        return self._lu.solve(self.mass @ w)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.gram @ b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


def embedding_adjoint(w: NodalField, spec: InnerProductSpec) -> NodalField:
    """Riesz-type solve turning an L2 functional into a domain-space field.

    Returns x with <x, v>_G = <w, v>_L2 for all nodal v; for mode L2 this
    is w itself (G equals the mass matrix).
    """
    if spec.mode == "L2":
        return NodalField(w.mesh, w.values.copy())
    solver = GramSolver(w.mesh, spec)
    return NodalField(w.mesh, solver.embedding_adjoint(w.values))


def l2_inner(mass: sparse.spmatrix, a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ (mass @ b))


def l2_norm(mass: sparse.spmatrix, a: np.ndarray) -> float:
    return float(np.sqrt(max(l2_inner(mass, a, a), 0.0)))
