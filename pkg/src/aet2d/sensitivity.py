"""Linearization of the power-density map and its exact discrete adjoint.

The conductivity-to-data derivative is a composition of linear maps on
the discrete level (per-triangle averaging, the constrained Neumann
solve, gradient pairings, and the vertex projection). Its adjoint is
implemented as the exact transpose of that composition with respect to
the mass-weighted data inner product and the selected domain inner
product, which makes the inner-product identity

    <dF h, w>_data = <h, adjoint(w)>_domain

hold to solver precision. Gradient-descent stepsizes rely on this, so
the adjoint deliberately transposes the implemented discretization
instead of re-discretizing the continuous adjoint.
"""

from __future__ import annotations

import numpy as np

from .fem import GramSolver, NodalField
from .forward import (
    ForwardState,
    gradient_on_triangles,
    project_to_vertices,
    pullback_to_triangles,
)


def _triangle_average(mesh, values: np.ndarray) -> np.ndarray:
    return values[mesh.triangles].mean(axis=1)


def _triangle_average_t(mesh, tri_values: np.ndarray) -> np.ndarray:
    """Transpose of the vertex->triangle averaging (scatter by thirds)."""
    return np.bincount(
        mesh.triangles.ravel(),
        weights=np.repeat(tri_values / 3.0, 3),
        minlength=mesh.num_vertices,
    )


def _directional_pairing(state: ForwardState, j: int, values: np.ndarray) -> np.ndarray:
    """(T,) pairing grad(u_j) . grad(field) per triangle."""
    return np.einsum(
        "td,td->t", state.grad_u[j], gradient_on_triangles(state.mesh, values)
    )


def _directional_pairing_t(state: ForwardState, j: int, tri_values: np.ndarray) -> np.ndarray:
    """Transpose of ``_directional_pairing``: triangle weights -> vertex vector.

    Component i is sum_T w_T (grad u_j . grad phi_i)_T.
    """
    mesh = state.mesh
    contrib = np.einsum("tcd,td->tc", mesh.hat_gradients, state.grad_u[j]) * tri_values[:, None]
    return np.bincount(
        mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.num_vertices
    )


def linearized_potential(state: ForwardState, j: int, h: NodalField) -> NodalField:
    """Potential perturbation for a conductivity perturbation h.

    Solves the zero-mean weak problem
    int sigma grad(u') . grad(v) = -int h grad(u_j) . grad(v) for all v,
    reusing the forward factorization of K(sigma).
    """
    rhs = -_linearized_rhs(state, j, h.values)
    return NodalField(state.mesh, state.solver.solve(rhs))


def _linearized_rhs(state: ForwardState, j: int, h_values: np.ndarray) -> np.ndarray:
    mesh = state.mesh
    h_tri = _triangle_average(mesh, h_values)
    return _directional_pairing_t(state, j, h_tri * mesh.triangle_areas)


def derivative_apply(state: ForwardState, h: NodalField) -> list[NodalField]:
    """Directional derivative of the forward map: one field per measurement.

    Per triangle the perturbation is h |grad u_j|^2 + 2 sigma grad u_j .
    grad(u'_j), projected to vertices like the power density itself. The
    linearized solves for all measurements share one back-substitution.
    """
    mesh = state.mesh
    h_tri = _triangle_average(mesh, h.values)
    rhs = np.column_stack(
        [
            -_directional_pairing_t(state, j, h_tri * mesh.triangle_areas)
            for j in range(state.num_measurements)
        ]
    )
    uprime = state.solver.solve(rhs)
    out = []
    for j in range(state.num_measurements):
        tri = state.grad_sq[j] * h_tri + 2.0 * state.sigma_tri * _directional_pairing(
            state, j, uprime[:, j]
        )
        out.append(NodalField(mesh, project_to_vertices(mesh, tri)))
    return out


def adjoint_state(state: ForwardState, j: int, w: NodalField) -> NodalField:
    """Auxiliary adjoint potential for a vertex data field w.

    Zero-mean solution of
    int sigma grad(z) . grad(v) = -int sigma w grad(u_j) . grad(v),
    with sigma and w entering through their per-triangle averages.
    """
    mesh = state.mesh
    w_tri = _triangle_average(mesh, w.values)
    rhs = -_directional_pairing_t(
        state, j, state.sigma_tri * w_tri * mesh.triangle_areas
    )
    return NodalField(mesh, state.solver.solve(rhs))


def adjoint_apply(
    state: ForwardState, w: list[NodalField], gram: GramSolver
) -> NodalField:
    """Adjoint of ``derivative_apply`` applied to a stack of data fields.

    Exact transpose of the discrete derivative: data fields are pulled
    back to triangles through the mass-weighted vertex projection, the
    adjoint potentials reuse the forward factorization, and the final
    Gram solve maps the accumulated functional into the domain space
    selected by ``gram`` (for the L2 inner product this reduces to a
    mass solve, i.e. the plain L2 adjoint with no extra smoothing).
    """
    if len(w) != state.num_measurements:
        raise ValueError(
            f"expected {state.num_measurements} data fields, got {len(w)}"
        )
    mesh = state.mesh
    q = [
        pullback_to_triangles(mesh, gram.mass @ w[j].values)
        for j in range(state.num_measurements)
    ]
    rhs = np.column_stack(
        [
            _directional_pairing_t(state, j, state.sigma_tri * q[j])
            for j in range(state.num_measurements)
        ]
    )
    z = state.solver.solve(rhs)
    dual = np.zeros(mesh.num_vertices)
    for j in range(state.num_measurements):
        tri = state.grad_sq[j] * q[j] - 2.0 * mesh.triangle_areas * _directional_pairing(
            state, j, z[:, j]
        )
        dual += _triangle_average_t(mesh, tri)
    return NodalField(mesh, gram.solve_dual(dual))
