"""Boundary-current families, potential solves, and power densities.

The forward map takes a conductivity to the stack of interior power
densities, one per applied boundary current. Per-triangle quantities
(P1 gradients are piecewise constant) are projected to vertex fields by
area-weighted averaging over the incident triangles, so the data space
shares the nodal basis of the domain space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import NodalField, ZeroMeanSolver, assemble_boundary_load, assemble_mass, assemble_stiffness
from .mesh import FULL_CIRCLE, BoundaryArc, Mesh, generate_disk_mesh, interpolate
from .phantom import PhantomSpec, phantom_field

FAMILIES = ("trig_limited", "special_full")


@dataclass(frozen=True)
class BoundaryCurrent:
    """One applied boundary current density.

    ``trig_limited``: sin(2*j*pi*theta/alpha) supported on the arc
    [0, alpha], zero elsewhere (j >= 1). ``special_full``: the three
    full-circle currents sin(theta), cos(theta), (sin+cos)/sqrt(2)
    (j in {1, 2, 3}); their unit-conductivity potentials are the linear
    fields y, x, (x + y)/sqrt(2).
    """

    family: str
    j: int
    arc: BoundaryArc | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "trig_limited":
            if self.j < 1:
                raise ValueError("trig_limited requires j >= 1")
            if self.arc is None:
                raise ValueError("trig_limited requires an arc")
        else:
            if self.j not in (1, 2, 3):
                raise ValueError("special_full requires j in {1, 2, 3}")

    @property
    def effective_arc(self) -> BoundaryArc:
        return self.arc if self.arc is not None else FULL_CIRCLE


def boundary_current_eval(bc: BoundaryCurrent, theta) -> np.ndarray:
    """Evaluate the current density at polar angle(s) theta."""
    theta = np.asarray(theta, dtype=np.float64)
    if bc.family == "trig_limited":
        alpha = bc.arc.alpha
        inside = theta <= alpha
        return np.where(inside, np.sin(2.0 * bc.j * math.pi * theta / alpha), 0.0)
    if bc.j == 1:
        return np.sin(theta)
    if bc.j == 2:
        return np.cos(theta)
    return (np.sin(theta) + np.cos(theta)) / math.sqrt(2.0)


@dataclass(frozen=True)
class MeasurementSet:
    """Ordered collection of boundary currents driving one experiment."""

    currents: tuple[BoundaryCurrent, ...]

    def __post_init__(self):
        if len(self.currents) < 1:
            raise ValueError("a measurement set needs at least one boundary current")
        arcs = {bc.arc.alpha for bc in self.currents if bc.family == "trig_limited"}
        if len(arcs) > 1:
            raise ValueError("all trig_limited currents must share the same arc")

    def __len__(self) -> int:
        return len(self.currents)

    def __iter__(self):
        return iter(self.currents)

    @classmethod
    def trig(cls, alpha: float, indices=(1, 2, 3)) -> "MeasurementSet":
        arc = BoundaryArc(alpha)
        return cls(tuple(BoundaryCurrent("trig_limited", j, arc) for j in indices))

    @classmethod
    def special(cls, indices=(1, 2, 3)) -> "MeasurementSet":
        return cls(tuple(BoundaryCurrent("special_full", j) for j in indices))


@dataclass
class ForwardState:
    """Potentials and power densities for one conductivity.

    Also carries the pieces that the sensitivity computations reuse: the
    factorized zero-mean solver for K(sigma), the per-triangle
    conductivity, and the per-triangle potential gradients.
    """

    sigma: NodalField
    potentials: list[NodalField]
    power_densities: list[NodalField]
    solver: ZeroMeanSolver = field(repr=False)
    sigma_tri: np.ndarray = field(repr=False)
    grad_u: list[np.ndarray] = field(repr=False)  # per measurement, (T, 2)
    grad_sq: list[np.ndarray] = field(repr=False)  # per measurement, (T,)

    @property
    def mesh(self) -> Mesh:
        return self.sigma.mesh

    @property
    def num_measurements(self) -> int:
        return len(self.potentials)


def project_to_vertices(mesh: Mesh, tri_values: np.ndarray) -> np.ndarray:
    """Area-weighted average of per-triangle values over incident triangles."""
    w = np.bincount(
        mesh.triangles.ravel(),
        weights=np.repeat(tri_values * mesh.triangle_areas, 3),
        minlength=mesh.num_vertices,
    )
    return w / mesh.vertex_patch_areas


def pullback_to_triangles(mesh: Mesh, vertex_dual: np.ndarray) -> np.ndarray:
    """Transpose of ``project_to_vertices`` (vertex functional -> triangles)."""
    scaled = vertex_dual / mesh.vertex_patch_areas
    return scaled[mesh.triangles].sum(axis=1) * mesh.triangle_areas


def gradient_on_triangles(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """(T, 2) piecewise-constant gradient of a nodal field."""
    return np.einsum("tc,tcd->td", values[mesh.triangles], mesh.hat_gradients)


def power_density(sigma: NodalField, u: NodalField) -> NodalField:
    """Power density sigma * |grad u|^2 as a vertex field (nonnegative)."""
    mesh = sigma.mesh
    grad = gradient_on_triangles(mesh, u.values)
    tri_vals = fem.sigma_on_triangles(mesh, sigma.values) * np.einsum(
        "td,td->t", grad, grad
    )
    return NodalField(mesh, project_to_vertices(mesh, tri_vals))


def measurement_loads(mesh: Mesh, ms: MeasurementSet) -> np.ndarray:
    """(V, M) boundary load vectors, one column per boundary current."""
    return np.column_stack(
        [
            assemble_boundary_load(
                mesh, lambda th, bc=bc: boundary_current_eval(bc, th), bc.effective_arc
            )
            for bc in ms
        ]
    )


def solve_measurement_set(
    sigma: NodalField,
    ms: MeasurementSet,
    sigma_floor: float = fem.DEFAULT_SIGMA_FLOOR,
    loads: np.ndarray | None = None,
) -> ForwardState:
    """Solve all boundary-current potentials and their power densities.

    One factorization of K(sigma) is shared by every measurement; the
    loads are solved as a single multi-RHS back-substitution. Callers
    looping over conductivities can precompute ``loads`` once.
    """
    mesh = sigma.mesh
    K = assemble_stiffness(mesh, sigma, sigma_floor)
    solver = ZeroMeanSolver(K, mesh)
    if loads is None:
        loads = measurement_loads(mesh, ms)
    sols = solver.solve(loads)
    sigma_tri = fem.sigma_on_triangles(mesh, sigma.values)

    potentials, densities, grads, grads_sq = [], [], [], []
    for col in range(sols.shape[1]):
        u = sols[:, col]
        g = gradient_on_triangles(mesh, u)
        gsq = np.einsum("td,td->t", g, g)
        potentials.append(NodalField(mesh, u))
        densities.append(NodalField(mesh, project_to_vertices(mesh, sigma_tri * gsq)))
        grads.append(g)
        grads_sq.append(gsq)
    return ForwardState(
        sigma=sigma,
        potentials=potentials,
        power_densities=densities,
        solver=solver,
        sigma_tri=sigma_tri,
        grad_u=grads,
        grad_sq=grads_sq,
    )


def determinant_diagnostic(u1: NodalField, u2: NodalField):
    """Per-triangle det(grad u1, grad u2) and its minimum absolute value.

    A minimum bounded away from zero indicates a stable two-measurement
    configuration.
    """
    if u1.mesh is not u2.mesh:
        raise ValueError("fields must share a mesh")
    g1 = gradient_on_triangles(u1.mesh, u1.values)
    g2 = gradient_on_triangles(u2.mesh, u2.values)
    det = g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0]
    return det, float(np.min(np.abs(det)))


def stack_fields(fields: list[NodalField]) -> np.ndarray:
    return np.stack([f.values for f in fields])


def unstack_fields(mesh: Mesh, values: np.ndarray) -> list[NodalField]:
    return [NodalField(mesh, row) for row in values]


def data_norm(mesh: Mesh, fields: list[NodalField]) -> float:
    """Stacked data-space L2 norm (mass-weighted over all measurements)."""
    m = assemble_mass(mesh)
    return float(
        np.sqrt(sum(float(f.values @ (m @ f.values)) for f in fields))
    )


def simulate_data(
    spec: PhantomSpec,
    ms: MeasurementSet,
    recon_mesh: Mesh,
    fine_vertex_count: int = 40000,
    fine_mesh: Mesh | None = None,
    sigma_floor: float = fem.DEFAULT_SIGMA_FLOOR,
):
    """Synthesize power-density data on a finer mesh and transfer it.

    Generating the data on a mesh with many more vertices than the
    reconstruction mesh and interpolating back avoids the inverse crime
    of inverting the same discretization that produced the data.

    Returns
    -------
    data : list of NodalField
        Power densities on the reconstruction mesh.
    fine_state : ForwardState
        The fine-mesh forward solution (reusable across arcs).
    """
    if fine_mesh is None:
        fine_mesh = generate_disk_mesh(fine_vertex_count)
    sigma_fine = phantom_field(spec, fine_mesh)
    state = solve_measurement_set(sigma_fine, ms, sigma_floor)
    data = [
        NodalField(recon_mesh, interpolate(fine_mesh, e.values, recon_mesh.vertices))
        for e in state.power_densities
    ]
    return data, state
