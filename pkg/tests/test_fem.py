import math

import numpy as np
import pytest
from scipy.sparse.linalg import splu

from aet2d.fem import (
    CompatibilityWarning,
    GramSolver,
    InnerProductSpec,
    NodalField,
    ZeroMeanSolver,
    assemble_boundary_load,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    embedding_adjoint,
    gram_matrix,
    l2_norm,
    solve_neumann_zero_mean,
)
from aet2d.mesh import BoundaryArc, Mesh

FULL = BoundaryArc(2.0 * math.pi)


@pytest.fixture(scope="module")
def reference_triangle():
    return Mesh(
        vertices=[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
        triangles=[(0, 1, 2)],
        boundary_edges=[(0, 1), (1, 2), (2, 0)],
        boundary_edge_angles=[0.0, 0.0, 0.0],
    )


def test_local_stiffness_reference_triangle(reference_triangle):
    # hand integration of P1 gradients on the unit right triangle
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    k = assemble_stiffness(reference_triangle, NodalField.constant(reference_triangle, 1.0))
    assert np.allclose(k.toarray(), expected, atol=1e-14)


def test_local_mass_reference_triangle(reference_triangle):
    # exact quadratic quadrature: (area/12) * [[2,1,1],[1,2,1],[1,1,2]]
    expected = (0.5 / 12.0) * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    m = assemble_mass(reference_triangle)
    assert np.allclose(m.toarray(), expected, atol=1e-15)


def test_stiffness_kernel_constants(mesh500):
    k = assemble_stiffness(mesh500, NodalField.constant(mesh500, 1.0))
    assert np.max(np.abs(k @ np.ones(mesh500.num_vertices))) <= 1e-12


def test_stiffness_scales_exactly(mesh500):
    k1 = assemble_stiffness(mesh500, NodalField.constant(mesh500, 1.0))
    k2 = assemble_stiffness(mesh500, NodalField.constant(mesh500, 2.0))
    assert (k2 - 2.0 * k1).nnz == 0


def test_stiffness_linear_in_sigma(mesh500, rng):
    s1 = NodalField(mesh500, rng.uniform(0.5, 1.5, mesh500.num_vertices))
    s2 = NodalField(mesh500, rng.uniform(0.5, 1.5, mesh500.num_vertices))
    combo = NodalField(mesh500, 1.5 * s1.values + 2.5 * s2.values)
    lhs = assemble_stiffness(mesh500, combo).toarray()
    rhs = 1.5 * assemble_stiffness(mesh500, s1).toarray() + 2.5 * assemble_stiffness(
        mesh500, s2
    ).toarray()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_stiffness_rejects_inadmissible(mesh500):
    bad = np.ones(mesh500.num_vertices)
    bad[7] = 0.05
    with pytest.raises(ValueError, match="admissibility"):
        assemble_stiffness(mesh500, NodalField(mesh500, bad))


def test_mass_partition_of_unity(mesh500):
    m = assemble_mass(mesh500)
    ones = np.ones(mesh500.num_vertices)
    assert abs(ones @ (m @ ones) - mesh500.total_area) <= 1e-12
    assert np.max(np.abs((m - m.T).toarray())) <= 1e-12


def test_weighted_mass_matches_mass(mesh200):
    w = np.ones(mesh200.num_triangles)
    assert (assemble_weighted_mass(mesh200, w) - assemble_mass(mesh200)).nnz == 0


def test_boundary_load_zero(mesh500):
    b = assemble_boundary_load(mesh500, lambda th: np.zeros_like(th), FULL)
    assert np.all(b == 0.0)


def test_boundary_load_sin_full_circle(mesh2000):
    b = assemble_boundary_load(mesh2000, np.sin, FULL)
    assert abs(b.sum()) <= 1e-10
    # b . y approximates the boundary integral of sin^2 = pi
    assert abs(b @ mesh2000.vertices[:, 1] - math.pi) <= 0.01 * math.pi


def test_boundary_load_incompatible_warns(mesh500):
    with pytest.warns(CompatibilityWarning):
        assemble_boundary_load(
            mesh500, lambda th: np.ones_like(th), BoundaryArc(math.pi / 2)
        )


def test_limited_angle_load_vanishes_off_arc(mesh500):
    arc = BoundaryArc(math.pi / 2)
    b = assemble_boundary_load(mesh500, lambda th: np.sin(4.0 * th), arc)
    onarc = np.unique(
        mesh500.boundary_edges[mesh500.boundary_edge_angles <= arc.alpha]
    )
    mask = np.ones(mesh500.num_vertices, dtype=bool)
    mask[onarc] = False
    assert np.all(b[mask] == 0.0)


def test_neumann_solve_zero_load(mesh500):
    k = assemble_stiffness(mesh500, NodalField.constant(mesh500, 1.0))
    u = solve_neumann_zero_mean(k, np.zeros(mesh500.num_vertices), mesh500)
    assert np.all(u.values == 0.0)


def test_neumann_solve_matches_harmonic(mesh2000):
    # sigma = 1, g = sin(theta): the solution is u = r sin(theta) = y
    k = assemble_stiffness(mesh2000, NodalField.constant(mesh2000, 1.0))
    b = assemble_boundary_load(mesh2000, np.sin, FULL)
    u = solve_neumann_zero_mean(k, b, mesh2000)
    m = assemble_mass(mesh2000)
    y = mesh2000.vertices[:, 1]
    assert l2_norm(m, u.values - y) / l2_norm(m, y) <= 0.02


def test_neumann_solve_zero_mean_and_residual(mesh500, rng):
    k = assemble_stiffness(mesh500, NodalField.constant(mesh500, 1.3))
    b = assemble_boundary_load(mesh500, np.sin, FULL)
    solver = ZeroMeanSolver(k, mesh500)
    u, lam = solver.solve_with_multiplier(b)
    assert abs(solver.mean_row @ u) <= 1e-10 * np.linalg.norm(u) * mesh500.total_area
    assert np.linalg.norm(k @ u + lam * solver.mean_row - b) <= 1e-10 * np.linalg.norm(b)


def test_neumann_solution_scales_with_sigma(mesh500):
    b = assemble_boundary_load(mesh500, np.sin, FULL)
    k1 = assemble_stiffness(mesh500, NodalField.constant(mesh500, 1.0))
    k3 = assemble_stiffness(mesh500, NodalField.constant(mesh500, 3.0))
    u1 = solve_neumann_zero_mean(k1, b, mesh500).values
    u3 = solve_neumann_zero_mean(k3, b, mesh500).values
    assert np.allclose(u3, u1 / 3.0, rtol=1e-12, atol=1e-14)


def test_gram_l2_is_mass(mesh500):
    g = gram_matrix(mesh500, InnerProductSpec.l2())
    assert (g - assemble_mass(mesh500)).nnz == 0


def test_gram_constant_field(mesh500):
    spec = InnerProductSpec.h2_beta(2.0, 1e-3, 1e-6)
    g = gram_matrix(mesh500, spec)
    c = 0.7 * np.ones(mesh500.num_vertices)
    assert abs(c @ (g @ c) -  2.0 * 0.49 * mesh500.total_area) <= 1e-10


def test_gram_positive_definite_power_iteration(mesh500, rng):
    # power iteration on G^{-1} estimates 1/lambda_min(G)
    g = gram_matrix(mesh500, InnerProductSpec.h2_beta())
    lu = splu(g.tocsc())
    x = rng.standard_normal(mesh500.num_vertices)
    lam = 0.0
    for _ in range(200):
        x = lu.solve(x)
        lam = np.linalg.norm(x)
        x /= lam
    assert lam > 0.0 and np.isfinite(lam)
    assert 1.0 / lam > 0.0


@pytest.mark.parametrize("bad", [("L1",), ("H2_beta", -1.0)])
def test_inner_product_spec_validation(bad):
    with pytest.raises(ValueError):
        InnerProductSpec(*bad)


def test_embedding_adjoint_zero(mesh500):
    out = embedding_adjoint(NodalField.constant(mesh500, 0.0), InnerProductSpec.h2())
    assert np.max(np.abs(out.values)) <= 1e-14


def test_embedding_adjoint_constant(mesh500):
    out = embedding_adjoint(
        NodalField.constant(mesh500, 0.9), InnerProductSpec.h2_beta(1.0, 1e-3, 1e-6)
    )
    assert np.max(np.abs(out.values - 0.9)) <= 1e-8


def test_embedding_adjoint_pairing(mesh500, rng):
    spec = InnerProductSpec.h2_beta()
    g = gram_matrix(mesh500, spec)
    m = assemble_mass(mesh500)
    w = rng.standard_normal(mesh500.num_vertices)
    x = embedding_adjoint(NodalField(mesh500, w), spec).values
    for _ in range(10):
        v = rng.standard_normal(mesh500.num_vertices)
        lhs = x @ (g @ v)
        rhs = w @ (m @ v)
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs))


def test_embedding_adjoint_l2_identity(mesh500, rng):
    w = NodalField(mesh500, rng.standard_normal(mesh500.num_vertices))
    out = embedding_adjoint(w, InnerProductSpec.l2())
    assert np.array_equal(out.values, w.values)


def test_embedding_self_adjoint(mesh500, rng):
    # w1^T M G^{-1} M w2 must be symmetric in (w1, w2)
    gram = GramSolver(mesh500, InnerProductSpec.h2_beta())
    w1 = rng.standard_normal(mesh500.num_vertices)
    w2 = rng.standard_normal(mesh500.num_vertices)
    a = w1 @ (gram.mass @ gram.solve_dual(gram.mass @ w2))
    b = w2 @ (gram.mass @ gram.solve_dual(gram.mass @ w1))
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b))


def test_nodal_field_validation(mesh200):
    with pytest.raises(ValueError):
        NodalField(mesh200, np.ones(mesh200.num_vertices - 1))
    bad = np.ones(mesh200.num_vertices)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        NodalField(mesh200, bad)
