import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import null_space

from pdmmlab.algebra import bound_curve, build_constraint_system, expected_zperp, subspace_projector
from pdmmlab.graph import Graph, complete_graph, cycle_graph, generate_rgg, path_graph

U_TRI = np.array([1, -1, 1, 1, -1, 1]) / np.sqrt(6)


def perp_oracle(cs):
    """Projector onto ker(C^T) & ker((PC)^T) from scipy's null space."""
    N = null_space(np.hstack([cs.C, cs.P @ cs.C]).T)
    return N @ N.T


def test_triangle_constraint_matrix(triangle):
    # edges (0,1),(0,2),(1,2); slot l holds the lower node with -1, slot l+3 the higher with +1
    expected = np.array([[-1, 0, 0], [-1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1]], float)
    cs = build_constraint_system(triangle)
    np.testing.assert_array_equal(cs.C, expected)


def test_two_node_permutation():
    cs = build_constraint_system(Graph(2, ((0, 1),)))
    np.testing.assert_array_equal(cs.P, [[0, 1], [1, 0]])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_structure(d):
    g = generate_rgg(8, seed=2)
    cs = build_constraint_system(g, d)
    P, C = cs.P, cs.C
    np.testing.assert_array_equal(P, P.T)
    np.testing.assert_array_equal(P @ P, np.eye(P.shape[0]))
    np.testing.assert_array_equal(C.T @ C, np.kron(np.diag(g.degrees), np.eye(d)))
    x = np.random.default_rng(0).standard_normal(g.n * d)
    diff = ((C + P @ C) @ x).reshape(2 * g.m, d)
    for l, (i, j) in enumerate(g.edges):
        np.testing.assert_allclose(diff[l], x[j * d:(j + 1) * d] - x[i * d:(i + 1) * d])
    np.testing.assert_allclose((C + P @ C) @ np.ones(g.n * d), 0)


def test_triangle_subspace(triangle):
    sp = subspace_projector(build_constraint_system(triangle))
    assert (sp.dim_psi, sp.dim_perp) == (5, 1)
    np.testing.assert_allclose(sp.pi_perp, np.outer(U_TRI, U_TRI), atol=1e-12)


def test_path_subspace_is_vacuous(path3):
    sp = subspace_projector(build_constraint_system(path3))
    assert (sp.dim_psi, sp.dim_perp) == (4, 0)
    assert sp.vacuous


@pytest.mark.parametrize("g", [complete_graph(4), cycle_graph(5), cycle_graph(6), generate_rgg(10, seed=4)])
def test_projector_matches_null_space_oracle(g):
    cs = build_constraint_system(g)
    sp = subspace_projector(cs)
    np.testing.assert_allclose(sp.pi_perp, perp_oracle(cs), atol=1e-10)


def test_projector_invariants(rgg10_system):
    cs, sp = rgg10_system
    Q = sp.Q
    np.testing.assert_allclose(Q.T @ Q, np.eye(Q.shape[1]), atol=1e-12)
    for Pi in (sp.pi_perp, sp.pi_psi):
        np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-10)
        np.testing.assert_allclose(Pi, Pi.T, atol=1e-10)
    np.testing.assert_allclose(sp.pi_perp @ cs.C, 0, atol=1e-10)
    np.testing.assert_allclose(sp.pi_perp @ cs.P @ cs.C, 0, atol=1e-10)


def test_projector_commutes_with_permutation(rgg10_system):
    cs, sp = rgg10_system
    assert np.linalg.norm(sp.pi_perp @ cs.P - cs.P @ sp.pi_perp) <= 1e-10


def test_consensus_kernel(rgg10):
    cs = build_constraint_system(rgg10)
    s = np.linalg.svd(cs.C + cs.P @ cs.C, compute_uv=False)
    assert np.sum(s < 1e-10 * s[0]) == 1


def test_triangle_bound_is_one_sixth(triangle):
    cs = build_constraint_system(triangle)
    sp = subspace_projector(cs)
    for theta, mu in [(1.0, 1.0), (0.5, 1 / 3), (0.8, 0.1)]:
        curve = bound_curve(sp, cs.P, 1.0, theta, mu, [0, 1, 7, 50])
        np.testing.assert_allclose(curve.values, 1 / 6, atol=1e-12)


def bound_oracle(cs, sigma2, theta, mu, k):
    Pi = perp_oracle(cs)
    I = np.eye(cs.P.shape[0])
    M = Pi @ (sigma2 / 2 * ((I + cs.P) + abs(1 - 2 * theta * mu) ** (2 * k) * (I - cs.P)))
    return np.diag(M)


@pytest.mark.parametrize("theta, mu", [(1.0, 1.0), (0.8, 1.0), (0.5, 0.1), (1.0, 0.25), (0.3, 0.7)])
def test_bound_matches_matrix_oracle(rgg10_system, theta, mu):
    cs, sp = rgg10_system
    ks = [0, 1, 3, 10]
    curve = bound_curve(sp, cs.P, 2.5, theta, mu, ks)
    for a, k in enumerate(ks):
        np.testing.assert_allclose(curve.values[a], bound_oracle(cs, 2.5, theta, mu, k), atol=1e-10)


def test_bound_zero_variance(rgg10_system):
    cs, sp = rgg10_system
    assert np.all(bound_curve(sp, cs.P, 0.0, 0.5, 0.1, [0, 5]).values == 0)


def test_bound_half_step(rgg10_system):
    cs, sp = rgg10_system
    curve = bound_curve(sp, cs.P, 3.0, 0.5, 1.0, [1, 4])
    plus = np.diag(sp.pi_perp @ (np.eye(cs.P.shape[0]) + cs.P))
    np.testing.assert_allclose(curve.values, np.tile(1.5 * plus, (2, 1)), atol=1e-12)


def test_bound_at_zero_is_projected_init_variance(rgg10_system):
    cs, sp = rgg10_system
    curve = bound_curve(sp, cs.P, 4.0, 0.7, 0.1, [0])
    np.testing.assert_allclose(curve.values[0], 4.0 * np.diag(sp.pi_perp), atol=1e-12)


@given(theta=st.floats(0.01, 1.0), mu=st.floats(0.01, 1.0))
@settings(max_examples=30, deadline=None)
def test_bound_nonincreasing_and_nonnegative(theta, mu):
    g = cycle_graph(5)
    cs = build_constraint_system(g)
    sp = subspace_projector(cs)
    vals = bound_curve(sp, cs.P, 1.0, theta, mu, range(0, 30)).values
    assert np.all(vals >= 0)
    if theta * mu <= 0.5:
        assert np.all(np.diff(vals, axis=0) <= 1e-12)


def test_bound_rejects_bad_parameters(triangle):
    cs = build_constraint_system(triangle)
    sp = subspace_projector(cs)
    for args in [(-1, 0.5, 0.5), (1, 0.0, 0.5), (1, 1.5, 0.5), (1, 0.5, 0.0)]:
        with pytest.raises(ValueError):
            bound_curve(sp, cs.P, *args, [0])


def test_expected_zperp_examples(triangle, rgg10_system):
    cs = build_constraint_system(triangle)
    sp = subspace_projector(cs)
    for theta, mu, k in [(0.8, 0.2, 0), (0.5, 1.0, 3), (1.0, 1 / 3, 11)]:
        np.testing.assert_allclose(expected_zperp(sp, cs.P, U_TRI, theta, mu, k), U_TRI, atol=1e-12)
    cs, sp = rgg10_system
    z0 = np.random.default_rng(0).standard_normal(cs.P.shape[0])
    np.testing.assert_allclose(expected_zperp(sp, cs.P, z0, 0.3, 0.2, 0), sp.pi_perp @ z0, atol=1e-12)
    half = 0.5 * (np.eye(cs.P.shape[0]) + cs.P) @ sp.pi_perp @ z0
    np.testing.assert_allclose(expected_zperp(sp, cs.P, z0, 0.5, 1.0, 4), half, atol=1e-12)


@pytest.mark.parametrize("theta, mu, k", [(0.8, 0.2, 5), (1.0, 1.0, 3), (0.3, 0.1, 40)])
def test_expected_zperp_matches_matrix_power(rgg10_system, theta, mu, k):
    cs, sp = rgg10_system
    z0 = np.random.default_rng(k).standard_normal(cs.P.shape[0])
    a = theta * mu
    step = (1 - a) * np.eye(cs.P.shape[0]) + a * cs.P
    oracle = np.linalg.matrix_power(step, k) @ perp_oracle(cs) @ z0
    np.testing.assert_allclose(expected_zperp(sp, cs.P, z0, theta, mu, k), oracle, atol=1e-10)


def test_expected_zperp_linear_and_in_subspace(rgg10_system):
    cs, sp = rgg10_system
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal((2, cs.P.shape[0]))
    f = lambda z: expected_zperp(sp, cs.P, z, 0.6, 0.1, 9)
    np.testing.assert_allclose(f(2 * a - 3 * b), 2 * f(a) - 3 * f(b), atol=1e-10)
    np.testing.assert_allclose(sp.pi_perp @ f(a), f(a), atol=1e-10)


def test_expected_zperp_length_check(triangle):
    cs = build_constraint_system(triangle)
    with pytest.raises(ValueError, match="length"):
        expected_zperp(subspace_projector(cs), cs.P, np.ones(4), 0.5, 0.5, 1)


def test_vacuous_projector_is_exactly_zero():
    cs = build_constraint_system(path_graph(7), 2)
    sp = subspace_projector(cs)
    assert sp.vacuous
    assert not np.any(sp.pi_perp)
    assert not np.any(sp.project_perp(np.ones((3, cs.dim))))
    assert not np.any(bound_curve(sp, cs.P, 5.0, 0.5, 0.2, [0, 3]).values)
