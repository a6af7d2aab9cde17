import numpy as np
import pytest

from treepot.errors import DomainError
from treepot.report import _random_finite_tree
from treepot.treematrix import (build_generator, dense_q, finite_potential,
                                harmonic_decomposition, hitting_matrices,
                                inverse_residual, matrix_csv, u_entry, u_matrix)
from treepot.trees import BoundaryRay, HomogeneousTreeSpec, build_tree, fixed_ray
from treepot.weights import arithmetic, bounded, finite_weights

A, B, A1, A2, R = (0,), (1,), (0, 0), (0, 1), ()


def test_u_entries(f1):
    tree, w = f1
    assert u_entry(tree, w, A1, A2) == 2.0
    assert u_entry(tree, w, A1, B) == 1.0
    assert u_entry(tree, w, A1, A1) == 4.0
    assert u_entry(tree, w, B, A1) == u_entry(tree, w, A1, B)


def test_u_entry_rays_bounded_diagonal():
    tree = build_tree(HomogeneousTreeSpec(2), 3)
    w = bounded([1.0], 2.0, 0.5)  # w_n = 2 - 2^{-n}
    ray = fixed_ray(tree, [0])
    assert u_entry(tree, w, ray, ray) == 2.0
    other = fixed_ray(tree, [1])
    assert u_entry(tree, w, ray, other) == 1.0
    assert u_entry(tree, w, (0, 1), ray) == w.w(1)


def test_u_entry_unbounded_ray_diagonal_errors():
    tree = build_tree(HomogeneousTreeSpec(2), 3)
    w = arithmetic([1.0], 1.0)
    ray = fixed_ray(tree, [0])
    with pytest.raises(DomainError):
        u_entry(tree, w, ray, ray)


def test_generator_f1_hand_values(f1):
    tree, w = f1
    g = build_generator(tree, w, "absorbed")
    assert g.diag(R) == -3.0
    row_r = dict(g.row(R))
    assert row_r[A] == 1.0 and row_r[B] == 1.0
    assert g.diag(A) == -2.0
    assert dict(g.row(A))[A1] == 0.5
    assert g.diag(A1) == -0.5
    assert g.diag(B) == -1.0
    assert g.row_sum(A1) == 0.0          # conservative off the root
    assert g.row_sum(R) == -1.0 / w.w(0)  # defective at the root


def test_generator_homogeneous_reflected(homog2):
    tree, w = homog2
    g = build_generator(tree, w, "reflected")
    assert g.diag(()) == -3.0
    assert g.diag((0,)) == -3.0
    assert g.edge_rate((0, 0)) == 1.0
    assert g.row_sum(()) == 0.0


def test_inverse_residual_examples(f1, homog2):
    tree, w = f1
    assert inverse_residual(tree, w, tree.nodes_upto(2)) <= 1e-12
    htree, hw = homog2
    assert inverse_residual(htree, hw, htree.nodes_upto(3)) <= 1e-12


def test_inverse_residual_detects_perturbation(f1):
    # generator from the true weights against a matrix with one weight off
    tree, w = f1
    w_bad = finite_weights([1.0, 2.1, 4.0])
    order, Q = dense_q(tree, w, 2)
    U_bad = u_matrix(tree, w_bad, order)
    assert np.abs((-Q) @ U_bad - np.eye(len(order))).max() > 0.01
    # consistent rebuild stays exact: the identity tracks the weights
    assert inverse_residual(tree, w_bad, tree.nodes_upto(2)) <= 1e-12


def test_finite_potential_fixture_values(f1):
    tree, w = f1
    order, V1 = finite_potential(tree, w, 1)
    assert [p for p in order] == [R, A, B]
    expected = np.array([[2, 1, 2], [1, 2, 1], [2, 1, 5]]) / 3.0
    assert np.abs(V1 - expected).max() <= 1e-15


def test_finite_potential_full_depth_is_u(f1):
    tree, w = f1
    order, V2 = finite_potential(tree, w, 2)
    assert np.abs(V2 - u_matrix(tree, w, order)).max() <= 1e-12


def test_potential_monotone_in_depth(f1):
    tree, w = f1
    order1, V1 = finite_potential(tree, w, 1)
    order2, V2 = finite_potential(tree, w, 2)
    idx = {p: k for k, p in enumerate(order2)}
    for a, p in enumerate(order1):
        for b, q in enumerate(order1):
            assert V1[a, b] <= V2[idx[p], idx[q]] + 1e-12
            assert V1[a, b] <= u_matrix(tree, w, [p], [q])[0, 0] + 1e-12


def test_harmonic_decomposition_f1(f1):
    tree, w = f1
    hd = harmonic_decomposition(tree, w, 1)
    expected_H = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) / 3.0
    assert np.abs(hd.harmonic - expected_H).max() <= 1e-14
    assert hd.rank == 1 and hd.btilde == [A]
    assert hd.qbar_residual <= 1e-12
    # hand check of the row at the root against the H column there
    assert abs((-3) * (1 / 3) + 1 * (2 / 3) + 1 * (1 / 3)) <= 1e-15
    # H is positive semidefinite
    assert np.linalg.eigvalsh(hd.harmonic).min() >= -1e-12


def test_harmonic_decomposition_full_depth_zero(f1):
    tree, w = f1
    hd = harmonic_decomposition(tree, w, 2)
    assert np.abs(hd.harmonic).max() <= 1e-12
    assert hd.rank == 0


def test_hitting_matrices_f1(f1):
    tree, w = f1
    hm = hitting_matrices(tree, w, 1)
    assert np.allclose(hm.W[:, 0], [0.5, 1.0, 0.5], atol=1e-14)
    # rows of W at points already on the target set are unit vectors
    a_row = hm.W[hm.order.index(A), :]
    assert np.allclose(a_row, np.eye(1)[0], atol=1e-14)
    assert np.allclose(hm.D[:, 0], [1 / 3, 2 / 3, 1 / 3], atol=1e-14)
    assert np.allclose(hm.D.sum(axis=1), hm.E.sum(axis=1), atol=1e-14)
    hd = harmonic_decomposition(tree, w, 1)
    H2 = hm.D @ u_matrix(tree, w, hm.btilde, hm.order)
    assert np.abs(hd.harmonic - H2).max() <= 1e-12
    # row sums are escape probabilities, at most 1
    assert (hm.W.sum(axis=1) <= 1 + 1e-12).all()
    assert (hm.E.sum(axis=1) <= 1 + 1e-12).all()


def test_tree_elimination_matches_dense_oracle():
    rng = np.random.default_rng(123)
    for _ in range(50):
        tree, w = _random_finite_tree(rng, max_nodes=200)
        depth = max(len(p) for p in tree.nodes_upto(10))
        n = int(rng.integers(0, depth + 1))
        order, V = finite_potential(tree, w, n)
        _, Q = dense_q(tree, w, n)
        assert np.abs(V - np.linalg.inv(-Q)).max() <= 1e-10


def test_matrix_csv_roundtrip(f1):
    tree, w = f1
    order, V = finite_potential(tree, w, 1)
    text = matrix_csv(order, V)
    lines = text.strip().splitlines()
    assert lines[0] == "row,col,value"
    assert len(lines) == 1 + len(order) ** 2
    val = float(lines[1].split(",")[2])
    assert val == V[0, 0]
