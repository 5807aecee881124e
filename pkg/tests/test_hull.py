import numpy as np
import pytest

from bcdyn.hull import hull_membership, min_norm_point
from oracles import hull_distance_faces


def test_segment_interior():
    r = hull_membership(np.array([[0.0], [1.0]]), [0.5])
    assert r.inside and r.distance == 0.0


def test_segment_outside():
    r = hull_membership(np.array([[0.0], [1.0]]), [2.0])
    assert not r.inside and r.distance == pytest.approx(1.0)
    np.testing.assert_allclose(r.nearest, [1.0])


def test_triangle_corner_distance():
    r = hull_membership(np.array([[0, 0], [1, 0], [0, 1]], dtype=float), [1, 1])
    assert r.distance == pytest.approx(np.sqrt(2) / 2, abs=1e-14)
    np.testing.assert_allclose(r.nearest, [0.5, 0.5], atol=1e-14)


def test_weights_are_convex():
    rng = np.random.default_rng(1)
    P = rng.normal(size=(7, 3))
    r = hull_membership(P, rng.normal(size=3) * 3)
    assert np.all(r.weights >= 0) and r.weights.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(r.weights @ P, r.nearest, atol=1e-12)


def test_argument_checks():
    with pytest.raises(ValueError):
        hull_membership(np.zeros((0, 2)), [0, 0])
    with pytest.raises(ValueError):
        hull_membership(np.zeros((2, 2)), [0, 0], tol=0)


@pytest.mark.parametrize("seed", range(40))
def test_against_face_enumeration(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 8)), int(rng.integers(1, 4))
    P = rng.normal(size=(m, n))
    p = rng.normal(size=n) * rng.choice([0.1, 1.0, 3.0])
    r = hull_membership(P, p)
    assert r.distance == pytest.approx(hull_distance_faces(P, p), abs=1e-12)


def test_against_convex_program():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(7)
    for _ in range(15):
        P = rng.normal(size=(6, 3))
        p = rng.normal(size=3) * 2
        w = cp.Variable(6)
        prob = cp.Problem(cp.Minimize(cp.norm(P.T @ w - p)), [w >= 0, cp.sum(w) == 1])
        prob.solve()
        assert hull_membership(P, p).distance == pytest.approx(prob.value, abs=1e-6)


def test_point_on_edge_with_rounding_residue():
    # once cycled forever: origin on the edge between rows 0 and 1
    P = np.array([
        [-0.06187121418387831, 0.0],
        [0.03522417037518416, 0.0],
        [0.03770292255185287, 0.0],
        [0.07256447165108343, 0.04820612166130781],
    ])
    z, _ = min_norm_point(P)
    assert np.linalg.norm(z) < 1e-15


def test_near_and_far_points_mixed_scales():
    # once stopped at 3.6e-7 because the stopping test used the far points' scale
    P = np.array([[-3.59496773e-07, 0.0], [4.72031947e-07, 2.0], [4.8e-07, 0.0], [1.0, -2.0]])
    assert np.linalg.norm(min_norm_point(P)[0]) < 1e-20
    near = np.array([[1.06e-8, 9.97e-9], [-2.6e-9, -1.28e-8], [7.2e-9, -1.57e-8], [-1.18, 0.86], [-6.2e-9, 1.3e-8]])
    assert np.linalg.norm(min_norm_point(near)[0]) == pytest.approx(hull_distance_faces(near, np.zeros(2)), abs=1e-20)


def test_duplicates_and_collinear():
    P = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    assert hull_membership(P, [0, 0]).distance == pytest.approx(np.sqrt(2))
    assert hull_membership(P, [2.5, 2.5]).inside
