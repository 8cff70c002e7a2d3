import numpy as np
import pytest

from crrt import ortho
from crrt.empirical import Ensemble, centered_cross
from crrt.errors import InputError, ShapeMismatch, SingularCovariance


def views(rng, n=3, q=200, p=2):
    return [Ensemble(rng.normal(size=(n, q)) + k) for k in range(p)]


def gram_max(vs, i, j, eye=False):
    C = centered_cross(vs[i], vs[j])
    if eye:
        C = C - np.eye(C.shape[0])
    return np.abs(C).max()


def test_orthonormalize_scalar_example():
    u = Ensemble(np.array([[2.0, -2.0]]))
    sys = ortho.orthonormalize([u])
    np.testing.assert_allclose(sys.vs[0].data, [[1.0, -1.0]])
    np.testing.assert_allclose(centered_cross(sys.vs[0], sys.vs[0]), [[1.0]])
    np.testing.assert_allclose(sys.whiten[0], [[0.5]])
    np.testing.assert_allclose(ortho.replay(sys, [np.array([[6.0]])])[0], [[3.0]])


def test_orthonormalize_duplicate_raises(rng):
    u = views(rng, p=1)[0]
    with pytest.raises(SingularCovariance) as info:
        ortho.orthonormalize([u, u])
    assert info.value.k == 2
    assert "orthogonalize" in str(info.value)


def test_orthonormalize_gram(rng):
    sys = ortho.orthonormalize(views(rng))
    assert sys.orthogonality_residual() < 1e-8
    assert sys.normality_residual() < 1e-8
    for i in range(2):
        for j in range(2):
            assert gram_max(sys.vs, i, j, eye=i == j) < 1e-8


def test_orthogonalize_duplicate(rng):
    u = views(rng, p=1)[0]
    sys = ortho.orthogonalize([u, u])
    assert gram_max(sys.vs, 0, 1) < 1e-8
    assert gram_max(sys.vs, 1, 1) < 1e-8
    assert sys.diagnostics["ranks"] == [3, 0]


def test_orthogonalize_single_view_unchanged(rng):
    u = views(rng, p=1)[0]
    sys = ortho.orthogonalize([u])
    np.testing.assert_array_equal(sys.vs[0].data, u.data)


def test_orthogonalize_rank_deficient_first_view(rng):
    U1 = rng.normal(size=(3, 150))
    U1[2] = U1[0]
    us = [Ensemble(U1), Ensemble(rng.normal(size=(2, 150)) + U1[:2])]
    sys = ortho.orthogonalize(us)
    assert sys.orthogonality_residual() < 1e-8
    assert max(sys.diagnostics["cond_eq"].values()) < 1e-8


def test_chains_agree_when_invertible(rng):
    us = views(rng, n=4, p=3)
    on = ortho.orthonormalize(us)
    og = ortho.orthogonalize(us)
    for k in range(3):
        np.testing.assert_allclose(on.whiten[k] @ og.vs[k].data, on.vs[k].data, atol=1e-8)


def test_a_policy_keeps_orthogonality(rng):
    U1 = rng.normal(size=(3, 100))
    U1[2] = U1[1]
    us = [Ensemble(U1), Ensemble(rng.normal(size=(2, 100)))]
    calls = []

    def policy(i, k, shape):
        calls.append((i, k, shape))
        return np.ones(shape)

    sys = ortho.orthogonalize(us, a_policy=policy)
    assert calls == [(2, 1, (2, 3))]
    assert sys.orthogonality_residual() < 1e-8


def test_qr_row_orthonormal_center_false():
    Q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(4, 4)))
    U1 = Q.T[:4]
    sys = ortho.qr_orthogonalize([Ensemble(U1)], center=False)
    V = sys.vs[0].data
    np.testing.assert_allclose(np.abs(V), np.abs(U1), atol=1e-12)
    np.testing.assert_allclose(np.abs(np.sum(V * U1, axis=1)), 1.0, atol=1e-12)


def test_qr_two_blocks(rng):
    us = [Ensemble(rng.normal(size=(2, 4))), Ensemble(rng.normal(size=(2, 4)))]
    for center in (True, False):
        sys = ortho.qr_orthogonalize(us, center=center)
        V1, V2 = sys.vs[0].data, sys.vs[1].data
        assert np.abs(V1 @ V2.T).max() < 1e-9
        np.testing.assert_allclose(V1 @ V1.T, np.eye(2), atol=1e-9)
        assert sys.diagnostics["raw_gram"].max() < 1e-9
    sys = ortho.qr_orthogonalize(us, center=True)
    assert sys.orthogonality_residual() < 1e-9


def test_qr_replay_reproduces_training(rng):
    us = [Ensemble(rng.normal(size=(3, 5))), Ensemble(rng.normal(size=(2, 5)))]
    for center in (True, False):
        sys = ortho.qr_orthogonalize(us, center=center)
        out = ortho.replay(sys, us)
        for v, o in zip(sys.vs, out):
            np.testing.assert_allclose(o, v.data, atol=1e-10)


def test_qr_dependent_rows_flagged(rng):
    U = rng.normal(size=(4, 4))
    U[3] = U[0]
    sys = ortho.qr_orthogonalize([Ensemble(U[:2]), Ensemble(U[2:])], center=False)
    assert sys.diagnostics["rank_deficient"]
    V = np.vstack([v.data for v in sys.vs])
    np.testing.assert_allclose(V @ V.T, np.eye(4), atol=1e-9)


def test_qr_requires_square_stack(rng):
    with pytest.raises(ShapeMismatch):
        ortho.qr_orthogonalize([Ensemble(rng.normal(size=(2, 5)))])
    with pytest.raises(InputError):
        ortho.qr_orthogonalize([Ensemble(rng.normal(size=(2, 2)), np.array([0.3, 0.7]))])


def test_replay_training_exact(rng):
    us = views(rng, p=3)
    for build in (ortho.orthonormalize, ortho.orthogonalize):
        sys = build(us)
        for v, o in zip(sys.vs, ortho.replay(sys, us)):
            np.testing.assert_allclose(o, v.data, rtol=0, atol=1e-12)


def test_replay_is_affine(rng):
    us = views(rng, p=2)
    sys = ortho.orthonormalize(us)
    a = [rng.normal(size=(3, 7)) for _ in range(2)]
    b = [rng.normal(size=(3, 7)) for _ in range(2)]
    alpha = 0.3
    mix = [alpha * x + (1 - alpha) * y for x, y in zip(a, b)]
    ra, rb, rm = (ortho.replay(sys, s) for s in (a, b, mix))
    for k in range(2):
        np.testing.assert_allclose(rm[k], alpha * ra[k] + (1 - alpha) * rb[k], atol=1e-10)


def test_replay_identity_single_view(rng):
    u = views(rng, p=1)[0]
    sys = ortho.orthogonalize([u])
    new = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(ortho.replay(sys, [new])[0], new)


def test_replay_shape_errors(rng):
    sys = ortho.orthogonalize(views(rng, p=2))
    with pytest.raises(ShapeMismatch):
        ortho.replay(sys, [np.zeros((3, 2))])
    with pytest.raises(ShapeMismatch):
        ortho.replay(sys, [np.zeros((3, 2)), np.zeros((2, 2))])
