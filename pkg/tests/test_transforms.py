import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gsscene import (
    GaussianCloud,
    ObjectTransform,
    compose_to_global,
    covariance,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_mul,
    quat_to_matrix,
    restore_to_local,
)
from gsscene.errors import EmptyCloud, NonUnitQuaternion

from conftest import fixture_path, random_cloud, random_unit_quats

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
Z90 = quat_from_axis_angle([0, 0, 1], np.pi / 2)


def test_mul_identity_is_neutral(rng):
    for q in random_unit_quats(rng, 20):
        assert_allclose(quat_mul(IDENTITY, q), q, atol=1e-12)
        assert_allclose(quat_mul(q, IDENTITY), q, atol=1e-12)


def test_mul_two_z90_gives_z180():
    assert_allclose(quat_mul(Z90, Z90), [0, 0, 0, 1], atol=1e-12)


def test_mul_is_noncommutative():
    x90 = quat_from_axis_angle([1, 0, 0], np.pi / 2)
    y90 = quat_from_axis_angle([0, 1, 0], np.pi / 2)
    ab = quat_to_matrix(quat_mul(x90, y90))
    ba = quat_to_matrix(quat_mul(y90, x90))
    assert np.abs(ab - ba).max() > 0.5


def test_mul_matches_matrix_composition(rng):
    a = random_unit_quats(rng, 200)
    b = random_unit_quats(rng, 200)
    got = quat_to_matrix(quat_mul(a, b))
    want = quat_to_matrix(a) @ quat_to_matrix(b)
    assert np.abs(got - want).max() < 1e-9


def test_mul_associative_within_tolerance(rng):
    for _ in range(50):
        a, b, c = random_unit_quats(rng, 3)
        left = quat_to_matrix(quat_mul(quat_mul(a, b), c))
        right = quat_to_matrix(quat_mul(a, quat_mul(b, c)))
        assert np.abs(left - right).max() < 1e-9


def test_matrix_identity():
    assert_allclose(quat_to_matrix(IDENTITY), np.eye(3), atol=1e-15)


def test_matrix_z90_rotates_x_to_y():
    q = np.array([np.sqrt(2) / 2, 0, 0, np.sqrt(2) / 2])
    assert_allclose(quat_to_matrix(q) @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_matrix_x180():
    assert_allclose(quat_to_matrix([0, 1, 0, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-15)


def test_matrix_is_proper_rotation(rng):
    q = random_unit_quats(rng, 500)
    R = quat_to_matrix(q)
    assert np.abs(np.swapaxes(R, 1, 2) @ R - np.eye(3)).max() < 1e-9
    assert np.abs(np.linalg.det(R) - 1.0).max() < 1e-9


def test_matrix_rejects_non_unit():
    with pytest.raises(NonUnitQuaternion):
        quat_to_matrix([1.0, 1.0, 0.0, 0.0])


def test_matrix_round_trip(rng):
    for q in random_unit_quats(rng, 50):
        back = quat_from_matrix(quat_to_matrix(q))
        err = min(np.abs(back - q).max(), np.abs(back + q).max())
        assert err < 1e-9


def test_shared_quat_vectors():
    # the same file drives the editor's client-side quaternion tests
    with open(fixture_path("quat_vectors.json")) as fh:
        doc = json.load(fh)
    for case in doc["vectors"]:
        got = quat_mul(np.array(case["a"]), np.array(case["b"]))
        want = np.array(case["product"])
        assert np.abs(got - want).max() < 1e-9


def test_compose_identity_is_noop(rng):
    cloud = random_cloud(rng, 30)
    cloud.p -= cloud.p.mean(axis=0)  # centroid at origin
    t = ObjectTransform(xyz=(0, 0, 0), whl=(1, 1, 1), quad=(1, 0, 0, 0))
    out = compose_to_global(cloud, t, np.ones(3))
    assert_allclose(out.p, cloud.p, atol=1e-12)
    assert_allclose(out.s, cloud.s, atol=1e-12)
    assert_allclose(out.q, cloud.q, atol=1e-12)


def test_compose_translation_only(rng):
    cloud = random_cloud(rng, 30)
    cloud.p -= cloud.p.mean(axis=0)
    t = ObjectTransform(xyz=(5, 0, 0), whl=(1, 1, 1), quad=(1, 0, 0, 0))
    out = compose_to_global(cloud, t, np.ones(3))
    assert_allclose(out.p, cloud.p + [5, 0, 0], atol=1e-12)
    assert_allclose(out.s, cloud.s, atol=1e-12)
    assert_allclose(out.q, cloud.q, atol=1e-12)
    assert_allclose(out.c, cloud.c)
    assert_allclose(out.alpha, cloud.alpha)


def test_compose_rotation_example():
    cloud = GaussianCloud(
        p=[[1, 0, 0], [-1, 0, 0]],
        s=[[0.1] * 3] * 2,
        q=[[1, 0, 0, 0]] * 2,
        c=[[0.5] * 3] * 2,
        alpha=[0.5, 0.5],
    )
    t = ObjectTransform(xyz=(2, 3, 4), whl=(1, 1, 1), quad=tuple(Z90))
    out = compose_to_global(cloud, t, np.ones(3))
    assert_allclose(out.p[0], [2, 4, 4], atol=1e-12)  # (0,1,0) + xyz
    assert_allclose(out.p[1], [2, 2, 4], atol=1e-12)


def test_compose_preserves_count_color_alpha(rng):
    cloud = random_cloud(rng, 40)
    t = ObjectTransform(
        xyz=(1, -2, 0.5), whl=(1, 1, 1),
        quad=tuple(quat_from_axis_angle([1, 1, 0], 0.4)),
    )
    out = compose_to_global(cloud, t, np.array([2.0, 0.5, 1.5]))
    assert len(out) == len(cloud)
    assert np.array_equal(out.c, cloud.c)
    assert np.array_equal(out.alpha, cloud.alpha)


def test_isotropic_stretch_covariance_transform(rng):
    # Sigma' = stretch^2 * R Sigma R^T for isotropic stretch
    cloud = random_cloud(rng, 10)
    quad = quat_from_axis_angle([0.3, -1, 0.7], 1.1)
    t = ObjectTransform(xyz=(0, 0, 0), whl=(1, 1, 1), quad=tuple(quad))
    k = 1.7
    out = compose_to_global(cloud, t, np.full(3, k))
    R = quat_to_matrix(quad)
    for i in range(len(cloud)):
        want = k**2 * R @ covariance(cloud.s[i], cloud.q[i]) @ R.T
        got = covariance(out.s[i], out.q[i])
        assert np.abs(got - want).max() < 1e-9


def test_restore_round_trip(rng):
    for _ in range(10):
        cloud = random_cloud(rng, 50)
        mu = cloud.p.mean(axis=0)
        t = ObjectTransform(
            xyz=tuple(rng.normal(size=3)),
            whl=(1, 1, 1),
            quad=tuple(random_unit_quats(rng, 1)[0]),
        )
        stretch = rng.uniform(0.3, 2.5, size=3)
        back = restore_to_local(compose_to_global(cloud, t, stretch), t, stretch, mu)
        assert np.abs(back.p - cloud.p).max() < 1e-6
        assert np.abs(back.s - cloud.s).max() < 1e-6
        assert np.abs(back.q - cloud.q).max() < 1e-6


def test_restore_identity_and_scalar_stretch(rng):
    cloud = random_cloud(rng, 20)
    mu = cloud.p.mean(axis=0)
    ident = ObjectTransform(xyz=(0, 0, 0), whl=(1, 1, 1), quad=(1, 0, 0, 0))
    back = restore_to_local(compose_to_global(cloud, ident, np.ones(3)), ident, np.ones(3), mu)
    assert np.abs(back.p - cloud.p).max() < 1e-12
    two = np.full(3, 2.0)
    back = restore_to_local(compose_to_global(cloud, ident, two), ident, two, mu)
    assert np.abs(back.p - cloud.p).max() < 1e-6
    assert np.abs(back.s - cloud.s).max() < 1e-6


def test_empty_cloud_raises():
    t = ObjectTransform(xyz=(0, 0, 0), whl=(1, 1, 1), quad=(1, 0, 0, 0))
    with pytest.raises(EmptyCloud):
        compose_to_global(GaussianCloud.empty(), t, np.ones(3))
    with pytest.raises(EmptyCloud):
        restore_to_local(GaussianCloud.empty(), t, np.ones(3), np.zeros(3))
