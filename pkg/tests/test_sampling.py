import numpy as np
import pytest
from hypothesis import given, strategies as st

from bayesext.errors import ParameterDomainError
from bayesext.sampling import RngStream, mvn_zero_mean, normal, normal_blocks, uniform_sphere


def test_normal_moments():
    z, _ = normal(RngStream(1), 10**6)
    assert abs(z.mean()) <= 0.004
    assert abs(z.var() - 1) <= 0.006


def test_normal_is_deterministic():
    s = RngStream(5, 7, 11)
    a, n1 = normal(s)
    b, n2 = normal(s)
    assert a == b and n1 == n2
    c, _ = normal(n1)
    assert c != a


def test_distinct_ids_differ():
    a = np.array([normal(RngStream(3, k))[0] for k in range(10_000)])
    b = np.array([normal(RngStream(3, k + 10_000))[0] for k in range(10_000)])
    assert np.all(a != b)
    assert np.unique(a).size == a.size


def test_stream_advance_is_pure():
    s = RngStream(9)
    # streams advance in whole blocks of four uniforms (two normals per pair)
    z1, nxt = normal(s, 8)
    z2, _ = normal(nxt, 4)
    z_all, _ = normal(s, 12)
    np.testing.assert_array_equal(np.concatenate([z1, z2]), z_all)
    _, after_odd = normal(s, 6)
    assert after_odd.counter == s.counter + 2


def test_substreams_are_disjoint():
    s = RngStream(2, 3)
    a, _ = normal(s.substream(0), 100)
    b, _ = normal(s.substream(1), 100)
    assert not np.any(np.isin(a, b))


@given(st.integers(0, 500), st.integers(1, 300), st.integers(1, 100))
def test_normal_blocks_chunk_invariant(start, length, cut):
    cut = min(cut, length)
    full = normal_blocks(4, 2, start, start + length)
    parts = np.concatenate([normal_blocks(4, 2, start, start + cut),
                            normal_blocks(4, 2, start + cut, start + length)])
    np.testing.assert_array_equal(full, parts)


def test_normal_blocks_moments():
    z = normal_blocks(0, 0, 0, 500_000)
    assert np.all(np.abs(z.mean(axis=0)) <= 0.006)
    assert np.all(np.abs(z.var(axis=0) - 1) <= 0.009)
    assert abs(np.corrcoef(z.T)[0, 1]) <= 0.006


def test_mvn_identity_variances():
    x, _ = mvn_zero_mean(RngStream(1), np.eye(3), 200_000)
    np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.01)


def test_mvn_spiked_variance():
    sigma = np.diag([4.0, 1.0])
    x, _ = mvn_zero_mean(RngStream(2), sigma, 10**6)
    # var of the sample variance of a N(0, s) draw is 2 s^2 / N
    assert abs(x[:, 0].var() - 4.0) <= 3 * np.sqrt(2 * 16 / 10**6)


def test_mvn_covariance_within_three_sigma():
    sigma = np.array([[2.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 1.5]])
    n = 10**6
    x, _ = mvn_zero_mean(RngStream(8), sigma, n)
    emp = x.T @ x / n
    # var(x_i x_j) = s_ii s_jj + s_ij^2
    sd = np.sqrt((np.outer(np.diag(sigma), np.diag(sigma)) + sigma ** 2) / n)
    assert np.all(np.abs(emp - sigma) <= 3 * sd + 1e-12)


def test_cholesky_of_diagonal_is_sqrt():
    d = np.array([4.0, 9.0, 0.25])
    np.testing.assert_array_equal(np.linalg.cholesky(np.diag(d)), np.diag(np.sqrt(d)))


def test_mvn_rejects_non_pd():
    with pytest.raises(ParameterDomainError):
        mvn_zero_mean(RngStream(0), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_uniform_sphere_unit_norm_and_mean():
    u, _ = uniform_sphere(RngStream(3), 5, 10**5)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(u.mean(axis=0)) <= 0.02


def test_uniform_sphere_one_dim():
    u, _ = uniform_sphere(RngStream(0), 1, 1000)
    assert set(np.unique(u)) <= {-1.0, 1.0}


def test_uniform_sphere_rotation_invariant_second_moment():
    u, _ = uniform_sphere(RngStream(4), 3, 10**5)
    # E[u u'] = I / l for a rotation-invariant law
    np.testing.assert_allclose(u.T @ u / u.shape[0], np.eye(3) / 3, atol=0.01)


def test_uniform_sphere_deterministic():
    a, _ = uniform_sphere(RngStream(6, 1), 4)
    b, _ = uniform_sphere(RngStream(6, 1), 4)
    np.testing.assert_array_equal(a, b)


def test_uniform_sphere_rejects_zero_dim():
    with pytest.raises(ParameterDomainError):
        uniform_sphere(RngStream(0), 0)


def test_generator_matches_stream_counter():
    s = RngStream(12, 3).substream(1)
    u_stream, _ = s.uniforms(8)
    u_gen = s.generator().random(8)
    np.testing.assert_array_equal(u_stream, u_gen)
