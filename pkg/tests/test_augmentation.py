from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalda.augmentation import (
    DaOperator,
    apply,
    check_invariance,
    gaussian_noise_da,
    invariance_defect,
    nullspace_basis,
    orthogonal_complement,
    subset_basis,
)
from causalda.sem import Dataset

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def nonzero_vectors(max_m=12):
    return st.integers(2, max_m).flatmap(
        lambda m: arrays(float, m, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3))


def test_axis_aligned_null_space():
    da = nullspace_basis(np.array([1.0, 0.0]))
    assert da.k == 1
    np.testing.assert_allclose(np.abs(da.gamma_mat[:, 0]), [0.0, 1.0], atol=1e-15)
    # canonical sign: first clearly nonzero entry positive
    assert da.gamma_mat[1, 0] == pytest.approx(1.0)


@given(nonzero_vectors())
def test_null_space_is_orthonormal_and_invariant(f):
    da = nullspace_basis(f)
    assert da.k == f.size - 1
    assert np.linalg.norm(f @ da.gamma_mat) < 1e-12 * max(1.0, np.linalg.norm(f))
    np.testing.assert_allclose(da.gamma_mat.T @ da.gamma_mat, np.eye(da.k), atol=1e-12)


def test_protocol_dimension():
    assert nullspace_basis(np.random.default_rng(0).standard_normal(32)).k == 31


def test_zero_f_rejected():
    with pytest.raises(ValueError):
        nullspace_basis(np.zeros(3))


def test_null_space_deterministic():
    f = np.random.default_rng(1).standard_normal(6)
    np.testing.assert_array_equal(nullspace_basis(f).gamma_mat, nullspace_basis(f).gamma_mat)


def test_orthogonal_complement_of_two_vectors():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((7, 2))
    basis = orthogonal_complement(v)
    assert basis.shape == (7, 5)
    np.testing.assert_allclose(v.T @ basis, 0.0, atol=1e-12)


def test_subset_keep_all_is_identity():
    da = nullspace_basis(np.arange(1.0, 6.0))
    out = subset_basis(da, 1.0, 0)
    np.testing.assert_array_equal(out.gamma_mat, da.gamma_mat)


@pytest.mark.parametrize("p", [2 / 3, 1 / 3])
def test_subset_keeps_invariance_and_columns(p):
    f = np.random.default_rng(3).standard_normal(32)
    da = nullspace_basis(f)
    ks = []
    for seed in range(200):
        out = subset_basis(da, p, seed)
        assert out.k >= 1
        assert invariance_defect(out, f) < 1e-12
        # every kept column is one of the input columns
        match = np.abs(out.gamma_mat.T @ da.gamma_mat)
        assert np.allclose(np.sort(match, axis=1)[:, -1], 1.0)
        ks.append(out.k)
    assert abs(np.mean(ks) - 31 * p) < 1.0


def test_subset_rejects_bad_probability():
    with pytest.raises(ValueError):
        subset_basis(nullspace_basis(np.ones(3)), 0.0, 0)


def test_apply_zero_strength_is_identity():
    x = np.random.default_rng(0).standard_normal((50, 3))
    data = Dataset(x, np.arange(50.0))
    out = apply(nullspace_basis(np.ones(3), strength=0.0), data, 1)
    np.testing.assert_array_equal(out.x, x)
    np.testing.assert_array_equal(out.y, data.y)
    assert out.z.shape == (50, 2)


def test_apply_preserves_outcome_and_rows():
    rng = np.random.default_rng(4)
    f = rng.standard_normal(5)
    x = rng.standard_normal((1000, 5))
    data = Dataset(x, x @ f, z=np.ones((1000, 7)))
    out = apply(nullspace_basis(f, strength=3.0), data, 2)
    assert out.n_samples == 1000
    np.testing.assert_array_equal(out.y, data.y)
    np.testing.assert_allclose(out.x @ f, x @ f, rtol=1e-10, atol=1e-10 * np.abs(x @ f).max())
    assert out.z.shape == (1000, 4) and out.meta["z_role"] == "da"


def test_apply_variance_adds():
    n = 100_000
    x = np.random.default_rng(0).standard_normal((n, 2))
    out = apply(DaOperator(np.array([[0.0], [1.0]])), Dataset(x, x[:, 0]), 1)
    assert abs(out.x[:, 1].var() - (x[:, 1].var() + 1)) < 3 * 2 * np.sqrt(2 / n)
    np.testing.assert_array_equal(out.x[:, 0], x[:, 0])


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        apply(nullspace_basis(np.ones(3)), Dataset(np.zeros((4, 2)), np.zeros(4)), 0)


def test_apply_multiplier_grows_rows():
    data = Dataset(np.zeros((5, 2)), np.arange(5.0))
    out = apply(nullspace_basis(np.ones(2)), data, 0, multiplier=3)
    assert out.n_samples == 15
    np.testing.assert_array_equal(out.y, np.tile(data.y, 3))


@given(st.integers(0, 2**32 - 1))
def test_group_action_composes(seed):
    rng = np.random.default_rng(seed)
    da = nullspace_basis(rng.standard_normal(4), strength=rng.uniform(0, 3))
    x = rng.standard_normal((10, 4))
    g1, g2 = rng.standard_normal((10, 3)), rng.standard_normal((10, 3))
    np.testing.assert_allclose(x + da.shift(g1) + da.shift(g2), x + da.shift(g1 + g2), atol=1e-12)


def test_gaussian_noise_identity_cov():
    n = 100_000
    da = gaussian_noise_da(np.eye(3), 0.1)
    noise = da.shift(da.draw_g(n, np.random.default_rng(0)))
    np.testing.assert_allclose(np.cov(noise, rowvar=False), 0.1 * np.eye(3), atol=0.003)


def test_gaussian_noise_zero_scale():
    da = gaussian_noise_da(np.eye(2) * 4, 0.0)
    np.testing.assert_array_equal(da.gamma_mat, np.zeros((2, 2)))


def test_gaussian_noise_rank_deficient_support():
    u = np.array([[1.0], [1.0], [0.0]]) / np.sqrt(2)
    da = gaussian_noise_da(u @ u.T * 5, 0.1)
    noise = da.shift(da.draw_g(1000, np.random.default_rng(0)))
    null = np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]).T
    assert np.abs(noise @ null).max() < 1e-10


def test_gaussian_noise_rejects_non_psd():
    with pytest.raises(ValueError):
        gaussian_noise_da(np.diag([1.0, -1.0]), 0.1)


def test_check_invariance_cases():
    f = np.array([1.0, 2.0, -1.0])
    probe = np.random.default_rng(0).standard_normal((100, 3))
    lin = lambda x: x @ f  # noqa: E731
    assert check_invariance(lin, nullspace_basis(f, strength=5.0), probe, 1) < 1e-10
    bad = DaOperator((f / np.linalg.norm(f))[:, None], strength=2.0)
    dev = check_invariance(lin, bad, probe, 1)
    g = bad.draw_g(100, np.random.default_rng(1))
    assert dev == pytest.approx(2.0 * np.linalg.norm(f) * np.abs(g).max())
    assert check_invariance(lin, bad.with_strength(0.0), probe, 1) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_invariance_over_many_probes(seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(6)
    probe = rng.standard_normal((10_000, 6))
    dev = check_invariance(lambda x: x @ f, nullspace_basis(f, 10.0), probe, seed)
    assert dev < 1e-10 * max(1.0, np.abs(probe @ f).max() + 1)


def test_operator_round_trip():
    da = DaOperator(np.eye(3)[:, :2], 0.5, np.diag([1.0, 2.0]), "x")
    back = DaOperator.from_dict(da.to_dict())
    np.testing.assert_array_equal(back.gamma_mat, da.gamma_mat)
    np.testing.assert_array_equal(back.g_cov, da.g_cov)
    assert back.strength == 0.5 and back.label == "x"
    with pytest.raises(ValueError):
        DaOperator(np.eye(2), -1.0)
