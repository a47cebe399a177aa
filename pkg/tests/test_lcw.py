import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcwnet.lcw import (LcwParam, build_basis, kernel_basis, lift, lift_rows, project,
                        project_rows)
from lcwnet.linalg import Rng, ShapeError
from lcwnet.nn import Conv2d


def _basis_residuals(m):
    b = build_basis(m).basis
    return np.linalg.norm(b.T @ b - np.eye(m - 1)), np.linalg.norm(np.ones(m) @ b)


def test_basis_m2_forced_by_sign_convention():
    b = build_basis(2).basis
    assert b.shape == (2, 1)
    assert np.allclose(b[:, 0], [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-15)


def test_basis_m3_zero_sum_orthonormal():
    b = build_basis(3).basis
    assert b.shape == (3, 2)
    assert np.allclose(b.sum(axis=0), 0.0, atol=1e-14)
    assert np.allclose(b.T @ b, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 8, 16, 31, 64, 100, 256, 512])
def test_basis_invariants(m):
    orth, ones = _basis_residuals(m)
    assert orth < 1e-10 and ones < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 512))
def test_basis_invariants_property(m):
    orth, ones = _basis_residuals(m)
    assert orth < 1e-10 and ones < 1e-10


def test_basis_is_cached_and_read_only():
    assert build_basis(17) is build_basis(17)
    with pytest.raises(ValueError):
        build_basis(17).basis[0, 0] = 1.0


def test_basis_rebuild_bit_identical():
    first = build_basis(40).basis.copy()
    build_basis.cache_clear()
    assert np.array_equal(build_basis(40).basis, first)


@pytest.mark.parametrize("m", [0, 1])
def test_basis_too_small(m):
    with pytest.raises(ValueError):
        build_basis(m)


def test_lift_zero():
    assert np.array_equal(lift(LcwParam(np.zeros(4), build_basis(5))), np.zeros(5))


def test_lift_m2():
    w = lift(LcwParam(np.array([np.sqrt(2)]), build_basis(2)))
    assert np.allclose(w, [1.0, -1.0], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1))
def test_lift_isometry_and_zero_sum(m, seed):
    v = Rng(seed).normal(0, 1, m - 1)
    w = lift(LcwParam(v, build_basis(m)))
    assert abs(np.linalg.norm(w) - np.linalg.norm(v)) < 1e-10
    assert abs(w.sum()) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1))
def test_project_lift_roundtrips(m, seed):
    r = Rng(seed)
    basis = build_basis(m)
    v = r.normal(0, 1, m - 1)
    assert np.max(np.abs(project(lift(LcwParam(v, basis))).v - v)) < 1e-10
    w = r.normal(0, 1, m)
    # lift . project removes the mean
    assert np.max(np.abs(lift(project(w)) - (w - w.mean()))) < 1e-10


def test_project_already_in_subspace():
    w = np.array([3.0, -1.0, -2.0, 0.0])
    assert np.max(np.abs(lift(project(w)) - w)) < 1e-10


def test_project_ones_is_zero():
    assert np.max(np.abs(project(np.ones(9)).v)) < 1e-12


def test_shape_errors():
    with pytest.raises(ShapeError):
        LcwParam(np.zeros(3), build_basis(3))
    with pytest.raises(ShapeError):
        project(np.zeros(4), build_basis(5))
    with pytest.raises(ShapeError):
        lift_rows(np.zeros((2, 3)), build_basis(3))
    with pytest.raises(ShapeError):
        project_rows(np.zeros((2, 3)), build_basis(4))


def test_row_forms_match_vector_forms(rng):
    basis = build_basis(6)
    V = rng.normal(0, 1, (4, 5))
    W = lift_rows(V, basis)
    for i in range(4):
        assert np.allclose(W[i], lift(LcwParam(V[i], basis)), atol=1e-14)
    assert np.allclose(project_rows(W, basis), V, atol=1e-12)


def test_kernel_basis_1x1x2():
    assert kernel_basis(1, 1, 2) is build_basis(2)
    k = kernel_basis(1, 1, 2).basis[:, 0]
    assert np.allclose(k / k[0], [1.0, -1.0])


def test_kernel_basis_3x3x3_sums(rng):
    basis = kernel_basis(3, 3, 3)
    W = lift_rows(rng.normal(0, 1, (10, 26)), basis)
    assert np.max(np.abs(W.sum(axis=1))) < 1e-10


def test_zero_sum_kernel_on_constant_input(rng):
    conv = Conv2d(3, 5, 3, lcw=True)
    conv.v.value = rng.normal(0, 1, conv.v.value.shape)
    x = np.empty((2, 3, 6, 6))
    x[:] = 2.7  # every channel equal to the same constant
    assert np.max(np.abs(conv.forward(x))) < 1e-12


def test_kernel_basis_too_small():
    with pytest.raises(ValueError):
        kernel_basis(1, 1, 1)


def test_zero_shift_monte_carlo():
    # sample mean of w . a over 1e6 draws of i.i.d. uniform(0,1) inputs
    r = Rng(77)
    m = 10
    w = lift(LcwParam(r.normal(0, 1, m - 1), build_basis(m)))
    total, total2, n = 0.0, 0.0, 0
    for _ in range(10):
        z = w @ r.uniform(0, 1, (m, 100_000))
        total += z.sum()
        total2 += (z * z).sum()
        n += z.size
    mean = total / n
    se = np.sqrt((total2 / n - mean**2) / n)
    assert abs(mean) < 4 * se
