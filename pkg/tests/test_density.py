import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from hsalign.density import (
    Bandwidth,
    KdeModel,
    ProjectionMatrix,
    SampleSet,
    kernel_value,
    log_density,
    log_density_gradient,
    scatter_matrix,
    softmax_weights,
)
from hsalign.errors import InputError
from hsalign.gradcheck import central_difference, compare
from hsalign.optimizer import retract

from conftest import random_instance


def model(data, w, variances):
    return KdeModel(SampleSet(data), w, Bandwidth(variances))


def random_model(seed, d=5, p=2, n=20):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, d))
    w = retract(rng.standard_normal((d, p))).w
    variances = rng.uniform(0.3, 2.0, p)
    query = rng.standard_normal(d)
    return model(data, w, variances), query


# --- types -----------------------------------------------------------------


def test_sample_set_rejects_nonfinite_and_bad_labels():
    with pytest.raises(InputError):
        SampleSet([[1.0, np.nan]])
    with pytest.raises(InputError):
        SampleSet(np.ones((3, 2)), labels=[0, 1])
    s = SampleSet(np.ones((3, 2)), labels=[0, 1, 0])
    assert s.n == 3 and s.d == 2 and s.has_labels


def test_projection_matrix_invariants():
    with pytest.raises(InputError):
        ProjectionMatrix(np.ones((3, 1)))
    with pytest.raises(InputError):
        ProjectionMatrix(np.eye(2, 3))
    assert ProjectionMatrix(np.eye(3)[:, :2]).p == 2


@pytest.mark.parametrize("bad", [[0.0], [-1.0], [np.inf], []])
def test_bandwidth_rejects_nonpositive(bad):
    with pytest.raises(InputError):
        Bandwidth(bad)


def test_model_shape_checks():
    with pytest.raises(InputError):
        model(np.zeros((2, 3)), np.eye(2)[:, :1], [1.0])
    with pytest.raises(InputError):
        model(np.zeros((2, 2)), np.eye(2)[:, :1], [1.0, 1.0])


# --- kernel_value ------------------------------------------------------------


def test_kernel_value_at_sample_is_one():
    m, _ = random_model(1)
    assert kernel_value(m, m.samples.data[3], 3) == 1.0


def test_kernel_value_orthogonal_difference_is_one():
    w = np.array([[1.0], [0.0]])
    m = model([[0.0, 0.0]], w, [1.0])
    assert kernel_value(m, [0.0, 7.5], 0) == 1.0


def test_kernel_value_hand_quadratic_form():
    # only the first coordinate of delta=(2, 5) survives: exp(-2^2/2)
    m = model([[0.0, 0.0]], np.array([[1.0], [0.0]]), [1.0])
    assert_allclose(kernel_value(m, [2.0, 5.0], 0), 0.1353352832366127, rtol=1e-15)


def test_kernel_value_errors():
    m, q = random_model(2)
    with pytest.raises(InputError):
        kernel_value(m, q[:-1], 0)
    with pytest.raises(InputError):
        kernel_value(m, q, m.samples.n)


# --- softmax_weights -----------------------------------------------------------


def test_softmax_single_sample():
    m = model([[1.0, 2.0]], np.eye(2)[:, :1], [1.0])
    assert_allclose(softmax_weights(m, [9.0, 9.0]), [1.0])


def test_softmax_equidistant_uniform():
    data = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    m = model(data, np.eye(2), [1.0, 1.0])
    assert_allclose(softmax_weights(m, [0.0, 0.0]), np.full(4, 0.25), rtol=1e-15)


def test_softmax_far_separated_pair():
    # projected distance^2 / h^2 = 100 -> second weight e^-50 / (1 + e^-50)
    m = model([[0.0], [10.0]], np.eye(1), [1.0])
    a = softmax_weights(m, [0.0])
    assert_allclose(a[1], 1.9287498479639178e-22, rtol=1e-12)
    assert_allclose(a[0], 1.0, rtol=1e-15)


def test_softmax_stable_for_huge_exponents():
    m = model([[0.0], [1e3]], np.eye(1), [1e-3])
    a = softmax_weights(m, [5e2 + 1.0])
    assert np.all(np.isfinite(a)) and a.sum() == pytest.approx(1.0)


# --- log_density -------------------------------------------------------------


def test_log_density_single_point_normal_constant():
    m = model([[0.3, -1.0]], np.array([[1.0], [0.0]]), [1.0])
    assert_allclose(log_density(m, [0.3, -1.0]), -0.9189385332046727, rtol=1e-15)


def test_log_density_matches_direct_sum():
    m, q = random_model(3)
    w, v = m.w, m.variances
    u = (q - m.samples.data) @ w
    k = np.exp(-0.5 * np.sum(u * u / v, axis=1))
    direct = np.log(np.mean(k) * (2 * np.pi) ** (-w.shape[1] / 2) / np.sqrt(np.prod(v)))
    assert_allclose(log_density(m, q), direct, rtol=1e-13)


def test_log_density_finite_far_from_data():
    m = model([[0.0]], np.eye(1), [1e-4])
    assert np.isfinite(log_density(m, [50.0]))


def test_log_density_translation_invariant():
    m, q = random_model(4)
    shift = np.random.default_rng(5).standard_normal(q.size) * 3
    moved = model(m.samples.data + shift, m.w, m.variances)
    assert abs(log_density(moved, q + shift) - log_density(m, q)) <= 1e-12


def test_log_density_duplication_invariant():
    m, q = random_model(6)
    doubled = model(np.vstack([m.samples.data, m.samples.data]), m.w, m.variances)
    assert_allclose(log_density(doubled, q), log_density(m, q), rtol=1e-14)


# --- scatter_matrix ------------------------------------------------------------


def test_scatter_zero_for_single_coincident_sample():
    m = model([[1.0, 2.0, 3.0]], np.eye(3)[:, :2], [1.0, 1.0])
    assert np.array_equal(scatter_matrix(m, [1.0, 2.0, 3.0]), np.zeros((3, 3)))


def test_scatter_two_equidistant_samples():
    # deltas (1,0) and (0,1) project to the same value under (1,1)/sqrt(2)
    w = np.array([[1.0], [1.0]]) / math.sqrt(2)
    m = model([[-1.0, 0.0], [0.0, -1.0]], w, [0.7])
    assert_allclose(scatter_matrix(m, [0.0, 0.0]), 0.5 * np.eye(2), atol=1e-15)


def test_scatter_symmetric_psd():
    for seed in range(20):
        m, q = random_model(seed, d=6, p=3)
        c = scatter_matrix(m, q)
        assert np.array_equal(c, c.T)
        assert np.linalg.eigvalsh(c).min() >= -1e-10


# --- log_density_gradient --------------------------------------------------------


def test_gradient_zero_for_single_coincident_sample():
    for var in (0.01, 1.0, 100.0):
        m = model([[1.0, 2.0, 3.0]], np.eye(3)[:, :2], [var, var])
        assert np.array_equal(log_density_gradient(m, [1.0, 2.0, 3.0]), np.zeros((3, 2)))


def test_gradient_equals_minus_scatter_w_hinv():
    m, q = random_model(7)
    expected = -scatter_matrix(m, q) @ m.w / m.variances
    assert_allclose(log_density_gradient(m, q), expected, rtol=1e-12, atol=1e-15)


def _fd_check(m, q):
    def f(w):
        return log_density(KdeModel(m.samples, w, m.bandwidth), q)

    return compare(log_density_gradient(m, q), central_difference(f, m.w, 1e-6), 1e-8)


def test_gradient_matches_finite_differences_reference_instance():
    m, q = random_model(11, d=5, p=2, n=20)
    assert _fd_check(m, q).max_rel_error <= 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences_sweep(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(2, 8))
    p = int(rng.integers(1, d + 1))
    m, q = random_model(100 + seed, d=d, p=p, n=int(rng.integers(5, 30)))
    assert _fd_check(m, q).max_rel_error <= 1e-5


# --- properties ------------------------------------------------------------------

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    data=arrays(np.float64, (7, 3), elements=finite),
    query=arrays(np.float64, 3, elements=st.floats(-50, 50)),
    var=st.floats(1e-3, 10.0),
    seed=st.integers(0, 2**16),
)
def test_softmax_is_a_distribution(data, query, var, seed):
    w = retract(np.random.default_rng(seed).standard_normal((3, 2))).w
    a = softmax_weights(model(data, w, [var, 2 * var]), query)
    assert np.all(a >= 0)
    assert abs(a.sum() - 1.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(
    data=arrays(np.float64, (6, 3), elements=finite),
    shift=arrays(np.float64, 3, elements=finite),
    seed=st.integers(0, 2**16),
)
def test_log_density_translation_property(data, shift, seed):
    rng = np.random.default_rng(seed)
    w = retract(rng.standard_normal((3, 2))).w
    q = rng.standard_normal(3)
    a = log_density(model(data, w, [0.5, 1.5]), q)
    b = log_density(model(data + shift, w, [0.5, 1.5]), q + shift)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_shared_instance_helper_is_consistent():
    source, target, w, bw = random_instance(3)
    assert w.shape == (source.d, bw.p)
