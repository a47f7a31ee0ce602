import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from himo.errors import ValidationError
from himo.numeric import (as_matrix, matrix_from_bytes, matrix_from_json, matrix_to_bytes,
                          matrix_to_json, normalize_rows, thin_svd)

from _oracles import jacobi_singular_values

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
shapes = st.tuples(st.integers(1, 12), st.integers(1, 12))


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (16, 16), (32, 8)])
def test_singular_values_match_jacobi(shape):
    a = np.random.default_rng(sum(shape)).standard_normal(shape)
    np.testing.assert_allclose(thin_svd(a).singular_values, jacobi_singular_values(a),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite)))
def test_svd_properties(a):
    svd = thin_svd(a)
    r = min(a.shape)
    assert svd.u.shape == (a.shape[0], r) and svd.vt.shape == (r, a.shape[1])
    scale = max(1.0, np.abs(a).max())
    np.testing.assert_allclose(svd.reconstruct(), a, atol=1e-10 * scale)
    assert np.all(np.diff(svd.singular_values) <= 1e-12 * scale)
    assert np.all(svd.singular_values >= 0)
    np.testing.assert_allclose(svd.vt @ svd.vt.T, np.eye(r), atol=1e-10)
    # sign rule: the largest-magnitude entry of each right vector is positive
    pivots = svd.vt[np.arange(r), np.argmax(np.abs(svd.vt), axis=1)]
    assert np.all(pivots >= 0)


def test_sign_convention_is_stable_under_row_flip():
    a = np.random.default_rng(3).standard_normal((6, 4))
    b = thin_svd(a).vt
    c = thin_svd(-a).vt
    np.testing.assert_allclose(b, c, atol=1e-12)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ValidationError, match="2-D"):
        as_matrix(np.zeros(3))
    with pytest.raises(ValidationError, match="at least one"):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(ValidationError, match=r"\(1, 2\)"):
        as_matrix([[0, 0, 0], [0, 0, np.nan]])


def test_normalize_rows_names_the_zero_row():
    with pytest.raises(ValidationError, match="zero-norm row 1 in text"):
        normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]), "text")


@settings(max_examples=40, deadline=None)
@given(shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite)))
def test_serialization_round_trips_bit_exactly(a):
    assert np.array_equal(matrix_from_bytes(matrix_to_bytes(a)), a)
    assert np.array_equal(matrix_from_json(matrix_to_json(a)), a)


def test_binary_layout_is_little_endian():
    buf = matrix_to_bytes([[1.0, 2.0]])
    assert buf[:16] == (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
    assert buf[16:24] == np.float64(1.0).astype("<f8").tobytes()


def test_truncated_payload_rejected():
    buf = matrix_to_bytes(np.ones((2, 2)))
    with pytest.raises(ValidationError, match="implies"):
        matrix_from_bytes(buf[:-1])
    with pytest.raises(ValidationError, match="header"):
        matrix_from_bytes(b"abc")
