import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlplate.laminate import isotropic_form
from mlplate.tensor import (
    ElasticForm, SingularFormError, check, cholesky, form_eval, form_pair, from_voigt2, from_voigt3,
    hat, skew, sym, to_voigt2, to_voigt3,
)

from oracles import random_form

finite = st.floats(-1e3, 1e3, allow_nan=False)
mat3 = arrays(float, (3, 3), elements=finite)
mat2 = arrays(float, (2, 2), elements=finite)


def test_sym_examples():
    assert np.array_equal(sym(np.eye(3)), np.eye(3))
    w = np.array([[0.0, 1, -2], [-1, 0, 3], [2, -3, 0]])
    assert np.array_equal(sym(w), np.zeros((3, 3)))
    assert np.array_equal(sym(np.array([[0.0, 2], [0, 0]])), [[0, 1], [1, 0]])


def test_hat_and_check():
    assert np.array_equal(hat(np.eye(2)), np.diag([1.0, 1, 0]))
    assert np.array_equal(hat(np.zeros((2, 2))), np.zeros((3, 3)))
    g = np.array([[1.0, 2], [3, 4]])
    h = hat(g)
    assert np.array_equal(h[:2, :2], g) and not h[2].any() and not h[:, 2].any()
    assert np.array_equal(check(np.eye(3)), np.eye(2))
    e3 = np.zeros((3, 3))
    e3[2, 2] = 1
    assert np.array_equal(check(e3), np.zeros((2, 2)))


@given(mat3)
def test_sym_idempotent_and_split(m):
    assert np.array_equal(sym(sym(m)), sym(m))
    np.testing.assert_allclose(sym(m) + skew(m), m, atol=1e-12)


@given(mat2)
def test_check_inverts_hat(g):
    assert np.array_equal(check(hat(g)), g)


@given(mat3)
def test_voigt_round_trip(m):
    np.testing.assert_allclose(from_voigt3(to_voigt3(m)), sym(m), rtol=0, atol=1e-12)


@given(mat2)
def test_voigt2_round_trip(m):
    np.testing.assert_allclose(from_voigt2(to_voigt2(m)), sym(m), rtol=0, atol=1e-12)


def test_voigt_contraction_matches_tensor_norm(rng):
    m = sym(rng.normal(size=(3, 3)))
    iso = isotropic_form(0.0, 0.5)  # form_eval = |S|^2
    assert form_eval(iso, m) == pytest.approx(np.sum(m * m), rel=1e-14)


def test_isotropic_values(unit_iso):
    assert form_eval(unit_iso, np.eye(3)) == pytest.approx(15.0, rel=1e-15)
    assert form_eval(unit_iso, np.diag([1.0, 0, 0])) == pytest.approx(3.0, rel=1e-15)


def test_antisymmetric_kernel(rng):
    q = random_form(rng)
    w = skew(rng.normal(size=(100, 3, 3)))
    assert np.max(np.abs(form_eval(q, w))) == 0.0


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_polarization_and_antisymmetric_invariance(seed):
    rng = np.random.default_rng(seed)
    q = random_form(rng)
    a, b = rng.normal(size=(2, 3, 3))
    w = skew(rng.normal(size=(3, 3)))
    assert form_pair(q, a, a) == pytest.approx(form_eval(q, a), rel=1e-12)
    assert form_pair(q, a, b) == pytest.approx(form_pair(q, b, a), rel=1e-12)
    assert form_eval(q, a + w) == pytest.approx(form_eval(q, a), rel=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_coercivity_bound(seed):
    rng = np.random.default_rng(seed)
    q = random_form(rng)
    s = sym(rng.normal(size=(200, 3, 3)))
    bound = q.min_eigenvalue * np.sum(s * s, axis=(1, 2))
    assert np.all(form_eval(q, s) >= bound * (1 - 1e-12))


def test_isotropic_coercivity_constant(unit_iso):
    assert unit_iso.min_eigenvalue == pytest.approx(2.0, rel=1e-12)
    assert unit_iso.coercive


def test_elastic_form_validation():
    with pytest.raises(ValueError):
        ElasticForm(np.eye(5))
    bad = np.eye(6)
    bad[0, 1] = 1.0
    with pytest.raises(ValueError):
        ElasticForm(bad)
    with pytest.raises(ValueError):
        ElasticForm(np.full((6, 6), np.nan))
    assert not ElasticForm(np.diag([1.0, 1, 1, 1, 1, 0])).coercive


def test_cholesky_rejects_singular():
    with pytest.raises(SingularFormError) as exc:
        cholesky(np.diag([1.0, 0.0, 1.0]))
    assert exc.value.code == "relaxation-singular"
    a = np.array([[4.0, 2], [2, 3]])
    low = cholesky(a)
    np.testing.assert_allclose(low @ low.T, a, rtol=1e-15)
