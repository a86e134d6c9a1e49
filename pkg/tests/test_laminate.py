import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlplate.laminate import Layer, LaminateError, build_laminate, homogeneous_laminate, isotropic_form, sample_at
from mlplate.tensor import ElasticForm, form_eval, skew


def test_isotropic_form(rng):
    q = isotropic_form(1, 1)
    assert form_eval(q, np.eye(3)) == pytest.approx(15)
    assert form_eval(q, np.diag([1.0, 0, 0])) == pytest.approx(3)
    assert form_eval(isotropic_form(0, 1), skew(rng.normal(size=(3, 3)))) == 0
    assert q.coercive
    with pytest.raises(ValueError):
        isotropic_form(1, 0)
    with pytest.raises(ValueError):
        isotropic_form(-0.1, 1)


def test_breakpoints(unit_iso):
    assert np.array_equal(homogeneous_laminate(unit_iso).breakpoints, [-0.5, 0.5])
    two = build_laminate([Layer(0.5, unit_iso), Layer(0.5, unit_iso)])
    assert np.array_equal(two.breakpoints, [-0.5, 0.0, 0.5])


def test_bad_partition(unit_iso):
    with pytest.raises(LaminateError) as exc:
        build_laminate([Layer(0.6, unit_iso), Layer(0.6, unit_iso)])
    assert exc.value.code == "bad-partition"
    assert "[0, 1]" in str(exc.value)
    with pytest.raises(LaminateError):
        build_laminate([])


def test_non_coercive_layer(unit_iso):
    soft = ElasticForm(np.diag([1.0, 1, 1, 1, 1, 0]))
    with pytest.raises(LaminateError) as exc:
        build_laminate([Layer(0.5, unit_iso), Layer(0.5, soft)])
    assert exc.value.code == "non-coercive-layer"


def test_sample_at(unit_iso):
    lam = homogeneous_laminate(unit_iso, None, np.eye(3))
    q, b = sample_at(lam, 0.25)
    assert q == unit_iso and np.array_equal(b, 0.25 * np.eye(3))
    soft = isotropic_form(1, 2)
    bi = build_laminate([Layer(0.5, unit_iso), Layer(0.5, soft)])
    assert sample_at(bi, -0.25)[0] == unit_iso
    assert sample_at(bi, 0.0)[0] == soft  # breakpoint belongs to the layer above
    for t in (0.7, -0.5, 0.5):
        with pytest.raises(LaminateError) as exc:
            sample_at(bi, t)
        assert exc.value.code == "out-of-thickness"


@given(st.floats(-0.499, 0.499), st.floats(-0.499, 0.499), st.floats(0, 1))
def test_misfit_affine_and_stiffness_constant_per_layer(t0, t1, s):
    b0 = np.arange(9.0).reshape(3, 3)
    b1 = np.eye(3) - 2
    lam = build_laminate([Layer(0.3, isotropic_form(1, 1), b0, b1), Layer(0.7, isotropic_form(2, 1), -b0, b1)])
    k0, k1 = lam.layer_index(np.array([t0, t1]))
    if k0 != k1:
        return
    tm = (1 - s) * t0 + s * t1
    if lam.layer_index(tm) != k0:
        return
    q0, m0 = sample_at(lam, t0)
    q1, m1 = sample_at(lam, t1)
    qm, mm = sample_at(lam, tm)
    assert q0 == q1 == qm
    np.testing.assert_allclose(mm, (1 - s) * m0 + s * m1, atol=1e-12)


def test_gauss_points_integrate_quadratics_exactly():
    lam = build_laminate([Layer(f, isotropic_form(1, 1)) for f in (0.2, 0.5, 0.3)])
    t, w, owner = lam.gauss_points(2)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w @ t == pytest.approx(0.0, abs=1e-15)
    assert w @ t**2 == pytest.approx(1 / 12, rel=1e-14)
    assert list(owner) == [0, 0, 1, 1, 2, 2]
