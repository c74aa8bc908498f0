import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droopgrid.frames import (
    J, AbcSignal, Angle, DqVector, FrameMismatchError, TWO_PI, inverse_park, park,
    park_matrix, rotation, rotation_derivative, to_local, to_synchronous, wrap_angle,
)

angles = st.floats(-50.0, 50.0, allow_nan=False)
values = st.floats(-1e3, 1e3, allow_nan=False)


def test_park_of_zero_is_zero():
    dq, z = park(0.0, AbcSignal(0.0, 0.0, 0.0))
    assert (dq.d, dq.q, z) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("theta", [0.3, 1.7, 5.0])
def test_symmetric_signal_maps_to_constant_d(theta):
    amp = 311.0
    dq, z = park(theta, AbcSignal.symmetric(amp, theta))
    assert dq.d == pytest.approx(np.sqrt(1.5) * amp, rel=1e-12)
    assert abs(dq.q) < 1e-10
    assert abs(z) < 1e-12


def test_round_trip_fixed_case():
    x = AbcSignal(1.0, 2.0, 3.0)
    back = inverse_park(0.7, *park(0.7, x))
    np.testing.assert_allclose(back.as_array(), [1.0, 2.0, 3.0], atol=1e-12)


def test_inverse_of_zero():
    assert inverse_park(0.0, DqVector(0.0, 0.0), 0.0).as_array().tolist() == [0.0, 0.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(angles, values, values, values)
def test_round_trip_property(theta, a, b, c):
    x = AbcSignal(a, b, c)
    back = inverse_park(theta, *park(theta, x)).as_array()
    np.testing.assert_allclose(back, x.as_array(), atol=1e-12 * max(1.0, abs(a), abs(b), abs(c)))


@settings(max_examples=200, deadline=None)
@given(angles, st.lists(values, min_size=6, max_size=6))
def test_park_preserves_power(theta, vals):
    v, i = np.array(vals[:3]), np.array(vals[3:])
    T = park_matrix(theta)
    assert np.isclose(v @ i, (T @ v) @ (T @ i), rtol=0, atol=1e-10 * max(1.0, np.abs(v).max() * np.abs(i).max()))


@settings(max_examples=100, deadline=None)
@given(angles, st.floats(0.0, 1e3))
def test_symmetric_zero_sequence_vanishes(theta, amp):
    x = AbcSignal.symmetric(amp, theta + 0.4)
    assert x.is_symmetric()
    _, z = park(theta, x)
    assert abs(z) < 1e-12 * max(1.0, amp)


def test_rotation_at_zero_is_identity():
    np.testing.assert_array_equal(rotation(0.0), np.eye(2))


@settings(max_examples=200, deadline=None)
@given(angles, angles)
def test_rotation_group_properties(d1, d2):
    R = rotation(d1)
    np.testing.assert_allclose(np.linalg.inv(R), R.T, atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rotation(d1) @ rotation(d2), rotation(d1 + d2), atol=1e-12)
    np.testing.assert_allclose(J @ R, R @ J, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(angles)
def test_rotation_derivative_matches_central_difference(d):
    h = 1e-5
    fd = (rotation(d + h) - rotation(d - h)) / (2 * h)
    np.testing.assert_allclose(rotation_derivative(d), fd, atol=1e-8)


def test_angle_wrapping():
    assert Angle(-0.5).value == pytest.approx(TWO_PI - 0.5)
    assert Angle(7.0).value == pytest.approx(7.0 - TWO_PI)
    assert 0.0 <= wrap_angle(-1e-18) < TWO_PI
    with pytest.raises(ValueError):
        Angle(float("nan"))


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e6, 1e6))
def test_wrapping_is_idempotent(theta):
    w = wrap_angle(theta)
    assert 0.0 <= w < TWO_PI
    assert wrap_angle(w) == w


def test_park_accepts_angle_objects():
    x = AbcSignal(1.0, -0.3, -0.7)
    assert park(Angle(1.2), x)[0] == park(1.2, x)[0]


def test_frame_tags_must_match():
    a, b = DqVector(1.0, 2.0, "dq"), DqVector(1.0, 2.0, "DQ")
    with pytest.raises(FrameMismatchError):
        a + b
    with pytest.raises(FrameMismatchError):
        a.dot(b)
    with pytest.raises(FrameMismatchError):
        to_local(0.1, a)
    with pytest.raises(ValueError):
        DqVector(1.0, 0.0, "abc")


def test_local_synchronous_round_trip():
    x = DqVector(3.0, -4.0)
    y = to_synchronous(0.8, x)
    assert y.frame == "DQ"
    back = to_local(0.8, y)
    assert back.frame == "dq"
    np.testing.assert_allclose(back.as_array(), x.as_array(), atol=1e-14)
    assert (x - x).dot(x) == 0.0
