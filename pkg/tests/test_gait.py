import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaitmppi.gait import (
    BOUND,
    CANONICAL_GAITS,
    PACE,
    PRONK,
    TROT,
    GaitCommand,
    InvalidInputError,
    canonical_weights,
    contact_schedule,
    foot_offsets,
    gait_distance_sq,
    nearest_canonical,
    wrap,
    wrap_array,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vec3 = arrays(float, 3, elements=finite)
unit3 = arrays(float, 3, elements=st.floats(0.0, 1.0, exclude_max=True))


def test_wrap_examples():
    assert wrap((1.2, -0.3, 0.5)).offsets == pytest.approx((0.2, 0.7, 0.5), abs=1e-12)
    assert wrap((0, 0, 0)).offsets == (0.0, 0.0, 0.0)
    assert wrap((2.0, 1.0, 0.999)).offsets == (0.0, 0.0, 0.999)


def test_wrap_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        wrap((np.nan, 0, 0))
    with pytest.raises(InvalidInputError):
        wrap((0, np.inf, 0))


def test_tiny_negative_wraps_into_range():
    g = wrap((-1e-18, 0.0, 0.0))
    assert all(0.0 <= x < 1.0 for x in g.offsets)


def test_gait_command_requires_wrapped_values():
    with pytest.raises(InvalidInputError):
        GaitCommand((1.0, 0.0, 0.0))
    with pytest.raises(InvalidInputError):
        GaitCommand((0.1, 0.2))


@given(vec3)
def test_wrap_idempotent(x):
    once = wrap(x)
    assert wrap(once.offsets) == once


@given(vec3, st.integers(-50, 50))
def test_wrap_shift_invariant(x, k):
    x = np.clip(x, -1e3, 1e3)
    a = wrap(x).as_array()
    b = wrap(x + k).as_array()
    d = np.abs(a - b)
    assert np.all(np.minimum(d, 1 - d) < 1e-9)


def test_canonical_table():
    assert PRONK.offsets == (0.0, 0.0, 0.0)
    assert set(CANONICAL_GAITS) == {"trot", "pace", "bound", "pronk"}
    with pytest.raises(TypeError):
        CANONICAL_GAITS["walk"] = PRONK


def test_distance_examples():
    assert gait_distance_sq(TROT, TROT) == 0.0
    assert gait_distance_sq(GaitCommand((0.9, 0, 0)), GaitCommand((0.1, 0, 0))) == pytest.approx(0.04)
    assert gait_distance_sq(TROT, PRONK) == pytest.approx(0.5)


@given(unit3, unit3)
def test_distance_metric_properties(a, b):
    d_ab = gait_distance_sq(a, b)
    assert d_ab == pytest.approx(gait_distance_sq(b, a), abs=1e-15)
    assert d_ab >= 0.0
    assert gait_distance_sq(a, a) == 0.0
    if d_ab == 0.0:
        assert np.allclose(np.minimum(np.abs(a - b), 1 - np.abs(a - b)), 0.0)


@given(vec3, vec3)
def test_distance_wrap_compatible(x, y):
    x, y = np.clip(x, -100, 100), np.clip(y, -100, 100)
    raw = np.abs(x - y) % 1.0
    expected = np.sum(np.minimum(raw, 1 - raw) ** 2)
    assert gait_distance_sq(wrap(x), wrap(y)) == pytest.approx(expected, abs=1e-9)


def test_foot_offsets():
    assert np.array_equal(foot_offsets(PRONK), [0, 0, 0, 0])
    assert np.array_equal(foot_offsets(TROT), [0, 0.5, 0.5, 0])
    assert np.array_equal(foot_offsets(GaitCommand((0.25, 0.5, 0.75))), [0, 0.25, 0.5, 0.75])


def test_contact_examples():
    assert contact_schedule(PRONK, 0.0, 0.5).stance == (True, True, True, True)
    assert contact_schedule(TROT, 0.0, 0.5).stance == (True, False, False, True)
    assert contact_schedule(TROT, 0.5, 0.5).stance == (False, True, True, False)


@pytest.mark.parametrize("duty", [0.0, 1.0, -0.1, 1.5])
def test_contact_rejects_bad_duty(duty):
    with pytest.raises(InvalidInputError):
        contact_schedule(TROT, 0.0, duty)


@pytest.mark.parametrize("duty", [0.25, 0.5, 0.6, 0.75])
@pytest.mark.parametrize("gait", [TROT, PACE, BOUND, GaitCommand((0.13, 0.71, 0.42))])
def test_stance_fraction_matches_duty(duty, gait):
    period = 200
    stance = np.array([contact_schedule(gait, k / period, duty).stance for k in range(period)])
    frac = stance.mean(axis=0)
    assert np.all(np.abs(frac - duty) <= 1.0 / period + 1e-12)


def test_canonical_weights_hand_value():
    # squared distances 0.125, 0.125, 0.375, 0.375 over sigma^2 = 1/16
    w = canonical_weights(GaitCommand((0.5, 0.25, 0.25)), 0.25)
    assert w == pytest.approx([0.4910068950189542, 0.4910068950189542,
                               0.008993104981045779, 0.008993104981045779], abs=1e-15)
    assert abs(w.sum() - 1.0) < 1e-12


def test_canonical_weights_self_is_largest():
    for i, g in enumerate((TROT, PACE, BOUND, PRONK)):
        w = canonical_weights(g)
        assert np.argmax(w) == i and np.sum(w == w.max()) == 1


def test_canonical_weights_symmetry():
    # equidistant from trot and pace
    w = canonical_weights(GaitCommand((0.5, 0.25, 0.25)))
    assert w[0] == w[1]


@settings(max_examples=200)
@given(arrays(float, (5, 3), elements=st.floats(0.0, 1.0, exclude_max=True)))
def test_canonical_weights_sum_to_one(g):
    w = canonical_weights(g)
    assert w.shape == (5, 4)
    assert np.all(np.abs(w.sum(axis=-1) - 1.0) < 1e-12)
    assert np.all(w >= 0)


def test_nearest_canonical():
    assert nearest_canonical(wrap((0.02, 0.97, 0.01))) == "pronk"
    assert nearest_canonical(wrap((0.45, 0.52, 0.03))) == "trot"


def test_wrap_array_batch():
    x = np.array([[1.5, -0.25, 3.0], [0.0, 0.999, -2.5]])
    assert np.allclose(wrap_array(x), [[0.5, 0.75, 0.0], [0.0, 0.999, 0.5]])
