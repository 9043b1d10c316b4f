import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaitmppi.gait import PRONK, TROT, GaitCommand, InvalidInputError
from gaitmppi.rewards import (
    TERMS,
    RewardWeights,
    UndefinedMetricError,
    cost_of_transport,
    r_ang,
    r_cont,
    r_div,
    r_energy,
    r_gait,
    r_vel,
    total_reward,
    weighted_total,
)

penalty = st.floats(-1e3, 0.0, allow_nan=False)
weight = st.floats(0.0, 100.0, allow_nan=False)


def test_weights_validation():
    with pytest.raises(InvalidInputError):
        RewardWeights((1, 2, 3))
    with pytest.raises(InvalidInputError):
        RewardWeights((1, -1, 0, 0, 0, 0))
    with pytest.raises(InvalidInputError):
        RewardWeights((1, np.nan, 0, 0, 0, 0))


def test_lambda_is_sixth_weight():
    w = RewardWeights((1, 2, 3, 4, 5, 6))
    assert w.lambda_gait == 6.0
    assert w.replace(r_gait=9.0).lambda_gait == 9.0


def test_velocity_examples():
    assert r_vel(1.0, 1.0) == 0.0
    assert r_vel(1.0, 1.5) == pytest.approx(-0.25)
    assert r_vel((1, 0), (0, 1)) == pytest.approx(-2.0)
    with pytest.raises(InvalidInputError):
        r_vel((1, 0), (1, 0, 0))


def test_energy_examples():
    assert r_energy(0.0) == 0.0
    assert r_energy(115.37) == -115.37
    assert r_energy(50) == -50
    with pytest.raises(InvalidInputError):
        r_energy(-1.0)


def test_angular_and_action_terms():
    assert r_ang(0.0) == 0.0
    assert r_ang(0.5) == pytest.approx(-0.25)
    assert r_cont((0.3,), (0.3,)) == 0.0
    assert r_div((0.3,), (0.3,)) == 0.0
    assert r_cont((0.1, -0.2), (0, 0)) == pytest.approx(-0.05)
    with pytest.raises(InvalidInputError):
        r_div((0.1, 0.2), (0.1,))


def test_gait_term():
    assert r_gait(TROT, TROT) == 0.0
    assert r_gait(GaitCommand((0.9, 0, 0)), GaitCommand((0.1, 0, 0))) == pytest.approx(-0.04)
    assert r_gait(TROT, PRONK) == pytest.approx(-0.5)


def test_total_examples():
    assert total_reward(RewardWeights()).total == 0.0
    w = RewardWeights((2, 0, 0, 0, 0, 0))
    assert total_reward(w, r_vel=-0.25).total == pytest.approx(-0.5)
    w = RewardWeights((1, 0.01, 0, 0, 0, 0))
    b = total_reward(w, r_vel=-0.25, r_energy=-100)
    assert b.total == pytest.approx(-1.25, abs=1e-12)
    assert b.r_vel == -0.25 and b.r_energy == -100


def test_total_rejects_bad_terms():
    with pytest.raises(InvalidInputError):
        total_reward(RewardWeights(), r_speed=-1.0)
    with pytest.raises(InvalidInputError):
        total_reward(RewardWeights(), r_vel=0.5)


@given(arrays(float, 6, elements=penalty), arrays(float, 6, elements=weight),
       arrays(float, 6, elements=weight))
def test_total_linear_in_weights(comps, w1, w2):
    terms = dict(zip(TERMS, comps))
    a = total_reward(RewardWeights(tuple(w1)), **terms).total
    b = total_reward(RewardWeights(tuple(w2)), **terms).total
    c = total_reward(RewardWeights(tuple(w1 + w2)), **terms).total
    assert c == pytest.approx(a + b, rel=1e-12, abs=1e-9)


@given(arrays(float, 6, elements=penalty), arrays(float, 6, elements=weight),
       st.integers(0, 5), st.floats(0.0, 10.0))
def test_total_monotone_in_each_component(comps, w, i, extra):
    weights = RewardWeights(tuple(w))
    base = weighted_total(comps, weights)
    worse = comps.copy()
    worse[i] -= extra
    assert weighted_total(worse, weights) <= base + 1e-9


# coarse grid keeps squared differences clear of underflow
grid = st.integers(-1000, 1000).map(lambda k: k / 100)


@given(arrays(float, 3, elements=grid), arrays(float, 3, elements=grid))
def test_squared_terms_strictly_negative_off_identity(a, b):
    for f in (r_cont, r_div):
        val = f(a, b)
        assert val <= 0.0
        assert (val == 0.0) == bool(np.all(a == b))


def test_cost_of_transport_examples():
    assert cost_of_transport(0.0, 12, 9.81, 1.0) == 0.0
    assert cost_of_transport(115.37, 12, 9.81, 1.0) == pytest.approx(0.98, abs=5e-5)
    assert cost_of_transport(230.74, 12, 9.81, 2.0) == cost_of_transport(115.37, 12, 9.81, 1.0)


def test_cost_of_transport_undefined_at_standstill():
    with pytest.raises(UndefinedMetricError):
        cost_of_transport(10.0, 12, 9.81, 0.0)
    with pytest.raises(InvalidInputError):
        cost_of_transport(10.0, 0.0, 9.81, 1.0)


@given(st.floats(0, 1e4), st.floats(0.01, 10), st.floats(0.01, 100))
def test_cost_of_transport_scale_invariant(p, v, k):
    assert cost_of_transport(p * k, 12, 9.81, v * k) == pytest.approx(cost_of_transport(p, 12, 9.81, v),
                                                                      rel=1e-12, abs=1e-300)
