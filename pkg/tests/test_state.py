import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgi.data import empty_traits, InteractionData
from lgi.state import ConfigError, PriorConfig, ShrinkState, coefficient_prior_variance, init_state, stick_break


def test_stick_break_examples():
    om, pi = stick_break([0.5, 0.5, 1.0])
    np.testing.assert_allclose(om, [0.5, 0.25, 0.25])
    np.testing.assert_allclose(pi, [0.5, 0.75, 1.0])
    om, pi = stick_break([1.0, 0.3, 1.0])
    np.testing.assert_allclose(om, [1, 0, 0])
    np.testing.assert_allclose(pi, [1, 1, 1])
    om, pi = stick_break([1.0])
    assert om.tolist() == [1.0] and pi.tolist() == [1.0]


def test_stick_break_requires_last_one():
    with pytest.raises(ValueError):
        stick_break([0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=0, max_size=12))
def test_stick_break_simplex(vs):
    om, pi = stick_break(vs + [1.0])
    assert (om >= 0).all()
    assert om.sum() == pytest.approx(1.0)
    assert (np.diff(pi) >= -1e-12).all()
    assert pi[-1] == 1.0


def _shrink(H=3, tau=1.0, theta=0.5):
    one = np.full(H, tau)
    return ShrinkState(theta=np.full(H, theta), tau_beta=np.full((2, H), tau), tau_gamma=np.full((1, H), tau),
                       tau_lam=one, tau_delta=one, tau_zeta=one, v=np.array([0.5, 0.5, 1.0]),
                       omega=np.array([0.5, 0.25, 0.25]), pi=np.array([0.5, 0.75, 1.0]), z=np.array([3, 3, 3]))


def test_coefficient_prior_variance():
    assert coefficient_prior_variance(_shrink(tau=1.0, theta=0.01), "lambda", 0) == pytest.approx(0.01)
    assert coefficient_prior_variance(_shrink(tau=2.0, theta=0.5), "beta", 1, m=1) == pytest.approx(1.0)
    with pytest.raises(IndexError):
        coefficient_prior_variance(_shrink(), "lambda", 3)
    with pytest.raises(ValueError):
        coefficient_prior_variance(_shrink(), "kappa", 0)


def test_prior_config_validation():
    with pytest.raises(ConfigError):
        PriorConfig(H=0)
    with pytest.raises(ConfigError):
        PriorConfig(theta_inf=-1)
    with pytest.raises(ConfigError):
        PriorConfig.from_dict({"H": 3, "bogus": 1})
    p = PriorConfig(H=4, alpha=3.0)
    assert PriorConfig.from_json(p.to_json()) == p


def test_init_state_shapes_and_slab_theta():
    data = InteractionData(np.zeros((4, 6)), np.ones((4, 6)), tuple("abcd"), tuple("uvwxyz"))
    prior = PriorConfig(H=5)
    for seed in range(20):
        s = init_state(prior, data, empty_traits(4), empty_traits(6), np.eye(4), np.eye(6),
                       np.random.default_rng(seed))
        assert (s.shrink.theta > prior.theta_inf).all()
        assert s.U.shape == (4, 5) and s.V.shape == (6, 5)
        assert s.shrink.v[-1] == 1.0


def test_init_state_dimension_mismatch():
    data = InteractionData(np.zeros((2, 2)), np.ones((2, 2)), ("a", "b"), ("x", "y"))
    with pytest.raises(ConfigError):
        init_state(PriorConfig(H=2), data, empty_traits(3), empty_traits(2), np.eye(2), np.eye(2),
                   np.random.default_rng(0))
