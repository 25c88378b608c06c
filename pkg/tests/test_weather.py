import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridres.weather import (
    CloudParams, RandomStream, WindParams, WindState, cloud_mean, simulate_weather,
    stationary_turbulence_std, step_cloud, step_wind, to_okta,
)

# logistic(14.6*L2(0) + 8.8*L4(0) - 30.3*L6(0)) with L2(0)=-1/2, L4(0)=3/8, L6(0)=-5/16
MU_HALF = 1.0 / (1.0 + math.exp(-5.46875))


def test_wind_parameters_load_as_listed():
    p = WindParams()
    assert (p.L, p.t_i) == (170.1, 0.2)
    assert p.sigma2 == math.sqrt(4.0 / 600.0)


@pytest.mark.parametrize("dt", [1.0, 60.0, 600.0])
def test_zero_noise_zero_turbulence_is_fixed_point(dt):
    s = step_wind(WindState(10.0, 0.0), WindParams(), dt, 0.0, 0.0)
    assert (s.v_m, s.v_t) == (10.0, 0.0)


def test_turbulence_decays_monotonically_without_noise():
    p = WindParams(v_m_fixed=10.0)
    s = WindState(10.0, 3.0)
    prev = s.v_t
    for _ in range(200):
        s = step_wind(s, p, 1.0, 0.0, 0.0)
        assert 0.0 <= s.v_t < prev
        prev = s.v_t


def test_mean_wind_clamped_at_zero_and_total_floored():
    s = step_wind(WindState(0.1, -5.0), WindParams(), 1.0, 0.0, -100.0)
    assert s.v_m == 0.0
    assert WindState(1.0, -3.0).v == 0.0


def test_per_hour_sigma_rescales_increment():
    p = WindParams(sigma2=1.0, sigma2_unit="per_hour")
    assert step_wind(WindState(10.0, 0.0), p, 1.0, 0.0, 6.0).v_m == pytest.approx(10.1)


@pytest.mark.parametrize("bad", [dict(L=0.0), dict(t_i=-0.1), dict(sigma2=-1.0), dict(sigma2_unit="x")])
def test_wind_params_validated(bad):
    with pytest.raises(ValueError):
        WindParams(**bad)


def test_step_wind_rejects_non_finite():
    with pytest.raises(ValueError):
        step_wind(WindState(10.0, 0.0), WindParams(), 1.0, float("nan"), 0.0)


def test_stationary_std_formula():
    p = WindParams()
    a = math.pi * 10.0 / (2 * p.L)
    b2 = math.pi * 1000.0 * p.t_i**2 / p.L
    assert stationary_turbulence_std(p, 10.0) == pytest.approx(math.sqrt(b2 / (2 * a)))


def test_cloud_mean_zero_coefficients_is_half():
    assert cloud_mean(0.3, CloudParams(p=(0.0,) * 7)) == 0.5


def test_cloud_mean_at_half_matches_hand_legendre():
    assert cloud_mean(0.5, CloudParams()) == pytest.approx(MU_HALF, rel=1e-12)


def test_cloud_mean_scalar_and_vector_paths_agree():
    k = np.linspace(0.0, 1.0, 101)
    p = CloudParams()
    vec = cloud_mean(k, p)
    assert np.allclose(vec, [cloud_mean(float(x), p) for x in k], rtol=1e-10, atol=1e-14)


def test_cloud_mean_matches_numpy_legendre():
    k = np.random.default_rng(0).random(50)
    p = CloudParams()
    z = np.polynomial.legendre.legval(2 * k - 1, (0.0,) + p.p)
    assert np.allclose(cloud_mean(k, p), 1 / (1 + np.exp(-z)), rtol=1e-12)


def test_cloud_boundaries_absorbing():
    p = CloudParams()
    assert step_cloud(0.0, p, 600.0, 5.0) == 0.0
    assert step_cloud(1.0, p, 600.0, -5.0) == 1.0


def test_cloud_drifts_toward_mean():
    p = CloudParams()
    k = step_cloud(0.5, p, 600.0, 0.0)
    expected = 0.5 + 0.187 * 0.5 * (MU_HALF - 0.5) * 600.0 / 3600.0
    assert k == pytest.approx(expected, rel=1e-12)
    assert k > 0.5


def test_cloud_mu_fixed_overrides_mean():
    p = CloudParams(mu_fixed=0.2)
    assert cloud_mean(0.7, p) == 0.2
    assert step_cloud(0.5, p, 600.0, 0.0) < 0.5


def test_cloud_rejects_out_of_range():
    with pytest.raises(ValueError):
        step_cloud(1.2, CloudParams(), 1.0, 0.0)
    with pytest.raises(ValueError):
        cloud_mean(-0.1, CloudParams())


@settings(max_examples=200, deadline=None)
@given(k=st.floats(0.0, 1.0), dW=st.floats(-1e4, 1e4), dt=st.floats(1e-3, 1e5))
def test_cloud_step_stays_in_unit_interval(k, dW, dt):
    assert 0.0 <= step_cloud(k, CloudParams(), dt, dW) <= 1.0


@settings(max_examples=200, deadline=None)
@given(k=st.floats(0.0, 1.0))
def test_cloud_mean_in_open_interval(k):
    assert 0.0 < cloud_mean(k, CloudParams()) < 1.0


@pytest.mark.parametrize("k,o", [(0.0, 0.0), (1.0, 8.0), (0.5, 4.0)])
def test_to_okta(k, o):
    assert to_okta(k) == o


def test_random_stream_is_reproducible_and_counts():
    a, b = RandomStream(42), RandomStream(42)
    assert np.array_equal(a.normal(10), b.normal(10))
    assert a.counter == 10
    assert np.std(RandomStream(1).increments(4.0, 100_000)) == pytest.approx(2.0, rel=0.02)


def test_spawned_streams_differ():
    c1, c2 = RandomStream(7).spawn(2)
    assert not np.array_equal(c1.normal(5), c2.normal(5))


def test_simulate_weather_shapes_and_determinism():
    args = (WindParams(), CloudParams(), 10.0, 0.5, 3 * 86400.0, 600.0, 3)
    a = simulate_weather(*args, substeps=300)
    b = simulate_weather(*args, substeps=300)
    assert len(a) == 433
    for k in ("t_s", "v_m", "v_t", "v", "kappa", "okta"):
        assert np.array_equal(a.columns()[k], b.columns()[k])
    assert np.all(a.v >= 0)
    assert np.array_equal(a.okta, 8 * a.kappa)


def test_simulate_weather_refuses_unstable_turbulence_step():
    with pytest.raises(ValueError, match="substeps"):
        simulate_weather(WindParams(), CloudParams(), 10.0, 0.5, 3600.0, 600.0, 1)


def test_simulate_weather_zero_horizon():
    w = simulate_weather(WindParams(), CloudParams(), 10.0, 0.5, 0.0, 600.0, 1)
    assert len(w) == 1 and w.v_m[0] == 10.0 and w.kappa[0] == 0.5


def test_simulate_weather_rejects_bad_grid():
    with pytest.raises(ValueError):
        simulate_weather(WindParams(), CloudParams(), 10.0, 0.5, 1000.0, 600.0, 1)
    with pytest.raises(OverflowError):
        simulate_weather(WindParams(), CloudParams(), 10.0, 0.5, 1e12, 1e-3, 1)
