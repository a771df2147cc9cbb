import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from gpfollow.wind import (
    GustConfig,
    TurbulenceConfig,
    WindModel,
    drag_force,
    gust_sample,
    low_altitude_parameters,
    random_scenario,
    turbulence_sample,
    von_karman_psd,
    wind_velocity,
)


@pytest.mark.parametrize("axis", ["u", "v", "w"])
def test_von_karman_psd_integrates_to_variance(axis):
    # substitute w = tan(s) to map the heavy tail onto a finite interval
    f = lambda s: von_karman_psd(np.tan(s), 1.3, 30.0, 6.0, axis) / np.cos(s) ** 2
    total, _ = quad(f, 0, np.pi / 2, limit=400, epsabs=1e-12)
    # 1.339 is the rounded spectral constant, worth about 1e-5 in variance
    assert total == pytest.approx(1.3**2, rel=1e-4)


def test_low_altitude_parameters():
    sigma, length = low_altitude_parameters(5.0, 8.0)
    h_ft = 5.0 / 0.3048
    assert sigma[2] == pytest.approx(0.8)
    assert sigma[0] == pytest.approx(0.8 / (0.177 + 0.000823 * h_ft) ** 0.4)
    assert length[2] == pytest.approx(2.5)
    assert length[0] == length[1]
    with pytest.raises(ValueError):
        low_altitude_parameters(0.0, 5.0)


def test_zero_intensity_is_silent():
    m = WindModel(turbulence=TurbulenceConfig(sigma=(0.0, 0.0, 0.0)))
    np.testing.assert_array_equal(turbulence_sample(m, np.linspace(0, 50, 101)), np.zeros((101, 3)))


def test_turbulence_is_deterministic_and_continuous():
    m = random_scenario(4)
    t = np.linspace(0, 20, 2001)
    a, b = turbulence_sample(m, t), random_scenario(4).turbulence_sample(t)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(turbulence_sample(m, 3.21), a[321])
    # continuity: increments shrink linearly with the step
    fine = turbulence_sample(m, t[:201] * 0.01)
    assert np.max(np.abs(np.diff(fine, axis=0))) < 0.02 * np.max(np.abs(np.diff(a, axis=0)))
    assert not np.array_equal(a, random_scenario(5).turbulence_sample(t))


def test_turbulence_variance_matches_intensity():
    t = np.arange(0.0, 600.0, 0.01)
    ratios = []
    for seed in range(8):
        m = random_scenario(seed)
        local = m.turbulence_sample(t) @ m._frame  # back to the wind-aligned axes
        ratios.append(local.var(axis=0) / np.square(m.turbulence.sigma))
    np.testing.assert_allclose(np.mean(ratios, axis=0), 1.0, atol=0.15)


def test_gust_profile():
    m = WindModel(gust=GustConfig(amplitude=20.0, start=7.0, duration=1.0, direction=(0.0, 2.0, 0.0)))
    np.testing.assert_array_equal(gust_sample(m, 6.9), np.zeros(3))
    np.testing.assert_array_equal(gust_sample(m, 8.2), np.zeros(3))
    np.testing.assert_allclose(gust_sample(m, 7.5), [0.0, 20.0, 0.0], atol=1e-12)
    assert np.linalg.norm(gust_sample(m, 7.25)) == pytest.approx(10.0)
    t = np.linspace(6.5, 8.5, 200_001)
    area = trapezoid(gust_sample(m, t)[:, 1], t)
    assert area == pytest.approx(20.0 * 1.0 / 2.0, abs=1e-6)
    with pytest.raises(ValueError):
        GustConfig(duration=0.0)


def test_components_sum():
    assert np.array_equal(wind_velocity(WindModel.calm(), 3.0), np.zeros(3))
    m = WindModel(constant=(5.0, 0.0, 0.0))
    np.testing.assert_array_equal(wind_velocity(m, np.array([0.0, 99.0])), [[5, 0, 0], [5, 0, 0]])
    g = GustConfig(20.0, 7.0, 1.0, (1.0, 0.0, 0.0))
    np.testing.assert_allclose(wind_velocity(WindModel((5.0, 1.0, 0.0), gust=g), 7.5), [25.0, 1.0, 0.0])


def test_drag_force():
    np.testing.assert_array_equal(drag_force([1, 2, 3], [1, 2, 3], [0.02] * 3), np.zeros(3))
    np.testing.assert_allclose(drag_force([5, 0, 0], np.zeros(3), np.diag([0.02] * 3)), [0.1, 0, 0])
    vw, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.2])
    np.testing.assert_allclose(drag_force(2 * vw, 2 * v, [0.02] * 3), 2 * drag_force(vw, v, [0.02] * 3))


def test_random_scenario_ranges():
    for seed in range(20):
        m = random_scenario(seed, gust_amplitude=20.0)
        speed = np.linalg.norm(m.constant)
        assert 3.0 <= speed <= 10.0
        assert m.constant[2] == 0.0
        # gust defaults to the constant-wind heading
        np.testing.assert_allclose(np.asarray(m.gust.direction) * speed, m.constant, atol=1e-12)


def test_from_dict_round_trip():
    m = WindModel.from_dict({
        "constant": [1.0, 2.0, 0.0],
        "turbulence": {"sigma": [0.5, 0.5, 0.2], "length": [30, 30, 3], "seed": 3},
        "gust": {"amplitude": 4.0, "start": 1.0, "duration": 2.0, "direction": [0, 1, 0]},
    })
    assert m.turbulence.seed == 3
    assert np.linalg.norm(m.velocity(2.0) - m.turbulence_sample(2.0) - np.array([1.0, 6.0, 0.0])) < 1e-12
