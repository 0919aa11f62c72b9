import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwfield.errors import AdmissibilityError, SmoothnessError
from lwfield.trajectory import (Analytic, Circular, Rest, Uniform, admissibility_check,
                                boost_trajectory, eval_kinematics, from_config, gamma_factor,
                                lorentz_boost, velocity_bound_from_energy)


def test_rest_kinematics():
    k = eval_kinematics(Rest(), 5.0)
    for x in k:
        assert np.array_equal(x, np.zeros(3))


def test_uniform_kinematics():
    k = eval_kinematics(Uniform(v=(0.5, 0, 0)), -2.0)
    assert np.allclose(k.r, [-1, 0, 0], atol=0)
    assert np.allclose(k.v, [0.5, 0, 0], atol=0)
    assert np.array_equal(k.a, np.zeros(3))


def test_circular_kinematics():
    k = eval_kinematics(Circular(radius=1.0, omega=0.3), 0.0)
    assert np.allclose(k.r, [1, 0, 0], atol=1e-15)
    assert np.allclose(k.v, [0, 0.3, 0], atol=1e-15)
    assert np.allclose(k.a, [-0.09, 0, 0], atol=1e-15)
    assert np.allclose(k.jerk, [0, -0.027, 0], atol=1e-15)


def test_nonfinite_time_rejected():
    with pytest.raises(ValueError):
        eval_kinematics(Rest(), float("nan"))


def test_missing_derivative_is_insufficient_smoothness():
    traj = Analytic(pos=lambda t: np.stack([t, 0 * t, 0 * t], axis=-1))
    with pytest.raises(SmoothnessError, match="insufficient smoothness"):
        traj.velocity(0.0)


@pytest.mark.parametrize("traj", [Rest(r0=(1, 2, 3)), Uniform(v=(0.3, -0.2, 0.1)),
                                  Circular(radius=1.0, omega=0.3),
                                  Circular(radius=2.0, omega=0.2, center=(1, 0, 0), phase=0.4)])
def test_derivatives_match_finite_differences(traj):
    ts = np.linspace(-3, 3, 13)
    chain = [traj.position, traj.velocity, traj.acceleration, traj.jerk]
    errs = {}
    for h in (1e-3, 5e-4):
        errs[h] = [np.abs((f(ts + h) - f(ts - h)) / (2 * h) - g(ts)).max()
                   for f, g in zip(chain[:-1], chain[1:])]
    for e1, e2 in zip(errs[1e-3], errs[5e-4]):
        if e1 < 1e-11:
            continue        # polynomial paths: difference is rounding only
        assert abs(math.log2(e1 / e2) - 2.0) <= 0.2


def test_admissibility_bounds():
    b = admissibility_check(Uniform(v=(0.5, 0, 0)), 3.0)
    assert b.q == 0.5 and b.A == 0.0
    b = admissibility_check(Circular(radius=1.0, omega=0.3), 0.0)
    assert b.q == pytest.approx(0.3, abs=1e-15)
    assert b.A == pytest.approx(0.09, abs=1e-15)


def test_superluminal_rejected():
    with pytest.raises(AdmissibilityError, match="not relativistically admissible"):
        admissibility_check(Uniform(v=(1.2, 0, 0)), 0.0)


def test_admissibility_needs_two_samples():
    with pytest.raises(ValueError):
        admissibility_check(Rest(), 0.0, n_samples=1)


def test_velocity_bound_from_energy():
    assert velocity_bound_from_energy(1.0, 0.0) == 0.0
    assert velocity_bound_from_energy(1.0, 1.0) == pytest.approx(math.sqrt(3) / 2, abs=1e-15)
    with pytest.raises(ValueError):
        velocity_bound_from_energy(0.0, 1.0)


@given(st.floats(0.0, 0.999), st.floats(0.1, 10.0))
def test_energy_round_trip(q, m0):
    s = math.sqrt(1 - q * q)
    k = m0 * q * q / (s * (1 + s))      # m0 (gamma - 1) without cancellation
    assert velocity_bound_from_energy(m0, k) == pytest.approx(q, abs=1e-14)


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_energy_bound_monotone(k1, k2):
    lo, hi = sorted((k1, k2))
    assert velocity_bound_from_energy(1.0, lo) <= velocity_bound_from_energy(1.0, hi) < 1.0


def test_lorentz_boost_examples():
    r, t = lorentz_boost(np.array([1.0, 2.0, 3.0]), 4.0, (0, 0, 0))
    assert np.array_equal(r, [1, 2, 3]) and t == 4.0
    r, t = lorentz_boost(np.array([0.0, 0.0, 1.0]), 1.0, (0, 0, 0.6))
    assert np.allclose(r, [0, 0, 0.5], atol=1e-15)
    assert t == pytest.approx(0.5, abs=1e-15)
    assert gamma_factor((0, 0, 0.6)) == pytest.approx(1.25, abs=1e-15)


def test_lorentz_boost_preserves_interval():
    rng = np.random.default_rng(3)
    r = rng.uniform(-10, 10, (1000, 3))
    t = rng.uniform(-10, 10, 1000)
    for _ in range(5):
        u = rng.normal(size=3)
        u *= rng.uniform(0, 0.9) / np.linalg.norm(u)
        rp, tp = lorentz_boost(r, t, u)
        s, sp = np.sum(r**2, axis=1) - t**2, np.sum(rp**2, axis=1) - tp**2
        assert np.abs(s - sp).max() <= 1e-12 * max(1.0, np.abs(s).max())


def test_boost_rest_gives_uniform():
    b = boost_trajectory(Rest(), (0.5, 0, 0))
    for tp in (-3.0, 0.0, 2.5):
        assert np.allclose(b.velocity(tp), [-0.5, 0, 0], atol=1e-14)
        assert np.allclose(b.acceleration(tp), 0, atol=1e-14)


def test_boost_uniform_to_rest():
    b = boost_trajectory(Uniform(v=(0.5, 0, 0)), (0.5, 0, 0))
    ts = np.linspace(-5, 5, 11)
    assert np.abs(b.velocity(ts)).max() <= 1e-14
    assert np.abs(b.position(ts) - b.position(0.0)).max() <= 1e-12


def test_boosted_circular_admissible():
    b = boost_trajectory(Circular(radius=1.0, omega=0.3), (0.4, 0, 0))
    ts = np.linspace(-40, 40, 801)
    assert np.linalg.norm(b.velocity(ts), axis=1).max() < 1.0
    assert admissibility_check(b, 0.0).q < 1.0


def test_boost_round_trip():
    c = Circular(radius=1.0, omega=0.3)
    u = np.array([0.4, 0.1, -0.2])
    back = boost_trajectory(boost_trajectory(c, u), -u)
    ts = np.linspace(-10, 10, 41)
    assert np.abs(back.position(ts) - c.position(ts)).max() <= 1e-9
    assert np.abs(back.velocity(ts) - c.velocity(ts)).max() <= 1e-9


def test_boosted_derivatives_consistent():
    b = boost_trajectory(Circular(radius=1.0, omega=0.3), (0.4, 0, 0))
    ts = np.linspace(-2, 2, 5)
    h = 1e-4
    fd = (b.position(ts + h) - b.position(ts - h)) / (2 * h)
    assert np.abs(fd - b.velocity(ts)).max() <= 1e-7
    fd = (b.velocity(ts + h) - b.velocity(ts - h)) / (2 * h)
    assert np.abs(fd - b.acceleration(ts)).max() <= 1e-7
    fd = (b.acceleration(ts + h) - b.acceleration(ts - h)) / (2 * h)
    assert np.abs(fd - b.jerk(ts)).max() <= 1e-7


def test_config_round_trip():
    for traj in (Rest(r0=(1, 0, 0)), Uniform(v=(0.1, 0.2, 0)), Circular(radius=2.0, omega=0.1)):
        assert from_config(traj.to_config()) == traj
    with pytest.raises(ValueError, match="unknown trajectory kind"):
        from_config({"kind": "spiral"})
