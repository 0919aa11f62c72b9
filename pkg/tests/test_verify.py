import json
import math

import numpy as np
import pytest

from lwfield import verify as V
from lwfield.trajectory import Circular, Rest, Uniform


P0 = np.array([0.3, 0.2, 0.1])


def test_fd_gradient_and_laplacian():
    out = V.fd_operators(lambda r, t: r[..., 0], P0, 0.5, 1e-3)
    assert np.allclose(out["grad"], [1, 0, 0], atol=1e-12)
    assert abs(out["laplacian"]) <= 1e-9


def test_fd_curl_div():
    F = V.FieldSampler(lambda r, t: np.stack([-r[..., 1], r[..., 0], 0 * r[..., 0]], axis=-1), 3)
    out = V.fd_operators(F, P0, 0.5, 1e-3)
    assert np.allclose(out["curl"], [0, 0, 2], atol=1e-10)
    assert abs(out["div"]) <= 1e-10


def test_fd_dalembertian():
    wave = V.fd_operators(lambda r, t: (r[..., 0] - t) ** 2, P0, 0.5, 1e-3)
    assert abs(wave["dalembertian"]) <= 1e-6
    static = V.fd_operators(lambda r, t: r[..., 0] ** 2, P0, 0.5, 1e-3)
    assert static["dalembertian"] == pytest.approx(2.0, abs=1e-6)


def test_shell_points_deterministic(circular):
    a = V.shell_points(circular, 10, seed=3)
    b = V.shell_points(circular, 10, seed=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    d = np.linalg.norm(a[0] - circular.position(a[1]), axis=1)
    assert d.min() >= 2.0 and d.max() <= 5.0


def test_rest_maxwell_small():
    pts = V.shell_points(Rest(), 50)
    rep = V.maxwell_residuals(Rest(), pts, 1e-4, with_order=False, normalize=False)
    for eq in ("div_E", "faraday", "div_B", "ampere"):
        assert rep.max(eq) <= 1e-8, eq


def test_rest_wave_gauge_small():
    pts = V.shell_points(Rest(), 50)
    rep = V.wave_gauge_residuals(Rest(), pts, 1e-4, with_order=False, normalize=False)
    assert rep.max("wave_phi") <= 1e-7
    assert rep.max("gauge") == 0.0


@pytest.fixture(scope="module")
def circ_points():
    c = Circular(radius=1.0, omega=0.3)
    return c, V.shell_points(c, 40)


def test_circular_maxwell_order(circ_points):
    c, pts = circ_points
    rep = V.maxwell_residuals(c, pts, 1e-2)
    for eq in ("div_E", "faraday", "div_B", "ampere"):
        assert abs(rep.order(eq) - 2) <= 0.2, eq


def test_circular_wave_gauge_order(circ_points):
    c, pts = circ_points
    rep = V.wave_gauge_residuals(c, pts, 1e-2)
    for eq in ("wave_phi", "wave_A", "gauge", "wave_E", "wave_B"):
        assert abs(rep.order(eq) - 2) <= 0.2, eq


def test_negative_controls(circ_points):
    c, pts = circ_points
    for suite in ("maxwell", "wave_gauge"):
        for name, ratios in V.negative_controls(c, pts, 5e-3, suite).items():
            for eq, ratio in ratios.items():
                assert ratio >= 1e3, (suite, name, eq)


def test_static_coulomb_control_breaks_faraday(circ_points):
    c, pts = circ_points
    bad = V.maxwell_residuals(c, pts, 5e-3, with_order=False, corrupt="static_coulomb")
    assert bad.max("faraday") > 1e-3


def test_plane_wave():
    rng = np.random.default_rng(1)
    pts = (rng.uniform(-2, 2, (50, 3)), np.zeros(50))
    for v in (1.0, -1.0):
        assert V.plane_wave_check(V.gaussian, v, pts, 1e-3).max("dalembertian") <= 1e-6
    rep = V.plane_wave_check(V.gaussian, 0.5, pts, 1e-3)
    x = pts[0][:, 0]
    envelope = 0.1 * np.abs(V.gaussian_dd(x)) * (1 - 0.25)
    res = np.abs(V.fd_operators(lambda r, t: V.gaussian(r[..., 0] - 0.5 * t), pts[0], pts[1],
                                1e-3)["dalembertian"])
    assert np.all(res >= envelope)
    assert rep.max("dalembertian") == pytest.approx(res.max())


def test_covariance():
    c = Circular(radius=1.0, omega=0.3)
    pts = V.shell_points(c, 30)
    assert V.covariance_check(c, (0, 0, 0), pts).max("E") == 0.0
    assert V.covariance_check(c, (0.4, 0, 0), pts).max("E") <= 1e-6
    u = Uniform(v=(0.5, 0, 0))
    rep = V.covariance_check(u, (0.5, 0, 0), V.shell_points(u, 30))
    assert rep.max("E") <= 1e-8 and rep.max("B") <= 1e-8


def test_report_json(circ_points):
    c, pts = circ_points
    rep = V.maxwell_residuals(c, (pts[0][:5], pts[1][:5]), 1e-2)
    js = json.loads(json.dumps(rep.to_json()))
    assert js["schema_version"] == V.SCHEMA_VERSION
    assert set(js["equations"]["faraday"]) >= {"max", "rms", "order"}
    assert all(v["max"] >= v["rms"] >= 0 for v in js["equations"].values())
