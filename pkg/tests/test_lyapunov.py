import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuller_inclusion.dynamics import simulate_feedback
from fuller_inclusion.geometry import side_array
from fuller_inclusion.errors import CalibrationError, DomainError, InvalidInputError
from fuller_inclusion.lyapunov import (
    ParabolaGeometry,
    QlfParams,
    QuasiLyapunov,
    calibrate,
    certificate_checks,
    f,
    f_partials,
    grad_psi,
    grad_wbar,
    h_closed,
    h_inner,
    h_min,
    holder_constant,
    phi,
    phi_array,
    verify_qlf,
    wbar,
    wbar_array,
)


def disk_points(r, n, seed):
    rng = np.random.default_rng(seed)
    rad = r * np.sqrt(rng.uniform(0, 1, n))
    th = rng.uniform(0, 2 * math.pi, n)
    return rad * np.cos(th), rad * np.sin(th)


def domain_points(params, n, seed):
    """Points of the ball where the level function is defined."""
    x, y = disk_points(params.r, 3 * n, seed)
    keep = (x < 0.5 * y * y) & (np.hypot(x, y) > 0)
    return x[keep][:n], y[keep][:n]


class TestParabolaFamily:
    def test_point_a(self):
        assert abs(f(-0.0025, -0.1, -0.1)) <= 1e-12

    def test_point_b(self):
        assert abs(f(0.0025, 0.1, -0.1)) <= 1e-12

    def test_origin_value(self):
        assert f(0.0, 0.0, -0.1) == pytest.approx(-0.200125, abs=1e-12)

    def test_geometry_endpoints(self):
        g = ParabolaGeometry(-0.1)
        lo, hi = g.interval
        xa, ya = g.point(lo)
        xb, yb = g.point(hi)
        assert {(round(float(xa), 12), round(float(ya), 12)), (round(float(xb), 12), round(float(yb), 12))} == {
            (-0.0025, -0.1),
            (0.0025, 0.1),
        }
        assert g.A == pytest.approx((-0.0025, -0.1)) and g.B == pytest.approx((0.0025, 0.1))

    def test_positive_a_rejected(self):
        with pytest.raises(DomainError):
            f(0.0, 0.0, 0.1)

    @settings(max_examples=50)
    @given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-0.1, -0.01))
    def test_partials_match_finite_differences(self, x, y, a):
        fx, fy, fa = f_partials(x, y, a)
        h = 1e-6
        assert (f(x + h, y, a) - f(x - h, y, a)) / (2 * h) == pytest.approx(float(fx), rel=1e-5, abs=1e-5)
        assert (f(x, y + h, a) - f(x, y - h, a)) / (2 * h) == pytest.approx(float(fy), rel=1e-5, abs=1e-5)
        ha = 1e-7
        assert (f(x, y, a + ha) - f(x, y, a - ha)) / (2 * ha) == pytest.approx(float(fa), rel=1e-4, abs=1e-4)


class TestCertificateCubic:
    def test_center(self):
        assert float(h_inner(-0.1, 0.0)) == pytest.approx(0.995, abs=1e-12)
        assert float(h_closed(-0.1, 0.0)) == pytest.approx(0.995, abs=1e-12)

    def test_two_forms_agree(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-0.1, -1e-6, 10_000)
        half = a * a / 4 + 4
        tau = rng.uniform(-1, 1, a.size) * half
        diff = np.abs(h_inner(a, tau) - h_closed(a, tau))
        assert float(np.max(diff)) <= 1e-12

    def test_above_half_on_interval(self):
        g = ParabolaGeometry(-0.1)
        tau = np.linspace(*g.interval, 10_000)
        assert float(np.min(h_inner(-0.1, tau))) > 0.5

    def test_h_min(self):
        assert h_min(-0.1) > 0.5
        assert h_min(-0.01) > 0.99
        assert h_min(-10.0) < 0.5

    def test_h_min_matches_dense_grid(self):
        g = ParabolaGeometry(-0.1)
        tau = np.linspace(*g.interval, 200_001)
        assert h_min(-0.1) == pytest.approx(float(np.min(h_closed(-0.1, tau))), abs=1e-10)

    def test_h_min_tends_to_one(self):
        vals = [h_min(-(2.0**-k)) for k in range(4, 21)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-9)

    def test_tau_outside_interval(self):
        with pytest.raises(DomainError):
            h_inner(-0.1, 10.0)


class TestLevelFunction:
    def test_points_a_and_b(self, wide):
        assert phi(-0.0025, -0.1, wide).a == pytest.approx(-0.1, abs=1e-10)
        assert phi(0.0025, 0.1, wide).a == pytest.approx(-0.1, abs=1e-10)

    def test_origin(self, params):
        res = phi(0.0, 0.0, params)
        assert res.a == 0.0 and res.iterations == 0

    def test_level_set_consistency(self, wide):
        g = ParabolaGeometry(-0.05)
        x, y = g.point(np.linspace(*g.interval, 50))
        got = phi_array(x, y, wide)
        assert float(np.max(np.abs(got + 0.05))) <= 1e-9

    def test_residual_small(self, params):
        x, y = domain_points(params, 500, 3)
        for xi, yi in zip(x, y):
            res = phi(xi, yi, params)
            assert -params.a_bar < res.a < 0
            assert res.residual <= 1e-12 * max(1.0, 1.0 / abs(res.a))

    def test_outside_domain(self, params):
        with pytest.raises(DomainError):
            phi(params.r, 0.0, params)
        with pytest.raises(DomainError):
            phi(0.001, 0.0, params)
        with pytest.raises(InvalidInputError):
            phi(math.nan, 0.0, params)

    def test_bracket_soundness(self, params):
        x, y = domain_points(params, 5000, 4)
        assert np.all(f(x, y, -params.a_bar) < 0)
        assert np.all(f(x, y, -1e-8) > 0)

    def test_monotone_in_a(self, params):
        x, y = domain_points(params, 300, 5)
        a = -params.a_bar * np.linspace(1.0, 1e-4, 400)
        vals = f(x[:, None], y[:, None], a[None, :])
        assert np.all(np.diff(vals, axis=1) > 0)

    def test_holder_bound(self, params):
        x, y = domain_points(params, 5000, 6)
        near = np.hypot(x, y) <= params.r / 2
        a = phi_array(x[near], y[near], params)
        bound = math.sqrt(2.0) * (params.a_bar**2 + 16.0) ** 0.25 * np.sqrt(np.hypot(x[near], y[near]))
        assert np.all(np.abs(a) <= bound)
        # the tighter constant used by the verifier also holds
        assert np.all(np.abs(a) <= holder_constant(params.a_bar) * np.sqrt(np.hypot(x[near], y[near])))

    def test_gradient_vs_finite_differences(self, wide):
        gx, gy = grad_psi(-0.0025, -0.1, wide)
        h = 1e-6
        dx = -(phi(-0.0025 + h, -0.1, wide).a - phi(-0.0025 - h, -0.1, wide).a) / (2 * h)
        dy = -(phi(-0.0025, -0.1 + h, wide).a - phi(-0.0025, -0.1 - h, wide).a) / (2 * h)
        assert dx == pytest.approx(gx, abs=1e-5)
        assert dy == pytest.approx(gy, abs=1e-5)

    def test_fa_bound(self, params):
        # the bound is needed where wbar evaluates the level function directly
        x, y = domain_points(params, 3000, 7)
        left = side_array(x, y) == 1
        x, y = x[left], y[left]
        a = phi_array(x, y, params)
        _, _, fa = f_partials(x, y, a)
        assert float(np.max(fa)) <= 9.0


class TestWbar:
    def test_example(self, wide):
        assert wbar((-0.0025, -0.1, 0.0), wide) == pytest.approx(3.6, abs=1e-9)

    def test_origin(self, params):
        for t in (0.0, 1.0, -3.0):
            assert wbar((0.0, 0.0, t), params) == 0.0

    def test_symmetry_and_positivity(self, params):
        x, y = disk_points(params.r, 5000, 8)
        v = wbar_array(x, y, params)
        w = wbar_array(-x, -y, params)
        assert np.all(v > 0)
        np.testing.assert_allclose(v, w, rtol=1e-12, atol=1e-15)

    def test_time_independent(self, params):
        z = (0.001, -0.002)
        assert wbar((*z, 0.0), params) == wbar((*z, 5.0), params)

    def test_outside_ball(self, params):
        with pytest.raises(DomainError):
            wbar((params.r, 0.0, 0.0), params)

    def test_gradient_at_origin_rejected(self, params):
        with pytest.raises(DomainError):
            grad_wbar((0.0, 0.0, 0.0), params)

    def test_curve_points_continuous(self, params):
        # a point exactly on C1 and a nearby point on either side agree
        y = 0.002
        x = 0.25 * y * y
        on = wbar((x, y, 0.0), params)
        for dx in (1e-12, -1e-12):
            assert wbar((x + dx, y, 0.0), params) == pytest.approx(on, rel=1e-6)

    def test_growth_along_feedback(self, params, qlf):
        start = (0.0005, -0.001)
        traj = simulate_feedback(start, 1.0, r=params.r)
        ts = traj.sample_times(1e-4)
        pts = traj.states(ts)
        inside = np.hypot(pts[:, 0], pts[:, 1]) < params.r
        vals = qlf.values(pts[inside, 0], pts[inside, 1])
        growth = vals - vals[0] - (ts[inside] - ts[0])
        assert float(np.min(growth)) >= -1e-6

    def test_negated(self, qlf):
        z = (0.001, 0.001, 0.0)
        assert qlf.negated().value(z) == -qlf.value(z)
        assert qlf.negated().negated() == qlf


class TestCalibration:
    def test_calibrated_radius(self, calibration):
        params, report = calibration
        assert params == QlfParams(0.1, 0.005)
        assert report.passed
        assert len(report.checks) == 10

    def test_larger_radius_fails(self):
        checks = certificate_checks(0.1, 0.006, grid_n=200)
        assert not all(c.passed for c in checks)

    def test_large_a_bar_fails_h_min(self):
        with pytest.raises(CalibrationError) as info:
            calibrate(10.0)
        report = info.value.report
        assert report.failed()[0] == "h_min"
        assert report.check("h_min").worst < 0.5

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            calibrate(-1.0)
        with pytest.raises(InvalidInputError):
            QlfParams(a_bar=0.0)

    def test_grid_doubling_stable(self, params):
        base = {c.name: c.passed for c in certificate_checks(params.a_bar, params.r, grid_n=200)}
        doubled = {c.name: c.passed for c in certificate_checks(params.a_bar, params.r, grid_n=400)}
        assert base == doubled


class TestVerify:
    def test_calibrated_passes(self, params):
        report = verify_qlf(params, grid_n=100, n_samples=10_000)
        assert report.passed, report.failed()
        assert report.check("rate_d1").worst >= 1.0
        assert report.check("rate_d2").worst >= 1.0

    def test_bad_grid(self, params):
        with pytest.raises(InvalidInputError):
            verify_qlf(params, grid_n=1)

    def test_rate_uses_cell_control(self, params, qlf):
        z = (-0.0005, -0.001, 0.0)
        assert qlf.rate(z, (z[1], 1.0, 1.0)) >= 1.0
        assert QuasiLyapunov(params, -1.0).rate(z, (z[1], 1.0, 1.0)) < 0
