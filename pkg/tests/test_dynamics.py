import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuller_inclusion.dynamics import (
    SQRT3,
    Arc,
    CostParams,
    Trajectory,
    ball_exit_time,
    chattering_from_origin,
    cost,
    eps_residual,
    first_passage,
    flow,
    hitting_time,
    simulate_feedback,
    tail_time,
)
from fuller_inclusion.errors import ContractError, DomainError
from fuller_inclusion.geometry import ExtendedPoint, classify


def bisect_crossing(s, u, step=1e-6, t_max=10.0):
    """Oracle: first sign change of the curve margin along the arc, refined by bisection."""
    x0, y0 = s

    def g(t):
        x = x0 + y0 * t + 0.5 * u * t * t
        y = y0 + u * t
        return x - 0.25 * y * abs(y)

    g0 = g(step)
    t = step
    while t < t_max:
        t_next = t + step
        if np.sign(g(t_next)) != np.sign(g0):
            lo, hi = t, t_next
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if np.sign(g(mid)) == np.sign(g0):
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        t = t_next
    return None


def rk4(s, u, dt, n=10_000):
    x, y = s
    h = dt / n
    for _ in range(n):
        k1 = (y, u)
        k2 = (y + 0.5 * h * k1[1], u)
        k3 = (y + 0.5 * h * k2[1], u)
        k4 = (y + h * k3[1], u)
        x += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += h * u
    return x, y


class TestFlow:
    def test_from_rest(self):
        assert flow((0.0, 0.0), 1, 1.0) == (0.5, 1.0)

    def test_identity(self):
        assert flow((0.3, -0.2), -1, 0.0) == (0.3, -0.2)

    def test_worked_example(self):
        assert flow((0.25, 1.0), -1, 2.0) == pytest.approx((0.25, -1.0), abs=1e-15)
        assert rk4((0.25, 1.0), -1, 2.0) == pytest.approx((0.25, -1.0), abs=1e-9)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1), st.sampled_from([-1, 1]), st.floats(0, 2))
    def test_matches_rk4(self, x, y, u, dt):
        ex = flow((x, y), u, dt)
        num = rk4((x, y), u, dt)
        assert math.hypot(ex[0] - num[0], ex[1] - num[1]) <= 1e-9

    def test_negative_dt(self):
        with pytest.raises(ContractError):
            flow((0, 0), 1, -1.0)


class TestHittingTime:
    def test_from_c1(self):
        t = hitting_time((0.25, 1.0), -1)
        assert t == pytest.approx(1 + SQRT3, abs=1e-12)
        assert t == pytest.approx(bisect_crossing((0.25, 1.0), -1), abs=1e-6)
        assert 1.0 - t == pytest.approx(-SQRT3, abs=1e-12)

    def test_from_c2(self):
        t = hitting_time((-0.0025, -0.1), 1)
        assert t == pytest.approx(0.1 + math.sqrt(0.03), abs=1e-12)
        assert t == pytest.approx(bisect_crossing((-0.0025, -0.1), 1), abs=1e-6)
        assert -0.1 + t == pytest.approx(0.1 * SQRT3, abs=1e-12)

    def test_origin_none(self):
        assert hitting_time((0.0, 0.0), -1) is None

    def test_wrong_region(self):
        with pytest.raises(ContractError):
            hitting_time((0.0, 1.0), -1)
        with pytest.raises(ContractError):
            hitting_time((0.0, 1.0), 0)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_root_property(self, x, y):
        label = classify((x, y))
        u = 1 if label.value in ("LeftOpen", "OnC2") else -1
        if label.value == "Origin":
            return
        t = hitting_time((x, y), u)
        assert t is not None and t > 0
        xe, ye = flow((x, y), u, t)
        assert abs(xe - 0.25 * ye * abs(ye)) <= 1e-10
        assert (ye > 0) if u == 1 else (ye < 0)


class TestSimulate:
    def test_ratio_from_c2(self):
        traj = simulate_feedback((-0.0025, -0.1), 100.0, r=1.0)
        ys = [p.y for p in traj.switch_points]
        assert ys[:3] == pytest.approx([0.1 * SQRT3, -0.3, 0.3 * SQRT3], abs=1e-12)
        ratios = [abs(b / a) for a, b in zip(ys, ys[1:])]
        assert max(abs(q - SQRT3) for q in ratios) <= 1e-9

    def test_first_arc_from_c1(self):
        traj = simulate_feedback((0.25, 1.0), 10.0, r=10.0)
        assert traj.arcs[0].duration == pytest.approx(1 + SQRT3, abs=1e-12)

    def test_origin_rejected(self):
        with pytest.raises(DomainError):
            simulate_feedback((0.0, 0.0), 1.0)

    def test_outside_ball(self):
        with pytest.raises(DomainError):
            simulate_feedback((2.0, 0.0), 1.0, r=1.0)

    def test_exit_on_sphere(self):
        traj = simulate_feedback((0.01, 0.0), 10.0, r=0.5)
        end = traj.end
        assert math.hypot(end.x, end.y) == pytest.approx(0.5, abs=1e-9)

    def test_many_switches_from_small_start(self):
        traj = simulate_feedback((0.0, -1e-6), 10.0, r=1.0)
        mags = [abs(p.y) for p in traj.switch_points]
        assert len(mags) >= 20
        assert max(abs(b / a - SQRT3) for a, b in zip(mags, mags[1:])) <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.0, 3.0))
    def test_invariants(self, x, y, t_max):
        # points within the classification tolerance count as the origin
        if math.hypot(x, y) < 1e-9:
            return
        traj = simulate_feedback((x, y), t_max, r=1.0)
        starts = [a.t0 for a in traj.arcs]
        assert all(b > a for a, b in zip(starts, starts[1:]))
        for a, b in zip(traj.arcs, traj.arcs[1:]):
            e = a.end
            assert max(abs(e.x - b.start.x), abs(e.y - b.start.y), abs(e.t - b.start.t)) <= 1e-10
        assert eps_residual(traj, 1e-3) <= 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2), st.floats(0.2, 3.0))
    def test_self_similarity(self, x, y, lam):
        if math.hypot(x, y) < 1e-3:
            return
        a = simulate_feedback((x, y), 0.5, r=1e6)
        b = simulate_feedback((lam * lam * x, lam * y), 0.5 * lam, r=1e6)
        assert len(a.switch_points) == len(b.switch_points)
        for p, q in zip(a.switch_points, b.switch_points):
            assert abs(lam * lam * p.x - q.x) <= 1e-9 * lam * lam
            assert abs(lam * p.y - q.y) <= 1e-9 * lam
            assert abs(lam * p.t - q.t) <= 1e-9 * lam


class TestChattering:
    def test_elapsed(self):
        traj = chattering_from_origin(0.1, 20)
        partial = sum(0.1 * 3 ** (-i / 2) * (1 + SQRT3) for i in range(1, 21))
        assert traj.duration == pytest.approx(partial, abs=1e-15)
        assert traj.duration == pytest.approx(0.1 * (2 + SQRT3), abs=1e-4)
        assert traj.duration + traj.time_offset == pytest.approx(0.1 * (2 + SQRT3), abs=1e-12)

    def test_ratio(self):
        traj = chattering_from_origin(0.1, 25)
        mags = [abs(p.y) for p in traj.switch_points]
        assert max(abs(b / a - SQRT3) for a, b in zip(mags, mags[1:])) <= 1e-9
        assert mags[-1] == pytest.approx(0.1, abs=1e-15)

    def test_truncation_decreasing(self):
        radii = [chattering_from_origin(0.1, n).truncation_radius for n in range(1, 15)]
        assert all(b < a for a, b in zip(radii, radii[1:]))

    def test_exit_elapsed_by_bisection(self):
        # each arc duration confirmed against the sign-change oracle
        traj = chattering_from_origin(0.1, 6)
        for arc in traj.arcs:
            t = bisect_crossing((arc.start.x, arc.start.y), arc.u, step=1e-5, t_max=1.0)
            assert t == pytest.approx(arc.duration, abs=1e-6)

    def test_matches_feedback(self):
        traj = chattering_from_origin(0.1, 8)
        fb = simulate_feedback((traj.start.x, traj.start.y), traj.duration, r=1.0)
        for p, q in zip(traj.switch_points, fb.switch_points):
            assert (p.x, p.y, p.t) == pytest.approx((q.x, q.y, q.t), abs=1e-12)

    def test_residual_zero(self):
        assert eps_residual(chattering_from_origin(0.1, 20), 1e-4) <= 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            chattering_from_origin(1.0, 3, r=1.0)
        with pytest.raises(DomainError):
            chattering_from_origin(0.1, 0)
        with pytest.raises(DomainError):
            chattering_from_origin(-0.1, 3)

    def test_tail_time(self):
        assert tail_time(0.1) == pytest.approx(0.1 * (2 + SQRT3))

    def test_first_passage(self):
        traj = chattering_from_origin(0.1, 20)
        t = first_passage(traj, 0.01)
        p = traj.states([t])[0]
        assert math.hypot(*p) == pytest.approx(0.01, abs=1e-9)


class TestCostAndResidual:
    def test_zero(self):
        traj = Trajectory((Arc(ExtendedPoint(0.0, 0.0, 0.0), 0.0, 1.0),))
        assert cost(traj) == 0.0

    def test_single_arc(self):
        traj = Trajectory((Arc(ExtendedPoint(0.0, 0.0, 0.0), 1.0, 1.0),))
        assert cost(traj, CostParams(q=2.0)) == pytest.approx(0.05, abs=1e-8)

    def test_symmetry(self):
        a = simulate_feedback((0.01, -0.05), 1.0)
        b = simulate_feedback((-0.01, 0.05), 1.0)
        assert cost(a, CostParams(q=1.5)) == pytest.approx(cost(b, CostParams(q=1.5)), rel=1e-12)

    def test_sign_change_oracle(self):
        # x(t) = t - t^2/2 - 0.1 changes sign inside the arc; dense trapezoid as oracle
        traj = Trajectory((Arc(ExtendedPoint(-0.1, 1.0, 0.0), -1.0, 1.5),))
        ts = np.linspace(0.0, 1.5, 2_000_001)
        xs = np.abs(-0.1 + ts - 0.5 * ts * ts) ** 1.5
        oracle = float(np.sum(0.5 * (xs[1:] + xs[:-1]) * np.diff(ts)))
        assert cost(traj, CostParams(q=1.5)) == pytest.approx(oracle, abs=1e-9)

    def test_invalid_params(self):
        with pytest.raises(ContractError):
            CostParams(q=1.0)

    def test_perturbed_slope(self):
        delta = 0.01
        base = Arc(ExtendedPoint(0.5, 0.0, 0.0), -1.0 + delta, 0.5)
        traj = Trajectory((base,))
        assert eps_residual(traj, 1e-3) == pytest.approx(delta, abs=1e-12)

    def test_ball_exit(self):
        t = ball_exit_time(0.0, 0.0, 1.0, 0.5, 10.0)
        # |(t^2/2, t)| = 0.5
        oracle = math.sqrt(2 * (math.sqrt(1 + 0.25) - 1))
        assert t == pytest.approx(oracle, abs=1e-11)
        assert ball_exit_time(0.0, 0.0, 1.0, 0.5, 0.1) is None

    def test_contiguity_enforced(self):
        a = Arc(ExtendedPoint(0.0, 0.0, 0.0), 1.0, 1.0)
        b = Arc(ExtendedPoint(1.0, 1.0, 1.0), 1.0, 1.0)
        with pytest.raises(ContractError):
            Trajectory((a, b))
