import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuller_inclusion.dynamics import chattering_from_origin, simulate_feedback
from fuller_inclusion.errors import ContractError, CoverageError, DomainError
from fuller_inclusion.geometry import distance_to_c1, distance_to_c2, side_array
from fuller_inclusion.partition import (
    BAD,
    BAD_KEY,
    build_ms_cover,
    cell_index_trace,
    first_decrease,
    is_monotone,
    validate_approximation,
)


def annulus_points(pa, n, seed, depth=0):
    lay = pa.layouts[depth]
    rng = np.random.default_rng(seed)
    rho = rng.uniform(1.0 / lay.s, lay.r - 1.0 / lay.s, n)
    th = rng.uniform(0, 2 * math.pi, n)
    t = rng.uniform(0, lay.T, n)
    return np.column_stack([rho * np.cos(th), rho * np.sin(th), t])


@pytest.fixture(scope="module")
def small():
    return build_ms_cover(5, 0.5, 0.1)


class TestBuild:
    def test_deterministic(self, small):
        again = build_ms_cover(5, 0.5, 0.1)
        a, b = small.cells(), again.cells()
        assert a == b
        assert [c.witness for c in a] == [c.witness for c in b]

    def test_depth_precondition(self):
        with pytest.raises(DomainError):
            build_ms_cover(4, 0.5, 1.0)
        with pytest.raises(DomainError):
            build_ms_cover(2, 1.0, 1.0)

    def test_witness_single_side(self, cover8_cells):
        w = np.array([c.witness for c in cover8_cells])
        sides = np.array([c.side.value for c in cover8_cells])
        assert np.all(side_array(w[:, 0], w[:, 1]) == sides)
        assert np.all(np.hypot(w[:, 0], w[:, 1]) > 0)

    def test_witness_inside_own_cell(self, cover8_cells):
        for c in cover8_cells[:: max(1, len(cover8_cells) // 2000)]:
            assert c.contains(c.witness)

    def test_cell_fields(self, cover8_cells):
        for c in cover8_cells[:: max(1, len(cover8_cells) // 500)]:
            assert c.field_u == c.side.control
            assert c.t_lo <= c.witness.t < c.t_hi
            # the cone is open at its apex, so the cell lies strictly above it
            assert c.apex.t <= c.t_lo < c.witness.t
            v = c.velocity(c.witness)
            assert v == (c.witness.y, c.field_u, 1.0)

    def test_cones_meet_at_most_one_curve(self, cover8_cells):
        apexes = {}
        for c in cover8_cells:
            apexes[(c.apex.x, c.apex.y)] = c.slope * c.height
        ax = np.array([k[0] for k in apexes])
        ay = np.array([k[1] for k in apexes])
        reach = np.array(list(apexes.values()))
        d1 = distance_to_c1(ax, ay)[0]
        d2 = distance_to_c2(ax, ay)[0]
        assert not np.any((d1 <= reach) & (d2 <= reach))

    def test_sampled_closures_meet_at_most_one_curve(self, cover8_cells):
        # oracle: the curve margins change sign within 10^3 samples of a closed cone
        rng = np.random.default_rng(2)
        picks = rng.choice(len(cover8_cells), 200, replace=False)
        for i in picks:
            c = cover8_cells[i]
            R = c.slope * c.height * np.sqrt(rng.uniform(0, 1, 1000))
            th = rng.uniform(0, 2 * math.pi, 1000)
            x = c.apex.x + R * np.cos(th)
            y = c.apex.y + R * np.sin(th)
            g = x - 0.25 * y * np.abs(y)
            straddles_c1 = np.any(g[y > 0] > 0) and np.any(g[y > 0] < 0)
            straddles_c2 = np.any(g[y < 0] > 0) and np.any(g[y < 0] < 0)
            assert not (straddles_c1 and straddles_c2)

    def test_union_covers_annulus(self, cover8):
        pts = annulus_points(cover8, 10_000, 3)
        loc = cover8.locate(pts)
        assert np.all(loc.depth >= 0)

    def test_owner_contains_point(self, cover8):
        for z in annulus_points(cover8, 300, 4):
            cell = cover8.cell_at(z, with_witness=False)
            assert cell is not None and cell.contains(z)
            assert cell.side.value == side_array(z[:1], z[1:2])[0]

    def test_outside_and_bad_set(self, cover8):
        assert cover8.cell_at((0.0, 0.0, 0.5)) is None
        assert cover8.key((0.0, 0.0, 0.5)) == BAD_KEY
        assert cover8.bad_set((0.0, 0.0, 0.5))
        assert cover8.key((0.6, 0.0, 0.5)) is None

    def test_cell_order_is_sorted(self, small):
        keys = [c.key for c in small.cells()]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)

    def test_plain_before_splitting_within_strip(self, small):
        cells = small.cells()
        by_strip = {}
        for c in cells:
            by_strip.setdefault(c.strip, []).append(c)
        for group in by_strip.values():
            flags = [c.splits for c in group]
            assert flags == sorted(flags)


class TestRefine:
    def test_retains_cells_exactly(self, small):
        finer = small.refine()
        old = small.cells()
        new = {c.key: c for c in finer.cells()}
        for c in old:
            assert c.key in new
            assert new[c.key] == c and new[c.key].witness == c.witness
        # relative order of the retained cells is unchanged
        retained = [c.key for c in finer.cells() if c.depth == small.depth]
        assert retained == [c.key for c in old]

    def test_new_witnesses_uncovered_before(self, small):
        finer = small.refine()
        fresh = finer.depth_cells(1)
        assert fresh
        w = np.array([c.witness for c in fresh])
        assert np.all(small.locate(w).depth < 0)

    def test_chain_preserves_owners(self, small):
        pa = small
        for k in range(1, 5):
            nxt = pa.refine()
            assert nxt.depths == small.depths + tuple(range(6, 6 + k))
            pts = annulus_points(pa, 2000, 10 + k, depth=len(pa.depths) - 1)
            before = pa.locate(pts)
            after = nxt.locate(pts)
            covered = before.depth >= 0
            assert np.array_equal(before.depth[covered], after.depth[covered])
            kb = pa.keys(pts[covered])
            ka = nxt.keys(pts[covered])
            assert kb == ka
            pa = nxt

    def test_refine_rejects_shallower(self, small):
        with pytest.raises(ContractError):
            small.refine(5)

    def test_deepened_for(self, small):
        pa = small.deepened_for(0.01, 0.49)
        assert 1.0 / pa.depth <= 0.01 and pa.r - 1.0 / pa.depth >= 0.49
        assert pa.depths[0] == 5 and all(b == 2 * a for a, b in zip(pa.depths, pa.depths[1:]))


class TestTrace:
    def test_constant_inside_cell(self, cover8, cover8_cells):
        c = cover8_cells[len(cover8_cells) // 3]
        w = c.witness
        traj = simulate_feedback((w.x, w.y), 1e-4, r=0.5, t0=w.t)
        trace = cell_index_trace(traj, cover8, 1e-5)
        assert len({e.key for e in trace}) == 1

    def test_increase_at_c2_crossing(self, cover8):
        traj = simulate_feedback((0.02, 0.0), 1.0, r=0.5)
        sw = traj.switch_points[0]
        assert sw.y < 0 and 1.0 / 8 < math.hypot(sw.x, sw.y) < 0.5 - 1.0 / 8
        # the D2 arc before the switch and the D1 arc after it
        times = [sw.t - 1e-4, sw.t + 1e-4]
        pts = traj.states(times)
        assert side_array(pts[:, 0], pts[:, 1]).tolist() == [2, 1]
        kb = cover8.key((*pts[0], times[0]))
        ka = cover8.key((*pts[1], times[1]))
        assert ka > kb
        trace = cell_index_trace(traj, cover8, 1e-3, auto_refine=True)
        assert is_monotone(trace)

    def test_chattering_monotone(self, cover8):
        traj = chattering_from_origin(0.25, 12, r=0.5)
        trace = cell_index_trace(traj, cover8, 1e-4, auto_refine=True)
        assert trace and is_monotone(trace), first_decrease(trace)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 2 * math.pi), st.floats(0.15, 0.35))
    def test_feedback_monotone(self, cover8, angle, rad):
        traj = simulate_feedback((rad * math.cos(angle), rad * math.sin(angle)), 0.9, r=0.5)
        trace = cell_index_trace(traj, cover8, 1e-3, auto_refine=True)
        assert is_monotone(trace), first_decrease(trace)

    def test_reversed_not_monotone(self, cover8):
        traj = simulate_feedback((0.3, 0.0), 0.9, r=0.5)
        trace = cell_index_trace(traj, cover8, 1e-3, auto_refine=True)
        rev = [e._replace(key=k) for e, k in zip(trace, [e.key for e in reversed(trace)])]
        assert not is_monotone(rev)

    def test_bad_set_entry(self, cover8):
        traj = chattering_from_origin(0.25, 3, r=0.5)
        trace = cell_index_trace(traj, cover8, 1e-3, auto_refine=True)
        assert all(e.cell_id != BAD for e in trace)

    def test_uncovered_raises(self, cover8):
        traj = simulate_feedback((0.01, 0.0), 0.01, r=0.5)
        with pytest.raises(CoverageError):
            cell_index_trace(traj, cover8, 1e-3)


class TestValidate:
    def test_cover8_passes(self, cover8, cover8_cells):
        report = validate_approximation(cover8, grid_n=100, cells=cover8_cells)
        assert report.passed, report.failed()
        assert report.check("closure_selection").worst == 0.0
        assert report.check("witness_tangency").worst == 1.0
        assert report.n_cells == len(cover8_cells)

    def test_flipped_cell_fails(self, cover8):
        z = (0.3, 0.0, 0.5)
        cell = cover8.cell_at(z)
        pa = cover8.with_flipped(cell.id)
        flipped = pa.cell_at(z)
        assert flipped.field_u == -cell.field_u
        report = validate_approximation(pa, grid_n=20, cells=[flipped])
        assert "closure_selection" in report.failed()
        assert report.check("closure_selection").worst > pa.eps

    def test_cone_invariance_for_cells(self, cover8_cells):
        rng = np.random.default_rng(5)
        for i in rng.choice(len(cover8_cells), 40, replace=False):
            c = cover8_cells[i]
            w = c.witness
            top = c.apex.t + c.height
            dur = min(top - w.t, 1.0 - w.t) * (1 - 1e-9)
            traj = simulate_feedback((w.x, w.y), dur, r=0.5, t0=w.t)
            # the side field is followed until the trajectory leaves its side
            ts = np.linspace(w.t, w.t + dur, 50)
            if traj.switch_points:
                ts = ts[ts <= traj.switch_points[0].t]
            pts = np.column_stack([traj.states(ts), ts])
            assert np.all(c.cone.contains_array(pts))
