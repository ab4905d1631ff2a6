"""Exact event-driven integration of the Fuller feedback field.

Every piece of a trajectory is a closed-form arc of the double integrator
``x' = y, y' = u`` with constant control, so switching instants and exit times
come from polynomial roots instead of time stepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, DomainError, InvalidInputError
from .geometry import (
    DEFAULT_TOL,
    ExtendedPoint,
    RegionLabel,
    StatePoint,
    classify,
    field_distance_array,
)

SQRT3 = math.sqrt(3.0)
CONTIGUITY_TOL = 1e-10
CURVE_TOL = 1e-9


def _flow_xy(x, y, u, dt):
    return x + y * dt + 0.5 * u * dt * dt, y + u * dt


def flow(s: Sequence[float], u: float, dt: float) -> StatePoint:
    """Exact state after holding control ``u`` for time ``dt`` from ``s``."""
    if dt < 0:
        raise ContractError("dt must be non-negative")
    x, y = _flow_xy(float(s[0]), float(s[1]), float(u), float(dt))
    return StatePoint(x, y)


@dataclass(frozen=True)
class Arc:
    """Constant-control piece starting at ``start`` and lasting ``duration``."""

    start: ExtendedPoint
    u: float
    duration: float

    @property
    def t0(self) -> float:
        return self.start.t

    @property
    def t1(self) -> float:
        return self.start.t + self.duration

    @property
    def end(self) -> ExtendedPoint:
        x, y = _flow_xy(self.start.x, self.start.y, self.u, self.duration)
        return ExtendedPoint(x, y, self.t1)

    def state_at(self, tau):
        """State at local time ``tau`` (seconds since the arc start)."""
        return _flow_xy(self.start.x, self.start.y, self.u, np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Contiguous sequence of arcs.

    ``switch_points`` are the arc junctions (and, for chattering solutions, the
    exit point) where the state sits on the switching curve.
    ``truncation_radius`` and ``time_offset`` describe how far a truncated
    chattering solution starts from the origin, in space and in time.
    """

    arcs: tuple[Arc, ...]
    switch_points: tuple[ExtendedPoint, ...] = ()
    eps: float = 0.0
    truncation_radius: float | None = None
    time_offset: float = 0.0
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.arcs:
            raise ContractError("a trajectory needs at least one arc")
        for arc in self.arcs:
            if not (math.isfinite(arc.duration) and arc.duration >= 0):
                raise ContractError("arc durations must be finite and non-negative")
        for prev, nxt in zip(self.arcs, self.arcs[1:]):
            end = prev.end
            gap = max(abs(end.x - nxt.start.x), abs(end.y - nxt.start.y), abs(end.t - nxt.start.t))
            if gap > CONTIGUITY_TOL:
                raise ContractError(f"arcs are not contiguous (gap {gap:.3g})")
            if not nxt.start.t > prev.start.t:
                raise ContractError("arc start times must strictly increase")
        for p in self.switch_points:
            if abs(p.x - 0.25 * p.y * abs(p.y)) > CURVE_TOL or p.y == 0:
                raise ContractError("switch point off the switching curve")
        object.__setattr__(self, "_starts", np.array([a.t0 for a in self.arcs]))

    @property
    def t0(self) -> float:
        return self.arcs[0].t0

    @property
    def t1(self) -> float:
        return self.arcs[-1].t1

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def start(self) -> ExtendedPoint:
        return self.arcs[0].start

    @property
    def end(self) -> ExtendedPoint:
        return self.arcs[-1].end

    def breakpoints(self) -> np.ndarray:
        return np.append(self._starts, self.t1)

    def arc_index(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.clip(np.searchsorted(self._starts, times, side="right") - 1, 0, len(self.arcs) - 1)

    def _arc_arrays(self, idx):
        sx = np.array([a.start.x for a in self.arcs])[idx]
        sy = np.array([a.start.y for a in self.arcs])[idx]
        st = self._starts[idx]
        u = np.array([a.u for a in self.arcs])[idx]
        return sx, sy, st, u

    def states(self, times) -> np.ndarray:
        """Planar states at the given absolute times, shape ``(N, 2)``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        sx, sy, st, u = self._arc_arrays(self.arc_index(times))
        x, y = _flow_xy(sx, sy, u, times - st)
        return np.column_stack([x, y])

    def velocities(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        sx, sy, st, u = self._arc_arrays(self.arc_index(times))
        return np.column_stack([sy + u * (times - st), u])

    def controls(self, times) -> np.ndarray:
        return np.array([a.u for a in self.arcs])[self.arc_index(times)]

    def sample_times(self, step: float, include_end: bool = True) -> np.ndarray:
        """Uniform grid from ``t0`` with spacing ``step``, plus the end time."""
        if step <= 0:
            raise ContractError("sample step must be positive")
        n = int(math.floor(self.duration / step + 1e-9))
        times = self.t0 + step * np.arange(n + 1)
        times = times[times < self.t1]
        if include_end:
            times = np.append(times, self.t1)
        return times

    def reversed(self) -> "ReversedPath":
        return ReversedPath(self)


@dataclass(frozen=True)
class ReversedPath:
    """The spatial path of a trajectory traversed backwards over the same times.

    Not a solution of the double integrator; it exists as a negative control for
    the monotone-trace and residual checks.
    """

    base: Trajectory

    @property
    def t0(self) -> float:
        return self.base.t0

    @property
    def t1(self) -> float:
        return self.base.t1

    @property
    def duration(self) -> float:
        return self.base.duration

    def breakpoints(self) -> np.ndarray:
        return (self.t0 + self.t1 - self.base.breakpoints())[::-1]

    def states(self, times) -> np.ndarray:
        return self.base.states(self.t0 + self.t1 - np.asarray(times, dtype=float))

    def velocities(self, times) -> np.ndarray:
        return -self.base.velocities(self.t0 + self.t1 - np.asarray(times, dtype=float))

    def sample_times(self, step: float, include_end: bool = True) -> np.ndarray:
        return self.base.sample_times(step, include_end)


def hitting_time(s: Sequence[float], u: float, tol: float = DEFAULT_TOL) -> float | None:
    """Time until the ``u``-arc from ``s`` lands on the switching curve.

    ``u = -1`` runs from the right region down to the lower branch, ``u = +1``
    from the left region up to the upper branch.  A start on the branch that
    feeds the region (upper branch for ``u = -1``) is allowed.  Returns ``None``
    when no strictly positive crossing exists.
    """
    x, y = float(s[0]), float(s[1])
    label = classify((x, y), tol)
    if u == -1:
        allowed = (RegionLabel.RIGHT_OPEN, RegionLabel.ON_C1, RegionLabel.ORIGIN)
        disc = 2.0 * y * y + 4.0 * x
        sign = 1.0
    elif u == 1:
        allowed = (RegionLabel.LEFT_OPEN, RegionLabel.ON_C2, RegionLabel.ORIGIN)
        disc = 2.0 * y * y - 4.0 * x
        sign = -1.0
    else:
        raise ContractError("control must be +1 or -1")
    if label not in allowed:
        raise ContractError(f"state in {label.value} is not driven by u={u:+d}")
    if disc < 0:
        return None
    t = sign * y + math.sqrt(disc)
    if not t > 0:
        return None
    return t


def landing_point(s: Sequence[float], u: float, t: float) -> StatePoint:
    """Curve point reached by the ``u``-arc after its hitting time, snapped onto the curve."""
    y = float(s[1]) + u * t
    return StatePoint(0.25 * y * abs(y), y)


def ball_exit_time(x: float, y: float, u: float, r: float, horizon: float, tol: float = 1e-12) -> float | None:
    """First time in ``(0, horizon]`` at which the ``u``-arc from ``(x, y)`` reaches radius ``r``.

    Candidate roots of the quartic ``|p(t)|^2 = r^2`` seed a sign scan; the
    crossing is then refined by bisection to ``tol``.
    """
    if horizon <= 0:
        return None

    def g(t):
        px, py = _flow_xy(x, y, u, t)
        return px * px + py * py - r * r

    poly = np.polynomial.Polynomial([x, y, 0.5 * u]) ** 2 + np.polynomial.Polynomial([y, u]) ** 2
    poly = poly - r * r
    roots = poly.roots()
    real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
    real = real[(real > 0) & (real <= horizon)]
    grid = np.unique(np.concatenate([np.linspace(0.0, horizon, 129), real, real * (1 + 1e-9), real * (1 - 1e-9)]))
    grid = grid[(grid >= 0) & (grid <= horizon)]
    vals = g(grid)
    outside = np.nonzero(vals >= 0)[0]
    outside = outside[grid[outside] > 0]
    if outside.size == 0:
        return None
    j = outside[0]
    lo, hi = grid[j - 1], grid[j]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _check_state(s: Sequence[float]) -> tuple[float, float]:
    x, y = float(s[0]), float(s[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError("state must be finite")
    return x, y


def simulate_feedback(
    s0: Sequence[float],
    t_max: float,
    r: float = 1.0,
    t0: float = 0.0,
    tol: float = DEFAULT_TOL,
) -> Trajectory:
    """Event-driven feedback trajectory from a non-origin state inside the ball of radius ``r``.

    Stops at ``t0 + t_max`` or at the exact time the state reaches the sphere
    of radius ``r``, whichever comes first.
    """
    x, y = _check_state(s0)
    if not (math.isfinite(t_max) and t_max >= 0):
        raise InvalidInputError("t_max must be finite and non-negative")
    label = classify((x, y), tol)
    if label is RegionLabel.ORIGIN:
        raise DomainError("the origin has no unique feedback arc; use chattering_from_origin")
    if math.hypot(x, y) >= r:
        raise DomainError(f"start state lies outside the ball of radius {r}")
    u = 1.0 if label in (RegionLabel.LEFT_OPEN, RegionLabel.ON_C2) else -1.0
    t = t0
    t_stop = t0 + t_max
    arcs: list[Arc] = []
    switches: list[ExtendedPoint] = []
    while True:
        remaining = t_stop - t
        th = hitting_time((x, y), int(u), tol)
        cap = remaining if th is None else min(th, remaining)
        te = ball_exit_time(x, y, u, r, cap)
        if te is not None:
            arcs.append(Arc(ExtendedPoint(x, y, t), u, te))
            break
        if th is None or th >= remaining:
            arcs.append(Arc(ExtendedPoint(x, y, t), u, max(remaining, 0.0)))
            break
        arcs.append(Arc(ExtendedPoint(x, y, t), u, th))
        x, y = landing_point((x, y), u, th)
        t = t + th
        switches.append(ExtendedPoint(x, y, t))
        u = -u
    return Trajectory(tuple(arcs), tuple(switches))


def chattering_from_origin(
    m_exit: float,
    n_arcs: int,
    r: float = 1.0,
    sign: int = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Truncated self-similar solution leaving the origin.

    The last arc lands on the upper branch at ordinate ``m_exit`` (lower branch
    at ``-m_exit`` when ``sign = -1``).  Arc ``i`` (counting back from the exit)
    starts on the curve at ordinate magnitude ``m_exit * 3**(-i/2)`` and lasts
    that magnitude times ``1 + sqrt(3)``.  ``time_offset`` is the time the
    omitted arcs would have taken, so the true origin solution is shifted by it.
    """
    if not (math.isfinite(m_exit) and m_exit > 0):
        raise DomainError("m_exit must be positive")
    if int(n_arcs) != n_arcs or n_arcs < 1:
        raise DomainError("n_arcs must be a positive integer")
    if m_exit * SQRT3 > r:
        raise DomainError(f"exit magnitude {m_exit} leaves the ball of radius {r}")
    n = int(n_arcs)
    arcs: list[Arc] = []
    switches: list[ExtendedPoint] = []
    t = t0
    for i in range(n, 0, -1):
        m = m_exit * 3.0 ** (-i / 2.0)
        # odd i starts on the branch opposite the exit
        s = -sign if i % 2 == 1 else sign
        y = s * m
        x = 0.25 * y * abs(y)
        u = float(-s)
        duration = m * (1.0 + SQRT3)
        arcs.append(Arc(ExtendedPoint(x, y, t), u, duration))
        t += duration
        m_next = m * SQRT3
        y_next = -s * m_next
        switches.append(ExtendedPoint(0.25 * y_next * abs(y_next), y_next, t))
    start = arcs[0].start
    m_first = m_exit * 3.0 ** (-n / 2.0)
    return Trajectory(
        tuple(arcs),
        tuple(switches),
        truncation_radius=math.hypot(start.x, start.y),
        time_offset=tail_time(m_first),
    )


def tail_time(m_start: float) -> float:
    """Time the origin solution needs to reach a switch of ordinate magnitude ``m_start``."""
    return m_start * (2.0 + SQRT3)


def first_passage(traj: Trajectory, radius: float) -> float | None:
    """Earliest time at which ``|p(t)|`` reaches ``radius`` (from below)."""
    for arc in traj.arcs:
        if math.hypot(arc.start.x, arc.start.y) >= radius:
            return arc.t0
        te = ball_exit_time(arc.start.x, arc.start.y, arc.u, radius, arc.duration)
        if te is not None:
            return arc.t0 + te
    return None


@dataclass(frozen=True)
class CostParams:
    q: float = 2.0
    quadrature_step: float = 1e-3

    def __post_init__(self):
        if not self.q > 1:
            raise ContractError("cost exponent q must exceed 1")
        if not self.quadrature_step > 0:
            raise ContractError("quadrature step must be positive")


def _simpson(fn, a: float, b: float, step: float) -> float:
    if b <= a:
        return 0.0
    n = max(2, int(math.ceil((b - a) / step)))
    n += n % 2
    ts = np.linspace(a, b, n + 1)
    vals = fn(ts)
    h = (b - a) / n
    return float(h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-1:2].sum()))


def cost(traj: Trajectory, cp: CostParams = CostParams()) -> float:
    """Composite Simpson value of the integral of ``|x(t)|^q``.

    Each arc is split at the zeros of ``x`` so every panel integrates a
    smooth function.
    """
    total = 0.0
    for arc in traj.arcs:
        x0, y0, u = arc.start.x, arc.start.y, arc.u
        cuts = [0.0, arc.duration]
        for root in np.roots([0.5 * u, y0, x0]) if u != 0 else []:
            if abs(root.imag) < 1e-14 and 0 < root.real < arc.duration:
                cuts.append(float(root.real))
        cuts.sort()

        def integrand(tau, x0=x0, y0=y0, u=u):
            return np.abs(x0 + y0 * tau + 0.5 * u * tau * tau) ** cp.q

        for a, b in zip(cuts, cuts[1:]):
            total += _simpson(integrand, a, b, cp.quadrature_step)
    return total


def interior_sample_times(path, sample_step: float) -> np.ndarray:
    """Uniform sample times with arc junctions removed."""
    times = path.sample_times(sample_step, include_end=False)
    bps = path.breakpoints()
    keep = np.ones(times.size, dtype=bool)
    for b in bps:
        keep &= np.abs(times - b) > 1e-12 * max(1.0, abs(b))
    return times[keep]


def eps_residual(path, sample_step: float = 1e-3, tol: float = DEFAULT_TOL) -> float:
    """Largest distance between the path's velocity and the Fuller field at interior sample times."""
    if sample_step <= 0:
        raise ContractError("sample step must be positive")
    times = interior_sample_times(path, sample_step)
    if times.size == 0:
        return 0.0
    pts = path.states(times)
    vel = path.velocities(times)
    d = field_distance_array(pts[:, 0], pts[:, 1], vel[:, 0], vel[:, 1], tol)
    return float(np.max(d))
