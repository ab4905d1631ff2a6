"""Patchy epsilon-solution engine and the limit (convergence) harness.

The engine walks a trajectory cell by cell through a :class:`PartialApproximation`.
Inside a cell the velocity is the cell's constant-control field, admitted only
if the quasi-Lyapunov function grows at unit rate along it.  Cell exits are
closed-form for Fuller arcs (strip ends, curve hits, ball exit); a bisection on
the cell predicate is available as a generic fallback.

Starts on the origin axis have no good cell, so solutions are built from
nearby starts ``(0, d)`` for a shrinking offset schedule and tested for
uniform Cauchy behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import Arc, ReversedPath, Trajectory, ball_exit_time, eps_residual, hitting_time
from .errors import (
    CertificateViolation,
    ContractError,
    CoverageError,
    DomainError,
    InvalidInputError,
    NonConvergenceError,
)
from .geometry import (
    DEFAULT_TOL,
    ExtendedPoint,
    RegionLabel,
    Side,
    VelocitySet,
    classify,
    dist_to_ball_complement,
    switching_margin,
)
from .lyapunov import QlfParams, QuasiLyapunov, wbar_array
from .partition import GreenCell, PartialApproximation, build_ms_cover, cell_index_trace, first_decrease

EXIT_REL_TOL = 1e-12
BISECT_TOL = 1e-12
GAP_SAMPLES = 2001


@dataclass(frozen=True)
class SolverConfig:
    """Engine settings.

    ``step_cap`` is the largest probing step of the generic exit search;
    ``start_offsets`` are the distances ``d`` of the starts ``(0, d)`` used for
    origin-axis initial points, coarsest first.
    """

    eps: float = 0.5
    t_end: float = math.inf
    step_cap: float = 1e-4
    start_offsets: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    exact_events: bool = True
    max_steps: int = 200_000

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise InvalidInputError("eps must lie in (0, 1]")
        if math.isnan(self.t_end) or self.t_end < 0:
            raise InvalidInputError("t_end must be non-negative")
        if not (math.isfinite(self.step_cap) and self.step_cap > 0):
            raise InvalidInputError("step_cap must be positive")
        offs = tuple(float(d) for d in self.start_offsets)
        if not offs or any(not (math.isfinite(d) and d > 0) for d in offs):
            raise InvalidInputError("start offsets must be positive")
        if any(b >= a for a, b in zip(offs, offs[1:])):
            raise InvalidInputError("start offsets must strictly decrease")
        object.__setattr__(self, "start_offsets", offs)
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be positive")


@dataclass(frozen=True)
class EngineRun:
    """Engine output with bookkeeping: why it stopped, how many cells it visited."""

    trajectory: Trajectory
    stop_reason: str  # "exit", "t_end", "horizon" or "step_cap"
    n_cells: int
    approximation: PartialApproximation

    @property
    def clipped(self) -> bool:
        return self.stop_reason != "exit"


@dataclass(frozen=True)
class OffsetFamily:
    """Solutions from the starts ``(0, d)`` with sup gaps between consecutive members."""

    offsets: tuple[float, ...]
    runs: tuple[EngineRun, ...]
    gaps: tuple[float, ...]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [run.trajectory for run in self.runs]

    def ratios(self) -> list[float]:
        return [b / a if a > 0 else (0.0 if b == 0 else math.inf) for a, b in zip(self.gaps, self.gaps[1:])]

    def decade_ratios(self) -> list[float]:
        """Gap ratios normalized to one decade of offset."""
        out = []
        for i, ratio in enumerate(self.ratios()):
            decades = math.log10(self.offsets[i] / self.offsets[i + 1])
            out.append(ratio ** (1.0 / decades) if ratio > 0 else 0.0)
        return out

    def is_cauchy(self) -> bool:
        return all(b <= a for a, b in zip(self.gaps, self.gaps[1:]))

    def fit(self) -> tuple[float, float] | None:
        return fit_gap_power(self.offsets[1:], self.gaps)


@dataclass(frozen=True)
class ConvergenceReport:
    k_list: list[int]
    sup_gaps: list[float]
    residuals: list[float]
    eps_list: list[float] = field(default_factory=list)
    offsets: list[float] = field(default_factory=list)
    passed: bool = False

    def __post_init__(self):
        n = len(self.k_list)
        if len(self.residuals) != n or len(self.sup_gaps) != max(0, n - 1):
            raise ContractError("report lengths do not match")

    def to_dict(self) -> dict:
        return {
            "k_list": list(self.k_list),
            "sup_gaps": [float(g) for g in self.sup_gaps],
            "residuals": [float(r) for r in self.residuals],
            "eps_list": [float(e) for e in self.eps_list],
            "offsets": [float(d) for d in self.offsets],
            "passed": bool(self.passed),
        }


@dataclass(frozen=True)
class LimitVerdict:
    passed: bool
    gaps: list[float]
    residual: float
    residual_bound: float
    monotone: bool
    first_decrease: int | None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "gaps": [float(g) for g in self.gaps],
            "residual": self.residual,
            "residual_bound": self.residual_bound,
            "monotone": self.monotone,
            "first_decrease": self.first_decrease,
        }


# ------------------------------------------------------------------- helpers


def time_lower_bound(z0: Sequence[float], r: float, c: float, halved: bool = False) -> float:
    """Guaranteed existence time ``dist(p0, complement of the ball) / (c + 1)``."""
    if not (r > 0 and c > 0):
        raise ContractError("r and c must be positive")
    bound = dist_to_ball_complement((z0[0], z0[1]), r) / (c + 1.0)
    return 0.5 * bound if halved else bound


def restricted_field(cell: GreenCell, z: Sequence[float], qlf: QuasiLyapunov) -> VelocitySet:
    """The cell's velocity at ``z`` if the quasi-Lyapunov function grows at unit rate along it."""
    if not cell.contains(z):
        raise ContractError(f"point {tuple(z)} is not in cell {cell.id}")
    v = cell.velocity(z)
    rate = qlf.rate(z, v)
    if not rate >= 1.0:
        raise CertificateViolation(f"growth rate {rate:.6g} < 1 at {tuple(z)} in cell {cell.id}")
    return VelocitySet((v,))


def wbar_growth_margin(path, qlf: QuasiLyapunov, sample_step: float) -> float:
    """Smallest ``wbar(phi(t)) - wbar(phi(t0)) - (t - t0)`` over samples inside the ball."""
    times = path.sample_times(sample_step, include_end=True)
    pts = path.states(times)
    inside = np.hypot(pts[:, 0], pts[:, 1]) < qlf.params.r
    start = path.states([path.t0])[0]
    w0 = qlf.values(start[0], start[1])[0]
    if not np.any(inside):
        return math.inf
    w = qlf.values(pts[inside, 0], pts[inside, 1])
    return float(np.min(w - w0 - (times[inside] - path.t0)))


def sup_gap(a, b, n: int = GAP_SAMPLES) -> float:
    """Sup distance of two paths over their common time interval (sampled plus breakpoints)."""
    lo, hi = max(a.t0, b.t0), min(a.t1, b.t1)
    if not hi >= lo:
        raise DomainError("paths share no common time interval")
    times = np.linspace(lo, hi, n)
    bps = np.concatenate([a.breakpoints(), b.breakpoints()])
    times = np.union1d(times, bps[(bps >= lo) & (bps <= hi)])
    return float(np.max(np.linalg.norm(a.states(times) - b.states(times), axis=1)))


def fit_gap_power(offsets: Sequence[float], gaps: Sequence[float]) -> tuple[float, float] | None:
    """Least-squares fit ``gap ~ C * offset**p``; ``None`` with fewer than two positive gaps."""
    d = np.asarray(offsets, dtype=float)
    g = np.asarray(gaps, dtype=float)
    keep = g > 0
    if np.sum(keep) < 2:
        return None
    p, logc = np.polyfit(np.log(d[keep]), np.log(g[keep]), 1)
    return float(math.exp(logc)), float(p)


def _owner(pa: PartialApproximation, z: ExtendedPoint) -> tuple[PartialApproximation, GreenCell]:
    cell = pa.cell_at(z, with_witness=False)
    if cell is not None:
        return pa, cell
    rho = math.hypot(z.x, z.y)
    if rho == 0 or rho >= pa.r or not (0 <= z.t < pa.T):
        raise CoverageError(f"point {tuple(z)} lies outside the good set of the partition")
    pa = pa.deepened_for(min(rho, 1.0 / pa.depth), max(rho, pa.r - 1.0 / pa.depth))
    cell = pa.cell_at(z, with_witness=False)
    if cell is None:
        raise CoverageError(f"point {tuple(z)} is not covered after refinement")
    return pa, cell


def _flow(x: float, y: float, u: float, dt: float) -> tuple[float, float]:
    return x + y * dt + 0.5 * u * dt * dt, y + u * dt


def _generic_exit(cell: GreenCell, x: float, y: float, t: float, u: float, horizon: float, step: float) -> float:
    """First time in ``(0, horizon]`` the ``u``-arc leaves ``cell``, by probing then bisection."""
    lo = 0.0
    while lo < horizon:
        hi = min(lo + step, horizon)
        px, py = _flow(x, y, u, hi)
        if not cell.contains((px, py, t + hi)):
            while hi - lo > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                mx, my = _flow(x, y, u, mid)
                if cell.contains((mx, my, t + mid)):
                    lo = mid
                else:
                    hi = mid
            return hi
        lo = hi
    return horizon


def _drives(label: RegionLabel, u: float) -> bool:
    if u > 0:
        return label in (RegionLabel.LEFT_OPEN, RegionLabel.ON_C2)
    return label in (RegionLabel.RIGHT_OPEN, RegionLabel.ON_C1)


# -------------------------------------------------------------------- engine


def run_engine(
    z0: Sequence[float],
    pa: PartialApproximation,
    qlf: QuasiLyapunov,
    cfg: SolverConfig = SolverConfig(),
) -> EngineRun:
    """Cell-by-cell solution from a good start ``z0 = (x, y, t)``."""
    x, y, t = (float(v) for v in z0)
    if not all(math.isfinite(v) for v in (x, y, t)):
        raise InvalidInputError("start must be finite")
    r = pa.r
    if r > qlf.params.r:
        raise ContractError("the partition must live inside the certificate ball")
    if math.hypot(x, y) >= r:
        raise DomainError(f"start lies outside the ball of radius {r}")
    if x == 0 and y == 0:
        raise DomainError("start lies on the bad set; use epsilon_solution")
    if not (0 <= t < pa.T):
        raise DomainError("start time outside [0, T)")
    t_stop = min(pa.T, t + cfg.t_end)
    arcs: list[Arc] = []
    switches: list[ExtendedPoint] = []
    reason = "step_cap"
    visited = 0
    for _ in range(cfg.max_steps):
        if t >= t_stop:
            reason = "t_end" if t_stop < pa.T else "horizon"
            break
        if r - math.hypot(x, y) < EXIT_REL_TOL * r:
            reason = "exit"
            break
        z = ExtendedPoint(x, y, t)
        pa, cell = _owner(pa, z)
        visited += 1
        u = float(restricted_field(cell, z, qlf).velocities[0][1])
        horizon = min(cell.t_hi, t_stop) - t
        event = "strip"
        dt = horizon
        label = classify((x, y))
        if cfg.exact_events and _drives(label, u):
            th = hitting_time((x, y), int(u))
            if th is not None and th < dt:
                dt, event = th, "curve"
        elif not cfg.exact_events:
            dt = _generic_exit(cell, x, y, t, u, horizon, cfg.step_cap)
            event = "generic"
        te = ball_exit_time(x, y, u, r, dt)
        if te is not None and te <= dt:
            dt, event = te, "exit"
        arcs.append(Arc(ExtendedPoint(x, y, t), u, dt))
        x, y = _flow(x, y, u, dt)
        if event == "strip":
            t = min(cell.t_hi, t_stop) if horizon == dt else t + dt
        else:
            t = t + dt
        if event == "curve" or (event == "generic" and abs(switching_margin(x, y)) <= 1e-9 and y != 0):
            x = 0.25 * y * abs(y)
            switches.append(ExtendedPoint(x, y, t))
        if event == "exit":
            reason = "exit"
            break
    else:
        reason = "step_cap"
    if not arcs:
        arcs.append(Arc(ExtendedPoint(float(z0[0]), float(z0[1]), float(z0[2])), 0.0, 0.0))
    traj = Trajectory(tuple(arcs), tuple(switches), eps=cfg.eps)
    return EngineRun(traj, reason, visited, pa)


def offset_family(
    z0: Sequence[float],
    pa: PartialApproximation,
    qlf: QuasiLyapunov,
    cfg: SolverConfig = SolverConfig(),
) -> OffsetFamily:
    """Solutions from ``(0, d, t0)`` for each configured offset ``d``."""
    t0 = float(z0[2])
    offsets = cfg.start_offsets
    if offsets[0] >= pa.r:
        raise DomainError(f"start offset {offsets[0]} must be smaller than the ball radius {pa.r}")
    runs = tuple(run_engine((0.0, d, t0), pa, qlf, cfg) for d in offsets)
    gaps = tuple(sup_gap(a.trajectory, b.trajectory) for a, b in zip(runs, runs[1:]))
    return OffsetFamily(offsets, runs, gaps)


def epsilon_solution(
    z0: Sequence[float],
    pa: PartialApproximation,
    qlf: QuasiLyapunov,
    cfg: SolverConfig = SolverConfig(),
) -> Trajectory:
    """Patchy solution from ``z0``; origin-axis starts go through the offset family."""
    if float(z0[0]) == 0.0 and float(z0[1]) == 0.0:
        fam = offset_family(z0, pa, qlf, cfg)
        if not fam.is_cauchy():
            raise NonConvergenceError(f"offset gaps {fam.gaps} are not decreasing", report=fam)
        return fam.trajectories[-1]
    return run_engine(z0, pa, qlf, cfg).trajectory


# --------------------------------------------------------------- limit runs


def limit_offset(k: int, r: float) -> float:
    """Start offset of the ``k``-th member of the limit sequence."""
    return 0.25 * r * 2.0 ** (-(k - 1))


def default_builders(params: QlfParams, T: float = 1.0) -> tuple[Callable, Callable]:
    """Builders of the (eps-independent) partition and certificate for every ``k``."""
    pa = build_ms_cover(math.ceil(4.0 / params.r), params.r, T)
    qlf = QuasiLyapunov(params)
    return (lambda k: pa), (lambda k: qlf)


def solve_via_limits(
    z0: Sequence[float],
    k_max: int,
    pa_builder: Callable[[int], PartialApproximation],
    qlf_builder: Callable[[int], QuasiLyapunov],
    t_end: float = math.inf,
    sample_step: float = 1e-5,
) -> tuple[Trajectory, ConvergenceReport]:
    """Run the ``1/k``-solutions for ``k = 1..k_max`` and test them for uniform convergence.

    Origin-axis starts use the offset ``limit_offset(k, r)`` for member ``k``.
    """
    if int(k_max) != k_max or k_max < 2:
        raise InvalidInputError("k_max must be an integer of at least 2")
    k_list = list(range(1, int(k_max) + 1))
    trajs: list[Trajectory] = []
    residuals: list[float] = []
    offsets: list[float] = []
    on_axis = float(z0[0]) == 0.0 and float(z0[1]) == 0.0
    for k in k_list:
        pa = pa_builder(k)
        qlf = qlf_builder(k)
        if on_axis:
            d = limit_offset(k, pa.r)
            offsets.append(d)
            cfg = SolverConfig(eps=1.0 / k, t_end=t_end, start_offsets=(d,))
        else:
            cfg = SolverConfig(eps=1.0 / k, t_end=t_end)
        traj = epsilon_solution(z0, pa, qlf, cfg)
        trajs.append(traj)
        residuals.append(eps_residual(traj, sample_step))
    gaps = [sup_gap(a, b) for a, b in zip(trajs, trajs[1:])]
    cauchy = all(b <= a for a, b in zip(gaps, gaps[1:]))
    ok = cauchy and all(res <= 1.0 / k + 1e-9 for res, k in zip(residuals, k_list))
    report = ConvergenceReport(k_list, gaps, residuals, [1.0 / k for k in k_list], offsets, ok)
    if not cauchy:
        raise NonConvergenceError(f"gaps {gaps} are not decreasing", report=report)
    return trajs[-1], report


def uniform_limit_check(
    trajs: Sequence,
    pa: PartialApproximation,
    sample_step: float = 1e-5,
) -> LimitVerdict:
    """Sup gaps of a family, plus residual and monotone cell trace of its last member.

    The step should be finer than a time strip of the deepest cover, since the
    order can only decrease between samples sharing a strip.  Samples not
    covered by ``pa`` deepen the chain.
    """
    if len(trajs) < 2:
        raise ContractError("need at least two trajectories")
    gaps = [sup_gap(a, b) for a, b in zip(trajs, trajs[1:])]
    limit = trajs[-1]
    residual = eps_residual(limit, sample_step)
    bound = max(float(getattr(tr, "eps", 0.0)) for tr in trajs) + 1e-9
    trace = cell_index_trace(limit, pa, sample_step, clip=True, auto_refine=True)
    first = first_decrease(trace)
    monotone = first is None
    passed = monotone and residual <= bound
    return LimitVerdict(passed, gaps, residual, bound, monotone, first)


__all__ = [
    "ConvergenceReport",
    "EngineRun",
    "LimitVerdict",
    "OffsetFamily",
    "ReversedPath",
    "SolverConfig",
    "default_builders",
    "epsilon_solution",
    "fit_gap_power",
    "limit_offset",
    "offset_family",
    "restricted_field",
    "run_engine",
    "solve_via_limits",
    "sup_gap",
    "time_lower_bound",
    "uniform_limit_check",
    "wbar_growth_margin",
]
