"""Quasi-Lyapunov function for the Fuller field.

Level sets are arcs of a one-parameter family of parabolas ``f(x, y, a) = 0``,
``a < 0``.  The level of a point is the root ``a = phi(x, y)`` of ``f`` in
``(-a_bar, 0)``; ``w = -phi`` on the left side, extended to the right side by
central symmetry, and ``wbar = 36 w`` grows at least at unit rate along the
feedback field inside a small ball ``V`` of radius ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, ContractError, DomainError, InvalidInputError
from .geometry import DEFAULT_TOL, side_array

RATE_SCALE = 36.0
ORIGIN_CUTOFF = 1e-30
N_CERTIFICATE_CHECKS = 10
DEFAULT_R_CANDIDATES = (0.05, 0.02, 0.01, 0.008, 0.006, 0.005, 0.004, 0.003, 0.002, 0.001)


@dataclass(frozen=True)
class QlfParams:
    a_bar: float = 0.1
    r: float = 0.005
    rate: float = 1.0 / RATE_SCALE

    def __post_init__(self):
        for name in ("a_bar", "r", "rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive and finite")


@dataclass(frozen=True)
class ImplicitSolveResult:
    a: float
    residual: float
    iterations: int


@dataclass(frozen=True)
class Check:
    """One sampled inequality: ``worst`` must sit on the ``sense`` side of ``threshold``."""

    name: str
    grid_size: int
    worst: float
    threshold: float
    sense: str

    @property
    def passed(self) -> bool:
        w, t = float(self.worst), float(self.threshold)
        if not math.isfinite(w):
            return False
        return bool({"<": w < t, "<=": w <= t, ">": w > t, ">=": w >= t}[self.sense])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid_n": self.grid_size,
            "worst": float(self.worst),
            "threshold": float(self.threshold),
            "sense": self.sense,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class QlfReport:
    checks: tuple[Check, ...]
    params: QlfParams | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _negative_a(a):
    a = np.asarray(a, dtype=float)
    if np.any(~(a < 0)):
        raise DomainError("the parabola parameter a must be negative")
    return a


def f(x, y, a):
    """Parabola family: ``f(x, y, a) = 0`` is the level curve of level ``a``."""
    a = _negative_a(a)
    d = a * a + 16.0
    return y + 4.0 * x / a - (2.0 * a / d) * (x - 4.0 * y / a) ** 2 + a * d / 8.0


def f_partials(x, y, a):
    """Closed-form partial derivatives ``(df/dx, df/dy, df/da)``."""
    a = _negative_a(a)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = a * a + 16.0
    fx = (16.0 * y - 4.0 * a * x) / d + 4.0 / a
    fy = 16.0 * x / d - 64.0 * y / (a * d) + 1.0
    fa = (
        -32.0 * (2.0 * x * x + a * x * y - 2.0 * y * y) / d**2
        + (2.0 * y * y - 4.0 * x) / (a * a)
        + 2.0 * (x * x - y * y) / d
        + 3.0 * a * a / 8.0
        + 2.0
    )
    return fx, fy, fa


def _fa_remainder(x, y, a):
    """``df/da`` minus its dominant term ``(2y^2 - 4x)/a^2``."""
    d = a * a + 16.0
    return -32.0 * (2.0 * x * x + a * x * y - 2.0 * y * y) / d**2 + 2.0 * (x * x - y * y) / d + 3.0 * a * a / 8.0 + 2.0


@dataclass(frozen=True)
class ParabolaGeometry:
    """Level parabola of parameter ``a`` in rotated-and-sheared coordinates.

    ``x1 = x - 4y/a``, ``x2 = y + 4x/a``; the arc of interest is
    ``x2 = -p x1^2 + q`` for ``x1`` in ``interval``, joining ``A = (-a^2/4, a)``
    to ``B = (a^2/4, -a)``.
    """

    a: float

    def __post_init__(self):
        if not self.a < 0:
            raise DomainError("parabola parameter must be negative")

    @property
    def p(self) -> float:
        return -2.0 * self.a / (self.a**2 + 16.0)

    @property
    def q(self) -> float:
        return (self.a**2 + 16.0) ** 2 * self.p / 16.0

    @property
    def half_width(self) -> float:
        return self.a**2 / 4.0 + 4.0

    @property
    def interval(self) -> tuple[float, float]:
        return (-self.half_width, self.half_width)

    @property
    def A(self) -> tuple[float, float]:
        return (-self.a**2 / 4.0, self.a)

    @property
    def B(self) -> tuple[float, float]:
        return (self.a**2 / 4.0, -self.a)

    @property
    def vertex_distance(self) -> float:
        return self.a**2 * math.sqrt(self.a**2 + 16.0) / 8.0

    def to_transformed(self, x, y):
        return x - 4.0 * np.asarray(y) / self.a, y + 4.0 * np.asarray(x) / self.a

    def from_transformed(self, x1, x2):
        a = self.a
        d = a * a + 16.0
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return (a * a * x1 + 4.0 * a * x2) / d, (-4.0 * a * x1 + a * a * x2) / d

    def point(self, tau):
        """Planar point of the arc at parameter ``tau`` (the ``x1`` coordinate)."""
        tau = np.asarray(tau, dtype=float)
        return self.from_transformed(tau, -self.p * tau * tau + self.q)


def _check_tau(a: float, tau) -> None:
    half = a * a / 4.0 + 4.0
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > half * (1.0 + 1e-12)):
        raise DomainError("tau outside the parameter interval of the parabola")


def h_inner(a, tau):
    """Normal of the level parabola dotted with the left-side velocity, in transformed coordinates."""
    a = _negative_a(a)
    _check_tau(a, tau)
    tau = np.asarray(tau, dtype=float)
    d = a * a + 16.0
    p = -2.0 * a / d
    x2 = -p * tau * tau + d * d * p / 16.0
    y = a * a / d * (x2 - 4.0 * tau / a)
    v1 = y - 4.0 / a
    v2 = 1.0 + 4.0 * y / a
    return 2.0 * p * tau * v1 + v2


def _h_coeffs(a: float) -> tuple[float, float, float, float]:
    d = 16.0 + a * a
    return (1.0 - a * a / 2.0, a**4 / (32.0 + 2.0 * a * a), 24.0 * a * a / d**2, -8.0 * a**4 / d**3)


def h_closed(a, tau):
    """Expanded cubic form of :func:`h_inner`."""
    a = _negative_a(a)
    tau = np.asarray(tau, dtype=float)
    d = 16.0 + a * a
    return 1.0 - a * a / 2.0 + a**4 * tau / (32.0 + 2.0 * a * a) + 24.0 * a * a * tau**2 / d**2 - 8.0 * a**4 * tau**3 / d**3


def h_min(a: float) -> float:
    """Exact minimum of the cubic over the parameter interval."""
    a = float(_negative_a(a))
    c0, c1, c2, c3 = _h_coeffs(a)
    half = a * a / 4.0 + 4.0
    cands = [-half, half]
    for root in np.roots([3.0 * c3, 2.0 * c2, c1]):
        if abs(root.imag) < 1e-12 and -half < root.real < half:
            cands.append(float(root.real))
    return float(min(h_closed(a, t) for t in cands))


def q_band_max(a: float) -> float:
    """Largest ``y^2 - 2x`` over the band between the level-``a`` arc and its chord."""
    geom = ParabolaGeometry(a)
    x1 = np.array([-geom.half_width, geom.half_width, -geom.half_width, geom.half_width])
    x2 = np.array([0.0, 0.0, geom.q, geom.q])
    x, y = geom.from_transformed(x1, x2)
    return float(np.max(y * y - 2.0 * x))


def _solve_level_scalar(x: float, y: float, a_bar: float):
    """Plain-float version of :func:`_solve_level` for a single point."""

    def fs(a):
        d = a * a + 16.0
        return y + 4.0 * x / a - (2.0 * a / d) * (x - 4.0 * y / a) ** 2 + a * d / 8.0

    def fa(a):
        d = a * a + 16.0
        return (
            -32.0 * (2.0 * x * x + a * x * y - 2.0 * y * y) / d**2
            + (2.0 * y * y - 4.0 * x) / (a * a)
            + 2.0 * (x * x - y * y) / d
            + 3.0 * a * a / 8.0
            + 2.0
        )

    lo, hi = -a_bar, 0.0
    iters = 0
    while iters < 400 and (hi - lo > 1e-6 * abs(hi)) and (hi - lo > 1e-18):
        mid = 0.5 * (lo + hi)
        if fs(mid) < 0:
            lo = mid
        else:
            hi = mid
        iters += 1
    a = 0.5 * (lo + hi)
    cap = min(hi, -np.finfo(float).tiny)
    for _ in range(8):
        a_new = min(max(a - fs(a) / fa(a), lo), cap)
        iters += 1
        done = abs(a_new - a) <= 4 * np.finfo(float).eps * abs(a)
        a = a_new
        if done:
            break
    return a, abs(fs(a)), iters


def _solve_level(x: np.ndarray, y: np.ndarray, a_bar: float):
    """Vectorized root of ``f(x, y, .)`` in ``(-a_bar, 0)``; caller guarantees the bracket."""
    if x.size == 1:
        a, res, iters = _solve_level_scalar(float(x.flat[0]), float(y.flat[0]), a_bar)
        return np.full(x.shape, a), np.full(x.shape, res), iters
    lo = np.full(x.shape, -a_bar)
    hi = np.zeros(x.shape)
    iters = 0
    while iters < 400:
        width = hi - lo
        # bisect to a relative bracket of 1e-6, then Newton finishes
        active = (width > 1e-6 * np.abs(hi)) & (width > 1e-18)
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        neg = f(x, y, mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        iters += 1
    a = 0.5 * (lo + hi)
    for _ in range(8):
        _, _, fa = f_partials(x, y, a)
        step = f(x, y, a) / fa
        a_new = np.clip(a - step, lo, np.minimum(hi, -np.finfo(float).tiny))
        iters += 1
        if np.all(np.abs(a_new - a) <= 4 * np.finfo(float).eps * np.abs(a)):
            a = a_new
            break
        a = a_new
    return a, np.abs(f(x, y, a)), iters


def _domain_mask(x, y, params: QlfParams):
    rad = np.hypot(x, y)
    origin = rad < ORIGIN_CUTOFF
    inside = (x < 0.5 * y * y) & (rad < params.r)
    return origin, inside


def phi_array(x, y, params: QlfParams) -> np.ndarray:
    """Level ``a`` of each point; zero at the origin."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite coordinates")
    origin, inside = _domain_mask(x, y, params)
    if np.any(~(origin | inside)):
        raise DomainError("point outside the domain {x < y^2/2} of the level function, or outside V")
    out = np.zeros(x.shape)
    idx = ~origin
    if np.any(idx):
        xs, ys = x[idx], y[idx]
        if np.any(f(xs, ys, -params.a_bar) >= 0):
            raise CalibrationError(f"f(x, y, -{params.a_bar}) >= 0: the level bracket fails at this point")
        out[idx] = _solve_level(xs, ys, params.a_bar)[0]
    return out


def phi(x: float, y: float, params: QlfParams) -> ImplicitSolveResult:
    """Unique level ``a`` in ``(-a_bar, 0)`` with ``f(x, y, a) = 0``."""
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError("non-finite coordinates")
    origin, inside = _domain_mask(np.array([x]), np.array([y]), params)
    if origin[0]:
        return ImplicitSolveResult(0.0, 0.0, 0)
    if not inside[0]:
        raise DomainError("point outside the domain {x < y^2/2} of the level function, or outside V")
    if f(x, y, -params.a_bar) >= 0:
        raise CalibrationError(f"f(x, y, -{params.a_bar}) >= 0: the level bracket fails at this point")
    a, res, it = _solve_level(np.array([x]), np.array([y]), params.a_bar)
    return ImplicitSolveResult(float(a[0]), float(res[0]), int(it))


def grad_psi_array(x, y, params: QlfParams):
    """Gradient of ``psi = -phi`` via implicit differentiation."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    origin, _ = _domain_mask(x, y, params)
    if np.any(origin):
        raise DomainError("the level function is not differentiable at the origin")
    a = phi_array(x, y, params)
    fx, fy, fa = f_partials(x, y, a)
    if np.any(fa <= 0):
        raise CalibrationError("df/da is not positive at the level root")
    return fx / fa, fy / fa


def grad_psi(x: float, y: float, params: QlfParams) -> tuple[float, float]:
    px, py = grad_psi_array(x, y, params)
    return float(px[0]), float(py[0])


def _check_ball(x, y, params: QlfParams):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite coordinates")
    if np.any(np.hypot(x, y) >= params.r):
        raise DomainError(f"point outside V (radius {params.r})")


def w_array(x, y, params: QlfParams, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Unscaled quasi-Lyapunov value ``-phi`` extended by central symmetry."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_ball(x, y, params)
    side = side_array(x, y, tol)
    out = np.zeros(x.shape)
    left = side == 1
    right = side == 2
    if np.any(left):
        out[left] = -phi_array(x[left], y[left], params)
    if np.any(right):
        out[right] = -phi_array(-x[right], -y[right], params)
    return out


def wbar_array(x, y, params: QlfParams, tol: float = DEFAULT_TOL) -> np.ndarray:
    return RATE_SCALE * w_array(x, y, params, tol)


def wbar(z: Sequence[float], params: QlfParams, tol: float = DEFAULT_TOL) -> float:
    """Scaled quasi-Lyapunov value; independent of the time component."""
    return float(wbar_array(z[0], z[1], params, tol)[0])


def grad_wbar_array(x, y, params: QlfParams, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Spatial-temporal gradient of ``wbar``, shape ``(N, 3)``; the time partial is zero."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_ball(x, y, params)
    side = side_array(x, y, tol)
    if np.any(side == 0):
        raise DomainError("wbar is not differentiable at the origin")
    out = np.zeros((x.size, 3))
    left = side == 1
    right = side == 2
    if np.any(left):
        gx, gy = grad_psi_array(x[left], y[left], params)
        out[left, 0], out[left, 1] = gx, gy
    if np.any(right):
        gx, gy = grad_psi_array(-x[right], -y[right], params)
        out[right, 0], out[right, 1] = -gx, -gy
    return RATE_SCALE * out


def grad_wbar(z: Sequence[float], params: QlfParams, tol: float = DEFAULT_TOL) -> np.ndarray:
    return grad_wbar_array(z[0], z[1], params, tol)[0]


@dataclass(frozen=True)
class QuasiLyapunov:
    """Evaluator bundle for ``wbar`` and its gradient.

    ``sign = -1`` yields the negated function, used as a negative control.
    """

    params: QlfParams
    sign: float = 1.0

    def value(self, z: Sequence[float]) -> float:
        return self.sign * wbar(z, self.params)

    def values(self, x, y) -> np.ndarray:
        return self.sign * wbar_array(x, y, self.params)

    def gradient(self, z: Sequence[float]) -> np.ndarray:
        return self.sign * grad_wbar(z, self.params)

    def rate(self, z: Sequence[float], v: Sequence[float]) -> float:
        return float(np.dot(self.gradient(z), np.asarray(v, dtype=float)))

    def negated(self) -> "QuasiLyapunov":
        return QuasiLyapunov(self.params, -self.sign)

    def inside(self, x: float, y: float) -> bool:
        return math.hypot(x, y) < self.params.r


# ---------------------------------------------------------------- calibration


def _disk_grid(r: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    g = np.linspace(-r, r, n)
    X, Y = np.meshgrid(g, g)
    X, Y = X.ravel(), Y.ravel()
    rad = np.hypot(X, Y)
    keep = (rad < r) & (rad > 0)
    return X[keep], Y[keep]


def _a_grid(a_bar: float, n: int = 100) -> np.ndarray:
    return -a_bar * np.arange(n, 0, -1) / n


def _rate_values(x, y, params: QlfParams) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled rates ``<grad w, (y, u)>`` and the side code of each point."""
    side = side_array(x, y)
    rates = np.empty(x.size)
    left = side == 1
    right = side == 2
    if np.any(left):
        gx, gy = grad_psi_array(x[left], y[left], params)
        rates[left] = gx * y[left] + gy
    if np.any(right):
        gx, gy = grad_psi_array(-x[right], -y[right], params)
        rates[right] = -gx * y[right] + gy
    return rates, side


def _min_or_inf(v: np.ndarray) -> float:
    return float(np.min(v)) if v.size else math.inf


def certificate_checks(
    a_bar: float,
    r: float,
    grid_n: int = 200,
    n_a: int = 100,
    stop_on_fail: bool = False,
) -> list[Check]:
    """Sampled inequalities that make ``wbar`` a certificate on the ball of radius ``r``."""
    if grid_n < 2:
        raise InvalidInputError("grid_n must be at least 2")
    params = QlfParams(a_bar=a_bar, r=r)
    X, Y = _disk_grid(r, grid_n)
    m = X <= 0.5 * Y * Y
    n_pts = int(X.size)
    a_vals = _a_grid(a_bar, n_a)
    checks: list[Check] = []

    def add(check: Check) -> bool:
        checks.append(check)
        return check.passed or not stop_on_fail

    # checks on the level parameter alone come first
    hm = min(h_min(a) for a in a_vals)
    if not add(Check("h_min", n_a, hm, 0.5, ">")):
        return checks

    q_ratio = max(q_band_max(a) / (3.0 * a * a) for a in a_vals)
    if not add(Check("q_band", n_a, q_ratio, 1.0, "<=")):
        return checks

    # the level bracket: f(., ., -a_bar) < 0 on M
    worst = float(np.max(f(X[m], Y[m], -a_bar))) if np.any(m) else -math.inf
    # the remaining checks solve for the level, which needs the bracket
    if not add(Check("bracket", n_pts, worst, 0.0, "<")) or not checks[-1].passed:
        return checks

    # two-sided windows for the partials on M x [-a_bar, 0)
    xi, yi = X[X < 0.5 * Y * Y], Y[X < 0.5 * Y * Y]
    fx_m = fy_m = fa_m = math.inf
    for a in a_vals:
        d = a * a + 16.0
        rx = (16.0 * yi - 4.0 * a * xi) / d
        fx_m = min(fx_m, float(np.min(1.0 - np.abs(rx))))
        ry = 16.0 * xi / d + 1.0
        fy_m = min(fy_m, float(np.min(np.minimum(ry - 0.5, 2.0 - ry))))
        ra = _fa_remainder(xi, yi, a)
        fa_m = min(fa_m, float(np.min(np.minimum(ra - 1.0, 3.0 - ra))))
    size = int(xi.size) * n_a
    ok = add(Check("estimate_fx", size, fx_m, 0.0, ">"))
    ok = add(Check("estimate_fy", size, fy_m, 0.0, ">")) and ok
    ok = add(Check("estimate_fa", size, fa_m, 0.0, ">")) and ok
    if not ok:
        return checks

    side = side_array(X, Y)
    left = side == 1
    a_left = phi_array(X[left], Y[left], params)
    _, _, fa_left = f_partials(X[left], Y[left], a_left)
    if not add(Check("fa_bound", int(left.sum()), float(np.max(fa_left)), 9.0, "<=")):
        return checks

    rates, side = _rate_values(X, Y, params)
    up = (side == 1) & (Y >= 0)
    low = (side == 1) & (Y < 0)
    right = side == 2
    thr = 1.0 / RATE_SCALE
    add(Check("rate_d1_upper", int(up.sum()), _min_or_inf(rates[up]), thr, ">"))
    add(Check("rate_d1_lower", int(low.sum()), _min_or_inf(rates[low]), thr, ">"))
    add(Check("rate_d2", int(right.sum()), _min_or_inf(rates[right]), thr, ">"))
    return checks


def calibrate(
    a_bar: float = 0.1,
    r_candidates: Iterable[float] = DEFAULT_R_CANDIDATES,
    grid_n: int = 200,
) -> tuple[QlfParams, QlfReport]:
    """Largest candidate radius on which every certificate check passes."""
    if not (math.isfinite(a_bar) and a_bar > 0):
        raise InvalidInputError("a_bar must be positive")
    cands = [float(r) for r in r_candidates]
    if not cands or any(r <= 0 for r in cands) or any(b >= a for a, b in zip(cands, cands[1:])):
        raise ContractError("radius candidates must be positive and strictly decreasing")
    last = None
    for r in cands:
        checks = certificate_checks(a_bar, r, grid_n, stop_on_fail=True)
        report = QlfReport(tuple(checks), QlfParams(a_bar=a_bar, r=r))
        if report.passed and len(checks) == N_CERTIFICATE_CHECKS:
            return report.params, report
        last = report
    failing = ", ".join(last.failed()) if last else "none"
    raise CalibrationError(
        f"no radius candidate passes for a_bar={a_bar}; smallest candidate fails: {failing}", last
    )


def holder_constant(a_bar: float) -> float:
    """Constant ``K`` in ``|phi(p)| <= K sqrt(|p|)`` near the origin."""
    return (a_bar * a_bar + 16.0) ** 0.25 / math.sqrt(2.0)


def _random_disk(rng: np.random.Generator, r: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    rad = r * np.sqrt(rng.uniform(0.0, 1.0, n))
    th = rng.uniform(0.0, 2.0 * math.pi, n)
    return rad * np.cos(th), rad * np.sin(th)


def side_samples(params: QlfParams, n: int, seed: int = 0) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """``n`` uniform points of V on each feedback side, keyed by side code."""
    rng = np.random.default_rng(seed)
    out: dict[int, list] = {1: [], 2: []}
    counts = {1: 0, 2: 0}
    while min(counts.values()) < n:
        x, y = _random_disk(rng, params.r, 4 * n)
        side = side_array(x, y)
        for s in (1, 2):
            take = side == s
            out[s].append((x[take], y[take]))
            counts[s] += int(take.sum())
    res = {}
    for s in (1, 2):
        xs = np.concatenate([p[0] for p in out[s]])[:n]
        ys = np.concatenate([p[1] for p in out[s]])[:n]
        res[s] = (xs, ys)
    return res


def fd_gradient_error(x, y, params: QlfParams, rel_step: float = 1e-5) -> np.ndarray:
    """Relative error between :func:`grad_psi_array` and central differences of ``-phi``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = rel_step * np.hypot(x, y)
    gx, gy = grad_psi_array(x, y, params)
    dx = -(phi_array(x + h, y, params) - phi_array(x - h, y, params)) / (2 * h)
    dy = -(phi_array(x, y + h, params) - phi_array(x, y - h, params)) / (2 * h)
    return np.hypot(dx - gx, dy - gy) / np.hypot(gx, gy)


def verify_qlf(params: QlfParams, grid_n: int = 100, n_samples: int = 10_000, seed: int = 0) -> QlfReport:
    """Sampled checks of the four quasi-Lyapunov conditions for ``wbar``."""
    if grid_n < 2:
        raise InvalidInputError("grid_n must be at least 2")
    X, Y = _disk_grid(params.r, grid_n)
    checks = []

    vals = wbar_array(X, Y, params)
    at_origin = wbar((0.0, 0.0, 0.0), params)
    worst = float(np.min(vals)) if at_origin == 0.0 else -math.inf
    checks.append(Check("nonnegative", int(X.size), worst, 0.0, ">"))

    near = (np.hypot(X, Y) <= params.r / 2) & (X < 0.5 * Y * Y)
    ratio = np.abs(phi_array(X[near], Y[near], params)) / (
        holder_constant(params.a_bar) * np.sqrt(np.hypot(X[near], Y[near]))
    )
    checks.append(Check("holder_continuity", int(near.sum()), float(np.max(ratio)), 1.0, "<="))

    side = side_array(X, Y)
    far = (side == 1) & (np.hypot(X, Y) >= min(1e-3, params.r / 5))
    err = fd_gradient_error(X[far], Y[far], params)
    checks.append(Check("gradient_fd", int(far.sum()), float(np.max(err)), 1e-4, "<="))

    samples = side_samples(params, n_samples, seed)
    for s, name in ((1, "rate_d1"), (2, "rate_d2")):
        xs, ys = samples[s]
        g = grad_wbar_array(xs, ys, params)
        u = 1.0 if s == 1 else -1.0
        r = g[:, 0] * ys + g[:, 1] * u + g[:, 2]
        checks.append(Check(name, int(xs.size), float(np.min(r)), 1.0, ">="))
    return QlfReport(tuple(checks), params)
