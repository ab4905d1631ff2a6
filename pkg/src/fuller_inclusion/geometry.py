"""Planar state types, the switching-curve classifier and the set-valued Fuller field.

The switching curve is ``x = y|y|/4``.  Points strictly left of it are driven
with ``u = +1``, points strictly right with ``u = -1``, and on the curve (and at
the origin) both controls are admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, InvalidInputError

SWITCH_COEFF = 0.25
DEFAULT_TOL = 1e-12


class StatePoint(NamedTuple):
    x: float
    y: float


class ExtendedPoint(NamedTuple):
    x: float
    y: float
    t: float

    @property
    def state(self) -> StatePoint:
        return StatePoint(self.x, self.y)


class RegionLabel(Enum):
    LEFT_OPEN = "LeftOpen"
    RIGHT_OPEN = "RightOpen"
    ON_C1 = "OnC1"
    ON_C2 = "OnC2"
    ORIGIN = "Origin"


class Side(Enum):
    """The two closed feedback sides; each carries a constant control."""

    D1 = 1
    D2 = 2

    @property
    def control(self) -> int:
        return 1 if self is Side.D1 else -1


# integer codes used by the vectorized classifier
LEFT, RIGHT, ON_C1, ON_C2, ORIGIN = 0, 1, 2, 3, 4
_LABELS = {
    LEFT: RegionLabel.LEFT_OPEN,
    RIGHT: RegionLabel.RIGHT_OPEN,
    ON_C1: RegionLabel.ON_C1,
    ON_C2: RegionLabel.ON_C2,
    ORIGIN: RegionLabel.ORIGIN,
}


@dataclass(frozen=True)
class VelocitySet:
    """A finite set of velocity vectors (one or two members)."""

    velocities: tuple[tuple[float, ...], ...]

    def __len__(self) -> int:
        return len(self.velocities)

    def __iter__(self):
        return iter(self.velocities)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.velocities, dtype=float)

    def distance(self, v: Sequence[float]) -> float:
        """Euclidean distance from ``v`` to the nearest member."""
        diff = self.as_array() - np.asarray(v, dtype=float)
        return float(np.min(np.linalg.norm(diff, axis=1)))


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError(f"non-finite coordinate {v!r}")


def switching_margin(x, y):
    """Signed horizontal offset ``x - y|y|/4`` from the switching curve."""
    y = np.asarray(y, dtype=float)
    return np.asarray(x, dtype=float) - SWITCH_COEFF * y * np.abs(y)


def classify_array(x, y, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorized :func:`classify` returning integer region codes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = switching_margin(x, y)
    code = np.where(g < 0, LEFT, RIGHT)
    near = np.abs(g) <= tol
    code = np.where(near & (y > 0), ON_C1, code)
    code = np.where(near & (y < 0), ON_C2, code)
    origin = (np.abs(x) <= tol) & (np.abs(y) <= tol)
    return np.where(origin, ORIGIN, code)


def side_array(x, y, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Side codes: 1 for D1 minus C1, 2 for D2 minus C2, 0 at the origin."""
    code = classify_array(x, y, tol)
    out = np.where((code == LEFT) | (code == ON_C2), 1, 2)
    return np.where(code == ORIGIN, 0, out)


def classify(p: Sequence[float], tol: float = DEFAULT_TOL) -> RegionLabel:
    """Region of the plane containing ``p``, relative to the switching curve."""
    if tol < 0:
        raise ContractError("tol must be non-negative")
    x, y = float(p[0]), float(p[1])
    _finite(x, y)
    return _LABELS[int(classify_array(x, y, tol))]


def side_of(p: Sequence[float], tol: float = DEFAULT_TOL) -> Side | None:
    """Feedback side whose cell contains ``p``; curve points go to the side they enter."""
    label = classify(p, tol)
    if label is RegionLabel.ORIGIN:
        return None
    if label in (RegionLabel.LEFT_OPEN, RegionLabel.ON_C2):
        return Side.D1
    return Side.D2


def fuller_field(p: Sequence[float], tol: float = DEFAULT_TOL) -> VelocitySet:
    """Admissible velocities ``(y, u)`` at ``p``."""
    label = classify(p, tol)
    y = float(p[1])
    if label is RegionLabel.LEFT_OPEN:
        return VelocitySet(((y, 1.0),))
    if label is RegionLabel.RIGHT_OPEN:
        return VelocitySet(((y, -1.0),))
    if label is RegionLabel.ORIGIN:
        return VelocitySet(((0.0, 1.0), (0.0, -1.0)))
    return VelocitySet(((y, -1.0), (y, 1.0)))


def extended_field(z: Sequence[float], tol: float = DEFAULT_TOL) -> VelocitySet:
    """Fuller field with a unit time component appended."""
    _finite(float(z[2]))
    base = fuller_field((z[0], z[1]), tol)
    return VelocitySet(tuple((*v, 1.0) for v in base))


def field_distance_array(x, y, vx, vy, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Distance from planar velocities ``(vx, vy)`` to the Fuller field at ``(x, y)``."""
    code = classify_array(x, y, tol)
    y = np.asarray(y, dtype=float)
    first = np.where(code == ORIGIN, 0.0, y)
    dx = np.asarray(vx, dtype=float) - first
    d_up = np.hypot(dx, np.asarray(vy, dtype=float) - 1.0)
    d_down = np.hypot(dx, np.asarray(vy, dtype=float) + 1.0)
    return np.where(code == LEFT, d_up, np.where(code == RIGHT, d_down, np.minimum(d_up, d_down)))


@dataclass(frozen=True)
class IceCreamCone:
    """Space-time cone ``|p - apex| <= slope * (t - apex.t)`` of half-open height."""

    apex: ExtendedPoint
    slope: float
    height: float

    def __post_init__(self):
        if not (self.slope > 0 and self.height > 0):
            raise ContractError("cone slope and height must be positive")

    def contains_array(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dt = pts[:, 2] - self.apex.t
        dist = np.hypot(pts[:, 0] - self.apex.x, pts[:, 1] - self.apex.y)
        return (dt >= 0) & (dt < self.height) & (dist <= self.slope * dt)

    def contains(self, z: Sequence[float]) -> bool:
        return bool(self.contains_array(np.asarray(z, dtype=float))[0])


def cone_contains(k: IceCreamCone, z: Sequence[float]) -> bool:
    return k.contains(z)


@lru_cache(maxsize=8)
def ball_offsets(dim: int, n: int = 64) -> np.ndarray:
    """Deterministic points of the closed unit ball, starting with its center."""
    rng = np.random.default_rng(20240611 + dim)
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.tile([1.0 / 3.0, 2.0 / 3.0, 1.0], n // 3 + 1)[:n]
    pts = np.vstack([np.zeros((1, dim)), dirs * radii[:, None]])
    pts.setflags(write=False)
    return pts


def bouligand_estimate(
    set_pred: Callable[[np.ndarray], np.ndarray],
    z: Sequence[float],
    v: Sequence[float],
    scales: Sequence[float] = (0.1, 0.01, 0.001),
    eta: float = 0.2,
) -> float:
    """Sampled evidence that ``v`` lies in the Bouligand tangent cone of a set at ``z``.

    ``set_pred`` maps an ``(N, d)`` array of points to a boolean array.  For each
    scale ``s`` the ball of radius ``eta * s`` around ``z + s v`` is probed; the
    score is the fraction of scales where some probe lands in the set.  This can
    only falsify tangency, never prove it.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if not bool(np.asarray(set_pred(z[None, :]))[0]):
        raise ContractError("bouligand_estimate requires z to lie in the set")
    scales = list(scales)
    if not scales or any(s <= 0 for s in scales):
        raise ContractError("scales must be positive")
    offsets = ball_offsets(z.size)
    hits = 0
    for s in scales:
        probes = z + s * v + (s * eta) * offsets
        if np.any(set_pred(probes)):
            hits += 1
    return hits / len(scales)


def dist_to_ball_complement(p: Sequence[float], r: float) -> float:
    if r <= 0:
        raise ContractError("ball radius must be positive")
    return max(0.0, r - math.hypot(float(p[0]), float(p[1])))


def speed_bound(r: float) -> float:
    """Largest Fuller speed ``|(y, +-1)|`` over the closed ball of radius ``r``."""
    return math.sqrt(r * r + 1.0)


def distance_to_c1(px, py) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance from points to the upper branch ``x = y^2/4, y >= 0``.

    Returns ``(distance, qx, qy)`` with ``(qx, qy)`` the nearest curve point.
    The stationarity condition is the cubic ``y^3 + 4(2 - px) y - 8 py = 0``,
    which has one real root while ``px < 2``; the constraint ``y >= 0`` clips it.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    P = 4.0 * (2.0 - px)
    Q = -8.0 * py
    disc = np.sqrt(np.maximum(Q * Q / 4.0 + P**3 / 27.0, 0.0))
    root = np.cbrt(-Q / 2.0 + disc) + np.cbrt(-Q / 2.0 - disc)
    # one Newton step cleans up Cardano cancellation
    g = root**3 + P * root + Q
    root = root - g / (3.0 * root**2 + P)
    qy = np.maximum(root, 0.0)
    qx = 0.25 * qy * qy
    return np.hypot(px - qx, py - qy), qx, qy


def distance_to_c2(px, py) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance to the lower branch ``x = -y^2/4, y <= 0`` (central mirror of C1)."""
    d, qx, qy = distance_to_c1(-np.asarray(px, dtype=float), -np.asarray(py, dtype=float))
    return d, -qx, -qy
