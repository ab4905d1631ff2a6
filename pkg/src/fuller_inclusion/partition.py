"""Cone covers of punctured annuli, ordered green cells and their validation.

A depth-``s`` cover places space-time cones on a polar grid of apexes covering
the annulus ``1/s <= |p| <= r - 1/s`` for all ``t`` in ``[0, T)``.  Cones come
in time layers staggered by half a height, so every time strip (half a cone
height long) is covered by the upper halves of one layer.  A cone that touches
a switching curve is split into its two side pieces.

Cells are never enumerated eagerly: the cover is described by index arithmetic
and the cones around a point are found locally.  Deeper covers are chained in
a :class:`PartialApproximation`; a point is owned by the first depth whose
cones contain it, and inside that depth by the last piece (in construction
order) containing it.  Order positions are integer tuples compared
lexicographically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractError, CoverageError, DomainError, InvalidInputError
from .geometry import (
    ExtendedPoint,
    IceCreamCone,
    Side,
    ball_offsets,
    distance_to_c1,
    distance_to_c2,
    field_distance_array,
    side_array,
    speed_bound,
)
from .lyapunov import Check

HEIGHT_FACTOR = 0.9
SPACING_FACTOR = 0.9
FAR_CLEARANCE = math.sqrt(2.0) - 1.0
BAD = "BAD"
BAD_KEY = (math.inf,)
GROUP_PLAIN, GROUP_EXIT, GROUP_ENTRY = 0, 1, 2
N_GROUPS = 3

# location codes returned by PartialApproximation.locate
NOT_COVERED, ON_BAD_SET, OUTSIDE = -1, -2, -3


@dataclass(frozen=True)
class StripSchedule:
    """Cut times separating consecutive time strips."""

    cut_times: tuple[float, ...]

    def __post_init__(self):
        cuts = self.cut_times
        if cuts and not cuts[0] > 0:
            raise ContractError("first cut must be positive")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ContractError("cut times must strictly increase")


@dataclass(frozen=True)
class CoverLayout:
    """Index arithmetic of one depth-``s`` cone cover.

    Cone height is ``T / 2**level``; the apex grid has ``n_rings`` rings at
    spacing ``spacing`` with per-ring apex counts chosen so every point of the
    annulus lies within ``spacing / sqrt(2)`` of an apex, which is less than
    half the cone reach ``c * delta``.
    """

    s: int
    r: float
    T: float
    c: float
    level: int
    delta: float
    half: float
    reach: float
    spacing: float
    rho_in: float
    rho_out: float
    n_rings: int
    m_max: int
    n_strips: int
    ring_window: int
    angle_window: int

    @classmethod
    def build(cls, s: int, r: float, T: float) -> "CoverLayout":
        if int(s) != s:
            raise InvalidInputError("depth must be an integer")
        s = int(s)
        for name, v in (("r", r), ("T", T)):
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive and finite")
        if not s > 2.0 / r:
            raise DomainError(f"depth {s} is too small for radius {r}: need s > 2/r")
        c = speed_bound(r)
        nominal = HEIGHT_FACTOR * FAR_CLEARANCE / (s * c)
        level = max(1, math.ceil(math.log2(T / nominal)))
        while math.ldexp(T, -level) > nominal:
            level += 1
        delta = math.ldexp(T, -level)
        half = math.ldexp(T, -level - 1)
        reach = c * delta
        spacing = SPACING_FACTOR * reach / math.sqrt(2.0)
        rho_in, rho_out = 1.0 / s, r - 1.0 / s
        n_rings = max(1, math.ceil((rho_out - rho_in) / spacing))
        last = rho_in + (n_rings - 0.5) * spacing
        if last + reach >= r:
            raise DomainError("outer cones would leave the ball; increase the depth")
        m_max = _ring_count(last, spacing)
        rho0 = rho_in + 0.5 * spacing
        n0 = _ring_count(rho0, spacing)
        angle_window = math.ceil(math.asin(min(1.0, reach / rho0)) * n0 / (2 * math.pi)) + 1
        ring_window = math.ceil(reach / spacing) + 1
        return cls(
            s=s,
            r=float(r),
            T=float(T),
            c=c,
            level=level,
            delta=delta,
            half=half,
            reach=reach,
            spacing=spacing,
            rho_in=rho_in,
            rho_out=rho_out,
            n_rings=n_rings,
            m_max=m_max,
            n_strips=2 ** (level + 1),
            ring_window=ring_window,
            angle_window=angle_window,
        )

    @property
    def n_layers(self) -> int:
        return self.n_strips + 1

    @property
    def schedule(self) -> StripSchedule:
        return StripSchedule(tuple(k * self.half for k in range(1, self.n_strips)))

    def ring_radius(self, i):
        return self.rho_in + (np.asarray(i) + 0.5) * self.spacing

    def ring_count(self, i):
        rho = self.ring_radius(i)
        return np.ceil(2.0 * np.pi * (rho + 0.5 * self.spacing) / self.spacing).astype(np.int64)

    def apex_xy(self, i, m):
        rho = self.ring_radius(i)
        th = 2.0 * np.pi * np.asarray(m) / self.ring_count(i)
        return rho * np.cos(th), rho * np.sin(th)

    def apex_time(self, k):
        return (np.asarray(k) - 1) * self.half

    def strip_of(self, t):
        """Index of the time strip ``[k half, (k+1) half)`` containing ``t``."""
        t = np.asarray(t, dtype=float)
        k = np.floor(t / self.half).astype(np.int64)
        k = np.where((k + 1) * self.half <= t, k + 1, k)
        k = np.where(k * self.half > t, k - 1, k)
        return k

    def strip_bounds(self, k: int) -> tuple[float, float]:
        return k * self.half, (k + 1) * self.half

    def in_band(self, rho):
        return (rho >= self.rho_in) & (rho <= self.rho_out)

    def may_cover(self, rho):
        lo = self.ring_radius(0) - self.reach
        hi = self.ring_radius(self.n_rings - 1) + self.reach
        return (rho >= lo) & (rho <= hi)

    def cone(self, layer: int, ring: int, m: int) -> IceCreamCone:
        ax, ay = self.apex_xy(ring, m)
        return IceCreamCone(ExtendedPoint(float(ax), float(ay), float(self.apex_time(layer))), self.c, self.delta)

    def flat_index(self, group: int, layer: int, ring: int, m: int, piece: int) -> int:
        """Construction index of a cone piece; larger means later."""
        j = int(group)
        j = j * self.n_layers + int(layer)
        j = j * self.n_rings + int(ring)
        j = j * self.m_max + int(m)
        return j * 2 + int(piece)

    def unflatten(self, j: int) -> tuple[int, int, int, int, int]:
        j, piece = divmod(int(j), 2)
        j, m = divmod(j, self.m_max)
        j, ring = divmod(j, self.n_rings)
        group, layer = divmod(j, self.n_layers)
        return group, layer, ring, m, piece


def _ring_count(rho: float, spacing: float) -> int:
    return int(math.ceil(2.0 * math.pi * (rho + 0.5 * spacing) / spacing))


class ConeInfo(NamedTuple):
    """Curve contact data for arrays of cone apexes."""

    apex_side: np.ndarray
    meets: np.ndarray  # 0 none, 1 upper branch, 2 lower branch
    qx: np.ndarray
    qy: np.ndarray
    dq: np.ndarray


def cone_info(ax, ay, reach: float) -> ConeInfo:
    d1, q1x, q1y = distance_to_c1(ax, ay)
    d2, q2x, q2y = distance_to_c2(ax, ay)
    m1 = d1 < reach
    m2 = d2 < reach
    if np.any(m1 & m2):
        raise ContractError("a cone meets both switching curves")
    meets = np.where(m1, 1, np.where(m2, 2, 0))
    return ConeInfo(
        side_array(ax, ay),
        meets,
        np.where(m1, q1x, q2x),
        np.where(m1, q1y, q2y),
        np.where(m1, d1, d2),
    )


def piece_group(meets, side):
    """Order group of a piece: unsplit cones, then pieces the flow leaves, then pieces it enters."""
    entry = ((meets == 1) & (side == 2)) | ((meets == 2) & (side == 1))
    return np.where(meets == 0, GROUP_PLAIN, np.where(entry, GROUP_ENTRY, GROUP_EXIT))


class Candidates(NamedTuple):
    row: np.ndarray
    layer: np.ndarray
    ring: np.ndarray
    m: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    at: np.ndarray


def cone_candidates(lay: CoverLayout, x, y, t, strip=None) -> Candidates:
    """All cones of the two layers live in each point's strip that could contain the point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.size
    rho = np.hypot(x, y)
    th = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    ks = lay.strip_of(t) if strip is None else np.asarray(strip)
    ic = np.rint((rho - lay.rho_in) / lay.spacing - 0.5).astype(np.int64)
    di = np.arange(-lay.ring_window, lay.ring_window + 1)
    I = ic[:, None] + di[None, :]
    ring_ok = (I >= 0) & (I < lay.n_rings)
    I = np.clip(I, 0, lay.n_rings - 1)
    n_i = lay.ring_count(I)
    mc = np.rint(th[:, None] * n_i / (2.0 * np.pi)).astype(np.int64)
    W = lay.angle_window
    dm = np.arange(-W, W + 1)
    # rings with fewer apexes than the window get each apex once
    m_ok = (dm[None, None, :] + W) < n_i[:, :, None]
    M = np.mod(mc[:, :, None] + dm[None, None, :], n_i[:, :, None])
    ok = ring_ok[:, :, None] & m_ok
    K = ks[:, None] + np.array([0, 1])[None, :]
    shape = (n, I.shape[1], dm.size, 2)
    row = np.broadcast_to(np.arange(n)[:, None, None, None], shape)
    Ib = np.broadcast_to(I[:, :, None, None], shape)
    Mb = np.broadcast_to(M[:, :, :, None], shape)
    Kb = np.broadcast_to(K[:, None, None, :], shape)
    okb = np.broadcast_to(ok[:, :, :, None], shape)
    sel = okb.ravel()
    row, Ib, Mb, Kb = (a.ravel()[sel] for a in (row, Ib, Mb, Kb))
    ax, ay = lay.apex_xy(Ib, Mb)
    return Candidates(row, Kb, Ib, Mb, ax, ay, lay.apex_time(Kb))


class Owners(NamedTuple):
    """Owner of each point at one depth (``covered`` false where no cone contains it)."""

    covered: np.ndarray
    strip: np.ndarray
    group: np.ndarray
    layer: np.ndarray
    ring: np.ndarray
    m: np.ndarray
    piece: np.ndarray


def depth_owners(lay: CoverLayout, x, y, t, side) -> Owners:
    """Last cone piece (in construction order) containing each point, at one depth."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.size
    strip = lay.strip_of(t)
    out = Owners(
        np.zeros(n, dtype=bool),
        strip,
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
    )
    if n == 0:
        return out
    cand = cone_candidates(lay, x, y, t, strip)
    r = cand.row
    dist = np.hypot(x[r] - cand.ax, y[r] - cand.ay)
    dt = t[r] - cand.at
    inside = (dt >= 0) & (dt < lay.delta) & (dist <= lay.c * dt)
    r = r[inside]
    if r.size == 0:
        return out
    layer, ring, m = cand.layer[inside], cand.ring[inside], cand.m[inside]
    info = cone_info(cand.ax[inside], cand.ay[inside], lay.reach)
    ps = np.asarray(side)[r]
    exists = (info.meets > 0) | (ps == info.apex_side)
    r, layer, ring, m, ps = r[exists], layer[exists], ring[exists], m[exists], ps[exists]
    group = piece_group(info.meets[exists], ps)
    piece = ps - 1
    if r.size == 0:
        return out
    order = np.lexsort((piece, m, ring, layer, group, r))
    last = np.ones(order.size, dtype=bool)
    last[:-1] = r[order][1:] != r[order][:-1]
    pick = order[last]
    rows = r[pick]
    out.covered[rows] = True
    out.group[rows] = group[pick]
    out.layer[rows] = layer[pick]
    out.ring[rows] = ring[pick]
    out.m[rows] = m[pick]
    out.piece[rows] = piece[pick]
    return out


def count_nearby_pieces(lay: CoverLayout, x: float, y: float, t: float, h: float) -> int:
    """Number of cone pieces (per strip) meeting the space-time ball of radius ``h`` around a point."""
    k0 = int(lay.strip_of(max(t - h, 0.0)))
    k1 = int(lay.strip_of(min(t + h, lay.T * (1 - 1e-16))))
    total = 0
    for k in range(k0, k1 + 1):
        cand = cone_candidates(lay, np.array([x]), np.array([y]), np.array([t]), np.array([k]))
        dist = np.hypot(x - cand.ax, y - cand.ay)
        lo, hi = lay.strip_bounds(k)
        t_top = min(t + h, hi)
        near = dist <= lay.c * (t_top - cand.at) + h
        info = cone_info(cand.ax[near], cand.ay[near], lay.reach)
        keys = set(zip(cand.layer[near].tolist(), cand.ring[near].tolist(), cand.m[near].tolist()))
        total += len(keys) + int(np.sum(info.meets > 0))
    return total


@dataclass(frozen=True)
class GreenCell:
    """Cone piece restricted to one side and one time strip, with its constant field ``(y, u, 1)``."""

    depth: int
    strip: int
    index: int
    side: Side
    field_u: int
    apex: ExtendedPoint
    slope: float
    height: float
    t_lo: float
    t_hi: float
    splits: bool
    key: tuple
    T: float
    r: float
    witness: ExtendedPoint | None = field(default=None, compare=False)

    @property
    def id(self) -> tuple[int, int, int]:
        return (self.depth, self.strip, self.index)

    @property
    def cone(self) -> IceCreamCone:
        return IceCreamCone(self.apex, self.slope, self.height)

    def contains_array(self, pts, closed: bool = False) -> np.ndarray:
        """Region membership; ``closed`` uses the closure of cone, side and strip."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y, t = pts[..., 0], pts[..., 1], pts[..., 2]
        dt = t - self.apex.t
        dist = np.hypot(x - self.apex.x, y - self.apex.y)
        if closed:
            g = x - 0.25 * y * np.abs(y)
            on_side = g <= 1e-12 if self.side is Side.D1 else g >= -1e-12
            return (
                (dist <= self.slope * dt + 1e-12)
                & (t >= self.t_lo)
                & (t <= self.t_hi)
                & on_side
                & (np.hypot(x, y) <= self.r)
            )
        side = side_array(x, y)
        return (
            (dt >= 0)
            & (dt < self.height)
            & (dist <= self.slope * dt)
            & (t >= self.t_lo)
            & (t < self.t_hi)
            & (t < self.T)
            & (side == self.side.value)
            & (np.hypot(x, y) < self.r)
        )

    def contains(self, z: Sequence[float]) -> bool:
        return bool(self.contains_array(np.asarray(z, dtype=float))[0])

    def velocity(self, z: Sequence[float]) -> tuple[float, float, float]:
        return (float(z[1]), float(self.field_u), 1.0)

    def to_dict(self) -> dict:
        return {
            "id": list(self.id),
            "side": self.side.name,
            "field_u": self.field_u,
            "apex": list(self.apex),
            "height": self.height,
            "witness": None if self.witness is None else list(self.witness),
        }


class Location(NamedTuple):
    """Per-point owner data across a chain of depths."""

    depth: np.ndarray  # index into the chain, or one of the location codes
    strip: np.ndarray
    group: np.ndarray
    layer: np.ndarray
    ring: np.ndarray
    m: np.ndarray
    piece: np.ndarray
    side: np.ndarray


@dataclass(frozen=True)
class PartialApproximation:
    """Chain of cone covers of increasing depth with a lexicographic cell order.

    ``flipped`` holds cell ids whose field sign is reversed; it exists only to
    build negative controls.
    """

    layouts: tuple[CoverLayout, ...]
    eps: float = 1.0
    flipped: frozenset = frozenset()

    def __post_init__(self):
        if not self.layouts:
            raise ContractError("at least one depth is required")
        s = [l.s for l in self.layouts]
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ContractError("depths must strictly increase")
        base = self.layouts[0]
        for l in self.layouts[1:]:
            if l.r != base.r or l.T != base.T:
                raise ContractError("all depths must share r and T")

    @property
    def r(self) -> float:
        return self.layouts[0].r

    @property
    def T(self) -> float:
        return self.layouts[0].T

    @property
    def depth(self) -> int:
        return self.layouts[-1].s

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(l.s for l in self.layouts)

    def bad_set(self, z: Sequence[float]) -> bool:
        return float(z[0]) == 0.0 and float(z[1]) == 0.0 and 0.0 <= float(z[2]) < self.T

    # ------------------------------------------------------------------ lookup

    def locate(self, pts, max_depth: int | None = None) -> Location:
        """Owner data for an ``(N, 3)`` array of extended points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("non-finite point")
        n = x.size
        rho = np.hypot(x, y)
        side = side_array(x, y)
        depth = np.full(n, NOT_COVERED, dtype=np.int64)
        depth[(rho >= self.r) | (t < 0) | (t >= self.T)] = OUTSIDE
        depth[(depth == NOT_COVERED) & (rho == 0)] = ON_BAD_SET
        cols = [np.zeros(n, dtype=np.int64) for _ in range(6)]
        layouts = self.layouts if max_depth is None else self.layouts[:max_depth]
        for d, lay in enumerate(layouts):
            todo = np.nonzero((depth == NOT_COVERED) & lay.may_cover(rho))[0]
            for lo in range(0, todo.size, 4000):
                idx = todo[lo : lo + 4000]
                own = depth_owners(lay, x[idx], y[idx], t[idx], side[idx])
                hit = idx[own.covered]
                depth[hit] = d
                for col, val in zip(cols, own[1:]):
                    col[hit] = val[own.covered]
        return Location(depth, *cols, side)

    def _key_of(self, loc: Location, i: int, t: float) -> tuple:
        d = int(loc.depth[i])
        prefix: list = []
        for lay in self.layouts[:d]:
            prefix += [int(lay.strip_of(t)), 0]
        lay = self.layouts[d]
        j = lay.flat_index(loc.group[i], loc.layer[i], loc.ring[i], loc.m[i], loc.piece[i])
        return tuple(prefix + [int(loc.strip[i]), 1 + j])

    def keys(self, pts) -> list:
        """Order positions; ``BAD_KEY`` on the bad set and ``None`` where uncovered or outside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        loc = self.locate(pts)
        out: list = []
        for i in range(pts.shape[0]):
            d = loc.depth[i]
            if d >= 0:
                out.append(self._key_of(loc, i, pts[i, 2]))
            elif d == ON_BAD_SET:
                out.append(BAD_KEY)
            else:
                out.append(None)
        return out

    def key(self, z: Sequence[float]):
        return self.keys(np.asarray(z, dtype=float)[None, :])[0]

    def _cell_from(self, loc: Location, i: int, t: float, with_witness: bool) -> GreenCell:
        d = int(loc.depth[i])
        lay = self.layouts[d]
        strip = int(loc.strip[i])
        layer, ring, m = int(loc.layer[i]), int(loc.ring[i]), int(loc.m[i])
        j = lay.flat_index(loc.group[i], layer, ring, m, loc.piece[i])
        side = Side(int(loc.piece[i]) + 1)
        ax, ay = lay.apex_xy(ring, m)
        info = cone_info(np.array([ax]), np.array([ay]), lay.reach)
        t_lo, t_hi = lay.strip_bounds(strip)
        u = side.control
        if (lay.s, strip, j) in self.flipped:
            u = -u
        cell = GreenCell(
            depth=lay.s,
            strip=strip,
            index=j,
            side=side,
            field_u=u,
            apex=ExtendedPoint(float(ax), float(ay), float(lay.apex_time(layer))),
            slope=lay.c,
            height=lay.delta,
            t_lo=t_lo,
            t_hi=t_hi,
            splits=bool(info.meets[0] > 0),
            key=self._key_of(loc, i, t),
            T=lay.T,
            r=lay.r,
        )
        if with_witness:
            w = self._witnesses(d, [cell])[0]
            cell = replace(cell, witness=w)
        return cell

    def cell_at(self, z: Sequence[float], with_witness: bool = True) -> GreenCell | None:
        """Owning cell of ``z``; ``None`` on the bad set, uncovered points or outside the domain."""
        pts = np.asarray(z, dtype=float)[None, :]
        loc = self.locate(pts)
        if loc.depth[0] < 0:
            return None
        return self._cell_from(loc, 0, float(pts[0, 2]), with_witness)

    # -------------------------------------------------------------- refinement

    def refine(self, s_next: int | None = None) -> "PartialApproximation":
        """Append a deeper cover; every existing cell and its order are kept."""
        s_next = self.depth + 1 if s_next is None else int(s_next)
        if s_next <= self.depth:
            raise ContractError("refinement depth must exceed the current depth")
        lay = CoverLayout.build(s_next, self.r, self.T)
        return replace(self, layouts=self.layouts + (lay,))

    def deepened_for(self, rho_min: float, rho_max: float) -> "PartialApproximation":
        """Double the depth until the guaranteed band contains ``[rho_min, rho_max]``."""
        pa = self
        if not (0 < rho_min <= rho_max < self.r):
            raise DomainError("radii must lie inside the punctured ball")
        while not (1.0 / pa.depth <= rho_min and self.r - 1.0 / pa.depth >= rho_max):
            pa = pa.refine(2 * pa.depth)
        return pa

    def with_flipped(self, cell_id: tuple[int, int, int]) -> "PartialApproximation":
        """Copy with one cell's field sign reversed (negative control)."""
        return replace(self, flipped=self.flipped | {tuple(cell_id)})

    # ------------------------------------------------------------- enumeration

    def _witnesses(self, d: int, cells: list[GreenCell]) -> list[ExtendedPoint | None]:
        """Point of each cell's region, away from its boundary, not owned by a coarser depth."""
        if not cells:
            return []
        lay = self.layouts[d]
        n = len(cells)
        ax = np.array([c.apex.x for c in cells])
        ay = np.array([c.apex.y for c in cells])
        at = np.array([c.apex.t for c in cells])
        lo = np.array([c.t_lo for c in cells])
        hi = np.array([c.t_hi for c in cells])
        side = np.array([c.side.value for c in cells])
        info = cone_info(ax, ay, lay.reach)
        angles = 2.0 * np.pi * np.arange(8) / 8.0
        offs = [(0.0, 0.0)]
        for frac in (0.45, 0.9):
            offs += [(frac * math.cos(a), frac * math.sin(a)) for a in angles]
        offs_arr = np.array(offs)
        nx = np.where(info.dq > 0, (info.qx - ax) / np.maximum(info.dq, 1e-300), 0.0)
        ny = np.where(info.dq > 0, (info.qy - ay) / np.maximum(info.dq, 1e-300), 0.0)
        cand = []
        for frac_t in (0.5, 0.9):
            tc = lo + frac_t * (hi - lo)
            R = lay.c * (tc - at)
            px = ax[:, None] + R[:, None] * offs_arr[None, :, 0]
            py = ay[:, None] + R[:, None] * offs_arr[None, :, 1]
            beyond = 0.5 * (info.dq + R)
            away = -0.5 * R
            px = np.column_stack([px, ax + nx * beyond, ax + nx * away])
            py = np.column_stack([py, ay + ny * beyond, ay + ny * away])
            pt = np.broadcast_to(tc[:, None], px.shape)
            cand.append((px, py, np.array(pt)))
        px = np.concatenate([c[0] for c in cand], axis=1)
        py = np.concatenate([c[1] for c in cand], axis=1)
        pt = np.concatenate([c[2] for c in cand], axis=1)
        dist = np.hypot(px - ax[:, None], py - ay[:, None])
        R = lay.c * (pt - at[:, None])
        rad = np.hypot(px, py)
        ok = (
            (dist <= R * (1 - 1e-9))
            & (side_array(px, py) == side[:, None])
            & (rad > 0)
            & (rad < lay.r)
            & (pt >= lo[:, None])
            & (pt < hi[:, None])
            & (pt >= 0)
            & (pt < lay.T)
        )
        dc1 = distance_to_c1(px, py)[0]
        dc2 = distance_to_c2(px, py)[0]
        curve = np.where(info.meets[:, None] == 1, dc1, np.where(info.meets[:, None] == 2, dc2, np.inf))
        clear = np.minimum.reduce([R - dist, lay.c * (hi[:, None] - pt), lay.r - rad, rad, curve])
        if d > 0:
            flat = np.column_stack([px.ravel(), py.ravel(), pt.ravel()])
            test = np.nonzero(ok.ravel())[0]
            if test.size:
                loc = self.locate(flat[test], max_depth=d)
                taken = np.zeros(flat.shape[0], dtype=bool)
                taken[test] = loc.depth >= 0
                ok &= ~taken.reshape(ok.shape)
        clear = np.where(ok, clear, -np.inf)
        best = np.argmax(clear, axis=1)
        out: list[ExtendedPoint | None] = []
        for i in range(n):
            b = best[i]
            if not np.isfinite(clear[i, b]):
                out.append(None)
            else:
                out.append(ExtendedPoint(float(px[i, b]), float(py[i, b]), float(pt[i, b])))
        return out

    def depth_cells(self, d: int) -> list[GreenCell]:
        """Every nonempty cell contributed by depth index ``d``, in order."""
        lay = self.layouts[d]
        rings = np.arange(lay.n_rings)
        if d > 0:
            prev = self.layouts[d - 1]
            rho = lay.ring_radius(rings)
            rings = rings[(rho - lay.reach < prev.rho_in) | (rho + lay.reach > prev.rho_out)]
        ring_list, m_list = [], []
        for i in rings:
            cnt = int(lay.ring_count(i))
            ring_list.append(np.full(cnt, i))
            m_list.append(np.arange(cnt))
        if not ring_list:
            return []
        ring = np.concatenate(ring_list)
        m = np.concatenate(m_list)
        ax, ay = lay.apex_xy(ring, m)
        info = cone_info(ax, ay, lay.reach)
        cells: list[GreenCell] = []
        for a in range(ring.size):
            sides = (1, 2) if info.meets[a] > 0 else (int(info.apex_side[a]),)
            for sd in sides:
                group = int(piece_group(info.meets[a], sd))
                side = Side(sd)
                for layer in range(lay.n_layers):
                    at = float(lay.apex_time(layer))
                    for strip in (layer - 1, layer):
                        if strip < 0 or strip >= lay.n_strips:
                            continue
                        j = lay.flat_index(group, layer, int(ring[a]), int(m[a]), sd - 1)
                        t_lo, t_hi = lay.strip_bounds(strip)
                        prefix: list = []
                        for coarse in self.layouts[:d]:
                            prefix += [int(coarse.strip_of(t_lo)), 0]
                        u = side.control
                        if (lay.s, strip, j) in self.flipped:
                            u = -u
                        cells.append(
                            GreenCell(
                                depth=lay.s,
                                strip=strip,
                                index=j,
                                side=side,
                                field_u=u,
                                apex=ExtendedPoint(float(ax[a]), float(ay[a]), at),
                                slope=lay.c,
                                height=lay.delta,
                                t_lo=t_lo,
                                t_hi=t_hi,
                                splits=bool(info.meets[a] > 0),
                                key=tuple(prefix + [strip, 1 + j]),
                                T=lay.T,
                                r=lay.r,
                            )
                        )
        out: list[GreenCell] = []
        for lo in range(0, len(cells), 20000):
            chunk = cells[lo : lo + 20000]
            for cell, w in zip(chunk, self._witnesses(d, chunk)):
                if w is not None:
                    out.append(replace(cell, witness=w))
        out.sort(key=lambda c: c.key)
        return out

    def cells(self) -> list[GreenCell]:
        """All nonempty cells of the chain in order.  Only practical for small covers."""
        out: list[GreenCell] = []
        for d in range(len(self.layouts)):
            out.extend(self.depth_cells(d))
        out.sort(key=lambda c: c.key)
        return out

    def n_cones(self) -> int:
        total = 0
        for lay in self.layouts:
            total += int(np.sum(lay.ring_count(np.arange(lay.n_rings)))) * lay.n_layers
        return total

    def summary(self) -> dict:
        return {
            "depths": list(self.depths),
            "r": self.r,
            "T": self.T,
            "eps": self.eps,
            "cones": self.n_cones(),
        }


def build_ms_cover(s: int, r: float, T: float, eps: float = 1.0) -> PartialApproximation:
    """Depth-``s`` cone cover of the annulus ``1/s <= |p| <= r - 1/s`` over ``[0, T)``."""
    return PartialApproximation((CoverLayout.build(s, r, T),), eps=eps)


def refine(pa: PartialApproximation, s_next: int | None = None) -> PartialApproximation:
    return pa.refine(s_next)


# ------------------------------------------------------------------- traces


class TraceEntry(NamedTuple):
    t: float
    cell_id: object  # (depth, strip, index) or BAD
    key: tuple


def cell_index_trace(
    path,
    pa: PartialApproximation,
    sample_step: float,
    clip: bool = False,
    auto_refine: bool = False,
) -> list[TraceEntry]:
    """Owning cell at uniform sample times along a trajectory.

    With ``clip`` points outside the domain or not covered by the chain are
    skipped; with ``auto_refine`` the chain is deepened until every sampled
    point is covered.  Otherwise an uncovered point raises :class:`CoverageError`.
    """
    times = path.sample_times(sample_step, include_end=False)
    states = path.states(times)
    pts = np.column_stack([states, times])
    rho = np.hypot(pts[:, 0], pts[:, 1])
    inside = (rho < pa.r) & (times >= 0) & (times < pa.T)
    if not np.all(inside):
        if not (clip or auto_refine):
            raise CoverageError("trajectory leaves the domain of the partition")
        pts, times, rho = pts[inside], times[inside], rho[inside]
    if auto_refine and pts.shape[0]:
        good = rho > 0
        if np.any(good):
            pa = pa.deepened_for(min(float(rho[good].min()), 1.0 / pa.depth), max(float(rho[good].max()), pa.r - 1.0 / pa.depth))
    loc = pa.locate(pts)
    out: list[TraceEntry] = []
    for i in range(pts.shape[0]):
        d = loc.depth[i]
        if d >= 0:
            key = pa._key_of(loc, i, pts[i, 2])
            lay = pa.layouts[d]
            j = lay.flat_index(loc.group[i], loc.layer[i], loc.ring[i], loc.m[i], loc.piece[i])
            out.append(TraceEntry(float(times[i]), (lay.s, int(loc.strip[i]), j), key))
        elif d == ON_BAD_SET:
            out.append(TraceEntry(float(times[i]), BAD, BAD_KEY))
        elif not clip:
            raise CoverageError(f"point {tuple(pts[i])} lies in no cell")
    return out


def is_monotone(trace: Sequence[TraceEntry]) -> bool:
    return all(a.key <= b.key for a, b in zip(trace, trace[1:]))


def first_decrease(trace: Sequence[TraceEntry]) -> int | None:
    for i, (a, b) in enumerate(zip(trace, trace[1:])):
        if b.key < a.key:
            return i
    return None


# --------------------------------------------------------------- validation


@dataclass(frozen=True)
class PartitionReport:
    checks: tuple[Check, ...]
    n_cells: int
    max_neighbors: int

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


class _CellArrays(NamedTuple):
    ax: np.ndarray
    ay: np.ndarray
    at: np.ndarray
    c: np.ndarray
    delta: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    side: np.ndarray
    u: np.ndarray
    r: float
    T: float

    @classmethod
    def of(cls, cells: Sequence[GreenCell]) -> "_CellArrays":
        return cls(
            np.array([c.apex.x for c in cells]),
            np.array([c.apex.y for c in cells]),
            np.array([c.apex.t for c in cells]),
            np.array([c.slope for c in cells]),
            np.array([c.height for c in cells]),
            np.array([c.t_lo for c in cells]),
            np.array([c.t_hi for c in cells]),
            np.array([c.side.value for c in cells]),
            np.array([float(c.field_u) for c in cells]),
            cells[0].r,
            cells[0].T,
        )

    def take(self, idx) -> "_CellArrays":
        return _CellArrays(*(a[idx] for a in self[:9]), self.r, self.T)

    def contains(self, pts: np.ndarray, closed: bool) -> np.ndarray:
        """Membership of ``pts`` with shape ``(n_cells, k, 3)``."""
        x, y, t = pts[..., 0], pts[..., 1], pts[..., 2]
        e = lambda a: a[:, None]
        dt = t - e(self.at)
        dist = np.hypot(x - e(self.ax), y - e(self.ay))
        rad = np.hypot(x, y)
        if closed:
            g = x - 0.25 * y * np.abs(y)
            on_side = np.where(e(self.side) == 1, g <= 1e-12, g >= -1e-12)
            return (dist <= e(self.c) * dt + 1e-12) & (t >= e(self.lo)) & (t <= e(self.hi)) & on_side & (rad <= self.r)
        return (
            (dt >= 0)
            & (dt < e(self.delta))
            & (dist <= e(self.c) * dt)
            & (t >= e(self.lo))
            & (t < e(self.hi))
            & (t < self.T)
            & (side_array(x, y) == e(self.side))
            & (rad < self.r)
        )


def batched_bouligand(cells: _CellArrays, z: np.ndarray, v: np.ndarray, scales: np.ndarray, closed: bool, eta: float = 0.2) -> np.ndarray:
    """Per-cell version of :func:`~fuller_inclusion.geometry.bouligand_estimate`.

    ``z`` and ``v`` have shape ``(n, 3)``; ``scales`` has shape ``(n, k)``.
    """
    offsets = ball_offsets(3)
    hits = np.zeros(z.shape[0])
    for col in range(scales.shape[1]):
        s = scales[:, col][:, None]
        # the ball center settles most cells; the full ball is probed only for misses
        hit = cells.contains((z + s * v)[:, None, :], closed)[:, 0]
        miss = np.nonzero(~hit)[0]
        if miss.size:
            sm = s[miss][:, :, None]
            probes = z[miss, None, :] + sm * v[miss, None, :] + (sm * eta) * offsets[None, :, :]
            hit[miss] = np.any(cells.take(miss).contains(probes, closed), axis=1)
        hits += hit
    return hits / scales.shape[1]


def _closure_points(cells: Sequence[GreenCell], arr: _CellArrays) -> np.ndarray:
    """Witness, cone-boundary and curve points of each cell's closure, shape ``(n, k, 3)``."""
    n = len(cells)
    w = np.array([c.witness for c in cells])
    tc = arr.lo + 0.9 * (arr.hi - arr.lo)
    R = arr.c * (tc - arr.at)
    pts = [w]
    for a in 2.0 * np.pi * np.arange(8) / 8.0:
        pts.append(np.column_stack([arr.ax + R * math.cos(a), arr.ay + R * math.sin(a), tc]))
    info = cone_info(arr.ax, arr.ay, cells[0].slope * cells[0].height)
    curve = np.column_stack([info.qx, info.qy, tc])
    pts.append(np.where((info.meets > 0)[:, None] & (info.dq < R)[:, None], curve, w))
    return np.stack(pts, axis=1)


def validate_approximation(
    pa: PartialApproximation,
    grid_n: int = 100,
    seed: int = 0,
    max_cells: int = 150_000,
    cells: Sequence[GreenCell] | None = None,
) -> PartitionReport:
    """Sampled checks of the invariant partial approximation conditions.

    ``grid_n**2`` random good points drive the coverage, openness and local
    finiteness checks.  The tangency checks run on every cell when the chain is
    small enough, otherwise on the cells owning the sampled points.
    """
    if grid_n < 2:
        raise InvalidInputError("grid_n must be at least 2")
    rng = np.random.default_rng(seed)
    n_pts = grid_n * grid_n
    deep = pa.layouts[-1]
    rho = rng.uniform(deep.rho_in, deep.rho_out, n_pts)
    th = rng.uniform(0.0, 2.0 * np.pi, n_pts)
    t = rng.uniform(0.0, pa.T, n_pts)
    pts = np.column_stack([rho * np.cos(th), rho * np.sin(th), t])
    checks: list[Check] = []

    loc = pa.locate(pts)
    checks.append(Check("coverage", n_pts, float(np.sum(loc.depth < 0)), 0.0, "<="))

    h = 0.05 / deep.s
    n_open = min(n_pts, 2000)
    dirs = rng.normal(size=(n_open, 8, 3))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    shell = np.clip(pts[:n_open, None, :] + h * dirs, 0.0, None).reshape(-1, 3)
    shell_rho = np.hypot(shell[:, 0], shell[:, 1])
    shell = shell[(shell_rho > deep.rho_in + h) & (shell_rho < deep.rho_out - h) & (shell[:, 2] < pa.T)]
    open_loc = pa.locate(shell)
    checks.append(Check("union_open", int(shell.shape[0]), float(np.mean(open_loc.depth < 0)) if shell.size else 0.0, 0.0, "<="))

    n_fin = min(n_pts, 200)
    neighbors = 0
    for i in range(n_fin):
        d = int(loc.depth[i])
        if d < 0:
            continue
        lay = pa.layouts[d]
        neighbors = max(neighbors, count_nearby_pieces(lay, pts[i, 0], pts[i, 1], pts[i, 2], 0.25 * lay.reach))
    limit = 64 * (2 * 7 + 1) ** 2
    checks.append(Check("local_finiteness", n_fin, float(neighbors), float(limit), "<="))

    if cells is None:
        if pa.n_cones() * 2 <= max_cells:
            cells = pa.cells()
        else:
            seen: dict = {}
            for i in range(n_pts):
                if loc.depth[i] >= 0 and len(seen) < 4000:
                    c = pa._cell_from(loc, i, float(pts[i, 2]), with_witness=False)
                    seen.setdefault(c.id, (int(loc.depth[i]), c))
            by_depth: dict[int, list] = {}
            for d, c in seen.values():
                by_depth.setdefault(d, []).append(c)
            cells = []
            for d, group in sorted(by_depth.items()):
                for c, w in zip(group, pa._witnesses(d, group)):
                    if w is not None:
                        cells.append(replace(c, witness=w))
    cells = [c for c in cells if c.witness is not None]
    if not cells:
        checks.append(Check("closure_selection", 0, math.inf, pa.eps, "<="))
        checks.append(Check("witness_tangency", 0, 0.0, 1.0, ">="))
        return PartitionReport(tuple(checks), 0, neighbors)

    arr = _CellArrays.of(cells)
    w = np.array([c.witness for c in cells])
    # clearance of the witness sets the probing scale
    dist = np.hypot(w[:, 0] - arr.ax, w[:, 1] - arr.ay)
    R = arr.c * (w[:, 2] - arr.at)
    clear = np.minimum.reduce([R - dist, arr.c * (arr.hi - w[:, 2]), arr.r - np.hypot(w[:, 0], w[:, 1])])
    info = cone_info(arr.ax, arr.ay, cells[0].slope * cells[0].height)
    dcurve = np.where(info.meets == 1, distance_to_c1(w[:, 0], w[:, 1])[0], distance_to_c2(w[:, 0], w[:, 1])[0])
    clear = np.where(info.meets > 0, np.minimum(clear, dcurve), clear)
    clear = np.maximum(clear, 1e-300)
    speed = np.hypot(np.hypot(w[:, 1], 1.0), 1.0)
    base = clear / (2.0 * speed * (1.0 + arr.c))
    scales = base[:, None] * np.array([1.0, 0.1, 0.01])[None, :]
    vel = np.column_stack([w[:, 1], arr.u, np.ones(len(cells))])
    score = batched_bouligand(arr, w, vel, scales, closed=False)
    checks.append(Check("witness_tangency", len(cells), float(np.min(score)), 1.0, ">="))

    cp = _closure_points(cells, arr)
    worst = 0.0
    for k in range(cp.shape[1]):
        z = cp[:, k, :]
        member = arr.contains(z[:, None, :], closed=True)[:, 0]
        v = np.column_stack([z[:, 1], arr.u, np.ones(len(cells))])
        sc = (arr.delta * 1e-3)[:, None] * np.array([1.0, 0.1, 0.01])[None, :]
        tangent = batched_bouligand(arr, z, v, sc, closed=True) == 1.0
        sel = member & tangent
        if np.any(sel):
            d = field_distance_array(z[sel, 0], z[sel, 1], v[sel, 0], v[sel, 1])
            worst = max(worst, float(np.max(d)))
    checks.append(Check("closure_selection", int(cp.shape[0] * cp.shape[1]), worst, pa.eps, "<="))
    return PartitionReport(tuple(checks), len(cells), neighbors)
