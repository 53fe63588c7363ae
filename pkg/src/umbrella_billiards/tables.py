"""Billiard tables bounded by circular arcs.

Every table is a boolean combination of disks: a unit disk centred at the
origin and a disk of radius ``R`` centred at ``(B, 0)``.  Umbrella tables
replace one of the two disks by ``n`` copies whose centres are spread evenly
along the vertical line through the original centre, spanning a total width
``B1``.  The boundary is extracted from the disk arrangement and stored as a
counterclockwise list of arcs.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

__all__ = [
    "Family",
    "TableSpec",
    "ArcSegment",
    "BilliardTable",
    "ThetaPair",
    "InvalidSpec",
    "OutOfRange",
    "build_table",
    "max_offset",
    "theta_of_table",
    "table_of_theta",
    "theta_geometry",
    "boundary_eval",
    "locate",
    "is_valid",
]

# arc endpoints are shared vertex objects, this only merges triple points
VERTEX_MERGE_TOL = 1e-12
ENDPOINT_TOL = 1e-10
MAX_OFFSET_ITERATIONS = 50


class InvalidSpec(ValueError):
    """Parameters do not describe a single simply connected table."""


class OutOfRange(ValueError):
    """Arc-length parameter outside ``[0, |dQ|)``."""


class Family(str, Enum):
    CIRCLE = "circle"
    LEMON = "lemon"
    MOON = "moon"
    FLOWER = "flower"
    UMBRELLA_LEMON = "umbrella_lemon"
    UMBRELLA_MOON1 = "umbrella_moon1"
    UMBRELLA_MOON2 = "umbrella_moon2"

    @property
    def is_umbrella(self) -> bool:
        return self in _UMBRELLA_BASE

    @property
    def base(self) -> "Family":
        return _UMBRELLA_BASE.get(self, self)

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = name.strip().lower().replace("-", "_")
        try:
            return _ALIASES[key]
        except KeyError:
            raise InvalidSpec(f"unknown table family {name!r}") from None


_UMBRELLA_BASE = {
    Family.UMBRELLA_LEMON: Family.LEMON,
    Family.UMBRELLA_MOON1: Family.MOON,
    Family.UMBRELLA_MOON2: Family.MOON,
}

_ALIASES = {f.value: f for f in Family}
_ALIASES.update(
    {
        "ulemon": Family.UMBRELLA_LEMON,
        "lemon_umbrella": Family.UMBRELLA_LEMON,
        "moon1": Family.UMBRELLA_MOON1,
        "moon2": Family.UMBRELLA_MOON2,
        "umoon1": Family.UMBRELLA_MOON1,
        "umoon2": Family.UMBRELLA_MOON2,
        "umbrellalemon": Family.UMBRELLA_LEMON,
        "umbrellamoon1": Family.UMBRELLA_MOON1,
        "umbrellamoon2": Family.UMBRELLA_MOON2,
    }
)


@dataclass(frozen=True)
class TableSpec:
    """Parameters ``(R, B, B1)`` of a table family.

    ``n`` is the number of duplicated circles of an umbrella table (an
    ``n``-umbrella when ``n > 2``); it is ignored by the other families.
    ``R >= 1`` is required except for moons, where a smaller second disk
    is allowed so that every two-arc table has an ``(R, B)`` description.
    """

    family: Family
    R: float = 1.0
    B: float = 1.0
    B1: float = 0.0
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("R", "B", "B1"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidSpec(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "n", int(self.n))
        fam = self.family
        if fam is Family.CIRCLE:
            return
        if self.R <= 0 or (self.R < 1 and fam.base is not Family.MOON):
            raise InvalidSpec(f"R must be >= 1 for {fam.value}, got {self.R}")
        if self.B <= 0:
            raise InvalidSpec(f"B must be positive, got {self.B}")
        if self.B1 < 0:
            raise InvalidSpec(f"B1 must be nonnegative, got {self.B1}")
        if not fam.is_umbrella:
            if self.B1 != 0:
                raise InvalidSpec(f"B1 must be 0 for {fam.value}")
            return
        if self.n < 2:
            raise InvalidSpec(f"an umbrella needs at least 2 circles, got n={self.n}")
        if self.B1 >= 2:
            raise InvalidSpec(f"B1 must be < 2, got {self.B1}")

    @property
    def base(self) -> "TableSpec":
        """The lemon or moon this umbrella deforms (``B1 = 0``)."""
        return TableSpec(self.family.base, self.R, self.B, 0.0)

    def with_B1(self, B1: float) -> "TableSpec":
        return replace(self, B1=B1)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "R": self.R, "B": self.B, "B1": self.B1, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "TableSpec":
        return cls(d["family"], d.get("R", 1.0), d.get("B", 1.0), d.get("B1", 0.0), d.get("n", 2))

    def label(self) -> str:
        return f"{self.family.value}(R={self.R:g}, B={self.B:g}, B1={self.B1:g})"


@dataclass(frozen=True)
class ArcSegment:
    """One circular piece of the boundary.

    The arc starts at polar angle ``angle_start`` about ``center`` and sweeps
    ``sweep`` radians: positive (counterclockwise about the centre) for a
    focusing arc whose disk contains the table, negative for a dispersing arc.
    """

    center: tuple[float, float]
    radius: float
    angle_start: float
    sweep: float
    s_start: float = 0.0
    circle: int = 0

    @property
    def angle_end(self) -> float:
        return self.angle_start + self.sweep

    @property
    def sign(self) -> int:
        return 1 if self.sweep > 0 else -1

    @property
    def focusing(self) -> bool:
        return self.sweep > 0

    @property
    def orientation(self) -> str:
        return "focusing" if self.focusing else "dispersing"

    @property
    def curvature(self) -> float:
        return self.sign / self.radius

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def point(self, u: float) -> np.ndarray:
        phi = self.angle_start + self.sign * u / self.radius
        return np.array([self.center[0] + self.radius * math.cos(phi),
                         self.center[1] + self.radius * math.sin(phi)])

    def tangent(self, u: float) -> np.ndarray:
        phi = self.angle_start + self.sign * u / self.radius
        return self.sign * np.array([-math.sin(phi), math.cos(phi)])


class ThetaPair(NamedTuple):
    """Signed tangent angles of the two arcs at the left vertex."""

    theta1: float
    theta2: float


# -- disk arrangements ------------------------------------------------------

# region expressions: ("disk", i) | ("and", e, ...) | ("or", e, ...) | ("sub", e, f)

def _evaluate(expr, inside) -> bool:
    op = expr[0]
    if op == "disk":
        return inside[expr[1]]
    if op == "and":
        return all(_evaluate(e, inside) for e in expr[1:])
    if op == "or":
        return any(_evaluate(e, inside) for e in expr[1:])
    if op == "sub":
        return _evaluate(expr[1], inside) and not _evaluate(expr[2], inside)
    raise ValueError(op)


def _spread(B1: float, n: int) -> list[float]:
    if n == 1 or B1 == 0:
        return [0.0]
    return [-B1 / 2 + j * B1 / (n - 1) for j in range(n)]


def _arrangement(spec: TableSpec):
    """Circles ``(cx, cy, r)`` and the region expression for a spec."""
    fam, R, B = spec.family, spec.R, spec.B
    if fam is Family.CIRCLE:
        return [(0.0, 0.0, 1.0)], ("disk", 0)
    if fam.is_umbrella and spec.B1 == 0:
        fam = fam.base
    if fam is Family.LEMON:
        return [(0.0, 0.0, 1.0), (B, 0.0, R)], ("and", ("disk", 0), ("disk", 1))
    if fam is Family.MOON:
        return [(0.0, 0.0, 1.0), (B, 0.0, R)], ("sub", ("disk", 0), ("disk", 1))
    if fam is Family.FLOWER:
        return [(0.0, 0.0, 1.0), (B, 0.0, R)], ("or", ("disk", 0), ("disk", 1))

    offsets = _spread(spec.B1, spec.n)
    copies = ("or",) + tuple(("disk", 1 + j) for j in range(len(offsets)))
    if fam is Family.UMBRELLA_LEMON:
        circles = [(B, 0.0, R)] + [(0.0, y, 1.0) for y in offsets]
        return circles, ("and", ("disk", 0), copies)
    if fam is Family.UMBRELLA_MOON1:
        circles = [(0.0, 0.0, 1.0)] + [(B, y, R) for y in offsets]
        return circles, ("sub", ("disk", 0), copies)
    if fam is Family.UMBRELLA_MOON2:
        circles = [(B, 0.0, R)] + [(0.0, y, 1.0) for y in offsets]
        return circles, ("sub", copies, ("disk", 0))
    raise InvalidSpec(f"unsupported family {fam}")


def _intersections(c1, c2):
    """Intersection points of two circles; raises on coincidence or tangency."""
    (x1, y1, r1), (x2, y2, r2) = c1, c2
    dx, dy = x2 - x1, y2 - y1
    d = math.hypot(dx, dy)
    if d < 1e-15:
        if abs(r1 - r2) < 1e-15:
            raise InvalidSpec("coincident boundary circles")
        return []
    a = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    h2 = r1 * r1 - a * a
    if h2 < 0:
        if min(abs(d - r1 - r2), abs(d - abs(r1 - r2))) < 1e-12:
            raise InvalidSpec("tangent boundary circles")
        return []
    h = math.sqrt(h2)
    if h < 1e-9 * min(r1, r2):
        raise InvalidSpec("tangent boundary circles")
    ux, uy = dx / d, dy / d
    mx, my = x1 + a * ux, y1 + a * uy
    return [(mx - h * uy, my + h * ux), (mx + h * uy, my - h * ux)]


def _boundary_arcs(circles, expr):
    """Boundary arcs of the region, each as ``(circle, start_vertex, end_vertex, angle0, sweep)``."""
    vertices: list[tuple[float, float]] = []
    on_circle: dict[int, list[int]] = {i: [] for i in range(len(circles))}

    def vertex_id(p):
        for k, q in enumerate(vertices):
            if abs(p[0] - q[0]) < VERTEX_MERGE_TOL and abs(p[1] - q[1]) < VERTEX_MERGE_TOL:
                return k
        vertices.append(p)
        return len(vertices) - 1

    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            for p in _intersections(circles[i], circles[j]):
                k = vertex_id(p)
                for c in (i, j):
                    if k not in on_circle[c]:
                        on_circle[c].append(k)

    arcs = []
    for i, (cx, cy, r) in enumerate(circles):
        ids = on_circle[i]
        if ids:
            angled = sorted((math.atan2(vertices[k][1] - cy, vertices[k][0] - cx), k) for k in ids)
            pieces = []
            for m, (a0, k0) in enumerate(angled):
                a1, k1 = angled[(m + 1) % len(angled)]
                if m + 1 == len(angled):
                    a1 += 2 * math.pi
                if a1 - a0 > 1e-14:
                    pieces.append((a0, a1, k0, k1))
        else:
            pieces = [(0.0, 2 * math.pi, None, None)]
        for a0, a1, k0, k1 in pieces:
            mid = 0.5 * (a0 + a1)
            px, py = cx + r * math.cos(mid), cy + r * math.sin(mid)
            inside = [math.hypot(px - x, py - y) < rr for (x, y, rr) in circles]
            inside[i] = True
            region_in = _evaluate(expr, inside)
            inside[i] = False
            region_out = _evaluate(expr, inside)
            if region_in == region_out:
                continue
            if region_in:
                arcs.append((i, k0, k1, a0, a1 - a0))
            else:
                arcs.append((i, k1, k0, a1, -(a1 - a0)))
    return arcs, vertices


def _trace_loop(arcs):
    """Order arcs into a single closed loop, raising if the boundary is not one curve."""
    if not arcs:
        raise InvalidSpec("empty table")
    full = [a for a in arcs if a[1] is None]
    if full:
        if len(arcs) != 1:
            raise InvalidSpec("table boundary is not a single closed curve")
        return arcs
    outgoing: dict[int, list] = {}
    for a in arcs:
        outgoing.setdefault(a[1], []).append(a)
    if any(len(v) != 1 for v in outgoing.values()):
        # two boundary arcs leave the same vertex: the region pinches there
        raise InvalidSpec("table boundary touches itself at a vertex")
    loop = [arcs[0]]
    while True:
        nxt = outgoing.get(loop[-1][2])
        if nxt is None:
            raise InvalidSpec("table boundary is not closed")
        if nxt[0] is loop[0]:
            break
        loop.append(nxt[0])
        if len(loop) > len(arcs):
            raise InvalidSpec("table boundary is not closed")
    if len(loop) != len(arcs):
        raise InvalidSpec("table is not a single simply connected region")
    return _merge_smooth(loop)


def _merge_smooth(loop):
    """Join consecutive pieces of the same circle split at crossings interior to the table."""
    if len({a[0] for a in loop}) == 1:
        i, k0, _, a0, _ = loop[0]
        return [(i, None, None, a0, math.copysign(2 * math.pi, loop[0][4]))]
    while loop[0][0] == loop[-1][0]:
        loop = loop[-1:] + loop[:-1]
    merged = [loop[0]]
    for a in loop[1:]:
        last = merged[-1]
        if a[0] == last[0]:
            merged[-1] = (last[0], last[1], a[2], last[3], last[4] + a[4])
        else:
            merged.append(a)
    return merged


def _expected_corners(spec: TableSpec) -> int:
    if spec.family is Family.CIRCLE:
        return 0
    if spec.family.is_umbrella and spec.B1 > 0:
        return spec.n + 1
    return 2


@dataclass(frozen=True, eq=False)
class BilliardTable:
    """Immutable counterclockwise boundary made of circular arcs.

    ``s = 0`` sits on the topmost corner (largest ``y``, ties broken by
    smaller ``x``); for the circle table it is the point ``(1, 0)``.
    """

    arcs: tuple[ArcSegment, ...]
    total_length: float
    corners: tuple[float, ...]
    spec: TableSpec
    circles: tuple = field(repr=False, default=())
    region: tuple = field(repr=False, default=())

    def __post_init__(self):
        # packed arrays for vectorised flight computations
        arr = lambda values: np.array(values, dtype=float)
        object.__setattr__(self, "cx", arr([a.center[0] for a in self.arcs]))
        object.__setattr__(self, "cy", arr([a.center[1] for a in self.arcs]))
        object.__setattr__(self, "radius", arr([a.radius for a in self.arcs]))
        object.__setattr__(self, "phi0", arr([a.angle_start for a in self.arcs]))
        object.__setattr__(self, "sigma", arr([a.sign for a in self.arcs]))
        object.__setattr__(self, "s0", arr([a.s_start for a in self.arcs]))
        object.__setattr__(self, "lengths", arr([a.length for a in self.arcs]))
        object.__setattr__(self, "curvature", self.sigma / self.radius)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def arc_index(self, s: float, side: int = 1) -> int:
        """Index of the arc containing ``s``; at a corner ``side`` picks the arc after (+1) or before (-1)."""
        if not 0 <= s < self.total_length:
            raise OutOfRange(f"s={s} outside [0, {self.total_length})")
        i = bisect.bisect_right(self.s_starts, s) - 1
        if side < 0 and s == self.arcs[i].s_start:
            i = (i - 1) % len(self.arcs)
        return i

    @property
    def s_starts(self) -> list[float]:
        return [a.s_start for a in self.arcs]

    def corner_points(self) -> np.ndarray:
        return np.array([self.arcs[i].point(0.0) for i in range(len(self.arcs))]) if self.corners else np.empty((0, 2))

    def contains(self, point, strict: bool = True) -> bool:
        """Membership of a Cartesian point in the closed (or open) table."""
        x, y = point
        if strict:
            inside = [math.hypot(x - cx, y - cy) < r for (cx, cy, r) in self.circles]
        else:
            inside = [math.hypot(x - cx, y - cy) <= r + 1e-12 for (cx, cy, r) in self.circles]
        return _evaluate(self.region, inside)

    def outline(self, points_per_arc: int = 64) -> np.ndarray:
        """Closed Cartesian polyline of the boundary."""
        pts = []
        for arc in self.arcs:
            for u in np.linspace(0.0, arc.length, points_per_arc, endpoint=False):
                pts.append(arc.point(u))
        pts.append(pts[0])
        return np.array(pts)

    def __repr__(self):
        return f"BilliardTable({self.spec.label()}, arcs={len(self.arcs)}, |dQ|={self.total_length:.6g})"


def build_table(spec: TableSpec) -> BilliardTable:
    """Construct the table for ``spec``.

    Raises :class:`InvalidSpec` when the disks do not produce one simply
    connected region with the family's corner structure.
    """
    circles, expr = _arrangement(spec)
    raw, vertices = _boundary_arcs(circles, expr)
    loop = _trace_loop(raw)
    n_corners = 0 if loop[0][1] is None else len(loop)
    if n_corners != _expected_corners(spec):
        raise InvalidSpec(f"{spec.label()} has {n_corners} corners, expected {_expected_corners(spec)}")

    if n_corners:
        # start at the topmost corner
        def key(a):
            x, y = vertices[a[1]]
            return (-y, x)

        start = min(range(len(loop)), key=lambda m: key(loop[m]))
        loop = loop[start:] + loop[:start]

    arcs = []
    s = 0.0
    for i, _k0, _k1, a0, sweep in loop:
        cx, cy, r = circles[i]
        arc = ArcSegment((cx, cy), r, a0, sweep, s, i)
        arcs.append(arc)
        s += arc.length

    for m, arc in enumerate(arcs):
        nxt = arcs[(m + 1) % len(arcs)]
        gap = np.linalg.norm(arc.point(arc.length) - nxt.point(0.0))
        if gap > ENDPOINT_TOL:
            raise InvalidSpec(f"arc endpoints do not meet (gap {gap:.3g})")

    corners = tuple(a.s_start for a in arcs) if n_corners else ()
    return BilliardTable(tuple(arcs), s, corners, spec, tuple(circles), expr)


def is_valid(spec: TableSpec) -> bool:
    try:
        build_table(spec)
    except InvalidSpec:
        return False
    return True


def max_offset(spec: TableSpec) -> float:
    """Supremum of ``B1`` keeping an umbrella table valid, found by bisection on ``[0, 2]``."""
    if not spec.family.is_umbrella:
        raise InvalidSpec(f"max_offset needs an umbrella family, got {spec.family.value}")
    base = replace(spec, B1=0.0)
    if not is_valid(base):
        raise InvalidSpec(f"base table {base.label()} is not valid")

    def valid(b1):
        try:
            return is_valid(replace(spec, B1=b1))
        except InvalidSpec:
            return False

    lo, hi = 0.0, 2.0
    for _ in range(MAX_OFFSET_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if valid(mid):
            lo = mid
        else:
            hi = mid
    return lo


# -- theta parametrisation ----------------------------------------------------

def _reduce(a: float, b: float) -> ThetaPair:
    """Map a signed angle pair into the fundamental triangle ``theta2 >= |theta1|``."""
    lo, hi = min(a, b), max(a, b)
    if lo + hi < 0:
        lo, hi = -hi, -lo
    return ThetaPair(lo, hi)


def theta_of_table(spec: TableSpec) -> ThetaPair:
    """Signed tangent angles of a two-arc table at its left vertex.

    Angles run counterclockwise from the chord joining the vertices to each
    arc's tangent; an arc's magnitude is half its angular extent and its sign
    tells which side of the chord it lies on.
    """
    if spec.B1 > 0:
        raise InvalidSpec("theta parameters are defined for the base table (B1 = 0)")
    if spec.family is Family.CIRCLE:
        raise InvalidSpec("the circle has no vertices")
    table = build_table(spec.base if spec.family.is_umbrella else spec)
    a, b = (abs(arc.sweep) / 2 for arc in table.arcs)
    same_side = any(not arc.focusing for arc in table.arcs)
    return _reduce(a, b) if same_side else _reduce(a, -b)


def theta_geometry(pair: ThetaPair):
    """Chord half-length and the two circles ``(y_centre, radius)`` of a theta pair.

    Vertices sit at ``(-c, 0)`` and ``(c, 0)`` and the theta1 circle has radius 1.
    """
    t1, t2 = pair
    if not (-math.pi < t1 < math.pi and 0 < t2 < math.pi):
        raise InvalidSpec(f"theta pair {tuple(pair)} outside the parameter square")
    if t2 < abs(t1) - 1e-12:
        raise InvalidSpec(f"theta pair {tuple(pair)} outside the fundamental triangle")
    if abs(math.sin(t1)) < 1e-12 or abs(math.sin(t2)) < 1e-12:
        raise InvalidSpec("a straight (zero curvature) arc is degenerate")
    if abs(t1 - t2) < 1e-12 or abs(t2 - t1 - math.pi) < 1e-12:
        raise InvalidSpec("arcs coincide or join into a circle")
    c = abs(math.sin(t1))
    circles = [(-c / math.tan(t), c / abs(math.sin(t))) for t in (t1, t2)]
    return c, circles


def table_of_theta(pair: ThetaPair) -> TableSpec:
    """Two-arc table spec realising a theta pair (inverse of :func:`theta_of_table`)."""
    pair = ThetaPair(float(pair[0]), float(pair[1]))
    _, ((y1, r1), (y2, r2)) = theta_geometry(pair)
    t1, t2 = pair
    dist = abs(y1 - y2)
    if t1 > 0:
        # both arcs on the same side: outer theta2 circle minus inner theta1 disk
        return TableSpec(Family.MOON, R=r1 / r2, B=dist / r2)
    family = Family.LEMON if t2 - t1 < math.pi else Family.FLOWER
    small, big = min(r1, r2), max(r1, r2)
    return TableSpec(family, R=big / small, B=dist / small)


def locate(table: BilliardTable, point, circle: int | None = None, tol: float = 1e-9) -> float:
    """Arc length of a boundary point, optionally restricted to one circle of the arrangement."""
    x, y = point
    for arc in table.arcs:
        if circle is not None and arc.circle != circle:
            continue
        cx, cy = arc.center
        if abs(math.hypot(x - cx, y - cy) - arc.radius) > tol:
            continue
        half = 0.5 * abs(arc.sweep)
        w = math.remainder(arc.sign * (math.atan2(y - cy, x - cx) - arc.angle_start) - half, 2 * math.pi) + half
        u = arc.radius * w
        if 0 <= u <= arc.length:
            return (arc.s_start + u) % table.total_length
    raise OutOfRange(f"point {tuple(point)} is not on the boundary")


def boundary_eval(table: BilliardTable, s: float, side: int = 1):
    """Point, counterclockwise unit tangent and signed curvature at arc length ``s``."""
    i = table.arc_index(s, side)
    arc = table.arcs[i]
    u = s - arc.s_start
    if side < 0 and u == 0.0 and len(table.arcs) > 1:
        u = arc.length
    return arc.point(u), arc.tangent(u), arc.curvature
