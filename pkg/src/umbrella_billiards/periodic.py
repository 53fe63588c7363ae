"""Periodic orbits: Newton refinement, stability classes and the named families."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import (
    OK,
    PhasePoint,
    SingularityError,
    billiard_map,
    map_many,
    tangent_map,
)
from .tables import BilliardTable, Family, InvalidSpec, OutOfRange, TableSpec, build_table, locate

__all__ = [
    "StabilityClass",
    "PeriodicOrbit",
    "NotPeriodic",
    "NoConvergence",
    "SingularOrbit",
    "NotFound",
    "classify",
    "classify_trace",
    "refine_periodic",
    "axial_two_periodic",
    "split_pair",
    "radial_orbit",
    "radial_orbits",
    "search_periodic",
    "power",
    "residual",
]

PARABOLIC_TOL = 1e-8
RESIDUAL_TOL = 1e-9
CLASSIFY_ENTRY_TOL = 1e-6
MAX_NEWTON_STEPS = 50
MAX_HALVINGS = 20
GRAZING_SEED_SIN = 1e-6


class NotPeriodic(Exception):
    pass


class NoConvergence(Exception):
    pass


class SingularOrbit(Exception):
    pass


class NotFound(Exception):
    pass


class StabilityClass(str, Enum):
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"
    ELLIPTIC = "elliptic"


def classify_trace(trace: float, tol: float = PARABOLIC_TOL) -> StabilityClass:
    a = abs(trace)
    if a > 2 + tol:
        return StabilityClass.HYPERBOLIC
    if a < 2 - tol:
        return StabilityClass.ELLIPTIC
    return StabilityClass.PARABOLIC


@dataclass(frozen=True)
class PeriodicOrbit:
    cycle: tuple[PhasePoint, ...]
    period: int
    trace: float
    classification: StabilityClass
    residual: float
    arcs: tuple[int, ...] = ()

    def reversed(self) -> "PeriodicOrbit":
        """The time-reversed cycle, starting from the reverse of the base point."""
        pts = [PhasePoint(p.s, math.pi - p.theta) for p in self.cycle]
        cyc = (pts[0],) + tuple(reversed(pts[1:]))
        arcs = (self.arcs[0],) + tuple(reversed(self.arcs[1:])) if self.arcs else ()
        return PeriodicOrbit(cyc, self.period, self.trace, self.classification, self.residual, arcs)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "trace": self.trace,
            "class": self.classification.value,
            "residual": self.residual,
            "cycle": [[p.s, p.theta] for p in self.cycle],
        }


def _ds(a: float, b: float, length: float) -> float:
    """Signed ``a - b`` on the circle of circumference ``length``."""
    return math.remainder(a - b, length)


def power(table: BilliardTable, x: PhasePoint, k: int):
    """``T^k(x)``, the visited points and the ordered product of tangent matrices."""
    pts = [PhasePoint(float(x[0]), float(x[1]))]
    arcs = [table.arc_index(pts[0].s)]
    M = np.eye(2)
    try:
        for _ in range(k):
            M = tangent_map(table, pts[-1]) @ M
            ev = billiard_map(table, pts[-1])
            pts.append(ev.next)
            arcs.append(ev.arc_index)
    except SingularityError as exc:
        raise SingularOrbit(str(exc)) from exc
    return pts[-1], pts[:-1], arcs[:-1], M


def residual(table: BilliardTable, x: PhasePoint, k: int) -> float:
    end = power(table, x, k)[0]
    return math.hypot(_ds(end.s, x[0], table.total_length), end.theta - x[1])


def refine_periodic(table: BilliardTable, seed: PhasePoint, k: int,
                    tol: float = RESIDUAL_TOL, max_steps: int = MAX_NEWTON_STEPS,
                    max_initial: float = 0.1) -> PhasePoint:
    """Newton iteration on ``T^k(x) - x`` with step halving.

    ``max_initial`` bounds the residual accepted at the seed; seeds outside
    it are reported as :class:`NoConvergence` without iterating.
    """
    L = table.total_length
    x = np.array([float(seed[0]) % L, float(seed[1])])

    def F(y):
        end, _, _, M = power(table, PhasePoint(*y), k)
        return np.array([_ds(end.s, y[0], L), end.theta - y[1]]), M

    f, M = F(x)
    r = float(np.hypot(*f))
    if r > max_initial:
        raise NoConvergence(f"seed residual {r:.3g} outside the Newton basin")
    for _ in range(max_steps):
        if r < tol:
            return PhasePoint(float(x[0]), float(x[1]))
        step = np.linalg.lstsq(M - np.eye(2), -f, rcond=None)[0]
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = x + lam * step
            trial[0] %= L
            if 0 < trial[1] < math.pi:
                try:
                    f_new, M_new = F(trial)
                except (SingularOrbit, OutOfRange):
                    f_new = None
                if f_new is not None and np.hypot(*f_new) < r:
                    break
            lam *= 0.5
        else:
            raise NoConvergence(f"residual stalled at {r:.3g}")
        x, f, M = trial, f_new, M_new
        r = float(np.hypot(*f))
    if r < tol:
        return PhasePoint(float(x[0]), float(x[1]))
    raise NoConvergence(f"residual {r:.3g} after {max_steps} Newton steps")


def classify(table: BilliardTable, x: PhasePoint, k: int, tol: float = PARABOLIC_TOL) -> PeriodicOrbit:
    """Refine an approximately ``k``-periodic point and classify it by ``|tr D T^k|``."""
    r0 = residual(table, x, k)
    if r0 > CLASSIFY_ENTRY_TOL:
        raise NotPeriodic(f"residual {r0:.3g} exceeds {CLASSIFY_ENTRY_TOL}")
    try:
        x = refine_periodic(table, x, k)
    except NoConvergence as exc:
        raise NotPeriodic(str(exc)) from exc
    end, cycle, arcs, M = power(table, x, k)
    r = math.hypot(_ds(end.s, x.s, table.total_length), end.theta - x.theta)
    tr = float(np.trace(M))
    return PeriodicOrbit(tuple(cycle), k, tr, classify_trace(tr, tol), r, tuple(arcs))


# -- named families -----------------------------------------------------------

def axial_two_periodic(spec: TableSpec) -> PhasePoint:
    """Perpendicular bounce along the line through both centres.

    Returned on the unit circle: at ``(1, 0)`` for lemons, ``(-1, 0)`` for moons.
    """
    if spec.family.is_umbrella and spec.B1 == 0:
        spec = spec.base
    if spec.family not in (Family.LEMON, Family.MOON):
        raise InvalidSpec(f"axial orbit needs a lemon or moon, got {spec.family.value}")
    table = build_table(spec)
    point = (1.0, 0.0) if spec.family is Family.LEMON else (-1.0, 0.0)
    return PhasePoint(locate(table, point), math.pi / 2)


def split_pair(table: BilliardTable) -> list[PeriodicOrbit]:
    """The 2-periodic orbits that replace the axial orbit of an umbrella lemon.

    Each duplicated unit circle carries a perpendicular bounce along the line
    joining its centre to the centre of the radius ``R`` circle; those
    chords seed the refinement.
    """
    spec = table.spec
    if spec.family is not Family.UMBRELLA_LEMON or spec.B1 <= 0:
        raise InvalidSpec("split_pair needs an umbrella lemon with B1 > 0")
    (bx, by, _), copies = table.circles[0], table.circles[1:]
    orbits = []
    for idx, (cx, cy, r) in enumerate(copies, start=1):
        dx, dy = bx - cx, by - cy
        d = math.hypot(dx, dy)
        hit = (cx + r * dx / d, cy + r * dy / d)
        try:
            s = locate(table, hit, circle=idx)
        except OutOfRange:
            continue
        try:
            orbits.append(classify(table, PhasePoint(s, math.pi / 2), 2))
        except (NotPeriodic, SingularOrbit):
            continue
    if len(orbits) < 2:
        raise NotFound(f"found {len(orbits)} split 2-periodic orbits")
    return sorted(orbits, key=lambda o: o.cycle[0].s)


def _radial_shot(table, s, m):
    """Launch perpendicular from ``s``; return cos(theta) at collision m+1, or None if off-pattern."""
    x = PhasePoint(s, math.pi / 2)
    for step in range(m + 1):
        try:
            ev = billiard_map(table, x)
        except SingularityError:
            return None
        arc = table.arcs[ev.arc_index]
        x = ev.next
        if step < m:
            # sliding collisions on focusing arcs, never a reversal
            if not arc.focusing or abs(math.cos(x.theta)) < 1e-6:
                return None
        elif arc.focusing:
            return None
    return math.cos(x.theta)


def _is_radial(table: BilliardTable, orbit: PeriodicOrbit) -> bool:
    """Least period is the full cycle and only dispersing arcs are hit head on."""
    k = orbit.period
    if any(k % d == 0 and residual(table, orbit.cycle[0], d) < 1e-7 for d in range(1, k)):
        return False
    return all(not table.arcs[a].focusing for p, a in zip(orbit.cycle, orbit.arcs)
               if abs(math.cos(p.theta)) < 1e-6)


def radial_orbits(table: BilliardTable, m: int, samples: int = 2000) -> list[PeriodicOrbit]:
    """All orbits with ``m`` sliding collisions between two perpendicular hits on dispersing arcs."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if table.spec.family.base is not Family.MOON:
        raise InvalidSpec("radial orbits are defined for moon-type tables")
    found: list[PeriodicOrbit] = []
    for arc in table.arcs:
        if arc.focusing:
            continue
        us = arc.s_start + np.linspace(0, arc.length, samples + 2)[1:-1]
        g = [_radial_shot(table, s, m) for s in us]
        for a, b, ga, gb in zip(us[:-1], us[1:], g[:-1], g[1:]):
            if ga is None or gb is None or ga * gb > 0:
                continue
            lo, hi, glo = a, b, ga
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                gm = _radial_shot(table, mid, m)
                if gm is None:
                    break
                if gm * glo > 0:
                    lo, glo = mid, gm
                else:
                    hi = mid
            try:
                orbit = classify(table, PhasePoint(0.5 * (lo + hi), math.pi / 2), 2 * (m + 1))
            except (NotPeriodic, SingularOrbit):
                continue
            if not _is_radial(table, orbit):
                continue
            if not any(abs(math.remainder(orbit.cycle[0].s - p.s, table.total_length)) < 1e-7
                       and abs(orbit.cycle[0].theta - p.theta) < 1e-7
                       for o in found for p in o.cycle):
                found.append(orbit)
    return found


def radial_orbit(table: BilliardTable, m: int) -> PeriodicOrbit:
    """First radial orbit with ``m`` sliding collisions, scanning launch points along the dispersing arcs."""
    orbits = radial_orbits(table, m)
    if not orbits:
        raise NotFound(f"no radial orbit with {m} sliding collisions")
    return orbits[0]


def search_periodic(table: BilliardTable, k: int, grid: int = 200, candidates: int = 40,
                    minimal: bool = True) -> list[PeriodicOrbit]:
    """Scan a ``grid x grid`` lattice for near-fixed points of ``T^k`` and refine the best ones.

    With ``minimal`` only orbits whose least period is exactly ``k`` are kept.
    """
    L = table.total_length
    s0, t0 = np.meshgrid((np.arange(grid) + 0.5) / grid * L, (np.arange(grid) + 0.5) / grid * math.pi,
                         indexing="ij")
    s, t = s0.ravel(), t0.ravel()
    alive = np.ones(s.shape, bool)
    for _ in range(k):
        s, t, _, _, status = map_many(table, s, t)
        alive &= status == OK
    ds = np.remainder(s - s0.ravel() + L / 2, L) - L / 2
    res = np.where(alive, np.hypot(ds, t - t0.ravel()), np.inf)
    order = np.argsort(res)[:candidates]
    found: list[PeriodicOrbit] = []
    for idx in order:
        if not np.isfinite(res[idx]):
            break
        seed = PhasePoint(float(s0.ravel()[idx]), float(t0.ravel()[idx]))
        try:
            x = refine_periodic(table, seed, k, max_initial=math.inf)
            orbit = classify(table, x, k)
        except (NoConvergence, NotPeriodic, SingularOrbit, OutOfRange):
            continue
        # grazing cycles creeping along one arc are not billiard orbits in any useful sense
        if min(math.sin(p.theta) for p in orbit.cycle) < GRAZING_SEED_SIN:
            continue
        if minimal and any(k % d == 0 and residual(table, orbit.cycle[0], d) < 1e-7 for d in range(1, k)):
            continue
        known = {(round(p.s, 6), round(p.theta, 6)) for o in found for p in o.cycle}
        if (round(orbit.cycle[0].s, 6), round(orbit.cycle[0].theta, 6)) in known:
            continue
        found.append(orbit)
    return found
