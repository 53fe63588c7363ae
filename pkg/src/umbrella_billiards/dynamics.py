"""Billiard map in Birkhoff coordinates ``(s, theta)`` and its derivative.

``theta`` is the angle between the outgoing velocity and the positive
(counterclockwise) tangent, so regular points have ``0 < theta < pi``.
Collisions are solved in closed form per arc; there is no iterative root
finding anywhere in the map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .tables import BilliardTable

__all__ = [
    "PhasePoint",
    "CollisionEvent",
    "Orbit",
    "Termination",
    "SingularityError",
    "CornerHit",
    "Grazing",
    "NumericFailure",
    "billiard_map",
    "tangent_map",
    "iterate",
    "measure_density",
    "map_many",
    "tangent_many",
    "reverse",
]

GRAZING_TOL = 1e-12
CORNER_TOL = 1e-12
MIN_FLIGHT = 1e-12

TWO_PI = 2 * math.pi

# status codes used by the vectorised map
OK, CORNER, GRAZING, FAILURE = 0, 1, 2, 3


class SingularityError(Exception):
    """The orbit cannot be continued past this point."""


class CornerHit(SingularityError):
    pass


class Grazing(SingularityError):
    pass


class NumericFailure(SingularityError):
    pass


class PhasePoint(NamedTuple):
    s: float
    theta: float


@dataclass(frozen=True)
class CollisionEvent:
    next: PhasePoint
    free_path: float
    arc_index: int


class Termination(str, Enum):
    COMPLETED = "completed"
    CORNER_HIT = "corner_hit"
    GRAZING = "grazing"
    NUMERIC_FAILURE = "numeric_failure"


_TERMINATION = {CornerHit: Termination.CORNER_HIT, Grazing: Termination.GRAZING,
                NumericFailure: Termination.NUMERIC_FAILURE}


@dataclass
class Orbit:
    points: list[PhasePoint]
    terminated: Termination
    arc_indices: list[int] = field(default_factory=list)
    free_paths: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float).reshape(-1, 2)


def measure_density(x: PhasePoint) -> float:
    """Unnormalised density ``sin(theta)`` of the invariant measure."""
    return math.sin(x[1])


def reverse(table: BilliardTable, x: PhasePoint) -> PhasePoint:
    """Time reversal ``(s, theta) -> (s, pi - theta)``."""
    return PhasePoint(x[0], math.pi - x[1])


def _frame(table: BilliardTable, s: float):
    i = table.arc_index(s)
    arc = table.arcs[i]
    u = s - arc.s_start
    sig = arc.sign
    phi = arc.angle_start + sig * u / arc.radius
    c, sn = math.cos(phi), math.sin(phi)
    px = arc.center[0] + arc.radius * c
    py = arc.center[1] + arc.radius * sn
    # counterclockwise tangent and inward normal (tangent rotated by +90 degrees)
    tx, ty = -sig * sn, sig * c
    return i, px, py, tx, ty, -ty, tx


def billiard_map(table: BilliardTable, x: PhasePoint) -> CollisionEvent:
    """Next collision from ``x``.

    Raises :class:`CornerHit` when the flight ends within ``CORNER_TOL`` of a
    corner, :class:`Grazing` when ``|sin theta_1| < GRAZING_TOL`` and
    :class:`NumericFailure` when no forward intersection exists.
    """
    s, theta = x
    if not 0 < theta < math.pi:
        raise Grazing(f"theta={theta} is not a regular angle")
    i0, px, py, tx, ty, nx, ny = _frame(table, s)
    ct, st = math.cos(theta), math.sin(theta)
    vx, vy = ct * tx + st * nx, ct * ty + st * ny
    home = table.arcs[i0].circle

    best_tau, best_j, best_u = math.inf, -1, 0.0
    for j, arc in enumerate(table.arcs):
        cx, cy = arc.center
        r = arc.radius
        dx, dy = px - cx, py - cy
        b = vx * dx + vy * dy
        if arc.circle == home:
            roots = (-2.0 * b,)
        else:
            disc = b * b - (dx * dx + dy * dy - r * r)
            if disc < 0:
                continue
            sq = math.sqrt(disc)
            q = dx * dx + dy * dy - r * r
            if b > 0:
                t0 = -b - sq
                roots = (t0, q / t0) if t0 != 0 else (t0,)
            else:
                t1 = -b + sq
                roots = (q / t1, t1) if t1 != 0 else (t1,)
        for tau in roots:
            if not MIN_FLIGHT < tau < best_tau:
                continue
            hx, hy = px + tau * vx - cx, py + tau * vy - cy
            half = 0.5 * abs(arc.sweep)
            w = math.remainder(arc.sign * (math.atan2(hy, hx) - arc.angle_start) - half, TWO_PI) + half
            u = r * w
            if -CORNER_TOL <= u <= arc.length + CORNER_TOL:
                best_tau, best_j, best_u = tau, j, u
    if best_j < 0:
        raise NumericFailure(f"no forward collision from {tuple(x)}")

    arc = table.arcs[best_j]
    if table.corners and (best_u < CORNER_TOL or arc.length - best_u < CORNER_TOL):
        raise CornerHit(f"flight from {tuple(x)} ends at a corner")
    u = min(max(best_u, 0.0), arc.length)
    sig = arc.sign
    phi = arc.angle_start + sig * u / arc.radius
    t1x, t1y = -sig * math.sin(phi), sig * math.cos(phi)
    n1x, n1y = -t1y, t1x
    sin1 = -(vx * n1x + vy * n1y)
    if abs(sin1) < GRAZING_TOL:
        raise Grazing(f"grazing collision after {tuple(x)}")
    if sin1 < 0:
        raise NumericFailure(f"flight from {tuple(x)} left the table")
    # a chord of one circle meets it at equal angles at both ends
    theta1 = theta if arc.circle == home else math.atan2(sin1, vx * t1x + vy * t1y)
    s1 = arc.s_start + u
    if s1 >= table.total_length:
        s1 -= table.total_length
    return CollisionEvent(PhasePoint(s1, theta1), best_tau, best_j)


def _tangent_entries(k0, k1, tau, sin0, sin1):
    return np.array([
        [(tau * k0 - sin0) / sin1, tau / sin1],
        [(tau * k0 * k1 - k0 * sin1 - k1 * sin0) / sin1, (tau * k1 - sin1) / sin1],
    ])


def tangent_map(table: BilliardTable, x: PhasePoint) -> np.ndarray:
    """Derivative ``d(s1, theta1)/d(s, theta)`` of the billiard map at ``x``.

    Built from the signed curvatures at both ends (focusing positive), the
    free path and the two collision angles.  Its determinant is
    ``sin(theta) / sin(theta1)``.
    """
    ev = billiard_map(table, x)
    k0 = table.arcs[table.arc_index(x[0])].curvature
    k1 = table.arcs[ev.arc_index].curvature
    return _tangent_entries(k0, k1, ev.free_path, math.sin(x[1]), math.sin(ev.next.theta))


def iterate(table: BilliardTable, x: PhasePoint, n: int) -> Orbit:
    """Apply the map up to ``n`` times, stopping at the first singularity."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = PhasePoint(float(x[0]), float(x[1]))
    points, arcs, paths = [x], [table.arc_index(x[0])], []
    status = Termination.COMPLETED
    for _ in range(n):
        try:
            ev = billiard_map(table, points[-1])
        except SingularityError as exc:
            status = _TERMINATION[type(exc)]
            break
        points.append(ev.next)
        arcs.append(ev.arc_index)
        paths.append(ev.free_path)
    return Orbit(points, status, arcs, paths)


# -- vectorised versions --------------------------------------------------------

def map_many(table: BilliardTable, s, theta):
    """Billiard map applied elementwise to arrays of phase points.

    Returns ``(s1, theta1, free_path, arc_index, status)``.  Entries whose
    status is not ``OK`` (0) carry NaN coordinates.
    """
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    i0 = np.clip(np.searchsorted(table.s0, s, side="right") - 1, 0, table.n_arcs - 1)
    sig0 = table.sigma[i0]
    r0 = table.radius[i0]
    phi = table.phi0[i0] + sig0 * (s - table.s0[i0]) / r0
    cphi, sphi = np.cos(phi), np.sin(phi)
    px = table.cx[i0] + r0 * cphi
    py = table.cy[i0] + r0 * sphi
    tx, ty = -sig0 * sphi, sig0 * cphi
    nx, ny = -ty, tx
    ct, st = np.cos(theta), np.sin(theta)
    vx, vy = ct * tx + st * nx, ct * ty + st * ny
    circle_of = np.array([a.circle for a in table.arcs])
    home = circle_of[i0]

    best_tau = np.full(s.shape, np.inf)
    best_j = np.full(s.shape, -1)
    best_u = np.zeros(s.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        for j, arc in enumerate(table.arcs):
            cx, cy = arc.center
            r = arc.radius
            dx, dy = px - cx, py - cy
            b = vx * dx + vy * dy
            q = dx * dx + dy * dy - r * r
            sq = np.sqrt(b * b - q)
            t_lo = np.where(b > 0, -b - sq, q / (-b + sq))
            t_hi = np.where(b > 0, q / (-b - sq), -b + sq)
            same = home == arc.circle
            t_lo = np.where(same, -2.0 * b, t_lo)
            t_hi = np.where(same, np.nan, t_hi)
            half = 0.5 * abs(arc.sweep)
            for tau in (t_lo, t_hi):
                hx, hy = px + tau * vx - cx, py + tau * vy - cy
                w = np.remainder(arc.sign * (np.arctan2(hy, hx) - arc.angle_start) - half + math.pi,
                                 TWO_PI) - math.pi + half
                u = r * w
                ok = (tau > MIN_FLIGHT) & (tau < best_tau) & (u >= -CORNER_TOL) & (u <= arc.length + CORNER_TOL)
                best_tau = np.where(ok, tau, best_tau)
                best_j = np.where(ok, j, best_j)
                best_u = np.where(ok, u, best_u)

    status = np.where(best_j < 0, FAILURE, OK)
    j = np.maximum(best_j, 0)
    length = table.lengths[j]
    if table.corners:
        at_corner = (best_u < CORNER_TOL) | (length - best_u < CORNER_TOL)
        status = np.where((status == OK) & at_corner, CORNER, status)
    u = np.clip(best_u, 0.0, length)
    sig = table.sigma[j]
    phi1 = table.phi0[j] + sig * u / table.radius[j]
    t1x, t1y = -sig * np.sin(phi1), sig * np.cos(phi1)
    sin1 = -(vx * -t1y + vy * t1x)
    cos1 = vx * t1x + vy * t1y
    status = np.where((status == OK) & (np.abs(sin1) < GRAZING_TOL), GRAZING, status)
    status = np.where((status == OK) & (sin1 < 0), FAILURE, status)
    theta1 = np.where(circle_of[j] == home, theta, np.arctan2(sin1, cos1))
    s1 = table.s0[j] + u
    s1 = np.where(s1 >= table.total_length, s1 - table.total_length, s1)
    bad = status != OK
    s1[bad] = np.nan
    theta1[bad] = np.nan
    return s1, theta1, best_tau, best_j, status


def tangent_many(table: BilliardTable, s, theta, theta1, tau, arc1) -> np.ndarray:
    """Stack of tangent matrices, shape ``(..., 2, 2)``, for precomputed collisions."""
    s = np.asarray(s, dtype=float)
    i0 = np.clip(np.searchsorted(table.s0, s, side="right") - 1, 0, table.n_arcs - 1)
    k0 = table.curvature[i0]
    k1 = table.curvature[np.maximum(arc1, 0)]
    sin0, sin1 = np.sin(theta), np.sin(theta1)
    out = np.empty(s.shape + (2, 2))
    out[..., 0, 0] = (tau * k0 - sin0) / sin1
    out[..., 0, 1] = tau / sin1
    out[..., 1, 0] = (tau * k0 * k1 - k0 * sin1 - k1 * sin0) / sin1
    out[..., 1, 1] = (tau * k1 - sin1) / sin1
    return out
