"""Lyapunov indicators, island detection and ergodic-boundary scans.

All grid computations run in fixed-size chunks whose results are gathered
in index order, so the numbers do not depend on how many worker threads
process the chunks.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import OK, PhasePoint, map_many, tangent_many
from .tables import BilliardTable, Family, InvalidSpec, TableSpec, ThetaPair, build_table, table_of_theta

__all__ = [
    "LyapunovConfig",
    "IslandConfig",
    "IslandReport",
    "BoundaryEstimate",
    "LyapunovResult",
    "DegenerateSeed",
    "NoTransition",
    "lyapunov_indicator",
    "lyapunov_many",
    "scaled_lyapunov",
    "scaled_lyapunov_result",
    "island_detect",
    "ergodic_boundary_scan",
    "lyapunov_curve",
    "grid_seeds",
    "moon_spec_for_theta",
    "SCAN_ISLAND_CONFIG",
]

log = logging.getLogger(__name__)

CHUNK = 1024
SINGULAR_SHIFT = 1e-9


class DegenerateSeed(ValueError):
    """The seed or its displaced companion cannot be iterated even once."""


class NoTransition(ValueError):
    """Both ends of a scan range give the same island verdict."""


@dataclass(frozen=True)
class LyapunovConfig:
    dx: float = 1e-6
    n: int = 10
    k: int = 40
    weighted: bool = False

    def __post_init__(self):
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")


@dataclass(frozen=True)
class IslandConfig:
    grid: int = 24
    n_long: int = 5000
    li_threshold: float = 0.05
    coverage_cells: int = 100
    coverage_threshold: float = 0.1
    detection_threshold: float = 0.005
    theta_grid: int | None = None

    @property
    def rows(self) -> int:
        """Seed count along theta; ``grid`` unless set separately."""
        return self.theta_grid or self.grid

    def __post_init__(self):
        if self.n_long < 1000:
            raise ValueError(f"n_long must be >= 1000, got {self.n_long}")
        if self.grid < 1 or self.rows < 2:
            raise ValueError(f"seed grid {self.grid} x {self.rows} is too small")


# Near the ergodic boundary the surviving regular sets are thin bands in theta
# that run along the whole focusing arc, so scans trade s resolution for theta
# resolution and a lower detection floor.
SCAN_ISLAND_CONFIG = IslandConfig(grid=4, theta_grid=320, detection_threshold=0.001)


@dataclass
class IslandReport:
    regular_fraction: float
    islands_found: bool
    cells: np.ndarray = field(repr=False)
    lyapunov: np.ndarray = field(repr=False)
    coverage: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class BoundaryEstimate:
    theta2: float
    theta1_low: float
    theta1_high: float
    B1: float
    verdict_low: bool = False
    verdict_high: bool = True

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.theta1_low + self.theta1_high)


@dataclass(frozen=True)
class LyapunovResult:
    lambda_bar: float
    used: int
    skipped: int


# -- seeds ---------------------------------------------------------------------

def grid_seeds(table: BilliardTable, k: int, k_theta: int | None = None):
    """Cell centres of a uniform ``k x k_theta`` grid in ``(s, theta)``, nudged off corners."""
    L = table.total_length
    s = (np.arange(k) + 0.5) / k * L
    t = (np.arange(k_theta or k) + 0.5) / (k_theta or k) * math.pi
    S, T = np.meshgrid(s, t, indexing="ij")
    S = S.ravel()
    for c in table.corners:
        S = np.where(np.abs(S - c) < 1e-12, S + SINGULAR_SHIFT, S)
    return S, T.ravel()


def _chunks(n: int):
    return [(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]


def _run_chunked(fn, n: int, threads: int):
    parts = _chunks(n)
    if threads <= 1 or len(parts) == 1:
        results = [fn(a, b) for a, b in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ab: fn(*ab), parts))
    return [np.concatenate(cols) for cols in zip(*results)]


# -- Lyapunov indicators ------------------------------------------------------

def _distance(table, s_a, t_a, s_b, t_b):
    L = table.total_length
    ds = np.remainder(s_b - s_a + 0.5 * L, L) - 0.5 * L
    return np.hypot(ds / L, (t_b - t_a) / math.pi)


def _two_orbit(table: BilliardTable, s, t, dx: float, n: int):
    """Two-orbit indicator over up to ``n`` steps; returns ``(li, steps_completed)``."""
    L = table.total_length
    s_a, t_a = s.copy(), t.copy()
    s_b = np.remainder(s + dx * L, L)
    t_b = t.copy()
    d0 = _distance(table, s_a, t_a, s_b, t_b)
    steps = np.zeros(s.shape, dtype=int)
    dist = d0.copy()
    alive = np.ones(s.shape, bool)
    for _ in range(n):
        s_a, t_a, _, _, st_a = map_many(table, s_a, t_a)
        s_b, t_b, _, _, st_b = map_many(table, s_b, t_b)
        good = alive & (st_a == OK) & (st_b == OK)
        dist = np.where(good, _distance(table, s_a, t_a, s_b, t_b), dist)
        steps = steps + good
        alive = good
        # park finished orbits on a harmless point so later steps stay finite
        s_a = np.where(alive, s_a, s)
        t_a = np.where(alive, t_a, t)
        s_b = np.where(alive, s_b, s)
        t_b = np.where(alive, t_b, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        li = np.where(steps > 0, np.log(dist / d0) / np.maximum(steps, 1), np.nan)
    return li, steps


def lyapunov_indicator(table: BilliardTable, x: PhasePoint, cfg: LyapunovConfig = LyapunovConfig()):
    """Finite-time indicator ``(1/n) ln(|eta_n| / |eta_0|)`` from two nearby orbits.

    The companion starts ``cfg.dx`` away along ``+s`` in the normalised
    coordinates ``(s/|dQ|, theta/pi)``.  Returns ``(value, completed)``;
    when an orbit stops early the value covers the completed steps only.
    """
    li, steps = _two_orbit(table, np.array([float(x[0])]), np.array([float(x[1])]), cfg.dx, cfg.n)
    if steps[0] == 0:
        raise DegenerateSeed(f"seed {tuple(x)} cannot be iterated")
    return float(li[0]), bool(steps[0] == cfg.n)


def _two_orbit_nudged(table, s, t, dx, n):
    li, steps = _two_orbit(table, s, t, dx, n)
    stopped = steps < n
    if stopped.any():
        # seeds on the singularity set get one retry slightly further along s
        s2 = np.remainder(s[stopped] + SINGULAR_SHIFT, table.total_length)
        li2, steps2 = _two_orbit(table, s2, t[stopped], dx, n)
        li[stopped], steps[stopped] = li2, steps2
    return li, steps


def lyapunov_many(table: BilliardTable, s, t, cfg: LyapunovConfig, threads: int = 1):
    """Indicators and completed-step counts for many seeds.

    Seeds whose orbits stop at a corner or grazing collision are retried
    once after a ``1e-9`` shift in ``s``.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return _run_chunked(lambda a, b: _two_orbit_nudged(table, s[a:b], t[a:b], cfg.dx, cfg.n), s.size, threads)


def scaled_lyapunov_result(table: BilliardTable, cfg: LyapunovConfig = LyapunovConfig(),
                           threads: int = 1) -> LyapunovResult:
    """Grid average of indicators with the count of seeds that stopped early."""
    s, t = grid_seeds(table, cfg.k)
    li, steps = lyapunov_many(table, s, t, cfg, threads)
    used = steps == cfg.n
    if not used.any():
        return LyapunovResult(math.nan, 0, int(s.size))
    if cfg.weighted:
        w = np.sin(t[used])
        value = float(np.sum(li[used] * w) / np.sum(w))
    else:
        value = float(np.sum(li[used]) / used.sum())
    return LyapunovResult(value, int(used.sum()), int((~used).sum()))


def scaled_lyapunov(table: BilliardTable, cfg: LyapunovConfig = LyapunovConfig(), threads: int = 1) -> float:
    """Mean indicator over the ``k x k`` grid of initial conditions."""
    return scaled_lyapunov_result(table, cfg, threads).lambda_bar


# -- island detection ----------------------------------------------------------

def _long_run(table: BilliardTable, s, t, cfg: IslandConfig):
    """Variational exponent and cell coverage of each seed over ``cfg.n_long`` steps."""
    L = table.total_length
    m = s.size
    cells = cfg.coverage_cells
    visited = np.zeros((m, cells * cells), dtype=bool)
    rows = np.arange(m)
    ws = np.ones(m)
    wt = np.zeros(m)
    log_growth = np.zeros(m)
    alive = np.ones(m, bool)
    for _ in range(cfg.n_long):
        ci = np.minimum((s / L * cells).astype(int), cells - 1)
        cj = np.minimum((t / math.pi * cells).astype(int), cells - 1)
        visited[rows, ci * cells + cj] = True
        s1, t1, tau, arc1, status = map_many(table, s, t)
        good = alive & (status == OK)
        J = tangent_many(table, s, t, np.where(good, t1, 1.0), tau, arc1)
        # tangent vectors live in raw (s, theta); lengths are measured in normalised units
        ns = J[:, 0, 0] * ws + J[:, 0, 1] * wt
        nt = J[:, 1, 0] * ws + J[:, 1, 1] * wt
        before = np.hypot(ws / L, wt / math.pi)
        after = np.hypot(ns / L, nt / math.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_growth = np.where(good, log_growth + np.log(after / before), log_growth)
            scale = np.where(good, after, 1.0)
            ws = np.where(good, ns / scale, ws)
            wt = np.where(good, nt / scale, wt)
        alive = good
        s = np.where(alive, s1, s)
        t = np.where(alive, t1, t)
    exponent = np.where(alive, log_growth / cfg.n_long, np.inf)
    coverage = visited.sum(axis=1) / (cells * cells)
    return exponent, coverage


def island_detect(table: BilliardTable, cfg: IslandConfig = IslandConfig(), threads: int = 1) -> IslandReport:
    """Judge each grid seed regular or chaotic and report the regular measure fraction.

    A seed is regular when its long-run exponent stays below
    ``li_threshold`` and its orbit visits less than ``coverage_threshold``
    of the ``coverage_cells**2`` phase-space cells.  Seeds whose orbit hits a
    singularity count as chaotic.
    """
    s, t = grid_seeds(table, cfg.grid, cfg.rows)
    exponent, coverage = _run_chunked(lambda a, b: _long_run(table, s[a:b], t[a:b], cfg), s.size, threads)
    regular = (exponent < cfg.li_threshold) & (coverage < cfg.coverage_threshold)
    w = np.sin(t)
    fraction = float(np.sum(w * regular) / np.sum(w))
    shape = (cfg.grid, cfg.rows)
    return IslandReport(fraction, fraction > cfg.detection_threshold, regular.reshape(shape),
                        exponent.reshape(shape), coverage.reshape(shape))


# -- parameter scans -----------------------------------------------------------

def moon_spec_for_theta(theta1: float, theta2: float, B1: float, family: Family = Family.UMBRELLA_MOON1,
                        n: int = 2) -> TableSpec:
    """Umbrella spec whose base two-arc table has the given theta pair."""
    base = table_of_theta(ThetaPair(theta1, theta2))
    family = Family.parse(family)
    if not family.is_umbrella:
        if B1:
            raise InvalidSpec(f"{family.value} has no B1 parameter")
        return base
    if base.family is not family.base:
        raise InvalidSpec(f"theta pair ({theta1}, {theta2}) gives a {base.family.value}, not a {family.base.value}")
    return TableSpec(family, base.R, base.B, B1, n)


def ergodic_boundary_scan(theta2: float, B1: float, theta1_range: tuple[float, float], step: float = 0.001,
                          family: Family = Family.UMBRELLA_MOON1, cfg: IslandConfig = SCAN_ISLAND_CONFIG,
                          threads: int = 1) -> BoundaryEstimate:
    """Bisect on the island verdict along ``theta1`` until the bracket is ``step`` wide.

    The returned bracket has width exactly ``step`` (it is aligned to the
    low end of the range).
    """
    lo, hi = map(float, theta1_range)
    if not hi > lo:
        raise ValueError("theta1_range must be increasing")

    def verdict(theta1):
        spec = moon_spec_for_theta(theta1, theta2, B1, family)
        report = island_detect(build_table(spec), cfg, threads)
        log.info("theta1=%.6f theta2=%.6f B1=%g regular=%.4f", theta1, theta2, B1, report.regular_fraction)
        return report.islands_found

    v_lo, v_hi = verdict(lo), verdict(hi)
    if v_lo == v_hi:
        raise NoTransition(f"same verdict ({v_lo}) at theta1={lo} and theta1={hi}")
    # bisect on the integer lattice lo + i*step so the final bracket is exactly one step
    i_lo, i_hi = 0, max(1, math.ceil((hi - lo) / step - 1e-9))
    at = lambda i: min(lo + i * step, hi)
    while i_hi - i_lo > 1:
        i_mid = (i_lo + i_hi) // 2
        if verdict(at(i_mid)) == v_lo:
            i_lo = i_mid
        else:
            i_hi = i_mid
    return BoundaryEstimate(theta2, at(i_lo), at(i_hi), B1, v_lo, v_hi)


def lyapunov_curve(template: TableSpec, B_values, cfg: LyapunovConfig = LyapunovConfig(), threads: int = 1):
    """``lambda_bar`` across ``B`` for a fixed family, ``R`` and ``B1``.

    Returns ``(points, skipped)``: ``points`` holds ``(B, LyapunovResult)``
    pairs and ``skipped`` lists the ``B`` values that gave no valid table.
    """
    points, skipped = [], []
    for B in B_values:
        try:
            table = build_table(replace(template, B=float(B)))
        except InvalidSpec as exc:
            log.info("skipping B=%g: %s", B, exc)
            skipped.append(float(B))
            continue
        points.append((float(B), scaled_lyapunov_result(table, cfg, threads)))
    return points, skipped
