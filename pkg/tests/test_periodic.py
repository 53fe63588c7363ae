import math

import numpy as np
import pytest

from umbrella_billiards import (
    InvalidSpec,
    NoConvergence,
    NotFound,
    NotPeriodic,
    PhasePoint,
    StabilityClass,
    TableSpec,
    axial_two_periodic,
    billiard_map,
    boundary_eval,
    build_table,
    classify,
    classify_trace,
    radial_orbit,
    radial_orbits,
    refine_periodic,
    search_periodic,
    split_pair,
)
from umbrella_billiards.periodic import power, residual


def axial_trace(B):
    # product of the two symmetric-lemon tangent matrices, closed form
    return 2 * (2 * (B - 1) ** 2 - 1)


@pytest.mark.parametrize("B", [0.5, 0.75, 1.0, 1.35, 1.58])
def test_symmetric_lemon_axial_trace(B):
    spec = TableSpec("lemon", 1, B)
    orbit = classify(build_table(spec), axial_two_periodic(spec), 2)
    assert orbit.trace == pytest.approx(axial_trace(B), abs=1e-9)
    expected = StabilityClass.PARABOLIC if B == 1.0 else StabilityClass.ELLIPTIC
    assert orbit.classification is expected
    assert orbit.residual < 1e-9


def test_parabolic_anchor():
    spec = TableSpec("lemon", 1, 1)
    orbit = classify(build_table(spec), axial_two_periodic(spec), 2)
    assert abs(abs(orbit.trace) - 2) < 1e-9


def test_axial_points_on_both_circles():
    spec = TableSpec("lemon", 1, 1.35)
    table = build_table(spec)
    x = axial_two_periodic(spec)
    ev = billiard_map(table, x)
    pts = sorted([tuple(boundary_eval(table, x.s)[0]), tuple(boundary_eval(table, ev.next.s)[0])])
    np.testing.assert_allclose(pts, [(0.35, 0.0), (1.0, 0.0)], atol=1e-12)
    assert ev.free_path == pytest.approx(0.65, abs=1e-12)


def test_axial_thin_limit():
    spec = TableSpec("lemon", 1, 1.999)
    table = build_table(spec)
    assert billiard_map(table, axial_two_periodic(spec)).free_path == pytest.approx(0.001, abs=1e-12)


def test_axial_needs_base_family():
    with pytest.raises(InvalidSpec):
        axial_two_periodic(TableSpec("umbrella_lemon", 1, 1.35, 0.1))


def test_circle_diameter_parabolic():
    table = build_table(TableSpec("circle"))
    orbit = classify(table, PhasePoint(0.0, math.pi / 2), 2)
    assert orbit.trace == pytest.approx(2.0, abs=1e-12)
    assert orbit.classification is StabilityClass.PARABOLIC


@pytest.mark.parametrize("trace,cls", [
    (2.5, StabilityClass.HYPERBOLIC),
    (-2.0000001, StabilityClass.HYPERBOLIC),
    (-2.0 + 1e-9, StabilityClass.PARABOLIC),
    (1.9, StabilityClass.ELLIPTIC),
])
def test_classify_trace_band(trace, cls):
    assert classify_trace(trace) is cls


def test_refine_from_perturbed_seed():
    spec = TableSpec("lemon", 1, 1.35)
    table = build_table(spec)
    x = axial_two_periodic(spec)
    y = refine_periodic(table, PhasePoint(x.s + 1e-4, x.theta), 2)
    assert math.remainder(y.s - x.s, table.total_length) == pytest.approx(0, abs=1e-9)
    assert y.theta == pytest.approx(x.theta, abs=1e-9)


def test_refine_rejects_far_seed():
    table = build_table(TableSpec("lemon", 1, 1.35))
    with pytest.raises(NoConvergence):
        refine_periodic(table, PhasePoint(0.4, 0.3), 2)


def test_classify_rejects_non_periodic():
    table = build_table(TableSpec("moon", 1.2, 1.5))
    with pytest.raises(NotPeriodic):
        classify(table, PhasePoint(0.7, 1.1), 3)


def test_trace_cyclic_and_reversal_invariance():
    spec = TableSpec("lemon", 1, 1.58)
    table = build_table(spec)
    orbits = search_periodic(table, 6)
    assert orbits
    for orbit in orbits:
        for p in orbit.cycle:
            M = power(table, p, 6)[3]
            assert np.trace(M) == pytest.approx(orbit.trace, abs=1e-8)
        rev = orbit.reversed()
        assert residual(table, rev.cycle[0], 6) < 1e-8
        M = power(table, rev.cycle[0], 6)[3]
        assert np.trace(M) == pytest.approx(orbit.trace, abs=1e-8)


def test_period_six_orbits_exist():
    orbits = search_periodic(build_table(TableSpec("lemon", 1, 1.58)), 6)
    assert any(o.period == 6 and o.residual < 1e-9 for o in orbits)
    assert {o.classification for o in orbits} >= {StabilityClass.ELLIPTIC}


def test_trace_matches_fd_of_power():
    spec = TableSpec("lemon", 1, 1.58)
    table = build_table(spec)
    x = search_periodic(table, 6)[0].cycle[0]
    h = 1e-7
    L = table.total_length
    cols = []
    for e in ((h, 0.0), (0.0, h)):
        a = power(table, PhasePoint(x.s + e[0], x.theta + e[1]), 6)[0]
        b = power(table, PhasePoint(x.s - e[0], x.theta - e[1]), 6)[0]
        cols.append([math.remainder(a.s - b.s, L) / (2 * h), (a.theta - b.theta) / (2 * h)])
    fd = np.array(cols).T
    M = power(table, x, 6)[3]
    assert np.trace(fd) == pytest.approx(np.trace(M), abs=1e-5)


# -- split pair ----------------------------------------------------------------

@pytest.mark.parametrize("B1", [1e-2, 1e-4, 1e-7])
def test_split_pair_two_elliptic(B1):
    orbits = split_pair(build_table(TableSpec("umbrella_lemon", 1, 1.35, B1)))
    assert len(orbits) == 2
    assert all(o.classification is StabilityClass.ELLIPTIC for o in orbits)
    assert all(o.period == 2 for o in orbits)


def test_split_pair_separation_scales_with_B1():
    ladder = [10.0 ** -k for k in range(1, 8)]
    seps = []
    for B1 in ladder:
        table = build_table(TableSpec("umbrella_lemon", 1, 1.35, B1))
        a, b = split_pair(table)
        seps.append(abs(math.remainder(a.cycle[0].s - b.cycle[0].s, table.total_length)))
    assert all(x > y for x, y in zip(seps, seps[1:]))
    # of order B1
    for B1, sep in zip(ladder, seps):
        assert 0.05 * B1 < sep < 5 * B1


def test_split_pair_absent_for_wide_lemon():
    # at B = 0.75 no 2-periodic orbit survives the deformation; see the ledger
    with pytest.raises(NotFound):
        split_pair(build_table(TableSpec("umbrella_lemon", 1, 0.75, 0.05)))


def test_split_pair_needs_umbrella_lemon():
    with pytest.raises(InvalidSpec):
        split_pair(build_table(TableSpec("lemon", 1, 1.35)))


# -- radial orbits ---------------------------------------------------------------

def _check_radial(table, orbit, m):
    assert orbit.period == 2 * (m + 1)
    assert orbit.residual < 1e-9
    perpendicular = [p for p in orbit.cycle if abs(p.theta - math.pi / 2) < 1e-7]
    assert perpendicular
    for p in perpendicular:
        arc = table.arcs[table.arc_index(p.s)]
        assert not arc.focusing
        # the extended segment passes through the dispersing circle's centre
        point, tangent, _ = boundary_eval(table, p.s)
        normal = np.array([-tangent[1], tangent[0]])
        to_centre = np.asarray(arc.center) - point
        assert abs(normal[0] * to_centre[1] - normal[1] * to_centre[0]) < 1e-7


def test_radial_orbit_moon():
    table = build_table(TableSpec("moon", 1.2, 1.2))
    for m in (2, 3):
        _check_radial(table, radial_orbit(table, m), m)


def test_radial_orbit_persists_under_umbrella():
    table = build_table(TableSpec("umbrella_moon1", 1.2, 1.2, 0.01))
    _check_radial(table, radial_orbit(table, 2), 2)


def test_radial_orbits_are_distinct():
    table = build_table(TableSpec("moon", 1.2, 1.5))
    orbits = radial_orbits(table, 3)
    starts = [(round(o.cycle[0].s, 6), round(o.cycle[0].theta, 6)) for o in orbits]
    assert len(set(starts)) == len(starts)


def test_single_slide_is_only_the_axial_orbit():
    # two perpendicular segments through one centre force a perpendicular middle hit
    with pytest.raises(NotFound):
        radial_orbit(build_table(TableSpec("moon", 1.2, 1.2)), 1)


def test_radial_orbit_impossible_m():
    with pytest.raises(NotFound):
        radial_orbit(build_table(TableSpec("moon", 1.2, 0.6)), 60)


def test_radial_needs_moon():
    with pytest.raises(InvalidSpec):
        radial_orbit(build_table(TableSpec("lemon", 1, 1.35)), 1)
