"""Billiards in tables bounded by circular arcs: lemons, moons and their umbrella variants."""
from .tables import (
    ArcSegment,
    BilliardTable,
    Family,
    InvalidSpec,
    OutOfRange,
    TableSpec,
    ThetaPair,
    boundary_eval,
    build_table,
    is_valid,
    locate,
    max_offset,
    table_of_theta,
    theta_geometry,
    theta_of_table,
)
from .dynamics import (
    CollisionEvent,
    CornerHit,
    Grazing,
    NumericFailure,
    Orbit,
    PhasePoint,
    SingularityError,
    Termination,
    billiard_map,
    iterate,
    map_many,
    measure_density,
    reverse,
    tangent_many,
    tangent_map,
)
from .periodic import (
    NoConvergence,
    NotFound,
    NotPeriodic,
    PeriodicOrbit,
    SingularOrbit,
    StabilityClass,
    axial_two_periodic,
    classify,
    classify_trace,
    radial_orbit,
    radial_orbits,
    refine_periodic,
    search_periodic,
    split_pair,
)
from .chaos import (
    BoundaryEstimate,
    SCAN_ISLAND_CONFIG,
    DegenerateSeed,
    IslandConfig,
    IslandReport,
    LyapunovConfig,
    LyapunovResult,
    NoTransition,
    ergodic_boundary_scan,
    grid_seeds,
    island_detect,
    lyapunov_curve,
    lyapunov_indicator,
    lyapunov_many,
    moon_spec_for_theta,
    scaled_lyapunov,
    scaled_lyapunov_result,
)

__version__ = "0.1.0"
