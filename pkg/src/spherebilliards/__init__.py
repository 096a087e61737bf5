"""Billiards in convex domains on positively curved spheres."""

__version__ = "0.1.0"

from .billiard import (  # noqa: E402
    Chord,
    ChordRecord,
    PhasePoint,
    billiard_map,
    chord_between,
    generating_partials,
    generating_value,
    inverse_map,
    iterate,
    twist_check,
)
from .errors import BilliardError, ConfigurationError, NumericalError  # noqa: E402
from .geometry import Metric, geodesic_distance  # noqa: E402
from .linearize import TangentMap, Wavefront, focusing_time, monodromy, step_tangent  # noqa: E402
from .manifolds import entropy_certificate, find_homoclinic, grow_branch, hyperbolic_frame  # noqa: E402
from .orbits import (  # noqa: E402
    Configuration,
    PeriodicOrbit,
    central_annulus_audit,
    find_birkhoff,
    mackay_meiss_trace,
    resonance_flag,
    rotation_tune,
    trace_response,
)
from .table import Table, build_table, curvature_at, normal_perturbation, normal_shift  # noqa: E402

__all__ = [
    "BilliardError",
    "Chord",
    "ChordRecord",
    "Configuration",
    "ConfigurationError",
    "Metric",
    "NumericalError",
    "PeriodicOrbit",
    "PhasePoint",
    "Table",
    "TangentMap",
    "Wavefront",
    "billiard_map",
    "build_table",
    "central_annulus_audit",
    "chord_between",
    "curvature_at",
    "entropy_certificate",
    "find_birkhoff",
    "find_homoclinic",
    "focusing_time",
    "generating_partials",
    "generating_value",
    "geodesic_distance",
    "grow_branch",
    "hyperbolic_frame",
    "inverse_map",
    "iterate",
    "mackay_meiss_trace",
    "monodromy",
    "normal_perturbation",
    "normal_shift",
    "resonance_flag",
    "rotation_tune",
    "step_tangent",
    "trace_response",
    "twist_check",
]
