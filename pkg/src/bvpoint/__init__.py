"""Maximal functions, Poincare inequalities and BV certificates on finite metric measure spaces."""

from .audit import AuditResult, MalformedCertificate, audit_certificate
from .characterization import (
    CharacterizationCertificate,
    HypothesisError,
    PointwiseReport,
    ProofConstants,
    ProofTrace,
    build_proof_trace,
    check_pointwise,
    check_sobolev_pointwise,
    measure_from_density,
    poincare_from_pointwise,
    proof_constants,
)
from .geometry import (
    check_geodesic_lemma,
    doubling_constant,
    doubling_dimension,
    geometry_report,
    length_metric,
    quasiconvexity_constant,
    small_ball_check,
)
from .maximal import (
    ball_average,
    check_weak_type,
    maximal_function,
    maximal_function_measure,
    restricted_maximal,
    restricted_maximal_measure,
    weak_type_constant,
)
from .space import (
    Ball,
    MetricMeasureSpace,
    SpaceError,
    ball,
    candidate_radii,
    load_space,
    space_from_document,
    space_to_document,
)
from .variation import (
    PoincareReport,
    check_ball_poincare,
    total_variation,
    upper_gradient_check,
    variation_measure,
)

__all__ = [name for name in dir() if not name.startswith("_")]
