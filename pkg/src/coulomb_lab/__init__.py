"""Numerical laboratory for Coulomb-gauge geometry of SU(2) connections on a slab.

The package discretizes algebra-valued forms on T^2 x [0, 1] with a
normal-adapted metric, solves the covariant Dirichlet Laplacian, builds the
Coulomb projector and curvature, checks the boundary identities satisfied by
wedge-dot products and brackets, constructs explicit wedge-dot realizations
of 0-forms, and computes holonomy of small loops of connections.
"""
from .lie import (
    AlgebraDescriptor,
    BasisDecomposition,
    DomainError,
    GroupElement,
    LieElement,
    ShapeError,
    ValidationError,
    adjoint_action,
    bracket,
    commutator_decompose,
    su2,
    trace_inner,
)
from .geometry import (
    BoundaryField,
    DomainGrid,
    GeometryError,
    MetricSpec,
    ResolutionError,
    build_grid,
    flat_metric,
    load_metric_config,
    mean_curvature_H,
    mean_curvature_tau,
    normal_derivative,
    warped_metric,
)
from .forms import (
    FormField,
    L2InnerProduct,
    codifferential,
    covariant_d,
    covariant_d_star,
    exterior_d,
    laplacian,
    wedge_dot,
)
from .solver import (
    ConnectionState,
    DegeneracyError,
    SolveReport,
    SolverError,
    fourier_green,
    green,
    poincare_estimate,
    scalar_green,
)
from .bundle import (
    GaugeFixError,
    GaugeTransform,
    HorizontalForm,
    boundary_operator_T,
    certify_horizontal,
    connection_form,
    coulomb_curvature,
    coulomb_gauge_fix,
    gauge_act,
    horizontal_project,
    verify_bct,
    verify_smooth1,
)
from .spans import (
    BumpProfile,
    SpanCertificate,
    boundary_realize,
    decompose_gauge_element,
    interior_realize,
    interior_span,
    realize_boundary_data,
)
from .holonomy import (
    ConnectionLoop,
    HolonomyResult,
    curvature_holonomy_study,
    horizontal_lift,
)

__version__ = "0.1.0"
