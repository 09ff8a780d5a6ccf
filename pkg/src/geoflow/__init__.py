"""Numerical laboratory for geodesic flows on surfaces."""

from .metrics import (
    SurfaceChart,
    CotangentState,
    UnitCotangentState,
    MetricField,
    ConformalBump,
    DomainError,
    eval_hamiltonian,
    hamiltonian_vector_field,
    legendre_transform,
    inverse_legendre,
    gaussian_curvature,
    apply_conformal_bump,
    c2_distance,
    shell_distance,
    unit_state,
    flat_torus,
    torus_of_revolution,
    surface_of_revolution,
    sphere_band,
)
from .integrator import (
    FlowSettings,
    MonodromyRecord,
    IntegrationError,
    flow,
    flow_with_monodromy,
    flow_samples,
    renormalize_energy,
)
from .poincare import (
    PoincareError,
    NoReturnError,
    TransversalityError,
    OrbitSearchError,
    FrameError,
    CertificationError,
    TransversalSection,
    ClosedOrbit,
    OrbitClassification,
    HyperbolicityCertificate,
    coordinate_section,
    return_map,
    find_periodic_orbit,
    transversal_linear_poincare,
    classify_orbit,
    trace_map,
    trace_perturbation_sweep,
    certify_hyperbolic_set,
    local_manifold_seeds,
    orbit_report,
)
from .shadowing import (
    ChainError,
    PseudoGeodesic,
    Reparameterization,
    ShadowReport,
    SpecificationInstance,
    accumulated_time,
    build_chain,
    orbit_chain,
    chain_eval,
    validate_chain,
    identity_reparam,
    evaluate_shadow,
    shadow_search,
    weak_shadow_check,
    weak_shadow_search,
    specification_shadow_search,
    save_chain,
    load_chain,
    shadow_report_dict,
)
from .twist import (
    TwistMapParams,
    TwistStep,
    TwistPseudoOrbit,
    InvariantCircleEstimate,
    CircleAbsence,
    NonShadowCertificate,
    RotationNumberEstimate,
    TransitSearchError,
    EmbeddingError,
    annulus_distance,
    integrable_normal_form,
    perturbed_normal_form,
    standard_map,
    twist_step,
    rotation_number,
    detect_invariant_circle,
    circle_distance,
    build_climbing_pseudo_orbit,
    certify_non_shadowable,
    flat_section_coordinate_map,
    embed_as_pseudo_geodesic,
)

__version__ = "0.1.0"
