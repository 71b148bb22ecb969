"""Total variation denoising with a fractional interaction kernel.

The functional couples every pair of grid cells through the kernel
|x - y|^-(d+s) and a quadratic fidelity term. The package solves the
discrete problem with a certified first-order method and ships the
verification experiments: order and boundedness, coarea and
submodularity identities, level-set minimality, nonlocal curvature
references, first-variation slopes, and Holder modulus transfer.
"""

from .energy import (
    EnergyBreakdown,
    PerimeterResult,
    coarea_gap,
    fidelity,
    isoperimetric_ratio,
    localized_perimeter,
    perimeter,
    prescribed_energy,
    seminorm,
    submodularity_gap,
    total_energy,
)
from .geometry import (
    Boundary,
    CompetitorSpec,
    ElResidualReport,
    LevelSet,
    MarginReport,
    boundary_distance,
    boundary_from_mask,
    curvature_profile,
    el_residual,
    extract_boundary,
    first_variation_check,
    inclusion_curvature_check,
    levelset_minimality_margin,
    mean_curvature,
    superlevel_set,
    support_radius,
    translate_along_normal,
)
from .grid import Grid, ScalarField, load_field, save_field, synth_field
from .harness import (
    ConfigError,
    RunConfig,
    RunContext,
    config_from_dict,
    load_config,
    run_denoise,
    run_sweep,
    run_verify,
)
from .kernel import KernelSpec, PairWeights, build_pair_weights, tail_mass
from .regularity import (
    HolderEstimate,
    InheritanceReport,
    KeyInequalityReport,
    holder_seminorm,
    key_inequality_experiment,
    modulus_inheritance_report,
)
from .solver import (
    CertificateReport,
    DualField,
    SolveResult,
    SolverOptions,
    certificate_check,
    comparison_experiment,
    enumerate_minimizer,
    minimize,
    operator_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "CertificateReport",
    "CompetitorSpec",
    "ConfigError",
    "DualField",
    "ElResidualReport",
    "EnergyBreakdown",
    "Grid",
    "HolderEstimate",
    "InheritanceReport",
    "KernelSpec",
    "KeyInequalityReport",
    "LevelSet",
    "MarginReport",
    "PairWeights",
    "PerimeterResult",
    "RunConfig",
    "RunContext",
    "ScalarField",
    "SolveResult",
    "SolverOptions",
    "boundary_distance",
    "boundary_from_mask",
    "build_pair_weights",
    "certificate_check",
    "coarea_gap",
    "comparison_experiment",
    "config_from_dict",
    "curvature_profile",
    "el_residual",
    "enumerate_minimizer",
    "extract_boundary",
    "fidelity",
    "first_variation_check",
    "holder_seminorm",
    "inclusion_curvature_check",
    "isoperimetric_ratio",
    "key_inequality_experiment",
    "levelset_minimality_margin",
    "load_config",
    "load_field",
    "localized_perimeter",
    "mean_curvature",
    "minimize",
    "modulus_inheritance_report",
    "operator_norm",
    "perimeter",
    "prescribed_energy",
    "run_denoise",
    "run_sweep",
    "run_verify",
    "save_field",
    "seminorm",
    "submodularity_gap",
    "superlevel_set",
    "support_radius",
    "synth_field",
    "tail_mass",
    "total_energy",
    "translate_along_normal",
]
