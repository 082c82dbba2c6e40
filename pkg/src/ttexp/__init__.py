"""Low-rank tensor-train approximation of exp(h) by Galerkin projection."""
from .als import (
    RankExplosionError,
    SolveConfig,
    SquaringInstabilityWarning,
    SolveReport,
    als_sweep,
    discrete_residual,
    exp_tt,
    normal_residual,
    scaled_exp_tt,
)
from .benchmarks import (
    GaussianDensitySpec,
    KLField,
    affine_exponent_tt,
    bayes_potential_tt,
    fourier_kl_field,
    fourier_kl_modes,
    gaussian_logdensity_tt,
    nystrom_kl,
    run_benchmark,
)
from .estimation import (
    ErrorReport,
    data_oscillation,
    dual_residual_norm,
    energy_error_oracle,
    expectation,
    mc_error_linf,
    mc_errors,
    univariate_reference,
)
from .estimator import ExpTT
from .galerkin import (
    ExponentTT,
    GalerkinSystem,
    assemble_W,
    assemble_b,
    assemble_system,
    build_B_m,
    build_derivative_op,
    build_initial_vector,
    build_multiplication_op,
    build_rhs,
    spatialize,
)
from .hermite import (
    BasisContext,
    QuadratureRule,
    diff_matrix,
    gauss_hermite,
    hermite_eval,
    multiply_coeffs,
    triple_product,
)
from .tt import (
    RankProfile,
    TTOperator,
    TTTensor,
    add,
    apply,
    concat_cores,
    dot,
    evaluate,
    from_dense,
    norm,
    rank_profile,
    round,
    scale,
    to_dense,
    tt_dofs,
)

__all__ = [
    "add",
    "affine_exponent_tt",
    "als_sweep",
    "apply",
    "assemble_b",
    "assemble_system",
    "assemble_W",
    "BasisContext",
    "bayes_potential_tt",
    "build_B_m",
    "build_derivative_op",
    "build_initial_vector",
    "build_multiplication_op",
    "build_rhs",
    "concat_cores",
    "data_oscillation",
    "diff_matrix",
    "discrete_residual",
    "dot",
    "dual_residual_norm",
    "energy_error_oracle",
    "ErrorReport",
    "evaluate",
    "exp_tt",
    "expectation",
    "ExponentTT",
    "ExpTT",
    "fourier_kl_field",
    "fourier_kl_modes",
    "from_dense",
    "GalerkinSystem",
    "gauss_hermite",
    "gaussian_logdensity_tt",
    "GaussianDensitySpec",
    "hermite_eval",
    "KLField",
    "mc_error_linf",
    "mc_errors",
    "multiply_coeffs",
    "norm",
    "normal_residual",
    "nystrom_kl",
    "QuadratureRule",
    "RankExplosionError",
    "rank_profile",
    "RankProfile",
    "round",
    "run_benchmark",
    "scale",
    "scaled_exp_tt",
    "SolveConfig",
    "SolveReport",
    "spatialize",
    "SquaringInstabilityWarning",
    "to_dense",
    "triple_product",
    "tt_dofs",
    "TTOperator",
    "TTTensor",
    "univariate_reference",
]

__version__ = "0.1.0"
