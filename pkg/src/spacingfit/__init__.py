"""Level-spacing statistics for intermediate spectra with missing levels."""

__version__ = "0.1.0"

from .ensemble import (
    EnsembleConfig,
    TridiagonalMatrix,
    Spectrum,
    ObservedSequence,
    sample_beta_hermite,
    eigenvalues,
    derive_seed,
    unfold_semicircle,
    unfold_gaussian,
    thin,
)
from .stats import (
    SpacingSample,
    SpacingHistogram,
    spacings,
    histogram,
    chi2_distance,
    empirical_sigma,
)
from .model import (
    ModelParams,
    BrodyCoefficients,
    ModelCurve,
    brody_coefficients,
    brody_ps,
    p1,
    p2,
    gaussian_term,
    ps_missing,
    model_curve,
    sample_spacings,
    solved_bn,
    default_sigma_table,
)
from .calibration import (
    SigmaTable,
    calibrate_sigma,
    sigma_lookup,
    solve_bn,
    solve_bn_report,
    build_bn_table,
    save_bn_table,
    load_bn_table,
    save_sigma_table,
    load_sigma_table,
)
from .fit import (
    FitResult,
    FitDistribution,
    fit_ps,
    ensemble_fit,
)

__all__ = [
    "EnsembleConfig", "TridiagonalMatrix", "Spectrum", "ObservedSequence",
    "sample_beta_hermite", "eigenvalues", "derive_seed", "unfold_semicircle",
    "unfold_gaussian", "thin",
    "SpacingSample", "SpacingHistogram", "spacings", "histogram",
    "chi2_distance", "empirical_sigma",
    "ModelParams", "BrodyCoefficients", "ModelCurve", "brody_coefficients",
    "brody_ps", "p1", "p2", "gaussian_term", "ps_missing", "model_curve",
    "sample_spacings", "solved_bn", "default_sigma_table",
    "SigmaTable", "calibrate_sigma", "sigma_lookup", "solve_bn",
    "solve_bn_report", "build_bn_table", "save_bn_table", "load_bn_table",
    "save_sigma_table", "load_sigma_table",
    "FitResult", "FitDistribution", "fit_ps", "ensemble_fit",
]
