"""Numerical workbench for Liouville conformal field theory on the sphere.

Exact-formula side: the Upsilon function, the three-point structure
constant, and Virasoro conformal blocks.  Probabilistic side: Gaussian free
fields, multiplicative chaos, and Monte Carlo vertex correlators.  The two
meet in the cross-validation experiments exposed through the CLI.
"""

from .errors import (
    LiouvilleError, DomainError, AccuracyError, ResourceError,
    DegeneracyError, ConfigError,
)
from .params import (
    CFTParams, derive_params, conformal_weight, SeibergReport, check_seiberg,
    InsertionSet, make_insertions, INFINITY_POINT, is_infinity,
)
from .geometry import round_density, stereo_to_unit, chordal_distance
from .special import (
    ZETA_PRIME_MINUS1, DET_PRIME_SPHERE, log_l, unit_volume_c0,
    QuadratureSpec, UpsilonEvaluator, get_evaluator,
    DozzValue, dozz, three_point_fixed,
)
from .blocks import (
    YoungDiagram, diagrams_at_level, VermaEngine, GramLevel, gram_level,
    nearest_kac_degeneration, descendant_3pt, BlockEval, block_coefficients,
    block, BlockCoefficientCache,
)
from .gff import (
    CircleFieldSpec, SphereFieldSpec, FieldSample, ChaosMeasure, MCEstimate,
    rng_stream, sample_circle_field, sample_sphere_field, chaos_measure,
    chaos_moment, total_mass_samples,
)
from .correlators import (
    CorrelatorJob, correlator_mc, negative_moment_mc, correlator_ratio_mc,
    sphere_covariance, z_samples, z_samples_common,
)
from .bootstrap import (
    SpectralQuadrature, BootstrapResult, CrossingReport, spectral_integrand,
    four_point_bootstrap, four_point_ratio, crossing_check,
)
from .cli import ExperimentConfig, RunRecord, compare, run

__version__ = "0.1.0"
