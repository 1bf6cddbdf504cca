"""Perfect samplers for hard-sphere Gibbs point processes on the unit cube.

Provides naive acceptance-rejection, importance-sampling AR variants
(exact 1-d, grid-based, random-radius with exponential twisting), three
dominated coupling-from-the-past samplers, and estimators for comparing
them all against each other and against closed-form small cases.
"""

from .dcftp import (LOSS_SYSTEM, WITH_SWAPS, WITHOUT_SWAPS, BoundingPair,
                    EventStream, dcftp_sample, extend_backward,
                    init_dominating, run_bounds)
from .errors import (DegenerateTiltError, HardSphereError,
                     InsufficientDataError, SamplerTimeoutError,
                     StabilityViolationError, UsageError)
from .estimators import (Estimate, ExperimentResult, ExperimentRow, PRESETS,
                         acceptance_identity_check, chi_square_homogeneity,
                         count_histogram, estimate_pno, insertion_probability,
                         make_sampler, preset_space, run_experiment,
                         sample_counts, validation_battery, work_per_sample)
from .geometry import (EUCLIDEAN, TORUS, Configuration, SpaceSpec, Sphere,
                       distance, gamma_d, gamma_prime, is_acceptable,
                       mean_nn_distance, overlaps, sphere_volume)
from .radius import (ConstantRadius, RadiusLaw, TiltSpec, TwoPointRadius,
                     UniformRadius, log_mgf, log_mgf_derivative, lr_factor,
                     sample_radius, sample_tilted, solve_tilt)
from .samplers import (BlockedRegion1D, GridState, RunStats, grid_is_ar,
                       is_ar_exact_1d, naive_ar, optimal_eps, random_radius_is)
from .seeding import spawn_rng
from .weights import (FIXED_RADIUS_IS, GRID_IS, NAIVE_UNIT, RANDOM_RADIUS_IS,
                      WeightTable, build_weights, optimal_rho, sample_M,
                      sample_component)

__version__ = "0.1.0"
