"""Stochastic collapse dynamics of a free particle.

Four mutually checking solution pathways of the linear stochastic
Schrodinger equation with position collapse (exact Green's kernel, Gaussian
parameter SDEs, non-self-adjoint spectral expansion, direct grid
integration) plus ensemble diagnostics.
"""

from .errors import (AlignmentError, CollapseError, ConfigError, CoverageError, DomainError, EstimationError,
                     InstabilityError, InvalidParameterError, KernelOverflowError, NumericError,
                     TruncationError, ValidityError)
from .params import (DerivedConstants, PhysParams, RegimeTimes, alpha_real_limits, alpha_tilde_real_limits,
                     derive_constants, regime_times)
from .paths import WienerPath, sample_increments, sample_path, trajectory_rng
from .state import GridSpec, GridState, compare_states, phase_aligned_distance, read_state_csv, write_state_csv
from .kernel import KernelCoefficients, apply_kernel, kernel_coefficients, kernel_moduli
from .gaussian import (AsymptoticState, GaussianState, evolve_asymptotic, evolve_gaussian, gaussian_distance,
                       psi_infinity)
from .spectral import expand_solution, expansion, projector_norms, recombine, t_bar
from .oracle import IntegratorConfig, run_oracle
from .analysis import (EnsembleStats, TrajectoryRecord, born_rule_stats, collapse_time, decay_fit,
                       diffusion_stats, gaussian_frame)

__version__ = "0.1.0"
