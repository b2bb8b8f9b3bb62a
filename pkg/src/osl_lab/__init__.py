"""Numerical laboratory for linear cocycles over ergodic dynamics.

Finite-scale Lyapunov spectra through exterior-power norm growth,
Oseledets filtrations and decompositions from singular-value geometry,
avalanche-time certification of direction stability along orbits, and
empirical large-deviation and perturbation-continuity measurements.
"""

from ._kernels import USING_NUMBA
from .cocycle import Cocycle, IterateResult, catalog
from .dynamics import (BernoulliSystem, MarkovSystem, RotationSystem,
                       birkhoff_average, sample_phases, step)
from .grassmann import (Decomposition, Flag, Subspace, alignment,
                        complement_flag, flag_distance, intersect,
                        min_angle_sine, project_decomposition, project_flag,
                        refines, subspace_distance, transversality)
from .linalg import (ScaledMatrix, SingularData, exterior_power, gap_ratio,
                     most_expanding, most_expanding_flag, pseudo_inverse,
                     relative_distance, rift, svd)
from .lyapunov import (GapPattern, SpectrumEstimate, detect_gap_pattern,
                       estimate_L1, estimate_spectrum, fekete_diagnostic,
                       lp_bound_estimate)
from .oseledets import (AvalancheSchedule, PartialDirection, ap_check,
                        avalanche_times, convergence_rate, doubling_sequence,
                        finite_direction, growth_rate_along,
                        invariance_residual, oseledets_decomposition,
                        oseledets_filtration)
from .ldt import (ContinuityRecord, DeviationProfile, base_deviation_measure,
                  continuity_experiment, exceptional_set_frequency,
                  fiber_deviation_measure, modulus_fit,
                  speed_of_convergence_check)

__version__ = "0.1.0"
