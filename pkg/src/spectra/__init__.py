"""Optimal spectrum management for Gaussian interference channels.

Users treat interference as noise; allocations are piecewise-flat PSD
functions over the unit band.
"""
__version__ = "0.1.0"

from .channel import (ChannelSpec, Piece, RawChannelSpec, SpecError, SpectrumAllocation,
                      flat_channel, load_spec, normalize, rate_density, refine,
                      spec_from_json, symmetric_two_user, total_rates, weighted_rate)
from .envelope import (CaratheodoryDecomposition, GridConfig, HullCache, HullFunction,
                       build_hull, build_hulls, decompose, evaluate, weighted_sum_rate)
from .fdma import (fdma_decision, fdma_power_region_threshold, flat_fdma_reallocate,
                   pairwise_fdma_condition, reallocation_gain)
from .optimizer import OptimizationResult, SolverConfig, dual_value, reconstruct_allocation, solve
from .oracle import OracleConfig, duality_gap, exhaustive_best, property_suite
from .symmetric import (build_allocation_flat, f_star, h_star, r_star_flat,
                        solve_symmetric_selective, solve_tangency)
