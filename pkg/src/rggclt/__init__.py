"""Edge counts of high-dimensional random geometric graphs on Poisson input:
simulation, exact moments, normal-approximation bounds and diagnostics."""
from .numerics import LogValue, ball_intersection_volume, log_unit_ball_volume
from .model import (
    IntensitySchedule, ModelParams, Regime, canonical_delta, classify_regime, intensity_for_target_u,
    schedule_diagnostics,
)
from .point_process import FeasibilityError, PointConfiguration, derive_stream, expected_count, sample_configuration
from .edge_count import Strategy, count_edges, first_difference, kernel, second_difference
from .moments import exact_mean, variance_bounds, variance_exact
from .clt_bounds import gamma_mc, gamma_quadrature, gamma_upper, theorem_rate, wasserstein_upper

__version__ = "0.1.0"
