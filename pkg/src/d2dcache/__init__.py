"""Mobility-aware caching for device-to-device content delivery.

Analytic data offloading ratio (beta approximation of communication
durations), greedy and exact cache placement, Monte Carlo simulation and
contact-trace fitting.
"""

from .analytics import (
    BetaApprox,
    CommMoments,
    SystemConfig,
    beta_match,
    comm_expectation,
    comm_moments,
    comm_variance_closed,
    comm_variance_integral,
    overall_ratio,
    per_request_ratio,
    per_request_ratio_ignoring_duration,
    zipf_requests,
)
from .estimators import (
    ContactRateEstimator,
    GreedyPlacement,
    OptimalPlacement,
    PopularPlacement,
    RandomPlacement,
)
from .instancegen import GammaSpec, sample_mobility, sweep_contact_duration
from .mobility import (
    ContactTrace,
    MobilityModel,
    PairParams,
    PairTimeline,
    fit_from_trace,
    read_trace,
    sample_pair_timeline,
    scale_speed,
    stationary_noncontact_prob,
    synthesize_trace,
)
from .placement import greedy_place, marginal_gain, optimal_place, popular_place, random_place
from .simulator import OffloadReport, SimScenario, replay_trace, simulate_resource_limited, simulate_union
from .special import inc_beta

__version__ = "0.1.0"
