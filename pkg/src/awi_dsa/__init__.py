"""Approximated Whittle index policies for dynamic spectrum access.

Channels are two-state Gilbert-Elliott chains observed through noisy,
multi-level CQI feedback.  The package provides belief maps, the closed-form
n-iteration index, an exact finite-horizon DP oracle, policies, a seeded
Monte-Carlo simulator and a command-line front end.
"""

from .belief import (
    ChannelBank,
    ChannelParams,
    DerivedChannelQuantities,
    active_update,
    bayes_filter,
    derived,
    observation_prob,
    passive_update,
    passive_update_k,
    steady_state,
)
from .exceptions import AwiError, BracketFailure, ConfigError, HorizonTooLarge, ZeroLikelihood
from .index import (
    INFINITE,
    AffineValue,
    ExpansionCoeffs,
    IndexKind,
    IndexResult,
    affine_value,
    approx_whittle,
    beta_bound,
    expansion_coeffs,
    first_crossing_time,
    imperfect_whittle,
    system_beta_bound,
)
from .oracle import (
    HorizonValue,
    LipschitzBound,
    PassiveTimeValue,
    ThresholdScan,
    finite_horizon_value,
    indexability_probe,
    lipschitz_bound,
    oracle_whittle,
    passive_time,
    threshold_scan,
)
from .policy import AWI, MYOPIC, RANDOM, PolicyKind, PolicySpec, TieBreak, myopic_index, select, update_beliefs
from .presets import PRESET_NAMES, preset_channels
from .sim import EpisodeTrace, RunStats, SystemConfig, paired_difference, run_episode, run_experiment

__version__ = "0.1.0"
