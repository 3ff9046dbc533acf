"""kavg: simulation and verification lab for repeated k-group averaging.

A length-n vector evolves by repeatedly replacing k uniformly chosen
coordinates with their mean.  This package simulates the chain at scale,
verifies its exact L2 contraction identity by brute-force enumeration in
rational arithmetic, and measures the mixing window and cutoff profile of
its L1 distance from consensus.
"""

__version__ = "0.1.0"

from .chain import (
    AveragingState,
    ChainParams,
    Mode,
    ParameterError,
    ScaleError,
    SubsetChoice,
    apply_group_average,
    derive_rng,
    read_replay_log,
    replay,
    run,
    run_trials,
    sample_k_subset,
    step,
    write_replay_log,
)
from .config import (
    ConfigFileError,
    ConfigKeyError,
    ConfigSyntaxError,
    config_to_dict,
    format_config,
    parse_config,
    parse_config_text,
)
from .experiments import (
    DEFAULT_MASTER_SEED,
    ConfigError,
    ConfigValueError,
    ExperimentConfig,
    HittingTime,
    SummaryStats,
    basis_vector,
    cutoff_profile,
    cutoff_steps,
    mixing_time_sweep,
    mixing_time_trial,
    normal_cdf,
    poisson_run,
    poisson_table,
    poisson_trials,
    summarize,
    theta_steps,
    theta_sweep,
    worker_count,
)
from .metrics import (
    MetricsSample,
    l1_deviation,
    l2_energy,
    martingale_ratio,
    predicted_l2,
    tau,
)
from .oracle import (
    ContractionReport,
    as_rational_vector,
    enumerate_k_subsets,
    exact_l_step_l2_expectation,
    exact_one_step_l2_expectation,
    exact_tau,
    verify_one_step_contraction,
)

__all__ = [name for name in dir() if not name.startswith("_")]
