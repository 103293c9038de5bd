"""Behavioral pair-distances for tabular decision processes.

Three routes to the same family of metrics: exact fixed-point iteration,
convergent sampled updates, and a trained neural approximant, plus the
environments, audits, and file plumbing to compare them.
"""

__version__ = "0.1.0"

from .approx import (
    AdamState,
    ApproxNet,
    Representation,
    TrainBatch,
    TrainConfig,
    TrainingLog,
    build_batch,
    build_representation,
    compute_target,
    load_net,
    load_train_config,
    loss_and_gradient,
    make_representation,
    net_distance,
    net_metric_matrix,
    save_net,
    train,
)
from .envs import (
    GridLayout,
    NoiseModel,
    build_gridworld,
    build_pessimism_mdp,
    default_layout,
    duplicate_mdp,
    embed_xy,
    load_layout,
    mirror_state_map,
    parse_layout,
    random_deterministic_mdp,
)
from .evaluation import (
    BoundAudit,
    Clustering,
    ErrorReport,
    aggregate,
    audit_bounds,
    metric_errors,
    write_clustering_csv,
    write_error_curve_csv,
    write_training_log_csv,
)
from .exact import (
    SolverReport,
    apriori_sweep_bound,
    bisim_backup,
    lax_bisim_backup,
    metric_violations,
    policy_bisim_backup,
    read_metric_csv,
    solve_fixed_point,
    stochastic_bisim_backup,
    write_metric_csv,
)
from .mdp import (
    DeterministicMdp,
    DeterministicPolicy,
    StochasticMdp,
    greedy_policy,
    load_mdp,
    load_policy,
    mdp_from_dict,
    mdp_to_dict,
    save_mdp,
    save_policy,
    validate,
    validate_policy,
    value_iteration_optimal,
    value_iteration_policy,
)
from .sampled import (
    CoverageReport,
    PairSampler,
    RunReport,
    SampledEstimate,
    TransitionPair,
    coverage_check,
    run_sampled,
    sampled_update,
)
from .wasserstein import (
    TransportPlan,
    wasserstein_deterministic,
    wasserstein_dual,
    wasserstein_primal,
)

__all__ = [name for name in dir() if not name.startswith("_")]
