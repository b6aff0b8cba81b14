"""hardgrid: hard-constraint point processes via geometric hard-core models.

Discretizes continuous hard-constraint models (hard spheres,
Widom-Rowlinson, general q-type interactions) onto grid or random point
sets, estimates and samples the resulting hard-core models, and verifies
the discretization error and concentration behaviour against exact oracles.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ConfigError,
    Fugacities,
    InteractionMatrix,
    ModelSpec,
    Region,
    VolumeExclusionMatrix,
    ball_volume,
    check_clique_condition,
    check_uniform_condition,
    log_z_upper_bound,
    model_from_config,
    volume_exclusion_matrix,
)
from .discretize import (  # noqa: F401
    Allocation,
    CanonicalPointSet,
    HardCoreGraph,
    HypercubePartitioning,
    RandomPointSet,
    build_graph,
    canonical_allocate,
    degree_bound,
    discretization_error_factor,
    lattice_points_in_ball,
    load_graph,
    partition_allocation_from_random,
    resolution_for_error,
    smallest_feasible_resolution,
)
from .hardcore import (  # noqa: F401
    LogWeight,
    exact_log_z,
    exact_log_z_1d,
    exact_marginals,
    multiset_log_z,
    naive_log_z,
    tree_threshold,
)
from .glauber import (  # noqa: F401
    ChainState,
    estimate_unoccupied,
    glauber_step,
    sample,
    sample_many,
    step_count,
)
from .estimate import (  # noqa: F401
    estimate_log_z_mcmc,
    estimate_log_z_weitz,
    weitz_occupation_ratio,
)
from .continuous import (  # noqa: F401
    ContinuousConfiguration,
    OracleEstimate,
    is_valid,
    oracle_log_z_mc,
    perturb,
    sample_continuous,
    sample_continuous_batch,
    sampling_resolution,
    tonks_log_z,
    tonks_mean_particles,
)
from .experiments import (  # noqa: F401
    concentration_trial,
    expectation_check,
    hypercube_partitioning_size,
    modified_markov_bound,
    required_points,
    tightness_check,
)


def set_threads(n: int) -> None:
    """Cap worker threads for compiled parallel loops (numerics unaffected)."""
    import numba

    numba.set_num_threads(max(1, int(n)))
