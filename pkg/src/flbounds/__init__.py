"""Desk-scale federated learning lab for two-level generalization:
simulate FedAvg over a superclient/supersample construction, estimate
conditional mutual information from loss tables, and evaluate
information-theoretic generalization bounds against unbiased gap
estimators."""

from .bounds import (
    CmiEstimates,
    FastRateConstants,
    FastRateResult,
    bregman_aggregation_bound,
    comm_constraint_bound,
    convex_smooth_bound,
    dp_bound,
    fastrate_bound,
    heterogeneity_kl_bound,
    solve_c_max,
    sqrt_ecmi_bound,
)
from .construction import (
    SelectionAssignment,
    SuperClientGrid,
    SuperSampleTensor,
    build_superclient,
    build_supersamples,
    draw_selection,
    materialize_training_sets,
)
from .distributions import (
    ClientDistribution,
    FixedDataset,
    MetaDistribution,
    ShardPlan,
    kl_population_vs_client,
    load_idx,
    sample_instance,
    shard_partition,
)
from .errors import (
    CapabilityError,
    DomainError,
    FormatError,
    ParameterError,
    StructuralError,
)
from .harness import (
    BoundSettings,
    EstimationProtocol,
    ExperimentConfig,
    ExperimentReport,
    run_experiment,
    run_sweep,
    write_report,
    write_sweep_report,
)
from .losstables import (
    CmiSampleTable,
    LossTensor,
    estimate_og,
    estimate_pg,
    evaluate_loss_tensor,
    extract_cmi_samples,
)
from .mi import plugin_cmi, plugin_mi
from .models import Hypothesis, LossSpec, eval_loss, quantize_model, surrogate_gradient
from .seeding import SeedPath
from .training import TrainConfig, aggregate_average, local_train, run_protocol

__version__ = "0.1.0"
