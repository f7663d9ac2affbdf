"""Deterministic simulator for robust semi-supervised federated learning.

A small numpy library covering the full pipeline: a dense softmax classifier
with exact analytic gradients, the semi-supervised objectives (pseudo-label
cross-entropy on an arctan ramp, consistency regularization, a supervised-
model penalty), entropy-based sample selection, IID and Dirichlet non-IID
client partitioning, frequency-aware model aggregation, and the two
end-to-end training protocols (labels at the clients or at the server) plus
reference baselines. Runs are pure functions of their configuration and
seed.
"""

__version__ = "0.1.0"

from .aggregation import (
    FrequencyTracker,
    MixWeights,
    fedavg,
    fedfreq,
    fedfreq_weights,
    mix,
    record_selection,
)
from .config import ExperimentConfig, parse_config, serialize_config
from .data import (
    Dataset,
    PartitionPlan,
    StreamingShard,
    augment,
    gen_synthetic,
    load_cifar_bin,
    load_idx,
    partition_dirichlet,
    partition_iid,
    split_labeled_unlabeled,
    split_streaming,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateSelectionError,
    InvalidInputError,
)
from .nn import (
    Batch,
    MlpModel,
    ParamVector,
    cross_entropy,
    forward,
    gradient,
    kl_divergence,
    linear_combine,
    loss_and_gradient,
    one_hot,
    sgd_step,
    sq_prob_distance,
)
from .objectives import (
    SslHyperparams,
    baseline_client_loss_lac,
    baseline_client_loss_las,
    lambda_t,
    server_loss,
    sup_loss,
    unsup_loss,
)
from .orchestrator import (
    ClientState,
    RoundRecord,
    RunResult,
    ServerState,
    evaluate,
    run_baseline,
    run_experiment,
    run_experiment_full,
    run_labels_at_client,
    run_labels_at_server,
    sample_clients,
)
from .selection import SelectionStrategy, entropy, pseudo_label, select
