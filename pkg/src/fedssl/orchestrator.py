"""End-to-end federated training protocols and baseline runners.

Two protocols are implemented. With labels at the clients, every selected
client trains a supervised model on its labeled shard and an unsupervised
model on pseudo-labeled/augmented data, the server aggregates both streams
and mixes them with the previous global model. With labels at the server,
the server trains the supervised model itself each round and clients only
train the unsupervised one.

Baselines: supervised-only federated averaging, a single-model
semi-supervised combination, and a two-model variant whose global model is
the plain sum of the supervised and unsupervised parts.

Determinism: every random draw comes from a generator seeded with
(seed, purpose, ...) tuples, so a full run is a pure function of its
configuration:

    (seed, 0)        model initialization
    (seed, 1/2)      synthetic train / test data
    (seed, 3[, k])   labeled/unlabeled split (server, or per client k)
    (seed, 4)        client partition
    (seed, 5, k)     streaming sub-shards of client k
    (seed, 6, t)     client sampling in round t
    (seed, 7, t)     server-side training in round t
    (seed, 8, t, k)  client k's local update in round t

Clients within a round are independent; updates are consumed in ascending
client id so results do not depend on execution order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .aggregation import (
    FrequencyTracker,
    MixWeights,
    fedfreq_weights,
    mix,
    record_selection,
)
from .config import ExperimentConfig, resolve_data_path
from .data import (
    Dataset,
    StreamingShard,
    candidate_augmenter,
    gen_synthetic,
    load_cifar_bin,
    load_idx,
    pair_augmenters,
    partition_dirichlet,
    partition_iid,
    split_streaming,
    stratified_sample_indices,
)
from .errors import ConfigError, InvalidInputError
from .nn import Batch, MlpModel, ParamVector, forward, linear_combine, sgd_step
from .objectives import (
    SslHyperparams,
    baseline_client_loss_lac,
    baseline_client_loss_las,
    lambda_t,
    server_loss,
    sup_loss,
    unsup_loss,
    unsup_loss_at_weight,
)
from .selection import SelectionStrategy, pseudo_label_batch, select


# ---------------------------------------------------------------------------
# State and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClientState:
    """One client's local data."""

    id: int
    labeled: Dataset | None
    unlabeled: Dataset
    streaming: StreamingShard | None = None


@dataclass(frozen=True)
class ServerState:
    """Server-side models and bookkeeping between rounds."""

    global_params: ParamVector
    sup_params: ParamVector
    unsup_params: ParamVector
    tracker: FrequencyTracker
    round: int


@dataclass(frozen=True)
class RoundRecord:
    """Per-round metrics row."""

    round: int
    test_accuracy: float
    sup_loss: float
    unsup_loss: float
    lambda_t: float
    selected: tuple[int, ...]
    weights: tuple[float, ...]
    wall_ms: int


@dataclass(frozen=True)
class RunResult:
    """Everything a run produces: metric rows plus the final global model."""

    records: list[RoundRecord]
    final_model: ParamVector
    layer_dims: tuple[int, ...]


# ---------------------------------------------------------------------------
# Small shared pieces
# ---------------------------------------------------------------------------


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(key)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_clients(num_clients: int, participation: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement of max(round(F*K), 1) client ids."""
    if not 0.0 < participation <= 1.0:
        raise InvalidInputError(f"participation {participation} not in (0, 1]")
    m = max(round_half_up(participation * num_clients), 1)
    return np.sort(rng.choice(num_clients, size=m, replace=False))


def evaluate(model: MlpModel, test_ds: Dataset) -> float:
    """Fraction of argmax predictions matching the labels (ties: lowest class)."""
    if test_ds.labels is None or len(test_ds) == 0:
        raise InvalidInputError("evaluation needs a nonempty labeled test set")
    preds = forward(model, test_ds.features).argmax(axis=1)
    return float((preds == test_ds.labels).mean())


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _hyperparams(cfg: ExperimentConfig) -> SslHyperparams:
    return SslHyperparams(
        lambda_s=cfg.lambda_s,
        lambda_l2=cfg.lambda_l2,
        participation=cfg.participation,
        num_clients=cfg.num_clients,
        batch_unlabeled=cfg.batch_unlabeled,
        epochs_unlabeled=cfg.epochs_unlabeled,
    )


def _layer_dims(cfg: ExperimentConfig, input_dim: int, num_classes: int) -> tuple[int, ...]:
    return (input_dim, *cfg.hidden, num_classes)


def _aggregation_weights(
    rule: str,
    tracker: FrequencyTracker,
    selected: np.ndarray,
    participation: float,
    num_clients: int,
) -> np.ndarray:
    """Weights actually applied when aggregating, summing to 1."""
    m = len(selected)
    if rule == "fedavg" or m == 1 or participation * num_clients <= 1.0:
        return np.full(m, 1.0 / m)
    weights = fedfreq_weights(tracker, selected.tolist(), participation, num_clients)
    total = weights.sum()
    if abs(total - 1.0) > 1e-9:
        weights = weights / total
    return weights


def _combine(weights: np.ndarray, models: list[ParamVector]) -> ParamVector:
    return linear_combine(list(zip(weights.tolist(), models)))


def _elapsed_ms(start: float, timing: bool) -> int:
    return int((time.perf_counter() - start) * 1000) if timing else 0


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


def load_train_test(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "synthetic":
        train = gen_synthetic(cfg.classes, cfg.dims, cfg.samples, cfg.spread, (cfg.seed, 1))
        test = gen_synthetic(cfg.classes, cfg.dims, cfg.test_samples, cfg.spread, (cfg.seed, 2))
        return train, test
    if cfg.dataset == "idx":
        train = load_idx(resolve_data_path(cfg.image_path), resolve_data_path(cfg.label_path))
        test = load_idx(
            resolve_data_path(cfg.test_image_path), resolve_data_path(cfg.test_label_path)
        )
        if train.num_classes != test.num_classes:
            # Inferred class counts can differ on small files; harmonize.
            c = max(train.num_classes, test.num_classes)
            train = Dataset(train.features, train.labels, c, train.image_shape)
            test = Dataset(test.features, test.labels, c, test.image_shape)
        return train, test
    train = load_cifar_bin([resolve_data_path(p) for p in cfg.cifar_paths])
    test = load_cifar_bin([resolve_data_path(p) for p in cfg.test_cifar_paths])
    return train, test


def _partition(cfg: ExperimentConfig, ds: Dataset):
    if cfg.mu_or_iid == "iid":
        return partition_iid(ds, cfg.num_clients, (cfg.seed, 4))
    return partition_dirichlet(ds, cfg.num_clients, float(cfg.mu_or_iid), (cfg.seed, 4))


def _maybe_streaming(cfg: ExperimentConfig, client_id: int, pool_size: int):
    if not cfg.streaming:
        return None
    if pool_size < 10:
        raise ConfigError(
            f"streaming: client {client_id} has only {pool_size} unlabeled samples"
        )
    return split_streaming(np.arange(pool_size), (cfg.seed, 5, client_id))


def prepare_labels_at_client(cfg: ExperimentConfig) -> tuple[list[ClientState], Dataset]:
    """Partition the training data and split each client shard into a labeled
    part of (at most) labeled-per-client samples plus an unlabeled rest."""
    train, test = load_train_test(cfg)
    plan = _partition(cfg, train)
    clients = []
    for k, shard_idx in enumerate(plan.assignments):
        shard = train.subset(list(shard_idx))
        n_lab = min(cfg.labeled_per_client, len(shard))
        rng = _rng(cfg.seed, 3, k)
        keep = stratified_sample_indices(shard.labels, n_lab, shard.num_classes, rng)
        rest = np.setdiff1d(np.arange(len(shard)), keep)
        labeled = shard.subset(keep)
        unlabeled = shard.subset(rest).without_labels()
        if len(labeled) == 0:
            raise ConfigError(f"client {k} received no labeled samples")
        clients.append(
            ClientState(k, labeled, unlabeled, _maybe_streaming(cfg, k, len(unlabeled)))
        )
    return clients, test


def prepare_labels_at_server(cfg: ExperimentConfig) -> tuple[Dataset, list[ClientState], Dataset]:
    """Stratified server labeled set; the rest is partitioned across clients
    (class-aware, using the true labels) and then stripped of labels."""
    train, test = load_train_test(cfg)
    if cfg.labeled_server > len(train):
        raise ConfigError("labeled-server exceeds the training set size")
    rng = _rng(cfg.seed, 3)
    keep = stratified_sample_indices(train.labels, cfg.labeled_server, train.num_classes, rng)
    server_ds = train.subset(keep)
    rest = train.subset(np.setdiff1d(np.arange(len(train)), keep))
    plan = _partition(cfg, rest)
    clients = []
    for k, shard_idx in enumerate(plan.assignments):
        unlabeled = rest.subset(list(shard_idx)).without_labels()
        if len(unlabeled) == 0:
            raise ConfigError(f"client {k} received no unlabeled samples")
        clients.append(ClientState(k, None, unlabeled, _maybe_streaming(cfg, k, len(unlabeled))))
    return server_ds, clients, test


# ---------------------------------------------------------------------------
# Local updates
# ---------------------------------------------------------------------------


def _client_pool(client: ClientState, t: int) -> np.ndarray:
    """The unlabeled features this round: one streaming part, or everything."""
    if client.streaming is not None:
        return client.unlabeled.features[client.streaming.part_for_round(t)]
    return client.unlabeled.features


def _sup_epochs(
    model: MlpModel,
    ds: Dataset,
    hp: SslHyperparams,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    weighted: bool = True,
) -> tuple[MlpModel, float]:
    """epochs-labeled passes of supervised SGD over labeled data.

    The mixed method's supervised model trains on the lambda_s-weighted CE
    objective; the single-model baselines use the plain weight-1 server loss.
    """
    losses = []
    for _ in range(cfg.epochs_labeled):
        for idx in _minibatches(len(ds), cfg.batch_labeled, rng):
            batch = Batch(ds.features[idx], labels=ds.labels[idx])
            if weighted:
                value, grad = sup_loss(model, batch, hp)
            else:
                value, grad = server_loss(model, batch)
            model = sgd_step(model, grad, cfg.eta)
            losses.append(value)
    return model, float(np.mean(losses))


def _unsup_epochs(
    model: MlpModel,
    sup_ref: ParamVector,
    pool: np.ndarray,
    image_shape,
    hp: SslHyperparams,
    cfg: ExperimentConfig,
    t: int,
    rng: np.random.Generator,
    pseudo_weight: float | None = None,
) -> tuple[MlpModel, float]:
    """Select pseudo-label candidates, label them by augmented vote, then run
    epochs-unlabeled passes of unsupervised steps.

    The pseudo-label weight follows the round ramp unless `pseudo_weight`
    pins it explicitly.
    """
    n_sel = min(cfg.select_n, pool.shape[0])
    strategy = SelectionStrategy(cfg.selection, n_sel)
    chosen = pool[select(model, pool, strategy, rng)]
    vote_aug = candidate_augmenter(image_shape, cfg.noise_sigma)
    pseudo = pseudo_label_batch(model, chosen, cfg.augmentations, vote_aug, rng)
    first_aug, second_aug = pair_augmenters(image_shape, cfg.noise_sigma)
    losses = []
    for _ in range(cfg.epochs_unlabeled):
        for idx in _minibatches(len(chosen), cfg.batch_unlabeled, rng):
            u = chosen[idx]
            args = (model, sup_ref, Batch(u), pseudo[idx], first_aug(u, rng), second_aug(u, rng))
            if pseudo_weight is None:
                value, grad = unsup_loss(*args, hp, t)
            else:
                value, grad = unsup_loss_at_weight(
                    *args, hp.lambda_l2, pseudo_weight, hp.consistency_kind
                )
            model = sgd_step(model, grad, cfg.eta)
            losses.append(value)
    return model, float(np.mean(losses))


def client_update_lac(
    client: ClientState,
    global_params: ParamVector,
    cfg: ExperimentConfig,
    hp: SslHyperparams,
    t: int,
    rng: np.random.Generator,
) -> tuple[ParamVector, ParamVector, float, float]:
    """Local update when the client holds labels.

    Both local models start from the broadcast global model. The supervised
    model trains first so the unsupervised model's parameter penalty can pull
    toward this round's supervised knowledge.
    """
    if client.labeled is None or len(client.labeled) == 0:
        raise ConfigError(f"client {client.id} has no labeled data")
    dims = _layer_dims(cfg, client.unlabeled.features.shape[1], client.unlabeled.num_classes)
    sup_model = MlpModel(dims, global_params)
    sup_model, sup_mean = _sup_epochs(sup_model, client.labeled, hp, cfg, rng)
    unsup_model = MlpModel(dims, global_params)
    pool = _client_pool(client, t)
    unsup_model, unsup_mean = _unsup_epochs(
        unsup_model, sup_model.params, pool, client.unlabeled.image_shape, hp, cfg, t, rng
    )
    return unsup_model.params, sup_model.params, unsup_mean, sup_mean


def client_update_las(
    client: ClientState,
    start_params: ParamVector,
    sup_ref: ParamVector,
    cfg: ExperimentConfig,
    hp: SslHyperparams,
    t: int,
    rng: np.random.Generator,
) -> tuple[ParamVector, float]:
    """Unsupervised-only local update against the broadcast supervised model."""
    dims = _layer_dims(cfg, client.unlabeled.features.shape[1], client.unlabeled.num_classes)
    unsup_model = MlpModel(dims, start_params)
    pool = _client_pool(client, t)
    unsup_model, unsup_mean = _unsup_epochs(
        unsup_model, sup_ref, pool, client.unlabeled.image_shape, hp, cfg, t, rng
    )
    return unsup_model.params, unsup_mean


def server_update_las(
    start_params: ParamVector,
    server_ds: Dataset,
    cfg: ExperimentConfig,
    hp: SslHyperparams,
    rng: np.random.Generator,
) -> tuple[ParamVector, float]:
    """epochs-labeled passes of supervised SGD on the server's labeled set."""
    if server_ds.labels is None or len(server_ds) == 0:
        raise ConfigError("server labeled set is empty")
    dims = _layer_dims(cfg, server_ds.features.shape[1], server_ds.num_classes)
    model, mean_loss = _sup_epochs(MlpModel(dims, start_params), server_ds, hp, cfg, rng)
    return model.params, mean_loss


# ---------------------------------------------------------------------------
# Mixed-method protocols
# ---------------------------------------------------------------------------


def _labels_at_client_full(cfg: ExperimentConfig) -> RunResult:
    """Protocol with labeled data on the clients.

    Each round: sample clients, run both local updates, aggregate the
    unsupervised and supervised streams with the configured rule, then mix
    them with the previous global model.
    """
    clients, test_ds = prepare_labels_at_client(cfg)
    for client in clients:
        if len(client.unlabeled) == 0:
            raise ConfigError(f"client {client.id} has no unlabeled samples")
    hp = _hyperparams(cfg)
    weights_cfg = MixWeights(cfg.alpha, cfg.beta, cfg.gamma)
    dims = _layer_dims(cfg, test_ds.features.shape[1], test_ds.num_classes)
    global_params = MlpModel.init(dims, (cfg.seed, 0)).params
    state = ServerState(
        global_params, global_params, global_params, FrequencyTracker.fresh(cfg.num_clients), 0
    )
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        selected = sample_clients(cfg.num_clients, cfg.participation, _rng(cfg.seed, 6, t))
        tracker = record_selection(state.tracker, selected.tolist())
        unsup_updates, sup_updates, unsup_losses, sup_losses = [], [], [], []
        for k in selected:
            unsup_k, sup_k, unsup_mean, sup_mean = client_update_lac(
                clients[k], state.global_params, cfg, hp, t, _rng(cfg.seed, 8, t, k)
            )
            unsup_updates.append(unsup_k)
            sup_updates.append(sup_k)
            unsup_losses.append(unsup_mean)
            sup_losses.append(sup_mean)
        weights = _aggregation_weights(
            cfg.aggregation, tracker, selected, cfg.participation, cfg.num_clients
        )
        unsup_global = _combine(weights, unsup_updates)
        sup_global = _combine(weights, sup_updates)
        global_params = mix(unsup_global, sup_global, state.global_params, weights_cfg)
        state = ServerState(global_params, sup_global, unsup_global, tracker, t + 1)
        records.append(
            RoundRecord(
                round=t,
                test_accuracy=evaluate(MlpModel(dims, global_params), test_ds),
                sup_loss=float(np.mean(sup_losses)),
                unsup_loss=float(np.mean(unsup_losses)),
                lambda_t=lambda_t(hp, t),
                selected=tuple(int(k) for k in selected),
                weights=tuple(float(w) for w in weights),
                wall_ms=_elapsed_ms(start, cfg.timing),
            )
        )
    return RunResult(records, global_params, dims)


def _labels_at_server_full(cfg: ExperimentConfig) -> RunResult:
    """Protocol with labeled data on the server only.

    Each round: the server trains the supervised model from the current
    global model, clients train unsupervised models against the broadcast
    pair, and the frequency-weighted aggregate is mixed with the previous
    global model.
    """
    server_ds, clients, test_ds = prepare_labels_at_server(cfg)
    hp = _hyperparams(cfg)
    weights_cfg = MixWeights(cfg.alpha, cfg.beta, cfg.gamma)
    dims = _layer_dims(cfg, test_ds.features.shape[1], test_ds.num_classes)
    global_params = MlpModel.init(dims, (cfg.seed, 0)).params
    state = ServerState(
        global_params, global_params, global_params, FrequencyTracker.fresh(cfg.num_clients), 0
    )
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        sup_global, sup_mean = server_update_las(
            state.global_params, server_ds, cfg, hp, _rng(cfg.seed, 7, t)
        )
        selected = sample_clients(cfg.num_clients, cfg.participation, _rng(cfg.seed, 6, t))
        tracker = record_selection(state.tracker, selected.tolist())
        unsup_updates, unsup_losses = [], []
        for k in selected:
            unsup_k, unsup_mean = client_update_las(
                clients[k], state.global_params, sup_global, cfg, hp, t, _rng(cfg.seed, 8, t, k)
            )
            unsup_updates.append(unsup_k)
            unsup_losses.append(unsup_mean)
        weights = _aggregation_weights(
            cfg.aggregation, tracker, selected, cfg.participation, cfg.num_clients
        )
        unsup_global = _combine(weights, unsup_updates)
        global_params = mix(unsup_global, sup_global, state.global_params, weights_cfg)
        state = ServerState(global_params, sup_global, unsup_global, tracker, t + 1)
        records.append(
            RoundRecord(
                round=t,
                test_accuracy=evaluate(MlpModel(dims, global_params), test_ds),
                sup_loss=sup_mean,
                unsup_loss=float(np.mean(unsup_losses)),
                lambda_t=lambda_t(hp, t),
                selected=tuple(int(k) for k in selected),
                weights=tuple(float(w) for w in weights),
                wall_ms=_elapsed_ms(start, cfg.timing),
            )
        )
    return RunResult(records, global_params, dims)


def run_labels_at_client(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Round records for the labels-at-client protocol."""
    return _labels_at_client_full(cfg).records


def run_labels_at_server(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Round records for the labels-at-server protocol."""
    return _labels_at_server_full(cfg).records


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _baseline_record(t, model_dims, global_params, test_ds, sup_mean, unsup_mean, lam, selected, weights, start, timing):
    return RoundRecord(
        round=t,
        test_accuracy=evaluate(MlpModel(model_dims, global_params), test_ds),
        sup_loss=sup_mean,
        unsup_loss=unsup_mean,
        lambda_t=lam,
        selected=tuple(int(k) for k in selected),
        weights=tuple(float(w) for w in weights),
        wall_ms=_elapsed_ms(start, timing),
    )


def _run_sl_fedavg(cfg: ExperimentConfig) -> RunResult:
    """Supervised-only federated averaging over the clients' labeled shards."""
    clients, test_ds = prepare_labels_at_client(cfg)
    hp = _hyperparams(cfg)
    dims = _layer_dims(cfg, test_ds.features.shape[1], test_ds.num_classes)
    global_params = MlpModel.init(dims, (cfg.seed, 0)).params
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        selected = sample_clients(cfg.num_clients, cfg.participation, _rng(cfg.seed, 6, t))
        updates, sup_losses = [], []
        for k in selected:
            rng = _rng(cfg.seed, 8, t, k)
            model, sup_mean = _sup_epochs(
                MlpModel(dims, global_params), clients[k].labeled, hp, cfg, rng, weighted=False
            )
            updates.append(model.params)
            sup_losses.append(sup_mean)
        weights = np.full(len(selected), 1.0 / len(selected))
        global_params = _combine(weights, updates)
        records.append(
            _baseline_record(
                t, dims, global_params, test_ds, float(np.mean(sup_losses)), float("nan"),
                0.0, selected, weights, start, cfg.timing,
            )
        )
    return RunResult(records, global_params, dims)


def _ssl_client_update(
    client: ClientState,
    global_params: ParamVector,
    cfg: ExperimentConfig,
    dims,
    t: int,
    rng: np.random.Generator,
) -> tuple[ParamVector, float]:
    """Naive single-model semi-supervised update.

    Labels-at-client: CE on labeled batches (cycled to match the unlabeled
    batch count) plus KL consistency. Labels-at-server: CE against plain
    argmax pseudo-labels from the current local model plus KL consistency.
    """
    model = MlpModel(dims, global_params)
    pool = _client_pool(client, t)
    first_aug, _ = pair_augmenters(client.unlabeled.image_shape, cfg.noise_sigma)
    losses = []
    for _ in range(cfg.epochs_unlabeled):
        unlabeled_batches = list(_minibatches(pool.shape[0], cfg.batch_unlabeled, rng))
        labeled_batches = (
            list(_minibatches(len(client.labeled), cfg.batch_labeled, rng))
            if client.labeled is not None
            else []
        )
        for i, u_idx in enumerate(unlabeled_batches):
            u = pool[u_idx]
            aug = first_aug(u, rng)
            if client.labeled is not None:
                s_idx = labeled_batches[i % len(labeled_batches)]
                s_batch = Batch(
                    client.labeled.features[s_idx], labels=client.labeled.labels[s_idx]
                )
                value, grad = baseline_client_loss_lac(model, s_batch, Batch(u), aug)
            else:
                pseudo = pseudo_label_batch(model, u, 1, lambda v, r: v, rng)
                value, grad = baseline_client_loss_las(model, Batch(u), pseudo, aug)
            model = sgd_step(model, grad, cfg.eta)
            losses.append(value)
    return model.params, float(np.mean(losses))


def _run_ssl_fedavg(cfg: ExperimentConfig) -> RunResult:
    """Single-model semi-supervised federated averaging."""
    at_server = cfg.scenario == "labels_at_server"
    if at_server:
        server_ds, clients, test_ds = prepare_labels_at_server(cfg)
    else:
        clients, test_ds = prepare_labels_at_client(cfg)
        for client in clients:
            if len(client.unlabeled) == 0:
                raise ConfigError(f"client {client.id} has no unlabeled samples")
    hp = _hyperparams(cfg)
    dims = _layer_dims(cfg, test_ds.features.shape[1], test_ds.num_classes)
    global_params = MlpModel.init(dims, (cfg.seed, 0)).params
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        sup_mean = float("nan")
        if at_server:
            # Same round order as the mixed method: supervised training on
            # the current global model first, then the broadcast.
            model, sup_mean = _sup_epochs(
                MlpModel(dims, global_params), server_ds, hp, cfg, _rng(cfg.seed, 7, t), weighted=False
            )
            global_params = model.params
        selected = sample_clients(cfg.num_clients, cfg.participation, _rng(cfg.seed, 6, t))
        updates, client_losses = [], []
        for k in selected:
            params, mean_loss = _ssl_client_update(
                clients[k], global_params, cfg, dims, t, _rng(cfg.seed, 8, t, k)
            )
            updates.append(params)
            client_losses.append(mean_loss)
        weights = np.full(len(selected), 1.0 / len(selected))
        global_params = _combine(weights, updates)
        records.append(
            _baseline_record(
                t, dims, global_params, test_ds, sup_mean, float(np.mean(client_losses)),
                0.0, selected, weights, start, cfg.timing,
            )
        )
    return RunResult(records, global_params, dims)


def _run_naive_decomposition(cfg: ExperimentConfig) -> RunResult:
    """Two-model decomposition baseline: the global model is the plain sum
    of the unsupervised and supervised streams.

    The supervised and unsupervised streams never mix; the pseudo-label
    weight is pinned at 1 (no consistency ramp). The initial global model is
    split evenly between the two streams so their sum reproduces it.
    """
    at_server = cfg.scenario == "labels_at_server"
    if at_server:
        server_ds, clients, test_ds = prepare_labels_at_server(cfg)
    else:
        clients, test_ds = prepare_labels_at_client(cfg)
        for client in clients:
            if len(client.unlabeled) == 0:
                raise ConfigError(f"client {client.id} has no unlabeled samples")
    hp = _hyperparams(cfg)
    dims = _layer_dims(cfg, test_ds.features.shape[1], test_ds.num_classes)
    global_params = MlpModel.init(dims, (cfg.seed, 0)).params
    unsup_global = linear_combine([(0.5, global_params)])
    sup_global = linear_combine([(0.5, global_params)])
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        if at_server:
            sup_global, sup_mean = server_update_las(
                sup_global, server_ds, cfg, hp, _rng(cfg.seed, 7, t)
            )
        selected = sample_clients(cfg.num_clients, cfg.participation, _rng(cfg.seed, 6, t))
        unsup_updates, sup_updates, unsup_losses, sup_losses = [], [], [], []
        for k in selected:
            rng = _rng(cfg.seed, 8, t, k)
            client = clients[k]
            if at_server:
                sup_ref = sup_global
            else:
                sup_model, sup_mean_k = _sup_epochs(
                    MlpModel(dims, sup_global), client.labeled, hp, cfg, rng
                )
                sup_updates.append(sup_model.params)
                sup_losses.append(sup_mean_k)
                sup_ref = sup_model.params
            unsup_model = MlpModel(dims, unsup_global)
            pool = _client_pool(client, t)
            unsup_model, unsup_mean = _unsup_epochs(
                unsup_model, sup_ref, pool, client.unlabeled.image_shape,
                hp, cfg, t, rng, pseudo_weight=1.0,
            )
            unsup_updates.append(unsup_model.params)
            unsup_losses.append(unsup_mean)
        weights = np.full(len(selected), 1.0 / len(selected))
        unsup_global = _combine(weights, unsup_updates)
        if not at_server:
            sup_global = _combine(weights, sup_updates)
            sup_mean = float(np.mean(sup_losses))
        global_params = linear_combine([(1.0, unsup_global), (1.0, sup_global)])
        records.append(
            _baseline_record(
                t, dims, global_params, test_ds, sup_mean, float(np.mean(unsup_losses)),
                1.0, selected, weights, start, cfg.timing,
            )
        )
    return RunResult(records, global_params, dims)


def _baseline_full(cfg: ExperimentConfig, kind: str) -> RunResult:
    if kind == "sl_fedavg":
        if cfg.scenario == "labels_at_server":
            raise ConfigError("sl_fedavg needs client-side labels")
        return _run_sl_fedavg(cfg)
    if kind == "ssl_fedavg":
        return _run_ssl_fedavg(cfg)
    if kind == "naive_decomposition":
        return _run_naive_decomposition(cfg)
    raise ConfigError(f"unknown baseline {kind!r}")


def run_baseline(cfg: ExperimentConfig, kind: str) -> list[RoundRecord]:
    """Round records for one of the reference methods: sl_fedavg,
    ssl_fedavg or naive_decomposition."""
    return _baseline_full(cfg, kind).records


def run_experiment_full(cfg: ExperimentConfig) -> RunResult:
    """Dispatch on the configured method and scenario."""
    if cfg.method == "fedmix":
        if cfg.scenario == "labels_at_client":
            return _labels_at_client_full(cfg)
        return _labels_at_server_full(cfg)
    return _baseline_full(cfg, cfg.method)


def run_experiment(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Round records for the configured method and scenario."""
    return run_experiment_full(cfg).records
