"""Contrastive density training: Adam, warmup-cosine schedule, early stopping.

Each minibatch serves as its own density reference. Perturbed counterparts
enter only as queries, and the loss rewards a density margin between every
graph and its perturbed samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .gnn import encode
from .graphs import Graph
from .linalg import svd
from .kde import density_matrix
from .model import DensityModel, default_model
from .perturb import PerturbationConfig, generate_sample
from .tensor import (
    Node,
    add,
    backward,
    block_kernel_means,
    concat_cols,
    concat_rows,
    constant,
    divide,
    exp,
    matmul,
    maximum,
    mean_all,
    negate,
    pairwise_sq_dists,
    scale,
    slice_rows,
    subtract,
    sum_all,
    zero_grad,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "init_adam_state",
    "adam_step",
    "lr_schedule",
    "loss",
    "train",
    "save_log",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs; defaults suit a few hundred small graphs."""

    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 10
    grad_clip: float = 5.0
    warmup_epochs: int = 10
    epsilon: float = 1e-6
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    seed: int = 0
    val_fraction: float = 0.1
    hidden_dim: int = 64
    output_dim: int = 32
    lr_logits_scale: float = 1.0

    def __post_init__(self):
        positives = [
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("grad_clip", self.grad_clip),
            ("epsilon", self.epsilon),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
        ]
        for name, value in positives:
            if not value > 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.lr_logits_scale < 0:
            # Zero freezes the mixture weights at uniform.
            raise ValidationError(
                f"lr_logits_scale cannot be negative, got {self.lr_logits_scale}"
            )
        if self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs cannot be negative")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ValidationError(
                f"val_fraction {self.val_fraction} outside [0, 0.5]"
            )


@dataclass
class AdamState:
    """Per-parameter moment estimates and the shared step counter."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0


def init_adam_state(params: Sequence[Node]) -> AdamState:
    return AdamState(
        [np.zeros_like(p.value) for p in params],
        [np.zeros_like(p.value) for p in params],
    )


def global_grad_norm(grads: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def adam_step(
    params: Sequence[Node],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    clip: float | None = None,
    lr_scales: Sequence[float] | None = None,
) -> float:
    """One in-place update; returns the pre-clip global gradient norm.

    Gradients are rescaled to global norm ``clip`` first when they exceed
    it, then each parameter takes a bias-corrected Adam step at ``lr``
    times its entry in ``lr_scales``.
    """
    if len(params) != len(grads):
        raise ValidationError("one gradient per parameter required")
    for k, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient for parameter {k} at step {state.step + 1}"
            )
    norm = global_grad_norm(grads)
    factor = 1.0
    if clip is not None and norm > clip:
        factor = clip / norm
    state.step += 1
    bias1 = 1.0 - ADAM_BETA1**state.step
    bias2 = 1.0 - ADAM_BETA2**state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        g = g * factor
        m = state.first_moment[k]
        v = state.second_moment[k]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        step_lr = lr if lr_scales is None else lr * lr_scales[k]
        p.value -= step_lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
    return norm


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Linear warmup to the base rate, then cosine decay to zero."""
    if epoch < 0:
        raise ValidationError("epoch cannot be negative")
    base = config.learning_rate
    if epoch >= config.max_epochs:
        return 0.0
    if epoch < config.warmup_epochs:
        return base * (epoch + 1) / config.warmup_epochs
    span = max(1, config.max_epochs - config.warmup_epochs)
    progress = (epoch - config.warmup_epochs) / span
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def _graph_self_kernel_means(embedding: Node, gammas) -> list[Node]:
    """Mean within-graph kernel value for every kernel width, on tape."""
    d_self = pairwise_sq_dists(embedding, embedding)
    return [mean_all(exp(scale(d_self, -g))) for g in gammas]


def loss(
    batch: Sequence[Graph],
    perturbed: Sequence[Sequence[Graph]],
    model: DensityModel,
    epsilon: float = 1e-6,
    training: bool = False,
    rng=None,
) -> Node:
    """Contrastive objective as a scalar tape node.

    The batch acts as its own density reference. Queries are the batch
    graphs followed by their perturbed samples; each sample contributes
    -(density(graph) - density(sample)) / (density(graph) + epsilon).
    """
    graphs = list(batch)
    if not graphs:
        raise ValidationError("training batch is empty")
    if len(perturbed) != len(graphs):
        raise ValidationError("one sample list per batch graph required")
    n_pert = len(perturbed[0]) if perturbed[0] else 0
    if n_pert == 0 or any(len(s) != n_pert for s in perturbed):
        raise ValidationError(
            "every graph needs the same positive number of perturbed samples"
        )
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")

    enc = [encode(g, model.gnn, training=training, rng=rng) for g in graphs]
    enc_pert = [
        encode(s, model.gnn, training=training, rng=rng)
        for samples in perturbed
        for s in samples
    ]
    ref_sizes = [g.num_nodes for g in graphs]
    pert_sizes = [s.num_nodes for samples in perturbed for s in samples]
    query_sizes = ref_sizes + pert_sizes
    n_ref = len(graphs)
    n_query = len(query_sizes)

    z_ref = concat_rows(enc)
    z_query = concat_rows(enc + enc_pert)
    d = pairwise_sq_dists(z_query, z_ref)
    self_means = [_graph_self_kernel_means(z, model.family.gammas) for z in enc + enc_pert]

    # sup over the kernel family of the squared-distance V-statistic
    candidates = []
    for s, gamma in enumerate(model.family.gammas):
        cross = block_kernel_means(d, gamma, query_sizes, ref_sizes)
        q_col = concat_rows([self_means[i][s] for i in range(n_query)])
        r_row = concat_cols([self_means[i][s] for i in range(n_ref)])
        candidates.append(add(add(q_col, r_row), scale(cross, -2.0)))
    dist_sq = candidates[0]
    for cand in candidates[1:]:
        dist_sq = maximum(dist_sq, cand)
    dist_sq = maximum(dist_sq, constant(np.zeros(dist_sq.shape)))

    densities = density_matrix(dist_sq, model.kde)
    f_batch = slice_rows(densities, 0, n_ref)
    f_pert = slice_rows(densities, n_ref, n_query)

    repeat = np.zeros((n_ref * n_pert, n_ref))
    for i in range(n_ref):
        repeat[i * n_pert : (i + 1) * n_pert, i] = 1.0
    f_ref = matmul(constant(repeat), f_batch)
    margin = subtract(f_ref, f_pert)
    denom = add(f_ref, constant(np.full((n_ref * n_pert, 1), epsilon)))
    return negate(sum_all(divide(margin, denom)))


@dataclass
class TrainResult:
    """Best checkpoint plus the per-epoch record of a training run."""

    model: DensityModel
    log: list[dict]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool = False
    aborted: bool = False
    abort_reason: str | None = None


def _perturb_set(graphs, config: TrainConfig, rng, cache: dict) -> list[list[Graph]]:
    """Fresh perturbed samples; adjacency factorizations are reused per graph."""
    out = []
    for g in graphs:
        factors = cache.get(id(g))
        if factors is None:
            factors = cache[id(g)] = svd(g.adjacency)
        out.append(
            [
                generate_sample(g, config.perturbation, rng, factors)
                for _ in range(config.perturbation.n_pert)
            ]
        )
    return out


def _mean_term_loss(graphs, samples, model, config: TrainConfig) -> float:
    """Objective per contrast term over ``graphs`` split into batch chunks."""
    total = 0.0
    terms = 0
    for start in range(0, len(graphs), config.batch_size):
        chunk = graphs[start : start + config.batch_size]
        chunk_samples = samples[start : start + config.batch_size]
        node = loss(chunk, chunk_samples, model, config.epsilon)
        total += node.value.item()
        terms += len(chunk) * config.perturbation.n_pert
    return total / terms


def train(
    dataset,
    config: TrainConfig,
    model: DensityModel | None = None,
    start_epoch: int = 0,
) -> TrainResult:
    """Fit the encoder and mixture on a set of unlabeled graphs.

    Every epoch reshuffles the data, draws fresh perturbed samples, and
    takes one Adam step per minibatch. A held-out fraction supplies the
    early-stopping loss (fixed perturbations, so the signal is stable);
    the returned model carries the best-validation parameters. Epoch
    ``start_epoch`` onward is run, so resuming continues the schedule.
    """
    graphs = list(dataset)
    if not graphs:
        raise ValidationError("training dataset is empty")
    if start_epoch < 0:
        raise ValidationError("start_epoch cannot be negative")
    if model is None:
        feature_dim = graphs[0].features.shape[1]
        model = default_model(
            feature_dim, config.hidden_dim, config.output_dim, seed=config.seed
        )

    split_rng = np.random.default_rng((config.seed, 101))
    val_sample_rng = np.random.default_rng((config.seed, 202))
    n_val = int(config.val_fraction * len(graphs))
    order = split_rng.permutation(len(graphs))
    val_graphs = [graphs[i] for i in order[:n_val]]
    train_graphs = [graphs[i] for i in order[n_val:]]
    if not train_graphs:
        raise ValidationError("validation split leaves no training graphs")
    svd_cache: dict = {}
    val_samples = _perturb_set(val_graphs, config, val_sample_rng, svd_cache)

    params = model.trainable_parameters()
    lr_scales = [1.0] * (len(params) - 1) + [config.lr_logits_scale]
    adam = init_adam_state(params)
    needs_rng = model.gnn.dropout > 0.0

    best_state = model.state_dict()
    best_val = math.inf
    best_epoch = start_epoch - 1
    bad_epochs = 0
    log: list[dict] = []
    stopped_early = False
    aborted = False
    abort_reason = None

    for epoch in range(start_epoch, config.max_epochs):
        lr_now = lr_schedule(epoch, config)
        shuffle_rng = np.random.default_rng((config.seed, epoch, 0))
        pert_rng = np.random.default_rng((config.seed, epoch, 1))
        drop_rng = np.random.default_rng((config.seed, epoch, 2)) if needs_rng else None

        epoch_sum = 0.0
        epoch_terms = 0
        perm = shuffle_rng.permutation(len(train_graphs))
        try:
            for start in range(0, len(perm), config.batch_size):
                batch = [train_graphs[i] for i in perm[start : start + config.batch_size]]
                samples = _perturb_set(batch, config, pert_rng, svd_cache)
                node = loss(
                    batch, samples, model, config.epsilon,
                    training=True, rng=drop_rng,
                )
                value = node.value.item()
                if not math.isfinite(value):
                    raise NumericalError(f"non-finite loss {value} in epoch {epoch}")
                backward(node)
                grads = [p.grad for p in params]
                adam_step(params, grads, adam, lr_now, config.grad_clip, lr_scales)
                zero_grad(params)
                epoch_sum += value
                epoch_terms += len(batch) * config.perturbation.n_pert
        except NumericalError as err:
            aborted = True
            abort_reason = str(err)
            break

        train_loss = epoch_sum / epoch_terms
        if val_graphs:
            val_loss = _mean_term_loss(val_graphs, val_samples, model, config)
        else:
            val_loss = train_loss
        log.append(
            {
                "epoch": epoch,
                "loss": train_loss,
                "val_loss": val_loss,
                "lr": lr_now,
                "mixture_weights": [float(w) for w in model.kde.weights()],
            }
        )
        if val_loss < best_val:
            best_val = val_loss
            best_state = model.state_dict()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                stopped_early = True
                break

    model.load_state_dict(best_state)
    return TrainResult(
        model=model,
        log=log,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        stopped_early=stopped_early,
        aborted=aborted,
        abort_reason=abort_reason,
    )


def save_log(path, log: Sequence[dict]) -> None:
    """Write the training record as one JSON object per line."""
    with open(path, "w") as handle:
        for entry in log:
            handle.write(json.dumps(entry, sort_keys=True))
            handle.write("\n")
