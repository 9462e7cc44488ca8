"""Flat-parameter classifiers, local SGD training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .config import ModelSpec, TrainConfig
from .seeding import stream
from .types import ClientRole, ClientUpdate, LabeledDataset, ModelKind, ParameterVector


def param_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Shapes of the parameter blocks in flat-vector order."""
    if spec.kind == ModelKind.LOGISTIC_REGRESSION:
        return [(spec.input_dim, spec.num_classes), (spec.num_classes,)]
    h = spec.hidden_units
    return [(spec.input_dim, h), (h,), (h, spec.num_classes), (spec.num_classes,)]


def unflatten(params: ParameterVector, spec: ModelSpec) -> list[NDArray[np.float64]]:
    """Split a flat vector into views of its parameter blocks."""
    if params.shape != (spec.dim,):
        raise ValueError(f"parameter vector has shape {params.shape}, expected ({spec.dim},)")
    blocks = []
    offset = 0
    for shape in param_shapes(spec):
        size = int(np.prod(shape))
        blocks.append(params[offset : offset + size].reshape(shape))
        offset += size
    return blocks


def init_model(spec: ModelSpec, seed: int) -> ParameterVector:
    """Initialize parameters uniformly in ±1/sqrt(fan_in), layer by layer."""
    rng = np.random.default_rng(seed)
    parts = []
    fan_in = spec.input_dim
    for shape in param_shapes(spec):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
        if len(shape) == 2:
            continue
        # a bias closes a layer; the next layer's fan-in is this layer's width
        fan_in = shape[0]
    return np.concatenate(parts).astype(np.float64)


def _log_softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(params: ParameterVector, spec: ModelSpec, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Forward pass."""
    blocks = unflatten(params, spec)
    if spec.kind == ModelKind.LOGISTIC_REGRESSION:
        w, b = blocks
        return features @ w + b
    w1, b1, w2, b2 = blocks
    hidden = np.maximum(features @ w1 + b1, 0.0)
    return hidden @ w2 + b2


def loss_and_grad(
    params: ParameterVector,
    spec: ModelSpec,
    features: NDArray[np.float64],
    labels: NDArray[np.int64],
) -> tuple[float, ParameterVector]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameters."""
    n = features.shape[0]
    blocks = unflatten(params, spec)
    rows = np.arange(n)

    if spec.kind == ModelKind.LOGISTIC_REGRESSION:
        w, b = blocks
        out = features @ w + b
        log_p = _log_softmax(out)
        d_out = np.exp(log_p)
        d_out[rows, labels] -= 1.0
        d_out /= n
        grads = [features.T @ d_out, d_out.sum(axis=0)]
    else:
        w1, b1, w2, b2 = blocks
        pre = features @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        out = hidden @ w2 + b2
        log_p = _log_softmax(out)
        d_out = np.exp(log_p)
        d_out[rows, labels] -= 1.0
        d_out /= n
        d_hidden = d_out @ w2.T
        d_hidden[pre <= 0.0] = 0.0
        grads = [features.T @ d_hidden, d_hidden.sum(axis=0), hidden.T @ d_out, d_out.sum(axis=0)]

    loss = float(-log_p[rows, labels].mean())
    return loss, np.concatenate([g.ravel() for g in grads])


@dataclass
class TrainState:
    """Local model and momentum buffer carried across epochs."""

    params: ParameterVector
    velocity: ParameterVector

    @classmethod
    def start(cls, params: ParameterVector) -> TrainState:
        return cls(params=params.astype(np.float64, copy=True), velocity=np.zeros_like(params, dtype=np.float64))


def sgd_epoch(
    state: TrainState,
    data: LabeledDataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    seed: int,
    epoch: int,
) -> TrainState:
    """One shuffled pass of heavy-ball SGD with L2 weight decay."""
    order = stream(seed, "epoch", epoch).permutation(len(data))
    params = state.params.copy()
    velocity = state.velocity.copy()
    for start in range(0, len(data), cfg.batch_size):
        batch = order[start : start + cfg.batch_size]
        _, grad = loss_and_grad(params, spec, data.features[batch], data.labels[batch])
        grad = grad + cfg.weight_decay * params
        velocity = cfg.momentum * velocity + grad
        params = params - cfg.learning_rate * velocity
    return TrainState(params=params, velocity=velocity)


def local_train(
    global_params: ParameterVector,
    data: LabeledDataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    seed: int,
    client_id: int = 0,
    role: ClientRole = ClientRole.BENIGN,
) -> ClientUpdate:
    """Train locally for E epochs and return the parameter delta.

    Args:
        global_params: Current global model θ^t
        data: Client dataset
        spec: Model architecture
        cfg: SGD hyperparameters
        seed: Seed for shuffling
        client_id: Identity stamped on the update
        role: Role stamped on the update

    Returns:
        ClientUpdate with delta = θ_local − θ^t
    """
    if len(data) == 0:
        raise ValueError("empty client dataset")
    if data.input_dim != spec.input_dim:
        raise ValueError(f"dataset input_dim {data.input_dim} != model input_dim {spec.input_dim}")
    state = TrainState.start(global_params)
    for epoch in range(cfg.local_epochs):
        state = sgd_epoch(state, data, spec, cfg, seed, epoch)
    return ClientUpdate(client_id=client_id, role=role, delta=state.params - global_params)


def evaluate(params: ParameterVector, data: LabeledDataset, spec: ModelSpec) -> tuple[float, float]:
    """Mean cross-entropy loss and top-1 accuracy."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    out = logits(params, spec, data.features)
    log_p = _log_softmax(out)
    loss = float(-log_p[np.arange(len(data)), data.labels].mean())
    accuracy = float((out.argmax(axis=1) == data.labels).mean())
    return loss, accuracy


def l2_norm(v: ParameterVector) -> float:
    return float(np.linalg.norm(v))


def apply_update(global_params: ParameterVector, aggregate: ParameterVector) -> ParameterVector:
    """θ^{t+1} = θ^t + aggregate (server learning rate 1)."""
    if global_params.shape != aggregate.shape:
        raise ValueError(f"dimension mismatch: {global_params.shape} vs {aggregate.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        updated = global_params + aggregate
    if not np.all(np.isfinite(updated)):
        raise ValueError("non-finite global model")
    return updated
