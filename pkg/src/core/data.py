"""Synthetic tasks, Dirichlet non-iid partitioning and compromised-data collection."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .config import SyntheticTaskConfig
from .types import LabeledDataset, LabelSets, PartitionPlan


def generate_synthetic_task(cfg: SyntheticTaskConfig, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Gaussian blobs: one center per class, isotropic noise around it.

    Returns:
        (train, test), both ordered class by class
    """
    rng = np.random.default_rng(seed)
    k, d = cfg.num_classes, cfg.input_dim
    centers = rng.normal(0.0, cfg.class_center_scale, size=(k, d))

    def draw(per_class: int) -> LabeledDataset:
        features = np.concatenate(
            [rng.normal(centers[c], cfg.noise_sigma, size=(per_class, d)) for c in range(k)]
        )
        labels = np.repeat(np.arange(k, dtype=np.int64), per_class)
        return LabeledDataset(features, labels, k)

    train = draw(cfg.samples_per_class_train)
    test = draw(cfg.samples_per_class_test)
    return train, test


def _largest_remainder(proportions: NDArray[np.float64], total: int) -> NDArray[np.int64]:
    quotas = proportions * total
    counts = np.floor(quotas).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # stable sort keeps the lower client index first on equal remainders
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_dirichlet(
    data: LabeledDataset,
    n_clients: int,
    beta: float,
    seed: int,
    client_ids: Sequence[int] | None = None,
) -> PartitionPlan:
    """Split each class over clients with Dirichlet(beta) proportions.

    Args:
        data: Dataset to split
        n_clients: Number of clients
        beta: Concentration; small values are strongly non-iid
        seed: Partition seed
        client_ids: Keys of the plan (defaults to 0..n_clients-1)

    Returns:
        PartitionPlan covering every sample exactly once
    """
    if n_clients < 1:
        raise ValueError("n_clients must be at least 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    ids = list(range(n_clients)) if client_ids is None else list(client_ids)
    if len(ids) != n_clients:
        raise ValueError(f"expected {n_clients} client ids, got {len(ids)}")

    rng = np.random.default_rng(seed)
    buckets: list[list[NDArray[np.int64]]] = [[] for _ in range(n_clients)]
    for label in range(data.num_classes):
        idx = np.flatnonzero(data.labels == label)
        if idx.size == 0:
            continue
        rng.shuffle(idx)
        proportions = rng.dirichlet(np.full(n_clients, beta))
        counts = _largest_remainder(proportions, idx.size)
        for pos, part in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            buckets[pos].append(part)

    assignments = {
        cid: (np.sort(np.concatenate(parts)).astype(np.int64) if parts else np.zeros(0, dtype=np.int64))
        for cid, parts in zip(ids, buckets)
    }
    return PartitionPlan(assignments=assignments)


def collect_compromised_data(
    plan: PartitionPlan,
    data: LabeledDataset,
    compromised_ids: Sequence[int],
) -> LabelSets:
    """Pool the compromised clients' samples, grouped by label.

    Every label in [0, num_classes) has an entry; labels nobody holds map to a
    (0, input_dim) matrix.
    """
    for cid in compromised_ids:
        if cid not in plan.assignments:
            raise ValueError(f"unknown client id: {cid}")
    if compromised_ids:
        idx = np.concatenate([plan.assignments[cid] for cid in compromised_ids])
    else:
        idx = np.zeros(0, dtype=np.int64)
    pooled = data.subset(idx)
    return {label: pooled.features[pooled.labels == label] for label in range(data.num_classes)}


def label_histogram(sets: LabelSets, num_classes: int | None = None) -> NDArray[np.int64]:
    """Sample count per label, zeros included."""
    if num_classes is None:
        num_classes = max(sets, default=-1) + 1
    counts = np.zeros(num_classes, dtype=np.int64)
    for label, rows in sets.items():
        counts[label] = rows.shape[0]
    return counts


def label_sets_to_dataset(sets: LabelSets, num_classes: int, input_dim: int) -> LabeledDataset:
    """Flatten per-label sets into one dataset (label order)."""
    parts = [
        LabeledDataset(rows, np.full(rows.shape[0], label, dtype=np.int64), num_classes)
        for label, rows in sorted(sets.items())
        if rows.shape[0] > 0
    ]
    if not parts:
        return LabeledDataset.empty(input_dim, num_classes)
    return LabeledDataset.concat(parts)


def split_validation(test: LabeledDataset, size: int, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Carve a validation set of `size` rows out of the test set.

    Returns:
        (validation, remaining test)
    """
    if not 1 <= size < len(test):
        raise ValueError(f"validation size must be in [1, {len(test)}), got {size}")
    order = np.random.default_rng(seed).permutation(len(test))
    return test.subset(np.sort(order[:size])), test.subset(np.sort(order[size:]))


def save_dataset_csv(data: LabeledDataset, path: str | Path) -> None:
    """Write features then a `label` column."""
    frame = pd.DataFrame(data.features, columns=[f"x{i}" for i in range(data.input_dim)])
    frame["label"] = data.labels
    frame.to_csv(path, index=False, float_format="%.17g")


def load_dataset_csv(path: str | Path, num_classes: int | None = None) -> LabeledDataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    if "label" not in frame.columns:
        raise ValueError(f"{path}: missing label column")
    labels = frame.pop("label").to_numpy(dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return LabeledDataset(frame.to_numpy(dtype=np.float64), labels, num_classes)
