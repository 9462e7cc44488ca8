"""Per-label data synthesizers for fake clients and fake-data assignment."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .config import GaussianSynthConfig
from .data import partition_dirichlet
from .seeding import derive_seed
from .types import CovarianceMode, LabeledDataset, LabelSets


class Synthesizer(ABC):
    """Fit on per-label sample sets, then sample feature rows for a label."""

    def __init__(self) -> None:
        self.num_classes = 0
        self.input_dim = 0

    def fit(self, sets: LabelSets) -> Synthesizer:
        """Fit on per-label sets; empty labels stay unfitted."""
        non_empty = {label: np.asarray(rows, dtype=np.float64) for label, rows in sets.items() if len(rows) > 0}
        if not non_empty:
            raise ValueError("no compromised data")
        self.num_classes = max(sets) + 1
        self.input_dim = next(iter(non_empty.values())).shape[1]
        self._fit(non_empty)
        return self

    @property
    @abstractmethod
    def fitted_labels(self) -> list[int]:
        """Labels that can be sampled, ascending."""

    @abstractmethod
    def _fit(self, sets: dict[int, NDArray[np.float64]]) -> None: ...

    @abstractmethod
    def _sample(self, label: int, count: int, rng: np.random.Generator) -> NDArray[np.float64]: ...

    def sample(self, label: int, count: int, seed: int) -> NDArray[np.float64]:
        if label not in self.fitted_labels:
            raise ValueError(f"label {label} has no fitted data")
        return self._sample(label, count, np.random.default_rng(seed))


class GaussianSynthesizer(Synthesizer):
    """Independent Gaussian per label with floored variance."""

    def __init__(self, cfg: GaussianSynthConfig | None = None):
        super().__init__()
        self.cfg = cfg or GaussianSynthConfig()
        self.means: dict[int, NDArray[np.float64]] = {}
        self.variances: dict[int, NDArray[np.float64]] = {}

    @property
    def fitted_labels(self) -> list[int]:
        return sorted(self.means)

    def _fit(self, sets: dict[int, NDArray[np.float64]]) -> None:
        floor = self.cfg.variance_floor
        for label, rows in sets.items():
            self.means[label] = rows.mean(axis=0)
            # a single sample is memorized; the floor supplies the only spread
            var = rows.var(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(rows.shape[1])
            if self.cfg.covariance_mode == CovarianceMode.SPHERICAL:
                var = np.full(rows.shape[1], var.mean())
            self.variances[label] = np.maximum(var, floor)

    def _sample(self, label: int, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        noise = rng.standard_normal((count, self.input_dim))
        return self.means[label] + np.sqrt(self.variances[label]) * noise


class ReplaySynthesizer(Synthesizer):
    """Re-emits the fitted samples (no generative model)."""

    def __init__(self) -> None:
        super().__init__()
        self.samples: dict[int, NDArray[np.float64]] = {}

    @property
    def fitted_labels(self) -> list[int]:
        return sorted(self.samples)

    def _fit(self, sets: dict[int, NDArray[np.float64]]) -> None:
        self.samples = {label: rows.copy() for label, rows in sets.items()}

    def _sample(self, label: int, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        rows = self.samples[label]
        order = rng.permutation(rows.shape[0])
        return rows[np.resize(order, count)]


def fit_synthesizer(sets: LabelSets, cfg: GaussianSynthConfig | Literal["replay"] | None = None) -> Synthesizer:
    """Fit the configured synthesizer on compromised data."""
    synth: Synthesizer
    if isinstance(cfg, GaussianSynthConfig) or cfg is None:
        synth = GaussianSynthesizer(cfg)
    else:
        synth = ReplaySynthesizer()
    return synth.fit(sets)


def generate_fake_pool(
    synth: Synthesizer,
    n_fake: int,
    samples_per_label: int = 5,
    seed: int = 0,
) -> LabeledDataset:
    """samples_per_label × n_fake rows for every fitted label."""
    if n_fake < 1:
        raise ValueError("n_fake must be at least 1")
    count = samples_per_label * n_fake
    parts = [
        LabeledDataset(
            synth.sample(label, count, derive_seed(seed, "synth-label", label)),
            np.full(count, label, dtype=np.int64),
            synth.num_classes,
        )
        for label in synth.fitted_labels
    ]
    return LabeledDataset.concat(parts)


def assign_fake_data(pool: LabeledDataset, n_fake: int, beta: float, seed: int) -> list[LabeledDataset]:
    """Dirichlet(beta) non-iid split of the pool over the fake clients."""
    if n_fake < 1:
        raise ValueError("n_fake must be at least 1")
    plan = partition_dirichlet(pool, n_fake, beta, seed)
    return [pool.subset(plan.assignments[i]) for i in range(n_fake)]
