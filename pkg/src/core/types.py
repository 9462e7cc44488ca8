"""Core data models for the federated poisoning testbed."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

# Flat model parameters: global models, base models, updates and directions.
ParameterVector = NDArray[np.float64]

# Per-label feature rows, label -> (k, input_dim) matrix (k may be 0).
LabelSets = dict[int, NDArray[np.float64]]


class ClientRole(str, Enum):
    """Role of a client for the life of an experiment."""

    BENIGN = "benign"
    COMPROMISED = "compromised"
    FAKE = "fake"

    @property
    def is_malicious(self) -> bool:
        return self is not ClientRole.BENIGN


class ModelKind(str, Enum):
    """Supported flat-parameter classifiers."""

    LOGISTIC_REGRESSION = "logistic-regression"
    MLP = "one-hidden-layer-mlp"


class AggregatorKind(str, Enum):
    """Server aggregation rules."""

    FEDAVG = "fedavg"
    MEDIAN = "median"
    TRIMMED_MEAN = "trimmed-mean"
    MULTI_KRUM = "multi-krum"
    NORM_BOUNDING = "norm-bounding"
    ADAPTIVE_STOLEN = "adaptive-stolen"

    @property
    def needs_tau(self) -> bool:
        return self in (AggregatorKind.NORM_BOUNDING, AggregatorKind.ADAPTIVE_STOLEN)

    @property
    def needs_known_m(self) -> bool:
        return self in (AggregatorKind.TRIMMED_MEAN, AggregatorKind.MULTI_KRUM)


class AttackKind(str, Enum):
    """Malicious update crafting strategies."""

    NONE = "none"
    FAKE_MPAF = "fake-mpaf"
    DYN_OPT = "dyn-opt"


class PerturbationKind(str, Enum):
    """DYN-OPT perturbation directions."""

    INVERSE_UNIT = "inverse-unit"
    INVERSE_SIGN = "inverse-sign"
    INVERSE_STD = "inverse-std"
    RANDOM_UNIT = "random-unit"


class AdversaryKind(str, Enum):
    """Position of an adversary on the fake / hybrid / compromised spectrum."""

    NONE = "none"
    FAKE = "fake"
    HYBRID = "hybrid"
    COMPROMISED = "compromised"


class CovarianceMode(str, Enum):
    """Covariance structure of the Gaussian synthesizer."""

    DIAGONAL = "diagonal"
    SPHERICAL = "spherical"


class SynthesizerKind(str, Enum):
    """Synthesizers available to the hybrid adversary."""

    GAUSSIAN = "gaussian"
    REPLAY = "replay"


class CostModelKind(str, Enum):
    """Adversary cost models."""

    BOTNET = "botnet"
    UNIT = "unit"


@dataclass(frozen=True)
class ClientUpdate:
    """A client's submitted parameter delta for one round."""

    client_id: int
    role: ClientRole
    delta: ParameterVector


@dataclass
class LabeledDataset:
    """Feature matrix with integer labels in [0, num_classes)."""

    features: NDArray[np.float64]
    labels: NDArray[np.int64]
    num_classes: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features rows ({self.features.shape[0]}) != labels ({self.labels.shape[0]})"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: NDArray[np.int64] | list[int]) -> LabeledDataset:
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    @classmethod
    def empty(cls, input_dim: int, num_classes: int) -> LabeledDataset:
        return cls(
            np.zeros((0, input_dim), dtype=np.float64),
            np.zeros(0, dtype=np.int64),
            num_classes,
        )

    @classmethod
    def concat(cls, parts: list[LabeledDataset]) -> LabeledDataset:
        if not parts:
            raise ValueError("nothing to concatenate")
        return cls(
            np.concatenate([p.features for p in parts], axis=0),
            np.concatenate([p.labels for p in parts]),
            parts[0].num_classes,
        )


@dataclass
class PartitionPlan:
    """Assignment of sample indices to clients."""

    assignments: dict[int, NDArray[np.int64]]

    def sizes(self) -> dict[int, int]:
        return {cid: int(idx.size) for cid, idx in self.assignments.items()}

    def total(self) -> int:
        return sum(self.sizes().values())


@dataclass(frozen=True)
class MpafConfig:
    """MPAF base model θ' and scale λ."""

    base_model: ParameterVector
    lam: float = 1e6


@dataclass(frozen=True)
class GammaSearchResult:
    """Outcome of a DYN-OPT magnitude search."""

    update: ParameterVector
    gamma_star: float
    constraint_met: bool = True
    objective: float | None = None
    infeasible_bound: float | None = None


@dataclass
class RoundRecord:
    """Metrics for one FL round."""

    round: int
    test_accuracy: float
    test_loss: float
    n_malicious_selected: int
    aggregate_norm: float
    mean_benign_norm: float
    mean_malicious_norm: float


@dataclass
class SeedResult:
    """Per-seed maxima of a paired attacked / clean run."""

    seed: int
    max_test_accuracy: float
    clean_max_test_accuracy: float
    attack_impact: float


@dataclass
class ExperimentReport:
    """Per-round records plus accuracy, impact, cost and seed statistics."""

    per_round: dict[int, list[RoundRecord]]
    per_seed: list[SeedResult]
    max_test_accuracy: float
    attack_impact: float
    attack_cost: float
    malicious_ratio: float
    median_max_accuracy: float
    std_max_accuracy: float
    median_attack_impact: float
    std_attack_impact: float
    clean_per_round: dict[int, list[RoundRecord]] = field(default_factory=dict)
