"""Configuration management using pydantic and pydantic-settings."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .types import (
    AdversaryKind,
    AggregatorKind,
    AttackKind,
    CostModelKind,
    CovarianceMode,
    ModelKind,
    PerturbationKind,
)


class ConfigError(ValueError):
    """A configuration document failed validation."""


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix FL_)."""

    model_config = SettingsConfigDict(
        env_prefix="FL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = "INFO"
    log_format: str = "json"
    out_dir: str = "results"
    data_seed: int = Field(default=0, ge=0)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        if v.upper() not in valid_levels:
            raise ValueError(f"Invalid log level: {v}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        if v.lower() not in {"json", "text"}:
            raise ValueError(f"Invalid log format: {v}")
        return v.lower()


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ModelSpec(_Strict):
    """Flat-parameter classifier architecture."""

    kind: ModelKind = ModelKind.MLP
    input_dim: int = Field(default=20, ge=1)
    num_classes: int = Field(default=10, ge=2)
    hidden_units: int = Field(default=32, ge=1)

    @property
    def dim(self) -> int:
        """Parameter dimension d."""
        if self.kind == ModelKind.LOGISTIC_REGRESSION:
            return self.input_dim * self.num_classes + self.num_classes
        h = self.hidden_units
        return self.input_dim * h + h + h * self.num_classes + self.num_classes


class TrainConfig(_Strict):
    """Client-side SGD hyperparameters."""

    local_epochs: int = Field(default=2, ge=1)
    learning_rate: float = Field(default=0.05, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    batch_size: int = Field(default=8, ge=1)


class SyntheticTaskConfig(_Strict):
    """Gaussian-blob classification task."""

    num_classes: int = Field(default=10, ge=1)
    input_dim: int = Field(default=20, ge=1)
    samples_per_class_train: int = Field(default=200, ge=1)
    samples_per_class_test: int = Field(default=100, ge=1)
    class_center_scale: float = 0.5
    noise_sigma: float = Field(default=1.0, gt=0.0)


class AggregatorConfig(_Strict):
    """Which AGR the server runs.

    known_m is not configured here: the server receives the true per-round
    malicious count each round.
    """

    kind: AggregatorKind = AggregatorKind.FEDAVG
    tau: float | None = Field(default=None, gt=0.0)
    literal_weighting: bool = False

    @model_validator(mode="after")
    def _tau_required(self) -> AggregatorConfig:
        if self.kind.needs_tau and self.tau is None:
            raise ValueError(f"tau is required for {self.kind.value}")
        return self


class GammaSearchConfig(_Strict):
    """Search schedule for the DYN-OPT magnitude γ."""

    gamma_init: float = Field(default=1.0, gt=0.0)
    rel_precision: float = Field(default=1e-3, gt=0.0, lt=0.5)
    grid_points: int = Field(default=50, ge=10)
    gamma_lo: float = Field(default=1e-2, gt=0.0)
    gamma_hi: float = Field(default=1e2, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> GammaSearchConfig:
        if not self.gamma_lo < self.gamma_hi:
            raise ValueError("gamma_lo must be smaller than gamma_hi")
        return self


class AttackConfig(_Strict):
    """Malicious update crafting settings."""

    kind: AttackKind = AttackKind.NONE
    target_agr: AggregatorKind | None = None
    lam: float = Field(default=1e6, gt=0.0, alias="lambda")
    perturbation: PerturbationKind | None = None
    gamma_search: GammaSearchConfig = Field(default_factory=GammaSearchConfig)
    fixed_gamma: float | None = Field(default=None, gt=0.0)
    reference_pool_size: int = Field(default=25, ge=1)
    hybrid_use_compromised_refs: bool = False


class GaussianSynthConfig(_Strict):
    """Per-label Gaussian synthesizer."""

    covariance_mode: CovarianceMode = CovarianceMode.DIAGONAL
    variance_floor: float = Field(default=1e-3, gt=0.0)


class CostParams(_Strict):
    """Botnet and unit cost parameters (f is expected to be well below c)."""

    model: CostModelKind = CostModelKind.BOTNET
    device_price: float = Field(default=1.0, gt=0.0)
    app_prevalence: float = Field(default=0.01, gt=0.0, le=1.0)
    fake_unit_cost: float = Field(default=1.0, ge=0.0)
    compromised_unit_cost: float = Field(default=100.0, ge=0.0)


class AdversaryModel(_Strict):
    """Client population split and the adversary's attack."""

    n_benign: int = Field(ge=0)
    n_compromised: int = Field(default=0, ge=0)
    n_fake: int = Field(default=0, ge=0)
    attack: AttackConfig = Field(default_factory=AttackConfig)

    @model_validator(mode="after")
    def _consistent(self) -> AdversaryModel:
        if self.attack.kind != AttackKind.NONE and self.n_malicious == 0:
            raise ValueError("an attack needs at least one malicious client")
        if self.attack.kind == AttackKind.DYN_OPT and self.n_fake > 0 and self.n_compromised == 0:
            raise ValueError("dyn-opt fake clients need compromised data to synthesize from")
        return self

    @property
    def n_malicious(self) -> int:
        return self.n_fake + self.n_compromised

    @property
    def kind(self) -> AdversaryKind:
        if self.attack.kind == AttackKind.NONE or self.n_malicious == 0:
            return AdversaryKind.NONE
        if self.n_compromised == 0:
            return AdversaryKind.FAKE
        if self.n_fake == 0:
            return AdversaryKind.COMPROMISED
        return AdversaryKind.HYBRID


class ExperimentConfig(_Strict):
    """Full description of one poisoning experiment."""

    task: SyntheticTaskConfig = Field(default_factory=SyntheticTaskConfig)
    model: ModelSpec = Field(default_factory=ModelSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    rounds: int = Field(ge=1)
    clients_per_round: int = Field(default=25, ge=1)
    n_clients_total: int = Field(default=200, ge=1)
    adversary: AdversaryModel
    aggregator: AggregatorConfig = Field(default_factory=AggregatorConfig)
    dirichlet_beta: float = Field(default=0.5, gt=0.0)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    synthesizer: GaussianSynthConfig | Literal["replay"] = Field(default_factory=GaussianSynthConfig)
    fake_samples_per_label: int = Field(default=5, ge=1)
    fake_dirichlet_beta: float = Field(default=0.5, gt=0.0)
    data_seed: int | None = Field(default=None, ge=0)
    target_ratio: float | None = Field(default=None, ge=0.0, lt=1.0)
    cost: CostParams = Field(default_factory=CostParams)
    max_model_norm: float = Field(default=1e12, gt=0.0)

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, v: list[int]) -> list[int]:
        if any(s < 0 for s in v):
            raise ValueError("seeds must be non-negative")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be unique")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> ExperimentConfig:
        if (self.model.input_dim, self.model.num_classes) != (self.task.input_dim, self.task.num_classes):
            raise ValueError("model input_dim/num_classes must match the task")
        adv = self.adversary
        if adv.n_benign + adv.n_compromised != self.n_clients_total:
            raise ValueError("adversary.n_benign + adversary.n_compromised must equal n_clients_total")
        if self.target_ratio is not None:
            from .cost import solve_fake_count

            n_fake = solve_fake_count(self.n_clients_total, adv.n_compromised, self.target_ratio)
            self.adversary = adv.model_copy(update={"n_fake": n_fake})
        if self.adversary.n_fake > 0 and self.adversary.attack.kind == AttackKind.NONE:
            raise ValueError("fake clients need an attack to submit")
        if self.clients_per_round > self.n_clients_total + self.adversary.n_fake:
            raise ValueError("clients_per_round exceeds the client population")
        if self.aggregator.kind == AggregatorKind.MULTI_KRUM and self.clients_per_round < 4:
            raise ValueError("multi-krum needs clients_per_round of at least 4")
        if self.aggregator.kind == AggregatorKind.ADAPTIVE_STOLEN and adv.n_compromised == 0:
            raise ValueError("adaptive-stolen needs compromised clients to report stolen data")
        return self

    @property
    def target_agr(self) -> AggregatorKind:
        return self.adversary.attack.target_agr or self.aggregator.kind


class CostScenario(_Strict):
    """One row of the cost table: explicit counts or a target malicious ratio."""

    name: str
    n_compromised: int = Field(default=0, ge=0)
    n_fake: int | None = Field(default=None, ge=0)
    n_total: int | None = Field(default=None, ge=1)
    target_ratio: float | None = Field(default=None, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _resolvable(self) -> CostScenario:
        if self.n_fake is None and (self.n_total is None or self.target_ratio is None):
            raise ValueError("give n_fake, or n_total together with target_ratio")
        return self


class CostScenarioFile(_Strict):
    """Cost table input document."""

    params: CostParams = Field(default_factory=CostParams)
    scenarios: list[CostScenario] = Field(min_length=1)


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    loc = ".".join(str(part) for part in first["loc"])
    if first["type"] == "missing":
        return f"missing field: {loc}"
    if not loc:
        return first["msg"]
    return f"invalid field {loc}: {first['msg']}"


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e


def parse_config(document: dict[str, Any]) -> ExperimentConfig:
    """Validate an experiment configuration document."""
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_config(path: str | Path) -> ExperimentConfig:
    """Load an experiment configuration from a JSON file."""
    return parse_config(_read_json(path))


def load_cost_scenarios(path: str | Path) -> CostScenarioFile:
    """Load a cost scenario document from a JSON file."""
    try:
        return CostScenarioFile.model_validate(_read_json(path))
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


settings = Settings()
