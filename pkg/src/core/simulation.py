"""Federated learning simulation across the fake / hybrid / compromised spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import Aggregator
from .attacks import Adversary
from .config import AttackConfig, ExperimentConfig, settings
from .cost import attack_cost, malicious_ratio
from .data import (
    collect_compromised_data,
    generate_synthetic_task,
    label_sets_to_dataset,
    partition_dirichlet,
    split_validation,
)
from .log import get_logger
from .model import apply_update, evaluate, init_model, l2_norm, local_train
from .seeding import derive_seed, stream
from .synthesis import assign_fake_data, fit_synthesizer, generate_fake_pool
from .types import (
    AggregatorKind,
    AttackKind,
    ClientRole,
    ClientUpdate,
    ExperimentReport,
    LabeledDataset,
    LabelSets,
    ParameterVector,
    RoundRecord,
    SeedResult,
)

logger = get_logger(__name__)


@dataclass
class TaskData:
    """Task, partition and server-side splits shared by an attacked run and its clean twin."""

    train: LabeledDataset
    test: LabeledDataset
    client_data: dict[int, LabeledDataset]
    compromised_ids: list[int]
    compromised_sets: LabelSets
    stolen: LabeledDataset | None = None
    validation: LabeledDataset | None = None


def prepare_task(cfg: ExperimentConfig, seed: int) -> TaskData:
    """Generate the task and partition it with the pinned data seed.

    The compromised clients are the first n_compromised real clients of the
    fixed assignment. Under adaptive-stolen their data becomes the server's
    stolen set and an equally sized validation split is carved out of the test
    set; the rest of the test set is what accuracy is measured on.
    """
    data_seed = settings.data_seed if cfg.data_seed is None else cfg.data_seed
    train, test = generate_synthetic_task(cfg.task, derive_seed(data_seed, "task"))
    plan = partition_dirichlet(train, cfg.n_clients_total, cfg.dirichlet_beta, derive_seed(data_seed, "partition"))
    client_data = {cid: train.subset(idx) for cid, idx in plan.assignments.items()}
    compromised_ids = list(range(cfg.adversary.n_compromised))
    sets = collect_compromised_data(plan, train, compromised_ids)

    task = TaskData(
        train=train, test=test, client_data=client_data, compromised_ids=compromised_ids, compromised_sets=sets
    )
    if cfg.aggregator.kind == AggregatorKind.ADAPTIVE_STOLEN:
        stolen = label_sets_to_dataset(sets, cfg.task.num_classes, cfg.task.input_dim)
        if len(stolen) == 0:
            raise ValueError("adaptive-stolen needs non-empty stolen and validation sets")
        size = min(len(stolen), len(test) - 1)
        validation, remaining = split_validation(test, size, derive_seed(seed, "validation"))
        task.stolen, task.validation, task.test = stolen, validation, remaining
    return task


def clean_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same experiment with every client benign and no fake clients."""
    adversary = cfg.adversary.model_copy(update={"n_fake": 0, "attack": AttackConfig()})
    return cfg.model_copy(update={"adversary": adversary, "target_ratio": None})


class FederatedSimulation:
    """Round-by-round FL simulation for one (config, seed)."""

    def __init__(self, cfg: ExperimentConfig, seed: int, task: TaskData | None = None):
        """Initialize the simulation.

        Args:
            cfg: Experiment configuration
            seed: Master seed for sampling, training and attack streams
            task: Prebuilt task data (shared with a paired run)
        """
        self.cfg = cfg
        self.seed = seed
        self.spec = cfg.model
        self.task = task or prepare_task(cfg, seed)

        adv = cfg.adversary
        self.attack_kind = adv.attack.kind
        self.n_real = cfg.n_clients_total
        self.fake_ids = list(range(self.n_real, self.n_real + adv.n_fake))
        self.roles: dict[int, ClientRole] = {cid: ClientRole.BENIGN for cid in range(self.n_real)}
        if self.attack_kind != AttackKind.NONE:
            for cid in self.task.compromised_ids:
                self.roles[cid] = ClientRole.COMPROMISED
            for cid in self.fake_ids:
                self.roles[cid] = ClientRole.FAKE
        self.population = self.n_real + len(self.fake_ids)

        self.aggregator = Aggregator(cfg.aggregator, spec=self.spec, stolen=self.task.stolen, validation=self.task.validation)
        self.global_params: ParameterVector = init_model(self.spec, derive_seed(seed, "init"))

        self.adversary: Adversary | None = None
        self.fake_data: dict[int, LabeledDataset] = {}
        if self.attack_kind != AttackKind.NONE:
            base_model = None
            if self.attack_kind == AttackKind.FAKE_MPAF:
                base_model = init_model(self.spec, derive_seed(seed, "base-model"))
            self.adversary = Adversary(adv.attack, cfg.target_agr, tau=cfg.aggregator.tau, base_model=base_model)
            if self.attack_kind == AttackKind.DYN_OPT and self.fake_ids:
                self._build_fake_data()

        self.records: list[RoundRecord] = []

    def _build_fake_data(self) -> None:
        """Hybrid pipeline: pool compromised data, synthesize, spread over fake clients."""
        synth = fit_synthesizer(self.task.compromised_sets, self.cfg.synthesizer)
        n_fake = len(self.fake_ids)
        pool = generate_fake_pool(synth, n_fake, self.cfg.fake_samples_per_label, derive_seed(self.seed, "synth"))
        parts = assign_fake_data(pool, n_fake, self.cfg.fake_dirichlet_beta, derive_seed(self.seed, "fake-assign"))
        self.fake_data = dict(zip(self.fake_ids, parts))
        logger.debug("fake_pool_built", n_fake=n_fake, pool_size=len(pool), labels=synth.fitted_labels)

    def _train(self, cid: int, data: LabeledDataset, round_index: int, role: ClientRole, purpose: str) -> ClientUpdate:
        if len(data) == 0:
            return ClientUpdate(client_id=cid, role=role, delta=np.zeros_like(self.global_params))
        return local_train(
            self.global_params,
            data,
            self.spec,
            self.cfg.train,
            derive_seed(self.seed, purpose, round_index, cid),
            client_id=cid,
            role=role,
        )

    def sample_clients(self, round_index: int) -> list[int]:
        rng = stream(self.seed, "sampling", round_index)
        chosen = rng.choice(self.population, size=self.cfg.clients_per_round, replace=False)
        return sorted(int(c) for c in chosen)

    def reference_updates(self, round_index: int) -> list[ClientUpdate]:
        """Updates the adversary optimizes against this round.

        Fake-data attacks train randomly chosen fake clients on their synthetic
        data; the pure compromised attack uses its compromised clients' honest
        updates.
        """
        attack = self.cfg.adversary.attack
        rng = stream(self.seed, "reference", round_index)
        refs: list[ClientUpdate] = []
        use_compromised = not self.fake_ids or attack.hybrid_use_compromised_refs
        if self.fake_ids:
            size = min(attack.reference_pool_size, len(self.fake_ids))
            for cid in sorted(int(c) for c in rng.choice(self.fake_ids, size=size, replace=False)):
                refs.append(self._train(cid, self.fake_data[cid], round_index, ClientRole.FAKE, "fake-train"))
        if use_compromised and self.task.compromised_ids:
            ids = self.task.compromised_ids
            size = min(attack.reference_pool_size, len(ids))
            for cid in sorted(int(c) for c in rng.choice(ids, size=size, replace=False)):
                refs.append(self._train(cid, self.task.client_data[cid], round_index, ClientRole.COMPROMISED, "train"))
        return refs

    def _within_bound(self, aggregate: ParameterVector) -> bool:
        """True when applying the aggregate keeps the global model finite and within max_model_norm."""
        with np.errstate(over="ignore", invalid="ignore"):
            candidate = self.global_params + aggregate
            if not np.all(np.isfinite(candidate)):
                return False
            return l2_norm(candidate) <= self.cfg.max_model_norm

    def run_round(self, round_index: int) -> RoundRecord:
        """Sample, train, attack, aggregate, evaluate."""
        selected = self.sample_clients(round_index)
        malicious = [cid for cid in selected if self.roles[cid].is_malicious]
        m_round = len(malicious)

        honest: list[ClientUpdate] = []
        for cid in selected:
            if self.roles[cid] == ClientRole.FAKE:
                continue
            honest.append(self._train(cid, self.task.client_data[cid], round_index, self.roles[cid], "train"))

        crafted = None
        if self.adversary is not None and m_round > 0:
            refs = self.reference_updates(round_index) if self.adversary.needs_references else []
            crafted = self.adversary.craft(
                self.global_params, refs, len(selected), m_round, derive_seed(self.seed, "attack", round_index)
            )

        submitted: list[ClientUpdate] = [u for u in honest if not u.role.is_malicious]
        if crafted is not None:
            submitted.extend(ClientUpdate(client_id=cid, role=self.roles[cid], delta=crafted.update) for cid in malicious)
        else:
            submitted.extend(u for u in honest if u.role.is_malicious)
        submitted.sort(key=lambda u: u.client_id)

        aggregate = self.aggregator.aggregate(submitted, self.global_params, known_m=m_round)
        if not self._within_bound(aggregate):
            logger.warning(
                "aggregate_rejected",
                seed=self.seed,
                round=round_index,
                n_malicious_selected=m_round,
                max_model_norm=self.cfg.max_model_norm,
            )
            aggregate = np.zeros_like(aggregate)
        self.global_params = apply_update(self.global_params, aggregate)
        loss, accuracy = evaluate(self.global_params, self.task.test, self.spec)

        benign_norms = [l2_norm(u.delta) for u in submitted if not u.role.is_malicious]
        malicious_norms = [l2_norm(u.delta) for u in submitted if u.role.is_malicious]
        record = RoundRecord(
            round=round_index,
            test_accuracy=accuracy,
            test_loss=loss,
            n_malicious_selected=m_round,
            aggregate_norm=l2_norm(aggregate),
            mean_benign_norm=float(np.mean(benign_norms)) if benign_norms else 0.0,
            mean_malicious_norm=float(np.mean(malicious_norms)) if malicious_norms else 0.0,
        )
        logger.debug(
            "round_completed",
            seed=self.seed,
            round=round_index,
            test_accuracy=accuracy,
            n_malicious_selected=m_round,
        )
        self.records.append(record)
        return record

    def run(self) -> list[RoundRecord]:
        for t in range(len(self.records), self.cfg.rounds):
            self.run_round(t)
        return self.records


def attack_impact(clean_max_accuracy: float, attacked_max_accuracy: float) -> float:
    """I = A_clean − A_attacked."""
    return clean_max_accuracy - attacked_max_accuracy


def _spread(values: list[float]) -> tuple[float, float]:
    """Median and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(np.median(arr)), std


def run_experiment(cfg: ExperimentConfig, seed: int) -> ExperimentReport:
    """Attacked run plus its paired clean baseline for one seed."""
    task = prepare_task(cfg, seed)
    attacked = FederatedSimulation(cfg, seed, task=task).run()
    if cfg.adversary.attack.kind == AttackKind.NONE:
        clean = attacked
    else:
        clean = FederatedSimulation(clean_config(cfg), seed, task=task).run()

    best = max(r.test_accuracy for r in attacked)
    clean_best = max(r.test_accuracy for r in clean)
    impact = attack_impact(clean_best, best)
    logger.info("experiment_completed", seed=seed, max_test_accuracy=best, attack_impact=impact)
    return ExperimentReport(
        per_round={seed: attacked},
        per_seed=[SeedResult(seed=seed, max_test_accuracy=best, clean_max_test_accuracy=clean_best, attack_impact=impact)],
        max_test_accuracy=best,
        attack_impact=impact,
        attack_cost=attack_cost(cfg.adversary, cfg.cost),
        malicious_ratio=malicious_ratio(cfg.adversary),
        median_max_accuracy=best,
        std_max_accuracy=0.0,
        median_attack_impact=impact,
        std_attack_impact=0.0,
        clean_per_round={seed: clean},
    )


def run_seed_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every configured seed and aggregate median / sample std."""
    reports = [run_experiment(cfg, seed) for seed in sorted(cfg.seeds)]
    per_seed = [r.per_seed[0] for r in reports]
    median_acc, std_acc = _spread([s.max_test_accuracy for s in per_seed])
    median_impact, std_impact = _spread([s.attack_impact for s in per_seed])
    return ExperimentReport(
        per_round={seed: recs for r in reports for seed, recs in r.per_round.items()},
        per_seed=per_seed,
        max_test_accuracy=median_acc,
        attack_impact=median_impact,
        attack_cost=reports[0].attack_cost,
        malicious_ratio=reports[0].malicious_ratio,
        median_max_accuracy=median_acc,
        std_max_accuracy=std_acc,
        median_attack_impact=median_impact,
        std_attack_impact=std_impact,
        clean_per_round={seed: recs for r in reports for seed, recs in r.clean_per_round.items()},
    )
