"""Malicious update crafting: MPAF and DYN-OPT with per-AGR γ search."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .aggregation import (
    Updates,
    agg_fedavg,
    agg_median,
    agg_trimmed_mean,
    max_known_m,
    multikrum_select,
    multikrum_selection_size,
    scale_to_norm,
    stack_updates,
)
from .config import AttackConfig, GammaSearchConfig
from .log import get_logger
from .types import (
    AggregatorKind,
    AttackKind,
    ClientUpdate,
    GammaSearchResult,
    MpafConfig,
    ParameterVector,
    PerturbationKind,
)

logger = get_logger(__name__)

DEFAULT_FEDAVG_GAMMA = 1e6
DEFAULT_NORM_BOUNDING_GAMMA = 10.0

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_TIE_RTOL = 1e-12


def craft_mpaf(global_params: ParameterVector, cfg: MpafConfig) -> ParameterVector:
    """λ(θ' − θ^t); needs nothing but the global model."""
    if global_params.shape != cfg.base_model.shape:
        raise ValueError(f"dimension mismatch: {global_params.shape} vs {cfg.base_model.shape}")
    return cfg.lam * (cfg.base_model - global_params)


def benign_reference(reference_updates: Updates) -> ParameterVector:
    """θ^b: mean of the updates the adversary holds."""
    return agg_fedavg(reference_updates)


def random_unit_direction(dim: int, seed: int) -> ParameterVector:
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def perturbation_direction(
    kind: PerturbationKind,
    reference_updates: Updates,
    seed: int = 0,
) -> ParameterVector:
    """ω for DYN-OPT.

    Args:
        kind: inverse-unit, inverse-sign, inverse-std or random-unit
        reference_updates: Updates the adversary holds
        seed: Only used by random-unit

    Returns:
        Perturbation direction
    """
    matrix, _ = stack_updates(reference_updates)
    theta_b = matrix.mean(axis=0)
    if kind == PerturbationKind.INVERSE_UNIT:
        norm = float(np.linalg.norm(theta_b))
        if norm == 0.0:
            logger.debug("zero_reference_norm", direction=kind.value)
            return np.zeros_like(theta_b)
        return -theta_b / norm
    if kind == PerturbationKind.INVERSE_SIGN:
        return -np.sign(theta_b)
    if kind == PerturbationKind.INVERSE_STD:
        if matrix.shape[0] < 2:
            raise ValueError("inverse-std needs at least 2 reference updates")
        return -matrix.std(axis=0, ddof=1)
    return random_unit_direction(theta_b.shape[0], seed)


def dyn_opt_fedavg(
    reference_updates: Updates,
    seed: int,
    gamma: float = DEFAULT_FEDAVG_GAMMA,
) -> ParameterVector:
    """θ^b + γ·ω with a seeded random unit ω and a very large γ."""
    theta_b = benign_reference(reference_updates)
    return theta_b + gamma * random_unit_direction(theta_b.shape[0], seed)


def _stand_ins(reference_updates: Updates, count: int) -> NDArray[np.float64]:
    """The adversary's own references, tiled cyclically, in place of unseen benign updates."""
    matrix, _ = stack_updates(reference_updates)
    rows = [matrix[i % matrix.shape[0]] for i in range(count)]
    return np.stack(rows) if rows else np.zeros((0, matrix.shape[1]))


def _simulated_round(
    malicious: ParameterVector, stand_ins: NDArray[np.float64], m_round: int
) -> NDArray[np.float64]:
    # malicious copies occupy rows 0..m_round-1
    return np.vstack([np.tile(malicious, (m_round, 1)), stand_ins])


def dyn_opt_multikrum(
    reference_updates: Updates,
    n_round: int,
    m_round: int,
    search: GammaSearchConfig,
    direction: ParameterVector | None = None,
) -> GammaSearchResult:
    """Largest γ for which Multi-Krum keeps every malicious copy in S.

    Starting from gamma_init the search doubles while feasible (or halves while
    infeasible), then bisects the bracket to rel_precision. γ is capped at
    gamma_hi; when nothing down to gamma_lo is feasible, gamma_lo is returned
    with constraint_met=False.

    Args:
        reference_updates: Updates the adversary holds
        n_round: Number of updates the server receives this round
        m_round: Number of malicious clients selected this round
        search: Search schedule
        direction: ω (defaults to inverse-std of the references)

    Returns:
        GammaSearchResult with update θ^b + γ*·ω
    """
    theta_b = benign_reference(reference_updates)
    if m_round == 0:
        return GammaSearchResult(update=theta_b, gamma_star=0.0)
    omega = perturbation_direction(PerturbationKind.INVERSE_STD, reference_updates) if direction is None else direction
    stand_ins = _stand_ins(reference_updates, n_round - m_round)
    wanted = set(range(m_round))

    def feasible(gamma: float) -> bool:
        chosen = multikrum_select(_simulated_round(theta_b + gamma * omega, stand_ins, m_round), m_round)
        return wanted.issubset(chosen)

    def unmet() -> GammaSearchResult:
        logger.info("gamma_search_unmet", target="multi-krum", n_round=n_round, m_round=m_round, gamma=search.gamma_lo)
        return GammaSearchResult(
            update=theta_b + search.gamma_lo * omega, gamma_star=search.gamma_lo, constraint_met=False
        )

    c = multikrum_selection_size(n_round, m_round)
    if c < 1 or c < m_round:
        return unmet()

    lo: float
    hi: float
    gamma = min(search.gamma_init, search.gamma_hi)
    if feasible(gamma):
        lo = gamma
        while True:
            candidate = min(2.0 * lo, search.gamma_hi)
            if candidate <= lo:
                return GammaSearchResult(update=theta_b + lo * omega, gamma_star=lo)
            if not feasible(candidate):
                hi = candidate
                break
            lo = candidate
    else:
        hi = gamma
        while True:
            candidate = hi / 2.0
            if candidate < search.gamma_lo:
                if not feasible(search.gamma_lo):
                    return unmet()
                lo = search.gamma_lo
                break
            if feasible(candidate):
                lo = candidate
                break
            hi = candidate

    while hi - lo > search.rel_precision * lo:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return GammaSearchResult(update=theta_b + lo * omega, gamma_star=lo, infeasible_bound=hi)


def _best(evaluated: list[tuple[float, float]]) -> tuple[float, float]:
    """Highest objective; near-ties go to the smaller γ."""
    top = max(obj for _, obj in evaluated)
    tol = _TIE_RTOL * max(1.0, abs(top))
    return min((g, obj) for g, obj in evaluated if obj >= top - tol)


def dyn_opt_trimmed_median(
    reference_updates: Updates,
    agr_kind: AggregatorKind,
    n_round: int,
    m_round: int,
    search: GammaSearchConfig,
    direction: ParameterVector | None = None,
) -> GammaSearchResult:
    """γ maximizing ‖θ^b − AGR(round)‖ against Trimmed-Mean or Median.

    The objective is evaluated on a log-spaced grid over [gamma_lo, gamma_hi];
    the best grid cell is refined by golden-section search to rel_precision.

    Returns:
        GammaSearchResult with update θ^b + γ*·ω and the objective at γ*
    """
    if agr_kind not in (AggregatorKind.TRIMMED_MEAN, AggregatorKind.MEDIAN):
        raise ValueError(f"unsupported target for this variant: {agr_kind.value}")
    theta_b = benign_reference(reference_updates)
    omega = perturbation_direction(PerturbationKind.INVERSE_STD, reference_updates) if direction is None else direction
    if m_round == 0:
        return GammaSearchResult(
            update=theta_b + search.gamma_lo * omega, gamma_star=search.gamma_lo, objective=0.0
        )

    stand_ins = _stand_ins(reference_updates, n_round - m_round)
    trim = min(m_round, max_known_m(AggregatorKind.TRIMMED_MEAN, n_round) or 0)
    aggregate: Callable[[NDArray[np.float64]], ParameterVector]
    if agr_kind == AggregatorKind.MEDIAN:
        aggregate = agg_median
    else:
        def aggregate(matrix: NDArray[np.float64]) -> ParameterVector:
            return agg_trimmed_mean(matrix, trim)

    evaluated: list[tuple[float, float]] = []

    def objective(gamma: float) -> float:
        value = float(np.linalg.norm(theta_b - aggregate(_simulated_round(theta_b + gamma * omega, stand_ins, m_round))))
        evaluated.append((gamma, value))
        return value

    grid = np.geomspace(search.gamma_lo, search.gamma_hi, search.grid_points)
    for g in grid:
        objective(float(g))
    best_gamma, _ = _best(evaluated)
    i = int(np.searchsorted(grid, best_gamma))

    a = float(grid[max(i - 1, 0)])
    b = float(grid[min(i + 1, len(grid) - 1)])
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > search.rel_precision * a:
        if fc >= fd - _TIE_RTOL * max(1.0, abs(fd)):
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)

    gamma_star, value = _best(evaluated)
    return GammaSearchResult(update=theta_b + gamma_star * omega, gamma_star=gamma_star, objective=value)


def dyn_opt_norm_bounding(
    reference_updates: Updates,
    tau: float,
    gamma: float = DEFAULT_NORM_BOUNDING_GAMMA,
    direction: ParameterVector | None = None,
) -> ParameterVector:
    """Scale(θ^b + γ·ω, τ)."""
    theta_b = benign_reference(reference_updates)
    omega = perturbation_direction(PerturbationKind.INVERSE_STD, reference_updates) if direction is None else direction
    return scale_to_norm(theta_b + gamma * omega, tau)


class Adversary:
    """Crafts the single malicious update all selected malicious clients submit."""

    def __init__(
        self,
        attack: AttackConfig,
        target: AggregatorKind,
        tau: float | None = None,
        base_model: ParameterVector | None = None,
    ):
        """Initialize the adversary.

        Args:
            attack: Attack settings
            target: AGR the attack is tailored to
            tau: Norm bound of the target (norm-bounding and adaptive-stolen)
            base_model: θ' for MPAF
        """
        if attack.kind == AttackKind.FAKE_MPAF and base_model is None:
            raise ValueError("fake-mpaf needs a base model")
        if attack.kind == AttackKind.DYN_OPT and target.needs_tau and tau is None:
            raise ValueError(f"dyn-opt against {target.value} needs tau")
        self.attack = attack
        self.target = target
        self.tau = tau
        self.base_model = base_model

    @property
    def needs_references(self) -> bool:
        return self.attack.kind == AttackKind.DYN_OPT

    def perturbation_kind(self, n_references: int) -> PerturbationKind:
        kind = self.attack.perturbation
        if kind is None:
            kind = PerturbationKind.RANDOM_UNIT if self.target == AggregatorKind.FEDAVG else PerturbationKind.INVERSE_STD
        if kind == PerturbationKind.INVERSE_STD and n_references < 2:
            logger.warning("perturbation_fallback", requested=kind.value, used="inverse-unit", n_references=n_references)
            return PerturbationKind.INVERSE_UNIT
        return kind

    def craft(
        self,
        global_params: ParameterVector,
        references: Sequence[ClientUpdate],
        n_round: int,
        m_round: int,
        seed: int,
    ) -> GammaSearchResult | None:
        """Craft this round's malicious update.

        Args:
            global_params: Current global model
            references: Reference updates (DYN-OPT only)
            n_round: Updates the server receives this round
            m_round: Selected malicious clients this round
            seed: Attack stream seed for the round

        Returns:
            The crafted update, or None when no attack happens this round
        """
        if self.attack.kind == AttackKind.NONE or m_round == 0:
            return None
        if self.attack.kind == AttackKind.FAKE_MPAF:
            assert self.base_model is not None
            update = craft_mpaf(global_params, MpafConfig(base_model=self.base_model, lam=self.attack.lam))
            return GammaSearchResult(update=update, gamma_star=self.attack.lam)

        refs = references
        kind = self.perturbation_kind(len(refs))
        omega = perturbation_direction(kind, refs, seed=seed)
        search = self.attack.gamma_search

        if self.target == AggregatorKind.FEDAVG:
            gamma = self.attack.fixed_gamma or DEFAULT_FEDAVG_GAMMA
            if kind == PerturbationKind.RANDOM_UNIT:
                return GammaSearchResult(update=dyn_opt_fedavg(refs, seed, gamma), gamma_star=gamma)
            return GammaSearchResult(update=benign_reference(refs) + gamma * omega, gamma_star=gamma)
        if self.target == AggregatorKind.MULTI_KRUM:
            return dyn_opt_multikrum(refs, n_round, m_round, search, direction=omega)
        if self.target in (AggregatorKind.TRIMMED_MEAN, AggregatorKind.MEDIAN):
            return dyn_opt_trimmed_median(refs, self.target, n_round, m_round, search, direction=omega)

        # norm-bounding, and adaptive-stolen which projects to τ before weighting
        assert self.tau is not None
        gamma = self.attack.fixed_gamma or DEFAULT_NORM_BOUNDING_GAMMA
        update = dyn_opt_norm_bounding(refs, self.tau, gamma, direction=omega)
        return GammaSearchResult(update=update, gamma_star=gamma)
