"""Server aggregation rules (AGRs)."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

from .config import AggregatorConfig, ModelSpec
from .log import get_logger
from .model import evaluate
from .types import AggregatorKind, ClientUpdate, LabeledDataset, ParameterVector

logger = get_logger(__name__)

Updates = Sequence[ClientUpdate] | NDArray[np.float64]


def stack_updates(updates: Updates) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Stack deltas sorted by client id.

    Returns:
        (matrix, positions) where positions[j] is the input index of row j
    """
    if isinstance(updates, np.ndarray):
        matrix = np.atleast_2d(np.asarray(updates, dtype=np.float64))
        if matrix.shape[0] == 0:
            raise ValueError("no client updates provided")
        return matrix, np.arange(matrix.shape[0])
    if len(updates) == 0:
        raise ValueError("no client updates provided")
    positions = np.argsort([u.client_id for u in updates], kind="stable")
    dims = {u.delta.shape for u in updates}
    if len(dims) != 1:
        raise ValueError(f"updates have mismatched dimensions: {sorted(dims)}")
    matrix = np.stack([updates[i].delta for i in positions]).astype(np.float64)
    return matrix, positions


def agg_fedavg(updates: Updates) -> ParameterVector:
    """Unweighted coordinate-wise mean."""
    matrix, _ = stack_updates(updates)
    return matrix.mean(axis=0)


def agg_median(updates: Updates) -> ParameterVector:
    """Coordinate-wise median (midpoint of the two central values for even n)."""
    matrix, _ = stack_updates(updates)
    return np.median(matrix, axis=0)


def agg_trimmed_mean(updates: Updates, m: int) -> ParameterVector:
    """Drop the m largest and m smallest values per coordinate, average the rest."""
    matrix, _ = stack_updates(updates)
    n = matrix.shape[0]
    if m < 0:
        raise ValueError("m must be non-negative")
    if n - 2 * m < 1:
        raise ValueError("over-trimming")
    return np.sort(matrix, axis=0)[m : n - m].mean(axis=0)


def multikrum_selection_size(n: int, m: int) -> int:
    """c = n − 2m − 3, the largest c with n − c > 2m + 2."""
    return n - 2 * m - 3


def multikrum_select(updates: Updates, m: int) -> list[int]:
    """Iterated Krum selection.

    Each step scores every pooled update by the sum of squared distances to its
    n′ − m − 2 nearest pooled neighbors (n′ = current pool size), moves the
    lowest score into S and repeats until |S| = c. Equal scores go to the
    lowest client id.

    Args:
        updates: Client updates (or an n × d matrix)
        m: Number of malicious updates the server assumes

    Returns:
        Indices into `updates`, in selection order
    """
    matrix, positions = stack_updates(updates)
    n = matrix.shape[0]
    c = multikrum_selection_size(n, m)
    if c < 1:
        raise ValueError("too many malicious for Multi-Krum")

    diff = matrix[:, None, :] - matrix[None, :, :]
    sq_dist = (diff * diff).sum(axis=-1)

    pool = list(range(n))
    selected: list[int] = []
    while len(selected) < c:
        k = len(pool) - m - 2
        sub = sq_dist[np.ix_(pool, pool)]
        scores = np.empty(len(pool))
        for j in range(len(pool)):
            others = np.delete(sub[j], j)
            scores[j] = np.sort(others)[:k].sum()
        best = int(np.argmin(scores))
        selected.append(pool.pop(best))

    return [int(positions[j]) for j in selected]


def agg_multi_krum(updates: Updates, m: int) -> ParameterVector:
    """Mean of the Multi-Krum selection."""
    chosen = sorted(multikrum_select(updates, m))
    if isinstance(updates, np.ndarray):
        return agg_fedavg(np.atleast_2d(updates)[chosen])
    return agg_fedavg([updates[i] for i in chosen])


def scale_to_norm(u: ParameterVector, tau: float) -> ParameterVector:
    """u · min(1, τ/‖u‖₂)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    norm = float(np.linalg.norm(u))
    if norm <= tau:
        return np.array(u, dtype=np.float64, copy=True)
    return u * (tau / norm)


def agg_norm_bounding(updates: Updates, tau: float) -> ParameterVector:
    """Mean of the updates after scaling each to norm at most τ."""
    matrix, _ = stack_updates(updates)
    return np.stack([scale_to_norm(row, tau) for row in matrix]).mean(axis=0)


def adaptive_stolen_weights(
    stolen_losses: NDArray[np.float64],
    validation_losses: NDArray[np.float64],
    literal: bool = False,
) -> NDArray[np.float64]:
    """Normalized weights L_v/(L_s+L_v) (or L_s/(L_s+L_v) when literal).

    Falls back to uniform weights when any L_s + L_v or the raw weight total
    is zero.
    """
    l_s = np.asarray(stolen_losses, dtype=np.float64)
    l_v = np.asarray(validation_losses, dtype=np.float64)
    n = l_s.shape[0]
    uniform = np.full(n, 1.0 / n)
    denom = l_s + l_v
    if np.any(denom == 0.0):
        logger.debug("adaptive_weights_uniform", reason="zero loss sum")
        return uniform
    raw = (l_s if literal else l_v) / denom
    total = raw.sum()
    if total == 0.0:
        return uniform
    return raw / total


def agg_adaptive_stolen(
    updates: Updates,
    global_params: ParameterVector,
    stolen: LabeledDataset,
    validation: LabeledDataset,
    tau: float,
    spec: ModelSpec,
    literal_weighting: bool = False,
) -> ParameterVector:
    """Norm-bound every update, then weight by its losses on stolen vs validation data.

    Updates with a smaller loss on the stolen set receive more weight.
    """
    if len(stolen) == 0 or len(validation) == 0:
        raise ValueError("adaptive-stolen needs non-empty stolen and validation sets")
    matrix, _ = stack_updates(updates)
    scaled = np.stack([scale_to_norm(row, tau) for row in matrix])
    l_s = np.array([evaluate(global_params + u, stolen, spec)[0] for u in scaled])
    l_v = np.array([evaluate(global_params + u, validation, spec)[0] for u in scaled])
    weights = adaptive_stolen_weights(l_s, l_v, literal=literal_weighting)
    return (weights[:, None] * scaled).sum(axis=0)


def max_known_m(kind: AggregatorKind, n: int) -> int | None:
    """Largest per-round m the rule admits for n updates (None when m is unused)."""
    if kind == AggregatorKind.TRIMMED_MEAN:
        return max(0, (n - 1) // 2)
    if kind == AggregatorKind.MULTI_KRUM:
        return max(0, (n - 4) // 2)
    return None


class Aggregator:
    """Server-side dispatcher over the configured AGR."""

    def __init__(
        self,
        cfg: AggregatorConfig,
        spec: ModelSpec | None = None,
        stolen: LabeledDataset | None = None,
        validation: LabeledDataset | None = None,
    ):
        """Initialize the aggregator.

        Args:
            cfg: Rule and its parameters
            spec: Model architecture (adaptive-stolen only)
            stolen: Data self-reported by compromised clients (adaptive-stolen only)
            validation: Server validation split (adaptive-stolen only)
        """
        if cfg.kind == AggregatorKind.ADAPTIVE_STOLEN and (spec is None or stolen is None or validation is None):
            raise ValueError("adaptive-stolen needs a model spec, stolen data and a validation set")
        self.cfg = cfg
        self.spec = spec
        self.stolen = stolen
        self.validation = validation

    def effective_m(self, n: int, known_m: int) -> int:
        limit = max_known_m(self.cfg.kind, n)
        if limit is not None and known_m > limit:
            logger.warning("known_m_clamped", aggregator=self.cfg.kind.value, known_m=known_m, clamped_to=limit, n=n)
            return limit
        return known_m

    def aggregate(self, updates: Sequence[ClientUpdate], global_params: ParameterVector, known_m: int = 0) -> ParameterVector:
        """Aggregate one round of updates.

        Args:
            updates: The round's submitted updates
            global_params: Current global model
            known_m: True number of malicious updates in the round

        Returns:
            Aggregate delta to apply to the global model
        """
        kind = self.cfg.kind
        if kind == AggregatorKind.FEDAVG:
            return agg_fedavg(updates)
        if kind == AggregatorKind.MEDIAN:
            return agg_median(updates)
        if kind == AggregatorKind.TRIMMED_MEAN:
            return agg_trimmed_mean(updates, self.effective_m(len(updates), known_m))
        if kind == AggregatorKind.MULTI_KRUM:
            return agg_multi_krum(updates, self.effective_m(len(updates), known_m))
        assert self.cfg.tau is not None
        if kind == AggregatorKind.NORM_BOUNDING:
            return agg_norm_bounding(updates, self.cfg.tau)
        assert self.spec is not None and self.stolen is not None and self.validation is not None
        return agg_adaptive_stolen(
            updates,
            global_params,
            self.stolen,
            self.validation,
            self.cfg.tau,
            self.spec,
            literal_weighting=self.cfg.literal_weighting,
        )
