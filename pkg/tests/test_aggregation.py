"""Tests for the server aggregation rules."""

import numpy as np
import pytest

from src.core.aggregation import (
    Aggregator,
    adaptive_stolen_weights,
    agg_adaptive_stolen,
    agg_fedavg,
    agg_median,
    agg_multi_krum,
    agg_norm_bounding,
    agg_trimmed_mean,
    max_known_m,
    multikrum_select,
    scale_to_norm,
)
from src.core.config import AggregatorConfig, ModelSpec
from src.core.model import evaluate, init_model
from src.core.types import AggregatorKind, ClientRole, ClientUpdate, LabeledDataset, ModelKind


def _updates(vectors, start_id=0):
    return [
        ClientUpdate(client_id=start_id + i, role=ClientRole.BENIGN, delta=np.asarray(v, dtype=float))
        for i, v in enumerate(vectors)
    ]


def _median_oracle(matrix):
    out = []
    for column in matrix.T:
        values = sorted(column.tolist())
        n = len(values)
        mid = n // 2
        out.append(values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2)
    return np.array(out)


def _trimmed_oracle(matrix, m):
    n = matrix.shape[0]
    kept = np.ascontiguousarray(np.array([sorted(column.tolist())[m : n - m] for column in matrix.T]).T)
    return np.mean(kept, axis=0)


def _krum_oracle(matrix, m):
    n = matrix.shape[0]
    c = n - 2 * m - 3
    pool = list(range(n))
    chosen = []
    while len(chosen) < c:
        k = len(pool) - m - 2
        best, best_score = None, None
        for i in pool:
            dists = sorted(float(np.sum((matrix[i] - matrix[j]) ** 2)) for j in pool if j != i)
            score = sum(dists[:k])
            if best_score is None or score < best_score:
                best, best_score = i, score
        chosen.append(best)
        pool.remove(best)
    return chosen


class TestSimpleRules:
    """Test FedAvg, Median and Trimmed-Mean."""

    def test_fedavg(self):
        """Identity and mean."""
        np.testing.assert_array_equal(agg_fedavg(_updates([[1.0, 2.0]])), [1.0, 2.0])
        np.testing.assert_array_equal(agg_fedavg(_updates([[1, 1], [3, 3]])), [2.0, 2.0])

    def test_fedavg_dominated_by_one_client(self):
        """A single norm-1e6 update among 24 unit updates dominates the mean."""
        rng = np.random.default_rng(0)
        benign = rng.normal(size=(24, 8))
        benign /= np.linalg.norm(benign, axis=1, keepdims=True)
        big = np.zeros(8)
        big[0] = 1e6
        result = agg_fedavg(_updates(np.vstack([benign, big])))
        assert np.linalg.norm(result) > 4e4

    def test_empty_rejected(self):
        """Every rule rejects an empty list."""
        for fn in (agg_fedavg, agg_median):
            with pytest.raises(ValueError):
                fn([])
        with pytest.raises(ValueError):
            agg_norm_bounding([], 1.0)

    def test_median(self):
        """Per-coordinate median with odd count."""
        np.testing.assert_array_equal(agg_median(_updates([[1, 2], [3, 4], [100, -100]])), [3.0, 2.0])

    def test_median_even_count_midpoint(self):
        """Even count averages the two central values."""
        np.testing.assert_array_equal(agg_median(_updates([[1], [2], [4], [10]])), [3.0])

    def test_median_identical(self):
        """Identical updates return that update."""
        u = [0.5, -1.5, 2.0]
        np.testing.assert_array_equal(agg_median(_updates([u] * 5)), u)

    def test_trimmed_mean(self):
        """{1,2,3,100} with m=1 averages 2 and 3."""
        assert agg_trimmed_mean(_updates([[1], [2], [3], [100]]), 1)[0] == 2.5

    def test_trimmed_mean_without_trimming(self):
        """m=0 equals FedAvg."""
        vectors = np.random.default_rng(1).normal(size=(7, 4))
        np.testing.assert_allclose(agg_trimmed_mean(_updates(vectors), 0), agg_fedavg(_updates(vectors)), atol=1e-14)

    def test_over_trimming(self):
        """n − 2m < 1 is an error."""
        with pytest.raises(ValueError, match="over-trimming"):
            agg_trimmed_mean(_updates([[1], [2], [3], [4]]), 2)

    def test_trimmed_extremes_ignored(self):
        """m copies of ±1e9 are trimmed away."""
        rng = np.random.default_rng(2)
        base = rng.normal(size=(5, 3))
        m = 2
        attacked = np.vstack([base, np.full((m, 3), 1e9), np.full((m, 3), -1e9)])
        np.testing.assert_allclose(agg_trimmed_mean(attacked, m), agg_trimmed_mean(base, 0), rtol=1e-12)

    def test_permutation_invariance(self):
        """Shuffling the update list does not change any rule."""
        rng = np.random.default_rng(3)
        updates = _updates(rng.normal(size=(11, 5)))
        shuffled = [updates[i] for i in rng.permutation(len(updates))]
        np.testing.assert_array_equal(agg_fedavg(updates), agg_fedavg(shuffled))
        np.testing.assert_array_equal(agg_median(updates), agg_median(shuffled))
        np.testing.assert_array_equal(agg_trimmed_mean(updates, 3), agg_trimmed_mean(shuffled, 3))
        np.testing.assert_array_equal(agg_multi_krum(updates, 2), agg_multi_krum(shuffled, 2))
        np.testing.assert_array_equal(agg_norm_bounding(updates, 1.0), agg_norm_bounding(shuffled, 1.0))

    def test_coordinate_bounds(self):
        """Median and Trimmed-Mean stay within the per-coordinate range."""
        matrix = np.random.default_rng(4).normal(size=(9, 6)) * 10
        for result in (agg_median(matrix), agg_trimmed_mean(matrix, 2)):
            assert np.all(result >= matrix.min(axis=0))
            assert np.all(result <= matrix.max(axis=0))


class TestMultiKrum:
    """Test iterated Krum selection."""

    def test_selection_size(self):
        """n=7, m=1 selects c=2 updates."""
        vectors = np.random.default_rng(0).normal(size=(7, 3))
        assert len(multikrum_select(_updates(vectors), 1)) == 2

    def test_outlier_never_selected(self):
        """Five clustered updates and one outlier: the outlier is not in S."""
        rng = np.random.default_rng(5)
        cluster = rng.normal(scale=0.1, size=(5, 4))
        outlier = np.full(4, 50.0)
        chosen = multikrum_select(_updates(np.vstack([cluster, outlier])), 0)
        assert len(chosen) == 3
        assert 5 not in chosen

    def test_too_many_malicious(self):
        """c < 1 is an error."""
        with pytest.raises(ValueError, match="too many malicious for Multi-Krum"):
            multikrum_select(_updates(np.zeros((6, 2))), 2)

    def test_identical_updates(self):
        """Identical updates aggregate to that update; ties go to the lowest ids."""
        u = [1.0, -2.0]
        updates = _updates([u] * 6, start_id=10)
        np.testing.assert_array_equal(agg_multi_krum(updates, 0), u)
        assert multikrum_select(updates, 0) == [0, 1, 2]

    def test_translation_invariance(self):
        """Selection is unchanged by a global shift."""
        matrix = np.random.default_rng(6).normal(size=(8, 5))
        assert multikrum_select(matrix, 1) == multikrum_select(matrix + 3.0, 1)

    def test_equals_fedavg_of_selection(self):
        """Result is FedAvg over the selected updates."""
        updates = _updates(np.random.default_rng(7).normal(size=(10, 3)))
        chosen = sorted(multikrum_select(updates, 2))
        np.testing.assert_array_equal(agg_multi_krum(updates, 2), agg_fedavg([updates[i] for i in chosen]))

    def test_indices_refer_to_input_positions(self):
        """Returned indices point into the caller's list, not the id order."""
        rng = np.random.default_rng(8)
        cluster = rng.normal(scale=0.1, size=(5, 2))
        vectors = np.vstack([np.full(2, 40.0), cluster])
        updates = _updates(vectors)
        reversed_updates = list(reversed(updates))
        chosen = multikrum_select(reversed_updates, 0)
        assert all(reversed_updates[i].client_id != 0 for i in chosen)


class TestNormBounding:
    """Test norm scaling and Norm-Bounding."""

    def test_scale_to_norm(self):
        """[3,4] scaled to 2.5 halves exactly."""
        np.testing.assert_array_equal(scale_to_norm(np.array([3.0, 4.0]), 2.5), [1.5, 2.0])

    def test_scale_passes_short_vectors(self):
        """Vectors within τ and the zero vector pass unchanged."""
        v = np.array([0.3, 0.4])
        np.testing.assert_array_equal(scale_to_norm(v, 1.0), v)
        np.testing.assert_array_equal(scale_to_norm(np.zeros(3), 1.0), np.zeros(3))

    def test_all_within_bound_equals_fedavg(self):
        """Norms below τ leave FedAvg unchanged."""
        vectors = np.random.default_rng(0).normal(size=(6, 3)) * 0.01
        np.testing.assert_array_equal(agg_norm_bounding(_updates(vectors), 10.0), agg_fedavg(_updates(vectors)))

    def test_large_update_bounded(self):
        """A norm-1e6 update among unit updates keeps the aggregate within τ."""
        rng = np.random.default_rng(1)
        unit = rng.normal(size=(9, 4))
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        big = np.array([1e6, 0.0, 0.0, 0.0])
        assert np.linalg.norm(agg_norm_bounding(np.vstack([unit, big]), 1.0)) <= 1.0 + 1e-12

    def test_output_norm_bound(self):
        """Output norm ≤ max of min(‖u‖, τ)."""
        matrix = np.random.default_rng(2).normal(size=(12, 5)) * 3
        tau = 2.0
        bound = max(min(np.linalg.norm(row), tau) for row in matrix)
        assert np.linalg.norm(agg_norm_bounding(matrix, tau)) <= bound + 1e-12


class TestRandomizedOracles:
    """Randomized instances against independent oracles (n ≤ 30, d ≤ 16)."""

    def test_thousand_instances(self):
        """Median, Trimmed-Mean, Multi-Krum and Norm-Bounding match their oracles."""
        rng = np.random.default_rng(2024)
        for case in range(1000):
            kind = case % 4
            d = int(rng.integers(1, 17))
            if kind == 2:
                n = int(rng.integers(4, 9))
                m = int(rng.integers(0, (n - 4) // 2 + 1))
            else:
                n = int(rng.integers(1, 31))
                m = int(rng.integers(0, (n - 1) // 2 + 1))
            matrix = rng.normal(size=(n, d)) * rng.uniform(0.1, 10.0)
            updates = _updates(matrix)

            if kind == 0:
                np.testing.assert_array_equal(agg_median(updates), _median_oracle(matrix))
            elif kind == 1:
                np.testing.assert_array_equal(agg_trimmed_mean(updates, m), _trimmed_oracle(matrix, m))
            elif kind == 2:
                assert multikrum_select(updates, m) == _krum_oracle(matrix, m)
                expected = matrix[sorted(_krum_oracle(matrix, m))].mean(axis=0)
                np.testing.assert_array_equal(agg_multi_krum(updates, m), expected)
            else:
                tau = float(rng.uniform(0.1, 20.0))
                scaled = []
                for row in matrix:
                    norm = np.sqrt(np.sum(row**2))
                    scaled.append(row * min(1.0, tau / norm) if norm > 0 else row)
                np.testing.assert_allclose(agg_norm_bounding(updates, tau), np.mean(scaled, axis=0), atol=1e-12)


class TestAdaptiveStolen:
    """Test the stolen-data adaptive defense."""

    def setup_method(self):
        """Set up test fixtures."""
        self.spec = ModelSpec(kind=ModelKind.LOGISTIC_REGRESSION, input_dim=3, num_classes=3)
        rng = np.random.default_rng(0)
        self.stolen = LabeledDataset(rng.normal(size=(12, 3)), rng.integers(0, 3, 12), 3)
        self.validation = LabeledDataset(rng.normal(size=(12, 3)), rng.integers(0, 3, 12), 3)
        self.global_params = init_model(self.spec, 0)

    def test_formula(self):
        """(1,1) and (3,1) give 2/3 and 1/3."""
        weights = adaptive_stolen_weights(np.array([1.0, 3.0]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(weights, [2 / 3, 1 / 3])

    def test_literal_formula(self):
        """The literal reading weights by L_s/(L_s+L_v)."""
        weights = adaptive_stolen_weights(np.array([1.0, 3.0]), np.array([1.0, 1.0]), literal=True)
        np.testing.assert_allclose(weights, [0.5 / 1.25, 0.75 / 1.25])

    def test_degenerate_losses_uniform(self):
        """A zero loss sum falls back to uniform weights."""
        weights = adaptive_stolen_weights(np.array([0.0, 2.0, 1.0]), np.array([0.0, 1.0, 1.0]))
        np.testing.assert_array_equal(weights, np.full(3, 1 / 3))

    def test_weights_reverse_stolen_loss(self):
        """With a common validation loss, smaller stolen loss means larger weight."""
        l_s = np.random.default_rng(1).uniform(0.1, 5.0, size=10)
        weights = adaptive_stolen_weights(l_s, np.full(10, 2.0))
        assert weights.sum() == pytest.approx(1.0)
        assert np.all((weights >= 0) & (weights <= 1))
        np.testing.assert_array_equal(np.argsort(weights), np.argsort(-l_s))

    def test_identical_updates_equal_norm_bounding(self):
        """Identical losses reduce to Norm-Bounding."""
        updates = _updates([[0.5, -0.2, 0.1] * 4] * 4)
        result = agg_adaptive_stolen(updates, self.global_params, self.stolen, self.validation, 0.3, self.spec)
        np.testing.assert_allclose(result, agg_norm_bounding(updates, 0.3), atol=1e-12)

    def test_matches_direct_loss_computation(self):
        """The aggregate equals the hand-weighted sum of scaled updates."""
        rng = np.random.default_rng(2)
        matrix = rng.normal(size=(5, self.spec.dim))
        tau = 1.5
        result = agg_adaptive_stolen(_updates(matrix), self.global_params, self.stolen, self.validation, tau, self.spec)

        scaled = np.stack([scale_to_norm(row, tau) for row in matrix])
        l_s = np.array([evaluate(self.global_params + u, self.stolen, self.spec)[0] for u in scaled])
        l_v = np.array([evaluate(self.global_params + u, self.validation, self.spec)[0] for u in scaled])
        raw = l_v / (l_s + l_v)
        np.testing.assert_allclose(result, (raw / raw.sum()) @ scaled, atol=1e-12)


class TestAggregator:
    """Test the server-side dispatcher."""

    def test_dispatch(self):
        """Each kind routes to its rule."""
        matrix = np.random.default_rng(0).normal(size=(9, 3))
        updates = _updates(matrix)
        g = np.zeros(3)
        assert np.array_equal(Aggregator(AggregatorConfig(kind=AggregatorKind.FEDAVG)).aggregate(updates, g), agg_fedavg(updates))
        assert np.array_equal(Aggregator(AggregatorConfig(kind=AggregatorKind.MEDIAN)).aggregate(updates, g), agg_median(updates))
        assert np.array_equal(
            Aggregator(AggregatorConfig(kind=AggregatorKind.TRIMMED_MEAN)).aggregate(updates, g, known_m=2),
            agg_trimmed_mean(updates, 2),
        )
        assert np.array_equal(
            Aggregator(AggregatorConfig(kind=AggregatorKind.NORM_BOUNDING, tau=0.5)).aggregate(updates, g),
            agg_norm_bounding(updates, 0.5),
        )

    def test_known_m_clamped(self):
        """A per-round m beyond what the rule admits is clamped."""
        updates = _updates(np.random.default_rng(1).normal(size=(9, 2)))
        agg = Aggregator(AggregatorConfig(kind=AggregatorKind.MULTI_KRUM))
        assert max_known_m(AggregatorKind.MULTI_KRUM, 9) == 2
        np.testing.assert_array_equal(agg.aggregate(updates, np.zeros(2), known_m=5), agg_multi_krum(updates, 2))
        assert Aggregator(AggregatorConfig(kind=AggregatorKind.TRIMMED_MEAN)).effective_m(9, 7) == 4

    def test_adaptive_needs_context(self):
        """adaptive-stolen without stolen data is rejected."""
        with pytest.raises(ValueError):
            Aggregator(AggregatorConfig(kind=AggregatorKind.ADAPTIVE_STOLEN, tau=1.0))

    def test_tau_required(self):
        """Norm-bounding configs need τ."""
        with pytest.raises(ValueError):
            AggregatorConfig(kind=AggregatorKind.NORM_BOUNDING)
