import numpy as np
import pytest

import oracle
from pavesnow.dataset import SNOW, SNOW_FREE
from pavesnow.ensemble import (
    WEIGHT_GRID,
    EnsembleConfig,
    EnsembleError,
    decide_label,
    ensemble_predict,
    fit_weight,
)


def as_probs(snow_probs):
    snow = np.asarray(snow_probs, dtype=np.float64)
    return np.stack([1.0 - snow, snow], axis=1)


class TestEnsemblePredict:
    def test_weight_one_is_model_a_exactly(self):
        pa = as_probs([0.9, 0.2, 0.51])
        pb = as_probs([0.1, 0.8, 0.49])
        results = ensemble_predict(pa, pb, EnsembleConfig(weight_a=1.0))
        np.testing.assert_array_equal(np.stack([r.probs for r in results]), pa)

    def test_weight_zero_is_model_b_exactly(self):
        pa = as_probs([0.9, 0.2])
        pb = as_probs([0.1, 0.8])
        results = ensemble_predict(pa, pb, EnsembleConfig(weight_a=0.0))
        np.testing.assert_array_equal(np.stack([r.probs for r in results]), pb)

    def test_equal_weights_are_the_mean(self):
        results = ensemble_predict(
            as_probs([0.8]), as_probs([0.6]), EnsembleConfig(weight_a=0.5)
        )
        assert results[0].snow_probability == pytest.approx(0.7, abs=1e-12)

    def test_rows_stay_distributions(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            weight = float(rng.random())
            pa = as_probs(rng.random(6))
            pb = as_probs(rng.random(6))
            results = ensemble_predict(pa, pb, EnsembleConfig(weight_a=weight))
            combined = np.stack([r.probs for r in results])
            assert np.all(combined >= 0.0) and np.all(combined <= 1.0)
            np.testing.assert_allclose(combined.sum(axis=1), 1.0, atol=1e-9)

    def test_convexity_bounds(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            weight = float(rng.random())
            pa = as_probs(rng.random(5))
            pb = as_probs(rng.random(5))
            combined = np.stack(
                [r.probs for r in ensemble_predict(pa, pb, EnsembleConfig(weight_a=weight))]
            )
            lo = np.minimum(pa, pb)
            hi = np.maximum(pa, pb)
            assert np.all(combined >= lo - 1e-12)
            assert np.all(combined <= hi + 1e-12)

    def test_labels_at_extremes_match_solo_models(self):
        rng = np.random.default_rng(31)
        pa = as_probs(rng.random(10))
        pb = as_probs(rng.random(10))
        labels_a = [decide_label(p) for p in pa[:, 1]]
        labels_b = [decide_label(p) for p in pb[:, 1]]
        at_one = [r.label for r in ensemble_predict(pa, pb, EnsembleConfig(weight_a=1.0))]
        at_zero = [r.label for r in ensemble_predict(pa, pb, EnsembleConfig(weight_a=0.0))]
        assert at_one == labels_a
        assert at_zero == labels_b

    def test_exact_threshold_goes_to_snow(self):
        results = ensemble_predict(
            as_probs([0.5]), as_probs([0.5]), EnsembleConfig(weight_a=0.5)
        )
        assert results[0].label == SNOW

    def test_mismatched_batches_rejected(self):
        with pytest.raises(EnsembleError, match="mismatch"):
            ensemble_predict(as_probs([0.5, 0.5]), as_probs([0.5]), EnsembleConfig(0.5))

    def test_unnormalized_rows_rejected(self):
        bad = np.array([[0.9, 0.9]])
        with pytest.raises(EnsembleError, match="not normalized"):
            ensemble_predict(bad, as_probs([0.5]), EnsembleConfig(0.5))

    def test_per_model_probabilities_retained(self):
        results = ensemble_predict(
            as_probs([0.8]), as_probs([0.6]), EnsembleConfig(weight_a=0.5),
            record_ids=["r1"], true_labels=[SNOW],
        )
        assert results[0].record_id == "r1"
        assert results[0].true_label == SNOW
        assert results[0].probs_a[1] == pytest.approx(0.8)
        assert results[0].probs_b[1] == pytest.approx(0.6)


class TestConfig:
    def test_weight_out_of_range(self):
        with pytest.raises(EnsembleError):
            EnsembleConfig(weight_a=1.2)
        with pytest.raises(EnsembleError):
            EnsembleConfig(weight_a=-0.1)

    def test_threshold_open_interval(self):
        with pytest.raises(EnsembleError):
            EnsembleConfig(weight_a=0.5, decision_threshold=0.0)
        with pytest.raises(EnsembleError):
            EnsembleConfig(weight_a=0.5, decision_threshold=1.0)


class TestFitWeight:
    def test_strictly_better_model_takes_full_weight(self):
        # 20 snow samples whose decision flips to correct one grid step at a
        # time as weight_a grows, so macro-F1 is strictly increasing on the
        # grid and the optimum sits at the boundary.
        thresholds = [0.05 * j - 0.025 for j in range(1, 21)]
        a_probs, b_probs, labels = [], [], []
        for t in thresholds:
            if t < 0.5:
                a_probs.append(1.0)
                b_probs.append((0.5 - t) / (1.0 - t))
            else:
                a_probs.append(0.5 / t)
                b_probs.append(0.0)
            labels.append(SNOW)
        # anchor samples both models classify correctly
        a_probs += [0.1, 0.1]
        b_probs += [0.2, 0.2]
        labels += [SNOW_FREE, SNOW_FREE]
        config = fit_weight(as_probs(a_probs), as_probs(b_probs), labels)
        assert config.weight_a == 1.0

    def test_identical_models_tie_break_to_half(self):
        rng = np.random.default_rng(41)
        probs = as_probs(rng.random(8))
        labels = [SNOW if rng.random() < 0.5 else SNOW_FREE for _ in range(8)]
        config = fit_weight(probs, probs.copy(), labels)
        assert config.weight_a == 0.5

    def test_interior_weight_when_mixing_beats_both_solos(self):
        # A is right on snow but labels everything snow; B is right on
        # snow-free but labels everything snow-free. Only the mixture wins.
        labels = [SNOW] * 3 + [SNOW_FREE] * 3
        pa = as_probs([0.9, 0.9, 0.9, 0.8, 0.8, 0.8])
        pb = as_probs([0.2, 0.2, 0.2, 0.1, 0.1, 0.1])
        config = fit_weight(pa, pb, labels)
        expected, scores = oracle.naive_fit_weight(
            [0.9, 0.9, 0.9, 0.8, 0.8, 0.8], [0.2, 0.2, 0.2, 0.1, 0.1, 0.1], labels
        )
        assert 0.0 < config.weight_a < 1.0
        assert config.weight_a == expected == 0.5
        assert scores[config.weight_a] == 1.0
        assert scores[1.0] < 1.0 and scores[0.0] < 1.0

    def test_agrees_with_exhaustive_grid_oracle(self):
        rng = np.random.default_rng(2718)
        for _ in range(20):
            n = int(rng.integers(4, 13))
            a = rng.random(n)
            b = rng.random(n)
            labels = [SNOW if rng.random() < 0.5 else SNOW_FREE for _ in range(n)]
            config = fit_weight(as_probs(a), as_probs(b), labels)
            expected_weight, scores = oracle.naive_fit_weight(list(a), list(b), labels)
            assert config.weight_a == expected_weight
            assert max(scores.values()) == scores[config.weight_a]

    def test_grid_is_the_fixed_21_points(self):
        assert WEIGHT_GRID == tuple(round(0.05 * i, 2) for i in range(21))
        assert WEIGHT_GRID[0] == 0.0 and WEIGHT_GRID[-1] == 1.0

    def test_empty_validation_set_rejected(self):
        empty = np.zeros((0, 2))
        with pytest.raises(EnsembleError, match="empty"):
            fit_weight(empty, empty, [])
