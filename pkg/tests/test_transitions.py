import numpy as np
import pytest
from dataclasses import replace

from domm.core import AolSequence, DataError, RolSequence
from domm.transitions import (
    fit_kde,
    fit_transition_model,
    kde_density,
    silverman_bandwidth,
    transition_distribution,
    transition_matrices,
)

L, M, H = 0, 1, 2


def kde_integral(model, n_points=4001):
    lo = model.samples.min() - 5 * model.bandwidth
    hi = model.samples.max() + 5 * model.bandwidth
    grid = np.linspace(lo, hi, n_points)
    return np.trapezoid(kde_density(model, grid), grid)


def make_model(sequences, **kwargs):
    aols, rols = [], []
    for idx, (labels, values) in enumerate(sequences):
        uid = f"u{idx}"
        aols.append(AolSequence(uid, np.asarray(labels)))
        from scipy.stats import rankdata

        rols.append(RolSequence.from_ranks(uid, rankdata(values, method="average")))
    return fit_transition_model(aols, rols, **kwargs)


class TestKde:
    def test_single_sample_forced_bandwidth_peak(self):
        model = fit_kde([0.0], bandwidth=1.0)
        assert kde_density(model, 0.0) == pytest.approx(1.0 / np.sqrt(2 * np.pi))

    def test_integrates_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            model = fit_kde(rng.normal(size=int(rng.integers(5, 200))))
            assert kde_integral(model) == pytest.approx(1.0, abs=1e-3)

    def test_constant_samples_use_bandwidth_floor(self):
        model = fit_kde(np.full(20, 0.7))
        assert model.bandwidth == 1e-3
        grid = np.linspace(0.5, 0.9, 801)
        dens = kde_density(model, grid)
        assert grid[np.argmax(dens)] == pytest.approx(0.7, abs=1e-3)

    def test_symmetric_samples_give_symmetric_density(self):
        model = fit_kde([-1.0, 1.0], bandwidth=0.5)
        for x in (0.2, 0.9, 3.0):
            assert kde_density(model, x) == pytest.approx(kde_density(model, -x))

    def test_far_query_hits_floor(self):
        model = fit_kde([0.0, 0.1], bandwidth=0.01)
        assert kde_density(model, 50.0) == model.density_floor

    def test_hand_evaluated_sum_of_gaussians(self):
        samples = np.array([-0.3, 0.1, 0.4])
        h = 0.2
        model = fit_kde(samples, bandwidth=h)
        x = 0.05
        expected = np.mean(np.exp(-0.5 * ((x - samples) / h) ** 2) / (h * np.sqrt(2 * np.pi)))
        assert kde_density(model, x) == pytest.approx(expected, abs=1e-12)

    def test_empty_samples_error(self):
        with pytest.raises(DataError):
            fit_kde([])

    def test_silverman_matches_formula(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=100)
        q75, q25 = np.percentile(s, [75, 25])
        expected = 0.9 * min(s.std(ddof=1), (q75 - q25) / 1.34) * 100 ** (-0.2)
        assert silverman_bandwidth(s) == pytest.approx(expected)


class TestFitTransitionModel:
    def test_hand_counted_prior_row(self):
        model = make_model([([L, L, M, H, H], [0.1, 0.2, 0.3, 0.4, 0.5])])
        np.testing.assert_allclose(model.prior[L], [2 / 5, 2 / 5, 1 / 5])
        assert model.counts[L, L] == 1 and model.counts[L, M] == 1
        assert model.counts[M, H] == 1 and model.counts[H, H] == 1

    def test_rows_are_stochastic_and_positive(self):
        rng = np.random.default_rng(5)
        seqs = [
            (rng.integers(0, 3, 40), rng.normal(size=40))
            for _ in range(4)
        ]
        model = make_model(seqs)
        np.testing.assert_allclose(model.prior.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(model.prior > 0)

    def test_sparse_cells_fall_back_to_marginal(self):
        model = make_model([([L] * 30 + [M] * 2, np.arange(32.0))], min_cell_samples=10)
        # L->M happened once; its KDE must be the L-row marginal
        assert model.conditional_kdes[L][M] is model.marginal_kdes[L]
        # H never appears as predecessor; its marginal is the pooled fallback
        assert model.marginal_kdes[H] is model.marginal_kdes[H]
        assert kde_integral(model.marginal_kdes[H]) == pytest.approx(1.0, abs=1e-3)

    def test_no_pairs_errors(self):
        with pytest.raises(DataError, match="consecutive"):
            make_model([([L], [0.5])])

    def test_deltas_in_unit_interval(self):
        rng = np.random.default_rng(7)
        seqs = [(rng.integers(0, 3, 50), rng.normal(size=50)) for _ in range(3)]
        model = make_model(seqs)
        for row in model.conditional_kdes:
            for kde in row:
                assert np.all(kde.samples >= -1.0) and np.all(kde.samples <= 1.0)

    def test_raw_rank_mode_uses_unnormalized_differences(self):
        rng = np.random.default_rng(9)
        seqs = [(rng.integers(0, 3, 30), rng.normal(size=30)) for _ in range(2)]
        model = make_model(seqs, use_normalized_ranks=False)
        assert not model.use_normalized_ranks
        pooled = np.concatenate(
            [kde.samples for row in model.conditional_kdes for kde in row]
        )
        # raw tied-average rank differences on 30 frames exceed the [-1, 1] band
        assert np.max(np.abs(pooled)) > 1.0
        back = type(model).from_dict(model.to_dict())
        assert back.use_normalized_ranks is False


class TestTransitionDistribution:
    def _any_model(self, seed=11, **kwargs):
        rng = np.random.default_rng(seed)
        values = np.cumsum(rng.normal(size=200))
        labels = np.digitize(values, np.percentile(values, [33, 66]))
        return make_model([(labels, values)], **kwargs)

    def test_outputs_are_distributions(self):
        model = self._any_model()
        rng = np.random.default_rng(13)
        for _ in range(50):
            out = transition_distribution(model, int(rng.integers(0, 3)), float(rng.uniform(-1, 1)))
            assert np.all(out >= 0)
            assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_uninformative_likelihood_reduces_to_prior(self):
        model = self._any_model()
        shared = fit_kde(np.linspace(-0.5, 0.5, 30))
        for mode in ("separate-kde", "marginalized"):
            flat = replace(
                model,
                conditional_kdes=tuple(
                    tuple(shared for _ in range(3)) for _ in range(3)
                ),
                marginal_kdes=(shared, shared, shared),
                denominator_mode=mode,
            )
            for prev in range(3):
                out = transition_distribution(flat, prev, 0.123)
                np.testing.assert_allclose(out, model.prior[prev], atol=1e-9)

    def test_marginalized_mode_sums_to_one_before_renormalization(self):
        model = self._any_model(denominator_mode="marginalized")
        rng = np.random.default_rng(17)
        raw = transition_matrices(model, rng.uniform(-1, 1, 40), renormalize=False)
        np.testing.assert_allclose(raw.sum(axis=2), 1.0, atol=1e-12)

    def test_large_negative_delta_boosts_downward_transition(self):
        # construct sequences where high-to-low transitions coincide with large
        # negative rank differences, mirroring the trained-density shape
        rng = np.random.default_rng(19)
        seqs = []
        for _ in range(6):
            values = np.concatenate([rng.uniform(0.8, 1.0, 20), rng.uniform(0.0, 0.2, 20)])
            labels = np.array([H] * 20 + [L] * 20)
            seqs.append((labels, values))
        model = make_model(seqs, min_cell_samples=5)
        out = transition_distribution(model, H, -0.6)
        assert out[L] > model.prior[H, L]

    def test_scalar_matches_batch(self):
        model = self._any_model()
        deltas = np.linspace(-0.9, 0.9, 7)
        batch = transition_matrices(model, deltas)
        for t, d in enumerate(deltas):
            for prev in range(3):
                np.testing.assert_array_equal(
                    transition_distribution(model, prev, d), batch[t, prev]
                )

    def test_round_trip_serialization(self):
        model = self._any_model()
        back = type(model).from_dict(model.to_dict())
        np.testing.assert_array_equal(back.prior, model.prior)
        np.testing.assert_array_equal(
            back.conditional_kdes[0][1].samples, model.conditional_kdes[0][1].samples
        )
        assert back.denominator_mode == model.denominator_mode
