import time

import numpy as np
import pytest
from scipy.stats import chisquare, kendalltau, ks_2samp, kstest, norm

from vinequant.bicop import PairCopula, kendall_tau
from vinequant.dvine import DVineModel, independence_vine, markov_vine
from vinequant.errors import InvalidInputError
from vinequant.marginals import pseudo_observations
from vinequant.rng import RngStream
from vinequant.sampler import sample_data, sample_independent, sample_uniform_vine


def mixed_model():
    return DVineModel(
        p=4,
        m_trunc=3,
        pairs=(
            (
                PairCopula("clayton", (1.5,)),
                PairCopula("gumbel90", (2.0,)),
                PairCopula("frank", (-4.0,)),
            ),
            (PairCopula("gaussian", (0.5,)), PairCopula("clayton270", (1.0,))),
            (PairCopula("gumbel180", (1.7,)),),
        ),
    )


class TestSampleUniformVine:
    def test_independence_iid_uniform(self):
        u = sample_uniform_vine(independence_vine(4), 100_000, RngStream(1))
        for j in range(4):
            assert kstest(u[:, j], "uniform").pvalue > 0.01

    def test_gaussian_pair_correlation(self):
        model = markov_vine([PairCopula("gaussian", (0.8,))])
        u = sample_uniform_vine(model, 1_000_000, RngStream(2))
        r = np.corrcoef(norm.ppf(u[:, 0]), norm.ppf(u[:, 1]))[0, 1]
        assert 0.79 < r < 0.81

    def test_markov_clayton_lag1_tau(self):
        model = markov_vine([PairCopula("clayton", (2.0,))] * 4)
        u = sample_uniform_vine(model, 1_000_000, RngStream(3))
        for i in (0, 2):
            tau = kendalltau(u[:, i], u[:, i + 1]).statistic
            assert tau == pytest.approx(0.5, abs=0.01)

    def test_marginal_uniformity_mixed_model(self):
        u = sample_uniform_vine(mixed_model(), 100_000, RngStream(4))
        for j in range(4):
            assert kstest(u[:, j], "uniform").pvalue > 0.01

    def test_tree1_tau_roundtrip(self):
        model = DVineModel(
            p=3,
            m_trunc=2,
            pairs=(
                (PairCopula("gumbel", (2.5,)), PairCopula("clayton90", (1.5,))),
                (PairCopula("frank", (2.0,)),),
            ),
        )
        u = sample_uniform_vine(model, 1_000_000, RngStream(5))
        for i, cop in enumerate(model.pairs[0]):
            emp = kendalltau(u[:, i], u[:, i + 1]).statistic
            assert emp == pytest.approx(kendall_tau(cop), abs=0.02)

    def test_deterministic(self):
        model = mixed_model()
        a = sample_uniform_vine(model, 5000, RngStream(6))
        b = sample_uniform_vine(model, 5000, RngStream(6))
        c = sample_uniform_vine(model, 5000, RngStream(6, stream=1))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            sample_uniform_vine(independence_vine(3), 0, RngStream(0))


class TestSampleData:
    def test_range_confinement(self):
        data = np.random.default_rng(7).standard_cauchy((200, 3))
        ps = pseudo_observations(data)
        model = markov_vine([PairCopula("gaussian", (0.5,))] * 2)
        x = sample_data(model, ps, 5000, RngStream(8))
        for j in range(3):
            observed = set(data[:, j])
            assert set(np.unique(x[:, j])) <= observed

    def test_independence_matches_column_resampling(self):
        data = np.random.default_rng(9).standard_normal((50, 2))
        ps = pseudo_observations(data)
        x = sample_data(independence_vine(2), ps, 100_000, RngStream(10))
        for j in range(2):
            counts = np.array([(x[:, j] == v).sum() for v in data[:, j]])
            assert chisquare(counts).pvalue > 0.01

    def test_dimension_mismatch(self):
        data = np.random.default_rng(11).standard_normal((50, 3))
        ps = pseudo_observations(data)
        with pytest.raises(InvalidInputError):
            sample_data(independence_vine(2), ps, 10, RngStream(0))

    def test_runtime_budget(self):
        data = np.random.default_rng(12).standard_normal((500, 20))
        ps = pseudo_observations(data)
        model = DVineModel(
            p=20,
            m_trunc=2,
            pairs=(
                (PairCopula("gaussian", (0.75,)),) * 19,
                (PairCopula("gaussian", (-0.6,)),) * 18,
            ),
        )
        t0 = time.time()
        x = sample_data(model, ps, 40_000, RngStream(13))
        elapsed = time.time() - t0
        assert x.shape == (40_000, 20)
        assert elapsed < 30.0


class TestSampleIndependent:
    def test_same_law_as_independence_vine(self):
        data = np.random.default_rng(14).standard_normal((80, 2))
        ps = pseudo_observations(data)
        a = sample_independent(data, 50_000, RngStream(15))
        b = sample_data(independence_vine(2), ps, 50_000, RngStream(16))
        for j in range(2):
            assert ks_2samp(a[:, j], b[:, j]).pvalue > 0.01

    def test_single_value_column(self):
        out = sample_independent([np.array([7.5]), np.array([1.0, 2.0])], 100, RngStream(17))
        assert np.all(out[:, 0] == 7.5)

    def test_deterministic(self):
        data = np.random.default_rng(18).standard_normal((30, 4))
        a = sample_independent(data, 500, RngStream(19))
        b = sample_independent(data, 500, RngStream(19))
        assert np.array_equal(a, b)
