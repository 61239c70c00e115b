import numpy as np
import pytest

from conftest import surface
from nngp_al import nn_core as nc
from nngp_al import stochastic_inference as si
from nngp_al.errors import UsageError
from nngp_al.gp_approx import empirical_covariance


@pytest.fixture
def small_net():
    specs = [nc.LayerSpec(2, 6), nc.LayerSpec(6, 6), nc.LayerSpec(6, 1, nc.IDENTITY)]
    return nc.init_network(specs, 0.3, seed=17)


class TestSamplePasses:
    def test_no_dropout_rows_identical_to_clean_pass(self, small_net):
        points = np.random.default_rng(0).uniform(-1, 1, size=(7, 2))
        samples = si.sample_passes(small_net, points, n_passes=5, rate=0.0, seed=1)
        clean = nc.forward_batch(small_net, points)
        for row in samples.values:
            np.testing.assert_array_equal(row, clean)

    def test_deterministic_per_seed(self, small_net):
        points = np.random.default_rng(1).uniform(-1, 1, size=(4, 2))
        a = si.sample_passes(small_net, points, 16, 0.3, seed=9)
        b = si.sample_passes(small_net, points, 16, 0.3, seed=9)
        np.testing.assert_array_equal(a.values, b.values)
        c = si.sample_passes(small_net, points, 16, 0.3, seed=10)
        assert not np.array_equal(a.values, c.values)

    def test_single_hidden_unit_two_states(self):
        # 1 hidden unit at rate 0.5: kept -> scaled activation, dropped -> bias only
        net = nc.Network(
            layers=(nc.LayerSpec(1, 1, nc.LEAKY_RELU, 0.1), nc.LayerSpec(1, 1, nc.IDENTITY)),
            weights=[np.array([[2.0]]), np.array([[1.5]])],
            biases=[np.array([0.5]), np.array([-0.25])],
            dropout_rate=0.5,
        )
        samples = si.sample_passes(net, [[0.8]], 64, 0.5, seed=2)
        observed = set(np.round(samples.values[:, 0], 12))
        # kept: 1.5 * (2*0.8 + 0.5) / 0.5 - 0.25 = 6.05 ; dropped: -0.25
        assert observed <= {6.05, -0.25}
        assert len(observed) == 2  # both states show up in 64 draws

    def test_too_few_passes_rejected(self, small_net):
        with pytest.raises(UsageError):
            si.sample_passes(small_net, [[0.0, 0.0]], 1, 0.1, seed=0)

    def test_mask_shared_across_columns(self, small_net):
        # duplicated coordinates under distinct ids give identical columns
        point = [0.4, -0.2]
        points = np.array([point, [0.9, 0.9], point])
        samples = si.sample_passes(small_net, points, 32, 0.4, seed=5,
                                   point_ids=("pool-0", "anchor-x", "anchor-dup"))
        np.testing.assert_array_equal(samples.block(["pool-0"]), samples.block(["anchor-dup"]))

    def test_csv_dump(self, small_net, tmp_path):
        points = np.random.default_rng(2).uniform(-1, 1, size=(3, 2))
        samples = si.sample_passes(small_net, points, 4, 0.2, seed=3)
        path = tmp_path / "samples.csv"
        samples.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "0,1,2"
        assert len(lines) == 5
        row0 = np.array([float(v) for v in lines[1].split(",")])
        np.testing.assert_allclose(row0, samples.values[0], rtol=1e-15)


class TestMoments:
    def test_mean_of_constant_rows(self):
        values = np.tile([1.5, -2.0, 0.25], (4, 1))
        samples = si.SampleMatrix(values=values, point_ids=(0, 1, 2), mask_seed=0)
        np.testing.assert_array_equal(si.mc_mean(samples), [1.5, -2.0, 0.25])
        np.testing.assert_array_equal(si.mc_variance(samples), [0.0, 0.0, 0.0])

    def test_two_point_column(self):
        samples = si.SampleMatrix(values=np.array([[0.0], [2.0]]), point_ids=(0,), mask_seed=0)
        assert si.mc_mean(samples)[0] == pytest.approx(1.0)
        # unbiased: ((0-1)^2 + (2-1)^2) / (2-1) = 2
        assert si.mc_variance(samples)[0] == pytest.approx(2.0)

    def test_mean_matches_naive_summation(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(13, 5))
        samples = si.SampleMatrix(values=values, point_ids=tuple(range(5)), mask_seed=0)
        naive = []
        for j in range(5):
            total = 0.0
            for t in range(13):
                total += values[t, j]
            naive.append(total / 13)
        np.testing.assert_allclose(si.mc_mean(samples), naive, atol=1e-12)

    def test_variance_matches_covariance_diagonal(self):
        rng = np.random.default_rng(12)
        values = rng.normal(size=(9, 4))
        samples = si.SampleMatrix(values=values, point_ids=tuple(range(4)), mask_seed=0)
        cov = empirical_covariance(values, values)
        np.testing.assert_allclose(si.mc_variance(samples), np.diag(cov), atol=1e-12)

    def test_variance_non_negative(self, small_net):
        points = np.random.default_rng(3).uniform(-1, 1, size=(20, 2))
        samples = si.sample_passes(small_net, points, 32, 0.4, seed=8)
        assert np.all(si.mc_variance(samples) >= 0.0)


class TestEstimatorConcentration:
    def test_mean_variance_shrinks_like_one_over_t(self, small_net):
        point = np.array([[0.3, 0.7]])
        sizes = [8, 64, 512]
        spreads = []
        for n_passes in sizes:
            means = [
                si.mc_mean(si.sample_passes(small_net, point, n_passes, 0.3, seed=1000 + r))[0]
                for r in range(60)
            ]
            spreads.append(np.var(means))
        slope = np.polyfit(np.log(sizes), np.log(spreads), 1)[0]
        assert -2.0 < slope < -0.5  # 2x band around the 1/T law


class TestDistanceCorrelation:
    def test_nearby_points_more_correlated_than_distant(self, smooth_net):
        near = np.array([[0.30, 0.30], [0.34, 0.34]])
        far = np.array([[0.30, 0.30], [0.90, 0.90]])
        corr_near, corr_far = [], []
        for seed in range(10):
            samples = si.sample_passes(smooth_net, np.vstack([near, far]), 256, 0.1, seed)
            v = samples.values
            corr_near.append(np.corrcoef(v[:, 0], v[:, 1])[0, 1])
            corr_far.append(np.corrcoef(v[:, 2], v[:, 3])[0, 1])
        assert np.median(corr_near) > np.median(corr_far)


class TestSampleMatrixValidation:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(UsageError):
            si.SampleMatrix(values=np.zeros((3, 2)), point_ids=(1, 1), mask_seed=0)

    def test_non_finite_rejected(self):
        values = np.array([[0.0, 1.0], [np.inf, 2.0]])
        with pytest.raises(UsageError):
            si.SampleMatrix(values=values, point_ids=(0, 1), mask_seed=0)

    def test_unknown_id_lookup_rejected(self):
        samples = si.SampleMatrix(values=np.zeros((2, 1)), point_ids=("a",), mask_seed=0)
        with pytest.raises(UsageError):
            samples.block(["b"])


def test_surface_helper_is_smooth():
    # sanity for the fixture surface used across behavioural tests
    x = np.array([[0.0, 0.0], [0.001, 0.0]])
    vals = surface(x)
    assert abs(vals[1] - vals[0]) < 0.01
