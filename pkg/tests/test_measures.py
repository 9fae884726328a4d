import math

import numpy as np
import pytest
import scipy.stats

from wcgen import data_io, measures, nn, wc


def dense_checkpoint(seed=0):
    specs = [nn.dense(5, 4), nn.relu(), nn.dense(4, 3)]
    params = nn.init_network(specs, (5,), seed=seed, sigma_init=0.3)
    rng = np.random.default_rng(seed + 100)
    for i in params.trainable_indices():
        params.weights[i] = params.weights[i] + 0.1 * rng.standard_normal(
            params.weights[i].shape
        )
        params.biases[i] = params.biases[i] + 0.1 * rng.standard_normal(
            params.biases[i].shape
        )
    return data_io.checkpoint_from_params(params)


class TestComputeMeasures:
    def test_dense_network_against_numpy_oracles(self):
        ckpt = dense_checkpoint()
        report = measures.compute_measures(ckpt)
        layers = ckpt.trainable_layers()
        fro = math.prod(np.linalg.norm(l.wf) for l in layers)
        spec = math.prod(
            np.linalg.svd(l.wf, compute_uv=False)[0] for l in layers
        )
        disp = sum(
            np.linalg.svd(l.wf - l.w0, compute_uv=False)[0] for l in layers
        )
        nop = sum(l.wf.size + l.bf.size for l in layers)
        d_sq = sum(
            np.sum((l.wf - l.w0) ** 2) + np.sum((l.bf - l.b0) ** 2) for l in layers
        )
        g_sum = sum(wc.g_term(wc.layer_correlation(l.wf)) for l in layers)
        rho_bar = np.mean([wc.layer_correlation(l.wf).rho for l in layers])
        assert report.pfn == pytest.approx(fro, rel=1e-10)
        assert report.psn == pytest.approx(spec, rel=1e-8)
        assert report.nop == nop == 5 * 4 + 4 + 4 * 3 + 3
        assert report.sosp == pytest.approx(nop * disp, rel=1e-8)
        assert report.wc == pytest.approx(rho_bar, rel=1e-12)
        assert report.pb == pytest.approx(d_sq / 2, rel=1e-12)
        assert report.pbc == pytest.approx(d_sq / 2 + g_sum / 2, rel=1e-12)

    def test_explicit_sigma_sq(self):
        ckpt = dense_checkpoint()
        sigma_sq = 0.25
        report = measures.compute_measures(ckpt, measures.MeasureConfig(sigma_sq))
        layers = ckpt.trainable_layers()
        d_sq = sum(
            np.sum((l.wf - l.w0) ** 2) + np.sum((l.bf - l.b0) ** 2) for l in layers
        )
        g_sum = sum(wc.g_term(wc.layer_correlation(l.wf)) for l in layers)
        assert report.pb == pytest.approx(d_sq / (2 * sigma_sq), rel=1e-12)
        assert report.pbc == pytest.approx(report.pb + g_sum, rel=1e-12)

    def test_conv_layer_uses_reshaped_filter_matrix(self):
        specs = [nn.conv2d(3, 2, 4), nn.flatten(), nn.dense(4 * 4 * 4, 2)]
        params = nn.init_network(specs, (4, 4, 2), seed=1, sigma_init=0.4)
        report = measures.compute_measures(data_io.checkpoint_from_params(params))
        mats = [params.weights[0].reshape(9 * 2, 4), params.weights[2]]
        spec = math.prod(np.linalg.svd(m, compute_uv=False)[0] for m in mats)
        assert report.psn == pytest.approx(spec, rel=1e-8)

    def test_zero_sigma_rejected(self):
        with pytest.raises(ValueError):
            measures.compute_measures(
                dense_checkpoint(), measures.MeasureConfig(0.0)
            )

    def test_no_trainable_layers_rejected(self):
        ckpt = data_io.NetworkCheckpoint(
            input_shape=(2, 2, 1), specs=[nn.maxpool2()],
            theta0_weights=[None], theta0_biases=[None],
            theta_f_weights=[None], theta_f_biases=[None],
        )
        with pytest.raises(ValueError):
            measures.compute_measures(ckpt)


class TestGeneralisationError:
    def test_difference(self):
        assert measures.generalisation_error(0.9, 0.2) == pytest.approx(0.7)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            measures.generalisation_error(math.nan, 0.1)


class TestKendallTau:
    def test_perfect_agreement(self):
        tau, c, d = measures.kendall_tau([1, 2, 3, 4], [10, 20, 30, 40])
        assert (tau, c, d) == (1.0, 6, 0)

    def test_perfect_reversal(self):
        tau, c, d = measures.kendall_tau([1, 2, 3], [3, 2, 1])
        assert (tau, c, d) == (-1.0, 0, 3)

    def test_ties_count_as_neither(self):
        tau, c, d = measures.kendall_tau([1, 1, 2], [1, 2, 3])
        assert (c, d) == (2, 0)
        assert tau == pytest.approx(2 / 3)

    def test_matches_scipy_without_ties(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            xs = rng.permutation(9).tolist()
            ys = rng.permutation(9).tolist()
            tau, _, _ = measures.kendall_tau(xs, ys)
            assert tau == pytest.approx(scipy.stats.kendalltau(xs, ys).statistic)

    def test_too_short(self):
        with pytest.raises(ValueError):
            measures.kendall_tau([1], [1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            measures.kendall_tau([1, 2], [1, 2, 3])


class TestRankMeasures:
    def test_per_column_rows(self):
        cols = {"a": [1, 2, 3], "b": [3, 2, 1]}
        rows = measures.rank_measures(cols, [1, 2, 3])
        by_name = {r.name: r for r in rows}
        assert by_name["a"].tau == 1.0
        assert by_name["b"].tau == -1.0
        assert by_name["a"].concordant == 3
        assert by_name["b"].discordant == 3


class TestPacBayesBound:
    def test_hand_value(self):
        # emp + sqrt((kl + ln(m/delta)) / (2(m-1)))
        got = measures.pac_bayes_bound(kl=2.0, m=101, delta=0.1, empirical_loss=0.3)
        assert got == pytest.approx(0.3 + math.sqrt((2.0 + math.log(1010)) / 200))

    def test_monotone_in_kl(self):
        lo = measures.pac_bayes_bound(1.0, 50, 0.05, 0.1)
        hi = measures.pac_bayes_bound(5.0, 50, 0.05, 0.1)
        assert hi > lo

    @pytest.mark.parametrize("kwargs", [
        {"kl": -1.0, "m": 10, "delta": 0.1, "empirical_loss": 0.0},
        {"kl": 1.0, "m": 1, "delta": 0.1, "empirical_loss": 0.0},
        {"kl": 1.0, "m": 10, "delta": 0.0, "empirical_loss": 0.0},
        {"kl": 1.0, "m": 10, "delta": 1.5, "empirical_loss": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            measures.pac_bayes_bound(**kwargs)


class TestFilterHeatmap:
    def test_symmetric_unit_diagonal(self):
        w = np.random.default_rng(2).standard_normal((3, 3, 2, 5))
        heat = measures.filter_heatmap(w)
        assert heat.shape == (5, 5)
        assert np.allclose(heat, heat.T)
        assert np.allclose(np.diag(heat), 1.0)
        assert np.all((heat >= 0) & (heat <= 1 + 1e-12))

    def test_off_diagonal_mean_equals_wc(self):
        w = np.random.default_rng(3).standard_normal((5, 5, 3, 4))
        heat = measures.filter_heatmap(w)
        n = heat.shape[0]
        off_mean = (heat.sum() - n) / (n * (n - 1))
        assert off_mean == pytest.approx(wc.wc_cnn(w), abs=1e-12)

    def test_per_filter_means_average(self):
        w = np.random.default_rng(4).standard_normal((3, 3, 1, 6))
        heat = measures.filter_heatmap(w)
        per = measures.per_filter_means(heat)
        assert per.shape == (6,)
        assert per.mean() == pytest.approx(wc.wc_cnn(w), abs=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            measures.filter_heatmap(np.zeros((3, 2, 1, 4)))
        with pytest.raises(wc.CorrelationUndefinedError):
            measures.filter_heatmap(np.zeros((3, 3, 1, 1)))
