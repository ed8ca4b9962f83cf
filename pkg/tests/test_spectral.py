"""Tests for the spectrally relaxed k-means regularizer."""

import numpy as np
import pytest

from deepkm.cluster import kmeans, zero_cluster_size
from deepkm.compress.reshape import reshape_rows, unreshape_rows
from deepkm.core.config import RegConfig, TrainConfig
from deepkm.core.exceptions import ConfigurationError, ContractViolation
from deepkm.nn.network import Gradients, ModelParams
from deepkm.nn.trainer import sgd_step
from deepkm.spectral import (
    OrthonormalFactor,
    indicator_factor,
    make_hook,
    penalty,
    reg_gradient,
    update_f,
    update_f_with_zero_cluster,
)


def _random_factor(gen: np.random.Generator, n: int, r: int) -> OrthonormalFactor:
    q, _ = np.linalg.qr(gen.normal(size=(n, r)))
    return OrthonormalFactor(q)


def _random_instance(gen: np.random.Generator) -> tuple[np.ndarray, int]:
    s = int(gen.integers(1, 6))
    n = int(gen.integers(s + 1, 65))
    return gen.normal(size=(s, n)), n


class TestPenaltyAndGradient:
    def test_gradient_matches_finite_differences(self):
        gen = np.random.default_rng(0)
        lam = 0.3
        h = 1e-6
        for _ in range(50):
            w, n = _random_instance(gen)
            f = _random_factor(gen, n, int(gen.integers(1, min(n, 6) + 1)))
            analytic = reg_gradient(w, f, lam)
            numeric = np.zeros_like(w)
            for idx in np.ndindex(*w.shape):
                plus, minus = w.copy(), w.copy()
                plus[idx] += h
                minus[idx] -= h
                numeric[idx] = lam / 2 * (penalty(plus, f) - penalty(minus, f)) / (2 * h)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-7)

    def test_penalty_is_residual_norm(self, rng):
        w = rng.normal(size=(3, 20))
        f = _random_factor(rng, 20, 4)
        residual = w - (w @ f.columns) @ f.columns.T
        assert penalty(w, f) == pytest.approx(float(np.square(residual).sum()), rel=1e-10)

    def test_identity_against_first_axis(self):
        f = OrthonormalFactor(np.array([[1.0], [0.0]]))
        assert penalty(np.eye(2), f) == pytest.approx(1.0)
        np.testing.assert_allclose(reg_gradient(np.eye(2), f, 2.0), [[0.0, 0.0], [0.0, 2.0]])

    def test_dimension_mismatch(self, rng):
        f = _random_factor(rng, 10, 2)
        with pytest.raises(ContractViolation):
            penalty(rng.normal(size=(3, 11)), f)

    def test_factor_must_be_orthonormal(self):
        with pytest.raises(ContractViolation, match="orthonormal"):
            OrthonormalFactor(np.ones((4, 2)))


class TestKyFan:
    def test_update_f_attains_tail_energy_and_is_optimal(self):
        gen = np.random.default_rng(1)
        for _ in range(50):
            w, n = _random_instance(gen)
            k = int(gen.integers(1, w.shape[0] + 1))
            f = update_f(w, k)
            sigma = np.linalg.svd(w, compute_uv=False)
            best = penalty(w, f)
            assert best == pytest.approx(float(np.sum(sigma[k:] ** 2)), abs=1e-8)
            for _ in range(100):
                assert best <= penalty(w, _random_factor(gen, n, k)) + 1e-9

    def test_k_at_least_rank_gives_zero_penalty(self, rng):
        w = rng.normal(size=(3, 30))
        assert penalty(w, update_f(w, 8)) == pytest.approx(0.0, abs=1e-9)

    def test_diagonal_matrix_by_hand(self):
        w = np.array([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        f = update_f(w, 1)
        assert f.width == 1
        np.testing.assert_allclose(np.abs(f.columns[:, 0]), [1.0, 0.0, 0.0], atol=1e-12)
        assert penalty(w, f) == pytest.approx(1.0)

    def test_zero_weights_fall_back_to_first_axis(self):
        f = update_f(np.zeros((5, 12)), 3)
        assert f.width == 1
        assert f.columns[0, 0] == 1.0
        assert penalty(np.zeros((5, 12)), f) == 0.0

    def test_source_epoch_recorded(self, rng):
        assert update_f(rng.normal(size=(2, 8)), 1, source_epoch=7).source_epoch == 7


class TestIndicator:
    def test_penalty_of_indicator_is_within_cluster_sum_of_squares(self):
        gen = np.random.default_rng(2)
        for _ in range(20):
            w, n = _random_instance(gen)
            k = int(gen.integers(1, min(n, 6) + 1))
            labels = kmeans(w, k, seed=int(gen.integers(100))).assignments
            wcss = 0.0
            for j in range(k):
                members = w[:, labels == j]
                if members.size:
                    wcss += float(np.square(members - members.mean(axis=1, keepdims=True)).sum())
            assert penalty(w, indicator_factor(labels, k)) == pytest.approx(wcss, abs=1e-8)

    def test_empty_clusters_are_dropped(self):
        f = indicator_factor(np.array([0, 0, 2]), 4)
        assert f.width == 2
        np.testing.assert_allclose(f.columns[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2), 0])


class TestZeroClusterFactor:
    def test_smallest_columns_have_zero_rows(self, rng):
        w = rng.normal(size=(5, 40))
        w[:, [3, 17]] *= 1e-3
        f = update_f_with_zero_cluster(w, 4, 0.05)
        np.testing.assert_array_equal(f.columns[[3, 17]], np.zeros((2, f.width)))
        assert f.width == 3

    def test_penalty_charges_pinned_columns(self, rng):
        w = rng.normal(size=(2, 30))
        f = update_f_with_zero_cluster(w, 4, 0.1)
        pinned = np.argsort(np.linalg.norm(w, axis=0), kind="stable")[: zero_cluster_size(30, 0.1)]
        assert penalty(w, f) >= float(np.square(w[:, pinned]).sum()) - 1e-12

    def test_p_zero_matches_update_f(self, rng):
        w = rng.normal(size=(3, 25))
        pinned = update_f_with_zero_cluster(w, 2, 0.0)
        np.testing.assert_array_equal(pinned.columns, update_f(w, 2).columns)


def _zero_gradients(model: ModelParams) -> Gradients:
    return Gradients(
        weights={k: np.zeros_like(v) for k, v in model.weights.items()},
        biases={k: np.zeros_like(v) for k, v in model.biases.items()},
    )


class TestDescent:
    @pytest.mark.parametrize("momentum", [0.0, 0.9])
    def test_penalty_never_increases_under_sgd(self, small_lenet, momentum):
        lam = 0.1
        dims = small_lenet.weights["conv2"].shape
        f = update_f(reshape_rows(small_lenet.weights["conv2"]), 2)
        config = TrainConfig(learning_rate=0.01, momentum=momentum)
        zero = _zero_gradients(small_lenet)
        velocity: dict = {}
        values = [penalty(reshape_rows(small_lenet.weights["conv2"]), f)]
        for _ in range(10):
            w = reshape_rows(small_lenet.weights["conv2"])
            extra = {"conv2": unreshape_rows(reg_gradient(w, f, lam), dims)}
            sgd_step(small_lenet, zero, config, extra, velocity)
            values.append(penalty(reshape_rows(small_lenet.weights["conv2"]), f))
        assert values[0] > 0
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] < values[0]


class TestRegularizerHook:
    def _hook(self, model, lam=1e-3, refresh=5):
        ks = {name: 4 for name in model.conv_names}
        config = RegConfig(lam=lam, refresh_every_epochs=refresh, per_layer_k=ks)
        return make_hook(config, model.arch)

    def test_lazy_refresh_schedule(self, small_lenet):
        hook = self._hook(small_lenet, refresh=5)
        sources = []
        for epoch in range(12):
            hook.on_epoch_start(small_lenet, epoch)
            sources.append(hook.factors["conv2"].source_epoch)
        assert sources == [0] * 5 + [5] * 5 + [10] * 2

    def test_extra_gradients_match_reg_gradient(self, small_lenet):
        hook = self._hook(small_lenet, lam=1e-3)
        hook.on_epoch_start(small_lenet, 0)
        extra = hook.extra_gradients(small_lenet)
        assert set(extra) == {"conv1", "conv2"}
        w = reshape_rows(small_lenet.weights["conv2"])
        expected = reg_gradient(w, hook.factors["conv2"], 1e-3)
        np.testing.assert_allclose(reshape_rows(extra["conv2"]), expected)

    def test_lambda_zero_disables(self, small_lenet):
        hook = self._hook(small_lenet, lam=0.0)
        hook.on_epoch_start(small_lenet, 0)
        assert hook.extra_gradients(small_lenet) == {}

    def test_penalties_reported_per_layer(self, small_lenet):
        hook = self._hook(small_lenet)
        hook.on_epoch_start(small_lenet, 0)
        values = hook.penalties(small_lenet)
        assert set(values) == {"conv1", "conv2"}
        assert all(v >= 0 for v in values.values())

    def test_missing_k_is_a_configuration_error(self, small_lenet):
        with pytest.raises(ConfigurationError, match="conv2"):
            make_hook(RegConfig(per_layer_k={"conv1": 4}), small_lenet.arch)

    @pytest.mark.parametrize("lam", [1e-7, 0.5])
    def test_lambda_sanity_bounds(self, lam):
        with pytest.raises(ValueError):
            RegConfig(lam=lam)

    def test_lambda_alias(self):
        assert RegConfig.model_validate({"lambda": 1e-3}).lam == 1e-3

    def test_penalty_decreases_with_refresh_every_epoch(self, small_lenet):
        config = RegConfig(lam=0.1, refresh_every_epochs=1, per_layer_k={"conv1": 2, "conv2": 2})
        hook = make_hook(config, small_lenet.arch)
        step = TrainConfig(learning_rate=0.05, momentum=0.0)
        zero = _zero_gradients(small_lenet)
        history = []
        for epoch in range(6):
            hook.on_epoch_start(small_lenet, epoch)
            for _ in range(5):
                sgd_step(small_lenet, zero, step, hook.extra_gradients(small_lenet))
            history.append(hook.penalties(small_lenet))
        for name in ("conv1", "conv2"):
            values = [record[name] for record in history]
            assert all(b < a for a, b in zip(values, values[1:])), name

    @pytest.mark.parametrize("k", [1, 2, 5, 12, 30])
    def test_factor_width_bounded_by_filter_size(self, small_lenet, k):
        hook = make_hook(RegConfig(per_layer_k={"conv1": k}), small_lenet.arch, layers=["conv1"])
        hook.on_epoch_start(small_lenet, 0)
        assert small_lenet.weights["conv1"].shape == (5, 5, 1, 6)
        assert hook.factors["conv1"].width == min(k, 5)

    def test_subset_of_layers(self, small_lenet):
        hook = make_hook(RegConfig(per_layer_k={"conv2": 16}), small_lenet.arch, layers=["conv2"])
        hook.on_epoch_start(small_lenet, 0)
        assert set(hook.extra_gradients(small_lenet)) == {"conv2"}
        assert set(hook.penalties(small_lenet)) == {"conv2"}

    def test_subset_must_name_conv_layers(self, small_lenet):
        with pytest.raises(ConfigurationError, match="not a conv layer"):
            make_hook(RegConfig(per_layer_k={"fc1": 4}), small_lenet.arch, layers=["fc1"])
