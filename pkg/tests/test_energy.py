"""Tests for the full-adder cost model and the energy report."""

import numpy as np
import pytest

from deepkm.compress.share import allocate_k
from deepkm.core.config import ShareConfig
from deepkm.core.exceptions import ConfigurationError, ContractViolation, UndefinedFitError
from deepkm.energy import (
    REP_FACTOR,
    EnergyLayer,
    NetworkSpec,
    act_rep_cost,
    comp_cost,
    dot_product_fa,
    load_network_spec,
    network_spec_from_architecture,
    prune_filters,
    r_squared,
    share_weights,
    total_energy,
    weight_rep_cost,
    with_fc_precision,
)
from deepkm.energy.spec import save_network_spec
from deepkm.nn.network import lenet5


class TestDotProduct:
    @pytest.mark.parametrize(
        ("d", "b_w", "b_x", "expected"),
        [(1, 1, 1, 1), (2, 8, 8, 144), (25, 16, 16, 7264), (1152, 16, 16, 343254)],
    )
    def test_known_values(self, d, b_w, b_x, expected):
        assert dot_product_fa(d, b_w, b_x) == expected

    def test_zero_length(self):
        with pytest.raises(ContractViolation, match="length"):
            dot_product_fa(0, 8, 8)

    def test_strictly_increasing(self):
        for d in range(1, 40):
            for b in range(1, 12):
                base = dot_product_fa(d, b, b)
                assert dot_product_fa(d + 1, b, b) > base
                assert dot_product_fa(d, b + 1, b) > base
                assert dot_product_fa(d, b, b + 1) > base


class TestLayerCosts:
    def test_pointwise_conv_is_one_adder(self):
        spec = NetworkSpec(
            b_w=1, b_x=1, layers=[EnergyLayer(name="c", kind="conv", s=1, c=1, m=1, h_in=1, w_in=1)]
        )
        assert comp_cost(spec) == 1

    def test_lenet_conv1_comp_cost(self, lenet_valid_spec):
        report = total_energy(lenet_valid_spec)
        assert report.layers[0].comp_cost_fa == 6 * 576 * 7264

    def test_lenet_conv2_weight_rep(self, lenet_valid_spec):
        report = total_energy(lenet_valid_spec)
        assert report.layers[1].weight_rep_cost == 2_457_600

    def test_fc_costs(self, lenet_valid_spec):
        fc1 = total_energy(lenet_valid_spec).layers[2]
        assert fc1.comp_cost_fa == 120 * dot_product_fa(256, 16, 16)
        assert fc1.weight_rep_cost == 256 * 120 * 16
        assert fc1.act_rep_cost == 120 * 256 * 16

    def test_conv_act_rep(self, lenet_valid_spec):
        conv2 = total_energy(lenet_valid_spec).layers[1]
        # N_x = m s^2 reads of |X| = c H W values
        assert conv2.act_rep_cost == 16 * 25 * (6 * 12 * 12) * 16

    def test_per_layer_precision(self):
        spec = NetworkSpec(
            b_w=8,
            b_x=8,
            layers=[EnergyLayer(name="fc", kind="fullyconnected", in_dim=10, out_dim=2, b_w=16)],
        )
        assert weight_rep_cost(spec) == 10 * 2 * 16
        assert act_rep_cost(spec) == 2 * 10 * 8
        assert comp_cost(spec) == 2 * dot_product_fa(10, 16, 8)

    def test_fc_precision_leaves_conv_layers(self, lenet_valid_spec):
        spec = with_fc_precision(lenet_valid_spec, b_w=4)
        assert spec.precision(spec.layer("fc1")) == (4, 16)
        assert spec.precision(spec.layer("conv2")) == (16, 16)
        assert with_fc_precision(lenet_valid_spec) == lenet_valid_spec

    def test_stride_reduces_activation_reads(self):
        layer = {"name": "c", "kind": "conv", "s": 3, "c": 2, "m": 4, "h_in": 9, "w_in": 9}
        plain = NetworkSpec(layers=[EnergyLayer(**layer)])
        strided = NetworkSpec(layers=[EnergyLayer(**layer, stride=3)])
        assert act_rep_cost(strided) == pytest.approx(act_rep_cost(plain) / 9)

    def test_filter_too_large(self):
        with pytest.raises(ValueError, match="larger than input"):
            EnergyLayer(name="c", kind="conv", s=5, c=1, m=1, h_in=3, w_in=3)

    def test_missing_dims(self):
        with pytest.raises(ValueError, match="needs"):
            EnergyLayer(name="fc", kind="fullyconnected", in_dim=3)


class TestSharingAndPruning:
    def test_sharing_only_lowers_weight_rep(self, lenet_valid_spec):
        before = total_energy(lenet_valid_spec).layers[1]
        after = total_energy(share_weights(lenet_valid_spec, {"conv2": 48})).layers[1]
        assert after.comp_cost_fa == before.comp_cost_fa
        assert after.act_rep_cost == before.act_rep_cost
        assert after.weight_rep_cost * 10 == before.weight_rep_cost

    def test_shared_fc_layer_counts_k_values(self, lenet_valid_spec):
        fc2 = total_energy(share_weights(lenet_valid_spec, {"fc2": 64})).layers[3]
        assert fc2.weight_rep_cost == 64 * 16

    def test_share_k_above_n(self, lenet_valid_spec):
        with pytest.raises(ContractViolation, match="cannot share layer conv1"):
            share_weights(lenet_valid_spec, {"conv1": 31})

    def test_pruning_half_halves_every_cost(self, lenet_valid_spec):
        before = total_energy(lenet_valid_spec).layers[1]
        after = total_energy(prune_filters(lenet_valid_spec, "conv2", 0.5)).layers[1]
        assert after.comp_cost_fa == before.comp_cost_fa / 2
        assert after.weight_rep_cost == before.weight_rep_cost / 2
        assert after.act_rep_cost == before.act_rep_cost / 2

    def test_pruning_leaves_other_layers(self, lenet_valid_spec):
        before = total_energy(lenet_valid_spec).layers[0]
        after = total_energy(prune_filters(lenet_valid_spec, "conv2", 0.5)).layers[0]
        assert after == before

    def test_invalid_pruning(self, lenet_valid_spec):
        with pytest.raises(ContractViolation):
            prune_filters(lenet_valid_spec, "conv2", 1.0)
        with pytest.raises(ContractViolation, match="no layer"):
            prune_filters(lenet_valid_spec, "conv9", 0.5)

    def test_energy_falls_with_cluster_rate(self):
        arch = lenet5()
        spec = network_spec_from_architecture(arch)
        totals = []
        for rate in (0.5, 0.25, 0.1, 0.05):
            ks = allocate_k(arch, ShareConfig(cluster_rate=rate))
            totals.append(total_energy(share_weights(spec, ks)).total_energy_mac)
        assert totals == sorted(totals, reverse=True)
        assert len(set(totals)) == len(totals)


class TestReport:
    def test_total_combines_comp_and_rep(self, lenet_valid_spec):
        report = total_energy(lenet_valid_spec)
        expected = report.comp_mac + REP_FACTOR * report.rep_mac
        assert report.total_energy_mac == pytest.approx(expected)
        assert report.comp_mac == pytest.approx(report.comp_cost_fa / 256)
        assert report.rep_mac == pytest.approx((report.weight_rep_cost + report.act_rep_cost) / 32)

    def test_empty_network(self):
        summary = total_energy(NetworkSpec(layers=[])).summary()
        assert set(summary.values()) == {0}

    def test_text_is_deterministic(self, lenet_valid_spec):
        text = total_energy(lenet_valid_spec).to_text()
        assert text == total_energy(lenet_valid_spec).to_text()
        assert text.startswith("# energy report: lenet5-valid\n")
        assert text.splitlines()[-1].split()[0] == "TOTAL"
        assert len(text.splitlines()) == 4 + 5 + 1

    def test_spec_from_lenet(self):
        spec = network_spec_from_architecture(lenet5(), fc_b_w=8, shared_k={"conv2": 48})
        assert [layer.name for layer in spec.layers] == ["conv1", "conv2", "fc1", "fc2", "fc3"]
        conv1, conv2, fc1 = spec.layers[:3]
        assert (conv1.h_out, conv1.w_out) == (28, 28)
        assert (conv2.h_in, conv2.h_out) == (14, 10)
        assert fc1.in_dim == 400
        assert spec.precision(fc1) == (8, 16)
        assert conv2.shared_k == 48


class TestSpecFiles:
    def test_yaml_round_trip(self, lenet_valid_spec, tmp_path):
        path = tmp_path / "lenet.yaml"
        save_network_spec(path, lenet_valid_spec)
        assert load_network_spec(path) == lenet_valid_spec

    def test_load_inline_yaml(self, tmp_path):
        path = tmp_path / "net.yaml"
        path.write_text(
            "name: tiny\nb_w: 8\nlayers:\n"
            "  - {name: fc, kind: fullyconnected, in_dim: 4, out_dim: 2}\n"
        )
        spec = load_network_spec(path)
        assert spec.b_w == 8 and spec.b_x == 16
        assert spec.layers[0].n_columns == 8

    @pytest.mark.parametrize(
        "text",
        [
            "layers: [{name: a, kind: pool}]",
            "layers: [unclosed",
            "layers: [{name: a, kind: conv, s: 3}]",
        ],
    )
    def test_invalid_spec(self, tmp_path, text):
        path = tmp_path / "bad.yaml"
        path.write_text(text)
        with pytest.raises(ConfigurationError, match="bad.yaml"):
            load_network_spec(path)

    def test_duplicate_names(self):
        layer = EnergyLayer(name="fc", kind="fullyconnected", in_dim=2, out_dim=2)
        with pytest.raises(ValueError, match="unique"):
            NetworkSpec(layers=[layer, layer])


class TestRSquared:
    def test_exact_line(self):
        assert r_squared([1, 2, 3, 4], [3, 5, 7, 9]) == pytest.approx(1.0)

    def test_no_linear_relation(self):
        assert r_squared([1, 2, 3, 4], [1, -1, -1, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_constant_xs(self):
        with pytest.raises(UndefinedFitError):
            r_squared([2, 2, 2], [1, 2, 3])

    def test_constant_ys_fit_perfectly(self):
        assert r_squared([1, 2, 3], [4, 4, 4]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            r_squared([1, 2, 3], [1, 2])

    def test_noisy_line_is_close_to_one(self, rng):
        x = np.linspace(0, 10, 50)
        assert r_squared(x, 2 * x + rng.normal(scale=0.01, size=50)) > 0.999
