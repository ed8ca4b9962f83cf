"""End-to-end Deep k-Means pipeline.

For every cluster rate: retrain the baseline with the spectral regularizer,
share the retrained weights (Deep k-Means) and, as the reference branch,
share the baseline weights directly (WR, without retraining). Both branches
are reconstructed and evaluated on the test split, and the energy metrics of
the shared network are compared against the uncompressed one.
"""

import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass

from pydantic import BaseModel, Field

from deepkm.compress.share import CompressedModel, allocate_k, compression_ratio, reconstruct, share
from deepkm.core.config import PipelineConfig, RegConfig
from deepkm.core.exceptions import PipelineStageError
from deepkm.core.phases import PipelinePhase, PipelineState
from deepkm.core.state import RunStore
from deepkm.data.datasets import Dataset
from deepkm.energy.metrics import EnergyReport, total_energy
from deepkm.energy.spec import network_spec_from_architecture, share_weights
from deepkm.nn.network import Architecture, LayerSpec, ModelParams, init_params
from deepkm.nn.trainer import EpochRecord, evaluate, train
from deepkm.spectral import make_hook

logger = logging.getLogger(__name__)


class RateResult(BaseModel):
    """One report row: both branches at a single cluster rate."""

    cluster_rate: float
    ks: dict[str, int]
    compression_ratio: float
    retrained_accuracy: float
    deepkm_accuracy: float
    wr_accuracy: float
    delta_deepkm: float
    delta_wr: float
    inertia_retrained: dict[str, float]
    inertia_baseline: dict[str, float]
    total_energy_mac: float
    weight_rep_reduction: float


class PipelineReport(BaseModel):
    arch: str
    dataset: str
    seed: int
    baseline_accuracy: float
    baseline_energy_mac: float
    rows: list[RateResult] = Field(default_factory=list)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")


@dataclass
class PipelineRun:
    report: PipelineReport
    baseline: ModelParams
    compressed: dict[float, CompressedModel]
    baseline_energy: EnergyReport


@contextmanager
def _stage(
    state: PipelineState, phase: PipelinePhase, store: RunStore | None, message: str = ""
) -> Iterator[None]:
    state.start_phase(phase, message)
    logger.info("%s %s", phase.display_name, message)
    try:
        yield
    except Exception as e:
        state.fail(str(e))
        if store is not None:
            store.save_state(state)
        raise PipelineStageError(phase.value, e) from e
    state.complete_phase()
    if store is not None:
        store.save_state(state)


def _n_columns(layer: LayerSpec) -> int:
    assert layer.s and layer.c and layer.m
    return layer.s * layer.c * layer.m


def _sparsity_by_layer(arch: Architecture, config: PipelineConfig) -> dict[str, float]:
    if config.sparsity_p is None:
        return {}
    return dict(zip([layer.name for layer in arch.conv_layers], config.sparsity_p))


def run_pipeline(
    train_set: Dataset,
    test_set: Dataset,
    arch: Architecture,
    config: PipelineConfig,
    baseline: ModelParams | None = None,
    store: RunStore | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    dataset_name: str = "dataset",
) -> PipelineRun:
    """Run train -> retrain -> share -> reconstruct -> evaluate for every cluster rate.

    A given ``baseline`` skips baseline training. Any stage failure raises
    PipelineStageError naming the stage.
    """
    state = PipelineState(arch=arch.name, dataset=dataset_name)
    compressed: dict[float, CompressedModel] = {}

    sizes = f"{len(train_set)} train / {len(test_set)} test"
    with _stage(state, PipelinePhase.LOAD_DATA, store, sizes):
        if train_set.input_shape != arch.input_shape or test_set.input_shape != arch.input_shape:
            raise ValueError(f"dataset images do not match architecture input {arch.input_shape}")

    with _stage(state, PipelinePhase.BASELINE_TRAIN, store):
        if baseline is None:
            baseline = init_params(arch, config.seed)
            train(baseline, train_set, config.train, on_epoch=on_epoch)
    assert baseline is not None

    with _stage(state, PipelinePhase.BASELINE_EVAL, store):
        baseline_acc = evaluate(baseline, test_set)
        logger.info("baseline accuracy %.4f", baseline_acc)

    with _stage(state, PipelinePhase.ENERGY, store, "uncompressed network"):
        dense_spec = network_spec_from_architecture(arch, config.b_w, config.b_x)
        baseline_energy = total_energy(dense_spec)

    report = PipelineReport(
        arch=arch.name,
        dataset=dataset_name,
        seed=config.seed,
        baseline_accuracy=baseline_acc,
        baseline_energy_mac=baseline_energy.total_energy_mac,
    )
    sparsity = _sparsity_by_layer(arch, config)

    for rate in config.cluster_rates:
        share_config = config.share_config(rate)
        tag = f"rate={rate:g}"
        ks = allocate_k(arch, share_config)
        # K = N in every shared layer: sharing is exact, so retraining is skipped
        lossless = all(k == _n_columns(arch.layer(name)) for name, k in ks.items())

        with _stage(state, PipelinePhase.RETRAIN, store, tag):
            retrained = baseline.copy()
            if not lossless:
                reg = RegConfig(
                    lam=config.lam,
                    refresh_every_epochs=config.refresh_every_epochs,
                    per_layer_k=ks,
                    sparsity_p=sparsity,
                )
                hook = make_hook(reg, arch, layers=list(ks))
                train(retrained, train_set, config.retrain_config(), hook, on_epoch=on_epoch)
            retrained_acc = evaluate(retrained, test_set)

        with _stage(state, PipelinePhase.SHARE, store, tag):
            cm = share(retrained, share_config, config.seed)
            cm_wr = share(baseline, share_config, config.seed)
            cr = compression_ratio(retrained, cm)

        with _stage(state, PipelinePhase.RECONSTRUCT, store, tag):
            deepkm_model = reconstruct(cm)
            wr_model = reconstruct(cm_wr)

        with _stage(state, PipelinePhase.EVALUATE, store, tag):
            deepkm_acc = evaluate(deepkm_model, test_set)
            wr_acc = evaluate(wr_model, test_set)

        with _stage(state, PipelinePhase.ENERGY, store, tag):
            shared_spec = share_weights(dense_spec, ks)
            shared_energy = total_energy(shared_spec)
            reduction = baseline_energy.weight_rep_cost / shared_energy.weight_rep_cost

        row = RateResult(
            cluster_rate=rate,
            ks=ks,
            compression_ratio=cr,
            retrained_accuracy=retrained_acc,
            deepkm_accuracy=deepkm_acc,
            wr_accuracy=wr_acc,
            delta_deepkm=deepkm_acc - baseline_acc,
            delta_wr=wr_acc - baseline_acc,
            inertia_retrained={name: layer.codebook.inertia for name, layer in cm.layers.items()},
            inertia_baseline={name: layer.codebook.inertia for name, layer in cm_wr.layers.items()},
            total_energy_mac=shared_energy.total_energy_mac,
            weight_rep_reduction=reduction,
        )
        report.rows.append(row)
        compressed[rate] = cm
        logger.info("%s CR=%.2f deepkm=%.4f wr=%.4f", tag, cr, deepkm_acc, wr_acc)

    state.complete()
    if store is not None:
        store.save_state(state)
        store.save_report(report.to_dict())
    return PipelineRun(
        report=report, baseline=baseline, compressed=compressed, baseline_energy=baseline_energy
    )
