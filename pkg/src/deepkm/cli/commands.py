"""deepkm CLI commands."""

from collections.abc import Callable
from pathlib import Path
from typing import TYPE_CHECKING

import typer
from pydantic import ValidationError

from deepkm.cli import output
from deepkm.core.config import TrainConfig
from deepkm.core.exceptions import ContractViolation, DeepKMError

if TYPE_CHECKING:
    from deepkm.data.datasets import Dataset

DEFAULT_SYNTHETIC_TRAIN = 512
DEFAULT_SYNTHETIC_TEST = 256

DataDirOption = typer.Option(
    None, "--data-dir", "-d", help="Directory with the MNIST IDX files (optionally .gz).",
    exists=True, file_okay=False, dir_okay=True,
)
SyntheticOption = typer.Option(
    False, "--synthetic", help="Use the built-in 4-class 16x16 pattern dataset instead of MNIST."
)
LimitOption = typer.Option(None, "--limit", min=1, help="Use only the first N training images.")
SeedOption = typer.Option(0, "--seed", min=0, help="Random seed.")
DecayFactorOption = typer.Option(
    0.5, "--lr-decay-factor", min=0.0, max=1.0, help="Learning-rate multiplier per decay step."
)
DecayEveryOption = typer.Option(
    10, "--lr-decay-every", min=1, help="Epochs between learning-rate decay steps."
)


def _run(work: Callable[[], None]) -> None:
    """Run a command body, mapping library errors to exit codes."""
    try:
        work()
    except DeepKMError as e:
        output.error(str(e))
        raise typer.Exit(1)
    except ValidationError as e:
        output.error(f"Invalid configuration: {e}")
        raise typer.Exit(1)
    except KeyboardInterrupt:
        output.warn("Cancelled")
        raise typer.Exit(130)


def _parse_floats(text: str | None, option: str) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(
            f"expected comma-separated numbers, got {text!r}", param_hint=option
        )


def _load_datasets(
    data_dir: Path | None, synthetic: bool, limit: int | None, seed: int
) -> tuple["Dataset", "Dataset"]:
    """Load the train and test splits.

    Args:
        data_dir: Directory with the MNIST IDX files, used unless ``synthetic``.
        synthetic: Generate the 4-class pattern set instead.
        limit: Keep only the first N training images.
        seed: Seed of the synthetic generator; the test split uses seed + 1.

    Returns:
        (train, test) datasets.
    """
    from deepkm.data.datasets import load_mnist, synthetic_dataset

    if synthetic:
        n_train = limit or DEFAULT_SYNTHETIC_TRAIN
        return synthetic_dataset(n_train, seed, "train"), synthetic_dataset(
            DEFAULT_SYNTHETIC_TEST, seed + 1, "test"
        )
    if data_dir is None:
        raise typer.BadParameter("pass --data-dir or --synthetic", param_hint="--data-dir")
    with output.spinner("Loading MNIST"):
        return load_mnist(data_dir, "train", limit), load_mnist(data_dir, "test")


def _train_config(
    epochs: int,
    learning_rate: float,
    momentum: float,
    batch_size: int,
    seed: int,
    lr_decay_factor: float,
    lr_decay_every: int,
) -> TrainConfig:
    return TrainConfig(
        epochs=epochs,
        learning_rate=learning_rate,
        momentum=momentum,
        batch_size=batch_size,
        seed=seed,
        lr_decay_factor=lr_decay_factor,
        lr_decay_every=lr_decay_every,
    )


def _print_epoch(record) -> None:
    output.result(f"epoch {record.epoch}", record.model_dump_json())


def train_cmd(
    out: Path = typer.Option(..., "--out", "-o", help="Output model file (.dkmm)."),
    arch: str = typer.Option("lenet5", "--arch", "-a", help="Architecture: lenet5 or toy."),
    data_dir: Path | None = DataDirOption,
    synthetic: bool = SyntheticOption,
    limit: int | None = LimitOption,
    epochs: int = typer.Option(60, "--epochs", min=0),
    learning_rate: float = typer.Option(0.01, "--lr", min=0.0),
    momentum: float = typer.Option(0.9, "--momentum", min=0.0, max=0.999),
    batch_size: int = typer.Option(64, "--batch-size", min=1),
    lr_decay_factor: float = DecayFactorOption,
    lr_decay_every: int = DecayEveryOption,
    seed: int = SeedOption,
    log: Path | None = typer.Option(None, "--log", help="Append epoch records as JSON lines."),
) -> None:
    """Train a baseline model from scratch.

    \f
    Args:
        out: Where the trained model file is written.
        arch: Registered architecture name, built for the dataset's image shape.
        lr_decay_factor: Multiplier applied every ``lr_decay_every`` epochs.
        log: JSON-lines file that receives one record per epoch.
    """

    def work() -> None:
        from deepkm.data.modelfile import save_model
        from deepkm.nn.network import build_architecture, init_params
        from deepkm.nn.trainer import evaluate, train

        train_set, test_set = _load_datasets(data_dir, synthetic, limit, seed)
        network = build_architecture(arch, train_set.input_shape, train_set.num_classes)
        model = init_params(network, seed)
        output.step_start(f"Training {network.name} on {len(train_set)} images")
        config = _train_config(
            epochs, learning_rate, momentum, batch_size, seed, lr_decay_factor, lr_decay_every
        )
        train(model, train_set, config, on_epoch=_print_epoch, log_path=log)
        accuracy = evaluate(model, test_set)
        save_model(out, model)
        output.result("top-1", f"{accuracy:.4f}")
        output.step_done(f"Model saved to {out}")

    _run(work)


def retrain_cmd(
    model_path: Path = typer.Argument(
        ..., help="Baseline model (.dkmm).", exists=True, dir_okay=False
    ),
    out: Path = typer.Option(..., "--out", "-o", help="Output model file (.dkmm)."),
    data_dir: Path | None = DataDirOption,
    synthetic: bool = SyntheticOption,
    limit: int | None = LimitOption,
    lam: float = typer.Option(1e-4, "--lambda", help="Regularizer weight (0 disables it)."),
    refresh_epochs: int = typer.Option(
        5, "--refresh-epochs", min=1, help="Epochs between F updates."
    ),
    cluster_rate: float = typer.Option(0.25, "--cluster-rate", help="K/N for the conv layers."),
    first_layer_rate: float | None = typer.Option(None, "--first-layer-rate"),
    sparsity_p: str | None = typer.Option(
        None, "--sparsity-p", help="Comma-separated zero-cluster fraction per conv layer."
    ),
    epochs: int = typer.Option(30, "--epochs", min=0),
    learning_rate: float = typer.Option(0.01, "--lr", min=0.0),
    momentum: float = typer.Option(0.9, "--momentum", min=0.0, max=0.999),
    batch_size: int = typer.Option(64, "--batch-size", min=1),
    lr_decay_factor: float = DecayFactorOption,
    lr_decay_every: int = DecayEveryOption,
    seed: int = SeedOption,
    log: Path | None = typer.Option(None, "--log", help="Append epoch records as JSON lines."),
) -> None:
    """Retrain a model with the spectrally relaxed k-means regularizer.

    \f
    Args:
        model_path: Baseline model to start from.
        lam: Regularizer weight; 0 trains without the penalty.
        cluster_rate: K/N that fixes the K of every regularized conv layer.
        sparsity_p: Zero-cluster fraction per conv layer, in layer order.
    """
    p_values = _parse_floats(sparsity_p, "--sparsity-p")

    def work() -> None:
        from deepkm.compress.share import allocate_k
        from deepkm.core.config import RegConfig, ShareConfig
        from deepkm.data.modelfile import load_model, save_model
        from deepkm.nn.trainer import evaluate, train
        from deepkm.spectral import make_hook

        model = load_model(model_path)
        share_config = ShareConfig(
            cluster_rate=cluster_rate, first_layer_rate=first_layer_rate, sparsity_p=p_values
        )
        ks = allocate_k(model, share_config)
        names = model.conv_names
        if p_values is not None and len(p_values) != len(names):
            raise ContractViolation(
                f"--sparsity-p has {len(p_values)} values for {len(names)} conv layers"
            )
        reg = RegConfig(
            lam=lam,
            refresh_every_epochs=refresh_epochs,
            per_layer_k=ks,
            sparsity_p=dict(zip(names, p_values or [])),
        )
        train_set, test_set = _load_datasets(data_dir, synthetic, limit, seed)
        output.step_start(f"Retraining with lambda={lam:g}, K={ks}")
        config = _train_config(
            epochs, learning_rate, momentum, batch_size, seed, lr_decay_factor, lr_decay_every
        )
        hook = make_hook(reg, model.arch)
        train(model, train_set, config, hook, on_epoch=_print_epoch, log_path=log)
        accuracy = evaluate(model, test_set)
        save_model(out, model)
        output.result("top-1", f"{accuracy:.4f}")
        output.step_done(f"Model saved to {out}")

    _run(work)


def compress_cmd(
    model_path: Path = typer.Argument(
        ..., help="Model to compress (.dkmm).", exists=True, dir_okay=False
    ),
    out: Path = typer.Option(..., "--out", "-o", help="Output compressed model (.dkmc)."),
    cluster_rate: float = typer.Option(0.25, "--cluster-rate", help="K/N for the conv layers."),
    first_layer_rate: float | None = typer.Option(None, "--first-layer-rate"),
    sparsity_p: str | None = typer.Option(
        None, "--sparsity-p", help="Comma-separated zero-cluster fraction per conv layer."
    ),
    weight_bits: int = typer.Option(32, "--weight-bits", min=1, max=64),
    only_layer: str | None = typer.Option(
        None, "--only-layer", help="Compress a single conv layer."
    ),
    restarts: int = typer.Option(3, "--restarts", min=1),
    seed: int = SeedOption,
) -> None:
    """Share the conv-layer rows of a model with row-wise k-means.

    \f
    Args:
        model_path: Dense model to compress.
        out: Where the compressed model is written.
        only_layer: Share this conv layer only and leave the others dense.
        restarts: Seeded k-means restarts per layer; the best inertia wins.
    """
    p_values = _parse_floats(sparsity_p, "--sparsity-p")

    def work() -> None:
        from deepkm.compress.codec import save_compressed
        from deepkm.compress.share import compression_ratio, share
        from deepkm.core.config import ShareConfig
        from deepkm.data.modelfile import load_model

        model = load_model(model_path)
        config = ShareConfig(
            cluster_rate=cluster_rate,
            first_layer_rate=first_layer_rate,
            sparsity_p=p_values,
            weight_bits=weight_bits,
            only_layer=only_layer,
            restarts=restarts,
        )
        with output.spinner("Clustering filter rows"):
            cm = share(model, config, seed)
        save_compressed(out, cm)
        output.layer_table(
            "Shared layers",
            [
                (name, layer.n, layer.codebook.k, layer.codebook.inertia)
                for name, layer in cm.layers.items()
            ],
        )
        output.result("compression ratio", f"{compression_ratio(model, cm):.4f}")
        output.step_done(f"Compressed model saved to {out}")

    _run(work)


def eval_cmd(
    model_path: Path = typer.Argument(..., help="Model (.dkmm) or compressed model (.dkmc).",
                                      exists=True, dir_okay=False),
    data_dir: Path | None = DataDirOption,
    synthetic: bool = SyntheticOption,
    seed: int = SeedOption,
) -> None:
    """Print the top-1 accuracy of a model on the test split.

    \f
    Args:
        model_path: Dense or compressed model; the kind is read from its magic.
    """

    def work() -> None:
        from deepkm.compress.codec import detect_kind, load_compressed
        from deepkm.compress.share import reconstruct
        from deepkm.data.modelfile import load_model
        from deepkm.nn.trainer import evaluate

        if detect_kind(model_path) == "compressed":
            model = reconstruct(load_compressed(model_path))
        else:
            model = load_model(model_path)
        _, test_set = _load_datasets(data_dir, synthetic, None, seed)
        output.result("top-1", f"{evaluate(model, test_set):.4f}")

    _run(work)


def energy_cmd(
    spec_path: Path | None = typer.Option(
        None, "--spec", help="Network spec (YAML).", exists=True, dir_okay=False
    ),
    model_path: Path | None = typer.Option(
        None,
        "--model",
        help="Derive the spec from a model (.dkmm or .dkmc).",
        exists=True,
        dir_okay=False,
    ),
    b_w: int | None = typer.Option(
        None, "--b-w", min=1, max=64, help="Weight precision in bits [16]."
    ),
    b_x: int | None = typer.Option(
        None, "--b-x", min=1, max=64, help="Activation precision in bits [16]."
    ),
    fc_b_w: int | None = typer.Option(
        None, "--fc-b-w", min=1, max=64, help="Weight precision of fc layers."
    ),
    fc_b_x: int | None = typer.Option(
        None, "--fc-b-x", min=1, max=64, help="Activation precision of fc layers."
    ),
    out: Path | None = typer.Option(
        None, "--out", "-o", help="Also write the report to this file."
    ),
) -> None:
    """Print the energy report of a network spec or model.

    \f
    Args:
        spec_path: Network spec YAML; exclusive with ``model_path``.
        model_path: Model whose architecture (and K per layer) defines the spec.
        b_w: Default weight precision, overriding the spec's.
        fc_b_w: Weight precision set on every fully-connected layer.
        out: Optional copy of the printed report.
    """

    def work() -> None:
        from deepkm.compress.codec import detect_kind, load_compressed
        from deepkm.data.modelfile import load_model
        from deepkm.energy.metrics import total_energy
        from deepkm.energy.spec import (
            load_network_spec,
            network_spec_from_architecture,
            with_fc_precision,
        )

        if (spec_path is None) == (model_path is None):
            raise typer.BadParameter("pass exactly one of --spec or --model", param_hint="--spec")
        if spec_path is not None:
            spec = with_fc_precision(load_network_spec(spec_path), fc_b_w, fc_b_x)
            precisions = {k: v for k, v in (("b_w", b_w), ("b_x", b_x)) if v is not None}
            if precisions:
                spec = spec.model_copy(update=precisions)
        else:
            assert model_path is not None
            if detect_kind(model_path) == "compressed":
                cm = load_compressed(model_path)
                arch, ks = cm.arch, {name: layer.codebook.k for name, layer in cm.layers.items()}
            else:
                arch, ks = load_model(model_path).arch, {}
            spec = network_spec_from_architecture(
                arch, b_w or 16, b_x or 16, fc_b_w, fc_b_x, shared_k=ks
            )
        text = total_energy(spec).to_text()
        output.plain(text)
        if out is not None:
            out.write_text(text)

    _run(work)


def report_cmd(
    arch: str = typer.Option("lenet5", "--arch", "-a", help="Architecture: lenet5 or toy."),
    data_dir: Path | None = DataDirOption,
    synthetic: bool = SyntheticOption,
    limit: int | None = LimitOption,
    config_path: Path | None = typer.Option(
        None, "--config", "-c", help="Pipeline config (YAML).", exists=True, dir_okay=False
    ),
    cluster_rates: str | None = typer.Option(
        None,
        "--cluster-rates",
        "--cluster-rate",
        help="Comma-separated cluster rates, e.g. 0.25,0.125.",
    ),
    epochs: int | None = typer.Option(None, "--epochs", min=0, help="Baseline training epochs."),
    retrain_epochs: int | None = typer.Option(None, "--retrain-epochs", min=0),
    lam: float | None = typer.Option(None, "--lambda", help="Regularizer weight."),
    baseline_path: Path | None = typer.Option(
        None,
        "--baseline",
        help="Start from this trained model (.dkmm).",
        exists=True,
        dir_okay=False,
    ),
    out_dir: Path | None = typer.Option(
        None, "--out-dir", help="Write report.yaml and pipeline.state here."
    ),
    seed: int | None = typer.Option(None, "--seed", min=0),
) -> None:
    """Run the whole pipeline and print the CR / accuracy / energy table.

    \f
    Args:
        config_path: Pipeline YAML; the flags below override its fields.
        cluster_rates: Comma-separated rates, one report row each.
        baseline_path: Trained model that replaces baseline training.
        out_dir: Run directory for report.yaml and pipeline.state.
    """
    rates = _parse_floats(cluster_rates, "--cluster-rates")

    def work() -> None:
        from deepkm.core.config import PipelineConfig, load_pipeline_config
        from deepkm.core.state import RunStore
        from deepkm.data.modelfile import load_model
        from deepkm.nn.network import build_architecture
        from deepkm.pipeline import run_pipeline

        config = load_pipeline_config(config_path) if config_path else PipelineConfig()
        update: dict = {}
        if rates is not None:
            update["cluster_rates"] = rates
        if retrain_epochs is not None:
            update["retrain_epochs"] = retrain_epochs
        if lam is not None:
            update["lambda"] = lam
        if seed is not None:
            update["seed"] = seed
        if epochs is not None:
            update["train"] = config.train.model_copy(update={"epochs": epochs}).model_dump()
        if update:
            config = PipelineConfig.model_validate({**config.model_dump(by_alias=True), **update})

        train_set, test_set = _load_datasets(data_dir, synthetic, limit, config.seed)
        baseline = load_model(baseline_path) if baseline_path else None
        network = baseline.arch if baseline else build_architecture(
            arch, train_set.input_shape, train_set.num_classes
        )
        store = RunStore(out_dir) if out_dir else None
        output.step_start(f"Running the pipeline on {network.name} at rates {config.cluster_rates}")
        run = run_pipeline(
            train_set, test_set, network, config, baseline=baseline, store=store,
            dataset_name="synthetic" if synthetic else "mnist",
        )
        report = run.report.to_dict()
        output.report_table(report)
        for row in report["rows"]:
            output.result(
                f"rate {row['cluster_rate']:g}",
                f"CR={row['compression_ratio']:.4f} deepkm={row['deepkm_accuracy']:.4f} "
                f"delta={row['delta_deepkm']:+.4f} wr={row['wr_accuracy']:.4f} "
                f"delta_wr={row['delta_wr']:+.4f}",
            )
        if store is not None:
            output.step_done(f"Report saved to {store.report_file}")

    _run(work)
