"""deepkm CLI - Main entry point."""

import typer

from deepkm import __version__
from deepkm.cli import output
from deepkm.cli.commands import (
    compress_cmd,
    energy_cmd,
    eval_cmd,
    report_cmd,
    retrain_cmd,
    train_cmd,
)

app = typer.Typer(
    name="deepkm",
    help="Row-wise k-means weight sharing for CNNs with spectrally relaxed retraining.",
    no_args_is_help=True,
    rich_markup_mode="rich",
)


def _show_version(value: bool) -> None:
    if value:
        output.result("deepkm version", __version__)
        raise typer.Exit()


@app.callback()
def main(
    version: bool | None = typer.Option(
        None,
        "--version",
        "-V",
        callback=_show_version,
        is_eager=True,
        help="Show version and exit.",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug records to stderr."),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Print results only."),
) -> None:
    """deepkm - compress CNN conv layers by clustering filter rows."""
    output.setup_logging(verbose=verbose, quiet=quiet)


app.command(name="train")(train_cmd)
app.command(name="retrain")(retrain_cmd)
app.command(name="compress")(compress_cmd)
app.command(name="eval")(eval_cmd)
app.command(name="energy")(energy_cmd)
app.command(name="report")(report_cmd)
