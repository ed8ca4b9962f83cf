"""CLI output formatting.

Results go to stdout; progress lines can be silenced with ``--quiet``.
Log records go to stderr through rich.
"""

import logging
from collections.abc import Generator
from contextlib import contextmanager

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

console = Console()
log_console = Console(stderr=True)

# Brand colors
BRAND = "cyan"
SUCCESS = "green"
WARNING = "yellow"
ERROR = "red"

_quiet = False


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Route library logging through rich."""
    global _quiet
    _quiet = quiet
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=log_console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def step_start(message: str) -> None:
    """Show step starting."""
    if not _quiet:
        console.print(f"\n[{BRAND}]→[/{BRAND}] {message}")


def step_done(message: str) -> None:
    """Show step completed."""
    if not _quiet:
        console.print(f"[{SUCCESS}]✓[/{SUCCESS}] {message}")


def warn(message: str) -> None:
    """Show warning."""
    console.print(f"\n[{WARNING}]⚠[/{WARNING}]  {message}")


def error(message: str) -> None:
    """Show error."""
    # library messages may contain [brackets] that are not markup
    console.print(f"\n[{ERROR}]✗[/{ERROR}]  {escape(message)}", highlight=False)


def plain(text: str) -> None:
    """Print text verbatim (no markup, no wrapping) for diffable output."""
    console.print(text, markup=False, highlight=False, soft_wrap=True, end="")


def result(label: str, value: str) -> None:
    console.print(f"{label}: {value}", markup=False, highlight=False, soft_wrap=True)


def layer_table(title: str, rows: list[tuple[str, int, int, float]]) -> None:
    """Per-layer sharing summary: name, N, K, inertia."""
    table = Table(title=title, title_style="bold", border_style=BRAND)
    table.add_column("layer")
    table.add_column("N", justify="right")
    table.add_column("K", justify="right")
    table.add_column("inertia", justify="right")
    for name, n, k, inertia in rows:
        table.add_row(name, str(n), str(k), f"{inertia:.6g}")
    console.print(table)


def report_table(report: dict) -> None:
    """CR / accuracy / energy table of a pipeline report."""
    table = Table(
        title=(
            f"{report['arch']} on {report['dataset']}"
            f" (baseline {report['baseline_accuracy']:.4f})"
        ),
        title_style="bold",
        border_style=BRAND,
    )
    for column in ("rate", "CR", "Deep k-Means", "Δ", "WR", "Δ WR", "energy (MAC)", "w-rep ↓"):
        table.add_column(column, justify="right")
    for row in report["rows"]:
        table.add_row(
            f"{row['cluster_rate']:g}",
            f"{row['compression_ratio']:.2f}",
            f"{row['deepkm_accuracy']:.4f}",
            f"{row['delta_deepkm']:+.4f}",
            f"{row['wr_accuracy']:.4f}",
            f"{row['delta_wr']:+.4f}",
            f"{row['total_energy_mac']:.4g}",
            f"{row['weight_rep_reduction']:.2f}x",
        )
    console.print(table)


@contextmanager
def spinner(message: str) -> Generator[None, None, None]:
    """Spinner for long-running work."""
    with console.status(f"[{BRAND}]{message}[/{BRAND}]", spinner="dots"):
        yield
