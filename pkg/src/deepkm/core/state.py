"""Run directory persistence: pipeline state and the report."""

from pathlib import Path
from typing import Any

import yaml

from deepkm.core.exceptions import ConfigurationError
from deepkm.core.phases import PipelineState

REPORT_FILE = "report.yaml"
STATE_FILE = "pipeline.state"


class RunStore:
    """Manages the output directory of a pipeline run."""

    def __init__(self, run_dir: Path):
        """Bind the store to a run directory; nothing is created until the first save.

        Args:
            run_dir: Directory that holds ``pipeline.state`` and ``report.yaml``
        """
        self.run_dir = run_dir
        self.state_file = run_dir / STATE_FILE
        self.report_file = run_dir / REPORT_FILE

    def ensure_initialized(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def save_state(self, state: PipelineState) -> None:
        """Overwrite the state file with ``state``.

        Args:
            state: Progress record; timestamps are written as ISO strings
        """
        self.ensure_initialized()
        with open(self.state_file, "w") as f:
            yaml.safe_dump(
                state.model_dump(mode="json"), f, default_flow_style=False, sort_keys=False
            )

    def load_state(self) -> PipelineState | None:
        """Load the pipeline state if one was saved.

        Returns:
            The saved state, or None when the run has not written one yet

        Raises:
            ConfigurationError: the file is unreadable or does not validate
        """
        if not self.state_file.exists():
            return None
        try:
            with open(self.state_file) as f:
                data = yaml.safe_load(f)
            return PipelineState.model_validate(data)
        except (OSError, yaml.YAMLError, ValueError) as e:
            raise ConfigurationError(f"Failed to load pipeline state: {e}") from e

    def save_report(self, report: dict[str, Any]) -> None:
        """Write the report as YAML, keeping the row and key order.

        Args:
            report: Plain-data report, as produced by ``PipelineReport.to_dict``
        """
        self.ensure_initialized()
        with open(self.report_file, "w") as f:
            yaml.safe_dump(report, f, default_flow_style=False, sort_keys=False)

    def load_report(self) -> dict[str, Any] | None:
        """Read back a saved report.

        Returns:
            The report mapping, or None when no report was saved
        """
        if not self.report_file.exists():
            return None
        try:
            with open(self.report_file) as f:
                return yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(f"Failed to load report: {e}") from e

    def has_state(self) -> bool:
        return self.state_file.exists()
