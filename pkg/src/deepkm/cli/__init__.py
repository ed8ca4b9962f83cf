"""CLI module for deepkm."""

from deepkm.cli.main import app

__all__ = ["app"]
