"""Entry point for python -m deepkm."""

from deepkm.cli.main import app

if __name__ == "__main__":
    app()
