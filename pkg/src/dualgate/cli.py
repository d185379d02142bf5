"""Console entry point: `dualgate run ...` / `dualgate sweep ...`."""

from .bench import main

__all__ = ["main"]
