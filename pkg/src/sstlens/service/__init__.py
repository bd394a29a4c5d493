"""HTTP facade over the batch pipeline."""

from .app import create_app

__all__ = ["create_app"]
