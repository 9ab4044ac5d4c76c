"""HTTP service wrapping the simulator: submit an experiment config, get
back the metrics stream and registry summary."""

from .app import create_app

__all__ = ["create_app"]
